"""Model-side adapters for the promptforge engine.

Two command-line tools fulfill the engine's file contracts from the model
ecosystem side:

* ``promptforge-extract``: dump a vision encoder's patch features for one
  image as an FPT tensor plus a grid-metadata sidecar.
* ``promptforge-segment``: run a promptable segmenter on a prompt-scheme
  JSON and write the resulting binary PGM mask.

Both ship weight-free fallback models (``patchstats`` features, a
``threshold`` proposal segmenter) so the plumbing runs anywhere; heavier
backends (DINOv2 features, SAM segmentation) activate when their weights
and runtimes are present.
"""

__version__ = "0.1.0"

"""Command-line surface: prompt generation, segmentation, evaluation, sweeps.

Exit codes are a stable scripting contract: 0 success, 1 runtime failure,
2 usage error. All subcommands are non-interactive; on failure paths no
output files are produced beyond logs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import evaluation, pipeline, segmenter, tensor_io
from .evaluation import SyntheticCase
from .pipeline import ConfigError, PipelineConfig
from .spatial import PromptClass

log = logging.getLogger(__name__)

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    """Bad invocation that argparse could not catch."""


def _setup_logging():
    name = os.environ.get("PROMPTFORGE_LOG", "error").lower()
    if name not in _LOG_LEVELS:
        print(f"warning: unknown PROMPTFORGE_LOG={name!r}, using error", file=sys.stderr)
        name = "error"
    logging.basicConfig(level=_LOG_LEVELS[name], format="%(levelname)s %(name)s: %(message)s")


def _load_pipeline_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return pipeline.load_config(path)


def _resolve_segmenter(spec: str):
    if spec == "baseline":
        return "baseline"
    if spec.startswith("adapter:"):
        return segmenter.load_adapter_file(spec[len("adapter:"):])
    raise UsageError(
        f"--segmenter must be 'baseline' or 'adapter:<cmdfile>', got {spec!r}"
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_prompt(args) -> int:
    config = _load_pipeline_config(args.config)
    violations = pipeline.validate_config(config)
    if violations:
        raise ConfigError("; ".join(violations))
    ref = tensor_io.load_feature_map(args.ref_features)
    ref_mask = tensor_io.load_mask(args.ref_mask)
    target = tensor_io.load_feature_map(args.target_features)
    scheme, trace = pipeline.run_pipeline(
        ref,
        ref_mask,
        target,
        target.grid.image_width,
        target.grid.image_height,
        config,
    )
    tensor_io.save_prompt_scheme(scheme, args.out)
    trace_path = args.trace or args.out + ".trace.json"
    with open(trace_path, "wb") as fh:
        fh.write(trace.to_json_bytes())
    log.info("wrote %s (%d points) and %s", args.out, len(scheme.points), trace_path)
    return 0


def cmd_segment(args) -> int:
    scheme = tensor_io.load_prompt_scheme(args.scheme)
    seg = _resolve_segmenter(args.segmenter)
    if seg == "baseline":
        mask = segmenter.baseline_segment(scheme)
    else:
        if not args.image:
            raise UsageError("--image is required with an adapter segmenter")
        mask = segmenter.external_segment(seg, args.image, scheme)
    tensor_io.save_mask(mask, args.out)
    return 0


def cmd_eval(args) -> int:
    pred = tensor_io.load_mask(args.pred)
    truth = tensor_io.load_mask(args.truth)
    print(f"{evaluation.dice(pred, truth):.4f}")
    return 0


def _synth_cases(spec_path: str) -> list[SyntheticCase]:
    with open(spec_path, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    if not isinstance(spec, dict):
        raise ValueError(f"{spec_path}: synth spec must be a JSON object")
    count = spec.pop("cases", None)
    if count is None or not isinstance(count, int):
        raise ValueError(f"{spec_path}: spec needs an integer 'cases' count")
    if count < 1:
        raise UsageError(f"{spec_path}: at least one case required, got {count}")
    base_seed = spec.pop("seed", 0)
    valid = set(SyntheticCase.__dataclass_fields__) - {"seed"}
    unknown = set(spec) - valid
    if unknown:
        raise ValueError(f"{spec_path}: unknown keys {sorted(unknown)}")
    return [SyntheticCase(seed=base_seed + i, **spec) for i in range(count)]


def cmd_synth(args) -> int:
    cases = _synth_cases(args.spec)
    manifest = evaluation.write_synthetic_dataset(cases, args.out_dir)
    print(manifest)
    return 0


def _parse_grid_file(path: str) -> list[tuple[str, PipelineConfig]]:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    blocks: list[list[str]] = [[]]
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            if blocks[-1]:
                blocks.append([])
            continue
        if line.startswith("#"):
            continue
        blocks[-1].append(line)
    entries = []
    for i, block in enumerate(b for b in blocks if b):
        pairs: dict[str, str] = {}
        for line in block:
            if "=" not in line:
                raise ConfigError(f"{path}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in pairs:
                raise ConfigError(f"{path}: duplicate key {key!r} in block {i}")
            pairs[key] = value
        config_id = pairs.pop("id", f"cfg{i:02d}")
        entries.append((config_id, pipeline.config_from_pairs(pairs)))
    if not entries:
        raise ConfigError(f"{path}: no configurations found")
    return entries


def cmd_sweep(args) -> int:
    grid = _parse_grid_file(args.grid)
    if args.manifest:
        cases = evaluation.load_manifest(args.manifest)
    else:
        cases = evaluation.materialize_cases(_synth_cases(args.synth))
    seg = _resolve_segmenter(args.segmenter)
    records = evaluation.sweep(grid, cases, seg, jobs=args.jobs)
    tag = "baseline" if seg == "baseline" else "adapter"
    csv_text = evaluation.records_to_csv(records, segmenter_tag=tag)
    successes = sum(len(r.dsc) for r in records)
    if successes == 0:
        raise RuntimeError("all sweep cases failed; no CSV written")
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text)
    failures = sum(len(r.failures) for r in records)
    if failures:
        log.info("sweep finished with %d per-case failures (see notes column)", failures)
    return 0


_OVERLAY_INTENSITY = {
    PromptClass.POSITIVE: 255,
    PromptClass.NEGATIVE: 0,
    PromptClass.HARD_NEGATIVE: 128,
}


def _stamp(canvas: np.ndarray, x: int, y: int, value: int, radius: int = 2):
    h, w = canvas.shape
    y0, y1 = max(0, y - radius), min(h, y + radius + 1)
    x0, x1 = max(0, x - radius), min(w, x + radius + 1)
    canvas[y0:y1, x0:x1] = value


def cmd_trace(args) -> int:
    with open(args.trace, "r", encoding="utf-8") as fh:
        records = json.load(fh)
    if args.image:
        raw = tensor_io.load_image_gray(args.image)
        # Compress the tonal range so stamps at 0/128/255 stay visible.
        base = (16 + raw.astype(np.uint16) * 200 // 255).astype(np.uint8)
    elif args.width and args.height:
        base = np.full((args.height, args.width), 96, dtype=np.uint8)
    else:
        raise UsageError("--image or both --width/--height required for overlays")
    os.makedirs(args.out_dir, exist_ok=True)
    classes = {c.value: c for c in PromptClass}
    for i, rec in enumerate(records):
        canvas = base.copy()
        for x, y, cls_name in rec["points_after"]:
            cls = classes[cls_name]
            _stamp(canvas, x, y, _OVERLAY_INTENSITY[cls])
        out = os.path.join(args.out_dir, f"stage{i}_{rec['stage']}.pgm")
        tensor_io.save_image_gray(canvas, out)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptforge",
        description="One-shot reference guided point-prompt engineering",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prompt", help="generate a prompt scheme for a target image")
    p.add_argument("--ref-features", required=True)
    p.add_argument("--ref-mask", required=True)
    p.add_argument("--target-features", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--trace")
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("segment", help="turn a prompt scheme into a mask")
    p.add_argument("--scheme", required=True)
    p.add_argument("--segmenter", default="baseline")
    p.add_argument("--image")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="Dice score of a predicted mask vs ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run a config grid over a case set, emit CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest")
    src.add_argument("--synth")
    p.add_argument("--grid", required=True)
    p.add_argument("--segmenter", default="baseline")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="write a synthetic dataset plus manifest")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("trace", help="render per-stage prompt overlays from a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--image")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_trace)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        log.debug("failure detail", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())

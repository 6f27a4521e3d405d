"""Command-line pipeline driver.

Subcommands:
    prune    trace containers -> retention masks, scores, quotas, cost report
    analyze  trace corpus -> layer-similarity CSV, stage boundary, IoU CSV
    synth    spec JSON -> deterministic synthetic trace containers

Human-readable notices go to stderr; machine artifacts go to the --out
directory, or to stdout as a single JSON document when --out is "-".
Exit codes: 0 success, 1 input/validation error, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import analysis, budgeting, efficiency, scoring, selection, synth, trace
from .errors import EarlydropError
from .tiling import plan_tiling

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INTERNAL = 2

TRACE_SUFFIX = ".trc"


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


@dataclass
class PruneConfig:
    ratio: float
    alpha: float = scoring.DEFAULT_ALPHA
    layers_low: tuple[int, ...] = selection.DEFAULT_LOW_LAYERS
    layers_high: tuple[int, ...] = selection.DEFAULT_HIGH_LAYERS
    profile: str = "vicuna-7b"
    strict_floor: bool = False
    text_tokens: int = 0


def _parse_layers(text: str) -> tuple[int, ...]:
    """Accept "a..b" ranges and comma lists, e.g. "6..10" or "22" or "13,22"."""
    text = text.strip()
    if ".." in text:
        first, last = text.split("..", 1)
        return tuple(range(int(first), int(last) + 1))
    return tuple(int(p) for p in text.split(",") if p)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _merge_prune_config(args: argparse.Namespace) -> PruneConfig:
    # Precedence: explicit flags > config file > defaults.
    file_cfg = _load_config_file(args.config)
    cfg = PruneConfig(ratio=file_cfg.get("ratio", 1.0))
    if "alpha" in file_cfg:
        cfg.alpha = float(file_cfg["alpha"])
    if "layers_low" in file_cfg:
        cfg.layers_low = tuple(int(x) for x in file_cfg["layers_low"])
    if "layers_high" in file_cfg:
        cfg.layers_high = tuple(int(x) for x in file_cfg["layers_high"])
    if "profile" in file_cfg:
        cfg.profile = str(file_cfg["profile"])
    if "strict_floor" in file_cfg:
        cfg.strict_floor = bool(file_cfg["strict_floor"])
    if "text_tokens" in file_cfg:
        cfg.text_tokens = int(file_cfg["text_tokens"])

    if args.ratio is not None:
        cfg.ratio = args.ratio
    if args.alpha is not None:
        cfg.alpha = args.alpha
    if args.layers_low is not None:
        cfg.layers_low = _parse_layers(args.layers_low)
    if args.layers_high is not None:
        cfg.layers_high = _parse_layers(args.layers_high)
    if args.profile is not None:
        cfg.profile = args.profile
    if args.strict_floor:
        cfg.strict_floor = True
    if args.text_tokens is not None:
        cfg.text_tokens = args.text_tokens
    if args.ratio is None and "ratio" not in file_cfg:
        raise EarlydropError("--ratio is required (flag or config file)")
    return cfg


def _prune_one(path: Path, cfg: PruneConfig) -> dict:
    t = trace.read_trace(path.read_bytes())
    scores = scoring.score_tiles(t, cfg.alpha)
    if scores.fallback:
        _log(
            f"warning: {path.name}: no text path in trace; "
            f"alpha {cfg.alpha} fell back to pure visual saliency"
        )
    alloc = budgeting.allocate(
        t.K, t.N, cfg.ratio, scores.s, strict_floor=cfg.strict_floor
    )
    masks = selection.select_all(
        t,
        alloc,
        selection.LayerSet(cfg.layers_low),
        selection.LayerSet(cfg.layers_high),
    )
    profile = efficiency.resolve_profile(cfg.profile)
    report = efficiency.pruned_flops(alloc, cfg.text_tokens, profile)
    return {
        "image_id": t.image_id,
        "source": str(path),
        "scores": scores.to_dict(),
        "allocation": alloc.to_dict(),
        "effective_ratio": budgeting.effective_ratio(alloc),
        "masks": [m.to_dict() for m in masks],
        "efficiency": report.to_dict(),
        "_bitmaps": [m.to_bitmap() for m in masks],
    }


def _write_prune_artifacts(out_dir: Path, result: dict) -> None:
    stem = result["image_id"]
    bitmaps = result.pop("_bitmaps")
    (out_dir / f"{stem}.report.json").write_text(
        json.dumps(result, indent=2, sort_keys=True)
    )
    # Flat bitmap file: regions in report order (tiles then thumbnail), each
    # ceil(N/8) bytes, little-bit-endian within a byte.
    (out_dir / f"{stem}.masks.bin").write_bytes(b"".join(bitmaps))


def cmd_prune(args: argparse.Namespace) -> int:
    cfg = _merge_prune_config(args)
    paths = [Path(p) for p in args.traces]
    out_to_stdout = args.out == "-"
    out_dir = None
    if not out_to_stdout:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)

    def work(path: Path):
        try:
            return _prune_one(path, cfg)
        except (EarlydropError, OSError) as exc:
            if args.fail_fast:
                raise
            return {"source": str(path), "error": str(exc)}

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(work, paths))
    else:
        results = [work(p) for p in paths]

    failures = [r for r in results if "error" in r]
    for f in failures:
        _log(f"error: {f['source']}: {f['error']}")
    ok = [r for r in results if "error" not in r]

    summary = {
        "traces": len(paths),
        "failed": len(failures),
        "ratio": cfg.ratio,
        "alpha": cfg.alpha,
        "fallbacks": sum(1 for r in ok if r["scores"]["fallback"]),
        "total_visual_tokens": sum(r["allocation"]["N_total"] for r in ok),
    }
    if out_to_stdout:
        for r in ok:
            r.pop("_bitmaps")
        json.dump({"results": ok, "summary": summary}, sys.stdout, sort_keys=True)
        sys.stdout.write("\n")
    else:
        for r in ok:
            _write_prune_artifacts(out_dir, r)
        (out_dir / "summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True)
        )
    _log(
        f"pruned {len(ok)}/{len(paths)} trace(s) at R={cfg.ratio}"
        + (f", {summary['fallbacks']} visual-only fallback(s)" if summary["fallbacks"] else "")
    )
    return EXIT_INPUT if failures else EXIT_OK


def _corpus_paths(corpus: str) -> list[Path]:
    root = Path(corpus)
    if root.is_dir():
        return sorted(root.glob(f"*{TRACE_SUFFIX}"))
    return [root]


def cmd_analyze(args: argparse.Namespace) -> int:
    paths = _corpus_paths(args.corpus)
    if not paths:
        _log(f"error: no {TRACE_SUFFIX} traces under {args.corpus}")
        return EXIT_INPUT
    traces = []
    for p in paths:
        try:
            traces.append(trace.read_trace(p.read_bytes()))
        except (EarlydropError, OSError) as exc:
            _log(f"error: {p}: {exc}")
            return EXIT_INPUT
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    matrix = analysis.layer_similarity(traces, region=args.region)
    boundary = analysis.detect_stages(matrix)
    analysis.write_similarity_csv(matrix, out_dir / "layer_similarity.csv")
    (out_dir / "stages.json").write_text(
        json.dumps(
            {
                "num_layers": matrix.num_layers,
                "stage_boundary": boundary,
                "corpus_size": len(traces),
            },
            indent=2,
            sort_keys=True,
        )
    )
    _log(f"analyzed {len(traces)} trace(s); stage boundary at layer {boundary}")

    if args.masks is None:
        _log("no mask directory given; skipping saliency IoU")
        return EXIT_OK
    mask_dir = Path(args.masks)
    pairs = []
    for t in traces:
        mask_path = mask_dir / f"{t.image_id}.pgm"
        if mask_path.exists():
            pairs.append((t, analysis.load_pgm_mask(mask_path, t.image_id)))
    if not pairs:
        _log("no matching .pgm masks found; skipping saliency IoU")
        return EXIT_OK
    depth = traces[0].num_layers
    rows = []
    for layer in range(1, depth + 1):
        vals = []
        for t, mask in pairs:
            plan = plan_tiling(mask.width, mask.height)
            vals.append(analysis.saliency_iou(t, plan, mask, layer, k=args.top_k))
        rows.append((layer, sum(vals) / len(vals)))
    analysis.write_iou_csv(rows, out_dir / "saliency_iou.csv")
    best = max(rows, key=lambda r: r[1])
    _log(
        f"saliency IoU over {len(pairs)} masked trace(s); "
        f"peak {best[1]:.3f} at layer {best[0]}"
    )
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    spec = synth.SynthSpec.from_json_file(args.spec)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        one = synth.SynthSpec.from_dict({**spec.to_dict(), "seed": spec.seed + i})
        t = synth.generate(one)
        data = trace.write_trace(t)
        (out_dir / f"{t.image_id}{TRACE_SUFFIX}").write_bytes(data)
    _log(f"wrote {args.count} synthetic trace(s) to {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="earlydrop",
        description="Visual-token budgeting, selection, and cost analysis "
        "over encoder trace containers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prune", help="allocate budgets and select tokens")
    p.add_argument("traces", nargs="+", help="trace container files")
    p.add_argument("--ratio", type=float, default=None, help="retention ratio in (0,1]")
    p.add_argument("--alpha", type=float, default=None, help="visual/text mix in [0,1]")
    p.add_argument("--layers-low", default=None, help='tile layer set, e.g. "6..10"')
    p.add_argument("--layers-high", default=None, help='thumbnail layer set, e.g. "22"')
    p.add_argument("--profile", default=None, help="LLM profile name or JSON path")
    p.add_argument("--strict-floor", action="store_true", help="skip remainder redistribution")
    p.add_argument("--text-tokens", type=int, default=None, help="text token count for the cost report")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--out", default="-", help='output directory, or "-" for stdout')
    p.add_argument("--fail-fast", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("analyze", help="layer similarity, stages, saliency IoU")
    p.add_argument("corpus", help="directory of traces, or a single trace")
    p.add_argument("--region", choices=["thumbnail", "tiles", "all"], default="thumbnail")
    p.add_argument("--masks", default=None, help="directory of <image_id>.pgm masks")
    p.add_argument("--top-k", type=int, default=50)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="generate deterministic synthetic traces")
    p.add_argument("spec", help="SynthSpec JSON file")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EarlydropError as exc:
        _log(f"error: {exc}")
        return EXIT_INPUT
    except (OSError, json.JSONDecodeError, ValueError, KeyError) as exc:
        _log(f"error: {exc}")
        return EXIT_INPUT
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

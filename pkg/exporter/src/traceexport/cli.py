"""Exporter command line.

    traceexport export --image photo.jpg --text "how many chairs?" \
        --model builtin:vit-slim-336 --out photo.trc
    traceexport validate --width 900 --height 300
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ExportError
from .export import ExportJob, export_trace, validate_against_planner


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="traceexport")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="export one trace container")
    p.add_argument("--image", required=True)
    p.add_argument("--text", default="", help="instruction text")
    p.add_argument("--model", default="builtin:vit-slim-336",
                   help="HF name/path or builtin:<name>")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0,
                   help="init seed for builtin encoders")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("validate", help="compare planner vs reference tiling")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def cmd_export(args: argparse.Namespace) -> int:
    job = ExportJob(
        image=Path(args.image),
        instruction=args.text,
        encoder=args.model,
        output=Path(args.out),
        seed=args.seed,
    )
    path = export_trace(job)
    print(f"wrote {path}", file=sys.stderr)
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    report = validate_against_planner(args.width, args.height)
    json.dump(report, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ExportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

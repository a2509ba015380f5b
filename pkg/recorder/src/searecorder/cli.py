"""Record per-step pipeline features into a SEATRAJ file.

Example:
    searecorder record --model toy-dit-16 --prompt "a cat" --seed 7 \
        --out run.seatraj --capture input,output
"""

from __future__ import annotations

import argparse
import sys

from .capture import CapturePlan, CapturePointError, ReshapeError, record_run
from .pipeline import load_pipeline


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="searecorder", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    p = sub.add_parser("record", help="run a pipeline once and record features")
    p.add_argument("--model", required=True, help="pipeline identifier")
    p.add_argument("--prompt", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="SEATRAJ output path")
    p.add_argument("--capture", default="input",
                   help="comma list of capture points: input, output")
    p.add_argument("--steps", default=None,
                   help="comma list of timesteps to record (default: all)")
    p.add_argument("--full-sequence", action="store_true",
                   help="record the whole token sequence instead of the image slice")
    p.set_defaults(func=cmd_record)
    return parser


def cmd_record(args) -> int:
    capture = {part.strip() for part in args.capture.split(",") if part.strip()}
    unknown = capture - {"input", "output"}
    if unknown:
        print(f"usage error: unknown capture point(s) {sorted(unknown)}", file=sys.stderr)
        return 1
    pipeline = load_pipeline(args.model)
    plan = CapturePlan(
        model_id=args.model,
        first_block_input="input" in capture,
        last_block_output="output" in capture,
        grid=(pipeline.channels, 1, pipeline.height, pipeline.width),
        patch=pipeline.patch,
        image_token_slice=not args.full_sequence,
        steps_to_record=None if args.steps is None else tuple(int(s) for s in args.steps.split(",")),
    )
    log = record_run(plan, args.prompt, args.seed, args.out, pipeline=pipeline)
    print(f"recorded {len(log['recorded_steps'])} steps to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        return args.func(args)
    except KeyError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (CapturePointError, ReshapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

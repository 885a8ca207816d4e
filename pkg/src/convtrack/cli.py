"""Command-line entry point: ``convtrack {track,eval,synth,selftest}``.

Exit status is 0 on success, 1 when the command fails at runtime and 2 on
usage errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import dataio, evalkit, selftest
from .imagecore import BoundingBox
from .synth import MotionSpec, synth_sequence
from .tracker import VARIANTS, TrackerConfig, init, step

log = logging.getLogger("convtrack")


class UsageError(Exception):
    pass


def _parse_box(text: str) -> BoundingBox:
    try:
        boxes = dataio.parse_groundtruth(text, "--init")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    if len(boxes) != 1:
        raise argparse.ArgumentTypeError(f"expected one 'x,y,w,h' box, got {text!r}")
    return boxes[0]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="convtrack", description="Convolutional-feature particle-filter tracker.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="track a target through an image sequence")
    p.add_argument("--seq", required=True, type=Path, help="sequence directory with img/")
    start = p.add_mutually_exclusive_group(required=True)
    start.add_argument("--init", type=_parse_box, metavar="X,Y,W,H", help="first-frame box")
    start.add_argument("--from-gt", action="store_true", help="take the first ground-truth box")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--config", type=Path, help="flat 'key = value' tracker config")
    p.add_argument("--variant", choices=VARIANTS)

    p = sub.add_parser("eval", help="score a results file against ground truth")
    p.add_argument("--results", required=True, type=Path)
    p.add_argument("--gt", required=True, type=Path)
    p.add_argument("--out-prefix", type=str, help="write <prefix>_success.csv and <prefix>_precision.csv")

    p = sub.add_parser("synth", help="render a synthetic sequence")
    p.add_argument("--spec", type=Path, help="JSON motion description (defaults if omitted)")
    p.add_argument("--out", required=True, type=Path)

    sub.add_parser("selftest", help="run the built-in invariant checks")
    return parser


def cmd_track(args) -> int:
    cfg = dataio.load_config(args.config) if args.config else TrackerConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.variant is not None:
        overrides["variant"] = args.variant
    cfg = replace(cfg, **overrides)

    seq = dataio.load_sequence(args.seq)
    if args.from_gt:
        if seq.gt is None:
            raise UsageError(f"--from-gt given but {args.seq} has no {dataio.GT_NAME}")
        box = seq.gt[0]
    else:
        box = args.init

    t0 = time.perf_counter()
    state = init(seq.frame(0), box, cfg)
    boxes, times = [box], [time.perf_counter() - t0]
    for i in range(1, len(seq)):
        t0 = time.perf_counter()
        state, out = step(state, seq.frame(i))
        boxes.append(out)
        times.append(time.perf_counter() - t0)
        log.info("frame %d: %s", i, out.as_tuple())
    dataio.write_results(dataio.RunRecord(boxes=boxes, config=cfg, frame_times=times), args.out)
    log.info("mean %.1f ms/frame", 1000 * sum(times) / len(times))
    return 0


def cmd_eval(args) -> int:
    rec = dataio.read_results(args.results)
    gt = dataio.read_groundtruth(args.gt)
    success, precision = evalkit.evaluate(rec.boxes, gt)
    print(f"AUC: {success.summary:.4f}")
    print(f"precision@20: {precision.summary:.4f}")
    if args.out_prefix:
        evalkit.write_curve_csv(success, f"{args.out_prefix}_success.csv")
        evalkit.write_curve_csv(precision, f"{args.out_prefix}_precision.csv")
    return 0


def cmd_synth(args) -> int:
    spec = MotionSpec.from_json(args.spec) if args.spec else MotionSpec()
    dataio.write_sequence(synth_sequence(spec, name=args.out.name), args.out)
    return 0


def cmd_selftest(args) -> int:
    return 0 if selftest.run() else 1


COMMANDS = {"track": cmd_track, "eval": cmd_eval, "synth": cmd_synth, "selftest": cmd_selftest}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage problems by exiting with 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"convtrack: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"convtrack {args.command}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()

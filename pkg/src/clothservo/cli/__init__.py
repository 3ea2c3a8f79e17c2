"""Command line front end.

Four subcommands cover the full loop: ``record`` rolls out a scripted
training trajectory and saves frames, ``train`` turns recordings into a
feedback dictionary, ``servo`` runs a closed-loop task against a goal, and
``eval`` reproduces the benchmark studies with tables and figures.

Exit codes: 0 on success, 1 when a task ran but did not succeed (the servo
failed to converge, or the simulation diverged), 2 for configuration and
usage problems.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..errors import ClothServoError, SimulationDivergedError
from . import evaluate, record, servo_cmd, train
from .config import load_config

EXIT_OK = 0
EXIT_TASK_FAILED = 1
EXIT_BAD_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clothservo",
        description="closed-loop visual servoing for simulated cloth",
    )
    parser.add_argument("--seed", type=int, default=0, help="master seed for the run")
    parser.add_argument("--config", type=Path, default=None, help="INI file overriding defaults")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p_rec = sub.add_parser("record", help="roll out a training trajectory and save frames")
    p_rec.add_argument("--frames", type=int, default=None, help="number of frames to record")
    p_rec.add_argument("--style", default=None, choices=("flatten", "full"), help="trajectory style")

    p_train = sub.add_parser("train", help="build a feedback dictionary from recordings")
    p_train.add_argument(
        "--recording", action="append", required=True, metavar="DIR",
        help="recording directory (repeat to pool several)",
    )
    p_train.add_argument("--n-dic", type=int, default=None, help="dictionary size")
    p_train.add_argument("--pairs", type=int, default=None, help="sampled frame pairs")

    p_servo = sub.add_parser("servo", help="run a closed-loop task")
    p_servo.add_argument(
        "--task", default="flatten",
        choices=("flatten", "placement", "fold", "perturbed-hold"),
        help="which scene setup to run",
    )
    p_servo.add_argument("--dictionary", required=True, metavar="FILE", help="trained dictionary")
    p_servo.add_argument(
        "--goal-image", action="append", default=None, metavar="PNG",
        help="override the task goal with an image (repeat for staged goals)",
    )
    p_servo.add_argument("--max-steps", type=int, default=None, help="step budget")

    p_eval = sub.add_parser("eval", help="run the benchmark studies")
    p_eval.add_argument(
        "--study", action="append", default=None,
        choices=("size-alpha", "subjects", "features", "flatten", "hold", "all"),
        help="which study to run (repeatable, default all)",
    )
    return parser


_DISPATCH = {
    "record": record.run,
    "train": train.run,
    "servo": servo_cmd.run,
    "eval": evaluate.run,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ClothServoError as err:
        print(f"clothservo: {err}", file=sys.stderr)
        return EXIT_BAD_USAGE
    except OSError as err:
        print(f"clothservo: cannot read config: {err}", file=sys.stderr)
        return EXIT_BAD_USAGE

    try:
        return _DISPATCH[args.command](args, cfg)
    except SimulationDivergedError as err:
        print(f"clothservo: simulation diverged: {err}", file=sys.stderr)
        return EXIT_TASK_FAILED
    except ClothServoError as err:
        print(f"clothservo: {err}", file=sys.stderr)
        return EXIT_BAD_USAGE


if __name__ == "__main__":
    sys.exit(main())

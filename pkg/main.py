# main.py
"""
ECGA text classifier command line.

    python main.py train    [--preset P] [--config F] [--set k=v]... [--seed N] [--out DIR]
    python main.py eval     --checkpoint F --data F [--out DIR]
    python main.py predict  --checkpoint F < lines.txt
    python main.py gradcheck [--preset tiny] [--seed N] [--out DIR]

Exit codes: 0 ok, 1 check failed, 2 usage/config/data error, 3 numeric failure.
"""
import argparse
import logging
import os
import sys
from typing import List, Optional

from commands.evaluate import cmd_eval
from commands.gradcheck import cmd_gradcheck
from commands.predict import cmd_predict
from commands.train import cmd_train
from services.errors import EcgaError
from services.run_config import resolve_config

APP_NAME = "ecga"
APP_VERSION = "1.0.0"

log = logging.getLogger("ecga.main")


def _setup_logging(verbose: bool) -> None:
    level = "DEBUG" if verbose else os.getenv("ECGA_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="[%(name)s] %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _config_flags(p: argparse.ArgumentParser, default_preset: Optional[str] = None) -> None:
    p.add_argument("--preset", default=default_preset, help="dbpedia | argmine_task_a | argmine_task_c | churn | custom | tiny")
    p.add_argument("--config", help="flat 'key = value' config file (JSON literal values)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config value; repeatable")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=APP_NAME, description="Ensemble of CNN-BiGRU-attention text classifiers")
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {APP_VERSION}")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    _config_flags(sub.add_parser("train", help="train and write checkpoint + metrics"))

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a dataset file")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--out")

    pr = sub.add_parser("predict", help="classify stdin lines")
    pr.add_argument("--checkpoint", required=True)

    _config_flags(sub.add_parser("gradcheck", help="finite-difference check of every parameter tensor"), "tiny")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        if args.command == "train":
            cmd_train(resolve_config(args.preset, args.config, args.overrides, args.seed, args.out))
        elif args.command == "eval":
            cmd_eval(args.checkpoint, args.data, args.out)
        elif args.command == "predict":
            cmd_predict(args.checkpoint, sys.stdin, sys.stdout)
        elif args.command == "gradcheck":
            cmd_gradcheck(resolve_config(args.preset, args.config, args.overrides, args.seed, args.out), sys.stdout)
    except EcgaError as e:
        log.error("%s", e.detail)
        return e.exit_code
    except OSError as e:
        log.error("%s: %s", getattr(e, "filename", None) or "io", e.strerror or e)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

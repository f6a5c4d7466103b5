"""Command-line front end.

Subcommands: synth | pretrain | extract | train-eval | report. Science
parameters come from ``--config`` (a key = value file) plus ``--key value``
overrides; paths come from dedicated options and all outputs land under
``--out``. Exit codes: 0 success, 2 config/parameter, 3 training divergence,
4 data/shape, 5 I/O.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import load_config
from .errors import (
    ConfigError,
    ContractError,
    DivergenceError,
    MetricError,
    ParameterError,
    PipelineError,
)
from .pipeline import (
    run_extract,
    run_pretrain,
    run_synth,
    run_train_eval,
    write_random_init_checkpoint,
)
from .report import run_report

EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_DATA = 4
EXIT_IO = 5


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptseg",
        description="Prompt-based contrastive pre-training and gesture recognition pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, seed_required: bool = False):
        p.add_argument("--config", type=Path, default=None, help="key = value config file")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, required=seed_required, default=None)

    p = sub.add_parser("synth", help="generate the synthetic corpus")
    common(p)

    p = sub.add_parser("pretrain", help="contrastively pre-train the encoders")
    common(p, seed_required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument(
        "--random-init",
        action="store_true",
        help="skip training and write an untrained checkpoint (no-pre-training baseline)",
    )

    p = sub.add_parser("extract", help="write frozen frame-wise features per video")
    common(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)

    p = sub.add_parser("train-eval", help="train the recognizer per fold and score it")
    common(p, seed_required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--task", default="synthetic", help="task label for report rows")

    p = sub.add_parser("report", help="aggregate run CSVs and render figures")
    p.add_argument("--runs", type=Path, nargs="+", required=True, help="train-eval output dirs")
    p.add_argument("--out", type=Path, required=True)
    return parser


def _collect_overrides(extras: list[str]) -> dict[str, str]:
    overrides: dict[str, str] = {}
    i = 0
    while i < len(extras):
        token = extras[i]
        if not token.startswith("--") or i + 1 >= len(extras):
            raise ConfigError(f"cannot parse override {token!r}; expected --key value pairs")
        overrides[token[2:].replace("-", "_")] = extras[i + 1]
        i += 2
    return overrides


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args, extras = parser.parse_known_args(argv)
    try:
        if args.command == "report":
            if extras:
                raise ConfigError(f"unexpected arguments: {extras}")
            combined = run_report(args.runs, args.out)
            print(f"report written to {combined}")
            return 0

        overrides = _collect_overrides(extras)
        if args.seed is not None:
            overrides["seed"] = str(args.seed)
        config = load_config(args.config, overrides)

        if args.command == "synth":
            out = run_synth(config, args.out)
            print(f"synthetic corpus written to {out}")
        elif args.command == "pretrain":
            if args.random_init:
                path = write_random_init_checkpoint(config, args.corpus, args.out)
            else:
                path = run_pretrain(config, args.corpus, args.out)
            print(f"checkpoint written to {path}")
        elif args.command == "extract":
            out = run_extract(config, args.corpus, args.checkpoint, args.out)
            print(f"features written to {out}")
        elif args.command == "train-eval":
            scores = run_train_eval(config, args.corpus, args.features, args.out, task=args.task)
            print(f"scores written to {scores}")
        return 0
    except (ConfigError, ParameterError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (OSError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (PipelineError, MetricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

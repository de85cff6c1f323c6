"""Command line: ``kqiest {generate,prepare,train,evaluate,all} [flags]``.

Exit codes: 0 success, 1 usage error, 2 schema or validation error,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .features import FeatureError
from .pipeline import (ConfigError, RunConfig, cmd_all, cmd_evaluate, cmd_generate, cmd_prepare,
                       cmd_train)
from .preprocess import PreprocessError
from .regressors import SpecError
from .schema import LeakageError, SchemaError

EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 1, 2, 3

COMMANDS = {
    "generate": cmd_generate,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "all": cmd_all,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(text: str) -> list[str]:
    return [t for t in (s.strip() for s in text.split(",")) if t]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kqiest", description="Estimate video KQIs from network KPIs.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON file with RunConfig keys; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (default: run)")
    p.add_argument("--strategies", type=_csv_list, help="comma list of none,fs,fe")
    p.add_argument("--families", type=_csv_list, help="comma list of rf,rr,svr,knr,nn,abr")
    p.add_argument("--kqis", type=_csv_list, help="comma list of KQI column names")
    p.add_argument("--granularity", choices=["per_session", "per_sample"])
    p.add_argument("--workers", type=int)
    p.add_argument("--experiments", type=int, help="experiments per scenario (default 60)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> RunConfig:
    base = RunConfig.load(args.config).to_dict() if args.config else {}
    for key in ("seed", "out", "strategies", "families", "kqis", "granularity", "workers",
                "experiments"):
        value = getattr(args, key)
        if value is not None:
            base[key] = value
    return RunConfig.from_dict(base)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg)
    except (ConfigError, SchemaError, PreprocessError, SpecError, FeatureError, LeakageError) as exc:
        print(f"kqiest: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, RuntimeError, ValueError, KeyError) as exc:
        print(f"kqiest: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())

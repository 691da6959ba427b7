"""``chaos-lab <mode> --config PATH [--seed S] [--out DIR]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..kernel import KernelError
from ..metrics import MetricsError
from ..particles import ParticleError
from ..pde import PdeError
from ..regime import RegimeError
from .config import MODES, ConfigError, load_config, parse_config
from .report import ReportError, report
from .runner import run_experiment

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chaos-lab", description=__doc__.splitlines()[0])
    p.add_argument("mode", choices=MODES + ("report",))
    p.add_argument("--config", help="experiment JSON (for report: the run directory)")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--out", default=None, help="override the output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.mode == "report":
        if not args.config:
            print("error: report needs --config RUN_DIR", file=sys.stderr)
            return EXIT_CONFIG
        try:
            fits = report(args.config)
        except (ReportError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for f in fits:
            print(f"{f.statistic:<24} n={f.n_points} slope={f.slope:.4g} R2={f.r2:.4g} {f.note}")
        return 0

    try:
        if args.config is None:
            raise ConfigError("--config is required", "config")
        cfg = load_config(args.config)
        overrides = {"mode": args.mode}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["output_dir"] = args.out
        cfg = parse_config({**cfg.model_dump(mode="json"), **overrides})
        manifest = run_experiment(cfg)
        if args.mode == "regime":
            print((Path(cfg.output_dir) / "certificate.txt").read_text(), end="")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PdeError, ParticleError, KernelError, MetricsError, RegimeError, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"{manifest.status}: {len(manifest.files)} files in {cfg.output_dir} (config {manifest.config_hash[:12]})")
    return 0


if __name__ == "__main__":
    sys.exit(main())

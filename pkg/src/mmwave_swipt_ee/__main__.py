"""Command line entry point: ``python -m mmwave_swipt_ee <command>``.

Commands::

    run                one configuration, one CSV row per trial
    figure <id>        rows behind one figure (3, 4, 4a, 5, 6, 7, 8, 8a, 9)
    sweep              one configuration over a list of parameter values
    selftest           closed-form examples and small oracles

Flags given on the command line override values read with ``--config``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiments as ex
from .analog import ConfigurationError
from .selftest import run_selftest

_FLAG_FIELDS = {
    "seed": "seed",
    "trials": "trials",
    "structure": "structure",
    "algorithm": "algorithm",
    "objective": "objective",
    "pmax_dbm": "p_max_dbm",
    "emin_uw": "e_min_uw",
    "workers": "workers",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--out-dir", type=Path, default=Path("results"))
    common.add_argument("--structure", choices=["fully_connected", "subarray", "digital"])
    common.add_argument("--algorithm", choices=["sca", "zf"])
    common.add_argument("--objective", choices=["max_ee", "max_se"])
    common.add_argument("--pmax-dbm", type=float)
    common.add_argument("--emin-uw", type=float)
    common.add_argument("--workers", type=int, help="worker processes for trials (default 1)")

    parser = argparse.ArgumentParser(prog="python -m mmwave_swipt_ee", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="one configuration")
    fig = sub.add_parser("figure", parents=[common], help="rows behind one figure")
    fig.add_argument("figure_id", choices=list(ex.FIGURES))
    sw = sub.add_parser("sweep", parents=[common], help="parameter sweep")
    sw.add_argument("--sweep", type=ex.parse_sweep, metavar="PARAM: V1, V2, ...",
                    help="overrides the config's sweep (default p_max_dbm over 20..50)")
    st = sub.add_parser("selftest", help="run the built-in checks")
    st.add_argument("--tolerance", type=float, default=1e-8, help="conic solver tolerance used by the checks")
    return parser


def load_config(args) -> ex.ExperimentConfig:
    cfg = ex.parse_config(args.config) if getattr(args, "config", None) else ex.ExperimentConfig()
    changes = {field: getattr(args, flag) for flag, field in _FLAG_FIELDS.items()
               if getattr(args, flag, None) is not None}
    if getattr(args, "sweep", None) is not None:
        changes["sweep"] = args.sweep
    return cfg.with_(**changes) if changes else cfg


def _summary(rows) -> str:
    counts: dict = {}
    for r in rows:
        counts[r.status] = counts.get(r.status, 0) + 1
    return ", ".join(f"{k}: {v}" for k, v in sorted(counts.items()))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "selftest":
        report = run_selftest(args.tolerance)
        for line in report.lines():
            print(line)
        print("selftest", "passed" if report.passed else "FAILED")
        return 0 if report.passed else 1
    try:
        cfg = load_config(args)
    except (ConfigurationError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    if args.command == "run":
        rows = ex.run_point(cfg)
        path = ex.write_rows(rows, args.out_dir / "run.csv")
        paths = [path]
    elif args.command == "sweep":
        rows = ex.run_sweep(cfg)
        paths = [ex.write_rows(rows, args.out_dir / "sweep.csv")]
    else:
        out = ex.run_figure(args.figure_id, cfg, args.out_dir, args.structure)
        rows, paths = out["rows"], out["paths"]
    print(f"{len(rows)} rows ({_summary(rows)})")
    for p in paths:
        print(f"wrote {p}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Exit codes: 0 success, 1 other package error, 2 usage/config, 3 dataset, 4 numeric.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import build_config
from .episodes import IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC, idx_header, read_idx
from .errors import ConfigError, DataError, NumericError, TwinSyncError
from .gradcheck import run_suite
from .harness import resolve_idx_paths, run_experiment, sweep_alpha
from .report import SWEEP_HEADER, atomic_write, csv_text, fig4_rows, sweep_rows, write_outputs

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4
GRADCHECK_TOLERANCE = 1e-5


class _UsageExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageExit(message)


def _add_common(p: argparse.ArgumentParser, default_out: str):
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--out", type=Path, default=Path(default_out), help="output directory")
    p.add_argument("--preset", choices=["paper", "desk"], help="start from a named preset")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted-path override, e.g. reg.lambda=75000 (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="twinsync", description="Continual-learning cyber twin simulator")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    _add_common(sub.add_parser("run", help="run an experiment from a config"), "out")
    _add_common(sub.add_parser("reproduce-paper", help="full-scale preset, all strategies"), "out/paper")
    p = sub.add_parser("sweep-alpha", help="single-episode optimized runs over alpha")
    _add_common(p, "out/sweep")
    p.add_argument("--alphas", type=str, help="comma-separated alpha values")
    g = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    g.add_argument("--trials", type=int, default=20)
    g.add_argument("--seed", type=int, default=0)
    i = sub.add_parser("inspect-data", help="print IDX headers and checksums")
    i.add_argument("paths", nargs="*", type=Path, help="IDX files (default: $TWINSYNC_DATA_DIR)")
    return parser


def _cmd_run(args) -> int:
    if args.config is None and args.preset is None:
        raise _UsageExit("run needs --config or --preset")
    cfg = build_config(args.config, args.preset, args.overrides, args.seed)
    record = run_experiment(cfg)
    written = write_outputs(record, args.out)
    _print_summary(record, written)
    return EXIT_OK


def _cmd_reproduce(args) -> int:
    overrides = ["strategies=[\"exhaustive\",\"single-task\",\"ewc\",\"ewcpp\"]", *args.overrides]
    cfg = build_config(args.config, args.preset or "paper", overrides, args.seed)
    record = run_experiment(cfg)
    written = write_outputs(record, args.out)
    _print_summary(record, written)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = build_config(args.config, args.preset or "desk", args.overrides, args.seed)
    alphas = None
    if args.alphas:
        try:
            alphas = [float(a) for a in args.alphas.split(",")]
        except ValueError:
            raise _UsageExit(f"--alphas must be comma-separated numbers, got {args.alphas!r}") from None
    rows, report = sweep_alpha(cfg, alphas)
    atomic_write(args.out / "sweep_alpha.csv", csv_text(SWEEP_HEADER, sweep_rows(rows)))
    atomic_write(
        args.out / "fig4_tradeoff.csv",
        csv_text(["iteration", "train_loss", "data_loss", "delta_t_s", "objective"], fig4_rows(report)),
    )
    doc = {"config": cfg.to_dict(), "alpha_sweep": [dict(zip(SWEEP_HEADER, r)) for r in sweep_rows(rows)]}
    atomic_write(args.out / "summary.json", json.dumps(doc, indent=2) + "\n")
    print("alpha  n_star  loss        delta_t_s")
    for r in rows:
        print(f"{r.alpha:5.2f}  {r.n_star:6d}  {r.loss:10.6f}  {r.delta_t:.2f}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    worst = run_suite(args.trials, args.seed)
    ok = True
    for name, err in worst.items():
        status = "ok" if err < GRADCHECK_TOLERANCE else "FAIL"
        ok &= err < GRADCHECK_TOLERANCE
        print(f"{name:15s} max relative error {err:.3e}  {status}")
    return EXIT_OK if ok else EXIT_NUMERIC


def _cmd_inspect(args) -> int:
    paths = list(args.paths)
    if not paths:
        from .config import ExperimentConfig

        cfg = ExperimentConfig()
        cfg.data.source = "idx"
        paths = list(resolve_idx_paths(cfg).values())
    for p in paths:
        if not p.exists():
            raise DataError(f"{p} does not exist")
        head = idx_header(p)
        # full validation: magic, sizes and payload length
        read_idx(p, IDX_IMAGES_MAGIC if head["magic"] == f"0x{IDX_IMAGES_MAGIC:08x}" else IDX_LABELS_MAGIC)
        print(f"{head['path']}: magic={head['magic']} dims={head['dims']} bytes={head['bytes']} sha256={head['sha256']}")
    return EXIT_OK


def _print_summary(record, written):
    for name in record.runs:
        run = record.runs[name]
        dts = ", ".join(f"{d:.2f}" for d in run.delta_t)
        print(f"{name:12s} final acc {record.final_accuracy(name):.3f}  "
              f"ep1 retention {run.retention[-1][0]:.3f}  n*={[r.n_star for r in run.reports]}  dT[s]=[{dts}]")
    for path in written.values():
        print(f"wrote {path}")


COMMANDS = {
    "run": _cmd_run,
    "reproduce-paper": _cmd_reproduce,
    "sweep-alpha": _cmd_sweep,
    "gradcheck": _cmd_gradcheck,
    "inspect-data": _cmd_inspect,
}


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageExit("a subcommand is required")
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except _UsageExit as exc:
        print(f"twinsync: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"twinsync: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"twinsync: dataset error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"twinsync: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except TwinSyncError as exc:
        print(f"twinsync: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

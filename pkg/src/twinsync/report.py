"""Plot-ready CSV tables and the JSON summary of a run.

Floats are written with ``repr`` so identical runs give byte-identical files,
and every file goes through a temp file plus ``os.replace``.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

from . import __version__
from .harness import RunRecord, SweepRow, sweep_from_report
from .sync import TrainReport

TRAJECTORY_COLUMNS = [
    "run_id", "strategy", "episode", "iteration", "train_loss", "data_loss",
    "penalty_loss", "test_acc", "retention_acc_ep0", "delta_t_s", "objective",
]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def trajectory_rows(record: RunRecord):
    n_max = record.config.train.iterations
    for name, run in record.runs.items():
        evals = {(p.episode, p.iteration): p for p in run.evals}
        for k, rep in enumerate(run.reports):
            for n in range(n_max + 1):
                p = evals.get((k, n))
                yield [
                    record.run_id, name, k + 1, n, rep.losses[n], rep.data_losses[n], rep.penalty_losses[n],
                    None if p is None else record.combined_accuracy(p),
                    None if p is None else record.split_accuracy(p, 0),
                    rep.delta_t[n], rep.objectives[n],
                ]


def fig2a_rows(record: RunRecord):
    n_max = record.config.train.iterations
    for name, run in record.runs.items():
        for p in run.evals:
            yield [name, p.episode + 1, p.iteration, p.episode * n_max + p.iteration, record.combined_accuracy(p)]


def fig2b_rows(record: RunRecord):
    for name, run in record.runs.items():
        cumulative = run.cumulative_delta_t
        for k, rep in enumerate(run.reports):
            yield [name, k + 1, rep.n_star, rep.delta_t_star, float(cumulative[k])]


def fig3_rows(record: RunRecord):
    n_max = record.config.train.iterations
    for name, run in record.runs.items():
        for p in run.evals:
            yield [name, p.episode + 1, p.iteration, p.episode * n_max + p.iteration, record.split_accuracy(p, 0)]


def fig4_rows(report: TrainReport):
    for n, (loss, data, dt, obj) in enumerate(zip(report.losses, report.data_losses, report.delta_t, report.objectives)):
        yield [n, loss, data, dt, obj]


def sweep_rows(rows: list[SweepRow]):
    for r in rows:
        yield [r.alpha, r.n_star, r.loss, r.delta_t, r.objective]


SWEEP_HEADER = ["alpha", "n_star", "train_loss", "delta_t_s", "objective"]


def summary(record: RunRecord, sweep: list[SweepRow] | None = None) -> dict:
    cfg = record.config
    out = {
        "config": cfg.to_dict(),
        "provenance": {
            "package_version": __version__,
            "run_id": record.run_id,
            "seed": cfg.seed,
            "preset": cfg.preset,
            "iteration_mode": cfg.train.mode,
            "objective_mode": "normalized" if cfg.objective.normalize else "raw",
        },
        "test_split_sizes": record.test_sizes,
        "strategies": {},
    }
    for name, run in record.runs.items():
        out["strategies"][name] = {
            "final_combined_accuracy": record.final_accuracy(name),
            "final_split_accuracy": run.retention[-1],
            "retention_matrix": run.retention,
            "n_star": [r.n_star for r in run.reports],
            "delta_t_s": run.delta_t,
            "cumulative_delta_t_s": [float(c) for c in run.cumulative_delta_t],
            "final_loss": [r.loss_star for r in run.reports],
            "history": run.history,
        }
    if sweep is not None:
        out["alpha_sweep"] = [dict(zip(SWEEP_HEADER, list(r))) for r in sweep_rows(sweep)]
    return out


def fig4_report(record: RunRecord) -> TrainReport:
    """Single-episode trajectory: episode 1 of the sweep strategy (identical for every strategy)."""
    name = record.config.sweep.strategy
    if name not in record.runs:
        name = next(iter(record.runs))
    return record.runs[name].reports[0]


def write_outputs(record: RunRecord, out_dir, with_sweep: bool = True) -> dict[str, Path]:
    out_dir = Path(out_dir)
    written = {}
    written["trajectory"] = atomic_write(out_dir / "trajectory.csv", csv_text(TRAJECTORY_COLUMNS, trajectory_rows(record)))
    written["fig2a"] = atomic_write(
        out_dir / "fig2a_accuracy.csv",
        csv_text(["strategy", "episode", "iteration", "global_iteration", "test_acc"], fig2a_rows(record)),
    )
    written["fig2b"] = atomic_write(
        out_dir / "fig2b_desync.csv",
        csv_text(["strategy", "episode", "n_star", "delta_t_s", "cumulative_delta_t_s"], fig2b_rows(record)),
    )
    written["fig3"] = atomic_write(
        out_dir / "fig3_retention.csv",
        csv_text(["strategy", "episode", "iteration", "global_iteration", "retention_acc_ep0"], fig3_rows(record)),
    )
    rep = fig4_report(record)
    written["fig4"] = atomic_write(
        out_dir / "fig4_tradeoff.csv",
        csv_text(["iteration", "train_loss", "data_loss", "delta_t_s", "objective"], fig4_rows(rep)),
    )
    sweep = None
    if with_sweep:
        sweep = sweep_from_report(rep, record.config.sweep.alphas, record.config.objective.normalize)
        written["sweep"] = atomic_write(out_dir / "sweep_alpha.csv", csv_text(SWEEP_HEADER, sweep_rows(sweep)))
    written["summary"] = atomic_write(
        out_dir / "summary.json", json.dumps(summary(record, sweep), indent=2, sort_keys=False) + "\n"
    )
    return written

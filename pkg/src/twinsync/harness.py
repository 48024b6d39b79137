"""Multi-episode experiments across strategies, and the metrics drawn from them."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .episodes import EpisodeDataset, LabeledData, load_idx, make_episode, make_synthetic
from .errors import DataError
from .nn import LayerSpec, ModelWeights, TrainConfig, count_correct, init_weights
from .strategies import RegConfig, make_strategy
from .sync import ObjectiveConfig, SyncParams, TrainReport, desync_time, scalarized_objective, select_iteration, train_episode

log = logging.getLogger(__name__)

DATA_DIR_ENV = "TWINSYNC_DATA_DIR"

IDX_NAMES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


@dataclass
class EvalPoint:
    episode: int
    iteration: int
    correct: tuple[int, ...]  # per episode test split


@dataclass
class StrategyRun:
    strategy: str
    reports: list[TrainReport] = field(default_factory=list)
    evals: list[EvalPoint] = field(default_factory=list)
    # retention[k][e]: accuracy on split e after episode k, None for e > k
    retention: list[list[float | None]] = field(default_factory=list)
    history: dict = field(default_factory=dict)

    @property
    def delta_t(self) -> list[float]:
        return [r.delta_t_star for r in self.reports]

    @property
    def cumulative_delta_t(self) -> list[float]:
        return list(np.cumsum(self.delta_t)) if self.reports else []


@dataclass
class RunRecord:
    config: ExperimentConfig
    test_sizes: list[int]
    runs: dict[str, StrategyRun]

    @property
    def run_id(self) -> str:
        return f"{self.config.preset}-seed{self.config.seed}"

    def combined_accuracy(self, point: EvalPoint) -> float:
        return sum(point.correct) / sum(self.test_sizes)

    def split_accuracy(self, point: EvalPoint, e: int) -> float:
        return point.correct[e] / self.test_sizes[e]

    def final_accuracy(self, strategy: str) -> float:
        """Combined test accuracy with the weights kept at the end of the last episode."""
        row = self.runs[strategy].retention[-1]
        return sum(a * n for a, n in zip(row, self.test_sizes)) / sum(self.test_sizes)


# ---------------------------------------------------------------- data

def resolve_idx_paths(cfg: ExperimentConfig) -> dict[str, Path]:
    data_dir = os.environ.get(DATA_DIR_ENV)
    paths = {}
    for key, stem in IDX_NAMES.items():
        explicit = getattr(cfg.data, key)
        if explicit:
            paths[key] = Path(explicit)
            continue
        if not data_dir:
            raise DataError(f"data.{key} is not set and ${DATA_DIR_ENV} is not defined")
        for candidate in (Path(data_dir) / stem, Path(data_dir) / f"{stem}.gz"):
            if candidate.exists():
                paths[key] = candidate
                break
        else:
            raise DataError(f"no {stem}[.gz] under {data_dir}")
    for key, p in paths.items():
        if not p.exists():
            raise DataError(f"data.{key}: {p} does not exist")
    return paths


def load_data(cfg: ExperimentConfig) -> tuple[LabeledData, LabeledData]:
    """Train and held-out test pools for the configured source."""
    d = cfg.data
    if d.source == "synthetic":
        pool = make_synthetic(cfg.seed, d.synthetic_classes, d.synthetic_dim, d.synthetic_train + d.synthetic_test,
                              active=d.synthetic_active)
        n = d.synthetic_train
        return LabeledData(pool.x[:n], pool.y[:n]), LabeledData(pool.x[n:], pool.y[n:])
    paths = resolve_idx_paths(cfg)
    train = load_idx(paths["train_images"], paths["train_labels"])
    test = load_idx(paths["test_images"], paths["test_labels"])
    return train, test


def build_episodes(cfg: ExperimentConfig, train: LabeledData, test: LabeledData):
    per_test = cfg.test_samples // cfg.episodes
    episodes = [make_episode(train, k, cfg.seed, cfg.samples_per_episode) for k in range(cfg.episodes)]
    tests = [make_episode(test, k, cfg.seed, per_test, split="test") for k in range(cfg.episodes)]
    return episodes, tests


def layer_spec(cfg: ExperimentConfig, train: LabeledData) -> LayerSpec:
    classes = int(train.y.max()) + 1 if cfg.data.source == "idx" else cfg.data.synthetic_classes
    return LayerSpec((train.dim, *cfg.model.hidden, classes))


# ---------------------------------------------------------------- runs

def _objective(cfg: ExperimentConfig) -> ObjectiveConfig:
    return ObjectiveConfig(alpha=cfg.objective.alpha, normalize=cfg.objective.normalize)


def _train_config(cfg: ExperimentConfig) -> TrainConfig:
    return TrainConfig(cfg.train.learning_rate, cfg.train.iterations, cfg.seed, cfg.train.batch_size)


def _sync(cfg: ExperimentConfig) -> SyncParams:
    return SyncParams(cfg.sync.cycles_per_sample, cfg.sync.frequency_hz)


def run_strategy(
    cfg: ExperimentConfig,
    name: str,
    spec: LayerSpec,
    episodes: list[EpisodeDataset],
    tests: list[EpisodeDataset],
) -> StrategyRun:
    strategy = make_strategy(name, RegConfig(cfg.reg.lam, cfg.reg.gamma))
    train_cfg, obj, params = _train_config(cfg), _objective(cfg), _sync(cfg)
    n_max = cfg.train.iterations
    run = StrategyRun(name)
    w: ModelWeights = init_weights(spec, cfg.seed)

    for ep in episodes:
        def on_iteration(n, weights, _k=ep.index):
            if n % cfg.train.eval_every == 0 or n == n_max:
                run.evals.append(EvalPoint(_k, n, tuple(count_correct(weights, t.x, t.y) for t in tests)))

        report = train_episode(strategy, ep, w, train_cfg, obj, params, cfg.train.mode, on_iteration)
        run.reports.append(report)
        w = report.weights
        strategy.end_of_episode(w, ep)
        run.retention.append(
            [count_correct(w, t.x, t.y) / len(t) if t.index <= ep.index else None for t in tests]
        )
        log.info("%s episode %d: n*=%d loss=%.4f dT=%.2fs", name, ep.index + 1, report.n_star,
                 report.loss_star, report.delta_t_star)
    run.history = strategy.history_summary()
    return run


def run_experiment(cfg: ExperimentConfig, data: tuple[LabeledData, LabeledData] | None = None) -> RunRecord:
    cfg.validate()
    train, test = data if data is not None else load_data(cfg)
    spec = layer_spec(cfg, train)
    episodes, tests = build_episodes(cfg, train, test)
    if cfg.workers > 1 and len(cfg.strategies) > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            futures = [pool.submit(run_strategy, cfg, s, spec, episodes, tests) for s in cfg.strategies]
            runs = [f.result() for f in futures]
    else:
        runs = [run_strategy(cfg, s, spec, episodes, tests) for s in cfg.strategies]
    return RunRecord(cfg, [len(t) for t in tests], {r.strategy: r for r in runs})


def retention_curve(record: RunRecord, strategy: str, e: int) -> list[tuple[int, int, float]]:
    """(episode, iteration, accuracy on split e): the end of episode e, then every evaluated iterate after it."""
    if not 0 <= e < record.config.episodes:
        raise IndexError(f"episode {e} outside 0..{record.config.episodes - 1}")
    run = record.runs[strategy]
    curve = [(e, run.reports[e].n_star, run.retention[e][e])]
    for p in run.evals:
        if p.episode > e:
            curve.append((p.episode, p.iteration, record.split_accuracy(p, e)))
    return curve


# ---------------------------------------------------------------- alpha sweep

@dataclass(frozen=True)
class SweepRow:
    alpha: float
    n_star: int
    loss: float
    delta_t: float
    objective: float


def sweep_from_report(report: TrainReport, alphas, normalize: bool = True) -> list[SweepRow]:
    """Reselect n* on a recorded trajectory for each alpha (the trajectory itself does not depend on alpha)."""
    rows = []
    for alpha in sorted(alphas):
        cfg = ObjectiveConfig(alpha=alpha, normalize=normalize)
        objectives = [scalarized_objective(l, t, cfg, report.t_ref) for l, t in zip(report.losses, report.delta_t)]
        n = select_iteration(objectives)
        rows.append(SweepRow(alpha, n, report.losses[n], report.delta_t[n], objectives[n]))
    return rows


def sweep_alpha(cfg: ExperimentConfig, alphas=None, data=None) -> tuple[list[SweepRow], TrainReport]:
    """One optimized single-episode run per alpha, sharing one gradient-descent trajectory."""
    cfg.validate()
    alphas = cfg.sweep.alphas if alphas is None else list(alphas)
    if any(not 0.0 <= a <= 1.0 for a in alphas):
        raise ValueError("alphas must lie in [0, 1]")
    train, test = data if data is not None else load_data(cfg)
    spec = layer_spec(cfg, train)
    episode = make_episode(train, 0, cfg.seed, cfg.samples_per_episode)
    strategy = make_strategy(cfg.sweep.strategy, RegConfig(cfg.reg.lam, cfg.reg.gamma))
    report = train_episode(
        strategy, episode, init_weights(spec, cfg.seed), _train_config(cfg),
        ObjectiveConfig(alpha=1.0, normalize=cfg.objective.normalize), _sync(cfg), "optimized",
    )
    return sweep_from_report(report, alphas, cfg.objective.normalize), report


def episode_desync(cfg: ExperimentConfig, strategy: str, k: int, n: int) -> float:
    """Model time for ``n`` iterations of episode ``k`` (0-based) under ``strategy``."""
    size = cfg.samples_per_episode * (k + 1 if strategy == "exhaustive" else 1)
    return desync_time(size, _sync(cfg), n)

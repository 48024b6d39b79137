"""De-synchronization time and per-episode choice of the iteration count.

Retraining halts the cyber twin, so every gradient-descent iteration over a
training set of ``size`` samples costs ``size * cycles_per_sample / frequency``
seconds of out-of-service time.  ``train_episode`` runs the iterations and
keeps the weights at the iteration that minimises
``alpha * loss + (1 - alpha) * time``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, NumericError
from .nn import ModelWeights, TrainConfig, gd_step

FIXED = "fixed"
OPTIMIZED = "optimized"


@dataclass(frozen=True)
class SyncParams:
    cycles_per_sample: float = 125440.0
    frequency_hz: float = 4e9

    def __post_init__(self):
        if not self.cycles_per_sample > 0 or not self.frequency_hz > 0:
            raise ConfigError("cycles_per_sample and frequency_hz must be positive")


@dataclass(frozen=True)
class ObjectiveConfig:
    alpha: float = 0.5
    # divide the time term by t_ref (default: time of max_iterations) so both terms are O(1)
    normalize: bool = True
    t_ref: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.t_ref is not None and not self.t_ref > 0:
            raise ConfigError(f"t_ref must be positive, got {self.t_ref}")


@dataclass
class TrainReport:
    n_star: int
    weights: ModelWeights
    losses: list[float]
    data_losses: list[float]
    penalty_losses: list[float]
    delta_t: list[float]
    objectives: list[float]
    t_ref: float
    mode: str
    wall_times: list[float] = field(default_factory=list)

    @property
    def delta_t_star(self) -> float:
        return self.delta_t[self.n_star]

    @property
    def objective_star(self) -> float:
        return self.objectives[self.n_star]

    @property
    def loss_star(self) -> float:
        return self.losses[self.n_star]


def desync_time(training_set_size: int, params: SyncParams, n: int) -> float:
    """Seconds out of service for ``n`` iterations over ``training_set_size`` samples."""
    if n < 0:
        raise ValueError(f"iteration count must be >= 0, got {n}")
    return training_set_size * params.cycles_per_sample * n / params.frequency_hz


def reference_time(training_set_size: int, params: SyncParams, n_max: int) -> float:
    # one iteration's worth when n_max == 0 keeps the normaliser positive
    return desync_time(training_set_size, params, max(n_max, 1))


def scalarized_objective(loss: float, delta_t: float, cfg: ObjectiveConfig, t_ref: float | None = None) -> float:
    if cfg.normalize:
        t_ref = cfg.t_ref if t_ref is None else t_ref
        if t_ref is None:
            raise ConfigError("normalized objective needs a reference time")
        return cfg.alpha * loss + (1.0 - cfg.alpha) * (delta_t / t_ref)
    return cfg.alpha * loss + (1.0 - cfg.alpha) * delta_t


def select_iteration(objectives: Sequence[float]) -> int:
    """Index of the smallest objective; the earliest one on ties."""
    best = 0
    for n, value in enumerate(objectives):
        if value < objectives[best]:
            best = n
    return best


def train_episode(
    strategy,
    episode,
    w0: ModelWeights,
    train_cfg: TrainConfig,
    cfg: ObjectiveConfig,
    params: SyncParams,
    mode: str = OPTIMIZED,
    on_iteration: Callable[[int, ModelWeights], None] | None = None,
) -> TrainReport:
    """Run gradient descent for n = 0..max_iterations on the strategy's episode loss.

    The objective is evaluated at every iterate; in ``optimized`` mode the
    returned weights are a snapshot of the best iterate so far (taken when the
    objective strictly improves), in ``fixed`` mode they are the last iterate.
    ``on_iteration(n, w)`` is called with each iterate before it is stepped.
    """
    if mode not in (FIXED, OPTIMIZED):
        raise ConfigError(f"unknown iteration mode {mode!r}")
    n_max = train_cfg.max_iterations
    size = strategy.training_size(episode)
    t_ref = cfg.t_ref if cfg.t_ref is not None else reference_time(size, params, n_max)
    rng = np.random.default_rng(np.random.SeedSequence([train_cfg.seed, episode.index]))

    losses, data_losses, penalties, delta_t, objectives, walls = [], [], [], [], [], []
    w = w0
    best_n, best_w = 0, w0
    for n in range(n_max + 1):
        started = time.perf_counter()
        rows = None
        if train_cfg.batch_size is not None and train_cfg.batch_size < size:
            rows = rng.choice(size, train_cfg.batch_size, replace=False)
        # overflow is reported below as a non-finite loss with its location
        with np.errstate(over="ignore", invalid="ignore"):
            out = strategy.episode_loss(w, episode, rows)
        where = f"strategy {strategy.name!r}, episode {episode.index}, iteration {n}"
        if not np.isfinite(out.total):
            raise NumericError(f"non-finite loss for {where}")
        dt = desync_time(size, params, n)
        obj = scalarized_objective(out.total, dt, cfg, t_ref)
        losses.append(out.total)
        data_losses.append(out.data)
        penalties.append(out.penalty)
        delta_t.append(dt)
        objectives.append(obj)
        if on_iteration is not None:
            on_iteration(n, w)
        if obj < objectives[best_n]:
            best_n, best_w = n, w
        if n < n_max:
            try:
                w = gd_step(w, out.grad, train_cfg.learning_rate)
            except NumericError as exc:
                raise NumericError(f"{exc} ({where})") from exc
        walls.append(time.perf_counter() - started)

    if mode == FIXED:
        best_n, best_w = n_max, w
    return TrainReport(best_n, best_w, losses, data_losses, penalties, delta_t, objectives, t_ref, mode, walls)

"""Twin update strategies: exhaustive, single-task, EWC and EWC++.

Every strategy exposes the same two hooks used by the training loop:
``episode_loss`` (objective for the current episode, with gradient) and
``end_of_episode`` (fold the finished episode into the strategy's history).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .episodes import AccumulatedDataset, EpisodeDataset, accumulate
from .errors import ConfigError, EmptyInputError, ShapeError
from .nn import ModelWeights, loss_and_grad, mean_squared_log_likelihood_grad

PER_EPISODE = "per-episode"
MOVING_AVERAGE = "moving-average"


@dataclass(frozen=True)
class FisherDiagonal:
    values: np.ndarray
    episode_index: int
    kind: str = PER_EPISODE

    def __post_init__(self):
        if np.any(self.values < 0):
            raise ValueError("Fisher diagonal entries must be nonnegative")


@dataclass(frozen=True)
class Anchor:
    weights: ModelWeights
    fisher: FisherDiagonal


@dataclass(frozen=True)
class RegConfig:
    lam: float = 75000.0
    gamma: float = 0.5

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")


class EpisodeLoss(NamedTuple):
    total: float
    grad: np.ndarray
    data: float
    penalty: float


def fisher_diagonal(w: ModelWeights, episode: EpisodeDataset) -> FisherDiagonal:
    """Empirical Fisher diagonal: mean squared gradient of log p(y_i | x_i, w) at the true labels."""
    if len(episode) == 0:
        raise EmptyInputError("Fisher estimate needs at least one sample")
    values = mean_squared_log_likelihood_grad(w, episode.x, episode.y)
    return FisherDiagonal(values, episode.index, PER_EPISODE)


def ewc_penalty(w: ModelWeights, anchors, lam: float) -> tuple[float, np.ndarray]:
    """sum_j sum_d lam/2 * F_j,d * (w_d - w*_j,d)^2 and its gradient."""
    grad = np.zeros_like(w.values)
    if lam == 0 or not anchors:
        return 0.0, grad
    total = 0.0
    for anchor in anchors:
        if anchor.weights.values.shape != w.values.shape or anchor.fisher.values.shape != w.values.shape:
            raise ShapeError("anchor dimensions do not match the model")
        diff = w.values - anchor.weights.values
        weighted = anchor.fisher.values * diff
        total += 0.5 * lam * float(weighted @ diff)
        grad += lam * weighted
    return total, grad


def ewcpp_fisher_update(current: FisherDiagonal, previous: FisherDiagonal, gamma: float) -> FisherDiagonal:
    """Moving average gamma * F_k + (1 - gamma) * F~_{k-1}."""
    if current.values.shape != previous.values.shape:
        raise ShapeError(f"Fisher lengths differ: {current.values.shape} vs {previous.values.shape}")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    values = gamma * current.values + (1.0 - gamma) * previous.values
    return FisherDiagonal(values, current.episode_index, MOVING_AVERAGE)


class Strategy:
    name = "base"

    def training_data(self, current: EpisodeDataset) -> tuple[np.ndarray, np.ndarray]:
        return current.x, current.y

    def training_size(self, current: EpisodeDataset) -> int:
        return len(current)

    def penalty(self, w: ModelWeights) -> tuple[float, np.ndarray]:
        return 0.0, np.zeros_like(w.values)

    def episode_loss(self, w: ModelWeights, current: EpisodeDataset, rows=None) -> EpisodeLoss:
        """Data term on this strategy's training set (optionally a row subset) plus penalty."""
        x, y = self.training_data(current)
        if rows is not None:
            x, y = x[rows], y[rows]
        data, grad = loss_and_grad(w, x, y)
        pen, pen_grad = self.penalty(w)
        if pen != 0.0:
            grad = grad + pen_grad
        return EpisodeLoss(data + pen, grad, data, pen)

    def end_of_episode(self, w_star: ModelWeights, current: EpisodeDataset) -> None:
        pass

    def history_summary(self) -> dict:
        return {}


class SingleTask(Strategy):
    name = "single-task"


class Exhaustive(Strategy):
    """Trains on the union of every episode seen so far."""

    name = "exhaustive"

    def __init__(self):
        self.history: list[EpisodeDataset] = []
        self._cache = None

    def _accumulated(self, current: EpisodeDataset) -> AccumulatedDataset:
        if current.index != len(self.history):
            raise ConfigError(
                f"exhaustive history holds {len(self.history)} episodes, cannot train episode {current.index}"
            )
        return accumulate(self.history + [current])

    def training_data(self, current):
        key = (len(self.history), id(current))
        if self._cache is None or self._cache[0] != key:
            acc = self._accumulated(current)
            self._cache = (key, (acc.x, acc.y))
        return self._cache[1]

    def training_size(self, current):
        return sum(len(e) for e in self.history) + len(current)

    def end_of_episode(self, w_star, current):
        self._accumulated(current)
        self.history.append(current)
        self._cache = None

    def history_summary(self):
        return {"episodes": len(self.history), "samples": sum(len(e) for e in self.history)}


class EWC(Strategy):
    """One (w*_j, F_j) anchor per finished episode."""

    name = "ewc"

    def __init__(self, reg: RegConfig):
        self.reg = reg
        self.anchors: list[Anchor] = []

    def penalty(self, w):
        return ewc_penalty(w, self.anchors, self.reg.lam)

    def end_of_episode(self, w_star, current):
        self.anchors.append(Anchor(w_star.copy(), fisher_diagonal(w_star, current)))

    def history_summary(self):
        return _anchor_summary(self.anchors)


class EWCPlusPlus(Strategy):
    """Single anchor at the latest optimum with a moving-average Fisher."""

    name = "ewcpp"

    def __init__(self, reg: RegConfig):
        self.reg = reg
        self.anchor: Anchor | None = None

    @property
    def anchors(self) -> list[Anchor]:
        return [] if self.anchor is None else [self.anchor]

    def penalty(self, w):
        return ewc_penalty(w, self.anchors, self.reg.lam)

    def end_of_episode(self, w_star, current):
        fisher = fisher_diagonal(w_star, current)
        if self.anchor is not None:
            fisher = ewcpp_fisher_update(fisher, self.anchor.fisher, self.reg.gamma)
        else:
            # no earlier average exists: the first one is the episode's own Fisher
            fisher = FisherDiagonal(fisher.values, fisher.episode_index, MOVING_AVERAGE)
        self.anchor = Anchor(w_star.copy(), fisher)

    def history_summary(self):
        return _anchor_summary(self.anchors)


def _anchor_summary(anchors) -> dict:
    return {
        "anchors": [
            {
                "episode": a.fisher.episode_index,
                "kind": a.fisher.kind,
                "weight_norm": float(np.linalg.norm(a.weights.values)),
                "fisher_sum": float(a.fisher.values.sum()),
                "fisher_max": float(a.fisher.values.max()),
            }
            for a in anchors
        ]
    }


STRATEGIES = ("exhaustive", "single-task", "ewc", "ewcpp")


def make_strategy(name: str, reg: RegConfig | None = None) -> Strategy:
    reg = reg or RegConfig()
    if name == "exhaustive":
        return Exhaustive()
    if name == "single-task":
        return SingleTask()
    if name == "ewc":
        return EWC(reg)
    if name == "ewcpp":
        return EWCPlusPlus(reg)
    raise ConfigError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGIES)}")

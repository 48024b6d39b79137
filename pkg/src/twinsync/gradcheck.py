"""Central finite-difference checks of the analytic gradients."""

from __future__ import annotations

import numpy as np

from .nn import LayerSpec, ModelWeights, init_weights, loss_and_grad
from .strategies import Anchor, FisherDiagonal, ewc_penalty, ewcpp_fisher_update

STEP = 1e-4
# coordinates whose gradient is below this are compared in absolute terms
FLOOR = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), FLOOR)
    return float(np.max(np.abs(analytic - numeric) / scale))


def numeric_grad(f, values: np.ndarray, step: float = STEP) -> np.ndarray:
    out = np.empty_like(values)
    for d in range(values.size):
        up = values.copy()
        up[d] += step
        down = values.copy()
        down[d] -= step
        out[d] = (f(up) - f(down)) / (2 * step)
    return out


def kink_margin(w: ModelWeights, x) -> float:
    """Smallest |pre-activation| over hidden units; ReLU is not differentiable at 0."""
    a = np.atleast_2d(x)
    margin = np.inf
    for W, b in list(w.layers())[:-1]:
        z = a @ W + b
        margin = min(margin, float(np.abs(z).min()))
        a = np.maximum(z, 0.0)
    return margin


def random_problem(rng: np.random.Generator, max_params: int = 200, margin: float = 1e-3):
    """A small random network, batch and labels with at most ``max_params`` parameters.

    Draws landing within ``margin`` of a ReLU kink are discarded.
    """
    while True:
        m0 = int(rng.integers(1, 6))
        hidden = [int(h) for h in rng.integers(1, 8, size=int(rng.integers(1, 3)))]
        classes = int(rng.integers(2, 5))
        spec = LayerSpec((m0, *hidden, classes))
        if spec.n_params > max_params:
            continue
        w = init_weights(spec, int(rng.integers(2**31)))
        w.values[...] += 0.1 * rng.standard_normal(spec.n_params)
        n = int(rng.integers(1, 9))
        x = rng.uniform(0, 1, size=(n, m0))
        y = rng.integers(0, classes, size=n)
        if kink_margin(w, x) > margin:
            return w, x, y


def check_data_loss(w: ModelWeights, x, y) -> float:
    _, grad = loss_and_grad(w, x, y)
    num = numeric_grad(lambda v: loss_and_grad(ModelWeights(v, w.spec), x, y)[0], w.values)
    return relative_error(grad, num)


def check_penalty(w: ModelWeights, anchors, lam: float) -> float:
    _, grad = ewc_penalty(w, anchors, lam)
    num = numeric_grad(lambda v: ewc_penalty(ModelWeights(v, w.spec), anchors, lam)[0], w.values)
    return relative_error(grad, num)


def random_anchors(rng, w: ModelWeights, count: int, gamma: float | None = None):
    anchors = []
    for j in range(count):
        a = ModelWeights(w.values + rng.standard_normal(w.values.size), w.spec)
        f = FisherDiagonal(rng.uniform(0, 1, w.values.size), j)
        anchors.append(Anchor(a, f))
    if gamma is not None and anchors:
        # collapse to one EWC++ anchor with a moving-average Fisher
        fisher = anchors[0].fisher
        for a in anchors[1:]:
            fisher = ewcpp_fisher_update(a.fisher, fisher, gamma)
        anchors = [Anchor(anchors[-1].weights, fisher)]
    return anchors


def run_suite(trials: int = 20, seed: int = 0) -> dict[str, float]:
    """Max relative error over ``trials`` random networks for each gradient."""
    rng = np.random.default_rng(seed)
    worst = {"data_loss": 0.0, "ewc_penalty": 0.0, "ewcpp_penalty": 0.0}
    for _ in range(trials):
        w, x, y = random_problem(rng)
        worst["data_loss"] = max(worst["data_loss"], check_data_loss(w, x, y))
        lam = float(rng.uniform(0.1, 10))
        worst["ewc_penalty"] = max(worst["ewc_penalty"], check_penalty(w, random_anchors(rng, w, 3), lam))
        worst["ewcpp_penalty"] = max(
            worst["ewcpp_penalty"], check_penalty(w, random_anchors(rng, w, 3, gamma=0.5), lam)
        )
    return worst

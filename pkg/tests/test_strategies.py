import numpy as np
import pytest

from twinsync.episodes import EpisodeDataset, make_episode, make_synthetic
from twinsync.errors import ConfigError, EmptyInputError, ShapeError
from twinsync.nn import LayerSpec, ModelWeights, TrainConfig, init_weights, loss_and_grad
from twinsync.strategies import (
    EWC,
    MOVING_AVERAGE,
    Anchor,
    EWCPlusPlus,
    FisherDiagonal,
    RegConfig,
    ewc_penalty,
    ewcpp_fisher_update,
    fisher_diagonal,
    make_strategy,
)
from twinsync.sync import FIXED, ObjectiveConfig, SyncParams, train_episode


def log_lik(values, spec, x, y):
    loss, _ = loss_and_grad(ModelWeights(values, spec), x[None, :], np.array([y]))
    return -loss


def test_fisher_single_sample_matches_finite_differences():
    # (1, 1, 2) net: 6 parameters, one sample; F_d = (d log p / d w_d)^2
    spec = LayerSpec((1, 1, 2))
    w = ModelWeights(np.array([0.8, 0.3, -0.5, 0.6, 0.2, -0.1]), spec)
    x, y = np.array([0.7]), 1
    ep = EpisodeDataset(0, x[None, :], np.array([y]), 0, np.arange(1))
    F = fisher_diagonal(w, ep)
    h = 1e-5
    expect = np.zeros(6)
    for d in range(6):
        e = np.zeros(6)
        e[d] = h
        expect[d] = ((log_lik(w.values + e, spec, x, y) - log_lik(w.values - e, spec, x, y)) / (2 * h)) ** 2
    np.testing.assert_allclose(F.values, expect, rtol=1e-6, atol=1e-12)
    assert F.episode_index == 0


def test_fisher_is_mean_of_per_sample_squares_and_duplication_invariant():
    rng = np.random.default_rng(0)
    spec = LayerSpec((3, 4, 3))
    w = init_weights(spec, 1)
    x, y = rng.uniform(size=(5, 3)), rng.integers(0, 3, 5)
    per = []
    for i in range(5):
        _, g = loss_and_grad(w, x[i:i + 1], y[i:i + 1])
        per.append(g ** 2)
    ep = EpisodeDataset(2, x, y, 0, np.arange(3))
    F = fisher_diagonal(w, ep)
    np.testing.assert_allclose(F.values, np.mean(per, axis=0), rtol=1e-12, atol=1e-18)
    assert np.all(F.values >= 0)
    dup = EpisodeDataset(2, np.vstack([x, x]), np.concatenate([y, y]), 0, np.arange(3))
    np.testing.assert_allclose(fisher_diagonal(w, dup).values, F.values, rtol=1e-12, atol=1e-18)


def test_fisher_rejects_empty_data():
    spec = LayerSpec((2, 2, 2))
    ep = EpisodeDataset(0, np.zeros((0, 2)), np.zeros(0, dtype=np.int64), 0, np.arange(2))
    with pytest.raises(EmptyInputError):
        fisher_diagonal(init_weights(spec, 0), ep)


def test_fisher_diagonal_rejects_negative_entries():
    with pytest.raises(ValueError):
        FisherDiagonal(np.array([1.0, -0.1]), 0)


def test_penalty_hand_example():
    spec = LayerSpec((1, 1, 2))
    fisher = np.zeros(6)
    fisher[0] = 2.0
    star = np.zeros(6)
    w = ModelWeights(np.array([3.0, 0, 0, 0, 0, 0]), spec)
    anchors = [Anchor(ModelWeights(star, spec), FisherDiagonal(fisher, 0))]
    value, grad = ewc_penalty(w, anchors, 4.0)
    assert value == 36.0
    assert grad[0] == 24.0 and np.all(grad[1:] == 0)


def test_penalty_zero_cases_and_shape_error():
    spec = LayerSpec((1, 1, 2))
    rng = np.random.default_rng(0)
    w = ModelWeights(rng.standard_normal(6), spec)
    anchors = [Anchor(w.copy(), FisherDiagonal(rng.uniform(size=6), 0))]
    assert ewc_penalty(w, anchors, 5.0)[0] == 0.0
    value, grad = ewc_penalty(ModelWeights(w.values + 1, spec), anchors, 0.0)
    assert value == 0.0 and np.all(grad == 0)
    bad = [Anchor(ModelWeights(np.zeros(12), LayerSpec((2, 2, 2))), FisherDiagonal(np.ones(12), 0))]
    with pytest.raises(ShapeError):
        ewc_penalty(w, bad, 1.0)


def test_moving_average_examples():
    a = FisherDiagonal(np.array([2.0, 4.0]), 3)
    b = FisherDiagonal(np.array([0.0, 2.0]), 2, MOVING_AVERAGE)
    np.testing.assert_array_equal(ewcpp_fisher_update(a, b, 0.5).values, [1.0, 3.0])
    np.testing.assert_array_equal(ewcpp_fisher_update(a, b, 1.0).values, a.values)
    np.testing.assert_array_equal(ewcpp_fisher_update(a, b, 0.0).values, b.values)
    assert ewcpp_fisher_update(a, b, 0.5).episode_index == 3
    with pytest.raises(ShapeError):
        ewcpp_fisher_update(a, FisherDiagonal(np.ones(3), 0), 0.5)


def test_moving_average_stays_in_elementwise_interval():
    rng = np.random.default_rng(5)
    for _ in range(50):
        a = FisherDiagonal(rng.exponential(size=8), 1)
        b = FisherDiagonal(rng.exponential(size=8), 0)
        g = rng.uniform()
        v = ewcpp_fisher_update(a, b, g).values
        assert np.all(v >= np.minimum(a.values, b.values) - 1e-15)
        assert np.all(v <= np.maximum(a.values, b.values) + 1e-15)


def test_reg_config_validation():
    with pytest.raises(ValueError):
        RegConfig(lam=-1)
    with pytest.raises(ValueError):
        RegConfig(gamma=1.5)
    with pytest.raises(ConfigError):
        make_strategy("replay")


@pytest.fixture(scope="module")
def episodes():
    base = make_synthetic(0, 4, 8, 400)
    return [make_episode(base, k, 0, 60) for k in range(4)]


SPEC = LayerSpec((8, 6, 4))


def run_strategy(name, episodes, reg=RegConfig(lam=5.0, gamma=0.5), iters=15):
    s = make_strategy(name, reg)
    w = init_weights(SPEC, 0)
    reports = []
    for ep in episodes:
        r = train_episode(s, ep, w, TrainConfig(0.2, iters, 0), ObjectiveConfig(1.0), SyncParams(), mode=FIXED)
        w = r.weights
        s.end_of_episode(w, ep)
        reports.append(r)
    return s, reports


def test_episode_zero_identical_for_all_strategies(episodes):
    ref = None
    for name in ("exhaustive", "single-task", "ewc", "ewcpp"):
        _, (r,) = run_strategy(name, episodes[:1])
        sig = (r.weights.values.tobytes(), np.array(r.losses).tobytes())
        ref = ref or sig
        assert sig == ref


def test_ewc_with_zero_lambda_matches_single_task_bitwise(episodes):
    _, ewc = run_strategy("ewc", episodes, RegConfig(lam=0.0))
    _, single = run_strategy("single-task", episodes)
    for a, b in zip(ewc, single):
        assert a.weights.values.tobytes() == b.weights.values.tobytes()
        assert np.array(a.losses).tobytes() == np.array(b.losses).tobytes()


def test_exhaustive_loss_on_two_equal_episodes_is_mean_of_halves(episodes):
    s = make_strategy("exhaustive")
    w = init_weights(SPEC, 3)
    s.end_of_episode(w, episodes[0])
    total = s.episode_loss(w, episodes[1]).total
    l0, _ = loss_and_grad(w, episodes[0].x, episodes[0].y)
    l1, _ = loss_and_grad(w, episodes[1].x, episodes[1].y)
    assert total == pytest.approx((l0 + l1) / 2, rel=1e-13)
    assert s.training_size(episodes[1]) == 120


def test_exhaustive_rejects_out_of_order_episode(episodes):
    s = make_strategy("exhaustive")
    with pytest.raises(ConfigError):
        s.episode_loss(init_weights(SPEC, 0), episodes[2])


def test_anchor_counts(episodes):
    ewc, _ = run_strategy("ewc", episodes, iters=3)
    pp, _ = run_strategy("ewcpp", episodes, iters=3)
    ex, _ = run_strategy("exhaustive", episodes, iters=3)
    assert len(ewc.anchors) == 4
    assert len(pp.anchors) == 1 and pp.anchor.fisher.episode_index == 3
    assert ex.history_summary()["samples"] == 240
    assert [a["episode"] for a in ewc.history_summary()["anchors"]] == [0, 1, 2, 3]


def test_ewc_data_term_uses_current_episode_only(episodes):
    s = make_strategy("ewc", RegConfig(lam=3.0))
    w = init_weights(SPEC, 1)
    s.end_of_episode(w, episodes[0])
    w2 = ModelWeights(w.values + 0.05, SPEC)
    out = s.episode_loss(w2, episodes[1])
    data, _ = loss_and_grad(w2, episodes[1].x, episodes[1].y)
    assert out.data == data
    assert out.total == pytest.approx(data + out.penalty, rel=1e-15)
    assert out.penalty > 0


def test_ewcpp_gamma_one_equals_latest_anchor_ewc(episodes):
    reg = RegConfig(lam=4.0, gamma=1.0)
    pp = make_strategy("ewcpp", reg)
    ewc = make_strategy("ewc", reg)
    rng = np.random.default_rng(9)
    for ep in episodes[:3]:
        w = ModelWeights(init_weights(SPEC, ep.index).values, SPEC)
        pp.end_of_episode(w, ep)
        ewc.end_of_episode(w, ep)
    probe = ModelWeights(rng.standard_normal(SPEC.n_params), SPEC)
    a, ga = pp.penalty(probe)
    b, gb = ewc_penalty(probe, ewc.anchors[-1:], reg.lam)
    assert a == pytest.approx(b, rel=1e-12)
    np.testing.assert_allclose(ga, gb, rtol=1e-12)


def test_first_ewcpp_anchor_uses_episode_fisher(episodes):
    pp = make_strategy("ewcpp", RegConfig(lam=1.0, gamma=0.5))
    w = init_weights(SPEC, 2)
    pp.end_of_episode(w, episodes[0])
    np.testing.assert_array_equal(pp.anchor.fisher.values, fisher_diagonal(w, episodes[0]).values)
    assert pp.anchor.fisher.kind == MOVING_AVERAGE
    assert isinstance(pp, EWCPlusPlus) and not isinstance(pp, EWC)

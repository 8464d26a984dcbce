import numpy as np
import pytest
from hypothesis import given, strategies as st

from mckcca.bank import KccaConfig
from mckcca.descriptor import ALL_CHANNELS
from mckcca.errors import AllChannelsDropped, TooFewIdentities
from mckcca.fusion import (FusionWeights, add_bias, build_training_profiles, fit_filtered,
                           fit_logistic, fold_split, gradient, match_probability, objective,
                           rank_gallery)
from mckcca.kernels import KernelKind


def profiles(rng, n, k, informative=(), adversarial=(), pos_rate=0.2):
    """Random distance profiles with chosen entries tied to the label."""
    y = np.where(rng.random(n) < pos_rate, 1, -1)
    y[:2] = (1, -1)
    D = rng.uniform(0.3, 1.2, (n, k))
    pos = y > 0
    for j in informative:
        D[pos, j] -= 0.25
    for j in adversarial:
        D[pos, j] += 0.35
    return add_bias(np.clip(D, 0, 2)), y


def finite_difference(f, r, h=1e-6):
    g = np.zeros_like(r)
    for i in range(r.size):
        e = np.zeros_like(r)
        e[i] = h
        g[i] = (f(r + e) - f(r - e)) / (2 * h)
    return g


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n, k = rng.integers(5, 200), rng.integers(1, 81)
    D, y = profiles(rng, n, k)
    r = rng.normal(0, 0.5, D.shape[1])
    C = rng.uniform(0.1, 3)
    num = finite_difference(lambda v: objective(v, D, y, C), r)
    ana = gradient(r, D, y, C)
    assert np.linalg.norm(ana - num) <= 1e-5 * np.linalg.norm(num)


def test_zero_penalty_gives_zero_weights(rng):
    D, y = profiles(rng, 50, 4)
    w = fit_logistic(D, y, C=0.0)
    np.testing.assert_array_equal(w.r, 0.0)


def test_separable_toy_data():
    d = np.array([0.1, 0.2, 0.3, 1.1, 1.2, 1.3])
    y = np.array([1, 1, 1, -1, -1, -1])
    D = add_bias(d[:, None])
    w = fit_logistic(D, y, C=1.0)
    assert np.all(np.isfinite(w.r)) and w.converged
    assert w.r[0] < 0
    reg_only = objective(np.zeros(2), D, y, 1.0)
    assert objective(w.r, D, y, 1.0) < reg_only


def test_objective_trace_is_monotone(rng):
    D, y = profiles(rng, 300, 20, informative=range(5))
    w = fit_logistic(D, y, C=5.0)
    trace = np.array(w.info["objective_trace"])
    assert np.all(np.diff(trace) <= 1e-12)
    assert np.linalg.norm(gradient(w.r, D, y, 5.0)) <= 1e-6


def test_balanced_weights_change_fit(rng):
    D, y = profiles(rng, 200, 5, informative=[0])
    plain = fit_logistic(D, y, 1.0)
    bal = fit_logistic(D, y, 1.0, balanced=True)
    assert not np.allclose(plain.r, bal.r)


def test_filtering_drops_adversarial_entry(rng):
    D, y = profiles(rng, 400, 10, informative=range(1, 10), adversarial=[0])
    w = fit_filtered(D, y, 1.0)
    assert not w.active_mask[0]
    assert w.active_mask[-1]
    assert np.all(w.r[:-1][w.active_mask[:-1]] <= 0)
    assert any(0 in dropped for _, dropped in w.history)
    assert not w.capped


def test_filtering_well_behaved_data_drops_nothing(rng):
    D, y = profiles(rng, 400, 6, informative=range(6))
    w = fit_filtered(D, y, 1.0)
    assert w.history == ()
    assert w.active_mask.all()
    plain = fit_logistic(D, y, 1.0)
    np.testing.assert_allclose(w.r, plain.r)


def test_filtering_is_idempotent(rng):
    D, y = profiles(rng, 300, 12, informative=range(6), adversarial=[7, 9])
    w = fit_filtered(D, y, 1.0)
    keep = w.active_mask
    again = fit_filtered(D[:, keep], y, 1.0)
    assert again.history == ()
    assert again.active_mask.all()


def test_filtering_all_dropped(rng):
    D, y = profiles(rng, 200, 3, adversarial=range(3))
    with pytest.raises(AllChannelsDropped):
        fit_filtered(D, y, 1.0)


def test_filtering_cap_is_flagged(rng):
    D, y = profiles(rng, 300, 8, informative=range(4), adversarial=range(4, 8))
    with pytest.warns(RuntimeWarning):
        w = fit_filtered(D, y, 1.0, max_rounds=0)
    assert w.capped


def test_match_probability():
    w = FusionWeights(np.array([-2.0, 0.5, 1.0]), np.array([True, False, True]), 1.0)
    assert match_probability(w, [0.5, 7.0, 1.0]) == 0.5
    w20 = FusionWeights(np.array([-10.0, 0.0]), np.ones(2, bool), 1.0)
    assert match_probability(w20, [-2.0, 0.0]) == pytest.approx(1 - 2.061e-9, abs=1e-12)


def test_match_probability_random(rng):
    r = rng.standard_normal(9)
    mask = rng.random(9) < 0.7
    mask[-1] = True
    d = rng.random(9)
    w = FusionWeights(r, mask, 1.0)
    s = sum(ri * di for ri, di, m in zip(r, d, mask) if m)
    assert match_probability(w, d) == pytest.approx(1 / (1 + np.exp(-s)), abs=1e-15)


def test_rank_gallery_ties():
    w = FusionWeights(np.array([1.0, 0.0]), np.ones(2, bool), 1.0)
    d = add_bias(np.log(np.array([0.2, 0.9, 0.9]) / (1 - np.array([0.2, 0.9, 0.9])))[:, None])
    assert rank_gallery(w, d).tolist() == [1, 2, 0]
    assert rank_gallery(w, d[:1]).tolist() == [0]


def naive_rank(scores):
    return sorted(range(len(scores)), key=lambda j: (-scores[j], j))


grid = st.lists(st.integers(-5, 5).map(lambda v: v / 4), min_size=1, max_size=30)


@given(grid, st.integers(-8, 8).map(lambda v: v / 2))
def test_rank_gallery_oracle_and_shift_invariance(dist, shift):
    d = np.array(dist)[:, None]
    w = FusionWeights(np.array([-1.0, 0.5]), np.ones(2, bool), 1.0)
    shifted = FusionWeights(np.array([-1.0, 0.5 + shift]), np.ones(2, bool), 1.0)
    order = rank_gallery(w, add_bias(d))
    assert order.tolist() == naive_rank((-d[:, 0] + 0.5).tolist())
    assert rank_gallery(shifted, add_bias(d)).tolist() == order.tolist()


def test_fold_split_covers_all():
    a, b = fold_split(7, seed=1)
    assert len(a) == 3 and len(b) == 4
    assert sorted(np.concatenate([a, b])) == list(range(7))


def tiny_features(rng, n, channels):
    base = rng.random((n, 6))
    return ({ch: base + 0.05 * rng.random((n, 6)) for ch in channels},
            {ch: base + 0.05 * rng.random((n, 6)) for ch in channels})


@pytest.mark.parametrize("n,expected", [(4, 8), (10, 50)])
def test_training_profile_counts(rng, n, expected):
    channels = ALL_CHANNELS[:2]
    a, b = tiny_features(rng, n, channels)
    D, y, layout = build_training_profiles(a, b, KccaConfig(kernels=(KernelKind.Linear,)))
    assert D.shape == (expected, layout.size)
    assert np.sum(y == 1) == n
    assert np.all(D[:, -1] == 1.0)
    assert np.all((D[:, :-1] >= 0) & (D[:, :-1] <= 2))


def test_training_profile_count_hundred(rng):
    channels = ALL_CHANNELS[:1]
    a, b = tiny_features(rng, 100, channels)
    D, y, _ = build_training_profiles(a, b, KccaConfig(kernels=(KernelKind.Linear,)))
    assert D.shape[0] == 5000
    assert np.sum(y == 1) == 100


def test_too_few_identities(rng):
    a, b = tiny_features(rng, 3, ALL_CHANNELS[:1])
    with pytest.raises(TooFewIdentities):
        build_training_profiles(a, b)


def test_profile_layout_order(rng):
    a, b = tiny_features(rng, 6, ALL_CHANNELS)
    _, _, layout = build_training_profiles(a, b, KccaConfig())
    assert layout.n_entries == 80 and layout.size == 81
    names = layout.names()
    assert names[:4] == ["HS_full/Linear", "HS_full/Rbf", "HS_full/Chi2", "HS_full/ExpChi2"]
    assert names[-1] == "bias"
    for i, (ch, k) in enumerate(layout.entries):
        assert layout.index(ch, k) == i

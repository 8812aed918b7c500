import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zodc.privacy import (DEFAULT_ORDERS, DpConfig, DpLedger, PrivacyError, account_step,
                          clip_per_example, epsilon_curve, membership_advantage_bound,
                          noise_gradient, rdp_subsampled_gaussian, select_sigma,
                          to_epsilon_delta)


def mp_rdp(q, sigma, alpha):
    """Binomial-sum RDP bound evaluated with 60 significant digits."""
    with mpmath.workdps(60):
        q, s = mpmath.mpf(q), mpmath.mpf(sigma)
        total = mpmath.fsum(mpmath.binomial(alpha, k) * (1 - q) ** (alpha - k) * q**k
                            * mpmath.exp(k * (k - 1) / (2 * s**2)) for k in range(alpha + 1))
        return float(mpmath.log(total) / (alpha - 1))


# ---------------------------------------------------------------- release


def test_clip_examples():
    g = np.array([[6.0, 8.0], [0.3, 0.4], [0.0, 0.0]])
    out = clip_per_example(g, 1.0)
    np.testing.assert_allclose(out[0], [0.6, 0.8])
    np.testing.assert_array_equal(out[1:], g[1:])


@settings(max_examples=200)
@given(st.integers(0, 100_000), st.floats(1e-3, 10))
def test_clip_bounds_norm(seed, C):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((5, 4)) * rng.exponential(3, (5, 1))
    out = clip_per_example(G, C)
    assert np.all(np.linalg.norm(out, axis=1) <= C * (1 + 1e-12))
    # direction preserved
    cos = np.sum(out * G, axis=1) / (np.linalg.norm(out, axis=1) * np.linalg.norm(G, axis=1))
    np.testing.assert_allclose(cos, 1.0)


def test_clip_sensitivity_on_adjacent_pairs(rng):
    C = 0.5
    for _ in range(100):
        g, g_adj = rng.standard_normal(6) * 10, rng.standard_normal(6) * 10
        a = clip_per_example(g[None], C)[0]
        b = clip_per_example(g_adj[None], C)[0]
        # replacing one record moves its released row by at most 2C, removing it by at most C
        assert np.linalg.norm(a - b) <= 2 * C + 1e-12
        assert np.linalg.norm(a) <= C + 1e-12


def test_select_sigma_examples():
    cfg = DpConfig(sigma_base=1.0)
    sig, step = select_sigma(np.array([1.0]), 1.0, 16, cfg)
    assert sig[0] == 0.25 and step == 0.25
    sig, _ = select_sigma(np.array([1.0]), 1.0, 1, cfg)
    assert sig[0] == 1.0
    sig, _ = select_sigma(np.array([0.0]), 1.0, 4, DpConfig(sigma_base=8.0))
    assert sig[0] == 2.0
    sig, step = select_sigma(np.array([1.0, 0.3, 0.0]), 1.0, 1, cfg)
    np.testing.assert_array_equal(sig, [1.0, 0.25, 0.25])
    assert step == 0.25


@given(st.lists(st.floats(0, 10), min_size=1, max_size=8), st.integers(1, 30),
       st.floats(0.1, 10))
def test_select_sigma_is_largest_feasible(norms, d, base):
    cfg = DpConfig(sigma_base=base)
    grid = np.asarray(cfg.sigma_grid_multipliers) * base
    sig, step = select_sigma(np.asarray(norms), 1.0, d, cfg)
    for n, s in zip(norms, sig):
        feasible = grid[n / (grid * math.sqrt(d)) >= 1]
        assert s == (feasible.max() if feasible.size else grid[0])
    assert step == sig.min()


def test_noise_zero_sigma_identity(rng):
    G = rng.standard_normal((3, 4))
    np.testing.assert_array_equal(noise_gradient(G, np.zeros(3), 1.0, 0), G)


def test_noise_std_and_determinism():
    G = np.zeros((2, 50_000))
    out = noise_gradient(G, np.array([0.5, 2.0]), 0.3, noise_seed=7, step=3)
    np.testing.assert_allclose(out.std(axis=1), [0.15, 0.6], rtol=0.02)
    again = noise_gradient(G, np.array([0.5, 2.0]), 0.3, noise_seed=7, step=3)
    assert out.tobytes() == again.tobytes()
    other = noise_gradient(G, np.array([0.5, 2.0]), 0.3, noise_seed=7, step=4)
    assert not np.array_equal(out, other)


def test_noise_row_keyed(rng):
    G = np.zeros((4, 3))
    full = noise_gradient(G, np.ones(4), 1.0, 1, 0)
    # a row's noise depends on its index only, not on the other rows
    np.testing.assert_array_equal(noise_gradient(G[:2], np.ones(2), 1.0, 1, 0), full[:2])


def test_dp_config_validation():
    with pytest.raises(PrivacyError):
        DpConfig(sigma_grid_multipliers=(0.5, 1.0))
    with pytest.raises(PrivacyError):
        DpConfig(sigma_grid_multipliers=(0.25, 1.0, 0.5))
    with pytest.raises(PrivacyError):
        DpConfig(delta=1.0)
    with pytest.raises(PrivacyError):
        DpConfig(rdp_orders=(1.0, 2.0))
    with pytest.raises(PrivacyError):
        DpConfig(clip_norm=0)


# ---------------------------------------------------------------- RDP


def test_default_orders():
    assert DEFAULT_ORDERS[0] == 1.5 and DEFAULT_ORDERS[-3:] == (96, 128, 256)
    assert set(range(2, 65)) <= set(DEFAULT_ORDERS)


def test_full_batch_closed_form():
    assert rdp_subsampled_gaussian(1.0, 2.0, 8) == 1.0
    for a in DEFAULT_ORDERS:
        assert rdp_subsampled_gaussian(1.0, 1.3, a) == pytest.approx(a / (2 * 1.3**2), abs=1e-12)


@pytest.mark.parametrize("alpha", [2, 3, 8, 17, 32])
def test_subsampled_matches_mpmath(alpha):
    assert rdp_subsampled_gaussian(0.01, 1.0, alpha) == pytest.approx(mp_rdp(0.01, 1.0, alpha),
                                                                     rel=1e-9)


@settings(max_examples=30)
@given(st.floats(1e-4, 0.5), st.floats(0.5, 5.0), st.integers(2, 40))
def test_subsampled_matches_mpmath_random(q, sigma, alpha):
    assert rdp_subsampled_gaussian(q, sigma, alpha) == pytest.approx(mp_rdp(q, sigma, alpha),
                                                                     rel=1e-9, abs=1e-15)


def test_fractional_order_uses_ceiling():
    assert rdp_subsampled_gaussian(0.05, 1.0, 1.5) == rdp_subsampled_gaussian(0.05, 1.0, 2)
    assert rdp_subsampled_gaussian(0.05, 1.0, 7.2) == rdp_subsampled_gaussian(0.05, 1.0, 8)


def test_rdp_monotonicity():
    qs = [1e-4, 1e-3, 0.01, 0.1, 0.5, 1.0]
    sigmas = [0.5, 1.0, 2.0, 4.0]
    orders = [2, 4, 8, 16, 32, 64]
    for s in sigmas:
        for a in orders:
            vals = [rdp_subsampled_gaussian(q, s, a) for q in qs]
            assert all(v >= 0 for v in vals)
            assert np.all(np.diff(vals) >= -1e-15)
        for q in qs:
            vals = [rdp_subsampled_gaussian(q, s, a) for a in orders]
            assert np.all(np.diff(vals) >= -1e-15)
    for q in qs:
        for a in orders:
            vals = [rdp_subsampled_gaussian(q, s, a) for s in sigmas]
            assert np.all(np.diff(vals) <= 1e-15)


def test_small_q_limit():
    vals = [rdp_subsampled_gaussian(q, 1.0, 8) for q in (1e-1, 1e-2, 1e-3, 1e-4, 1e-6)]
    assert np.all(np.diff(vals) < 0) and vals[-1] < 1e-9


@pytest.mark.parametrize("bad", [(0.0, 1.0, 2), (1.5, 1.0, 2), (0.5, 0.0, 2), (0.5, 1.0, 1.0)])
def test_rdp_rejects_invalid(bad):
    with pytest.raises(PrivacyError):
        rdp_subsampled_gaussian(*bad)


# ---------------------------------------------------------------- ledger


def test_single_full_batch_step_epsilon():
    ledger = account_step(DpLedger(), 1.0, 1.0)
    rep = to_epsilon_delta(ledger, 1e-5)
    # independent grid search of a/2 + ln(1e5)/(a - 1)
    grid = np.linspace(1.0001, 300, 3_000_000)
    brute = np.min(grid / 2 + math.log(1e5) / (grid - 1))
    assert rep.epsilon == pytest.approx(5.30, abs=0.01)
    assert rep.epsilon >= brute - 1e-9
    assert rep.best_order == 6.0


def test_ledger_additive():
    one = account_step(DpLedger(), 0.02, 1.1)
    many = DpLedger()
    for _ in range(25):
        account_step(many, 0.02, 1.1)
    np.testing.assert_allclose(many.rdp, 25 * one.rdp, rtol=1e-12)
    assert many.steps_accounted == 25


def test_empty_ledger_report():
    rep = to_epsilon_delta(DpLedger(), 1e-5)
    assert rep.epsilon == 0.0 and rep.best_order is None and rep.steps_accounted == 0


@settings(max_examples=30)
@given(st.lists(st.tuples(st.sampled_from([0.001, 0.01, 0.1, 1.0]),
                          st.sampled_from([0.5, 1.0, 2.0])), min_size=1, max_size=12),
       st.integers(0, 12))
def test_ledger_merge_equals_sequential(steps, cut):
    a, b, whole = DpLedger(), DpLedger(), DpLedger()
    for i, (q, s) in enumerate(steps):
        account_step(a if i < cut else b, q, s)
        account_step(whole, q, s)
    merged = a.merge(b)
    np.testing.assert_allclose(merged.rdp, whole.rdp, rtol=1e-12)
    assert merged.steps_accounted == whole.steps_accounted


def test_ledger_cumulative_non_decreasing():
    ledger = DpLedger()
    prev = ledger.rdp.copy()
    for q, s in [(0.01, 1.0), (0.5, 3.0), (1.0, 0.7)]:
        account_step(ledger, q, s)
        assert np.all(ledger.rdp >= prev)
        prev = ledger.rdp.copy()


def test_conversion_properties():
    ledger = DpLedger()
    for _ in range(100):
        account_step(ledger, 0.01, 1.0)
    rep = to_epsilon_delta(ledger, 1e-5)
    orders = np.asarray(ledger.orders)
    per_order = ledger.rdp + math.log(1e5) / (orders - 1)
    assert rep.epsilon <= per_order.min() + 1e-12
    assert np.all(rep.epsilon <= per_order + 1e-12)
    doubled = DpLedger(ledger.orders, 2 * ledger.rdp, ledger.records * 2)
    assert to_epsilon_delta(doubled, 1e-5).epsilon > rep.epsilon
    assert to_epsilon_delta(ledger, 1.0).epsilon == pytest.approx(max(ledger.rdp.min(), 0.0))


def test_composed_epsilon_matches_mpmath():
    q, sigma, steps, delta = 0.01, 1.0, 2000, 1e-5
    orders = tuple(range(2, 65))
    ledger = DpLedger(orders)
    for _ in range(steps):
        account_step(ledger, q, sigma)
    oracle = min(steps * mp_rdp(q, sigma, a) + math.log(1 / delta) / (a - 1) for a in orders)
    assert to_epsilon_delta(ledger, delta).epsilon == pytest.approx(oracle, rel=1e-9)


@pytest.mark.parametrize("q,steps", [(0.002, 5000), (0.005, 5000), (0.01, 2000), (0.02, 500)])
def test_desk_scale_regime(q, steps):
    # sigma 1 with q*steps up to about 20 lands in the single-digit regime; larger
    # products (q=0.02 over 1000+ steps) exceed 4
    ledger = DpLedger()
    for _ in range(steps):
        account_step(ledger, q, 1.0)
    assert 0.5 <= to_epsilon_delta(ledger, 1e-5).epsilon <= 4.0


def test_ledger_round_trip_and_truncation():
    ledger = DpLedger()
    for i in range(10):
        account_step(ledger, 0.01 * (i + 1), 1.0 + 0.1 * i)
    back = DpLedger.from_dict(ledger.to_dict(1e-5))
    np.testing.assert_allclose(back.rdp, ledger.rdp, rtol=1e-12)
    part = ledger.truncated(4)
    assert part.steps_accounted == 4
    ref = DpLedger()
    for r in ledger.records[:4]:
        account_step(ref, r.q, r.noise_multiplier)
    np.testing.assert_array_equal(part.rdp, ref.rdp)
    curve = epsilon_curve(ledger, 1e-5, every=3)
    assert [s for s, _ in curve] == [3, 6, 9, 10]
    assert curve[-1][1] == pytest.approx(to_epsilon_delta(ledger, 1e-5).epsilon)
    assert np.all(np.diff([e for _, e in curve]) > 0)


def test_advantage_bound():
    # (e^eps - 1)/(e^eps + 1) is tanh(eps/2)
    assert membership_advantage_bound(2.5, 1e-5) == pytest.approx(math.tanh(1.25) + 1e-5, rel=1e-14)
    # the quoted 0.84830 carries five significant digits
    assert membership_advantage_bound(2.5, 1e-5) == pytest.approx(0.84830, abs=1e-5)
    assert membership_advantage_bound(0.0, 0.0) == 0.0

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtri

from zilda.errors import DataValidationError, DomainError
from zilda.latentcorr import (ClampWarning, PairKind, bridge_bt, bridge_inverse,
                              bridge_tt, estimate_latent_correlation,
                              estimate_thresholds, kendall_tau_a,
                              kendall_tau_matrix, latent_correlation,
                              project_to_correlation, validate_covariates)

from oracles import kendall_tau_a_bruteforce, mc_population_tau


# ---------------------------------------------------------------------------
# Kendall's tau


def test_tau_perfectly_concordant():
    x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    assert kendall_tau_a(x, 2 * x + 1) == 1.0
    assert kendall_tau_a(x, x) == 1.0


def test_tau_matches_bruteforce_with_ties():
    rng = np.random.default_rng(0)
    for _ in range(30):
        n = rng.integers(4, 40)
        x = rng.integers(0, 4, size=n)        # heavy ties incl. zeros
        y = rng.integers(0, 6, size=n)
        assert kendall_tau_a(x, y) == kendall_tau_a_bruteforce(x, y)


def test_tau_matrix_shape_and_label_checks():
    rng = np.random.default_rng(1)
    x = rng.gamma(2.0, size=(20, 3))
    y = rng.integers(0, 2, size=20)
    tau = kendall_tau_matrix(x, y)
    assert tau.shape == (4, 4)
    assert np.allclose(np.diag(tau), 1.0)
    assert np.array_equal(tau, tau.T)
    with pytest.raises(DataValidationError):
        kendall_tau_matrix(x, np.array([0, 1, 2] + [0] * 17))
    with pytest.raises(DataValidationError):
        kendall_tau_matrix(x[:1])


def test_tau_matrix_monotone_invariance():
    rng = np.random.default_rng(2)
    x = rng.gamma(2.0, size=(40, 4))
    x[rng.random(x.shape) < 0.3] = 0.0
    y = rng.integers(0, 2, size=40)
    base = kendall_tau_matrix(x, y)
    cubed = x.copy()
    cubed[:, 2] = cubed[:, 2] ** 3             # strictly increasing on [0, inf)
    assert np.array_equal(kendall_tau_matrix(cubed, y), base)


# ---------------------------------------------------------------------------
# thresholds


def test_thresholds_zero_free_column_clamped():
    x = np.abs(np.random.default_rng(3).normal(size=(100, 1))) + 0.1
    thr = estimate_thresholds(x)
    assert thr.pi_hat[0] == 0.0
    assert thr.delta[0] == ndtri(0.005)


def test_thresholds_thirty_percent_zeros():
    col = np.concatenate([np.zeros(30), np.linspace(1, 2, 70)])
    thr = estimate_thresholds(col[:, None])
    assert thr.pi_hat[0] == 0.3
    assert abs(thr.delta[0] - (-0.5244005127080407)) <= 1e-12


def test_all_zero_column_rejected_at_ingestion():
    x = np.zeros((50, 2))
    x[:, 1] = np.linspace(1, 2, 50)
    with pytest.raises(DataValidationError, match="x0"):
        validate_covariates(x)


def test_negative_and_nonfinite_rejected():
    good = np.linspace(1, 2, 10)[:, None]
    bad = good.copy()
    bad[3] = -1.0
    with pytest.raises(DataValidationError):
        validate_covariates(bad)
    bad = good.copy()
    bad[3] = np.nan
    with pytest.raises(DataValidationError):
        validate_covariates(bad)


# ---------------------------------------------------------------------------
# bridge functions


def test_bridges_vanish_at_zero():
    for dj in (-1.5, 0.0, 1.0):
        for dk in (-0.5, 0.5):
            assert abs(bridge_tt(0.0, dj, dk)) <= 1e-12
            assert abs(bridge_bt(0.0, dj, dk)) <= 1e-12


def test_bridge_domain_error():
    with pytest.raises(DomainError):
        bridge_tt(1.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        bridge_bt(-1.0 + 1e-9, 0.0, 0.0)


def test_tt_bridge_against_mc_oracle():
    cases = [(0.5, 0.0, 0.0, 11), (0.7, -0.5244, -0.5244, 12), (-0.6, 0.5, -1.0, 13)]
    for r, dj, dk, seed in cases:
        est, se = mc_population_tau(r, dj, dk, "tt", 400_000, seed)
        assert abs(bridge_tt(r, dj, dk) - est) <= 5 * se


def test_bt_bridge_against_mc_oracle():
    cases = [(0.5, 0.0, 0.0, 21), (0.7, 0.3, -0.5244, 22), (-0.6, -0.8, 0.5, 23)]
    for r, db, dt, seed in cases:
        est, se = mc_population_tau(r, db, dt, "bt", 400_000, seed)
        assert abs(bridge_bt(r, db, dt) - est) <= 5 * se


def test_tt_threshold_symmetry():
    rs = np.linspace(-0.9, 0.9, 13)
    assert np.max(np.abs(bridge_tt(rs, -0.4, 0.8) - bridge_tt(rs, 0.8, -0.4))) <= 1e-12


def test_tt_sign_asymmetry_is_real():
    # truncation breaks the r -> -r mirror; certified against the MC oracle
    plus = bridge_tt(0.6, 0.7, 0.7)
    minus = bridge_tt(-0.6, 0.7, 0.7)
    est_p, se_p = mc_population_tau(0.6, 0.7, 0.7, "tt", 400_000, 31)
    est_m, se_m = mc_population_tau(-0.6, 0.7, 0.7, "tt", 400_000, 32)
    assert abs(plus - est_p) <= 5 * se_p
    assert abs(minus - est_m) <= 5 * se_m
    assert plus + minus > 10 * (se_p + se_m)   # genuinely asymmetric


def test_bt_sign_flip_identities():
    rs = np.linspace(-0.9, 0.9, 13)
    # antisymmetric in r at a balanced (zero) label threshold
    assert np.max(np.abs(bridge_bt(-rs, 0.0, 0.6) + bridge_bt(rs, 0.0, 0.6))) <= 1e-9
    # general identity: flipping r is equivalent to negating the label threshold
    lhs = bridge_bt(-rs, 0.8, -0.3)
    rhs = -bridge_bt(rs, -0.8, -0.3)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9


@pytest.mark.parametrize("kind", ["tt", "bt"])
def test_bridge_strictly_monotone(kind):
    fn = bridge_tt if kind == "tt" else bridge_bt
    rs = np.linspace(-0.97, 0.97, 50)
    for dj, dk in [(-1.5, -1.5), (0.0, 0.0), (1.2, -0.3)]:
        vals = fn(rs, dj, dk)
        assert np.all(np.diff(vals) > 0.0)


# ---------------------------------------------------------------------------
# inversion


def test_inverse_of_zero_is_zero():
    assert bridge_inverse(0.0, -0.5, 0.7, PairKind.TT) == 0.0
    assert bridge_inverse(0.0, 0.0, 0.7, PairKind.BT) == 0.0


def test_inverse_roundtrip_spot():
    for r in (-0.9, -0.5, 0.0, 0.5, 0.9):
        for d in (-1.0, 0.0, 1.0):
            tau = bridge_tt(r, d, d)
            back = bridge_inverse(tau, d, d, PairKind.TT)
            assert abs(back - r) <= 1e-6


def test_inverse_value_contract():
    tau = 0.31
    r = bridge_inverse(tau, -0.6, 0.2, PairKind.TT)
    assert abs(bridge_tt(r, -0.6, 0.2) - tau) <= 1e-8
    r = bridge_inverse(-0.22, 0.1, 0.4, PairKind.BT)
    assert abs(bridge_bt(r, 0.1, 0.4) - (-0.22)) <= 1e-8


def test_inverse_clamps_out_of_range_tau():
    with pytest.warns(ClampWarning):
        r = bridge_inverse(0.999, 1.0, 1.0, PairKind.TT)
    assert abs(r) <= 1.0 - 1e-5 + 1e-12
    assert r > 0.99


def test_cc_fallback_matches_tt():
    r1 = bridge_inverse(0.4, -2.5, -2.5, PairKind.TT)
    r2 = bridge_inverse(0.4, -2.5, -2.5, PairKind.CC_FALLBACK)
    assert r1 == r2


# ---------------------------------------------------------------------------
# matrix assembly


def test_psd_projection_is_identity_on_psd_input():
    m = np.array([[1.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 1.0]])
    out = project_to_correlation(m)
    assert np.array_equal(out, (m + m.T) / 2.0)


def test_psd_projection_repairs_indefinite_matrix():
    m = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])
    assert np.linalg.eigvalsh(m)[0] < 0
    out = project_to_correlation(m)
    assert np.linalg.eigvalsh(out)[0] >= -1e-12
    assert np.allclose(np.diag(out), 1.0)
    assert np.array_equal(out, out.T)


def _simulate_joint(n, sigma, delta, seed, label_delta=None):
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(sigma)
    z = rng.standard_normal((n, sigma.shape[0])) @ chol.T
    if label_delta is None:
        return np.where(z > delta, np.exp(z), 0.0)
    y = (z[:, 0] > label_delta).astype(int)
    x = np.where(z[:, 1:] > delta, np.exp(z[:, 1:]), 0.0)
    return x, y


def test_estimate_identity_latents():
    x = _simulate_joint(4000, np.eye(3), ndtri(0.3), seed=7)
    est = latent_correlation(x)
    off = est.sigma[np.triu_indices(3, 1)]
    assert np.max(np.abs(off)) <= 0.08


def test_estimate_recovers_truncated_pair():
    sigma = np.array([[1.0, 0.7], [0.7, 1.0]])
    x = _simulate_joint(8000, sigma, ndtri(0.3), seed=8)
    est = latent_correlation(x)
    assert abs(est.sigma[0, 1] - 0.7) <= 0.05


def test_estimate_joint_properties():
    sigma = np.array([[1.0, 0.5, 0.35, 0.25],
                      [0.5, 1.0, 0.5, 0.35],
                      [0.35, 0.5, 1.0, 0.5],
                      [0.25, 0.35, 0.5, 1.0]])
    x, y = _simulate_joint(1500, sigma, ndtri(0.3), seed=9, label_delta=0.0)
    est = estimate_latent_correlation(x, y)
    assert est.sigma.shape == (4, 4)
    assert np.array_equal(est.sigma, est.sigma.T)
    assert np.allclose(np.diag(est.sigma), 1.0)
    assert np.linalg.eigvalsh(est.sigma)[0] >= est.nu / 2
    assert est.sigma21.shape == (3,)
    assert est.sigma22.shape == (3, 3)
    assert abs(est.label_threshold - ndtri(np.mean(y == 0))) <= 1e-12


def test_estimate_propagates_column_name_in_errors():
    x = np.ones((30, 2))
    x[:, 0] = np.linspace(1, 2, 30)
    y = np.r_[np.zeros(15), np.ones(15)].astype(int)
    with pytest.raises(DataValidationError, match="bad_col"):
        estimate_latent_correlation(x, y, column_names=["ok", "bad_col"])


@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
@settings(max_examples=10, deadline=None)
def test_tau_matrix_invariance_property(seed):
    rng = np.random.default_rng(seed)
    x = rng.gamma(1.5, size=(25, 3))
    x[rng.random(x.shape) < 0.4] = 0.0
    if np.any(x.max(axis=0) == x.min(axis=0)):
        return
    base = kendall_tau_matrix(x)
    transformed = np.sqrt(x) * 3.0            # strictly increasing, keeps zeros
    assert np.array_equal(kendall_tau_matrix(transformed), base)

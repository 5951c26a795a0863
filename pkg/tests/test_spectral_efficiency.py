import numpy as np
import pytest

from cfmimo.channel import draw_realization, make_pilot_book
from cfmimo.power_control import equal_power_allocation
from cfmimo.precoder import build_precoders
from cfmimo.spectral_efficiency import (downlink_receive, prelog_factor, regression_sinr,
                                        se_from_sinr, sinr_fpzf_closed_form, sinr_monte_carlo)

from conftest import make_drop


def mrt_oracle(beta, gamma, rho, same, M):
    """Textbook MRT bound with h_hat / sqrt(M gamma) precoding, written loop by loop."""
    L, K = beta.shape
    out = np.zeros(K)
    for k in range(K):
        sig = M * np.sum(np.sqrt(rho[:, k] * gamma[:, k])) ** 2
        cop = 0.0
        for t in range(K):
            if t != k and same[k, t]:
                amp = np.sqrt(rho[:, t] / gamma[:, t]) * gamma[:, k] * beta[:, t] / beta[:, k]
                cop += M * np.sum(amp) ** 2
        out[k] = sig / (cop + beta[:, k] @ rho.sum(axis=1) + 1.0)
    return out


def fpzf_oracle(beta, gamma, rho, same, M, tau_p):
    L, K = beta.shape
    out = np.zeros(K)
    for k in range(K):
        amp = lambda t: np.sum(np.sqrt(rho[:, t] * gamma[:, k]))
        cop = sum(amp(t) ** 2 for t in range(K) if t != k and same[k, t])
        err = sum((beta[l, k] - gamma[l, k]) * rho[l].sum() for l in range(L))
        out[k] = (M - tau_p) * amp(k) ** 2 / ((M - tau_p) * cop + err + 1.0)
    return out


def random_rho(rng, L, K, p_max=0.2):
    rho = rng.uniform(0.0, 1.0, (L, K))
    return rho * (p_max * rng.uniform(0.3, 1.0, (L, 1)) / rho.sum(axis=1, keepdims=True))


def test_prelog_and_se():
    assert prelog_factor(0.5, 10, 200) == 0.475
    rep = se_from_sinr(np.array([0.0, 1.0, 3.0]), 0.5, 10, 200)
    np.testing.assert_allclose(rep.se, [0.0, 0.475, 0.95])
    with pytest.raises(ValueError):
        se_from_sinr(np.array([-1.0]), 0.5, 10, 200)


@pytest.mark.parametrize("seed", range(4))
def test_closed_form_matches_loop_oracle(seed, rng):
    cfg, scen, st = make_drop(L=4, M=7, K=6, tau_p=3, seed=seed)
    rho = random_rho(rng, cfg.L, cfg.K)
    ours = sinr_fpzf_closed_form(st, scen.beta, rho, scen.pilots, cfg.M, cfg.tau_p)
    ref = fpzf_oracle(scen.beta, st.gamma, rho, scen.pilots.same_pilot(), cfg.M, cfg.tau_p)
    np.testing.assert_allclose(ours, ref, rtol=1e-12)


def test_closed_form_input_checks(small_drop):
    cfg, scen, st = small_drop
    rho = np.full((cfg.L, cfg.K), 0.01)
    with pytest.raises(ValueError):
        sinr_fpzf_closed_form(st, scen.beta, rho, scen.pilots, cfg.tau_p, cfg.tau_p)
    with pytest.raises(ValueError):
        sinr_fpzf_closed_form(st, scen.beta, -rho, scen.pilots, cfg.M, cfg.tau_p)


@pytest.mark.parametrize("seed", range(3))
def test_fpzf_monte_carlo_terms(seed, rng):
    cfg, scen, st = make_drop(L=3, M=6, K=5, tau_p=2, seed=seed)
    rho = random_rho(rng, cfg.L, cfg.K)
    mc = sinr_monte_carlo("fpzf", scen, st, rho, 20000, seed=seed)
    # the coherent gain is deterministic given the estimate, so its mean is exact
    expected_cb = np.sqrt((cfg.M - cfg.tau_p) * st.gamma * rho).sum(axis=0)
    np.testing.assert_allclose(mc.terms.cb.real, expected_cb, rtol=0.02)
    cf = sinr_fpzf_closed_form(st, scen.beta, rho, scen.pilots, cfg.M, cfg.tau_p)
    assert np.all(np.abs(mc.sinr - cf) <= 4 * mc.half_width + 1e-3 * cf)


@pytest.mark.parametrize("seed", range(3))
def test_mrt_monte_carlo_matches_analytic(seed, rng):
    cfg, scen, st = make_drop(L=3, M=4, K=5, tau_p=2, seed=seed)
    rho = random_rho(rng, cfg.L, cfg.K)
    mc = sinr_monte_carlo("mmrt", scen, st, rho, 20000, seed=seed)
    ref = mrt_oracle(scen.beta, st.gamma, rho, scen.pilots.same_pilot(), cfg.M)
    assert np.all(np.abs(mc.sinr - ref) <= 4 * mc.half_width)


def test_single_antenna_mrt(rng):
    cfg, scen, st = make_drop(L=6, M=4, K=4, tau_p=2, seed=8)
    rho = random_rho(rng, cfg.L, cfg.K)
    mc = sinr_monte_carlo("smrt", scen, st, rho, 40000, seed=2, M=1)
    ref = mrt_oracle(scen.beta, st.gamma, rho, scen.pilots.same_pilot(), 1)
    assert np.all(np.abs(mc.sinr - ref) <= 4 * mc.half_width)


def test_perfect_csi_mrt(rng):
    cfg, scen, st = make_drop(L=3, M=4, K=4, tau_p=2, seed=5)
    rho = random_rho(rng, cfg.L, cfg.K)
    mc = sinr_monte_carlo("mmrt", scen, st, rho, 20000, seed=1, csi="perfect")
    b = scen.beta
    ref = cfg.M * np.sqrt(rho * b).sum(axis=0) ** 2 / (b.T @ rho.sum(axis=1) + 1.0)
    assert np.all(np.abs(mc.sinr - ref) <= 4 * mc.half_width)


def test_received_signal_regression_matches_bound(rng):
    """Simulate actual data transmission and read the SINR off the samples."""
    cfg, scen, st = make_drop(L=3, M=6, K=4, tau_p=2, seed=11)
    rho = random_rho(rng, cfg.L, cfg.K)
    n = 40000
    book = make_pilot_book(cfg.tau_p)
    real = draw_realization(scen, st, book, seed=7, blocks=n)
    pre = build_precoders("fpzf", real.h_hat, real.h_bar, st, cfg.M)
    q = (rng.standard_normal((n, cfg.K)) + 1j * rng.standard_normal((n, cfg.K))) / np.sqrt(2)
    y = downlink_receive(real.h, pre.per_ue(scen.pilots), rho, q, seed=3)
    est = regression_sinr(y, q)
    cf = sinr_fpzf_closed_form(st, scen.beta, rho, scen.pilots, cfg.M, cfg.tau_p)
    np.testing.assert_allclose(est, cf, rtol=0.05)


def test_monte_carlo_deterministic_and_validated(small_drop):
    cfg, scen, st = small_drop
    rho = equal_power_allocation(cfg.p_max_dl, cfg.L, cfg.K)
    a = sinr_monte_carlo("mmrt", scen, st, rho, 200, seed=4)
    b = sinr_monte_carlo("mmrt", scen, st, rho, 200, seed=np.random.SeedSequence(4))
    np.testing.assert_array_equal(a.sinr, b.sinr)
    assert a.n_batches == 30 and np.all(a.half_width > 0)
    with pytest.raises(ValueError):
        sinr_monte_carlo("mmrt", scen, st, rho, 1, seed=0)
    with pytest.raises(ValueError):
        sinr_monte_carlo("mmrt", scen, st, rho, 10, seed=0, csi="oracle")
    with pytest.raises(ValueError):
        sinr_monte_carlo("fpzf", scen, st, rho, 10, seed=0, csi="perfect")


def test_half_width_shrinks_with_blocks(small_drop):
    cfg, scen, st = small_drop
    rho = equal_power_allocation(cfg.p_max_dl, cfg.L, cfg.K)
    small = sinr_monte_carlo("fpzf", scen, st, rho, 1000, seed=1)
    large = sinr_monte_carlo("fpzf", scen, st, rho, 16000, seed=1)
    ratio = np.median(small.half_width / large.half_width)
    assert 2.5 < ratio < 6.5


def test_half_width_doubling_blocks(small_drop):
    cfg, scen, st = small_drop
    rho = equal_power_allocation(cfg.p_max_dl, cfg.L, cfg.K)
    ratios = []
    for s in range(8):
        a = sinr_monte_carlo("fpzf", scen, st, rho, 4000, seed=s).half_width
        b = sinr_monte_carlo("fpzf", scen, st, rho, 8000, seed=100 + s).half_width
        ratios.append(np.median(b / a))
    assert np.exp(np.mean(np.log(ratios))) == pytest.approx(1 / np.sqrt(2), rel=0.2)

import numpy as np
import pytest

from cfmimo.channel import (draw_realization, estimation_statistics, make_pilot_book,
                            mmse_estimate, receive_pilots, sample_channels)
from cfmimo.scenario import PilotAssignment

from conftest import make_drop


@pytest.mark.parametrize("basis", ["identity", "dft", "random"])
@pytest.mark.parametrize("tau_p", [1, 3, 8])
def test_pilot_book_orthogonal(basis, tau_p):
    book = make_pilot_book(tau_p, basis, seed=2)
    np.testing.assert_allclose(book.conj().T @ book, tau_p * np.eye(tau_p), atol=1e-12)


def test_pilot_book_rejects_bad_input():
    with pytest.raises(ValueError):
        make_pilot_book(0)
    with pytest.raises(ValueError):
        make_pilot_book(2, "hadamard")


def test_statistics_hand_computed():
    beta = np.array([[2.0, 3.0, 5.0]])
    pilots = PilotAssignment(index=[0, 1, 0], tau_p=2)
    st = estimation_statistics(beta, 0.5, pilots, 2)
    # pilot 0 is shared by UEs 0 and 2
    psi0 = 2 * 0.5 * (2 + 5) + 1
    psi1 = 2 * 0.5 * 3 + 1
    np.testing.assert_allclose(st.psi, [[psi0, psi1]])
    np.testing.assert_allclose(st.gamma, [[0.5 * 2 * 4 / psi0, 0.5 * 2 * 9 / psi1,
                                           0.5 * 2 * 25 / psi0]])
    np.testing.assert_allclose(st.c, np.sqrt(0.5) * beta / np.array([[psi0, psi1, psi0]]))
    assert np.all(st.gamma < beta)


def test_noiseless_pilots_superpose_copilot_channels(rng):
    beta = rng.uniform(0.5, 2.0, (2, 3))
    pilots = PilotAssignment(index=[0, 0, 1], tau_p=2)
    book = make_pilot_book(2, "dft")
    h = sample_channels(beta, 4, seed=1)
    y = receive_pilots(h, 0.3, pilots, book, noise=False)
    h_bar = y @ book
    np.testing.assert_allclose(h_bar[..., 0], 2 * np.sqrt(0.3) * (h[:, 0] + h[:, 1]), atol=1e-12)
    np.testing.assert_allclose(h_bar[..., 1], 2 * np.sqrt(0.3) * h[:, 2], atol=1e-12)


def test_channel_samples_validate_beta():
    with pytest.raises(ValueError):
        sample_channels(np.array([[1.0, 0.0]]), 2, seed=0)
    with pytest.raises(ValueError):
        sample_channels(np.array([[1.0, np.inf]]), 2, seed=0)


def test_copilot_estimates_parallel():
    cfg, scen, st = make_drop(L=3, M=5, K=5, tau_p=2, seed=4)
    real = draw_realization(scen, st, make_pilot_book(2, "random", seed=3), seed=9, blocks=20)
    idx = scen.pilots.index
    for k in range(cfg.K):
        for t in range(cfg.K):
            if idx[k] == idx[t]:
                lhs = real.h_hat[:, :, k] * st.c[:, t, None]
                rhs = real.h_hat[:, :, t] * st.c[:, k, None]
                scale = np.abs(lhs).max()
                assert np.abs(lhs - rhs).max() <= 1e-12 * scale


def test_estimate_and_error_statistics():
    cfg, scen, st = make_drop(L=2, M=4, K=4, tau_p=2, seed=2, area_side=120.0)
    real = draw_realization(scen, st, make_pilot_book(2), seed=5, blocks=20000)
    err = real.h - real.h_hat
    var_hat = np.mean(np.abs(real.h_hat) ** 2, axis=(0, 3))
    var_err = np.mean(np.abs(err) ** 2, axis=(0, 3))
    np.testing.assert_allclose(var_hat / st.gamma, 1.0, atol=0.05)
    np.testing.assert_allclose(var_err / (scen.beta - st.gamma), 1.0, atol=0.05)
    # orthogonality principle: estimate and error uncorrelated
    corr = np.mean(real.h_hat.conj() * err, axis=(0, 3))
    assert np.all(np.abs(corr) < 0.03 * np.sqrt(st.gamma * (scen.beta - st.gamma)))


def test_mmse_estimate_uses_pilot_column():
    _, scen, st = make_drop(seed=1)
    real = draw_realization(scen, st, make_pilot_book(2), seed=0)
    h_hat, h_bar = mmse_estimate(real.y_pilot, st, scen.pilots, make_pilot_book(2))
    k = 1
    i = scen.pilots.index[k]
    np.testing.assert_allclose(h_hat[:, k], st.c[:, k, None] * h_bar[:, :, i])

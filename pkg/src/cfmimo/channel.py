"""I.i.d. Rayleigh block fading, uplink pilot reception and MMSE estimation.

Array layout: channels are ``(..., L, K, M)``, pilot observations and the
pilot-space matrices are ``(..., L, M, tau_p)``.  Any leading axes index
independent coherence blocks, so a batch of blocks is handled in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import PilotAssignment, Scenario


@dataclass
class EstimationStats:
    c: np.ndarray       # (L, K) MMSE scaling
    gamma: np.ndarray   # (L, K) estimate variance per antenna
    psi: np.ndarray     # (L, tau_p) pilot-level denominator tau_p * sum(p beta) + 1
    p_ul: np.ndarray    # (K,) pilot powers
    tau_p: int


@dataclass
class ChannelRealization:
    h: np.ndarray
    y_pilot: np.ndarray
    h_hat: np.ndarray
    h_bar: np.ndarray


def make_pilot_book(tau_p: int, basis: str = "identity", seed=None) -> np.ndarray:
    """tau_p x tau_p matrix whose columns are orthogonal pilots of squared norm tau_p.

    ``basis`` is ``"identity"``, ``"dft"`` or ``"random"`` (Haar unitary drawn
    from ``seed``); the Gram matrix is ``tau_p * I`` in every case.
    """
    if tau_p < 1:
        raise ValueError("tau_p must be >= 1")
    if basis == "identity":
        unitary = np.eye(tau_p, dtype=complex)
    elif basis == "dft":
        n = np.arange(tau_p)
        unitary = np.exp(-2j * np.pi * np.outer(n, n) / tau_p) / np.sqrt(tau_p)
    elif basis == "random":
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((tau_p, tau_p)) + 1j * rng.standard_normal((tau_p, tau_p))
        q, r = np.linalg.qr(z)
        unitary = q * (np.diag(r) / np.abs(np.diag(r)))
    else:
        raise ValueError(f"unknown pilot basis {basis!r}")
    return np.sqrt(tau_p) * unitary


def complex_normal(rng: np.random.Generator, shape, variance=1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with the given variance."""
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_channels(beta: np.ndarray, M: int, seed, blocks: int | None = None) -> np.ndarray:
    """Draw ``h[l, k] ~ CN(0, beta[l, k] I_M)``, optionally for many blocks."""
    beta = np.asarray(beta, dtype=float)
    if np.any(~np.isfinite(beta)) or np.any(beta <= 0):
        raise ValueError("large-scale coefficients must be strictly positive and finite")
    rng = np.random.default_rng(seed)
    lead = () if blocks is None else (blocks,)
    return complex_normal(rng, lead + beta.shape + (M,), beta[..., None])


def _pilot_powers(p_ul, K: int) -> np.ndarray:
    p = np.broadcast_to(np.asarray(p_ul, dtype=float), (K,)).copy()
    if np.any(p < 0):
        raise ValueError("pilot powers must be non-negative")
    return p


def receive_pilots(h: np.ndarray, p_ul, pilots: PilotAssignment, book: np.ndarray,
                   seed=None, noise: bool = True) -> np.ndarray:
    """Received pilot matrix ``Y_l = sum_k sqrt(p_k) h_lk phi_{i_k}^H + N_l``.

    With ``noise=False`` the noise matrix is omitted (exactness tests only).
    """
    K = h.shape[-2]
    sqrt_p = np.sqrt(_pilot_powers(p_ul, K))
    phi_h = book[:, pilots.index].conj().T          # (K, tau_p): row k is phi_{i_k}^H
    y = np.einsum("...lkm,k,kj->...lmj", h, sqrt_p, phi_h)
    if noise:
        rng = np.random.default_rng(seed)
        y = y + complex_normal(rng, y.shape)
    return y


def estimation_statistics(beta: np.ndarray, p_ul, pilots: PilotAssignment,
                          tau_p: int) -> EstimationStats:
    beta = np.asarray(beta, dtype=float)
    L, K = beta.shape
    p = _pilot_powers(p_ul, K)
    psi = np.ones((L, tau_p))
    for i in range(tau_p):
        users = pilots.index == i
        psi[:, i] += tau_p * beta[:, users] @ p[users]
    denom = psi[:, pilots.index]
    c = np.sqrt(p) * beta / denom
    gamma = p * tau_p * beta ** 2 / denom
    return EstimationStats(c=c, gamma=gamma, psi=psi, p_ul=p, tau_p=tau_p)


def mmse_estimate(y_pilot: np.ndarray, stats: EstimationStats, pilots: PilotAssignment,
                  book: np.ndarray):
    """Return ``(h_hat, h_bar)`` with ``h_bar = Y Phi`` and ``h_hat_lk = c_lk h_bar e_{i_k}``."""
    h_bar = y_pilot @ book
    # (..., L, M, K) -> (..., L, K, M)
    h_hat = np.swapaxes(h_bar[..., pilots.index], -1, -2) * stats.c[..., None]
    return h_hat, h_bar


def draw_realization(scenario: Scenario, stats: EstimationStats, book: np.ndarray, seed,
                     blocks: int | None = None, M: int | None = None) -> ChannelRealization:
    """Channels, pilots and estimates for one block (or a batch of blocks)."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    ch_ss, noise_ss = ss.spawn(2)
    M = scenario.config.M if M is None else M
    h = sample_channels(scenario.beta, M, ch_ss, blocks)
    y = receive_pilots(h, stats.p_ul, scenario.pilots, book, noise_ss)
    h_hat, h_bar = mmse_estimate(y, stats, scenario.pilots, book)
    return ChannelRealization(h=h, y_pilot=y, h_hat=h_hat, h_bar=h_bar)

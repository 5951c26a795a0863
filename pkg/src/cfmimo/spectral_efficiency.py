"""Downlink SINR/SE: closed form for fpZF and a Monte Carlo estimator of the
use-and-then-forget bound that works for any precoder.

The Monte Carlo path never touches the closed form, so the two serve as
independent checks of each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .channel import EstimationStats, draw_realization, make_pilot_book
from .precoder import FPZF, build_precoders, mrt_precoder
from .scenario import PilotAssignment, Scenario

# complex entries per Monte Carlo chunk; bounds memory independently of n_blocks
_CHUNK_BUDGET = 2_000_000


@dataclass
class SinrTerms:
    cb: np.ndarray        # (K,) complex, E{a_kk}
    bu_power: np.ndarray  # (K,) E{|a_kk|^2} - |cb|^2
    ui_power: np.ndarray  # (K, K) E{|a_kt|^2}, diagonal zeroed


@dataclass
class SEReport:
    sinr: np.ndarray
    se: np.ndarray
    prelog: float
    scheme: str = ""
    evaluation: str = "closed_form"
    half_width: np.ndarray | None = field(default=None, repr=False)


@dataclass
class MonteCarloSinr:
    sinr: np.ndarray
    half_width: np.ndarray
    n_blocks: int
    n_batches: int
    terms: SinrTerms


def prelog_factor(xi_dl: float, tau_p: int, tau_c: int) -> float:
    return xi_dl * (1 - tau_p / tau_c)


def se_from_sinr(sinr, xi_dl: float, tau_p: int, tau_c: int, scheme: str = "",
                 evaluation: str = "closed_form", half_width=None) -> SEReport:
    sinr = np.asarray(sinr, dtype=float)
    if np.any(sinr < 0):
        raise ValueError("SINR must be non-negative")
    prelog = prelog_factor(xi_dl, tau_p, tau_c)
    return SEReport(sinr=sinr, se=prelog * np.log2(1 + sinr), prelog=prelog,
                    scheme=scheme, evaluation=evaluation, half_width=half_width)


def sinr_fpzf_closed_form(stats: EstimationStats, beta: np.ndarray, rho: np.ndarray,
                          pilots: PilotAssignment, M: int, tau_p: int) -> np.ndarray:
    """Per-UE fpZF SINR for i.i.d. Rayleigh fading and statistical normalization."""
    if M <= tau_p:
        raise ValueError(f"closed form needs M > tau_p (M={M}, tau_p={tau_p})")
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("powers must be non-negative")
    gamma = stats.gamma
    # amp[k, t] = sum_l sqrt(rho_lt gamma_lk)
    amp = np.sqrt(gamma).T @ np.sqrt(rho)
    copilot = pilots.same_pilot() & ~np.eye(pilots.K, dtype=bool)
    signal = (M - tau_p) * np.diag(amp) ** 2
    contamination = (M - tau_p) * np.sum(np.where(copilot, amp ** 2, 0.0), axis=1)
    est_error = (beta - gamma).T @ rho.sum(axis=1)
    return signal / (contamination + est_error + 1.0)


def effective_gains(h: np.ndarray, w_ue: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``a[..., k, t] = sum_l sqrt(rho_lt) h_lk^H w_{l,t}``.

    ``h`` is ``(..., L, K, M)``, ``w_ue`` is ``(..., L, M, K)``.
    """
    return np.einsum("...lkm,...lmt,lt->...kt", h.conj(), w_ue, np.sqrt(rho), optimize=True)


def downlink_receive(h: np.ndarray, w_ue: np.ndarray, rho: np.ndarray, data_symbols: np.ndarray,
                     seed=None, noise: bool = True) -> np.ndarray:
    """Received samples ``y_k`` for every UE; ``data_symbols`` is ``(..., K)``."""
    a = effective_gains(h, w_ue, rho)
    y = np.einsum("...kt,...t->...k", a, data_symbols)
    if noise:
        rng = np.random.default_rng(seed)
        y = y + (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)) / np.sqrt(2)
    return y


def regression_sinr(y: np.ndarray, q: np.ndarray) -> np.ndarray:
    """SINR estimated from received samples and known symbols, per UE.

    The mean gain is ``E{y_k q_k^*}``; everything else in ``y_k`` counts as noise.
    """
    gain = np.mean(y * q.conj(), axis=0)
    power = np.mean(np.abs(y) ** 2, axis=0)
    return np.abs(gain) ** 2 / (power - np.abs(gain) ** 2)


def _sinr_from_moments(m1: np.ndarray, m2_total: np.ndarray) -> np.ndarray:
    sig = np.abs(m1) ** 2
    return sig / (m2_total - sig + 1.0)


def _chunk_sizes(n: int, per_block: int) -> list[int]:
    size = max(1, _CHUNK_BUDGET // max(per_block, 1))
    return [min(size, n - s) for s in range(0, n, size)]


def sinr_monte_carlo(scheme: str, scenario: Scenario, stats: EstimationStats, rho: np.ndarray,
                     n_blocks: int, seed, n_batches: int = 30, M: int | None = None,
                     csi: str = "estimated", book: np.ndarray | None = None,
                     confidence: float = 0.95) -> MonteCarloSinr:
    """Estimate the bound's expectations by averaging over independent blocks.

    Channels and pilot noise are redrawn in every block.  Confidence
    half-widths come from a delete-one-batch jackknife of the full SINR
    expression.  ``csi="perfect"`` builds MRT from the true channels.
    """
    if n_blocks < 2:
        raise ValueError("need at least two blocks")
    n_batches = max(2, min(n_batches, n_blocks))
    M = scenario.config.M if M is None else M
    L, K = scenario.beta.shape
    book = make_pilot_book(stats.tau_p) if book is None else book
    if csi not in ("estimated", "perfect"):
        raise ValueError(f"unknown csi mode {csi!r}")
    if csi == "perfect" and scheme == FPZF:
        raise ValueError("perfect-CSI mode is only defined for MRT")

    batch_sizes = [len(b) for b in np.array_split(np.arange(n_blocks), n_batches)]
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    batch_seeds = root.spawn(n_batches)
    s1 = np.zeros((n_batches, K), dtype=complex)
    s2 = np.zeros((n_batches, K, K))
    per_block = L * K * M
    for b, (size, bss) in enumerate(zip(batch_sizes, batch_seeds)):
        chunks = _chunk_sizes(size, per_block)
        for n, css in zip(chunks, bss.spawn(len(chunks))):
            real = draw_realization(scenario, stats, book, css, blocks=n, M=M)
            if csi == "perfect":
                pre = mrt_precoder(real.h, scenario.beta, M)
            else:
                pre = build_precoders(scheme, real.h_hat, real.h_bar, stats, M)
            a = effective_gains(real.h, pre.per_ue(scenario.pilots), rho)
            s1[b] += np.einsum("nkk->k", a)
            s2[b] += np.sum(np.abs(a) ** 2, axis=0)

    counts = np.asarray(batch_sizes, dtype=float)
    total = counts.sum()
    m1 = s1.sum(0) / total
    m2 = s2.sum(0) / total
    sinr = _sinr_from_moments(m1, m2.sum(axis=1))

    loo_n = total - counts
    loo_m1 = (s1.sum(0) - s1) / loo_n[:, None]
    loo_m2 = (s2.sum(0) - s2).sum(axis=2) / loo_n[:, None]
    loo = _sinr_from_moments(loo_m1, loo_m2)
    B = n_batches
    var = (B - 1) / B * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0)
    half = sps.t.ppf(0.5 + confidence / 2, B - 1) * np.sqrt(var)

    diag = np.diag(m2).copy()
    ui = m2.copy()
    np.fill_diagonal(ui, 0.0)
    terms = SinrTerms(cb=m1, bu_power=diag - np.abs(m1) ** 2, ui_power=ui)
    return MonteCarloSinr(sinr=sinr, half_width=half, n_blocks=n_blocks, n_batches=B, terms=terms)

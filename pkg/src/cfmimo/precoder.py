"""Local downlink precoders: full-pilot zero-forcing and maximum-ratio baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import EstimationStats
from .scenario import PilotAssignment

FPZF, MMRT, SMRT = "fpzf", "mmrt", "smrt"
SCHEMES = (FPZF, MMRT, SMRT)

RANK_COND_LIMIT = 1e12


class RankDeficientError(np.linalg.LinAlgError):
    """The pilot-space channel matrix at some AP lost column rank."""


@dataclass
class PrecoderSet:
    """Precoding vectors stored column-wise, shape ``(..., L, M, n)``.

    For fpZF there is one column per pilot (``n = tau_p``); for MRT one per UE.
    """

    w: np.ndarray
    scheme: str

    def per_ue(self, pilots: PilotAssignment) -> np.ndarray:
        """Vector used for each UE, shape ``(..., L, M, K)``."""
        if self.scheme == FPZF:
            return self.w[..., pilots.index]
        return self.w


def pilot_space_pseudoinverse(h_bar: np.ndarray) -> np.ndarray:
    """``H (H^H H)^{-1}`` for a stack of tall matrices, via QR (no explicit inverse)."""
    q, r = np.linalg.qr(h_bar)
    diag = np.abs(np.diagonal(r, axis1=-2, axis2=-1))
    cond_est = diag.max(axis=-1) / np.maximum(diag.min(axis=-1), np.finfo(float).tiny)
    if np.any(cond_est > RANK_COND_LIMIT):
        raise RankDeficientError(
            f"pilot-space matrix is rank deficient (condition estimate {cond_est.max():.3g})")
    eye = np.broadcast_to(np.eye(r.shape[-1], dtype=r.dtype), r.shape)
    r_inv_h = np.linalg.solve(np.conj(np.swapaxes(r, -1, -2)), eye)
    return q @ r_inv_h


def fpzf_normalization(stats: EstimationStats, M: int) -> np.ndarray:
    """(L, tau_p) factors ``1/sqrt(E||H(H^H H)^{-1} e_i||^2)``.

    Equals ``sqrt(gamma_lk (M - tau_p)) / c_lk`` for any UE k on pilot i.
    """
    tau_p = stats.tau_p
    if M <= tau_p:
        raise ValueError(f"fpZF needs M > tau_p (M={M}, tau_p={tau_p})")
    return np.sqrt(tau_p * stats.psi * (M - tau_p))


def fpzf_precoders(h_bar: np.ndarray, stats: EstimationStats, M: int, tau_p: int) -> PrecoderSet:
    if h_bar.shape[-2:] != (M, tau_p):
        raise ValueError(f"h_bar must end in ({M}, {tau_p}), got {h_bar.shape}")
    pinv = pilot_space_pseudoinverse(h_bar)
    scale = fpzf_normalization(stats, M)  # (L, tau_p)
    return PrecoderSet(w=pinv * scale[:, None, :], scheme=FPZF)


def mrt_precoder(h_hat: np.ndarray, stats, M: int) -> PrecoderSet:
    """Maximum-ratio vectors ``h_hat / sqrt(M gamma)`` with unit average power.

    ``stats`` is an :class:`EstimationStats` or a plain (L, K) variance array,
    which lets callers build perfect-CSI MRT from ``h`` and ``beta``.
    """
    gamma = stats.gamma if isinstance(stats, EstimationStats) else np.asarray(stats, dtype=float)
    if np.any(gamma <= 0):
        raise ValueError("MRT normalization needs strictly positive estimate variances")
    w = h_hat / np.sqrt(M * gamma)[..., None]
    scheme = SMRT if M == 1 else MMRT
    return PrecoderSet(w=np.swapaxes(w, -1, -2), scheme=scheme)


def build_precoders(scheme: str, h_hat: np.ndarray, h_bar: np.ndarray,
                    stats: EstimationStats, M: int) -> PrecoderSet:
    if scheme == FPZF:
        return fpzf_precoders(h_bar, stats, M, stats.tau_p)
    if scheme in (MMRT, SMRT):
        return mrt_precoder(h_hat, stats, M)
    raise ValueError(f"unknown scheme {scheme!r}")

"""Max-min fairness downlink power control for fpZF.

For a fixed SINR target ``nu`` the per-UE constraints are second-order cones
in ``u = sqrt(rho)``:

    || sqrt(nu) * (g_k^T u_t' for co-pilot t', ||z_k o u_t|| for all t, 1) || <= g_k^T u_k

together with ``||u'_l|| <= sqrt(P_max,l)`` per AP and ``u >= 0``.  Whether
that convex set is empty is decided by a primal-dual interior-point method
on the phase-I problem ``min s`` subject to every UE cone relaxed by ``s``.
A point with ``s < 0`` is a feasibility witness; a dual point whose
Lagrangian lower bound is positive proves infeasibility.  The outer max-min
value is found by bisection on ``nu``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .channel import EstimationStats
from .scenario import PilotAssignment

log = logging.getLogger(__name__)

TOL_NU = 1e-3
TOL_FEAS = 1e-6

_MAX_IPM_ITERATIONS = 200
_STEP_FRACTION = 0.99


class SolverError(RuntimeError):
    """The interior-point method stalled before reaching a decision."""


@dataclass
class SocpInstance:
    g: np.ndarray            # (L, K) (M - tau_p) * gamma
    z: np.ndarray            # (L, K) beta - gamma
    same_pilot: np.ndarray   # (K, K) bool
    p_max: np.ndarray        # (L,)

    @property
    def L(self) -> int:
        return self.g.shape[0]

    @property
    def K(self) -> int:
        return self.g.shape[1]

    def copilot(self) -> np.ndarray:
        return self.same_pilot & ~np.eye(self.K, dtype=bool)

    def interference_free_bound(self) -> np.ndarray:
        """Per-UE SINR with full power on the UE and no interference at all."""
        return (np.sqrt(self.g * self.p_max[:, None]).sum(axis=0)) ** 2

    def s_vector(self, u: np.ndarray, nu: float, k: int) -> np.ndarray:
        """The stacked cone vector of UE ``k``: co-pilot terms, error terms, 1."""
        gk = np.sqrt(self.g[:, k])
        zk = np.sqrt(self.z[:, k])
        cop = np.flatnonzero(self.copilot()[k])
        parts = [gk @ u[:, cop],
                 np.linalg.norm(zk[:, None] * u, axis=0),
                 [1.0]]
        return np.sqrt(nu) * np.concatenate(parts)

    def cone_sides(self, u: np.ndarray, nu: float):
        """``(||s_k||, g_k^T u_k)`` for every UE."""
        lhs = np.array([np.linalg.norm(self.s_vector(u, nu, k)) for k in range(self.K)])
        rhs = np.einsum("lk,lk->k", np.sqrt(self.g), u)
        return lhs, rhs

    def sinr(self, rho: np.ndarray) -> np.ndarray:
        """Closed-form fpZF SINR written in terms of ``g`` and ``z``."""
        amp = np.sqrt(self.g).T @ np.sqrt(rho)
        contamination = np.sum(np.where(self.copilot(), amp ** 2, 0.0), axis=1)
        return np.diag(amp) ** 2 / (contamination + self.z.T @ rho.sum(axis=1) + 1.0)


@dataclass
class FeasibilityResult:
    feasible: bool
    u: np.ndarray | None
    residual: float        # best max-cone residual seen (negative = strictly feasible)
    lower_bound: float     # certified lower bound on the optimal residual
    iterations: int


@dataclass
class MaxMinSolution:
    rho: np.ndarray
    nu_star: float
    iterations: int
    ipm_iterations: int
    upper: float
    margins: np.ndarray = field(repr=False, default=None)
    status: str = "optimal"


def build_socp(stats: EstimationStats, beta: np.ndarray, pilots: PilotAssignment, M: int,
               tau_p: int, p_max) -> SocpInstance:
    if M <= tau_p:
        raise ValueError(f"fpZF power control needs M > tau_p (M={M}, tau_p={tau_p})")
    L = beta.shape[0]
    g = (M - tau_p) * stats.gamma
    z = np.maximum(beta - stats.gamma, 0.0)
    p_max = np.broadcast_to(np.asarray(p_max, dtype=float), (L,)).copy()
    return SocpInstance(g=g, z=z, same_pilot=pilots.same_pilot(), p_max=p_max)


def equal_power_allocation(p_max, L: int, K: int) -> np.ndarray:
    if K < 1:
        raise ValueError("need at least one UE")
    p_max = np.broadcast_to(np.asarray(p_max, dtype=float), (L,))
    return np.repeat(p_max[:, None] / K, K, axis=1)


def transmitted_power(rho: np.ndarray) -> np.ndarray:
    """Average radiated power per AP (precoders have unit average power)."""
    return np.asarray(rho).sum(axis=1)


# ---------------------------------------------------------------------------
# second-order cone algebra on stacks of cones, one cone per row

def _jdot(u, v):
    return u[:, 0] * v[:, 0] - np.sum(u[:, 1:] * v[:, 1:], axis=1)


def _jordan(u, v):
    out = np.empty_like(u)
    out[:, 0] = np.sum(u * v, axis=1)
    out[:, 1:] = u[:, :1] * v[:, 1:] + v[:, :1] * u[:, 1:]
    return out


def _jordan_solve(lam, x):
    """``u`` with ``lam o u = x``."""
    det = _jdot(lam, lam)
    u = np.empty_like(x)
    u[:, 0] = (lam[:, 0] * x[:, 0] - np.sum(lam[:, 1:] * x[:, 1:], axis=1)) / det
    u[:, 1:] = (x[:, 1:] - u[:, :1] * lam[:, 1:]) / lam[:, :1]
    return u


def _soc_step(u, du):
    """Largest ``a`` with ``u + a du`` in the cone (``inf`` if unbounded)."""
    a = _jdot(du, du)
    b = 2.0 * _jdot(u, du)
    c = _jdot(u, u)
    out = np.full(len(u), np.inf)
    disc = b * b - 4.0 * a * c
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.sqrt(np.maximum(disc, 0.0))
        # numerically stable pair of roots
        qq = -0.5 * (b + np.copysign(root, b))
        r1 = qq / a
        r2 = c / qq
    for r in (r1, r2):
        ok = np.isfinite(r) & (r > 0) & (disc >= 0)
        out = np.where(ok, np.minimum(out, r), out)
    lin = np.where(np.abs(a) < 1e-300, np.where(b < 0, -c / np.where(b < 0, b, -1.0), np.inf), np.inf)
    out = np.minimum(out, lin)
    neg = du[:, 0] < 0
    out = np.where(neg, np.minimum(out, -u[:, 0] / np.where(neg, du[:, 0], -1.0)), out)
    return out


class _Scaling:
    """Nesterov-Todd scaling ``W`` with ``W z = W^{-1} s = lam`` per cone."""

    def __init__(self, s_lin, z_lin, s_socs, z_socs):
        self.d = np.sqrt(s_lin / z_lin)
        self.lam_lin = np.sqrt(s_lin * z_lin)
        self.socs = []
        self.lam_socs = []
        for s, z in zip(s_socs, z_socs):
            ds, dz = np.sqrt(_jdot(s, s)), np.sqrt(_jdot(z, z))
            sb, zb = s / ds[:, None], z / dz[:, None]
            gamma = np.sqrt(0.5 * (1.0 + np.sum(sb * zb, axis=1)))
            w = sb.copy()
            w[:, 0] += zb[:, 0]
            w[:, 1:] -= zb[:, 1:]
            w /= 2.0 * gamma[:, None]
            beta = np.sqrt(ds / dz)
            self.socs.append((beta, w))
            self.lam_socs.append(self._soc_apply(beta, w, z, inverse=False))

    @staticmethod
    def _soc_apply(beta, w, u, inverse):
        if inverse:
            u = u.copy()
            u[:, 1:] *= -1.0
        w0, w1 = w[:, :1], w[:, 1:]
        dot = np.sum(w1 * u[:, 1:], axis=1, keepdims=True)
        out = np.empty_like(u)
        out[:, :1] = w0 * u[:, :1] + dot
        out[:, 1:] = u[:, 1:] + w1 * (u[:, :1] + dot / (1.0 + w0))
        if inverse:
            out[:, 1:] *= -1.0
            return out / beta[:, None]
        return out * beta[:, None]

    def apply(self, lin, socs, inverse=False):
        lin = lin / self.d if inverse else lin * self.d
        socs = [self._soc_apply(beta, w, u, inverse) for (beta, w), u in zip(self.socs, socs)]
        return lin, socs

    def soc_hessians(self):
        """``W^{-2} = (2 v v^T - J) / beta^2`` with ``v = J w``; returns ``(beta^-2, v)``."""
        out = []
        for beta, w in self.socs:
            v = w.copy()
            v[:, 1:] *= -1.0
            out.append((1.0 / beta ** 2, v))
        return out


class _PhaseOne:
    """Phase-I conic program in scaled, lifted variables.

    ``x_lt = u_lt / sqrt(P_max,l)``.  Beam gains ``c_j = sum_l G_{l,k_j}
    x_{l,t_j}`` for every (UE, beam) pair that enters a UE cone are separate
    variables tied to ``x`` by equalities, and ``e_l >= ||x_l||`` carries the
    AP norm.  UE cones then only touch ``(c, e, s)``, which keeps their
    (possibly huge) curvature in one small dense block.

    Variables ``y = (x.ravel(), c, e, s)`` with ``x`` AP-major.  Cones, all
    written ``h - G y`` in the cone: ``x >= 0``; ``1 - e >= 0``; per AP
    ``(e_l, x_l)``; per UE ``(c_kk / sqrt(nu) + s, c_cop, sqrt(Z_k) o e, 1)``
    (co-pilot slots zero-padded to a common width).
    """

    def __init__(self, inst: SocpInstance, nu: float):
        L, K = inst.L, inst.K
        self.L, self.K = L, K
        self.G = np.sqrt(inst.g * inst.p_max[:, None])
        self.Z = inst.z * inst.p_max[:, None]
        self.root_z = np.sqrt(self.Z)
        self.cop = inst.copilot().astype(float)
        cop_pairs = np.argwhere(inst.copilot())
        # own pairs first, then (k, t): beam t as seen by UE k
        self.kj = np.concatenate([np.arange(K), cop_pairs[:, 0]]).astype(int)
        self.tj = np.concatenate([np.arange(K), cop_pairs[:, 1]]).astype(int)
        self.P = len(self.kj)
        self.Gsel = self.G[:, self.kj]
        self.beam_of = np.zeros((self.P, K))
        self.beam_of[np.arange(self.P), self.tj] = 1.0
        counts = np.bincount(self.kj[K:], minlength=K)
        self.width = int(counts.max()) if K and counts.size else 0
        self.slot = np.zeros(self.P, dtype=int)
        for k in range(K):
            idx = np.flatnonzero(self.kj[K:] == k) + K
            self.slot[idx] = 1 + np.arange(len(idx))
        self.root_nu = np.sqrt(nu)
        self.nx = L * K
        self.nw = self.P + L + 1
        self.n_lin = L * K + L
        self.ue_dim = 1 + self.width + L + 1
        self.degree = self.n_lin + L + K
        # box implied by the constraints, used in the dual bound
        self.c_max = self.Gsel.sum(axis=0)

    # -- variable packing --------------------------------------------------
    def unpack(self, y):
        L, K, P, nx = self.L, self.K, self.P, self.nx
        return y[:nx].reshape(L, K), y[nx:nx + P], y[nx + P:nx + P + L], y[-1]

    def gains(self, x):
        return np.einsum("lj,lj->j", self.Gsel, x[:, self.tj])

    def start(self, x):
        norm = np.sqrt(np.sum(x ** 2, axis=1))
        e = norm + 0.1 * (1.0 - norm)
        c = self.gains(x)
        y = np.concatenate([x.ravel(), c, e, [0.0]])
        _, _, ue = self.slack(y)
        y[-1] = float(np.max(np.sqrt(np.sum(ue[:, 1:] ** 2, axis=1)) - ue[:, 0])) + 1.0
        return y

    # -- the linear map G and its adjoint ----------------------------------
    def slack(self, y):
        """``h - G y`` as (linear part, AP cones, UE cones)."""
        x, c, e, s = self.unpack(y)
        K = self.K
        lin = np.concatenate([x.ravel(), 1.0 - e])
        ap = np.concatenate([e[:, None], x], axis=1)
        ue = np.zeros((K, self.ue_dim))
        ue[:, 0] = c[:K] / self.root_nu + s
        ue[self.kj[K:], self.slot[K:]] = c[K:]
        ue[:, 1 + self.width:-1] = (self.root_z * e[:, None]).T
        ue[:, -1] = 1.0
        return lin, ap, ue

    def h_dot(self, lin, ue):
        return float(np.sum(lin[self.nx:]) + np.sum(ue[:, -1]))

    def g_apply(self, y):
        lin, ap, ue = self.slack(y)
        lin0, ap0, ue0 = self.slack(np.zeros_like(y))
        return lin0 - lin, ap0 - ap, ue0 - ue

    def g_adjoint(self, lin, ap, ue):
        L, K, P = self.L, self.K, self.P
        gx = -lin[:self.nx].reshape(L, K) - ap[:, 1:]
        ge = lin[self.nx:] - ap[:, 0] - np.einsum("lk,kl->l", self.root_z, ue[:, 1 + self.width:-1])
        gc = np.empty(P)
        gc[:K] = -ue[:, 0] / self.root_nu
        gc[K:] = -ue[self.kj[K:], self.slot[K:]]
        gs = -np.sum(ue[:, 0])
        return np.concatenate([gx.ravel(), gc, ge, [gs]])

    def eq_apply(self, y):
        x, c, _, _ = self.unpack(y)
        return c - self.gains(x)

    def eq_adjoint(self, nu_eq):
        gx = -(self.Gsel * nu_eq) @ self.beam_of
        return np.concatenate([gx.ravel(), nu_eq, np.zeros(self.L + 1)])

    def objective(self):
        c = np.zeros(self.nx + self.nw)
        c[-1] = 1.0
        return c

    # -- checks in the original variables ----------------------------------
    def parts(self, x):
        cross = self.G.T @ x
        a = np.diag(cross) / self.root_nu
        row_power = np.sum(x ** 2, axis=1)
        r2 = np.sum(self.cop * cross ** 2, axis=1) + self.Z.T @ row_power + 1.0
        return cross, a, row_power, r2

    def residual(self, x) -> float:
        """Largest UE cone violation of ``x`` itself (negative = feasible)."""
        _, a, _, r2 = self.parts(x)
        return float(np.max(np.sqrt(r2) - a))

    def dual_bound(self, z_lin, z_ap, z_ue, nu_eq) -> float:
        """Lagrangian lower bound on the phase-I optimum from any dual point.

        Duals are rescaled so the coefficient of the free variable ``s``
        vanishes; the remaining linear term is minimised over the box that
        the primal constraints imply (``x, e`` in [0, 1], ``0 <= c <= c_max``).
        """
        tau = float(np.sum(z_ue[:, 0]))
        if tau <= 0:
            return -np.inf
        r = self.objective() + (self.g_adjoint(z_lin, z_ap, z_ue) + self.eq_adjoint(nu_eq)) / tau
        hi = np.concatenate([np.ones(self.nx), self.c_max, np.ones(self.L)])
        box = np.sum(np.minimum(r[:-1] * hi, 0.0))
        return box - self.h_dot(z_lin, z_ue) / tau

    # -- Newton system --------------------------------------------------------
    def kkt(self, scaling: _Scaling) -> "_ReducedKKT":
        """Factor ``[[G^T W^-2 G, A^T], [A, 0]]`` for the current scaling."""
        L, K, P = self.L, self.K, self.P
        kk = np.arange(K)
        dl2 = 1.0 / scaling.d ** 2
        (ib_ap, v_ap), (ib_ue, v_ue) = scaling.soc_hessians()

        # per-AP x blocks and their coupling to e_l
        B = (2.0 * ib_ap)[:, None, None] * (v_ap[:, 1:, None] * v_ap[:, None, 1:])
        B[:, kk, kk] += ib_ap[:, None] + dl2[:self.nx].reshape(L, K)
        b = 2.0 * (ib_ap * v_ap[:, 0])[:, None] * v_ap[:, 1:]

        # UE cones over w = (c, e, s)
        T = np.zeros((K, self.nw))          # T^T v per UE
        T[kk, kk] = v_ue[:, 0] / self.root_nu
        T[:, -1] = v_ue[:, 0]
        T[self.kj[K:], np.arange(K, P)] = v_ue[self.kj[K:], self.slot[K:]]
        T[:, P:P + L] = v_ue[:, 1 + self.width:-1] * self.root_z.T
        Hww = (T * (2.0 * ib_ue)[:, None]).T @ T
        a_own = ib_ue / self.root_nu
        Hww[kk, kk] -= a_own / self.root_nu
        Hww[kk, -1] -= a_own
        Hww[-1, kk] -= a_own
        Hww[-1, -1] -= np.sum(ib_ue)
        cop = np.arange(K, P)
        Hww[cop, cop] += ib_ue[self.kj[K:]]
        ee = np.arange(P, P + L)
        Hww[ee, ee] += self.Z @ ib_ue + ib_ap * (2.0 * v_ap[:, 0] ** 2 - 1.0) + dl2[self.nx:]
        return _ReducedKKT(self, B, b, Hww)


class _ReducedKKT:
    """Solves ``[[H, A^T], [A, 0]] (dy, dnu) = (r_y, r_eq)``.

    ``H`` has per-AP ``K x K`` blocks on ``x`` coupled only to ``e_l``, plus a
    dense block on ``w = (c, e, s)``.  Eliminating ``x`` leaves a dense
    system of size ``nw + P``; one step of iterative refinement follows.
    """

    def __init__(self, prob: _PhaseOne, B, b, Hww):
        self.prob, self.B, self.b, self.Hww = prob, B, b, Hww
        L, P = prob.L, prob.P
        d = 1.0 / np.sqrt(np.einsum("lii->li", B))
        scaled = np.linalg.inv(B * d[:, :, None] * d[:, None, :])
        self._binv = scaled * d[:, :, None] * d[:, None, :]
        tj, Gsel = prob.tj, prob.Gsel
        bb = self._bmul(b)
        top = Hww.copy()
        ee = np.arange(P, P + L)
        top[ee, ee] -= np.sum(b * bb, axis=1)
        cross = np.zeros((prob.nw, P))
        cross[np.arange(P), np.arange(P)] = 1.0
        cross[P:P + L] = bb[:, tj] * Gsel
        pairs = self._binv[:, tj][:, :, tj]
        corner = -np.einsum("lj,lm,ljm->jm", Gsel, Gsel, pairs, optimize=True)
        red = np.block([[top, cross], [cross.T, corner]])
        scale = 1.0 / np.sqrt(np.maximum(np.abs(np.diag(red)), np.finfo(float).tiny))
        self._scale = scale
        self._lu = sla.lu_factor(red * scale[:, None] * scale[None, :], check_finite=False)

    def _bmul(self, v):
        return np.einsum("lij,lj->li", self._binv, v)

    def _gm_t(self, lam):
        return (self.prob.Gsel * lam) @ self.prob.beam_of

    def _gm(self, v):
        return np.einsum("lj,lj->j", self.prob.Gsel, v[:, self.prob.tj])

    def _split(self, r):
        nx = self.prob.nx
        return r[:nx].reshape(self.prob.L, self.prob.K), r[nx:]

    def _once(self, ry, req):
        prob = self.prob
        P, L = prob.P, prob.L
        r1, r2 = self._split(ry)
        br1 = self._bmul(r1)
        top = r2.copy()
        top[P:P + L] -= np.sum(self.b * br1, axis=1)
        # A = [-G_m, I_c]; the constraint row reads dc - G_m dx = req
        bottom = req + self._gm(br1)
        sol = sla.lu_solve(self._lu, np.concatenate([top, bottom]) * self._scale,
                           check_finite=False) * self._scale
        dw, lam = sol[:prob.nw], sol[prob.nw:]
        dx = self._bmul(r1 - self.b * dw[P:P + L, None] + self._gm_t(lam))
        return np.concatenate([dx.ravel(), dw]), lam

    def matvec(self, dy, lam):
        prob = self.prob
        P, L = prob.P, prob.L
        dx, dw = self._split(dy)
        de = dw[P:P + L]
        o1 = np.einsum("lij,lj->li", self.B, dx) + self.b * de[:, None] - self._gm_t(lam)
        o2 = self.Hww @ dw
        o2[:P] += lam
        o2[P:P + L] += np.sum(self.b * dx, axis=1)
        return np.concatenate([o1.ravel(), o2]), dw[:P] - self._gm(dx)

    def solve(self, ry, req):
        dy, lam = self._once(ry, req)
        oy, oe = self.matvec(dy, lam)
        cy, cl = self._once(ry - oy, req - oe)
        return dy + cy, lam + cl

    def dense(self):
        """Full ``H`` (tests only)."""
        prob = self.prob
        L, K, nx = prob.L, prob.K, prob.nx
        H = np.zeros((nx + prob.nw, nx + prob.nw))
        for l in range(L):
            sl = slice(l * K, (l + 1) * K)
            H[sl, sl] = self.B[l]
            H[sl, nx + prob.P + l] = self.b[l]
            H[nx + prob.P + l, sl] = self.b[l]
        H[nx:, nx:] = self.Hww
        return H


def _identity_like(lin, socs):
    e_socs = []
    for u in socs:
        e = np.zeros_like(u)
        e[:, 0] = 1.0
        e_socs.append(e)
    return np.ones_like(lin), e_socs


def _max_step(s_lin, s_socs, d_lin, d_socs):
    step = np.inf
    neg = d_lin < 0
    if np.any(neg):
        step = min(step, float(np.min(-s_lin[neg] / d_lin[neg])))
    for u, du in zip(s_socs, d_socs):
        step = min(step, float(np.min(_soc_step(u, du))))
    return step


def _search_direction(prob, kkt, scaling, res, ds_lin, ds_socs):
    """Solve the linearised system for one right-hand side ``ds`` (scaled
    complementarity target ``lam o (W^{-1} dS + W dZ)``)."""
    rx, req, (rz_lin, rz_socs) = res
    lam_lin, lam_socs = scaling.lam_lin, scaling.lam_socs
    q_lin = ds_lin / lam_lin
    q_socs = [_jordan_solve(l_, d_) for l_, d_ in zip(lam_socs, ds_socs)]
    wq_lin, wq_socs = scaling.apply(q_lin, q_socs)
    bz_lin = -rz_lin - wq_lin
    bz_socs = [-a - b for a, b in zip(rz_socs, wq_socs)]
    # W^{-2} bz
    t_lin, t_socs = scaling.apply(bz_lin, bz_socs, inverse=True)
    t_lin, t_socs = scaling.apply(t_lin, t_socs, inverse=True)
    ry = -rx + prob.g_adjoint(t_lin, *t_socs)
    dy, dnu = kkt.solve(ry, -req)
    g_lin, g_ap, g_ue = prob.g_apply(dy)
    u_lin, u_socs = g_lin - bz_lin, [g_ap - bz_socs[0], g_ue - bz_socs[1]]
    u_lin, u_socs = scaling.apply(u_lin, u_socs, inverse=True)
    dz_lin, dz_socs = scaling.apply(u_lin, u_socs, inverse=True)
    # dS = W (q - W dZ)
    wdz_lin, wdz_socs = scaling.apply(dz_lin, dz_socs)
    dS_lin, dS_socs = scaling.apply(q_lin - wdz_lin, [a - b for a, b in zip(q_socs, wdz_socs)])
    return dy, dnu, (dS_lin, dS_socs), (dz_lin, dz_socs)


def feasibility_check(inst: SocpInstance, nu: float, tol: float = TOL_FEAS, u0=None,
                      max_iterations: int = _MAX_IPM_ITERATIONS) -> FeasibilityResult:
    """Decide whether SINR target ``nu`` is achievable for every UE.

    Returns a strictly feasible ``u`` as soon as one is found.  Infeasibility
    is declared when a dual point proves the phase-I optimum is positive, or
    when primal and dual bounds pin it to within ``tol`` of zero.  Raises
    :class:`SolverError` if neither happens within ``max_iterations``.
    """
    if nu < 0:
        raise ValueError("nu must be non-negative")
    if nu == 0:
        return FeasibilityResult(True, np.zeros((inst.L, inst.K)), 0.0, 0.0, 0)
    if np.any(inst.interference_free_bound() < nu):
        return FeasibilityResult(False, None, np.inf, np.inf, 0)

    prob = _PhaseOne(inst, nu)
    root_p = np.sqrt(inst.p_max)[:, None]
    x = np.full((inst.L, inst.K), np.sqrt(0.5 / inst.K))
    if u0 is not None:
        x = 0.8 * np.clip(u0 / root_p, 0.0, None) + 0.2 * x
        x /= max(1.0, np.sqrt(np.sum(x ** 2, axis=1).max() / 0.99))
    best = prob.residual(x)
    if best < 0:
        return FeasibilityResult(True, x * root_p, best, -np.inf, 0)

    y = prob.start(x)
    s_lin, s_ap, s_ue = prob.slack(y)
    s_socs = [s_ap, s_ue]
    # dual start on the central path of the primal start
    z_lin = 1.0 / s_lin
    z_socs = []
    for u in s_socs:
        zi = u.copy()
        zi[:, 1:] *= -1.0
        z_socs.append(zi / _jdot(u, u)[:, None])
    nu_eq = np.zeros(prob.P)
    c_obj = prob.objective()
    lower = -np.inf

    for it in range(1, max_iterations + 1):
        rx = c_obj + prob.g_adjoint(z_lin, *z_socs) + prob.eq_adjoint(nu_eq)
        req = prob.eq_apply(y)
        # G y + S - h = S - (h - G y)
        h_lin, h_ap, h_ue = prob.slack(y)
        rz_lin = s_lin - h_lin
        rz_socs = [s_socs[0] - h_ap, s_socs[1] - h_ue]
        gap = float(s_lin @ z_lin + sum(np.sum(a * b) for a, b in zip(s_socs, z_socs)))
        mu = gap / prob.degree

        scaling = _Scaling(s_lin, z_lin, s_socs, z_socs)
        kkt = prob.kkt(scaling)
        res = (rx, req, (rz_lin, rz_socs))
        lam_lin, lam_socs = scaling.lam_lin, scaling.lam_socs

        # predictor
        aff = _search_direction(prob, kkt, scaling, res, -lam_lin * lam_lin,
                                [-_jordan(l_, l_) for l_ in lam_socs])
        _, _, (dSa_lin, dSa_socs), (dza_lin, dza_socs) = aff
        alpha = min(_max_step(s_lin, s_socs, dSa_lin, dSa_socs),
                    _max_step(z_lin, z_socs, dza_lin, dza_socs), 1.0)
        sigma = (1.0 - alpha) ** 3

        # corrector with Mehrotra's second-order term
        e_lin, e_socs = _identity_like(lam_lin, lam_socs)
        sa_lin, sa_socs = scaling.apply(dSa_lin, dSa_socs, inverse=True)
        za_lin, za_socs = scaling.apply(dza_lin, dza_socs)
        ds_lin = -lam_lin * lam_lin - sa_lin * za_lin + sigma * mu * e_lin
        ds_socs = [-_jordan(l_, l_) - _jordan(a, b) + sigma * mu * e_
                   for l_, a, b, e_ in zip(lam_socs, sa_socs, za_socs, e_socs)]
        dy, dnu, (dS_lin, dS_socs), (dz_lin, dz_socs) = _search_direction(
            prob, kkt, scaling, res, ds_lin, ds_socs)
        step = min(_max_step(s_lin, s_socs, dS_lin, dS_socs),
                   _max_step(z_lin, z_socs, dz_lin, dz_socs))
        step = min(1.0, _STEP_FRACTION * step)
        if not step > 1e-12:
            raise SolverError(f"interior-point step collapsed at nu={nu:.6g}")

        y = y + step * dy
        nu_eq = nu_eq + step * dnu
        s_lin = s_lin + step * dS_lin
        s_socs = [a + step * b for a, b in zip(s_socs, dS_socs)]
        z_lin = z_lin + step * dz_lin
        z_socs = [a + step * b for a, b in zip(z_socs, dz_socs)]

        xk, _, ek, sk = prob.unpack(y)
        if np.all(xk >= 0) and np.all(np.sum(xk ** 2, axis=1) <= 1.0):
            best = min(best, prob.residual(xk))
            if best < 0:
                return FeasibilityResult(True, xk * root_p, best, lower, it)
        lower = max(lower, prob.dual_bound(z_lin, *z_socs, nu_eq))
        if lower > 0 or best - lower < tol:
            return FeasibilityResult(False, None, best, lower, it)
    raise SolverError(f"interior-point method undecided at nu={nu:.6g} after {it} iterations")


def maxmin_power(inst: SocpInstance, tol_nu: float = TOL_NU, tol_feas: float = TOL_FEAS,
                 max_iterations: int = 100) -> MaxMinSolution:
    """Bisection on the common SINR target using :func:`feasibility_check`.

    Stops when ``hi - lo <= tol_nu * lo``.  The returned allocation is the
    last witness after :func:`_polish`, so ``nu_star`` is the minimum SINR of
    an allocation that respects every budget and ``upper`` is certified.
    """
    if tol_nu <= 0:
        raise ValueError("tol_nu must be positive")
    L, K = inst.L, inst.K
    if np.any(np.all(inst.g <= 0, axis=0)):
        log.warning("UE without an estimable channel; max-min value is 0")
        rho = equal_power_allocation(inst.p_max, L, K)
        return MaxMinSolution(rho=rho, nu_star=0.0, iterations=0, ipm_iterations=0,
                              upper=0.0, margins=inst.sinr(rho), status="degenerate")

    rho = equal_power_allocation(inst.p_max, L, K)
    lo = float(inst.sinr(rho).min())
    u_best = np.sqrt(rho)
    hi = float(inst.interference_free_bound().min())
    iterations = ipm = 0
    while hi - lo > tol_nu * lo and iterations < max_iterations:
        mid = np.sqrt(lo * hi) if hi > 2 * lo else 0.5 * (lo + hi)
        result = feasibility_check(inst, mid, tol_feas, u0=u_best)
        iterations += 1
        ipm += result.iterations
        if result.feasible:
            u_best = result.u
            lo = max(mid, float(inst.sinr(u_best ** 2).min()))
        else:
            hi = mid
        log.debug("bisection nu=%.6g feasible=%s lo=%.6g hi=%.6g ipm=%d",
                  mid, result.feasible, lo, hi, result.iterations)
    rho, lo = _polish(inst, u_best ** 2, lo)
    log.info("max-min solved: nu*=%.6g upper=%.6g bisections=%d ipm=%d",
             lo, hi, iterations, ipm)
    return MaxMinSolution(rho=rho, nu_star=lo, iterations=iterations, ipm_iterations=ipm,
                          upper=hi, margins=inst.sinr(rho) - lo)


def _equalize(inst: SocpInstance, rho: np.ndarray, target: float, rtol: float, max_iter: int):
    # shrinking UE k's column keeps SINR_k >= target and only lowers everyone
    # else's interference, so every pass stays feasible for the target
    for _ in range(max_iter):
        sinr = inst.sinr(rho)
        if sinr.max() <= target * (1 + rtol):
            break
        rho = rho * np.minimum(1.0, target / sinr)[None, :]
    return rho


def _polish(inst: SocpInstance, rho: np.ndarray, lo: float, rounds: int = 5,
            rtol: float = 1e-4, max_iter: int = 500):
    """Alternate uniform scale-up to the tightest AP budget with equalization.

    Neither step can lower the minimum SINR; the result has near-equal SINRs.
    """
    for _ in range(rounds):
        scale = np.min(inst.p_max / np.maximum(transmitted_power(rho), 1e-300))
        rho = rho * scale
        lo = max(lo, float(inst.sinr(rho).min()))
        rho = _equalize(inst, rho, lo, rtol, max_iter)
        if scale < 1 + rtol:
            break
    return rho, lo

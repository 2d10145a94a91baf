"""Singular vectors, the SUB0 condition and closed-form paths built from them.

A singular vector ``u`` with value ``lam`` satisfies ``lam A^T A u in dJ(u)``.
For data ``f = sum gamma_i A u_i`` with A-orthogonal singular vectors obeying
SUB0, the (2,1) path shrinks each component linearly and vanishes at
``tau_i = |gamma_i| / lam_i``. Components sharing a ratio vanish together;
they form one breakpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import linops
from . import regularizers as regs

TIE_RTOL = 1e-12


class Membership(NamedTuple):
    ok: bool
    violation: float


class SubZeroReport(NamedTuple):
    ok: bool
    k: int | None                  # first failing index (1-based) or None
    violation: float               # distance of the failing p_k to K
    membership_value: float | None  # gauge of K at the failing p_k, when closed form


class DecompositionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EigenComponent:
    u: np.ndarray
    gamma: float
    lam: float

    @property
    def ratio(self) -> float:
        return abs(self.gamma) / self.lam


def verify_singular_vector(A, J, u, lam, tol: float = 1e-8) -> Membership:
    u = np.asarray(u, dtype=np.float64)
    if not np.any(u):
        raise ValueError("singular vector must be nonzero")
    p = lam * linops.normal(A, u)
    mem = regs.dual_ball_membership(J, p, tol)
    Ju = regs.evaluate(J, u)
    comp = abs(float(np.vdot(p, u)) - Ju) / (1.0 + Ju)
    v = max(mem.violation, comp)
    return Membership(v <= tol, v)


def peak_singular_value(kernel) -> tuple[float, bool]:
    """``lam = 1 / sum a_j^2`` for a unit peak under convolution with ``a``.

    The peak is a singular vector of the l1 norm when every off-centre
    autocorrelation lag stays within ``sum a_j^2`` in magnitude.
    """
    a = np.asarray(kernel, dtype=np.float64).ravel()
    energy = float(a @ a)
    if energy == 0.0:
        raise ValueError("kernel must be nonzero")
    ac = np.correlate(a, a, mode="full")
    centre = a.size - 1
    off = np.delete(ac, centre)
    valid = bool(off.size == 0 or np.abs(off).max() <= energy * (1 + 1e-12))
    return 1.0 / energy, valid


def gauge(J, p) -> float | None:
    """Minkowski functional of ``K`` (``<= 1`` iff ``p in K``); quadratic kind reports ``p^T M^-1 p``."""
    p = np.asarray(p, dtype=np.float64)
    if J.kind == regs.L1:
        return float(np.abs(p).max())
    if J.kind == regs.LINF:
        return float(np.abs(p).sum())
    if J.kind == regs.QUADRATIC:
        w, V = J._eig
        pt = V.T @ p
        return float(np.sum(pt * pt / w))
    return None


@dataclass(frozen=True, eq=False)
class Decomposition:
    components: tuple               # EigenComponent, sorted by ratio
    operator: linops.Operator = field(repr=False)
    regularizer: regs.Regularizer = field(repr=False)
    images: tuple = field(repr=False)        # A u_i
    breakpoints: np.ndarray = field(repr=False)   # distinct ratios tau_k
    groups: tuple = field(repr=False)        # component indices vanishing at tau_k
    sub0: SubZeroReport | None = None

    @property
    def data(self) -> np.ndarray:
        return sum(c.gamma * a for c, a in zip(self.components, self.images))

    def signal(self) -> np.ndarray:
        return sum(c.gamma * c.u for c in self.components)


def decompose(A, J, components, tol: float = 1e-8, check_sub0: bool = True) -> Decomposition:
    """Validate and order components; computes the SUB0 report."""
    comps = []
    for c in components:
        if not isinstance(c, EigenComponent):
            c = EigenComponent(*c)
        if c.gamma == 0:
            raise DecompositionError("coefficients must be nonzero")
        if c.lam <= 0:
            raise DecompositionError("singular values must be positive")
        comps.append(EigenComponent(np.asarray(c.u, dtype=np.float64), float(c.gamma), float(c.lam)))
    if not comps:
        raise DecompositionError("empty decomposition")
    comps.sort(key=lambda c: c.ratio)
    for c in comps:
        m = verify_singular_vector(A, J, c.u, c.lam, tol)
        if not m.ok:
            raise DecompositionError(f"not a singular vector (violation {m.violation:.3g})")
    images = tuple(linops.apply(A, c.u) for c in comps)
    for i in range(len(comps)):
        for j in range(i):
            ip = abs(float(np.vdot(images[i], images[j])))
            if ip > 1e-10 * (1.0 + np.linalg.norm(images[i]) * np.linalg.norm(images[j])):
                raise DecompositionError(f"components {j + 1} and {i + 1} are not A-orthogonal")
    bps, groups = [], []
    for idx, c in enumerate(comps):
        if bps and c.ratio - bps[-1] <= TIE_RTOL * c.ratio:
            groups[-1].append(idx)
        else:
            bps.append(c.ratio)
            groups.append([idx])
    d = Decomposition(tuple(comps), A, J, images, np.array(bps), tuple(tuple(g) for g in groups))
    if check_sub0:
        d = Decomposition(d.components, A, J, images, d.breakpoints, d.groups, verify_sub0(d, tol))
    return d


def _p(d: Decomposition, first: int) -> np.ndarray:
    return sum(np.sign(c.gamma) * c.lam * linops.normal(d.operator, c.u)
               for c in d.components[first:])


def _q(d: Decomposition, first: int) -> np.ndarray:
    # data-space counterpart of p_k; equals p_k when A is the identity
    out = np.zeros(d.operator.output_shape)
    for c, a in zip(d.components[first:], d.images[first:]):
        out += np.sign(c.gamma) * c.lam * a
    return out


def verify_sub0(d: Decomposition, tol: float = 1e-8) -> SubZeroReport:
    """Check ``p_k in K`` at every breakpoint group start."""
    for g in d.groups:
        k = g[0]
        p = _p(d, k)
        m = regs.dual_ball_membership(d.regularizer, p, tol)
        if not m.ok:
            return SubZeroReport(False, k + 1, m.violation, gauge(d.regularizer, p))
    return SubZeroReport(True, None, 0.0, None)


def _require_sub0(d):
    if d.sub0 is None or not d.sub0.ok:
        raise DecompositionError("SUB0 not verified; closed-form path unavailable")


def _branch(d, tau):
    """Index of the first breakpoint group still active at ``tau`` (len if extinct)."""
    return int(np.searchsorted(d.breakpoints, tau, side="left"))


def _active_start(d, k):
    return d.groups[k][0] if k < len(d.groups) else len(d.components)


def combination_path(d: Decomposition, tau: float) -> np.ndarray:
    """Closed-form (2,1) minimizer ``v_tau`` in signal space."""
    _require_sub0(d)
    if tau < 0:
        raise ValueError("tau must be non-negative")
    out = np.zeros(d.operator.input_shape)
    for c in d.components:
        if tau < c.ratio:
            out += np.sign(c.gamma) * (abs(c.gamma) - tau * c.lam) * c.u
    return out


def combination_R(d: Decomposition, tau: float) -> float:
    _require_sub0(d)
    k = _branch(d, tau)
    first = _active_start(d, k)
    gone = sum(c.gamma ** 2 * float(a @ a) for c, a in zip(d.components[:first], d.images[:first]))
    q = _q(d, first)
    return float(np.sqrt(gone + tau * tau * float(np.vdot(q, q))))


def combination_J(d: Decomposition, tau: float) -> float:
    return regs.evaluate(d.regularizer, combination_path(d, tau))


def critical_times_11(d: Decomposition) -> np.ndarray:
    """Breakpoints ``t_k = tau_k / R(tau_k)`` of the (1,1) path."""
    _require_sub0(d)
    return np.array([tk / combination_R(d, tk) for tk in d.breakpoints])


def combination_reparam_S(d: Decomposition, t: float) -> float:
    """``tau`` with ``u_t = v_tau`` for the (1,1) model."""
    _require_sub0(d)
    if t < 0:
        raise ValueError("t must be non-negative")
    tks = critical_times_11(d)
    if t > tks[-1]:
        return float(d.breakpoints[-1])
    k = int(np.searchsorted(tks, t, side="left"))
    if k == 0:
        return 0.0
    first = _active_start(d, k)
    gone = sum(c.gamma ** 2 * float(a @ a) for c, a in zip(d.components[:first], d.images[:first]))
    q = _q(d, first)
    return float(t * np.sqrt(gone) / np.sqrt(1.0 - t * t * float(np.vdot(q, q))))


def exact_penalization_time(d: Decomposition) -> float:
    """``t_* = 1 / ||q_1||``."""
    return float(1.0 / np.linalg.norm(_q(d, 0)))


def jump_mass(d: Decomposition) -> np.ndarray:
    """Data-space jump ``f - A v_tau1`` of the (1,1) path at ``t_*``."""
    return d.data - linops.apply(d.operator, combination_path(d, float(d.breakpoints[0])))


def singular_path_coefficient(alpha, beta, lam, fnorm, t) -> float:
    """``c(t)`` with ``u_t = c(t) u`` for data ``f = A u`` from one singular vector."""
    if lam <= 0 or fnorm <= 0:
        raise ValueError("lam and fnorm must be positive")
    if t < 0:
        raise ValueError("t must be non-negative")
    if beta == 1 and alpha == 1:
        return 1.0 if t < 1.0 / (lam * fnorm) else 0.0
    if beta == 1 and alpha > 1:
        val = (t * lam) ** (1.0 / (alpha - 1.0)) * fnorm ** ((2.0 - alpha) / (alpha - 1.0))
        return max(1.0 - val, 0.0)
    if alpha == 2 and beta == 2:
        return 1.0 / (1.0 + t * lam * lam * fnorm * fnorm)
    raise NotImplementedError(f"no closed form for (alpha, beta) = ({alpha}, {beta})")


def singular_extinction_time(alpha, lam, fnorm) -> float:
    return 1.0 / (lam * fnorm ** (2.0 - alpha))

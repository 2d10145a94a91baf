"""Absolutely one-homogeneous regularizers in dual form.

Every regularizer is written as ``J(u) = sup_{z in C} <z, D u>`` where ``D``
is either the identity or a forward-difference operator and ``C`` is a set
with a cheap Euclidean projection. The characteristic set in signal space
is ``K = D^T C``. For the identity kinds ``K = C``; for the TV kinds
``C`` is the unit sup-norm ball in gradient space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

L1 = "l1"
LINF = "linf"
TV1D = "tv1d"
TV2D = "tv2d"
QUADRATIC = "quadratic"

KINDS = (L1, LINF, TV1D, TV2D, QUADRATIC)
TV_KINDS = (TV1D, TV2D)

# inner dual-projection defaults for the 2-d prox
TV2D_GAP_TOL = 1e-12
TV2D_MAX_ITER = 2000


@dataclass(frozen=True, eq=False)
class Regularizer:
    kind: str
    shape: tuple
    M: np.ndarray | None = field(default=None, repr=False)
    # eigen-decomposition of M, cached for the ellipsoid projection
    _eig: tuple | None = field(default=None, repr=False)

    @property
    def is_tv(self) -> bool:
        return self.kind in TV_KINDS

    @property
    def dual_shape(self) -> tuple:
        """Shape of the variable ``z`` in the dual representation."""
        if self.kind == TV1D:
            return (self.shape[0] - 1,)
        if self.kind == TV2D:
            return (2,) + self.shape
        return self.shape

    @property
    def diff_norm_sq(self) -> float:
        """Upper bound for ``||D||^2``."""
        if self.kind == TV1D:
            return 4.0
        if self.kind == TV2D:
            return 8.0
        return 1.0


def _shape(shape):
    return (int(shape),) if np.isscalar(shape) else tuple(int(s) for s in shape)


def l1(n) -> Regularizer:
    return Regularizer(L1, _shape(n))


def linf(n) -> Regularizer:
    return Regularizer(LINF, _shape(n))


def tv1d(n) -> Regularizer:
    shape = _shape(n)
    if len(shape) != 1 or shape[0] < 2:
        raise ValueError("tv1d needs a 1-d domain with at least 2 samples")
    return Regularizer(TV1D, shape)


def tv2d(shape) -> Regularizer:
    shape = _shape(shape)
    if len(shape) != 2 or min(shape) < 2:
        raise ValueError("tv2d needs a 2-d domain of at least 2x2")
    return Regularizer(TV2D, shape)


def quadratic(M) -> Regularizer:
    """``J(u) = sqrt(u^T M u)`` for symmetric positive definite ``M``.

    A 1-d ``M`` is read as the diagonal.
    """
    M = np.array(M, dtype=np.float64)
    if M.ndim == 1:
        M = np.diag(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be square")
    if not np.allclose(M, M.T, rtol=0, atol=1e-12 * np.abs(M).max()):
        raise ValueError("M must be symmetric")
    w, V = np.linalg.eigh(M)
    if w.min() <= 0:
        raise ValueError("M must be positive definite")
    M.setflags(write=False)
    return Regularizer(QUADRATIC, (M.shape[0],), M=M, _eig=(w, V))


def from_name(name: str, shape, M=None) -> Regularizer:
    name = name.lower()
    if name == L1:
        return l1(shape)
    if name == LINF:
        return linf(shape)
    if name == TV1D:
        return tv1d(shape)
    if name == TV2D:
        return tv2d(shape)
    if name in (QUADRATIC, "ellipse"):
        if M is None:
            raise ValueError("quadratic regularizer needs M")
        return quadratic(M)
    raise ValueError(f"unknown regularizer {name!r}")


def _check(J, u):
    u = np.asarray(u, dtype=np.float64)
    if u.shape != J.shape:
        raise ValueError(f"signal has shape {u.shape}, regularizer expects {J.shape}")
    return u


# -- difference operator -----------------------------------------------------

def diff(J: Regularizer, u) -> np.ndarray:
    """``D u``: identity for the norm kinds, forward differences for TV."""
    if J.kind == TV1D:
        return np.diff(u)
    if J.kind == TV2D:
        g = np.zeros((2,) + u.shape)
        g[0, :-1, :] = u[1:, :] - u[:-1, :]
        g[1, :, :-1] = u[:, 1:] - u[:, :-1]
        return g
    return np.array(u, dtype=np.float64, copy=True)


def diff_adjoint(J: Regularizer, z) -> np.ndarray:
    """``D^T z`` (negative divergence for TV)."""
    if J.kind == TV1D:
        padded = np.concatenate(([0.0], z, [0.0]))
        return -np.diff(padded)
    if J.kind == TV2D:
        zx = z[0, :-1, :]
        zy = z[1, :, :-1]
        out = np.zeros(J.shape)
        out[:-1, :] -= zx
        out[1:, :] += zx
        out[:, :-1] -= zy
        out[:, 1:] += zy
        return out
    return np.array(z, dtype=np.float64, copy=True)


# -- evaluation ----------------------------------------------------------------

def evaluate(J: Regularizer, u) -> float:
    u = _check(J, u)
    if J.kind == L1:
        return float(np.abs(u).sum())
    if J.kind == LINF:
        return float(np.abs(u).max())
    if J.kind == QUADRATIC:
        return float(np.sqrt(max(u @ J.M @ u, 0.0)))
    return float(np.abs(diff(J, u)).sum())


def nullspace_basis(J: Regularizer) -> list:
    """Orthonormal basis of ``{u : J(u) = 0}``."""
    if J.is_tv:
        n = int(np.prod(J.shape))
        return [np.full(J.shape, 1.0 / np.sqrt(n))]
    return []


# -- projections -----------------------------------------------------------------

def project_l1_ball(q, radius: float = 1.0) -> np.ndarray:
    """Euclidean projection onto ``{x : ||x||_1 <= radius}`` (sort based)."""
    q = np.asarray(q, dtype=np.float64)
    a = np.abs(q).ravel()
    if a.sum() <= radius:
        return q.copy()
    if radius <= 0:
        return np.zeros_like(q)
    srt = np.sort(a)[::-1]
    css = np.cumsum(srt) - radius
    idx = np.arange(1, a.size + 1)
    pos = np.nonzero(srt - css / idx > 0)[0]
    rho = pos[-1] if pos.size else 0  # round-off at tiny radii
    theta = css[rho] / (rho + 1.0)
    return (np.sign(q) * np.maximum(np.abs(q) - theta, 0.0)).reshape(q.shape)


def project_ellipsoid(J: Regularizer, q, radius: float = 1.0) -> np.ndarray:
    """Projection onto ``{x : x^T M^-1 x <= radius^2}``.

    The multiplier ``mu`` of the KKT system ``x = M (M + mu I)^-1 q`` is the
    root of a convex decreasing scalar function; Newton from ``mu = 0``
    approaches it monotonically, bisection guards against round-off.
    """
    w, V = J._eig
    qt = V.T @ np.asarray(q, dtype=np.float64)
    r2 = radius * radius
    if r2 <= 0:
        return np.zeros_like(qt)
    if np.sum(qt * qt / w) <= r2:
        return np.asarray(q, dtype=np.float64).copy()

    def g(mu):
        return np.sum(w * qt * qt / (w + mu) ** 2) - r2

    def dg(mu):
        return -2.0 * np.sum(w * qt * qt / (w + mu) ** 3)

    lo, hi = 0.0, max(np.sqrt(np.sum(w * qt * qt) / r2), 1.0)
    while g(hi) > 0:
        hi *= 2.0
    mu = 0.0
    for _ in range(200):
        val = g(mu)
        if abs(val) <= 1e-15 * r2:
            break
        if val > 0:
            lo = mu
        else:
            hi = mu
        step = mu - val / dg(mu)
        mu = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 1e-12 * max(hi, 1e-300):
            break
    x = w * qt / (w + mu)
    return V @ x


def project_dual_ball(J: Regularizer, q, radius: float = 1.0) -> np.ndarray:
    """Nearest point of ``radius * C`` to ``q``.

    For the TV kinds ``q`` lives in gradient space and the projection is a
    clamp; otherwise ``C = K`` lives in signal space.
    """
    q = np.asarray(q, dtype=np.float64)
    if J.kind in (L1, TV1D, TV2D):
        out = np.clip(q, -radius, radius)
        if J.kind == TV2D:
            out[0, -1, :] = 0.0
            out[1, :, -1] = 0.0
        return out
    if J.kind == LINF:
        return project_l1_ball(q, radius)
    if J.kind == QUADRATIC:
        return project_ellipsoid(J, q, radius)
    raise ValueError(f"unknown regularizer kind {J.kind!r}")


# -- 1-d TV: exact taut string -------------------------------------------------

def taut_string(y, lam: float) -> np.ndarray:
    """Exact minimizer of ``1/2 ||x - y||^2 + lam * sum |x_{i+1} - x_i|``.

    Dynamic programming over the piecewise-linear derivative of the
    message function (Johnson's algorithm); the back-pass clips each
    coordinate into the knot interval of its predecessor.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    n = y.size
    if n <= 1 or lam <= 0:
        return y.copy()
    x = np.empty(2 * n)
    a = np.empty(2 * n)
    b = np.empty(2 * n)
    tm = np.empty(n - 1)
    tp = np.empty(n - 1)
    yl = y.tolist()
    tm[0] = yl[0] - lam
    tp[0] = yl[0] + lam
    l, r = n - 1, n
    x[l], x[r] = tm[0], tp[0]
    a[l], b[l] = 1.0, lam - yl[0]
    a[r], b[r] = -1.0, lam + yl[0]
    afirst, bfirst = 1.0, -lam - yl[1]
    alast, blast = -1.0, yl[1] - lam
    for k in range(1, n - 1):
        alo, blo = afirst, bfirst
        lo = l
        while lo <= r:
            if alo * x[lo] + blo > -lam:
                break
            alo += a[lo]
            blo += b[lo]
            lo += 1
        tm[k] = (-lam - blo) / alo
        l = lo - 1
        x[l] = tm[k]
        ahi, bhi = alast, blast
        hi = r
        while hi >= l:
            if -ahi * x[hi] - bhi < lam:
                break
            ahi += a[hi]
            bhi += b[hi]
            hi -= 1
        tp[k] = (lam + bhi) / (-ahi)
        r = hi + 1
        x[r] = tp[k]
        a[l], b[l] = alo, blo + lam
        a[r], b[r] = ahi, bhi + lam
        afirst, bfirst = 1.0, -lam - yl[k + 1]
        alast, blast = -1.0, yl[k + 1] - lam
    alo, blo = afirst, bfirst
    lo = l
    while lo <= r:
        if alo * x[lo] + blo > 0:
            break
        alo += a[lo]
        blo += b[lo]
        lo += 1
    out = np.empty(n)
    out[n - 1] = -blo / alo
    for k in range(n - 2, -1, -1):
        nxt = out[k + 1]
        out[k] = tp[k] if nxt > tp[k] else (tm[k] if nxt < tm[k] else nxt)
    return out


# -- TV: iterative dual projection -----------------------------------------------

class DualProjection(NamedTuple):
    z: np.ndarray     # feasible point of C
    gap: float        # duality gap of the inner problem (in units of y)
    iterations: int


def tv_dual_projection(J: Regularizer, y, max_iter: int = TV2D_MAX_ITER,
                       gap_tol: float = TV2D_GAP_TOL, z0=None,
                       check_every: int = 10) -> DualProjection:
    """Accelerated projected gradient for ``min_{z in C} 1/2 ||D^T z - y||^2``.

    ``D^T z`` is then the projection of ``y`` onto ``K``. The duality gap
    ``J(v) - <D v, z>`` with ``v = y - D^T z`` bounds the squared distance
    error: ``||v - v*||^2 <= 2 gap``.
    """
    y = np.asarray(y, dtype=np.float64)
    step = 1.0 / J.diff_norm_sq
    z = np.zeros(J.dual_shape) if z0 is None else project_dual_ball(J, z0)
    w = z.copy()
    theta = 1.0
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        z_new = project_dual_ball(J, w - step * diff(J, diff_adjoint(J, w) - y))
        theta_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
        w = z_new + ((theta - 1.0) / theta_new) * (z_new - z)
        z, theta = z_new, theta_new
        if it % check_every == 0 or it == max_iter:
            v = y - diff_adjoint(J, z)
            gap = max(evaluate(J, v) - float(np.vdot(diff(J, v), z)), 0.0)
            if gap <= gap_tol:
                break
    if not np.isfinite(gap):
        v = y - diff_adjoint(J, z)
        gap = max(evaluate(J, v) - float(np.vdot(diff(J, v), z)), 0.0)
    return DualProjection(z, gap, it)


# -- prox ----------------------------------------------------------------------

def prox(J: Regularizer, x, s: float) -> np.ndarray:
    """``argmin_v 1/2 ||v - x||^2 + s J(v)``; ``s = 0`` returns ``x``."""
    x = _check(J, x)
    if s < 0:
        raise ValueError("prox weight must be non-negative")
    if s == 0:
        return x.copy()
    if J.kind == L1:
        return np.sign(x) * np.maximum(np.abs(x) - s, 0.0)
    if J.kind == TV1D:
        return taut_string(x, s)
    if J.kind == TV2D:
        # gap of the scaled problem is s^2 times the gap in units of x/s
        res = tv_dual_projection(J, x / s, gap_tol=TV2D_GAP_TOL / (s * s))
        return x - s * diff_adjoint(J, res.z)
    return x - s * project_dual_ball(J, x / s)


def project_characteristic_set(J: Regularizer, p) -> np.ndarray:
    """Projection of a signal ``p`` onto ``K`` in signal space."""
    p = _check(J, p)
    if J.is_tv:
        return p - prox(J, p, 1.0)
    return project_dual_ball(J, p)


class Membership(NamedTuple):
    ok: bool
    violation: float


def dual_ball_membership(J: Regularizer, p, tol: float = 1e-8,
                         hint=None, max_iter: int = 20_000) -> Membership:
    """Test ``p in K`` up to ``tol``; the violation is the distance to ``K``.

    For 2-d TV the distance comes from an iterative dual projection; the
    returned value is then a certified upper bound, refined until it falls
    below ``tol`` or a lower bound exceeds it. ``hint`` warm-starts ``z``.
    """
    p = _check(J, p)
    if J.kind == L1:
        d = float(np.linalg.norm(p - np.clip(p, -1.0, 1.0)))
    elif J.kind in (LINF, QUADRATIC):
        if J.kind == QUADRATIC:
            w, V = J._eig
            pt = V.T @ p
            if np.sum(pt * pt / w) <= 1.0:
                return Membership(True, 0.0)
        d = float(np.linalg.norm(p - project_dual_ball(J, p)))
    elif J.kind == TV1D:
        d = float(np.linalg.norm(taut_string(p, 1.0)))
    else:
        z = None if hint is None else np.asarray(hint, dtype=np.float64)
        if z is not None:
            upper = float(np.linalg.norm(p - diff_adjoint(J, project_dual_ball(J, z))))
            if upper <= tol or max_iter <= 0:
                return Membership(upper <= tol, upper)
        elif max_iter <= 0:
            return Membership(False, np.inf)
        done = 0
        chunk = 200
        while True:
            res = tv_dual_projection(J, p, max_iter=chunk, gap_tol=0.0, z0=z,
                                     check_every=chunk)
            done += res.iterations
            z = res.z
            upper = float(np.linalg.norm(p - diff_adjoint(J, z)))
            lower = upper - np.sqrt(2.0 * res.gap)
            if upper <= tol or lower > tol or done >= max_iter or res.gap <= 1e-30:
                d = upper
                break
            chunk = min(2 * chunk, 2000)
    return Membership(d <= tol, d)

"""Sliding-window kernels and bounds on their log spectral radius.

For a window of length ``m`` the kernel is ``K = exp(-theta . phi(window))``
with per-letter terms spread evenly across the window so the operator stays
symmetric whenever the window terms are. ``psi(theta)`` is the log of the
dominant eigenvalue of

    (L g)(x) = ∫ K(x, x') g(x') dx'          (m = 2),

and for ``m = 3`` the analogous operator acting on functions of pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .constraints import ConstraintSet, CostTerm, Kind, Mode
from .errors import NoConvergence, NonPositiveTestFunction, UnsupportedKernel, ZeroLeadingTap
from .numerics import Interval, minimize_scalar
from .volume import DualVector

DEFAULT_GRID = 400
DEFAULT_GRID_M3 = 60
MAX_GRID = 3200
MAX_GRID_M3 = 250
MAX_ITER = 100_000


@dataclass(frozen=True)
class KernelSpec:
    window: int
    theta: DualVector
    terms: tuple[CostTerm, ...]
    support: Interval
    symmetric: bool

    def __post_init__(self):
        if self.window not in (2, 3):
            raise UnsupportedKernel(f"window {self.window} is not supported (2 or 3 only)")
        if not (isinstance(self.support, Interval) and self.support.is_finite):
            raise UnsupportedKernel("kernel support must be a finite interval")
        if len(self.theta) != len(self.terms):
            raise ValueError("one dual coordinate per term is required")

    @classmethod
    def from_constraints(cls, cs: ConstraintSet, theta, support: Interval | None = None) -> "KernelSpec":
        th = np.atleast_1d(np.asarray(theta.array if isinstance(theta, DualVector) else theta, dtype=float))
        dv = DualVector(tuple(th), tuple(cs.sign_domain))
        sup = support if support is not None else cs.support
        m = max(cs.max_window, 2)
        if m > 3:
            raise UnsupportedKernel("windows longer than 3 are not supported")
        return cls(m, dv, cs.dual_terms, sup, _symmetric(cs.dual_terms, sup))

    @classmethod
    def correlation_kernel(cls, theta: float, A: float) -> "KernelSpec":
        """``K(x, x') = exp(-theta x x')`` on ``[-A, A]``."""
        t = CostTerm.correlation(1, 0.0, Mode.EQUALITY)
        return cls(2, DualVector((theta,), ("free",)), (t,), Interval(-A, A), True)

    @classmethod
    def gaussian_kernel(cls, theta1: float, theta2: float, A: float) -> "KernelSpec":
        """``K(x, x') = exp(-theta1 (x^2 + x'^2) / 2 - theta2 x x')`` on ``[-A, A]``."""
        terms = (CostTerm.power(0.0, Mode.EQUALITY), CostTerm.correlation(1, 0.0, Mode.EQUALITY))
        return cls(2, DualVector((theta1, theta2), ("free", "free")), terms, Interval(-A, A), True)

    def log_kernel(self, *xs):
        """``log K`` on broadcastable window arrays (oldest first)."""
        m = self.window
        if len(xs) != m:
            raise ValueError(f"kernel takes {m} arguments")
        xs = [np.asarray(x, dtype=float) for x in xs]
        out = np.zeros(np.broadcast(*xs).shape)
        for th, t in zip(self.theta.array, self.terms):
            if th == 0.0:
                continue
            w = t.window
            # average each term over the placements that fit inside the window
            slots = [xs[i:i + w] for i in range(m - w + 1)]
            out = out - th * sum(t.values(*s) for s in slots) / len(slots)
        return out


def _symmetric(terms, support) -> bool:
    rng = np.random.default_rng(7)
    lo, hi = support.lo, support.hi
    if not (math.isfinite(lo) and math.isfinite(hi)):
        lo, hi = -3.0, 3.0
    a = rng.uniform(lo, hi, 16)
    b = rng.uniform(lo, hi, 16)
    for t in terms:
        if t.window == 2:
            with np.errstate(invalid="ignore"):
                if not np.allclose(t.values(a, b), t.values(b, a), rtol=1e-12, atol=1e-12):
                    return False
        elif t.window > 2:
            return False
    return True


def _nodes(support: Interval, n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * support.length
    mid = 0.5 * (support.lo + support.hi)
    return mid + half * x, half * w


def _power_iteration(apply, v0, max_iter=MAX_ITER, rtol=1e-13):
    """Dominant eigenpair of a positive operator with a Collatz-Wielandt stop."""
    v = v0 / np.max(v0)
    lo = hi = math.nan
    for it in range(max_iter):
        u = apply(v)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = u / v
        lo, hi = float(np.min(ratio)), float(np.max(ratio))
        v = u / np.max(u)
        if hi - lo <= rtol * hi:
            return 0.5 * (lo + hi), v, it + 1
    raise NoConvergence(f"power iteration stalled (bracket [{lo}, {hi}])")


@dataclass(frozen=True)
class NystromResult:
    log_eigenvalue: float
    nodes: np.ndarray
    weights: np.ndarray
    vector: np.ndarray
    iterations: int


def nystrom_solve(k: KernelSpec, grid: int = DEFAULT_GRID) -> NystromResult:
    """Nyström discretisation plus power iteration on the weighted kernel matrix."""
    x, w = _nodes(k.support, grid)
    if k.window == 2:
        logk = k.log_kernel(x[:, None], x[None, :])
        shift = float(np.max(logk))
        mat = np.exp(logk - shift) * w[None, :]
        lam, v, it = _power_iteration(lambda g: mat @ g, np.ones(grid))
        return NystromResult(math.log(lam) + shift, x, w, v, it)
    # pair states (x_{t-2}, x_{t-1}) -> (x_{t-1}, x_t)
    logk = k.log_kernel(x[:, None, None], x[None, :, None], x[None, None, :])
    shift = float(np.max(logk))
    ten = np.exp(logk - shift) * w[:, None, None]

    def apply(g):
        g2 = g.reshape(grid, grid)
        return np.einsum("ijk,ij->jk", ten, g2).ravel()

    lam, v, it = _power_iteration(apply, np.ones(grid * grid))
    return NystromResult(math.log(lam) + shift, x, w, v, it)


def kernel_psi_nystrom(k: KernelSpec, grid: int | None = None, refine: bool = True,
                       tol: float = 1e-6) -> float:
    """Log spectral radius by Nyström; doubles the grid until ``|Δpsi| <= tol``."""
    cap = MAX_GRID if k.window == 2 else MAX_GRID_M3
    n = min(grid or (DEFAULT_GRID if k.window == 2 else DEFAULT_GRID_M3), cap)
    val = nystrom_solve(k, n).log_eigenvalue
    if not refine:
        return val
    while n < cap:
        n = min(2 * n, cap)
        new = nystrom_solve(k, n).log_eigenvalue
        if abs(new - val) <= tol:
            return new
        val = new
    if k.window == 3:
        return val
    raise NoConvergence(f"Nyström estimate still moving at {n} nodes")


def nystrom_eigenfunction(k: KernelSpec, grid: int = DEFAULT_GRID) -> Callable:
    """Natural interpolant ``g(x) = (1/lambda) sum_j w_j K(x, x_j) v_j`` of the
    dominant Nyström eigenvector (``m = 2``)."""
    if k.window != 2:
        raise UnsupportedKernel("eigenfunction interpolation needs m = 2")
    res = nystrom_solve(k, grid)
    x, w, v, ll = res.nodes, res.weights, res.vector, res.log_eigenvalue

    def g(y):
        y = np.asarray(y, dtype=float)
        logk = k.log_kernel(y[..., None], x)
        return np.sum(np.exp(logk - ll) * (w * v), axis=-1)

    return g


def kernel_psi_collatz(k: KernelSpec, g: Callable, grid: int = 2001,
                       quad_nodes: int = 512) -> tuple[float, float]:
    """Collatz-Wielandt bracket ``[log inf Lg/g, log sup Lg/g]`` around ``psi``."""
    if k.window != 2:
        raise UnsupportedKernel("the Collatz-Wielandt bracket is implemented for m = 2")
    xq, wq = _nodes(k.support, quad_nodes)
    gq = np.asarray(g(xq), dtype=float) * np.ones_like(xq)
    if np.any(~(gq > 0)):
        raise NonPositiveTestFunction("test function must be strictly positive")

    def log_ratio(y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        gy = np.asarray(g(y), dtype=float) * np.ones_like(y)
        if np.any(~(gy > 0)):
            raise NonPositiveTestFunction("test function must be strictly positive")
        lk = k.log_kernel(y[:, None], xq[None, :]) + np.log(wq * gq)[None, :]
        return special.logsumexp(lk, axis=1) - np.log(gy)

    ys = np.linspace(k.support.lo, k.support.hi, grid)
    r = log_ratio(ys)
    h = ys[1] - ys[0]
    lower, upper = float(np.min(r)), float(np.max(r))
    # refine around the extremes
    for idx, sign in ((int(np.argmin(r)), 1.0), (int(np.argmax(r)), -1.0)):
        a = max(ys[idx] - h, k.support.lo)
        b = min(ys[idx] + h, k.support.hi)
        res = minimize_scalar(lambda y: sign * float(log_ratio(y)[0]), (a, b), tol=1e-12)
        if sign > 0:
            lower = min(lower, res.min)
        else:
            upper = max(upper, -res.min)
    return lower, upper


def donsker_varadhan_psi(k: KernelSpec, grid: int = DEFAULT_GRID) -> float:
    """Lower bound ``E_pi[S(X)]`` with ``S(x) = log ∫ K(x, x') dx'`` and ``pi``
    stationary for the transition density ``K(x, x') / exp(S(x))``."""
    if k.window != 2:
        raise UnsupportedKernel("Donsker-Varadhan bound is implemented for m = 2")
    x, w = _nodes(k.support, grid)
    logk = k.log_kernel(x[:, None], x[None, :]) + np.log(w)[None, :]
    s = special.logsumexp(logk, axis=1)
    trans = np.exp(logk - s[:, None])
    pi, _, _ = _stationary(trans)
    return float(pi @ s)


def _stationary(trans):
    pi = np.full(trans.shape[0], 1.0 / trans.shape[0])
    for it in range(MAX_ITER):
        new = pi @ trans
        new /= new.sum()
        if np.max(np.abs(new - pi)) <= 1e-15:
            return new, it, True
        pi = new
    raise NoConvergence("stationary distribution did not converge")


def kernel_psi_rayleigh(k: KernelSpec, family: str = "constant",
                        alphas: Sequence[float] | None = None, nodes: int = 400) -> float:
    """Rayleigh-quotient lower bound on ``psi`` for symmetric ``m = 2`` kernels.

    ``family="constant"`` uses ``u = 1``; ``family="exponential"`` maximises
    over ``u(x) = exp(-alpha x)`` on a grid of ``alpha`` (which includes 0).
    """
    if k.window != 2 or not k.symmetric:
        raise UnsupportedKernel("Rayleigh quotient needs a symmetric kernel with m = 2")
    x, w = _nodes(k.support, nodes)
    logk = k.log_kernel(x[:, None], x[None, :])
    lw = np.log(w)

    def log_quotient(alpha):
        lu = -alpha * x
        num = special.logsumexp(logk + (lu + lw)[:, None] + (lu + lw)[None, :])
        den = special.logsumexp(2 * lu + lw)
        return float(num - den)

    family = family.lower()
    if family == "constant":
        return log_quotient(0.0)
    if family != "exponential":
        raise ValueError(f"unknown Rayleigh family {family!r}")
    if alphas is None:
        a = k.support.hi
        alphas = np.linspace(-4.0, 4.0, 81) / a
    alphas = np.union1d(np.asarray(alphas, dtype=float), [0.0])
    vals = np.array([log_quotient(a) for a in alphas])
    i = int(np.argmax(vals))
    best = float(vals[i])
    lo = alphas[max(i - 1, 0)]
    hi = alphas[min(i + 1, len(alphas) - 1)]
    if hi > lo:
        res = minimize_scalar(lambda a: -log_quotient(a), (lo, hi), tol=1e-10)
        best = max(best, -res.min)
    return best


def filter_jacobian_log(h: Sequence[float], frequency_check: bool = False):
    """``log|h_0|``; with ``frequency_check`` also the mean of ``log|H(e^{jw})|``."""
    h = np.asarray(h, dtype=float)
    if h.size == 0 or h[0] == 0.0:
        raise ZeroLeadingTap("leading filter tap must be nonzero")
    val = math.log(abs(h[0]))
    if not frequency_check:
        return val

    def log_mag(om):
        resp = np.polyval(h[::-1], np.exp(-1j * om))
        return math.log(abs(resp))

    zeros = np.roots(h) if h.size > 1 else np.array([])
    pts = [float(np.angle(z)) for z in zeros if abs(abs(z) - 1.0) < 1e-12]
    freq = integrate.quad(log_mag, -math.pi, math.pi, epsabs=1e-13, epsrel=1e-12, limit=500,
                          points=pts or None)[0] / (2 * math.pi)
    return val, freq

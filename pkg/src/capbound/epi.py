"""Entropy-power lower bounds on capacity.

Everything here is a function of the volume exponent ``v``::

    C_EPI = 1/2 log(1 + exp(2 v) / (2 pi e sigma^2))

plus closed forms for the power-plus-peak model (through the SNR loss
factor), its quadrature-channel variant, and the one-dimensional upper
concave envelope used when the raw bound is convex near the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize, special

from .numerics import Interval, minimize_scalar

_LOG_2PIE = math.log(2.0 * math.pi * math.e)
_S_BRACKET = (1e-8, 50.0)


@dataclass(frozen=True)
class EpiBound:
    value: float
    v_used: float
    loss_factor: float | None = None

    def __post_init__(self):
        if not self.value >= 0.0:
            raise ValueError("EPI bound must be nonnegative")


def epi_bound(v: float, sigma2: float) -> EpiBound:
    if not sigma2 > 0:
        raise ValueError("noise variance must be positive")
    if v == -math.inf:
        return EpiBound(0.0, v)
    if math.isnan(v):
        raise ValueError("volume exponent is NaN")
    return EpiBound(0.5 * float(np.logaddexp(0.0, 2.0 * v - _LOG_2PIE - math.log(sigma2))), v)


def _log_min_over_s(log_obj: Callable[[float], float], log_limit: float) -> float:
    """``log inf_{s>0} obj(s)`` where ``log_limit`` is the ``s -> 0`` limit."""
    lo, hi = math.log(_S_BRACKET[0]), math.log(_S_BRACKET[1])
    res = minimize_scalar(lambda ls: log_obj(math.exp(ls)), (lo, hi), tol=1e-12)
    return min(res.min, log_limit)


def snr_loss_factor(u: float) -> float:
    """``lambda(u) = inf_s (e^{s-1}/s) [1 - 2Q(sqrt(u s))]^2`` for ``u = A^2/P``."""
    if not u > 0:
        raise ValueError("ratio A^2/P must be positive")
    if math.isinf(u):
        return 1.0

    def log_obj(s):
        return s - 1.0 - math.log(s) + 2.0 * math.log(special.erf(math.sqrt(0.5 * u * s)))

    # 1 - 2Q(z) ~ z sqrt(2/pi) as z -> 0
    log_limit = math.log(2.0 * u / (math.pi * math.e))
    return min(1.0, math.exp(_log_min_over_s(log_obj, log_limit)))


def epi_peak_power(P: float, A: float, sigma2: float) -> EpiBound:
    """EPI bound under average power ``P`` and peak amplitude ``A``."""
    if not (P > 0 and A > 0 and sigma2 > 0):
        raise ValueError("P, A and sigma2 must be positive")
    lam = snr_loss_factor(A * A / P)
    v = 0.5 * math.log(2.0 * math.pi * math.e * P * lam)
    b = epi_bound(v, sigma2)
    return EpiBound(b.value, v, lam)


def epi_quadrature(P: float, A: float, sigma2: float) -> EpiBound:
    """Quadrature-channel variant (complex input with the peak on the modulus)."""
    if not (P > 0 and A > 0 and sigma2 > 0):
        raise ValueError("P, A and sigma2 must be positive")
    if math.isinf(A):
        mu = 1.0
    else:
        c = A * A / (2.0 * P)

        def log_obj(s):
            return s - 1.0 - math.log(s) + math.log(-math.expm1(-s * c))

        mu = math.exp(_log_min_over_s(log_obj, math.log(c) - 1.0))
    value = 0.5 * math.log1p(P / sigma2 * mu)
    v = 0.5 * math.log(2.0 * math.pi * math.e * P * mu)
    return EpiBound(value, v, mu)


# ---------------------------------------------------------------------------
# Upper concave envelope
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PiecewiseBound:
    """Concave majorant of a scalar bound.

    ``segments[i]`` covers ``[breakpoints[i], breakpoints[i+1]]`` and is either
    ``("linear", slope, intercept)``, ``("original",)`` or ``("hull",)``.
    """

    breakpoints: tuple[float, ...]
    segments: tuple[tuple, ...]
    original: Callable[[float], float] = field(repr=False)
    hull: tuple[tuple[float, ...], tuple[float, ...]] | None = field(default=None, repr=False)
    no_tangent: bool = False

    @property
    def tangent_point(self) -> float | None:
        for i, seg in enumerate(self.segments):
            if seg[0] == "linear" and i + 1 < len(self.breakpoints):
                return self.breakpoints[i + 1]
        return None

    @property
    def slope(self) -> float | None:
        for seg in self.segments:
            if seg[0] == "linear":
                return seg[1]
        return None

    def __call__(self, g):
        g_arr = np.atleast_1d(np.asarray(g, dtype=float))
        out = np.empty_like(g_arr)
        bps = self.breakpoints
        for n, x in enumerate(g_arr):
            i = int(np.clip(np.searchsorted(bps, x, side="right") - 1, 0, len(self.segments) - 1))
            seg = self.segments[i]
            if seg[0] == "linear":
                out[n] = seg[1] * x + seg[2]
            elif seg[0] == "hull":
                out[n] = np.interp(x, *self.hull)
            else:
                out[n] = self.original(x)
        return float(out[0]) if np.ndim(g) == 0 else out


def _derivative(f, x, rel=1e-6):
    h = rel * max(abs(x), 1e-3)
    return (f(x + h) - f(x - h)) / (2.0 * h)


def _upper_hull(xs, ys):
    hull: list[int] = []
    for i in range(len(xs)):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            cross = (xs[i1] - xs[i0]) * (ys[i] - ys[i0]) - (ys[i1] - ys[i0]) * (xs[i] - xs[i0])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def _concave(vals, tol=1e-9):
    return bool(np.all(np.diff(vals, 2) <= tol))

def _origin_tangent(h, xs, ys):
    # bracket on the samples already in hand, then refine with the true derivative
    hv = xs[1:-1] * np.gradient(ys, xs)[1:-1] - ys[1:-1]
    idx = np.flatnonzero((hv[:-1] > 0) & (hv[1:] <= 0))
    if len(idx):
        a, b = xs[max(int(idx[0]), 1)], xs[min(int(idx[0]) + 3, len(xs) - 1)]
        if h(a) > 0 >= h(b):
            return optimize.brentq(h, a, b, xtol=1e-14, rtol=1e-14)
    hv = np.array([h(x) for x in xs[1:]])
    idx = np.flatnonzero((hv[:-1] > 0) & (hv[1:] <= 0))
    if not len(idx):
        return None
    i = int(idx[0])
    return optimize.brentq(h, xs[1 + i], xs[2 + i], xtol=1e-14, rtol=1e-14)


def uce_1d(bound: Callable[[float], float], range_: Interval, samples: int = 2001) -> PiecewiseBound:
    """Upper concave envelope of ``bound`` on ``range_``.

    The usual case (``bound(0) = 0``, convex then concave) is solved exactly:
    the tangent from the origin touches at ``Gamma C'(Gamma) = C(Gamma)``.
    Anything else falls back to the concave majorant of the samples.
    """
    lo, hi = range_.lo, range_.hi
    if not range_.is_finite:
        raise ValueError("UCE needs a finite range")
    xs = np.linspace(lo, hi, samples)
    ys = np.array([bound(x) for x in xs])
    if _concave(ys):
        return PiecewiseBound((lo, hi), (("original",),), bound)

    if lo == 0.0 and abs(ys[0]) <= 1e-12:
        def h(g):
            return g * _derivative(bound, g) - bound(g)

        g_star = _origin_tangent(h, xs, ys)
        if g_star is not None:
            slope = bound(g_star) / g_star
            tail = ys[xs >= g_star]
            if _concave(tail) and np.all(slope * xs[xs < g_star] >= ys[xs < g_star] - 1e-12):
                return PiecewiseBound((lo, g_star, hi), (("linear", slope, 0.0), ("original",)), bound)

    idx = _upper_hull(xs, ys)
    hx, hy = tuple(xs[idx]), tuple(ys[idx])
    return PiecewiseBound((lo, hi), (("hull",),), bound, (hx, hy), no_tangent=True)

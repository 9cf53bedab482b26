"""Quadrature, special functions and optimisation primitives.

Every partition-type integral in the package goes through :func:`log_int_exp`,
which evaluates ``log ∫ exp(g(x)) dx`` with a max-shift so that integrands
spanning hundreds of orders of magnitude stay representable. Infinite and
half-infinite domains are mapped onto a bounded ``t`` interval with
``x = c + t / (1 - t**2)`` before adaptive Gauss-Kronrod integration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate, optimize, special

from .errors import DivergentIntegral, NonFinite, Unbounded

# Threshold on positive dual coordinates below which a constraint is inactive.
INACTIVE_THRESHOLD = 1e-10


@dataclass(frozen=True)
class Interval:
    lo: float = -math.inf
    hi: float = math.inf

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, x):
        return (np.asarray(x) >= self.lo) & (np.asarray(x) <= self.hi)

    def intersect(self, other: "Interval") -> "Interval | None":
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return Interval(lo, hi) if lo < hi else None


REAL_LINE = Interval()


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_subdivisions: int = 2000

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("quadrature tolerances must be positive")

    def tighter(self, factor: float = 10.0) -> "QuadratureSpec":
        return QuadratureSpec(self.rel_tol / factor, self.abs_tol / factor, self.max_subdivisions)


DEFAULT_QUADRATURE = QuadratureSpec()


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------

def q_function(u):
    """Gaussian tail probability ``P(N(0,1) > u)``; total on the extended reals."""
    out = 0.5 * special.erfc(np.asarray(u, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def log_normal_interval(a, b):
    """``log P(a < N(0,1) < b)`` for ``a <= b``, stable far in the tails."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    # reflect intervals in the right tail so both log-cdfs stay well scaled
    flip = a > 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    lhi = special.log_ndtr(hi)
    llo = special.log_ndtr(lo)
    with np.errstate(divide="ignore"):
        out = lhi + np.log1p(-np.exp(llo - lhi))
        # intervals around the origin: the erf terms add, so tiny widths survive
        r2 = math.sqrt(2.0)
        mid = np.log(0.5 * (special.erf(hi / r2) - special.erf(lo / r2)))
    out = np.where((hi > 0) & (hi < 1.0), mid, out)
    return float(out) if out.ndim == 0 else out


_SHI_SERIES_MAX = 2.0


def _shi_series(z: float) -> float:
    term = z  # z^(2k+1) / (2k+1)!
    total = z
    k = 0
    while True:
        k += 1
        term *= z * z / ((2 * k) * (2 * k + 1))
        add = term / (2 * k + 1)
        total += add
        if add <= 1e-17 * total:
            return total


def _log_sinhc(u):
    u = np.asarray(u, dtype=float)
    small = u < 1e-4
    big = np.where(small, 1.0, u)
    with np.errstate(divide="ignore"):
        out = np.where(small, u * u / 6.0,
                       big - np.log(2.0 * big) + np.log1p(-np.exp(-2.0 * big)))
    return out


def log_shi(z: float, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Logarithm of the hyperbolic sine integral, finite for every ``z > 0``."""
    if z < 0:
        raise ValueError("shi is defined here for z >= 0")
    if z == 0:
        return -math.inf
    if z <= _SHI_SERIES_MAX:
        return math.log(_shi_series(z))
    return log_int_exp(_log_sinhc, Interval(0.0, z), spec)


def shi(z: float, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Hyperbolic sine integral ``∫_0^z sinh(u)/u du``.

    Returns ``inf`` once the value leaves double range; use :func:`log_shi`
    there.
    """
    if z < 0:
        raise ValueError("shi is defined here for z >= 0")
    if z <= _SHI_SERIES_MAX:
        return _shi_series(z) if z > 0 else 0.0
    ls = log_shi(z, spec)
    return math.exp(ls) if ls < 709.0 else math.inf


# ---------------------------------------------------------------------------
# Log-domain quadrature
# ---------------------------------------------------------------------------

def _eval(g, x):
    """Evaluate ``g`` on an array, falling back to a scalar loop."""
    x = np.asarray(x, dtype=float)
    try:
        out = np.asarray(g(x), dtype=float)
        if out.shape == x.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(g(float(xi))) for xi in x.ravel()]).reshape(x.shape)


class _Map:
    """Map from a bounded ``t`` interval onto the integration domain."""

    def __init__(self, domain: Interval):
        self.domain = domain
        lo, hi = domain.lo, domain.hi
        if domain.is_finite:
            self.kind, self.c, self.t_lo, self.t_hi = "finite", 0.0, lo, hi
        elif math.isinf(lo) and math.isinf(hi):
            self.kind, self.c, self.t_lo, self.t_hi = "line", 0.0, -1.0, 1.0
        elif math.isinf(hi):
            self.kind, self.c, self.t_lo, self.t_hi = "right", lo, 0.0, 1.0
        else:
            self.kind, self.c, self.t_lo, self.t_hi = "left", hi, -1.0, 0.0

    def x(self, t):
        if self.kind == "finite":
            return t
        return self.c + t / (1.0 - t * t)

    def log_jac(self, t):
        if self.kind == "finite":
            return np.zeros_like(np.asarray(t, dtype=float))
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return np.log1p(t * t) - 2.0 * np.log1p(-t * t)

    def t(self, x):
        if self.kind == "finite":
            return x
        y = x - self.c
        return 2.0 * y / (1.0 + math.sqrt(1.0 + 4.0 * y * y))

    def open_ends(self):
        ends = []
        if self.kind in ("line", "left"):
            ends.append(-1.0)
        if self.kind in ("line", "right"):
            ends.append(1.0)
        return ends


class _Prepared(NamedTuple):
    map: _Map
    shift: float
    points: tuple


def _log_integrand(g, m: _Map, t):
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        val = _eval(g, m.x(t)) + m.log_jac(t)
    return val


def _prepare(g, domain: Interval, probes: int = 401) -> _Prepared:
    m = _Map(domain)
    a, b = m.t_lo, m.t_hi
    span = b - a
    inner = np.linspace(a, b, probes)
    if m.kind == "line":
        inner = inner[1:-1]
    elif m.kind == "right":
        inner = inner[:-1]
    elif m.kind == "left":
        inner = inner[1:]
    lv = _log_integrand(g, m, inner)
    if np.any(np.isnan(lv)):
        raise NonFinite("integrand evaluated to NaN")
    if np.any(lv == math.inf):
        raise DivergentIntegral("integrand is infinite inside the domain")
    # tails of infinite domains must have decayed to negligible mass
    for end in m.open_ends():
        far = _log_integrand(g, m, np.array([end - np.sign(end) * 1e-9]))[0]
        if math.isnan(far) or far > np.max(lv) - 30.0:
            raise DivergentIntegral("integrand does not decay at infinity", direction=float(end))
    i = int(np.argmax(lv))
    peak_val = float(lv[i])
    if peak_val == -math.inf:
        return _Prepared(m, -math.inf, ())
    t_peak = float(inner[i])
    # refine the peak between neighbouring probes
    lo_n = inner[max(i - 1, 0)]
    hi_n = inner[min(i + 1, len(inner) - 1)]
    if hi_n > lo_n:
        res = optimize.minimize_scalar(lambda t: -float(_log_integrand(g, m, np.array([t]))[0]),
                                       bounds=(lo_n, hi_n), method="bounded",
                                       options={"xatol": 1e-12 * max(span, 1.0)})
        if np.isfinite(res.fun) and -res.fun > peak_val:
            peak_val, t_peak = float(-res.fun), float(res.x)
    # curvature-based width of the peak; breakpoints help QUADPACK find it
    delta = 1e-5 * span
    around = np.clip(np.array([t_peak - delta, t_peak, t_peak + delta]), a, b)
    lvals = _log_integrand(g, m, around)
    pts = [t_peak]
    if np.all(np.isfinite(lvals)):
        curv = -(lvals[0] - 2 * lvals[1] + lvals[2]) / delta ** 2
        if curv > 0:
            w = 1.0 / math.sqrt(curv)
            pts += [t_peak + s * k * w for k in (1.0, 5.0, 25.0) for s in (-1.0, 1.0)]
    # cost functions built from |x| have their kink at the origin
    if domain.lo < 0.0 < domain.hi:
        pts.append(float(m.t(0.0)))
    pts = sorted({p for p in pts if a + 1e-12 * span < p < b - 1e-12 * span})
    return _Prepared(m, peak_val, tuple(pts))


def _quad(fun, prep: _Prepared, spec: QuadratureSpec):
    m = prep.map
    kw = dict(epsabs=spec.abs_tol, epsrel=spec.rel_tol, limit=spec.max_subdivisions)
    if prep.points:
        kw["points"] = prep.points
    with np.errstate(over="ignore", under="ignore"):
        val, err = integrate.quad(fun, m.t_lo, m.t_hi, full_output=0, **kw)[:2]
    if not math.isfinite(val):
        raise DivergentIntegral("quadrature returned a non-finite value")
    return val, err


def log_int_exp(g: Callable, domain: Interval = REAL_LINE,
                spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """``log ∫_domain exp(g(x)) dx`` with max-shift stabilisation.

    Raises :class:`DivergentIntegral` when the integrand fails to decay on an
    infinite domain.
    """
    prep = _prepare(g, domain)
    if prep.shift == -math.inf:
        return -math.inf
    m = prep.map

    def fun(t):
        v = float(_log_integrand(g, m, np.array([t]))[0]) - prep.shift
        return math.exp(v) if v > -745.0 else 0.0

    val, _ = _quad(fun, prep, spec)
    if val <= 0.0:
        return -math.inf
    return math.log(val) + prep.shift


def integrate_weighted(h: Callable, g: Callable, domain: Interval = REAL_LINE,
                       spec: QuadratureSpec = DEFAULT_QUADRATURE,
                       log_norm: float | None = None) -> float:
    """``∫ h(x) exp(g(x) - log_norm) dx``; with the default ``log_norm`` this is
    the expectation of ``h`` under the density proportional to ``exp(g)``."""
    if log_norm is None:
        log_norm = log_int_exp(g, domain, spec)
    prep = _prepare(g, domain)
    m = prep.map

    def fun(t):
        x = float(m.x(t))
        v = float(_log_integrand(g, m, np.array([t]))[0]) - log_norm
        return float(h(x)) * math.exp(v) if v > -745.0 else 0.0

    val, _ = _quad(fun, prep, spec)
    return val


# ---------------------------------------------------------------------------
# Optimisation
# ---------------------------------------------------------------------------

class ScalarMinimum(NamedTuple):
    argmin: float
    min: float
    at_boundary: bool


def minimize_scalar(f: Callable[[float], float], bracket: Interval | Sequence[float],
                    tol: float = 1e-10, open_ends: tuple[bool, bool] = (False, False)) -> ScalarMinimum:
    """Bounded Brent minimisation of a unimodal function.

    ``open_ends`` marks bracket ends that are excluded (e.g. ``s > 0``); the
    closest admissible point is then ``end ± tol``. When the minimum sits on an
    end the end point is returned with ``at_boundary`` set.
    """
    lo, hi = (bracket.lo, bracket.hi) if isinstance(bracket, Interval) else bracket
    lo_eff = lo + tol if open_ends[0] else lo
    hi_eff = hi - tol if open_ends[1] else hi

    def fx(x):
        y = float(f(x))
        if math.isnan(y):
            raise NonFinite(f"objective is NaN at {x!r}")
        return y

    res = optimize.minimize_scalar(fx, bounds=(lo_eff, hi_eff), method="bounded",
                                   options={"xatol": tol, "maxiter": 10_000})
    best_x, best_f = float(res.x), float(res.fun)
    at_edge = False
    for edge in (lo_eff, hi_eff):
        fe = fx(edge)
        if fe <= best_f:
            best_x, best_f, at_edge = edge, fe, True
    return ScalarMinimum(best_x, best_f, at_edge)


class ConvexMinimum(NamedTuple):
    argmin: np.ndarray
    min: float
    active: np.ndarray


def minimize_convex(f: Callable[[np.ndarray], float], dim: int, sign_domain: Sequence[str],
                    init: Sequence[float], tol: float = 1e-12) -> ConvexMinimum:
    """Minimise a convex function of ``dim`` dual variables.

    Coordinates marked ``"positive"`` are optimised as ``exp(z)``; those
    marked ``"free"`` range over the real line. Points where ``f`` raises
    :class:`DivergentIntegral` are treated as outside the domain. After
    convergence each positive coordinate is tested at exactly zero and set
    there if that is no worse (an inactive constraint).
    """
    sign_domain = list(sign_domain)
    if len(sign_domain) != dim:
        raise ValueError("sign_domain length must equal dim")
    init = np.asarray(init, dtype=float)
    positive = np.array([s == "positive" for s in sign_domain], dtype=bool)
    if dim == 0:
        return ConvexMinimum(np.zeros(0), float(f(np.zeros(0))), np.zeros(0, dtype=bool))

    def safe(theta):
        try:
            val = float(f(theta))
        except DivergentIntegral:
            return math.inf
        if math.isnan(val):
            return math.inf
        return val

    fixed = np.full(dim, np.nan)
    theta, best = _minimize_free(safe, init, positive, fixed, tol)

    # boundary snapping, one coordinate at a time
    for j in np.flatnonzero(positive):
        if theta[j] == 0.0:
            continue
        trial = theta.copy()
        trial[j] = 0.0
        ft = safe(trial)
        if ft <= best + max(tol, 1e-12 * abs(best)):
            fixed[j] = 0.0
            if np.all(np.isfinite(fixed)):
                theta, best = trial, ft
            else:
                theta2, best2 = _minimize_free(safe, trial, positive, fixed, tol)
                theta, best = (theta2, best2) if best2 <= ft else (trial, ft)

    f_init = safe(init)
    if f_init < best:
        theta, best = init.copy(), f_init
    if not math.isfinite(best):
        raise DivergentIntegral("objective is infinite on the whole search path")
    active = np.where(positive, theta > INACTIVE_THRESHOLD, True)
    theta = np.where(positive & ~active, 0.0, theta)
    return ConvexMinimum(theta, best, active)


def _minimize_free(safe, start, positive, fixed, tol):
    free_idx = np.flatnonzero(~np.isfinite(fixed))
    start = np.asarray(start, dtype=float)

    def theta_of(z):
        th = np.where(np.isfinite(fixed), fixed, start).astype(float)
        zz = np.asarray(z, dtype=float)
        th[free_idx] = np.where(positive[free_idx], np.exp(np.minimum(zz, 700.0)), zz)
        return th

    def F(z):
        return safe(theta_of(z))

    s = start[free_idx]
    pos = positive[free_idx]
    z0 = np.where(pos, np.log(np.maximum(s, 1e-300)), s)
    z0 = np.where(pos & (s <= 0), math.log(1e-3), z0)
    if not math.isfinite(F(z0)):
        z0 = _find_finite_start(F, z0, pos)
    k = len(z0)
    step = np.where(pos, 0.5, np.maximum(0.1 * np.abs(z0), 0.1))
    if k == 1:
        best_z, best_f = _line_minimize(F, z0, float(step[0]), bool(pos[0]))
        _check_unbounded(F, best_z, best_f, pos)
        return theta_of(best_z), best_f
    best_z, best_f = z0, F(z0)
    for attempt in range(3):
        simplex = np.vstack([best_z] + [best_z + np.eye(k)[i] * step[i] for i in range(k)])
        res = optimize.minimize(F, best_z, method="Nelder-Mead",
                                options={"initial_simplex": simplex, "xatol": 1e-11,
                                         "fatol": tol * 1e-2, "maxiter": 4000 * k,
                                         "maxfev": 8000 * k, "adaptive": k > 2})
        improved = res.fun < best_f - tol
        if res.fun <= best_f:
            best_z, best_f = np.asarray(res.x, dtype=float), float(res.fun)
        step = step * 0.1
        if not improved and attempt > 0:
            break
    _check_unbounded(F, best_z, best_f, pos)
    return theta_of(best_z), best_f


def _line_minimize(F, z0, step, positive):
    """Bracket-then-Brent search for a unimodal function of one variable."""
    def f(z):
        return min(F(np.array([z])), 1e300)

    z0 = float(z0[0])
    f0 = f(z0)
    fr, fl = f(z0 + step), f(z0 - step)
    if f0 <= fr and f0 <= fl:
        a, c = z0 - step, z0 + step
    else:
        d = step if fr < fl else -step
        b, fb = z0 + d, min(fr, fl)
        a = z0
        limit = 80.0 if positive else 1e12
        while True:
            d *= 2.0
            c = b + d
            fc = f(c)
            if fc > fb or abs(c - z0) > limit:
                break
            a, b, fb = b, c, fc
        a, c = min(a, c), max(a, c)
    res = optimize.minimize_scalar(f, bounds=(a, c), method="bounded",
                                   options={"xatol": 1e-11, "maxiter": 500})
    cands = [(float(res.fun), float(res.x)), (f0, z0), (f(a), a), (f(c), c)]
    fbest, zbest = min(cands)
    return np.array([zbest]), F(np.array([zbest]))


def _find_finite_start(F, z0, pos):
    for scale in (1.0, 2.0, 4.0, 8.0, 16.0, 32.0):
        for sign in (1.0, -1.0):
            z = z0 + np.where(pos, sign * scale, sign * 0.5 * scale)
            if math.isfinite(F(z)):
                return z
    raise DivergentIntegral("no finite starting point for the dual objective")


def _check_unbounded(F, z, fz, pos):
    if fz < -1e8:
        raise Unbounded("dual objective decreases without bound")
    runaway = np.where(pos, z > 40.0, np.abs(z) > 1e8)
    for i in np.flatnonzero(runaway):
        probe = z.copy()
        probe[i] = z[i] + (5.0 if pos[i] else np.sign(z[i]) * abs(z[i]))
        if F(probe) < fz - 1e-9:
            raise Unbounded("dual objective decreases without bound", )

"""Direct mutual-information lower bounds for memoryless constraint sets.

With the input uniform on the constraint body, per-letter mutual information is
bounded below by

    v - 1/2 log(2 pi e sigma^2) - inf_theta { theta . Gamma + E log zeta_theta(Y) },

    zeta_theta(y) = ∫ exp(-theta . phi(x)) N(y - x; sigma^2) dx,

where ``Y`` follows the asymptotic output marginal (the theta*-tilted single
letter density convolved with the noise). Also here: the bound for inputs
tilted by ``exp(alpha x^2)`` on a peak-limited body, and a Jensen-type pair
bound with an optional Gaussian change of measure.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .constraints import ConstraintSet, FinitePointSet, Kind
from .errors import DivergentIntegral, UnsupportedKernel
from .numerics import (
    DEFAULT_QUADRATURE,
    Interval,
    QuadratureSpec,
    integrate_weighted,
    log_int_exp,
    log_normal_interval,
    minimize_convex,
)
from .volume import DualVector, TiltedDensity, tilted_density, volume_exponent

_LOG_2PIE = math.log(2.0 * math.pi * math.e)
_PANEL_NODES = 16


# ---------------------------------------------------------------------------
# Single-letter integration rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Rule:
    """Nodes and log-weights of a composite Gauss-Legendre (or alphabet) rule."""

    nodes: np.ndarray
    log_w: np.ndarray


def _panel_rule(lo: float, hi: float, width: float, n: int = _PANEL_NODES) -> _Rule:
    cuts = [lo, hi] + ([0.0] if lo < 0.0 < hi else [])
    cuts = sorted(cuts)
    edges = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        k = max(1, int(math.ceil((b - a) / width)))
        edges.extend(np.linspace(a, b, k + 1)[:-1])
    edges.append(hi)
    t, w = np.polynomial.legendre.leggauss(n)
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        xs.append(0.5 * (a + b) + 0.5 * (b - a) * t)
        ws.append(0.5 * (b - a) * w)
    return _Rule(np.concatenate(xs), np.log(np.concatenate(ws)))


def _support_rule(support, sigma: float, reach: float | None = None) -> _Rule | None:
    if isinstance(support, FinitePointSet):
        return _Rule(support.array, support.log_weights)
    if support.is_finite:
        return _panel_rule(support.lo, support.hi, 0.5 * sigma)
    if reach is None:
        return None
    lo = max(support.lo, -reach)
    hi = min(support.hi, reach)
    return _panel_rule(lo, hi, 0.5 * sigma)


def _is_power_case(cs: ConstraintSet) -> float | None:
    """Half-width of the support when ``cs`` is a single power term on a
    symmetric interval (``inf`` for the real line), else ``None``."""
    terms = cs.dual_terms
    sup = cs.support
    if len(terms) != 1 or terms[0].kind is not Kind.POWER or not isinstance(sup, Interval):
        return None
    if sup.lo == -sup.hi:
        return sup.hi
    return None


# ---------------------------------------------------------------------------
# zeta
# ---------------------------------------------------------------------------

def _log_zeta_closed(theta: float, A: float, y, sigma2: float):
    d = 1.0 + 2.0 * theta * sigma2
    if d <= 0:
        raise DivergentIntegral("zeta diverges: 1 + 2 theta sigma^2 <= 0", direction=(theta,))
    y = np.asarray(y, dtype=float)
    m = y / d
    s = math.sqrt(sigma2 / d)
    return -0.5 * math.log(d) - theta * y * y / d + log_normal_interval((-A - m) / s, (A - m) / s)


def log_zeta(cs: ConstraintSet, theta, y, sigma2: float, spec: QuadratureSpec = DEFAULT_QUADRATURE,
             method: str = "auto"):
    """``log zeta_theta(y)``, vectorised over ``y``.

    ``method`` is ``"closed"`` (single power term on a symmetric support),
    ``"rule"`` (composite Gauss-Legendre on a bounded support or a finite
    alphabet), ``"quadrature"`` (adaptive, one integral per ``y``) or
    ``"auto"``.
    """
    if not cs.memoryless:
        raise UnsupportedKernel("direct bounds need a memoryless constraint set")
    th = np.atleast_1d(np.asarray(theta.array if isinstance(theta, DualVector) else theta, dtype=float))
    y_arr = np.asarray(y, dtype=float)
    A = _is_power_case(cs)
    if method == "auto":
        if A is not None:
            method = "closed"
        elif isinstance(cs.support, FinitePointSet) or cs.support.is_finite:
            method = "rule"
        else:
            method = "quadrature"
    if method == "closed":
        if A is None:
            raise ValueError("closed form needs a single power term on a symmetric support")
        out = _log_zeta_closed(float(th[0]), A, y_arr, sigma2)
    elif method == "rule":
        rule = _support_rule(cs.support, math.sqrt(sigma2))
        if rule is None:
            raise ValueError("rule integration needs a bounded support")
        out = _log_zeta_rule(cs, th, rule, y_arr, sigma2)
    elif method == "quadrature":
        flat = np.array([_log_zeta_quad(cs, th, float(v), sigma2, spec) for v in y_arr.ravel()])
        out = flat.reshape(y_arr.shape)
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(out) if np.ndim(out) == 0 else out


def _log_zeta_rule(cs, th, rule: _Rule, y, sigma2):
    base = -cs.energy(th, rule.nodes) + rule.log_w
    y = np.asarray(y, dtype=float)
    diff = y[..., None] - rule.nodes
    return special.logsumexp(base - diff * diff / (2.0 * sigma2), axis=-1) - 0.5 * math.log(2 * math.pi * sigma2)


def _log_zeta_quad(cs, th, y, sigma2, spec):
    sup = cs.support
    if isinstance(sup, FinitePointSet):
        return float(_log_zeta_rule(cs, th, _support_rule(sup, 1.0), np.array(y), sigma2))
    g = lambda x: -cs.energy(th, x) - (y - x) ** 2 / (2.0 * sigma2)
    return log_int_exp(g, sup, spec) - 0.5 * math.log(2 * math.pi * sigma2)


def zeta(cs: ConstraintSet, theta, y, sigma2: float, spec: QuadratureSpec = DEFAULT_QUADRATURE):
    return np.exp(log_zeta(cs, theta, y, sigma2, spec))


# ---------------------------------------------------------------------------
# Marginals
# ---------------------------------------------------------------------------

def asymptotic_input_marginal(cs: ConstraintSet, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> TiltedDensity:
    """Single-letter marginal of the uniform distribution on the body."""
    rep = volume_exponent(cs, spec)
    return tilted_density(cs, rep.theta_star, spec)


@dataclass(frozen=True)
class OutputDensity:
    representation: str
    params: dict = field(repr=False)
    symmetric: bool
    variance: float

    def logpdf(self, y):
        y = np.asarray(y, dtype=float)
        p = self.params
        if self.representation == "closed_form":
            s2, A, theta = p["sigma2"], p["A"], p["theta"]
            if theta == 0.0:
                # uniform input on [-A, A]
                s = math.sqrt(s2)
                out = log_normal_interval((y - A) / s, (y + A) / s) - math.log(2 * A)
            else:
                pp = 1.0 / (2.0 * theta)
                eta = pp / (pp + s2)
                se = math.sqrt(pp * s2 / (pp + s2))
                out = (-0.5 * y * y / (pp + s2) - 0.5 * math.log(2 * math.pi * (pp + s2))
                       + log_normal_interval((eta * y - A) / se, (eta * y + A) / se)
                       - log_normal_interval(-A / math.sqrt(pp), A / math.sqrt(pp)))
        else:
            rule: _Rule = p["rule"]
            diff = y[..., None] - rule.nodes
            out = special.logsumexp(p["log_px"] + rule.log_w - diff * diff / (2 * p["sigma2"]), axis=-1) \
                - 0.5 * math.log(2 * math.pi * p["sigma2"])
        return float(out) if np.ndim(out) == 0 else out

    def pdf(self, y):
        return np.exp(self.logpdf(y))


def output_marginal(inp: TiltedDensity, sigma2: float, method: str = "auto",
                    spec: QuadratureSpec = DEFAULT_QUADRATURE) -> OutputDensity:
    """Density of ``X + N(0, sigma2)`` for a tilted single-letter input ``X``."""
    A = _is_power_case(inp.cs)
    var = inp.variance(spec) + sigma2
    sym = _symmetric(inp)
    if method == "auto":
        method = "closed_form" if A is not None and math.isfinite(A) else "grid"
    if method == "closed_form":
        if A is None or not math.isfinite(A):
            raise ValueError("closed form needs a power term with a peak limit")
        return OutputDensity("closed_form", {"sigma2": sigma2, "A": A, "theta": float(inp.theta.array[0])},
                             sym, var)
    if method != "grid":
        raise ValueError(f"unknown method {method!r}")
    sd = math.sqrt(max(var - sigma2, 0.0))
    rule = _support_rule(inp.support, math.sqrt(sigma2), reach=14.0 * sd + 1e-300)
    log_px = inp.logpdf(rule.nodes)
    # renormalise against the rule so the grid density integrates to one
    log_px = log_px - special.logsumexp(log_px + rule.log_w)
    return OutputDensity("grid", {"sigma2": sigma2, "rule": rule, "log_px": log_px}, sym, var)


def _symmetric(inp: TiltedDensity) -> bool:
    sup = inp.support
    if isinstance(sup, FinitePointSet):
        pts = np.sort(sup.array)
        return bool(np.allclose(pts, -pts[::-1]))
    if sup.lo != -sup.hi:
        return False
    xs = np.linspace(-3, 3, 13) * (min(sup.hi, 10.0))
    return bool(np.allclose(inp.logpdf(xs), inp.logpdf(-xs), rtol=1e-12, atol=1e-12))


# ---------------------------------------------------------------------------
# Direct bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DirectBoundReport:
    value: float
    v_used: float
    theta_star_volume: DualVector
    theta_star_bound: DualVector
    inf_term: float
    sigma2: float
    diagnostics: dict = field(default_factory=dict)

    def recompute(self) -> float:
        return self.v_used - 0.5 * (_LOG_2PIE + math.log(self.sigma2)) - self.inf_term


def _y_rule(lo: float, hi: float, n: int):
    t, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (hi - lo)
    return 0.5 * (lo + hi) + half * t, half * w


def _y_range(inp: TiltedDensity, out: OutputDensity, sigma: float):
    sup = inp.support
    if isinstance(sup, FinitePointSet):
        return float(sup.array.min()) - 8 * sigma, float(sup.array.max()) + 8 * sigma
    if sup.is_finite:
        return sup.lo - 8 * sigma, sup.hi + 8 * sigma
    r = 8.0 * math.sqrt(out.variance)
    return -r, r


def direct_bound(cs: ConstraintSet, sigma2: float, spec: QuadratureSpec = DEFAULT_QUADRATURE,
                 y_nodes: int = 400) -> DirectBoundReport:
    if not cs.memoryless:
        raise UnsupportedKernel("direct bounds need a memoryless constraint set")
    if not sigma2 > 0:
        raise ValueError("noise variance must be positive")
    start = time.perf_counter()
    vol = volume_exponent(cs, spec)
    inp = tilted_density(cs, vol.theta_star, spec)
    out = output_marginal(inp, sigma2, spec=spec)
    sigma = math.sqrt(sigma2)
    lo, hi = _y_range(inp, out, sigma)
    ys, wy = _y_rule(lo, hi, y_nodes)
    py = out.pdf(ys)
    mass = float(np.sum(wy * py))
    weights = wy * py

    gamma = cs.limits
    signs = cs.sign_domain
    A = _is_power_case(cs)
    if A is not None:
        method = "closed"
    elif isinstance(cs.support, FinitePointSet) or cs.support.is_finite:
        method = "rule"
    else:
        method = "quadrature"
    zeta_rule = None
    if method == "quadrature":
        reach = 14.0 * math.sqrt(out.variance) + 8 * sigma
        zeta_rule = _support_rule(cs.support, sigma, reach=reach)

    def objective(th):
        if zeta_rule is not None:
            lz = _log_zeta_rule(cs, th, zeta_rule, ys, sigma2)
        else:
            lz = log_zeta(cs, th, ys, sigma2, spec, method=method)
        return float(th @ gamma) + float(np.sum(weights * lz))

    init = np.array([1.0 / (2.0 * max(g, 1e-6)) if s == "positive" else 0.0 for g, s in zip(gamma, signs)])
    res = minimize_convex(objective, len(gamma), signs, init)
    value = vol.v - 0.5 * (_LOG_2PIE + math.log(sigma2)) - res.min
    diag = {
        "output_mass": mass,
        "y_range": [lo, hi],
        "y_nodes": y_nodes,
        "zeta_method": method,
        "active": [bool(a) for a in res.active],
        "wall_time": time.perf_counter() - start,
    }
    return DirectBoundReport(value, vol.v, vol.theta_star, DualVector(tuple(res.argmin), tuple(signs)),
                             res.min, sigma2, diag)


# ---------------------------------------------------------------------------
# Tilted input (exp(alpha x^2) on the body)
# ---------------------------------------------------------------------------

def log_j_integral(a: float, b, A: float, spec: QuadratureSpec = DEFAULT_QUADRATURE):
    """``log ∫_{-A}^{A} exp(a x^2 + b x) dx``, vectorised over ``b``."""
    if not A > 0:
        raise ValueError("A must be positive")
    b_arr = np.asarray(b, dtype=float)
    # the Gaussian form cancels badly once the curvature is negligible over [-A, A]
    if a < 0 and (math.isinf(A) or -a * A * A > 1e-4):
        c = -a
        x0 = b_arr / (2.0 * c)
        sd = 1.0 / math.sqrt(2.0 * c)
        out = b_arr * b_arr / (4.0 * c) + 0.5 * math.log(math.pi / c) \
            + log_normal_interval((-A - x0) / sd, (A - x0) / sd)
    elif math.isinf(A):
        raise DivergentIntegral("J diverges on the real line for a >= 0", direction=(a,))
    elif a == 0:
        ab = np.abs(b_arr)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(ab * A < 1e-8, math.log(2 * A) + (ab * A) ** 2 / 6.0,
                           ab * A + np.log(-np.expm1(-2 * ab * A)) - np.log(np.where(ab > 0, ab, 1.0)))
    else:
        flat = [log_int_exp(lambda x, bb=bb: a * x * x + bb * x, Interval(-A, A), spec) for bb in b_arr.ravel()]
        out = np.asarray(flat).reshape(b_arr.shape)
    return float(out) if np.ndim(out) == 0 else out


def j_integral(a: float, b, A: float, spec: QuadratureSpec = DEFAULT_QUADRATURE):
    return np.exp(log_j_integral(a, b, A, spec))


def _tilt_theta(alpha: float, A: float, P: float) -> tuple[float, float]:
    res = minimize_convex(lambda th: th[0] * P + log_j_integral(alpha - th[0], 0.0, A), 1,
                          ["positive"], [1.0 / (2.0 * P)])
    return float(res.argmin[0]), float(res.min)


@dataclass(frozen=True)
class TiltedInputSpec:
    """Input density proportional to ``exp(alpha x^2)`` on ``[-A, A]`` under power ``P``.

    ``theta_star`` is the power multiplier; it is computed when omitted.
    """

    alpha: float
    A: float
    P: float
    theta_star: float | None = None

    def __post_init__(self):
        if not (self.A > 0 and self.P > 0):
            raise ValueError("A and P must be positive")
        if self.theta_star is None:
            object.__setattr__(self, "theta_star", _tilt_theta(self.alpha, self.A, self.P)[0])


def tilted_direct_bound(spec: TiltedInputSpec, sigma2: float, y_nodes: int = 400,
                        quad: QuadratureSpec = DEFAULT_QUADRATURE) -> DirectBoundReport:
    start = time.perf_counter()
    alpha, A, P = spec.alpha, spec.A, spec.P
    theta, b_val = _tilt_theta(alpha, A, P)
    a0 = alpha - theta
    lj0 = log_j_integral(a0, 0.0, A, quad)
    ex2 = integrate_weighted(lambda x: x * x, lambda x: a0 * x * x, Interval(-A, A), quad, log_norm=lj0)
    sigma = math.sqrt(sigma2)
    ys, wy = _y_rule(-A - 8 * sigma, A + 8 * sigma, y_nodes)
    a1 = a0 - 1.0 / (2.0 * sigma2)
    log_py = -ys * ys / (2 * sigma2) + log_j_integral(a1, ys / sigma2, A, quad) - lj0 \
        - 0.5 * math.log(2 * math.pi * sigma2)
    weights = wy * np.exp(log_py)
    mass = float(np.sum(weights))
    base = alpha - 1.0 / (2.0 * sigma2)

    def outer(th):
        return th[0] * P + float(np.sum(weights * log_j_integral(base - th[0], ys / sigma2, A, quad)))

    res = minimize_convex(outer, 1, ["positive"], [1.0 / (2.0 * P)])
    value = b_val + ex2 / (2.0 * sigma2) - res.min
    inf_term = res.min - ex2 / (2.0 * sigma2) - 0.5 * (_LOG_2PIE + math.log(sigma2))
    diag = {"alpha": alpha, "second_moment": ex2, "output_mass": mass, "outer_inf": res.min,
            "wall_time": time.perf_counter() - start}
    return DirectBoundReport(value, b_val, DualVector((theta,), ("positive",)),
                             DualVector((float(res.argmin[0]),), ("positive",)), inf_term, sigma2, diag)


# ---------------------------------------------------------------------------
# Jensen pair bound
# ---------------------------------------------------------------------------

def _log_pair_partition(cs: ConstraintSet, th1, th2, alpha: float, c: float, spec: QuadratureSpec):
    """``log ∫∫ exp(-th1.phi(x1) - th2.phi(x2) - (x1 - alpha x2)^2 / (2c))``."""
    inner_spec = spec.tighter(10.0)
    A = _is_power_case(cs)
    sup = cs.support
    log_norm = 0.5 * math.log(2 * math.pi * c)

    if A is not None:
        def inner(x2):
            return _log_zeta_closed(float(th1[0]), A, alpha * np.asarray(x2, dtype=float), c) + log_norm
    else:
        rule = _support_rule(sup, math.sqrt(c))
        if rule is not None:
            def inner(x2):
                return _log_zeta_rule(cs, th1, rule, alpha * np.asarray(x2, dtype=float), c) + log_norm
        else:
            def inner(x2):
                x2 = np.asarray(x2, dtype=float)
                vals = [_log_zeta_quad(cs, th1, alpha * v, c, inner_spec) for v in x2.ravel()]
                return np.asarray(vals).reshape(x2.shape) + log_norm

    if isinstance(sup, FinitePointSet):
        pts = sup.array
        return float(special.logsumexp(-cs.energy(th2, pts) + sup.log_weights + inner(pts)))
    return log_int_exp(lambda x2: -cs.energy(th2, x2) + inner(x2), sup, spec)


def jensen_pair_bound(cs: ConstraintSet, sigma2: float, s2: float | None = None, alpha: float = 1.0,
                      spec: QuadratureSpec = DEFAULT_QUADRATURE, grid_search: bool = False) -> DirectBoundReport:
    """Capacity lower bound from Jensen's inequality on the pair integral.

    ``s2`` and ``alpha`` define the auxiliary channel ``N(alpha x, s2)``; any
    choice is valid, ``(sigma2, 1)`` is the plain Jensen chain. With
    ``grid_search`` a coarse 5x5 grid around the defaults is tried and the
    best bound kept.
    """
    if not cs.memoryless:
        raise UnsupportedKernel("the pair bound needs a memoryless constraint set")
    s2 = sigma2 if s2 is None else s2
    if not (sigma2 > 0 and s2 > 0):
        raise ValueError("variances must be positive")
    if grid_search:
        best = None
        for f in (0.5, 0.75, 1.0, 1.5, 2.0):
            for al in (0.8, 0.9, 1.0, 1.1, 1.2):
                rep = jensen_pair_bound(cs, sigma2, f * s2, al * alpha, spec)
                if best is None or rep.value > best.value:
                    best = rep
        return best
    start = time.perf_counter()
    vol = volume_exponent(cs, spec)
    inp = tilted_density(cs, vol.theta_star, spec)
    ex2 = inp.expect(lambda x: x * x, spec) if alpha != 1.0 else 0.0
    c = sigma2 + s2
    kl = 0.5 * (sigma2 / s2 - math.log(sigma2 / s2) - 1.0)
    mismatch = (1.0 - alpha) ** 2 * ex2 / (2.0 * s2)
    gamma = cs.limits
    k = len(gamma)
    signs = list(cs.sign_domain) * 2

    def objective(th):
        th1, th2 = th[:k], th[k:]
        return float((th1 + th2) @ gamma) + _log_pair_partition(cs, th1, th2, alpha, c, spec)

    init0 = [1.0 / (2.0 * max(g, 1e-6)) if s == "positive" else 0.0 for g, s in zip(gamma, cs.sign_domain)]
    res = minimize_convex(objective, 2 * k, signs, init0 * 2)
    value = (2.0 * vol.v - 0.5 * (_LOG_2PIE + math.log(sigma2)) + 0.5 * math.log(2 * math.pi * c)
             - kl - mismatch - res.min)
    inf_term = vol.v - 0.5 * (_LOG_2PIE + math.log(sigma2)) - value
    diag = {"s2": s2, "alpha": alpha, "kl": kl, "mismatch": mismatch, "pair_inf": res.min,
            "wall_time": time.perf_counter() - start}
    return DirectBoundReport(value, vol.v, vol.theta_star, DualVector(tuple(res.argmin), tuple(signs)),
                             inf_term, sigma2, diag)


"""Log-partition function, tilted densities and the volume exponent.

For a memoryless constraint set the per-dimension log-volume of the body is
the convex dual

    v(Gamma) = inf_theta { theta . Gamma + psi(theta) },
    psi(theta) = log ∫ exp(-theta . phi(x)) dx,

with ``theta_j >= 0`` for inequality terms and ``theta_j`` free for equality
terms. Sets with memory replace ``psi`` by the log spectral radius of the
sliding-window kernel (see :mod:`capbound.kernels`).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import optimize, special

from .constraints import ConstraintSet, FinitePointSet, Kind, Mode
from .errors import DivergentIntegral, Infeasible, UnsupportedKernel
from .numerics import (
    DEFAULT_QUADRATURE,
    INACTIVE_THRESHOLD,
    Interval,
    QuadratureSpec,
    integrate_weighted,
    log_int_exp,
    minimize_convex,
)


@dataclass(frozen=True)
class DualVector:
    values: tuple[float, ...]
    sign_domain: tuple[str, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in np.atleast_1d(np.asarray(self.values, dtype=float)))
        signs = tuple(self.sign_domain)
        if len(vals) != len(signs):
            raise ValueError("values and sign_domain differ in length")
        for v, s in zip(vals, signs):
            if s not in ("positive", "free"):
                raise ValueError(f"unknown sign domain {s!r}")
            if s == "positive" and v < 0:
                raise ValueError("positive dual coordinate is negative")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "sign_domain", signs)

    @classmethod
    def for_constraints(cls, cs: ConstraintSet, values) -> "DualVector":
        return cls(tuple(np.atleast_1d(values)) if len(cs.dual_terms) else (), tuple(cs.sign_domain))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


class Method(str, Enum):
    DUAL = "Dual"
    RAYLEIGH = "Rayleigh"
    NYSTROM = "Nystrom"
    COLLATZ = "CollatzWielandt"
    DV = "DonskerVaradhan"


@dataclass(frozen=True)
class TiltedDensity:
    """Density proportional to ``exp(-theta . phi(x))`` on the support."""

    cs: ConstraintSet = field(repr=False)
    theta: DualVector
    support: Interval | FinitePointSet
    log_normalizer: float
    moments: tuple[float, ...]

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        out = -self.cs.energy(self.theta.array, x) - self.log_normalizer
        sup = self.support
        if isinstance(sup, Interval):
            out = np.where(sup.contains(x), out, -np.inf)
        return out

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def expect(self, h, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
        """``E[h(X)]`` under the density."""
        if isinstance(self.support, FinitePointSet):
            pts = self.support.array
            logp = self.logpdf(pts) + self.support.log_weights
            return float(np.sum(np.exp(logp) * np.asarray([h(p) for p in pts])))
        th = self.theta.array
        return integrate_weighted(h, lambda x: -self.cs.energy(th, x), self.support, spec,
                                  log_norm=self.log_normalizer)

    @property
    def is_uniform(self) -> bool:
        return not np.any(self.theta.array != 0.0) and isinstance(self.support, Interval) \
            and self.support.is_finite

    def variance(self, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
        m1 = self.expect(lambda x: x, spec)
        return self.expect(lambda x: x * x, spec) - m1 * m1


@dataclass(frozen=True)
class VolumeReport:
    v: float
    theta_star: DualVector
    active: tuple[bool, ...]
    method: Method = Method.DUAL
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.v):
            raise ValueError("volume exponent must be finite")


def _theta(cs: ConstraintSet, theta) -> np.ndarray:
    th = theta.array if isinstance(theta, DualVector) else np.atleast_1d(np.asarray(theta, dtype=float))
    if th.shape != (len(cs.dual_terms),):
        raise ValueError(f"expected {len(cs.dual_terms)} dual coordinates, got {th.shape}")
    return th


def _closed_form_psi(cs: ConstraintSet, th: np.ndarray) -> float | None:
    """Closed forms for one power or one absolute-value term on a symmetric
    interval (or the whole line); ``None`` otherwise."""
    terms = cs.dual_terms
    sup = cs.support
    if len(terms) != 1 or terms[0].kind not in (Kind.POWER, Kind.ABS) or not isinstance(sup, Interval):
        return None
    t = float(th[0])
    if terms[0].kind is Kind.ABS:
        if sup.lo != -sup.hi:
            return None
        if math.isinf(sup.hi):
            if t <= 0.0:
                raise DivergentIntegral("abs dual must be positive on the real line", direction=(1.0,))
            return math.log(2.0 / t)
        if t == 0.0:
            return math.log(2.0 * sup.hi)
        # 2 (1 - exp(-t a)) / t, valid for either sign of t
        return math.log(2.0 * sup.hi) + math.log(-math.expm1(-t * sup.hi) / (t * sup.hi))
    if sup.is_finite and sup.lo == -sup.hi:
        a = sup.hi
        if t == 0.0:
            return math.log(2.0 * a)
        if t > 0.0:
            return 0.5 * math.log(math.pi / t) + math.log(special.erf(a * math.sqrt(t)))
        return None
    if not sup.is_finite and math.isinf(sup.lo) and math.isinf(sup.hi):
        if t <= 0.0:
            raise DivergentIntegral("power dual must be positive on the real line", direction=(1.0,))
        return 0.5 * math.log(math.pi / t)
    return None


def psi(cs: ConstraintSet, theta, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """``log ∫_support exp(-theta . phi(x)) dx`` (a sum on finite alphabets)."""
    if not cs.memoryless:
        raise UnsupportedKernel("constraints with memory need the kernel routines")
    th = _theta(cs, theta)
    sup = cs.support
    if isinstance(sup, FinitePointSet):
        pts = sup.array
        return float(special.logsumexp(-cs.energy(th, pts) + sup.log_weights))
    fast = _closed_form_psi(cs, th)
    if fast is not None:
        return fast
    if not sup.is_finite:
        _check_coercive(cs, th)
    try:
        return log_int_exp(lambda x: -cs.energy(th, x), sup, spec)
    except DivergentIntegral as exc:
        raise DivergentIntegral(f"psi diverges at theta={th.tolist()}", direction=tuple(th)) from exc


def _check_coercive(cs: ConstraintSet, th: np.ndarray):
    """Cheap integrability test on unbounded supports.

    Some positive multiple of a coercive term must be switched on, and free
    coordinates may not make the exponent grow faster than it.
    """
    if not any(t.coercive and v > 0 for t, v in zip(cs.dual_terms, th)):
        raise DivergentIntegral(f"no coercive term is active at theta={th.tolist()}",
                                direction=tuple(th))


def tilted_density(cs: ConstraintSet, theta, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> TiltedDensity:
    th = _theta(cs, theta)
    dv = theta if isinstance(theta, DualVector) else DualVector.for_constraints(cs, th)
    lz = psi(cs, th, spec)
    moms = tuple(_moment(cs, th, j, lz, spec) for j in range(len(cs.dual_terms)))
    return TiltedDensity(cs, dv, cs.support, lz, moms)


def _moment(cs, th, j, lz, spec):
    term = cs.dual_terms[j]
    sup = cs.support
    if isinstance(sup, FinitePointSet):
        pts = sup.array
        w = np.exp(-cs.energy(th, pts) + sup.log_weights - lz)
        return float(np.sum(w * term.values(pts)))
    return integrate_weighted(lambda x: float(term.values(x)), lambda x: -cs.energy(th, x),
                              sup, spec, log_norm=lz)


def tilted_moments(cs: ConstraintSet, theta, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> np.ndarray:
    """``E_theta[phi_j(X)]`` for each dual term (equal to ``-grad psi``)."""
    return np.asarray(tilted_density(cs, theta, spec).moments)


def _cost_range(term, support) -> tuple[float, float]:
    """Infimum and supremum of a per-letter cost over the support."""
    if isinstance(support, FinitePointSet):
        vals = term.values(support.array)
        return float(vals.min()), float(vals.max())
    if term.kind in (Kind.POWER, Kind.ABS, Kind.MOMENT):
        lo = 0.0 if support.lo <= 0.0 <= support.hi else float(min(term.values(support.lo), term.values(support.hi)))
        hi = float(max(term.values(support.lo), term.values(support.hi)))
        return lo, hi
    lo_x = max(support.lo, -1e6)
    hi_x = min(support.hi, 1e6)
    vals = term.values(np.linspace(lo_x, hi_x, 20001))
    return float(np.min(vals)), math.inf if not support.is_finite else float(np.max(vals))


def volume_exponent(cs: ConstraintSet, spec: QuadratureSpec = DEFAULT_QUADRATURE,
                    check_samples: int = 8, seed: int = 0, **kernel_options) -> VolumeReport:
    """Volume exponent ``v(Gamma)`` with the optimising dual and active flags."""
    start = time.perf_counter()
    if not cs.memoryless:
        return _volume_with_memory(cs, **kernel_options)
    terms = cs.dual_terms
    sup = cs.support
    k = len(terms)
    if k == 0:
        v = psi(cs, np.zeros(0), spec)
        return VolumeReport(v, DualVector((), ()), (), Method.DUAL,
                            {"wall_time": time.perf_counter() - start})
    gamma = cs.limits
    for t, g in zip(terms, gamma):
        lo, hi = _cost_range(t, sup)
        if t.mode is Mode.EQUALITY and not lo < g < hi:
            raise Infeasible(f"{t.label()} limit {g} outside the open range ({lo}, {hi})")
        if t.mode is Mode.INEQUALITY and not g > lo:
            raise Infeasible(f"{t.label()} limit {g} leaves a body with empty interior")
    signs = cs.sign_domain
    init = np.array([1.0 / (2.0 * max(g, 1e-6)) if s == "positive" else 0.0
                     for g, s in zip(gamma, signs)])

    def objective(th):
        return float(th @ gamma) + psi(cs, th, spec)

    res = minimize_convex(objective, k, signs, init)
    theta, best = _polish(cs, objective, res.argmin, res.active, gamma, spec)
    positive = np.array([s == "positive" for s in signs])
    active = np.where(positive, theta > INACTIVE_THRESHOLD, True)
    theta = np.where(active, theta, 0.0)
    dens = tilted_density(cs, theta, spec)
    resid = np.asarray(dens.moments) - gamma
    diag = {
        "moment_residual": resid.tolist(),
        "moments": list(dens.moments),
        "sandwich_violation": _sandwich(objective, theta, signs, best, check_samples, seed),
        "wall_time": time.perf_counter() - start,
    }
    return VolumeReport(best, DualVector(tuple(theta), tuple(signs)), tuple(bool(a) for a in active),
                        Method.DUAL, diag)


def _polish(cs, objective, theta, active, gamma, spec):
    """Newton-type root solve of the moment equations on active coordinates."""
    best = objective(theta)
    idx = np.flatnonzero(active)
    if len(idx) == 0:
        return theta, best

    def grad(sub):
        th = theta.copy()
        th[idx] = sub
        if np.any((th < 0) & np.array([s == "positive" for s in cs.sign_domain])):
            return np.full(len(idx), 1e6)
        try:
            return gamma[idx] - tilted_moments(cs, th, spec)[idx]
        except DivergentIntegral:
            return np.full(len(idx), 1e6)

    try:
        if len(idx) == 1:
            sol = optimize.root_scalar(lambda s: grad(np.array([s]))[0], x0=theta[idx[0]],
                                       x1=theta[idx[0]] * (1 + 1e-4) + 1e-12, method="secant",
                                       xtol=1e-14, maxiter=50)
            cand = np.array([sol.root]) if sol.converged else None
        else:
            sol = optimize.root(grad, theta[idx], method="hybr", options={"xtol": 1e-13})
            cand = sol.x if sol.success else None
    except (ValueError, ArithmeticError):
        cand = None
    if cand is not None and np.all(np.isfinite(cand)):
        th = theta.copy()
        th[idx] = cand
        try:
            val = objective(th)
        except DivergentIntegral:
            val = math.inf
        if val <= best + 1e-13:
            return th, min(val, best)
    return theta, best


def _sandwich(objective, theta, signs, best, samples, seed) -> float:
    """Largest amount by which a random dual point undercuts the optimum."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        th = np.array([t * math.exp(rng.normal(0, 0.5)) + abs(rng.normal(0, 0.05)) if s == "positive"
                       else t + rng.normal(0, 0.1 * (1 + abs(t))) for t, s in zip(theta, signs)])
        try:
            val = objective(th)
        except DivergentIntegral:
            continue
        worst = max(worst, best - val)
    return worst


def _volume_with_memory(cs: ConstraintSet, grid: int | None = None,
                        truncate_sd: float = 8.0) -> VolumeReport:
    from . import kernels

    start = time.perf_counter()
    filt = [t for t in cs.terms if t.kind is Kind.FILTERED_PEAK]
    if filt:
        if len(cs.terms) != 1:
            raise UnsupportedKernel("a filtered peak constraint is only supported on its own")
        t = filt[0]
        v = math.log(2.0 * t.amplitude) - kernels.filter_jacobian_log(t.taps)
        return VolumeReport(v, DualVector((), ()), (), Method.DUAL,
                            {"wall_time": time.perf_counter() - start})
    support = cs.support
    if not (isinstance(support, Interval) and support.is_finite):
        p = cs.power_limit()
        if p is None:
            for t in cs.terms:
                if t.kind is Kind.POWER:
                    p = t.limit
        if p is None or p <= 0:
            raise UnsupportedKernel("an unbounded support needs a power term for truncation")
        r = truncate_sd * math.sqrt(p)
        support = Interval(-r, r) if isinstance(support, Interval) and not support.is_finite \
            else support.intersect(Interval(-r, r))
    gamma = cs.limits
    signs = cs.sign_domain
    init = np.array([1.0 / (2.0 * max(g, 1e-6)) if s == "positive" else 0.0
                     for g, s in zip(gamma, signs)])
    n = grid or (kernels.DEFAULT_GRID if cs.max_window == 2 else kernels.DEFAULT_GRID_M3)

    def objective(th):
        spec = kernels.KernelSpec.from_constraints(cs, th, support)
        return float(th @ gamma) + kernels.kernel_psi_nystrom(spec, n, refine=False)

    res = minimize_convex(objective, len(gamma), signs, init, tol=1e-12)
    theta = res.argmin
    kspec = kernels.KernelSpec.from_constraints(cs, theta, support)
    refined = float(theta @ gamma) + kernels.kernel_psi_nystrom(kspec, n, refine=cs.max_window == 2)
    diag = {"grid": n, "support": [support.lo, support.hi], "coarse_v": res.min,
            "wall_time": time.perf_counter() - start}
    return VolumeReport(refined, DualVector(tuple(theta), tuple(signs)),
                        tuple(bool(a) for a in res.active), Method.NYSTROM, diag)

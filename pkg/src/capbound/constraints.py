"""Cost functions, constraint sets, supports and feasibility.

A :class:`ConstraintSet` describes the body of admissible input vectors::

    sum_{t=m}^{n} phi_j(x_{t-m+1}, ..., x_t) <= n * Gamma_j,   j = 1..k

Peak-amplitude (infinite square well) terms are never evaluated as ``+inf``
inside integrals; they shrink the integration support instead and carry no
dual coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .errors import EmptySupport, WindowMismatch, ZeroLeadingTap
from .numerics import REAL_LINE, Interval


class Kind(str, Enum):
    POWER = "power"
    ABS = "abs"
    PEAK = "peak"
    MOMENT = "moment"
    CORRELATION = "correlation"
    WINDOW_POWER = "window_power"
    FILTERED_PEAK = "filtered_peak"
    CUSTOM = "custom"


class Mode(str, Enum):
    INEQUALITY = "inequality"
    EQUALITY = "equality"


@dataclass(frozen=True)
class CostTerm:
    """One cost function with its limit.

    Use the classmethod constructors; ``window`` is derived from the kind.
    ``growth`` is the integrability certificate of a custom cost, a pair
    ``(c, d)`` promising ``f(x) >= c*|x|**d - const`` with ``c > 0``.
    """

    kind: Kind
    limit: float
    mode: Mode = Mode.INEQUALITY
    window: int = 1
    amplitude: float | None = None
    exponent: float | None = None
    lag: int | None = None
    taps: tuple[float, ...] | None = None
    func: Callable | None = field(default=None, compare=False)
    growth: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.kind is Kind.PEAK:
            if not (self.amplitude and self.amplitude > 0) or self.limit != 0:
                raise ValueError("peak term needs amplitude > 0 and limit 0")
        if self.kind in (Kind.POWER, Kind.ABS, Kind.PEAK, Kind.MOMENT) and self.window != 1:
            raise ValueError(f"{self.kind.value} term has window 1")
        if self.kind is Kind.CORRELATION and self.window != self.lag + 1:
            raise ValueError("correlation term has window lag + 1")
        if self.kind is Kind.CUSTOM and self.growth is not None and self.growth[0] <= 0:
            raise ValueError("growth certificate needs a positive coefficient")

    # -- constructors -----------------------------------------------------
    @classmethod
    def power(cls, limit, mode=Mode.INEQUALITY):
        return cls(Kind.POWER, float(limit), mode)

    @classmethod
    def abs(cls, limit, mode=Mode.INEQUALITY):
        return cls(Kind.ABS, float(limit), mode)

    @classmethod
    def peak(cls, amplitude):
        return cls(Kind.PEAK, 0.0, Mode.INEQUALITY, amplitude=float(amplitude))

    @classmethod
    def moment(cls, exponent, limit, mode=Mode.INEQUALITY):
        if exponent <= 0:
            raise ValueError("moment exponent must be positive")
        return cls(Kind.MOMENT, float(limit), mode, exponent=float(exponent))

    @classmethod
    def correlation(cls, lag, limit, mode=Mode.INEQUALITY):
        if lag < 1:
            raise ValueError("lag must be >= 1")
        return cls(Kind.CORRELATION, float(limit), mode, window=lag + 1, lag=int(lag))

    @classmethod
    def window_power(cls, limit, mode=Mode.INEQUALITY):
        return cls(Kind.WINDOW_POWER, float(limit), mode, window=2)

    @classmethod
    def filtered_peak(cls, taps, amplitude):
        taps = tuple(float(h) for h in taps)
        if not taps:
            raise ValueError("filter needs at least one tap")
        if taps[0] == 0.0:
            raise ZeroLeadingTap("leading filter tap must be nonzero")
        if len(taps) == 1:
            # a pure gain is just a narrower well
            return cls.peak(float(amplitude) / abs(taps[0]))
        return cls(Kind.FILTERED_PEAK, 0.0, Mode.INEQUALITY, window=len(taps),
                   amplitude=float(amplitude), taps=taps)

    @classmethod
    def custom(cls, func, window, limit, growth=None, mode=Mode.INEQUALITY):
        return cls(Kind.CUSTOM, float(limit), mode, window=int(window), func=func,
                   growth=None if growth is None else (float(growth[0]), float(growth[1])))

    # -- properties -------------------------------------------------------
    @property
    def is_well(self) -> bool:
        """Pure support restriction (0 inside, +inf outside)."""
        return self.kind is Kind.PEAK

    @property
    def is_indicator(self) -> bool:
        return self.kind in (Kind.PEAK, Kind.FILTERED_PEAK)

    @property
    def coercive(self) -> bool:
        """Whether ``exp(-theta * phi)`` is integrable on the line for ``theta > 0``."""
        if self.kind in (Kind.POWER, Kind.ABS, Kind.MOMENT, Kind.WINDOW_POWER):
            return True
        return self.kind is Kind.CUSTOM and self.growth is not None

    @property
    def sign_domain(self) -> str:
        return "free" if self.mode is Mode.EQUALITY else "positive"

    def values(self, *window):
        """Vectorised cost on window arrays ordered oldest to newest."""
        if len(window) != self.window:
            raise WindowMismatch(f"{self.kind.value} expects a window of {self.window}, got {len(window)}")
        xs = [np.asarray(w, dtype=float) for w in window]
        x = xs[-1]
        k = self.kind
        if k is Kind.POWER:
            return x * x
        if k is Kind.ABS:
            return np.abs(x)
        if k is Kind.MOMENT:
            return np.abs(x) ** self.exponent
        if k is Kind.PEAK:
            return np.where(np.abs(x) <= self.amplitude, 0.0, math.inf)
        if k is Kind.CORRELATION:
            return x * xs[0]
        if k is Kind.WINDOW_POWER:
            return 0.5 * (xs[0] ** 2 + x ** 2)
        if k is Kind.FILTERED_PEAK:
            out = sum(h * xs[-1 - i] for i, h in enumerate(self.taps))
            return np.where(np.abs(out) <= self.amplitude, 0.0, math.inf)
        return np.asarray(self.func(*xs), dtype=float)

    def label(self) -> str:
        return self.kind.value if self.lag is None else f"{self.kind.value}[{self.lag}]"


@dataclass(frozen=True)
class FinitePointSet:
    """Discrete input alphabet; sums with ``weights`` replace integrals."""

    points: tuple[float, ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        pts = tuple(float(p) for p in self.points)
        if not pts:
            raise EmptySupport("finite alphabet is empty")
        object.__setattr__(self, "points", pts)
        if self.weights is not None:
            w = tuple(float(v) for v in self.weights)
            if len(w) != len(pts) or min(w) <= 0:
                raise ValueError("weights must be positive and match the points")
            object.__setattr__(self, "weights", w)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.points)

    @property
    def log_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.zeros(len(self.points))
        return np.log(np.asarray(self.weights))


Support = Interval | FinitePointSet


@dataclass(frozen=True)
class ChannelParams:
    noise_var: float = 1.0

    def __post_init__(self):
        if not self.noise_var > 0:
            raise ValueError("noise variance must be positive")


def evaluate_cost(term: CostTerm, window: Sequence[float]) -> float:
    """Cost of a single window (oldest sample first)."""
    window = list(window)
    if len(window) != term.window:
        raise WindowMismatch(f"{term.kind.value} expects a window of {term.window}, got {len(window)}")
    return float(term.values(*window))


def effective_support(terms: Sequence[CostTerm], declared: Support | None = None) -> Support:
    """Intersection of the peak-well intervals with the declared support."""
    wells = [t.amplitude for t in terms if t.is_well and math.isfinite(t.amplitude)]
    if isinstance(declared, FinitePointSet):
        pts = declared.array
        keep = np.ones(len(pts), dtype=bool)
        for a in wells:
            keep &= np.abs(pts) <= a
        if not keep.any():
            raise EmptySupport("no alphabet point satisfies the peak constraints")
        w = None if declared.weights is None else tuple(np.asarray(declared.weights)[keep])
        return FinitePointSet(tuple(pts[keep]), w)
    support = declared if declared is not None else REAL_LINE
    for a in wells:
        support = support.intersect(Interval(-a, a))
        if support is None:
            raise EmptySupport("peak constraints leave an empty support")
    return support


class ConstraintSet:
    """Immutable ordered collection of cost terms plus derived support."""

    def __init__(self, terms: Sequence[CostTerm], support: Support | None = None):
        terms = tuple(terms)
        if not terms:
            raise ValueError("a constraint set needs at least one term")
        self._terms = terms
        self._declared = support
        self._support = effective_support(terms, support)

    def __repr__(self):
        return f"ConstraintSet({[t.label() for t in self._terms]}, support={self._support})"

    @property
    def terms(self) -> tuple[CostTerm, ...]:
        return self._terms

    @property
    def declared_support(self):
        return self._declared

    @property
    def support(self) -> Support:
        return self._support

    @property
    def k(self) -> int:
        return len(self._terms)

    @property
    def max_window(self) -> int:
        return max(t.window for t in self._terms)

    @property
    def memoryless(self) -> bool:
        return self.max_window == 1

    @property
    def dual_terms(self) -> tuple[CostTerm, ...]:
        """Terms carrying a dual coordinate (everything except peak wells)."""
        return tuple(t for t in self._terms if not t.is_well)

    @property
    def limits(self) -> np.ndarray:
        return np.array([t.limit for t in self.dual_terms], dtype=float)

    @property
    def sign_domain(self) -> list[str]:
        return [t.sign_domain for t in self.dual_terms]

    def power_limit(self) -> float | None:
        for t in self._terms:
            if t.kind in (Kind.POWER, Kind.WINDOW_POWER) and t.mode is Mode.INEQUALITY:
                return t.limit
        return None

    def well_amplitude(self) -> float | None:
        amps = [t.amplitude for t in self._terms if t.is_well and math.isfinite(t.amplitude)]
        return min(amps) if amps else None

    def costs(self, x) -> np.ndarray:
        """Per-letter costs of the memoryless dual terms, shape ``(k', *x.shape)``."""
        if not self.memoryless:
            raise WindowMismatch("per-letter costs need a memoryless constraint set")
        x = np.asarray(x, dtype=float)
        return np.stack([t.values(x) for t in self.dual_terms]) if self.dual_terms else np.zeros((0,) + x.shape)

    def energy(self, theta, x):
        """``theta . phi(x)`` for memoryless sets, vectorised over ``x``."""
        theta = np.asarray(theta, dtype=float)
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for th, t in zip(theta, self.dual_terms):
            if th != 0.0:
                out = out + th * t.values(x)
        return out

    def with_limits(self, limits) -> "ConstraintSet":
        """Copy with new limits for the dual terms (in ``dual_terms`` order)."""
        it = iter(limits)
        terms = []
        for t in self._terms:
            if t.is_well:
                terms.append(t)
            else:
                terms.append(_replace(t, limit=float(next(it))))
        return ConstraintSet(terms, self._declared)

    def feasible_batch(self, X) -> np.ndarray:
        """Row-wise feasibility of the ``(batch, n)`` array ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[1]
        ok = np.ones(X.shape[0], dtype=bool)
        for t in self._terms:
            m = t.window
            if n < m:
                raise WindowMismatch("vector shorter than the constraint window")
            cols = [X[:, i:n - m + 1 + i] for i in range(m)]
            with np.errstate(invalid="ignore"):
                s = np.sum(t.values(*cols), axis=1)
            if t.mode is Mode.EQUALITY:
                ok &= np.abs(s - n * t.limit) <= 1e-9 * n
            else:
                ok &= s <= n * t.limit
        return ok


def _replace(term: CostTerm, **changes) -> CostTerm:
    from dataclasses import replace
    return replace(term, **changes)


def is_feasible(cs: ConstraintSet, x: Sequence[float]) -> bool:
    """Whether ``x`` satisfies every constraint of ``cs`` pointwise."""
    x = np.asarray(x, dtype=float)
    if x.size < cs.max_window:
        raise WindowMismatch("vector shorter than the constraint window")
    return bool(cs.feasible_batch(x[None, :])[0])

"""Scenario files: schema, parameter expressions and bound dispatch.

A scenario is a JSON document. Numeric fields may be literal numbers or
expression strings over the named ``params`` (``"sqrt(2*P)"``, ``"inf"``).
``snr_db`` is turned into the linear power parameter ``P`` once, when the
scenario is resolved.
"""

from __future__ import annotations

import ast
import json
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import direct_mi, epi, kernels, oracle
from .constraints import ConstraintSet, CostTerm, FinitePointSet, Mode
from .errors import ScenarioError, UnsupportedKernel
from .numerics import Interval, QuadratureSpec
from .volume import volume_exponent

Expr = Union[float, int, str]

# ---------------------------------------------------------------------------
# Safe expressions
# ---------------------------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"sqrt": np.sqrt, "log": np.log, "log10": np.log10, "exp": np.exp, "abs": np.abs,
          "sin": np.sin, "cos": np.cos, "min": np.minimum, "max": np.maximum}
_CONSTS = {"pi": math.pi, "e": math.e, "inf": math.inf}


def evaluate(expr: Expr, names: dict[str, Any]):
    """Evaluate a number or an arithmetic expression string."""
    if isinstance(expr, (int, float)) and not isinstance(expr, bool):
        return float(expr)
    if not isinstance(expr, str):
        raise ScenarioError(f"expected a number or expression, got {expr!r}")
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ScenarioError(f"cannot parse expression {expr!r}") from exc

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Name):
            if node.id in names:
                return names[node.id]
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            raise ScenarioError(f"unknown name {node.id!r} in {expr!r}")
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS \
                and not node.keywords:
            return _FUNCS[node.func.id](*[ev(a) for a in node.args])
        raise ScenarioError(f"unsupported syntax in {expr!r}")

    out = ev(tree)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


TermKind = Literal["power", "abs", "peak", "moment", "correlation", "window_power",
                   "filtered_peak", "custom"]
BoundType = Literal["epi", "epi-uce", "epi-quadrature", "direct", "tilted", "jensen", "volume",
                    "kernel-psi", "validate"]


class TermModel(_Model):
    kind: TermKind
    params: dict[str, Union[Expr, list[Expr]]] = Field(default_factory=dict)
    limit: Expr = 0.0
    mode: Literal["inequality", "equality"] = "inequality"


class SupportModel(_Model):
    lo: Expr | None = None
    hi: Expr | None = None
    points: list[Expr] | None = None
    weights: list[Expr] | None = None

    @model_validator(mode="after")
    def _one_kind(self):
        if self.points is not None and (self.lo is not None or self.hi is not None):
            raise ValueError("give either an interval (lo/hi) or points, not both")
        if self.weights is not None and self.points is None:
            raise ValueError("weights need points")
        return self


class BoundModel(_Model):
    type: BoundType
    alpha: Expr | None = None
    s2: Expr | None = None
    grid_search: bool = False
    method: Literal["nystrom", "rayleigh", "collatz", "dv", "all"] = "all"
    family: Literal["constant", "exponential"] = "constant"
    theta: list[Expr] | None = None
    gamma_max: Expr | None = None


class ValidateModel(_Model):
    n: Union[int, list[int]] = 4
    samples: int = 1_000_000
    seed: int = 0
    bounding: Literal["auto", "well", "ball"] = "auto"


class SweepModel(_Model):
    variable: str
    grid: list[float] | None = None
    start: float | None = None
    stop: float | None = None
    num: int | None = None

    @model_validator(mode="after")
    def _grid(self):
        ranged = (self.start, self.stop, self.num)
        if self.grid is None and any(v is None for v in ranged):
            raise ValueError("sweep needs either grid or start/stop/num")
        if self.grid is not None and any(v is not None for v in ranged):
            raise ValueError("sweep takes grid or start/stop/num, not both")
        if self.num is not None and self.num < 1:
            raise ValueError("num must be >= 1")
        return self

    def values(self) -> list[float]:
        if self.grid is not None:
            return [float(v) for v in self.grid]
        return [float(v) for v in np.linspace(self.start, self.stop, self.num)]


class NumericsModel(_Model):
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_subdivisions: int = 2000
    y_nodes: int = 400
    kernel_grid: int | None = None
    uce_samples: int = 401

    @field_validator("rel_tol", "abs_tol")
    @classmethod
    def _positive(cls, v):
        if v <= 0:
            raise ValueError("tolerances must be positive")
        return v


class ScenarioModel(_Model):
    name: str = ""
    noise_var: Expr = 1.0
    snr_db: Expr | None = None
    params: dict[str, Expr] = Field(default_factory=dict)
    support: SupportModel | None = None
    terms: list[TermModel] = Field(min_length=1)
    bound: BoundModel
    extra_bounds: list[Literal["epi", "direct", "volume"]] = Field(default_factory=list)
    sweep: SweepModel | None = None
    validate_: ValidateModel | None = Field(default=None, alias="validate")
    numerics: NumericsModel = Field(default_factory=NumericsModel)

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    @model_validator(mode="after")
    def _sweep_names_param(self):
        if self.sweep is not None:
            allowed = set(self.params) | {"noise_var"} | ({"snr_db"} if self.snr_db is not None else set())
            if self.sweep.variable not in allowed:
                raise ValueError(f"sweep variable {self.sweep.variable!r} is not a scenario parameter "
                                 f"(known: {sorted(allowed)})")
        return self


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def load(path: str | Path) -> ScenarioModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from exc
    return parse(data)


def parse(data: dict) -> ScenarioModel:
    try:
        return ScenarioModel.model_validate(data)
    except ValidationError as exc:
        raise ScenarioError(_format_errors(exc)) from exc


# ---------------------------------------------------------------------------
# Resolution
# ---------------------------------------------------------------------------

@dataclass
class Resolved:
    names: dict[str, float]
    sigma2: float
    cs: ConstraintSet
    quad: QuadratureSpec


def resolve(sc: ScenarioModel, override: dict[str, float] | None = None) -> Resolved:
    override = dict(override or {})
    names: dict[str, float] = {}
    sigma2 = evaluate(override.pop("noise_var", sc.noise_var), names)
    if not sigma2 > 0:
        raise ScenarioError("noise_var: must be positive")
    names["noise_var"] = sigma2
    if sc.snr_db is not None:
        snr = override.pop("snr_db", None)
        snr = evaluate(sc.snr_db, names) if snr is None else float(snr)
        names["snr_db"] = snr
        names["P"] = sigma2 * 10.0 ** (snr / 10.0)
    for key, expr in sc.params.items():
        if key in override:
            names[key] = float(override.pop(key))
        else:
            try:
                names[key] = evaluate(expr, names)
            except ScenarioError as exc:
                raise ScenarioError(f"params.{key}: {exc}") from exc
    terms = []
    for i, t in enumerate(sc.terms):
        try:
            term = _build_term(t, names)
        except (ScenarioError, ValueError) as exc:
            raise ScenarioError(f"terms.{i}: {exc}") from exc
        if term is not None:
            terms.append(term)
    if not terms:
        raise ScenarioError("terms: every term was dropped (all peak limits infinite)")
    support = _build_support(sc.support, names)
    cs = ConstraintSet(terms, support)
    nm = sc.numerics
    quad = QuadratureSpec(nm.rel_tol, nm.abs_tol, nm.max_subdivisions)
    return Resolved(names, sigma2, cs, quad)


def _build_term(t: TermModel, names) -> CostTerm | None:
    p = t.params
    mode = Mode(t.mode)

    def num(key, default=None):
        if key not in p:
            if default is None:
                raise ScenarioError(f"params.{key} is required for {t.kind}")
            return default
        return evaluate(p[key], names)

    limit = evaluate(t.limit, names)
    if t.kind == "power":
        return CostTerm.power(limit, mode)
    if t.kind == "abs":
        return CostTerm.abs(limit, mode)
    if t.kind == "peak":
        amp = num("amplitude")
        return None if math.isinf(amp) else CostTerm.peak(amp)
    if t.kind == "moment":
        return CostTerm.moment(num("exponent"), limit, mode)
    if t.kind == "correlation":
        return CostTerm.correlation(int(num("lag", 1.0)), limit, mode)
    if t.kind == "window_power":
        return CostTerm.window_power(limit, mode)
    if t.kind == "filtered_peak":
        taps = p.get("taps")
        if not isinstance(taps, list):
            raise ScenarioError("params.taps must be a list")
        return CostTerm.filtered_peak([evaluate(h, names) for h in taps], num("amplitude"))
    # custom: an expression in x0 (oldest) .. x{m-1}
    window = int(num("window", 1.0))
    expr = p.get("expr")
    if not isinstance(expr, str):
        raise ScenarioError("params.expr must be an expression string")
    growth = p.get("growth")
    growth = None if growth is None else [evaluate(g, names) for g in growth]

    def func(*xs, _expr=expr):
        env = dict(names)
        env.update({f"x{i}": x for i, x in enumerate(xs)})
        return evaluate(_expr, env)

    return CostTerm.custom(func, window, limit, growth, mode)


def _build_support(s: SupportModel | None, names):
    if s is None:
        return None
    if s.points is not None:
        pts = [evaluate(v, names) for v in s.points]
        w = None if s.weights is None else [evaluate(v, names) for v in s.weights]
        return FinitePointSet(tuple(pts), None if w is None else tuple(w))
    lo = -math.inf if s.lo is None else evaluate(s.lo, names)
    hi = math.inf if s.hi is None else evaluate(s.hi, names)
    return Interval(lo, hi)


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

@dataclass
class Result:
    bound_value_nats: float
    v: float | None
    theta_star: list[float]
    diagnostics: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)


def _power_and_peak(cs: ConstraintSet):
    P = cs.power_limit()
    A = cs.well_amplitude()
    if P is None:
        raise ScenarioError("this bound needs a power term")
    return P, math.inf if A is None else A


def _volume(cs, r: Resolved, nm: NumericsModel):
    if cs.memoryless:
        return volume_exponent(cs, r.quad)
    return volume_exponent(cs, grid=nm.kernel_grid)


def run_bound(kind: str, sc: ScenarioModel, r: Resolved) -> Result:
    b = sc.bound
    nm = sc.numerics
    cs = r.cs
    if kind in ("epi", "volume"):
        rep = _volume(cs, r, nm)
        diag = {"active": list(rep.active), "method": rep.method.value, **rep.diagnostics}
        sup = cs.support
        if isinstance(sup, Interval):
            diag["support"] = [sup.lo, sup.hi]
        value = rep.v if kind == "volume" else epi.epi_bound(rep.v, r.sigma2).value
        return Result(value, rep.v, list(rep.theta_star.values), diag)
    if kind == "epi-quadrature":
        P, A = _power_and_peak(cs)
        e = epi.epi_quadrature(P, A, r.sigma2)
        return Result(e.value, e.v_used, [], {"loss_factor": e.loss_factor})
    if kind == "epi-uce":
        return _run_uce(sc, r)
    if kind == "direct":
        rep = direct_mi.direct_bound(cs, r.sigma2, r.quad, y_nodes=nm.y_nodes)
        return Result(rep.value, rep.v_used, list(rep.theta_star_volume.values),
                      {"theta_star_bound": list(rep.theta_star_bound.values), "inf_term": rep.inf_term,
                       "active": [v > 0 for v in rep.theta_star_volume.values], **rep.diagnostics})
    if kind == "tilted":
        P, A = _power_and_peak(cs)
        alpha = 0.0 if b.alpha is None else evaluate(b.alpha, r.names)
        rep = direct_mi.tilted_direct_bound(direct_mi.TiltedInputSpec(alpha, A, P), r.sigma2,
                                            y_nodes=nm.y_nodes, quad=r.quad)
        return Result(rep.value, rep.v_used, list(rep.theta_star_volume.values),
                      {"theta_star_bound": list(rep.theta_star_bound.values), **rep.diagnostics})
    if kind == "jensen":
        s2 = None if b.s2 is None else evaluate(b.s2, r.names)
        alpha = 1.0 if b.alpha is None else evaluate(b.alpha, r.names)
        rep = direct_mi.jensen_pair_bound(cs, r.sigma2, s2, alpha, r.quad, grid_search=b.grid_search)
        return Result(rep.value, rep.v_used, list(rep.theta_star_volume.values),
                      {"theta_star_bound": list(rep.theta_star_bound.values), **rep.diagnostics})
    if kind == "kernel-psi":
        return run_kernel_psi(sc, r)
    if kind == "validate":
        return run_validate(sc, r)
    raise ScenarioError(f"unknown bound type {kind!r}")


def _run_uce(sc: ScenarioModel, r: Resolved) -> Result:
    cs = r.cs
    if len(cs.dual_terms) != 1:
        raise ScenarioError("epi-uce needs exactly one cost term besides peak limits")
    gamma = float(cs.limits[0])
    gmax = evaluate(sc.bound.gamma_max, r.names) if sc.bound.gamma_max is not None else 4.0 * gamma

    def raw(g):
        if g <= 0:
            return 0.0
        return epi.epi_bound(volume_exponent(cs.with_limits([g]), r.quad).v, r.sigma2).value

    env = epi.uce_1d(raw, Interval(0.0, max(gmax, gamma)), sc.numerics.uce_samples)
    rep = volume_exponent(cs, r.quad)
    return Result(float(env(gamma)), rep.v, list(rep.theta_star.values),
                  {"raw_bound": raw(gamma), "tangent_point": env.tangent_point, "slope": env.slope,
                   "no_tangent": env.no_tangent})


def run_kernel_psi(sc: ScenarioModel, r: Resolved) -> Result:
    b = sc.bound
    cs = r.cs
    if b.theta is None:
        raise ScenarioError("bound.theta is required for kernel-psi")
    theta = [evaluate(t, r.names) for t in b.theta]
    sup = cs.support
    if not (isinstance(sup, Interval) and sup.is_finite):
        raise UnsupportedKernel("kernel-psi needs a finite support (add a peak term)")
    k = kernels.KernelSpec.from_constraints(cs, theta, sup)
    grid = sc.numerics.kernel_grid
    out: dict[str, Any] = {}
    methods = ["nystrom", "rayleigh", "collatz", "dv"] if b.method == "all" else [b.method]
    for m in methods:
        if m == "nystrom":
            out["nystrom"] = kernels.kernel_psi_nystrom(k, grid)
        elif m == "rayleigh":
            out["rayleigh"] = kernels.kernel_psi_rayleigh(k, b.family)
        elif m == "collatz":
            g = kernels.nystrom_eigenfunction(k, grid or kernels.DEFAULT_GRID)
            out["collatz"] = list(kernels.kernel_psi_collatz(k, g))
        else:
            out["dv"] = kernels.donsker_varadhan_psi(k, grid or kernels.DEFAULT_GRID)
    first = out[methods[0]]
    value = first[0] if isinstance(first, list) else first
    return Result(value, None, theta, {"psi": out, "window": k.window, "symmetric": k.symmetric})


def run_validate(sc: ScenarioModel, r: Resolved) -> Result:
    vm = sc.validate_ or ValidateModel()
    ns = vm.n if isinstance(vm.n, list) else [vm.n]
    cs = r.cs
    rep = volume_exponent(cs, r.quad) if cs.memoryless else None
    v = None if rep is None else rep.v
    rows = []
    for n in ns:
        est = oracle.mc_log_volume(cs, oracle.McConfig(n, vm.samples, vm.seed, vm.bounding))
        rows.append({"n": n, "estimate": est.estimate, "std_err": est.std_err, "hits": est.hits,
                     "gap": None if v is None else v - est.estimate})
    last = rows[-1]
    return Result(last["estimate"], v, [] if rep is None else list(rep.theta_star.values),
                  {"oracle": rows, "samples": vm.samples, "seed": vm.seed})


def evaluate_point(sc: ScenarioModel, override: dict[str, float] | None = None) -> Result:
    r = resolve(sc, override)
    res = run_bound(sc.bound.type, sc, r)
    for extra in sc.extra_bounds:
        res.extras[f"{extra}_nats"] = run_bound(extra, sc, r).bound_value_nats
    res.diagnostics = strip_timing(res.diagnostics)
    return res


def strip_timing(obj):
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k != "wall_time"}
    if isinstance(obj, (list, tuple)):
        return [strip_timing(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj

"""Selection functions: target conditional acceptance rates and their certificates.

A selection function c maps an arrival time y in [0,1] to the probability
with which the scheme wants to accept an active element arriving at y. The
vertex-arrival family is parameterized by the odd girth g of the instance;
edge-arrival schemes use three fixed closed forms. The certificate checker
verifies the defining integral inequality

    c(t) <= 1 - (1/t) * int_0^t 2*(c(y)*y + phi_g(y)) dy,

which the closed-form family satisfies with equality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .numerics import adaptive_simpson, integrate_grid

__all__ = [
    "INFINITE",
    "phi",
    "gamma_upper_int",
    "c_vertex",
    "c_edge",
    "alpha_closed_form",
    "alpha_numeric",
    "SelectionFunction",
    "vertex_selection",
    "edge_selection",
    "custom_selection",
    "CertificateReport",
    "verify_selection_conditions",
    "parse_girth",
]

INFINITE = math.inf

EDGE_KINDS = ("rank1", "edge_general", "edge_tree")

# Below this the linear series expansion is exact to double precision.
_TINY_Y = 1e-12


def _check_girth(g) -> bool:
    """Validate g (odd int >= 3 or INFINITE); return True when infinite."""
    if g == INFINITE:
        return True
    if isinstance(g, float) and not g.is_integer():
        raise ValueError(f"odd girth must be an odd integer >= 3 or infinite, got {g}")
    gi = int(g)
    if gi < 3 or gi % 2 == 0:
        raise ValueError(f"odd girth must be an odd integer >= 3 or infinite, got {g}")
    return False


def parse_girth(text: str):
    """CLI-facing parser: 'inf'/'infinite' or an odd integer >= 3."""
    if text.lower() in ("inf", "infinite", "infinity"):
        return INFINITE
    g = int(text)
    _check_girth(g)
    return g


def phi(y, g):
    """Correlation-decay term y^(g-1)/(g-1)!; zero for infinite girth."""
    infinite = _check_girth(g)
    arr = np.asarray(y, dtype=np.float64)
    if infinite:
        out = np.zeros_like(arr)
    else:
        gi = int(g)
        out = arr ** (gi - 1) / math.factorial(gi - 1)
    return float(out) if arr.ndim == 0 else out


def gamma_upper_int(s: int, z: float) -> float:
    """Upper incomplete gamma at integer order: (s-1)! e^{-z} sum_{k<s} z^k/k!."""
    if s < 1 or int(s) != s:
        raise ValueError("s must be a positive integer")
    s = int(s)
    total = 0.0
    term = 1.0
    for k in range(s):
        if k > 0:
            term *= z / k
        total += term
    return math.factorial(s - 1) * math.exp(-z) * total


def _tail_series(minus2y: np.ndarray, g: int) -> np.ndarray:
    """sum_{k>=g} (-2y)^k / k!, alternating with decreasing terms for y<=1."""
    term = np.ones_like(minus2y)
    for k in range(1, g + 1):
        term = term * minus2y / k
    tail = term.copy()
    for k in range(g + 1, g + 80):
        term = term * minus2y / k
        tail += term
        if np.max(np.abs(term)) < 1e-20:
            break
    return tail


def c_vertex(y, g):
    """Vertex-arrival selection function for odd girth g (c(0) := 1).

    Evaluated as -expm1(-2y)/(2y) + tail/(2^{g-1} y) where tail collects the
    k >= g terms of the exponential series; this form has no cancellation on
    (0, 1] and a removable singularity at 0 handled by a series branch.
    """
    infinite = _check_girth(g)
    arr = np.asarray(y, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr).astype(np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("y must lie in [0, 1]")
    out = np.empty_like(arr)
    tiny = arr < _TINY_Y
    out[tiny] = 1.0 - arr[tiny]
    big = ~tiny
    if np.any(big):
        z = arr[big]
        base = -np.expm1(-2.0 * z) / (2.0 * z)
        if infinite:
            out[big] = base
        else:
            gi = int(g)
            tail = _tail_series(-2.0 * z, gi)
            out[big] = base + tail / (2.0 ** (gi - 1) * z)
    return float(out[0]) if scalar else out


def c_edge(y, kind: str):
    """Edge-arrival selection functions: e^{-y}, e^{-2y}, or 1/(1+y)^2."""
    arr = np.asarray(y, dtype=np.float64)
    if kind == "rank1":
        out = np.exp(-arr)
    elif kind == "edge_general":
        out = np.exp(-2.0 * arr)
    elif kind == "edge_tree":
        out = 1.0 / (1.0 + arr) ** 2
    else:
        raise ValueError(f"unknown edge selection kind '{kind}'")
    return float(out) if arr.ndim == 0 else out


def alpha_closed_form(g) -> float:
    """Closed-form guarantee alpha_g = 2 int_0^1 c_vertex(y, g) y dy."""
    if _check_girth(g):
        return (1.0 + math.exp(-2.0)) / 2.0
    gi = int(g)
    gamma_diff = gamma_upper_int(gi, -2.0) - gamma_upper_int(gi, 0.0)
    e2 = math.exp(2.0)
    return 0.5 + 1.0 / (2.0 * e2) - (2.0 / gi - gamma_diff / (2.0 ** (gi - 1) * e2)) / math.factorial(gi - 1)


def alpha_numeric(g, tol: float = 1e-10) -> float:
    """Quadrature of 2 int_0^1 c_vertex(y, g) y dy to absolute tolerance tol."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    _check_girth(g)
    return adaptive_simpson(lambda y: 2.0 * c_vertex(y, g) * y, 0.0, 1.0, tol)


@dataclass
class SelectionFunction:
    """An evaluable selection function with its floor and target integral.

    kind: "vertex" (uses g), one of the edge kinds, or "custom" (table).
    floor: positive constant C with c(y) >= C on [0,1] (C = c(1) for the
    closed forms). alpha: the kind's guarantee integral (density 2y for the
    vertex model, uniform for the edge model).
    """

    kind: str
    g: float | None = None
    floor: float = 0.0
    alpha: float | None = None
    table: tuple[np.ndarray, np.ndarray] | None = None
    _fn: Callable | None = field(default=None, repr=False)

    def __call__(self, y):
        return self._fn(y)


def vertex_selection(g) -> SelectionFunction:
    _check_girth(g)
    fn = lambda y: c_vertex(y, g)
    return SelectionFunction(kind="vertex", g=g, floor=float(c_vertex(1.0, g)), alpha=alpha_closed_form(g), _fn=fn)


def edge_selection(kind: str) -> SelectionFunction:
    if kind not in EDGE_KINDS:
        raise ValueError(f"edge selection kind must be one of {EDGE_KINDS}")
    fn = lambda y: c_edge(y, kind)
    alpha = {
        "rank1": 1.0 - math.exp(-1.0),
        "edge_general": (1.0 - math.exp(-2.0)) / 2.0,
        "edge_tree": 0.5,
    }[kind]
    return SelectionFunction(kind=kind, floor=float(c_edge(1.0, kind)), alpha=alpha, _fn=fn)


def custom_selection(ys, values, floor: float) -> SelectionFunction:
    """Piecewise-linear table on [0,1]; floor must be supplied by the caller."""
    ys = np.asarray(ys, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if ys.ndim != 1 or ys.shape != values.shape or ys.size < 2:
        raise ValueError("need matching 1-d arrays with at least two knots")
    if ys[0] != 0.0 or ys[-1] != 1.0 or np.any(np.diff(ys) <= 0):
        raise ValueError("knots must increase strictly from 0 to 1")
    if floor <= 0.0:
        raise ValueError("floor must be positive")
    fn = lambda y: np.interp(y, ys, values)
    alpha = adaptive_simpson(lambda y: 2.0 * fn(y) * y, 0.0, 1.0, 1e-10)
    return SelectionFunction(kind="custom", floor=float(floor), alpha=alpha, table=(ys, values), _fn=fn)


@dataclass
class CertificateReport:
    grid_size: int
    monotone_ok: bool
    floor_ok: bool
    max_violation: float  # max over grid of c(t) - rhs(t); <= 0 means valid
    equality_max_slack: float  # max |c(t) - rhs(t)|; small iff c solves the ODE
    violations: list[tuple[float, float]]  # (t, positive slack) entries

    @property
    def inequality_ok(self) -> bool:
        return self.max_violation <= 1e-10

    @property
    def passed(self) -> bool:
        return self.monotone_ok and self.floor_ok and self.inequality_ok


def verify_selection_conditions(sel: SelectionFunction, g, grid_size: int, quad_tol: float = 1e-10) -> CertificateReport:
    """Certify sel against the vertex-model conditions on a uniform grid.

    Checks monotone non-increase, the floor, and the defining inequality with
    the inner integral accumulated panel-by-panel by adaptive quadrature.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    _check_girth(g)
    ts = np.linspace(0.0, 1.0, grid_size + 1)
    cumulative = integrate_grid(lambda y: 2.0 * (float(sel(y)) * y + phi(y, g)), ts, quad_tol)
    cs = np.array([float(sel(t)) for t in ts])
    monotone_ok = bool(np.all(np.diff(cs) <= 1e-12))
    floor_ok = bool(np.all(cs >= sel.floor - 1e-12))
    max_violation = -math.inf
    equality_max_slack = 0.0
    violations = []
    for i in range(1, grid_size + 1):
        t = ts[i]
        rhs = 1.0 - cumulative[i] / t
        slack = cs[i] - rhs
        max_violation = max(max_violation, slack)
        equality_max_slack = max(equality_max_slack, abs(slack))
        if slack > 1e-10:
            violations.append((float(t), float(slack)))
    return CertificateReport(
        grid_size=grid_size,
        monotone_ok=monotone_ok,
        floor_ok=floor_ok,
        max_violation=float(max_violation),
        equality_max_slack=float(equality_max_slack),
        violations=violations,
    )

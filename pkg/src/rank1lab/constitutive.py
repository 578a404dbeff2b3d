"""Flux functions, their translates, and the maps P(u, v) and Q_v(h, r).

A :class:`ConstitutiveFn` bundles a strictly increasing scalar flux ``a`` with
its first two derivatives and a primitive ``F`` (``F' = a``) on an open
interval.  All callables accept scalars or numpy arrays.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np


class DomainError(ValueError):
    """Evaluation requested outside the open domain of a flux function."""


@dataclass(frozen=True)
class ConstitutiveFn:
    """A C^2 flux with closed-form derivatives and primitive.

    Parameters
    ----------
    name : str
        Label used in reports.
    a, d1, d2, F : callable
        Flux, its first and second derivatives, and a primitive of the flux.
    domain : tuple of float
        Open interval ``(lo, hi)``; infinite ends are allowed.
    """

    name: str
    a: Callable
    d1: Callable
    d2: Callable
    F: Callable
    domain: tuple = (-math.inf, math.inf)
    params: dict = field(default_factory=dict)

    def check_domain(self, v):
        lo, hi = self.domain
        arr = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr <= lo) or np.any(arr >= hi):
            raise DomainError(f"{self.name}: argument outside open domain ({lo}, {hi})")

    def eval(self, v):
        self.check_domain(v)
        return self.a(v)

    def deriv1(self, v):
        self.check_domain(v)
        return self.d1(v)

    def deriv2(self, v):
        self.check_domain(v)
        return self.d2(v)

    def potential(self, v):
        self.check_domain(v)
        return self.F(v)

    def restrict(self, lo: float, hi: float) -> "ConstitutiveFn":
        """Same function on the sub-interval ``(lo, hi)``."""
        if not lo < hi:
            raise ValueError(f"empty interval ({lo}, {hi})")
        dlo, dhi = self.domain
        if lo < dlo or hi > dhi:
            raise DomainError(f"({lo}, {hi}) is not inside the domain ({dlo}, {dhi})")
        return ConstitutiveFn(self.name, self.a, self.d1, self.d2, self.F, (lo, hi), dict(self.params))

    def to_json(self) -> dict:
        out = {"kind": "builtin", "name": self.name, "params": self.params}
        if self.name == "poly":
            out = {"kind": "poly", "coeffs": list(self.params["coeffs"])}
        out["domain"] = [_json_float(x) for x in self.domain]
        return out


def _json_float(x):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def probe_grid(lo: float, hi: float, n: int = 257, span: float = 10.0) -> np.ndarray:
    """Interior grid of ``n`` points on ``(lo, hi)``; infinite ends are truncated to ``span``."""
    lo_f = lo if math.isfinite(lo) else (min(hi, 0.0) - span if math.isfinite(hi) else -span)
    hi_f = hi if math.isfinite(hi) else (max(lo, 0.0) + span if math.isfinite(lo) else span)
    t = (np.arange(n) + 0.5) / n
    return lo_f + (hi_f - lo_f) * t


def is_increasing(f: ConstitutiveFn, lo=None, hi=None, n: int = 257) -> bool:
    lo = f.domain[0] if lo is None else lo
    hi = f.domain[1] if hi is None else hi
    return bool(np.all(f.d1(probe_grid(lo, hi, n)) > 0))


def convexity_sign(f: ConstitutiveFn, lo=None, hi=None, n: int = 257, closed: bool = False) -> int:
    """+1 if a'' > 0 on the probe grid, -1 if a'' < 0, else 0.

    With ``closed=True`` the finite end points are probed as well.
    """
    lo = f.domain[0] if lo is None else lo
    hi = f.domain[1] if hi is None else hi
    grid = probe_grid(lo, hi, n)
    if closed and math.isfinite(lo) and math.isfinite(hi) and hi > lo:
        grid = np.concatenate([[lo], grid, [hi]])
    dlo, dhi = f.domain
    grid = grid[(grid > dlo) & (grid < dhi)]
    s = f.d2(grid)
    if np.all(s > 0):
        return 1
    if np.all(s < 0):
        return -1
    return 0


def check_primitive(f: ConstitutiveFn, n: int = 64, step: float = 1e-5) -> float:
    """Largest central-difference mismatch between F' and a on a probe grid."""
    lo, hi = f.domain
    grid = probe_grid(lo, hi, n)
    grid = grid[(grid - step > lo) & (grid + step < hi)]
    fd = (f.F(grid + step) - f.F(grid - step)) / (2 * step)
    return float(np.max(np.abs(fd - f.a(grid)) / np.maximum(1.0, np.abs(f.a(grid)))))


# ---------------------------------------------------------------- builtins

def _poly(coeffs: Sequence[float]):
    c = np.asarray(coeffs, dtype=float)
    if c.ndim != 1 or c.size == 0:
        raise ValueError("poly needs a nonempty coefficient list")
    pa = np.polynomial.Polynomial(c)
    return pa, pa.deriv(1), pa.deriv(2), pa.integ(1)


def _log_cosh(v):
    av = np.abs(v)
    return av + np.log1p(np.exp(-2.0 * av)) - math.log(2.0)


def _sech2(v):
    return 1.0 / np.cosh(v) ** 2


def builtin(name: str, params: dict | None = None, domain=None) -> ConstitutiveFn:
    """Construct a built-in flux.

    Supported names: ``exp``, ``power_convex`` (``a = v**p`` on ``(0, inf)``),
    ``cubic_plus_linear``, ``poly`` (``params={"coeffs": [...]}``),
    ``tanh_blend`` (``a = v + beta*tanh(v)``), and the concave examples
    ``concave_exp`` (``a = -exp(-v)``) and ``log`` (``a = log v``).

    Raises
    ------
    ValueError
        Unknown name, or parameters violating ``a' > 0`` on the requested domain.
    """
    params = dict(params or {})
    if name == "exp":
        fn = ConstitutiveFn("exp", np.exp, np.exp, np.exp, np.exp)
    elif name == "concave_exp":
        fn = ConstitutiveFn(
            "concave_exp",
            lambda v: -np.exp(-v),
            lambda v: np.exp(-v),
            lambda v: -np.exp(-v),
            lambda v: np.exp(-v),
        )
    elif name == "log":
        fn = ConstitutiveFn(
            "log",
            np.log,
            lambda v: 1.0 / v,
            lambda v: -1.0 / v**2,
            lambda v: v * np.log(v) - v,
            (0.0, math.inf),
        )
    elif name == "cubic_plus_linear":
        fn = ConstitutiveFn(
            "cubic_plus_linear",
            lambda v: v**3 + v,
            lambda v: 3 * v**2 + 1,
            lambda v: 6 * v,
            lambda v: v**4 / 4 + v**2 / 2,
        )
    elif name == "power_convex":
        p = float(params.setdefault("p", 2.0))
        if p <= 0:
            raise ValueError("power_convex needs p > 0")
        fn = ConstitutiveFn(
            "power_convex",
            lambda v: v**p,
            lambda v: p * v ** (p - 1),
            lambda v: p * (p - 1) * v ** (p - 2),
            lambda v: v ** (p + 1) / (p + 1),
            (0.0, math.inf),
            params,
        )
    elif name == "tanh_blend":
        beta = float(params.setdefault("beta", 1.0))
        if beta <= -1.0:
            raise ValueError("tanh_blend needs beta > -1 for a' > 0")
        fn = ConstitutiveFn(
            "tanh_blend",
            lambda v: v + beta * np.tanh(v),
            lambda v: 1.0 + beta * _sech2(v),
            lambda v: -2.0 * beta * _sech2(v) * np.tanh(v),
            lambda v: 0.5 * v**2 + beta * _log_cosh(v),
            params=params,
        )
    elif name == "poly":
        coeffs = [float(c) for c in params.get("coeffs", [])]
        pa, p1, p2, pF = _poly(coeffs)
        params = {"coeffs": coeffs}
        fn = ConstitutiveFn("poly", pa, p1, p2, pF, params=params)
    else:
        raise ValueError(f"unknown builtin flux {name!r}")
    if domain is not None:
        fn = fn.restrict(float(domain[0]), float(domain[1]))
    if not is_increasing(fn):
        raise ValueError(f"{name}: a' > 0 fails on the domain {fn.domain}")
    return fn


def _parse_bound(x) -> float:
    if isinstance(x, str):
        return float(x)  # accepts "inf" / "-inf"
    return float(x)


def from_spec(spec) -> ConstitutiveFn:
    """Build a flux from a JSON-like spec.

    Accepted forms: a builtin name string, a JSON string or file path holding an
    object, or a dict such as ``{"kind": "poly", "coeffs": [0, 1, 0, 1]}`` or
    ``{"kind": "builtin", "name": "exp", "domain": [-1, 1]}``.
    """
    if isinstance(spec, str):
        s = spec.strip()
        if s.startswith("{"):
            spec = json.loads(s)
        elif Path(s).is_file():
            spec = json.loads(Path(s).read_text())
        else:
            spec = {"kind": "builtin", "name": s}
    if not isinstance(spec, dict):
        raise ValueError(f"flux spec must be an object, got {type(spec).__name__}")
    kind = spec.get("kind", "builtin")
    domain = spec.get("domain")
    if domain is not None:
        if len(domain) != 2:
            raise ValueError("domain must be [lo, hi]")
        domain = (_parse_bound(domain[0]), _parse_bound(domain[1]))
    if kind == "poly":
        return builtin("poly", {"coeffs": spec["coeffs"]}, domain)
    if kind == "builtin":
        if "name" not in spec:
            raise ValueError("builtin spec needs a 'name'")
        return builtin(spec["name"], spec.get("params"), domain)
    raise ValueError(f"unknown flux kind {kind!r}")


# -------------------------------------------------------------- translates

@dataclass(frozen=True)
class Translate:
    """The flux and primitive re-centred at ``v``.

    ``a_v(t) = a(v+t) - a(v)`` and ``F_v(t) = F(v+t) - F(v) - a(v) t``.
    """

    f: ConstitutiveFn
    v: float

    def a(self, t):
        self.f.check_domain(self.v + np.asarray(t, dtype=float))
        return self.f.a(self.v + t) - self.f.a(self.v)

    def F(self, t):
        self.f.check_domain(self.v + np.asarray(t, dtype=float))
        return self.f.F(self.v + t) - self.f.F(self.v) - self.f.a(self.v) * t

    def da(self, t):
        self.f.check_domain(self.v + np.asarray(t, dtype=float))
        return self.f.d1(self.v + t)

    def d2a(self, t):
        self.f.check_domain(self.v + np.asarray(t, dtype=float))
        return self.f.d2(self.v + t)


def translate(f: ConstitutiveFn, v: float) -> Translate:
    f.check_domain(v)
    return Translate(f, float(v))


# ------------------------------------------------------------ point types

@dataclass(frozen=True)
class KPoint:
    u: float
    v: float


@dataclass(frozen=True)
class Quadruple:
    """Four parameter pairs ``(u_i, v_i)``."""

    points: tuple

    def __post_init__(self):
        if len(self.points) != 4:
            raise ValueError(f"a quadruple needs 4 points, got {len(self.points)}")

    @classmethod
    def from_array(cls, arr) -> "Quadruple":
        A = np.asarray(arr, dtype=float)
        if A.shape != (4, 2):
            raise ValueError(f"quadruple array must have shape (4, 2), got {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValueError("quadruple entries must be finite")
        return cls(tuple(KPoint(float(u), float(v)) for u, v in A))

    @property
    def u(self) -> np.ndarray:
        return np.array([p.u for p in self.points])

    @property
    def v(self) -> np.ndarray:
        return np.array([p.v for p in self.points])

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.u, self.v])

    def validate(self, f: ConstitutiveFn):
        f.check_domain(self.v)


# ------------------------------------------------------------------ maps

def p_map(f: ConstitutiveFn, u, v) -> np.ndarray:
    """Embedding ``P(u, v)``; batched over array inputs (result shape ``(..., 3, 2)``)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    av = f.eval(v)
    Fv = f.potential(v)
    rows = [
        np.stack(np.broadcast_arrays(u, v), -1),
        np.stack(np.broadcast_arrays(av, u), -1),
        np.stack(np.broadcast_arrays(u * av, 0.5 * u**2 + Fv), -1),
    ]
    return np.stack(rows, -2)


def q_map(f: ConstitutiveFn, v, h, r) -> np.ndarray:
    """Reduced map ``Q_v(h, r)`` with rows ``(h, r), (a_v(r), h), (h a_v(r), h^2/2 + F_v(r))``."""
    tr = translate(f, v)
    h = np.asarray(h, dtype=float)
    r = np.asarray(r, dtype=float)
    ar = tr.a(r)
    Fr = tr.F(r)
    rows = [
        np.stack(np.broadcast_arrays(h, r), -1),
        np.stack(np.broadcast_arrays(ar, h), -1),
        np.stack(np.broadcast_arrays(h * ar, 0.5 * h**2 + Fr), -1),
    ]
    return np.stack(rows, -2)


def inflection_scan(f: ConstitutiveFn, interval=None, n: int = 2001) -> list[tuple[float, float]]:
    """Brackets ``[x_j, x_k]`` where ``a''`` changes sign on an ``n``-point grid.

    Grid points where ``a''`` vanishes exactly are skipped, so each bracket
    joins two consecutive grid points of strictly opposite sign.
    """
    if n < 3:
        raise ValueError("inflection_scan needs n >= 3")
    lo, hi = f.domain if interval is None else interval
    grid = probe_grid(lo, hi, n)
    s = np.sign(f.deriv2(grid))
    nz = np.flatnonzero(s != 0)
    out = []
    for j, k in zip(nz[:-1], nz[1:]):
        if s[j] != s[k]:
            out.append((float(grid[j]), float(grid[k])))
    return out

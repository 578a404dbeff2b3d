"""Rank-one connections and T_4 exclusion for quadruples on the K1 manifold."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .constitutive import (ConstitutiveFn, Quadruple, convexity_sign, inflection_scan, is_increasing,
                           p_map, probe_grid, translate)
from .matspace import DEFAULT_TOL, Tolerance, cross3, sigma_ratio, singular_values
from .reduction import (ClassificationError, Rank1Directions, SubspaceRep, a_matrices, rank1_directions,
                        reduce, s_matrix)
from .roots import bisect, isolate_roots
from .tn import sign_rows

LEMMA_TAGS = ("L1.3", "L1.5", "LC3", "L12", "L15", "L17", "L23")


def g_eval(f: ConstitutiveFn, v, r):
    """``g_v(r) = 2 F_v(r) - r a_v(r)``."""
    tr = translate(f, v)
    r = np.asarray(r, dtype=float)
    return 2.0 * tr.F(r) - r * tr.a(r)


# ------------------------------------------------------ rank-one connections

@dataclass
class Rank1Connection:
    v: float
    r: float
    h: float
    u: float = 0.0
    g_residual: float = float("nan")
    sigma_ratio: float = float("nan")

    @property
    def witness(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return (self.u, self.v), (self.u + self.h, self.v + self.r)

    def to_json(self) -> dict:
        return {"v": self.v, "r": self.r, "h": self.h, "witness": [list(p) for p in self.witness],
                "g_residual": self.g_residual, "sigma_ratio": self.sigma_ratio}


def make_connection(f: ConstitutiveFn, v: float, r: float, u: float = 0.0) -> Rank1Connection:
    tr = translate(f, v)
    h = math.sqrt(max(float(r * tr.a(r)), 0.0))
    D = p_map(f, u + h, v + r) - p_map(f, u, v)
    return Rank1Connection(float(v), float(r), h, u, abs(float(g_eval(f, v, r))), sigma_ratio(D))


@dataclass
class FindRank1Result:
    connections: list
    certified_empty: bool
    reason: str
    inflections: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"connections": [c.to_json() for c in self.connections], "certified": self.certified_empty,
                "reason": self.reason, "inflections": [list(b) for b in self.inflections]}


def _refine_inflection(f, lo, hi):
    return bisect(lambda t: float(f.d2(t)), lo, hi)


def find_rank1(f: ConstitutiveFn, interval, grid: int = 2001, tol: Tolerance = DEFAULT_TOL,
               n_v1: int = 8) -> FindRank1Result:
    """Locate rank-one connections on ``K1`` restricted to ``interval``.

    Around each isolated inflection ``v0`` (one-sided signs of ``a''`` on
    ``(v0 - delta, v0 + delta)``) a base point ``v1`` in ``(v0 - delta/2, v0)`` is
    chosen with ``g_{v1}(v0 - v1)`` and ``g_{v1}(v0 + delta/2 - v1)`` of opposite
    signs, and ``w -> g_{v1}(v0 + w - v1)`` is bisected on ``[0, delta/2]``.
    With ``a''`` of fixed strict sign the result is empty and certified.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not lo < hi:
        raise ValueError(f"interval must satisfy lo < hi, got ({lo}, {hi})")
    fI = f.restrict(lo, hi)
    if not is_increasing(fI, n=grid):
        raise ValueError("a' > 0 fails on the interval")
    brackets = inflection_scan(fI, (lo, hi), grid)
    if not brackets:
        sgn = convexity_sign(fI, n=grid)
        if sgn != 0:
            kind = "convex" if sgn > 0 else "concave"
            return FindRank1Result([], True, f"a'' has fixed sign ({kind}); g_v(r) r has fixed sign, so no connection")
        return FindRank1Result([], False, "a'' vanishes on the probe grid without changing sign; not certified")
    v0s = [_refine_inflection(fI, a, b) for a, b in brackets]
    conns = []
    for idx, v0 in enumerate(v0s):
        left = v0s[idx - 1] if idx > 0 else lo
        right = v0s[idx + 1] if idx + 1 < len(v0s) else hi
        delta = 0.999 * min(v0 - left, right - v0)
        if delta <= 0:
            continue
        for j in range(n_v1):
            v1 = v0 - 0.5 * delta * (1.0 - (j + 1) / (n_v1 + 1))
            p = float(g_eval(fI, v1, v0 - v1))
            q = float(g_eval(fI, v1, v0 + 0.5 * delta - v1))
            if p == 0.0 or q == 0.0 or np.sign(p) == np.sign(q):
                continue
            w = bisect(lambda t: float(g_eval(fI, v1, v0 + t - v1)), 0.0, 0.5 * delta, p)
            c = make_connection(fI, v1, v0 + w - v1)
            if c.g_residual < max(tol.residual_tol, 1e-10) and c.sigma_ratio < 1e-8:
                conns.append(c)
    reason = f"{len(conns)} connection(s) from {len(v0s)} inflection point(s)"
    return FindRank1Result(conns, False, reason, [list(b) for b in brackets])


# --------------------------------------------------------------- lambda system

@dataclass
class LambdaSolution:
    h: float
    r: float
    a: float
    D: float
    residual26: float
    residual27: float

    @property
    def trivial(self) -> bool:
        return self.r == 0.0 and self.h == 0.0


@dataclass
class LambdaSystem:
    v: float
    lam1: float
    lam2: float
    solutions: list
    poles: list = field(default_factory=list)

    def nontrivial(self) -> list:
        return [s for s in self.solutions if not s.trivial]

    def count_below(self) -> int:
        """Solutions (trivial included) with ``a(r) < lambda_1``."""
        return sum(1 for s in self.solutions if s.a < self.lam1)

    def to_json(self) -> dict:
        return {"v": self.v, "lambda1": self.lam1, "lambda2": self.lam2,
                "solutions": [vars(s) for s in self.solutions], "poles": self.poles}


def lambda_residuals(f: ConstitutiveFn, v, lam1, lam2, h, r) -> tuple[float, float]:
    """Scaled residuals of ``h a = l1 h + l2 a`` and ``h^2/2 + F = l1 r + l2 h``."""
    tr = translate(f, v)
    a, F = float(tr.a(r)), float(tr.F(r))
    e1 = (h * a - lam1 * h - lam2 * a) / max(1.0, abs(h * a), abs(lam1 * h), abs(lam2 * a))
    e2 = (0.5 * h * h + F - lam1 * r - lam2 * h) / max(1.0, 0.5 * h * h, abs(F), abs(lam1 * r), abs(lam2 * h))
    return abs(e1), abs(e2)


def lambda_solve(f: ConstitutiveFn, v: float, lam1: float, lam2: float, interval=None,
                 n: int = 20001, span: float = 10.0) -> LambdaSystem:
    """All solutions ``(h, r)`` of the lambda system at base ``v`` found on an ``r`` grid.

    ``h`` is eliminated as ``lam2 a(r) / (a(r) - lam1)`` and the scalar
    equation ``p(r) = q(r)`` is isolated by sign changes between the poles
    ``a(r) = lam1``.  Tangential (even-multiplicity) roots are not detected.
    """
    if lam1 == 0.0 or lam2 == 0.0:
        raise ValueError("lambda_solve needs lambda_1 != 0 and lambda_2 != 0")
    tr = translate(f, v)
    if interval is None:
        dlo, dhi = f.domain
        interval = (max(dlo - v, -span), min(dhi - v, span))
    lo, hi = float(interval[0]), float(interval[1])
    if not lo < 0.0 < hi:
        raise ValueError("the r interval must contain 0")
    x = probe_grid(lo, hi, n)
    x = np.unique(np.concatenate([x, [0.0]]))
    ax = tr.a(x) - lam1
    poles = []
    cuts = [0]
    for j in range(len(x) - 1):
        if ax[j] == 0.0:
            poles.append(float(x[j]))
        elif np.sign(ax[j]) != np.sign(ax[j + 1]) and ax[j + 1] != 0.0:
            rp = bisect(lambda t: float(tr.a(t)) - lam1, float(x[j]), float(x[j + 1]), float(ax[j]))
            poles.append(rp)
            cuts.append(j + 1)
    cuts.append(len(x))

    def phi(t):
        t = np.asarray(t, dtype=float)
        at = tr.a(t)
        return tr.F(t) - lam1 * t - 0.5 * lam2**2 + lam1**2 * lam2**2 / (2.0 * (at - lam1) ** 2)

    roots = []
    for c0, c1 in zip(cuts[:-1], cuts[1:]):
        seg = x[c0:c1]
        seg = seg[tr.a(seg) != lam1]
        if len(seg) >= 2:
            roots += isolate_roots(phi, seg)
    sols = [LambdaSolution(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)]
    scale = max(abs(lo), abs(hi))
    for r in sorted(roots):
        if abs(r) <= 1e-10 * scale:
            continue
        if any(abs(r - s.r) <= 1e-12 * max(1.0, abs(r)) for s in sols):
            continue
        a = float(tr.a(r))
        h = lam2 * a / (a - lam1)
        e1, e2 = lambda_residuals(f, v, lam1, lam2, h, r)
        sols.append(LambdaSolution(float(h), float(r), a, float(h * h - r * a), e1, e2))
    sols.sort(key=lambda s: s.r)
    return LambdaSystem(float(v), float(lam1), float(lam2), sols, poles)


# ----------------------------------------------------------------- D matrix

@dataclass
class DSignMatrix:
    D: np.ndarray
    symmetry_error: float
    row_status: list

    @property
    def constant_rows(self) -> list[int]:
        return [i for i, s in enumerate(self.row_status) if s in ("positive", "negative")]

    def to_json(self) -> dict:
        return {"D": self.D.tolist(), "symmetry_error": self.symmetry_error, "row_status": self.row_status,
                "constant_rows": self.constant_rows}


def d_matrix(f: ConstitutiveFn, K: Quadruple, margin: float = 0.0, require_distinct: bool = True) -> DSignMatrix:
    """``D[i, k] = (h_i^k)^2 - r_i^k a_{v_k}(r_i^k)`` from the four translates.

    Raises
    ------
    ValueError
        If two ``v`` values coincide and ``require_distinct`` is set.
    """
    v = K.v
    if require_distinct and len(np.unique(v)) < 4:
        raise ValueError("degenerate quadruple: repeated v values")
    u = K.u
    D = np.zeros((4, 4))
    for k in range(4):
        tr = translate(f, v[k])
        for i in range(4):
            if i != k:
                h, r = u[i] - u[k], v[i] - v[k]
                D[i, k] = h * h - r * float(tr.a(r))
    sym = float(np.max(np.abs(D - D.T)))
    return DSignMatrix(D, sym, sign_rows(0.5 * (D + D.T), margin))


# ------------------------------------------------------------ structure checks

@dataclass
class StructureReport:
    checked: dict = field(default_factory=lambda: {"l20": 0, "l21": 0, "l22": 0})
    violations: list = field(default_factory=list)
    max_residual: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations

    def merge(self, other: "StructureReport") -> "StructureReport":
        for k, n in other.checked.items():
            self.checked[k] = self.checked.get(k, 0) + n
        self.violations += other.violations
        self.max_residual = max(self.max_residual, other.max_residual)
        return self

    def to_json(self) -> dict:
        return {"checked": self.checked, "violations": self.violations, "max_residual": self.max_residual,
                "ok": self.ok}


def structure_checks(f: ConstitutiveFn, systems, d_tol: float = 1e-12) -> StructureReport:
    """Evaluate the root bound, sign and monotonicity properties on solved lambda systems."""
    rep = StructureReport()
    for sysm in systems:
        lam1 = sysm.lam1
        nb = sysm.count_below() if lam1 > 0 else 0
        if lam1 > 0:
            rep.checked["l20"] += 1
            if nb > 2:
                rep.violations.append({"check": "l20", "v": sysm.v, "lambda": [lam1, sysm.lam2], "count": nb})
        nt = [s for s in sysm.nontrivial() if abs(s.D) > d_tol]
        for s in sysm.nontrivial():
            rep.max_residual = max(rep.max_residual, s.residual26, s.residual27)
        for s in nt:
            if (lam1 > 0 and s.a < lam1) or (lam1 < 0 and s.a > lam1):
                rep.checked["l21"] += 1
                want = 1.0 if lam1 > 0 else -1.0
                if np.sign(s.D) != want:
                    rep.violations.append({"check": "l21", "v": sysm.v, "lambda": [lam1, sysm.lam2],
                                           "h": s.h, "r": s.r, "D": s.D})
        if lam1 > 0:
            above = sorted((s for s in nt if s.a > lam1), key=lambda s: s.a)
            for s1, s2 in zip(above[:-1], above[1:]):
                rep.checked["l22"] += 1
                if not s1.D > s2.D:
                    rep.violations.append({"check": "l22", "v": sysm.v, "lambda": [lam1, sysm.lam2],
                                           "pair": [[s1.h, s1.r, s1.D], [s2.h, s2.r, s2.D]]})
    return rep


def l18_scan(f: ConstitutiveFn, interval, n: int = 100) -> dict:
    """Check the sign of ``g_v(r) r`` on an ``n x n`` grid of base points and offsets.

    Expected sign is negative for convex and positive for concave ``a``.
    """
    lo, hi = float(interval[0]), float(interval[1])
    fI = f.restrict(lo, hi)
    sgn = convexity_sign(fI)
    vs = probe_grid(lo, hi, n)
    ws = probe_grid(lo, hi, n)
    V, W = np.meshgrid(vs, ws, indexing="ij")
    R = W - V
    mask = np.abs(R) > 1e-12 * (hi - lo)
    G = np.zeros_like(R)
    for i, v in enumerate(vs):
        G[i] = g_eval(fI, v, R[i])
    prod = G * R
    out = {"convexity": int(sgn), "points": int(mask.sum())}
    if sgn == 0:
        pos = mask & (prod > 0)
        out.update({"expected": None, "violations": int(pos.sum()),
                    "violating_v": [float(x) for x in np.unique(V[pos])[:20]]})
        return out
    bad = mask & ((prod >= 0) if sgn > 0 else (prod <= 0))
    out.update({"expected": "negative" if sgn > 0 else "positive", "violations": int(bad.sum()),
                "violating_v": [float(x) for x in np.unique(V[bad])[:20]]})
    return out


# -------------------------------------------------------------- certification

@dataclass
class CertOptions:
    tol: Tolerance = DEFAULT_TOL
    margin: float = 1e-9
    fit_tol: float = 1e-8
    ambiguity: float = 1e3
    probe: int = 257


@dataclass
class CertReport:
    outcome: str
    lemma: str | None = None
    reason: str = ""
    margins: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)
    connection: dict | None = None

    def to_json(self) -> dict:
        out = {"outcome": self.outcome}
        if self.lemma:
            out["lemma"] = self.lemma
        if self.reason:
            out["reason"] = self.reason
        if self.connection is not None:
            out["connection"] = self.connection
        out["margins"] = self.margins
        out["audit"] = self.audit
        return out


def _fit(cols, target):
    X = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(X, target, rcond=None)
    res = float(np.linalg.norm(X @ coef - target) / max(1.0, np.linalg.norm(target)))
    return coef, res


def _line_count_verdict(rd: Rank1Directions, dim: int) -> bool:
    return rd.excludes_t4(dim)


def certify_no_t4(f: ConstitutiveFn, K: Quadruple, opts: CertOptions | None = None) -> CertReport:
    """Decide that the four points ``P(u_i, v_i)`` admit no non-degenerate T_4.

    Every numeric decision is checked against the configured margins; when a
    margin is not met the report is ``Inconclusive`` with diagnostics.
    """
    opts = opts or CertOptions()
    tol = opts.tol
    K.validate(f)
    arr = K.as_array()
    order = np.lexsort((arr[:, 0], arr[:, 1]))
    Ks = Quadruple.from_array(arr[order])
    u, v = Ks.u, Ks.v
    audit = {"sorted_quadruple": Ks.as_array().tolist()}
    margins: dict = {}
    scale = max(float(np.max(np.abs(u - u[0]))), float(np.max(np.abs(v - v[0]))), 1e-300)
    mg = opts.margin * scale

    for i, j in itertools.combinations(range(4), 2):
        if abs(u[i] - u[j]) <= mg and abs(v[i] - v[j]) <= mg:
            return CertReport("Degenerate", reason="repeated point: fewer than four distinct matrices",
                              margins=margins, audit=audit)

    P = p_map(f, u, v)
    ratios = {(i, j): sigma_ratio(P[j] - P[i]) for i, j in itertools.combinations(range(4), 2)}
    worst = min(ratios, key=ratios.get)
    margins["pair_sigma_ratio_min"] = ratios[worst]
    if ratios[worst] <= tol.rank_tol:
        i, j = worst
        c = Rank1Connection(float(v[i]), float(v[j] - v[i]), float(u[j] - u[i]), float(u[i]),
                            abs(float(g_eval(f, v[i], v[j] - v[i]))), ratios[worst])
        return CertReport("Rank1Present", reason=f"points {i} and {j} are rank-one connected",
                          margins=margins, audit=audit, connection=c.to_json())
    if ratios[worst] <= opts.ambiguity * tol.rank_tol:
        return CertReport("Inconclusive", reason="a pair is nearly rank-one connected", margins=margins, audit=audit)

    if v[-1] > v[0]:
        inc = bool(np.all(f.d1(np.linspace(v[0], v[-1], opts.probe)) > 0))
        sgn = convexity_sign(f, float(v[0]), float(v[-1]), opts.probe, closed=True)
        margins["convexity"] = sgn
        if not inc or sgn == 0:
            return CertReport("Inconclusive", reason="hypothesis violated: a' > 0 and a'' of strict sign "
                              "must hold on the hull of the v values", margins=margins, audit=audit)
    else:
        sgn = 0

    U = reduce(f, Ks, 0)
    S, p = s_matrix(U, tol)
    sv = singular_values(S)
    audit["S"] = S.tolist()
    margins["s_singular_values"] = sv.tolist()
    if p >= 1 and sv[p - 1] <= opts.ambiguity * tol.rank_tol * sv[0]:
        return CertReport("Inconclusive", reason="span dimension is numerically ambiguous",
                          margins=margins, audit=audit)
    margins["span_dim"] = p
    if p <= 1:
        return CertReport("Degenerate", reason="points lie on an affine line", margins=margins, audit=audit)

    h, r, z, y, w = U.nonbase()
    A = a_matrices(U, tol)
    audit["A_left"] = A.left.tolist()
    audit["A_right"] = A.right.tolist()
    span = SubspaceRep.from_columns(A.left, A.right, tol)
    if span.dim != p:
        span = SubspaceRep.from_matrices(list(U.entries[U.others]), tol)

    def by_count(tag: str, extra: dict | None = None) -> CertReport:
        try:
            rd = rank1_directions(span, tol)
        except ClassificationError as exc:
            return CertReport("Inconclusive", tag, f"rank-one directions not classified: {exc}", margins, audit)
        audit["rank1_directions"] = rd.to_json()
        margins["classification_margin"] = rd.margin
        if extra:
            margins.update(extra)
        if _line_count_verdict(rd, p):
            return CertReport("NoT4", tag, f"dim {p} span holds {rd.kind} ({len(rd.lines)} line(s))",
                              margins, audit)
        return CertReport("Inconclusive", tag, f"too many rank-one directions ({rd.kind})", margins, audit)

    nh, nr, nz = (float(np.linalg.norm(x)) for x in (h, r, z))
    if nh <= mg or nr <= mg:
        return by_count("L1.3")
    hr = float(np.linalg.norm(cross3(h, r))) / (nh * nr)
    hz = float(np.linalg.norm(cross3(h, z))) / (nh * max(nz, 1e-300))
    margins["cross_h_r"], margins["cross_h_z"] = hr, hz
    if hr <= opts.margin or hz <= opts.margin:
        return by_count("L1.5")

    if p == 2:
        (g1, g2), e1 = _fit([h, z], r)
        (l1, l2), e2 = _fit([h, z], y)
        (m1, m2), e3 = _fit([h, z], w)
        disc = g1 * g1 + 4.0 * g2
        extra = {"gamma": [g1, g2], "lambda": [l1, l2], "mu": [m1, m2], "fit_residual": max(e1, e2, e3),
                 "discriminant": disc}
        if disc > 0:
            k = 0.5 * (g1 + math.sqrt(disc))
            l = 0.5 * (g1 - math.sqrt(disc))
            extra.update({"roots": [k, l], "necessary": [l1 * k + l2, l1 * l + l2]})
        rep = by_count("LC3", extra)
        if rep.outcome == "NoT4" and max(e1, e2, e3) > opts.fit_tol:
            return CertReport("Inconclusive", "LC3", "linear fits of the dim-2 span exceed tolerance", margins, audit)
        return rep

    if A.rank_left == 3 or A.rank_right == 3:
        return by_count("L12", {"rank_left": A.rank_left, "rank_right": A.rank_right})

    margins.update({"rank_left": A.rank_left, "rank_right": A.rank_right, "rank_full": A.rank_full})
    if A.rank_full == 3:
        (l1, l2), e1 = _fit([h, z], y)
        (m1, m2), e2 = _fit([r, h], w)
        margins.update({"lambda": [l1, l2], "mu": [m1, m2], "fit_residual": max(e1, e2)})
        if max(e1, e2) > opts.fit_tol:
            return CertReport("Inconclusive", "L15", "linear fits exceed tolerance", margins, audit)
        n1 = (m1 - l1) * r + (m2 - l2) * h
        n2 = (m1 - l1) * h + (m2 - l2) * z
        cands = [cross3(h, r), cross3(h, z), cross3(n1, n2)]
        Q = U.entries[U.others]
        lines = []
        for alpha in cands:
            if np.linalg.norm(alpha) == 0.0:
                continue
            M = np.einsum("i,ijk->jk", alpha, Q)
            if np.linalg.norm(M) > 0 and sigma_ratio(M) <= 1e-8:
                lines.append(M)
        audit["l15_lines"] = [m.tolist() for m in lines]
        rep = by_count("L15")
        if rep.outcome == "NoT4" and len(audit["rank1_directions"]["lines"]) > 3:
            return CertReport("Inconclusive", "L15", "explicit and generic classifications disagree", margins, audit)
        return rep

    if A.rank_full != 2:
        return CertReport("Inconclusive", reason=f"unexpected rank of A_0 ({A.rank_full})", margins=margins, audit=audit)
    (l1, l2), e1 = _fit([np.concatenate([h, r]), np.concatenate([z, h])], np.concatenate([y, w]))
    margins.update({"lambda": [l1, l2], "fit_residual": e1})
    if e1 > opts.fit_tol:
        return CertReport("Inconclusive", reason="lambda fit exceeds tolerance", margins=margins, audit=audit)
    tag = "L17" if min(abs(l1), abs(l2)) <= mg else "L23"
    Dm = d_matrix(f, Ks, opts.margin * scale * scale, require_distinct=False)
    audit["D"] = Dm.D.tolist()
    margins["row_status"] = Dm.row_status
    if Dm.constant_rows:
        i = Dm.constant_rows[0]
        margins["row_margin"] = float(np.min(np.abs(np.delete(Dm.D[i], i)))) / (scale * scale)
        return CertReport("NoT4", tag, f"row {i} of the determinant table has constant sign", margins, audit)
    return CertReport("Inconclusive", tag, "no determinant row of constant sign", margins, audit)

"""T_N certificates: verification, numerical search, determinant-sign filter, lamination hull."""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .matspace import DEFAULT_TOL, Tolerance, is_rank1_connected, numeric_rank, span_dim

KAPPA_MARGIN = 1e-6
MAX_N = 8


# ------------------------------------------------------------ certificates

@dataclass
class TnCertificate:
    """Staircase data ``T_i = P + C_1 + ... + C_{i-1} + kappa_i C_i`` with ``C_i = a_i b_i^T``."""

    P: np.ndarray
    factors: list
    kappas: np.ndarray

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        self.factors = [(np.asarray(a, dtype=float), np.asarray(b, dtype=float)) for a, b in self.factors]
        self.kappas = np.asarray(self.kappas, dtype=float)

    @property
    def N(self) -> int:
        return len(self.factors)

    @property
    def C(self) -> np.ndarray:
        return np.array([np.outer(a, b) for a, b in self.factors])

    def corners(self) -> np.ndarray:
        """Inner points ``P_1 = P`` and ``P_{i+1} = P_i + C_i``."""
        C = self.C
        return self.P + np.concatenate([np.zeros((1,) + self.P.shape), np.cumsum(C, axis=0)[:-1]])

    def predicted(self) -> np.ndarray:
        return self.corners() + self.kappas[:, None, None] * self.C

    def residuals(self, T) -> tuple[np.ndarray, np.ndarray]:
        """Per-index staircase residual matrices and the residual of ``sum C_i``."""
        T = np.asarray(T, dtype=float)
        return T - self.predicted(), self.C.sum(axis=0)

    def residual_norm(self, T) -> float:
        R, S = self.residuals(T)
        return float(math.sqrt(np.sum(R * R) + np.sum(S * S)))

    def rotated(self, shift: int) -> "TnCertificate":
        """Certificate for the cyclically rotated ordering ``(T_s, T_{s+1}, ...)``."""
        s = shift % self.N
        P = self.corners()[s]
        fac = self.factors[s:] + self.factors[:s]
        kap = np.concatenate([self.kappas[s:], self.kappas[:s]])
        return TnCertificate(P, fac, kap)

    def transformed(self, L) -> "TnCertificate":
        """Certificate after the left multiplication ``X -> L X``."""
        L = np.asarray(L, dtype=float)
        return TnCertificate(L @ self.P, [(L @ a, b) for a, b in self.factors], self.kappas.copy())

    def to_json(self) -> dict:
        return {
            "P": self.P.tolist(),
            "C": [{"a": a.tolist(), "b": b.tolist()} for a, b in self.factors],
            "kappa": self.kappas.tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "TnCertificate":
        return cls(np.array(d["P"], dtype=float), [(c["a"], c["b"]) for c in d["C"]], d["kappa"])


@dataclass
class Verdict:
    """Outcome of verification or search.

    ``status`` is one of ``Valid``, ``Invalid``, ``Found``, ``NotFound``.
    """

    status: str
    reason: str = ""
    cert: TnCertificate | None = None
    residual: float = float("nan")
    starts: int = 0
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in ("Valid", "Found")

    def to_json(self) -> dict:
        out = {"status": self.status}
        if self.reason:
            out["reason"] = self.reason
        if self.cert is not None:
            out["certificate"] = self.cert.to_json()
        if not math.isnan(self.residual):
            out["residual"] = self.residual
        if self.starts:
            out["starts"] = self.starts
        if self.details:
            out["details"] = self.details
        return out


def _as_stack(T) -> np.ndarray:
    A = np.asarray(T, dtype=float)
    if A.ndim != 3:
        raise ValueError(f"expected a list of equally shaped matrices, got array of shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    return A


def rank1_pairs(T, tol: Tolerance = DEFAULT_TOL) -> list[tuple[int, int]]:
    T = _as_stack(T)
    return [(i, j) for i, j in itertools.combinations(range(len(T)), 2) if is_rank1_connected(T[i], T[j], tol)]


def verify(T, cert: TnCertificate, tol: Tolerance = DEFAULT_TOL, kappa_margin: float = KAPPA_MARGIN) -> Verdict:
    """Check every clause of the T_N definition for the ordered list ``T``."""
    T = _as_stack(T)
    N = len(T)
    if N < 4:
        raise ValueError(f"a T_N configuration needs N >= 4 matrices, got {N}")
    if cert.N != N or cert.P.shape != T.shape[1:]:
        raise ValueError("certificate shape does not match the matrices")
    pairs = rank1_pairs(T, tol)
    if pairs:
        return Verdict("Invalid", f"rank-one connected pair {pairs[0]}")
    for i, (a, b) in enumerate(cert.factors):
        if numeric_rank(np.outer(a, b), tol) != 1:
            return Verdict("Invalid", f"C_{i} is not rank one")
    if np.any(cert.kappas < 1.0 + kappa_margin):
        bad = int(np.argmin(cert.kappas))
        return Verdict("Invalid", f"kappa bound violated at index {bad} (kappa = {cert.kappas[bad]:.6g})")
    R, S = cert.residuals(T)
    per = [float(np.linalg.norm(r)) for r in R] + [float(np.linalg.norm(S))]
    res = cert.residual_norm(T)
    if max(per) >= tol.residual_tol:
        return Verdict("Invalid", f"staircase residual {max(per):.3e} exceeds tolerance", residual=res)
    if span_dim(T[1:] - T[0], tol) < 2:
        return Verdict("Invalid", "degenerate: points lie on an affine line", residual=res)
    return Verdict("Valid", cert=cert, residual=res)


# ----------------------------------------------------------------- search

def _minor_index(m: int, n: int):
    rows = list(itertools.combinations(range(m), 2))
    cols = list(itertools.combinations(range(n), 2))
    return [(i, j, k, l) for i, j in rows for k, l in cols]


def _all_minors(D, idx) -> np.ndarray:
    return np.stack([D[..., i, k] * D[..., j, l] - D[..., i, l] * D[..., j, k] for i, j, k, l in idx], -1)


def _kappas(s, margin):
    return 1.0 + margin + s * s


def _kappa_corners(s, T, margin):
    """Inner points ``P_i`` forced by the kappas: ``P_{i+1} = (1 - 1/k_i) P_i + T_i / k_i`` cyclically."""
    k = _kappas(s, margin)
    alpha = 1.0 - 1.0 / k
    beta = 1.0 / k
    B, N = s.shape
    # weight of T_i in P_1: beta_i * prod_{j > i} alpha_j
    after = np.ones((B, N))
    for i in range(N - 2, -1, -1):
        after[:, i] = after[:, i + 1] * alpha[:, i + 1]
    denom = 1.0 - after[:, 0] * alpha[:, 0]
    w = beta * after / denom[:, None]
    P = [np.sum(w[:, :, None, None] * T, axis=1)]
    for i in range(N - 1):
        P.append(alpha[:, i, None, None] * P[-1] + beta[:, i, None, None] * T[:, i])
    return np.stack(P, 1), k


def _kappa_residual(s, T, margin, idx):
    P, _ = _kappa_corners(s, T, margin)
    return _all_minors(T - P, idx).reshape(s.shape[0], -1)


def _lm_kappa(s, T, margin, idx, iters, s_max=1e3):
    B, N = s.shape
    mu = np.full(B, 1e-2)
    r = _kappa_residual(s, T, margin, idx)
    cost = np.sum(r * r, 1)
    TN = np.repeat(T, N, axis=0)
    eye = np.eye(N)
    checkpoint = cost.copy()
    for it in range(iters):
        h = 1e-7 * (1.0 + np.abs(s))
        # all N forward differences in one batched evaluation
        sp = (s[:, None, :] + eye[None] * h[:, :, None]).reshape(B * N, N)
        rp = _kappa_residual(sp, TN, margin, idx).reshape(B, N, -1)
        J = ((rp - r[:, None, :]) / h[:, :, None]).transpose(0, 2, 1)
        JtJ = np.einsum("brv,brw->bvw", J, J)
        g = np.einsum("brv,br->bv", J, r)
        diag = np.einsum("bvv->bv", JtJ)
        A = JtJ + mu[:, None, None] * eye * (1.0 + diag[:, :, None])
        step = -np.linalg.solve(A, g[..., None])[..., 0]
        sn = np.clip(s + step, -s_max, s_max)
        rn = _kappa_residual(sn, T, margin, idx)
        cn = np.sum(rn * rn, 1)
        acc = cn < cost
        s = np.where(acc[:, None], sn, s)
        r = np.where(acc[:, None], rn, r)
        cost = np.where(acc, cn, cost)
        mu = np.clip(np.where(acc, mu / 3.0, mu * 2.0), 1e-14, 1e10)
        if np.all((cost < 1e-30) | (mu >= 1e10)):
            break
        if it % 10 == 9:
            # stop once the best start stalls and no start is converging quickly
            best_stalled = cost.min() >= (1.0 - 1e-3) * checkpoint.min()
            if best_stalled and np.all(cost >= 0.5 * checkpoint):
                break
            checkpoint = cost.copy()
    return s, cost


def _unpack(x, N, m, n):
    B = x.shape[0]
    o = m * n
    P = x[:, :o].reshape(B, m, n)
    a = x[:, o:o + N * m].reshape(B, N, m)
    o += N * m
    b = x[:, o:o + N * n].reshape(B, N, n)
    o += N * n
    return P, a, b, x[:, o:o + N]


def _pack(P, a, b, s):
    B = P.shape[0]
    return np.concatenate([P.reshape(B, -1), a.reshape(B, -1), b.reshape(B, -1), s.reshape(B, -1)], 1)


def _full_residual_jac(x, T, margin, want_jac=True):
    """Residuals of the staircase equations, of ``sum C_i`` and the gauge ``|a_i|^2 - |b_i|^2``."""
    B = x.shape[0]
    _, N, m, n = T.shape
    mn = m * n
    P, a, b, s = _unpack(x, N, m, n)
    k = _kappas(s, margin)
    C = np.einsum("bim,bin->bimn", a, b)
    nres = (N + 1) * mn + N
    R = np.zeros((B, nres))
    J = np.zeros((B, nres, x.shape[1])) if want_jac else None
    ia, ib, isx = mn, mn + N * m, mn + N * m + N * n
    eye_m, eye_n, eye_mn = np.eye(m), np.eye(n), np.eye(mn)
    da = [np.einsum("pq,br->bqrp", eye_m, b[:, j]).reshape(B, mn, m) for j in range(N)] if want_jac else None
    db = [np.einsum("bq,pr->bqrp", a[:, j], eye_n).reshape(B, mn, n) for j in range(N)] if want_jac else None
    cum = np.zeros((B, m, n))
    for i in range(N):
        rows = slice(i * mn, (i + 1) * mn)
        R[:, rows] = (T[:, i] - P - cum - k[:, i, None, None] * C[:, i]).reshape(B, mn)
        if want_jac:
            J[:, rows, :mn] = -eye_mn
            for j in range(i + 1):
                coef = 1.0 if j < i else k[:, i, None, None]
                J[:, rows, ia + j * m:ia + (j + 1) * m] = -coef * da[j]
                J[:, rows, ib + j * n:ib + (j + 1) * n] = -coef * db[j]
            J[:, rows, isx + i] = -(2.0 * s[:, i, None, None] * C[:, i]).reshape(B, mn)
        cum = cum + C[:, i]
    rows = slice(N * mn, (N + 1) * mn)
    R[:, rows] = cum.reshape(B, mn)
    for j in range(N):
        r = (N + 1) * mn + j
        R[:, r] = np.sum(a[:, j] ** 2, -1) - np.sum(b[:, j] ** 2, -1)
        if want_jac:
            J[:, rows, ia + j * m:ia + (j + 1) * m] = da[j]
            J[:, rows, ib + j * n:ib + (j + 1) * n] = db[j]
            J[:, r, ia + j * m:ia + (j + 1) * m] = 2.0 * a[:, j]
            J[:, r, ib + j * n:ib + (j + 1) * n] = -2.0 * b[:, j]
    return R, J


def _lm_full(x, T, margin, iters, target=1e-26):
    B, V = x.shape
    mu = np.full(B, 1e-3)
    R, J = _full_residual_jac(x, T, margin)
    cost = np.sum(R * R, 1)
    for _ in range(iters):
        JtJ = np.einsum("brv,brw->bvw", J, J)
        g = np.einsum("brv,br->bv", J, R)
        diag = np.einsum("bvv->bv", JtJ)
        A = JtJ + mu[:, None, None] * np.eye(V) * (1.0 + diag[:, :, None])
        step = -np.linalg.solve(A, g[..., None])[..., 0]
        xn = x + step
        Rn, Jn = _full_residual_jac(xn, T, margin)
        cn = np.sum(Rn * Rn, 1)
        acc = cn < cost
        x = np.where(acc[:, None], xn, x)
        R = np.where(acc[:, None], Rn, R)
        J = np.where(acc[:, None, None], Jn, J)
        cost = np.where(acc, cn, cost)
        mu = np.clip(np.where(acc, mu / 3.0, mu * 2.0), 1e-14, 1e10)
        if np.all((cost < target) | (mu >= 1e10)):
            break
    return x, cost


def _from_kappa(s, T, margin):
    """Full variables (P, a_i, b_i, s_i) from kappa-stage solutions via rank-one truncation."""
    P, k = _kappa_corners(s, T, margin)
    C = (T - P) / k[..., None, None]
    u, sv, vt = np.linalg.svd(C)
    root = np.sqrt(sv[..., 0])
    a = u[..., :, 0] * root[..., None]
    b = vt[..., 0, :] * root[..., None]
    return _pack(P[:, 0], a, b, s)


def _normalize(T):
    center = T.mean(axis=0)
    scale = float(np.max(np.linalg.norm((T - center).reshape(len(T), -1), axis=1)))
    return center, (scale if scale > 0 else 1.0)


def _cert_from_x(x, N, m, n, center, scale, margin) -> TnCertificate:
    P, a, b, s = _unpack(x[None], N, m, n)
    root = math.sqrt(scale)
    return TnCertificate(center + scale * P[0], [(root * a[0, i], root * b[0, i]) for i in range(N)],
                         _kappas(s[0], margin))


@dataclass
class SearchOptions:
    """Search controls.

    ``method="projected"`` runs the multistart in kappa space (inner points and
    increments eliminated) and polishes promising starts over the full
    variables; ``method="full"`` runs the multistart directly over
    ``(P, a_i, b_i, s_i)``.
    """

    starts: int = 64
    iters: int = 200
    seed: int = 0
    kappa_margin: float = KAPPA_MARGIN
    method: str = "projected"
    polish_top: int = 4
    polish_gate: float = 1e-4
    polish_iters: int = 100
    tol: Tolerance = DEFAULT_TOL


def _prefilter(T, tol) -> Verdict | None:
    if len(T) < 4:
        raise ValueError(f"a T_N search needs N >= 4 matrices, got {len(T)}")
    if len(T) > MAX_N:
        raise ValueError(f"T_N search supports N <= {MAX_N}, got {len(T)}")
    pairs = rank1_pairs(T, tol)
    if pairs:
        return Verdict("Invalid", f"rank-one connected pair {pairs[0]}")
    if span_dim(T[1:] - T[0], tol) < 2:
        return Verdict("Invalid", "degenerate: points lie on an affine line")
    return None


def _search_many(Ts: list, opts: SearchOptions) -> list[Verdict]:
    """Search several orderings (same set, same shape) in one batched run."""
    out: list[Verdict | None] = [None] * len(Ts)
    live = []
    for idx, T in enumerate(Ts):
        pre = _prefilter(T, opts.tol)
        if pre is not None:
            out[idx] = pre
        else:
            live.append(idx)
    if not live:
        return out
    N, m, n = Ts[live[0]].shape
    center, scale = _normalize(Ts[live[0]])
    Tn = np.array([(Ts[i] - center) / scale for i in live])  # (L, N, m, n)
    L, S = len(live), opts.starts
    rng = np.random.default_rng(opts.seed)
    margin = opts.kappa_margin
    if opts.method == "projected":
        idx = _minor_index(m, n)
        s0 = rng.standard_normal((L * S, N))
        Tb = np.repeat(Tn, S, axis=0)
        s, kcost = _lm_kappa(s0, Tb, margin, idx, opts.iters)
        x_all = _from_kappa(s, Tb, margin)
        full = np.sum(_full_residual_jac(x_all, Tb, margin, want_jac=False)[0] ** 2, 1)
        polish_rows = []
        for li in range(L):
            rows = np.arange(li * S, (li + 1) * S)
            order = rows[np.argsort(kcost[rows], kind="stable")]
            polish_rows += [r for r in order[:opts.polish_top] if math.sqrt(kcost[r]) < opts.polish_gate]
        if polish_rows:
            pr = np.array(polish_rows)
            xp, cp = _lm_full(x_all[pr], Tb[pr], margin, opts.polish_iters)
            better = cp < full[pr]
            x_all[pr[better]] = xp[better]
            full[pr[better]] = cp[better]
        details_stage = "kappa-projected"
    elif opts.method == "full":
        V = m * n + N * (m + n) + N
        x0 = rng.standard_normal((L * S, V))
        x0[:, :m * n] *= 0.5
        Tb = np.repeat(Tn, S, axis=0)
        x_all, full = _lm_full(x0, Tb, margin, opts.iters)
        kcost = full
        details_stage = "full-variable"
    else:
        raise ValueError(f"unknown search method {opts.method!r}")
    for li, oi in enumerate(live):
        rows = np.arange(li * S, (li + 1) * S)
        order = rows[np.argsort(full[rows], kind="stable")]
        T = Ts[oi]
        best_res = None
        verdict = None
        for r in order[: max(1, opts.polish_top)]:
            cert = _cert_from_x(x_all[r], N, m, n, center, scale, margin)
            res = cert.residual_norm(T)
            best_res = res if best_res is None else min(best_res, res)
            if res < opts.tol.residual_tol:
                v = verify(T, cert, opts.tol, margin)
                if v.status == "Valid":
                    verdict = Verdict("Found", cert=cert, residual=res, starts=S,
                                      details={"stage": details_stage, "seed": opts.seed})
                    break
        if verdict is None:
            verdict = Verdict("NotFound", "no certificate found", residual=float(best_res), starts=S,
                              details={"stage": details_stage, "seed": opts.seed,
                                       "best_stage_residual": float(math.sqrt(np.min(kcost[rows])))})
        out[oi] = verdict
    return out


def search_ordering(T, opts: SearchOptions | None = None, **kw) -> Verdict:
    """Multistart damped least squares for a T_N certificate of the ordered list ``T``.

    ``NotFound`` means no certificate was found from the given starts; it is
    not a proof of non-existence.
    """
    opts = opts or SearchOptions(**kw)
    return _search_many([_as_stack(T)], opts)[0]


def cyclic_classes(N: int) -> list[tuple[int, ...]]:
    """Representatives of orderings modulo cyclic rotation (first element fixed)."""
    return [(0,) + p for p in itertools.permutations(range(1, N))]


def _canonical_rotation(order) -> tuple:
    i = order.index(0)
    return tuple(order[i:] + order[:i])


@dataclass
class OrderingsReport:
    """Results of :func:`search_all_orderings`.

    Rotation preserves T_N membership, so each cyclic class is searched once.
    Classes are grouped with their reversal into dihedral orbits; each orbit
    records the verdict of both orientations.
    """

    classes: dict
    orbits: list

    def verdict_for(self, order) -> Verdict:
        order = tuple(order)
        rep = _canonical_rotation(list(order))
        v = self.classes[rep]
        if v.cert is None:
            return v
        shift = rep.index(order[0])
        return Verdict(v.status, v.reason, v.cert.rotated(shift), v.residual, v.starts, v.details)

    @property
    def found_orbits(self) -> list:
        return [o for o in self.orbits if any(self.classes[c].status == "Found" for c in o["classes"])]

    @property
    def found_orderings(self) -> list:
        out = []
        for rep, v in self.classes.items():
            if v.status == "Found":
                out += [rep[s:] + rep[:s] for s in range(len(rep))]
        return sorted(out)

    def to_json(self) -> dict:
        return {
            "orbits": [
                {
                    "representative": list(o["classes"][0]),
                    "orientations": [
                        {"ordering": list(c), "verdict": self.classes[c].to_json()} for c in o["classes"]
                    ],
                    "found": any(self.classes[c].status == "Found" for c in o["classes"]),
                }
                for o in self.orbits
            ],
            "found_orbits": len(self.found_orbits),
            "found_orderings": [list(o) for o in self.found_orderings],
        }


def search_all_orderings(T, opts: SearchOptions | None = None, **kw) -> OrderingsReport:
    """Search every ordering of the set ``T`` up to cyclic rotation."""
    opts = opts or SearchOptions(**kw)
    T = _as_stack(T)
    classes = cyclic_classes(len(T))
    verdicts = _search_many([T[list(c)] for c in classes], opts)
    cls = dict(zip(classes, verdicts))
    seen, orbits = set(), []
    for c in classes:
        if c in seen:
            continue
        rev = _canonical_rotation(list(reversed(c)))
        members = [c] if rev == c else [c, rev]
        seen.update(members)
        orbits.append({"classes": members})
    return OrderingsReport(cls, orbits)


# ---------------------------------------------------- determinant-sign filter

@dataclass
class DetSignReport:
    table: np.ndarray
    row_status: list
    passes: bool

    @property
    def failing_rows(self) -> list[int]:
        return [i for i, s in enumerate(self.row_status) if s in ("positive", "negative")]

    def to_json(self) -> dict:
        return {"table": self.table.tolist(), "row_status": self.row_status, "passes": self.passes,
                "failing_rows": self.failing_rows}


def sign_rows(D, margin: float) -> list[str]:
    """Row classification of an antisymmetric-free sign table (diagonal ignored)."""
    D = np.asarray(D, dtype=float)
    out = []
    for i in range(len(D)):
        row = np.delete(D[i], i)
        if np.all(row > margin):
            out.append("positive")
        elif np.all(row < -margin):
            out.append("negative")
        elif np.any(row > margin) and np.any(row < -margin):
            out.append("changes")
        else:
            out.append("indeterminate")
    return out


def det_sign_filter(T, margin: float = 0.0) -> DetSignReport:
    """Necessary condition for a 2x2 T_N: every row of ``det(T_i - T_j)`` changes sign.

    ``passes`` is False when some row has a constant strict sign.
    """
    T = _as_stack(T)
    if T.shape[1:] != (2, 2):
        raise ValueError("det_sign_filter needs 2x2 matrices")
    if len(T) < 4:
        raise ValueError("det_sign_filter needs N >= 4")
    flat = T.reshape(len(T), -1)
    if len(np.unique(flat, axis=0)) < len(T):
        raise ValueError("degenerate input: repeated matrices")
    D = np.linalg.det(T[:, None] - T[None, :])
    np.fill_diagonal(D, 0.0)
    status = sign_rows(D, margin)
    return DetSignReport(D, status, not any(s in ("positive", "negative") for s in status))


# ---------------------------------------------------------- lamination hull

@dataclass
class HullApprox:
    """Inner approximation of the rank-one convex hull by repeated lamination."""

    points: np.ndarray  # (K, m, n)
    generation: np.ndarray  # (K,)
    eps: float
    generations_run: int
    converged: bool
    partial: bool = False
    seeded: int = 0

    def contains(self, X, atol: float) -> bool:
        X = np.asarray(X, dtype=float).ravel()
        d = np.linalg.norm(self.points.reshape(len(self.points), -1) - X, axis=1)
        return bool(np.min(d) <= atol)

    def distance(self, X) -> float:
        X = np.asarray(X, dtype=float).ravel()
        return float(np.min(np.linalg.norm(self.points.reshape(len(self.points), -1) - X, axis=1)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf)
        m, n = self.points.shape[1:]
        wr.writerow(["generation"] + [f"m{i + 1}{j + 1}" for i in range(m) for j in range(n)])
        for g, P in zip(self.generation, self.points):
            wr.writerow([int(g)] + [repr(float(x)) for x in P.ravel()])
        return buf.getvalue()


def _pair_rank1(X, Y, rank_tol):
    """Boolean matrix ``rank(X_i - Y_j) == 1`` for flattened batches of matrices."""
    D = X[:, None] - Y[None, :]
    if D.shape[-1] == 2:
        fro2 = np.sum(D * D, axis=(-2, -1))
        mins = _all_minors(D, _minor_index(D.shape[-2], 2))
        q = np.sum(mins * mins, -1)
        disc = np.sqrt(np.maximum(fro2 * fro2 - 4.0 * q, 0.0))
        s1sq = 0.5 * (fro2 + disc)
        with np.errstate(divide="ignore", invalid="ignore"):
            s2sq = np.where(s1sq > 0, q / s1sq, 0.0)
        return (s1sq > 0) & (s2sq <= (rank_tol**2) * s1sq)
    sv = np.linalg.svd(D, compute_uv=False)
    return (sv[..., 0] > 0) & (sv[..., 1] <= rank_tol * sv[..., 0])


def _cell_keys(P, eps):
    return np.floor(P / eps).astype(np.int64)


def lamination_hull(T, eps: float, max_gen: int = 20, tol: Tolerance = DEFAULT_TOL,
                    seed_tn: bool = True, max_points: int = 200_000, sample_frac: float = 0.25,
                    search: SearchOptions | None = None) -> HullApprox:
    """Grow ``T`` by sampling rank-one segments between current points.

    Each segment is sampled at spacing ``sample_frac * eps``; a sample is kept
    when it lands in an ambient cell of side ``eps`` not yet occupied, so
    kept points lie exactly on rank-one segments.  For inputs of 4 to 6
    matrices the inner points of every T_4 certificate found among 4-element
    subsets are added first (they belong to the rank-one convex hull).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    T = _as_stack(T)
    shape = T.shape[1:]
    flat = np.unique(T.reshape(len(T), -1), axis=0)
    pts = [flat]
    gens = [np.zeros(len(flat), dtype=int)]
    seeded = 0
    if seed_tn and 4 <= len(flat) <= 6:
        opts = search or SearchOptions()
        extra = []
        for sub in itertools.combinations(range(len(flat)), 4):
            Ts = flat[list(sub)].reshape((4,) + shape)
            try:
                rep = search_all_orderings(Ts, opts)
            except ValueError:
                continue
            for v in rep.classes.values():
                if v.status == "Found":
                    extra.append(v.cert.corners().reshape(4, -1))
        if extra:
            ex = np.unique(np.concatenate(extra), axis=0)
            pts.append(ex)
            gens.append(np.zeros(len(ex), dtype=int))
            seeded = len(ex)
    P = np.concatenate(pts)
    G = np.concatenate(gens)
    occupied = {k.tobytes() for k in _cell_keys(P, eps)}
    new_lo = 0
    converged, partial = False, False
    gen = 0
    for gen in range(1, max_gen + 1):
        newX = P[new_lo:]
        cand = []
        chunk = max(1, 2_000_000 // max(1, len(P)))
        for c0 in range(0, len(newX), chunk):
            Xc = newX[c0:c0 + chunk]
            M = _pair_rank1(Xc.reshape((-1,) + shape), P.reshape((-1,) + shape), tol.rank_tol)
            ii, jj = np.nonzero(M)
            gi = new_lo + c0 + ii
            keep = jj < gi  # each unordered pair once; old-old pairs were done earlier
            ii, jj = ii[keep], jj[keep]
            if len(ii) == 0:
                continue
            A, B = Xc[ii], P[jj]
            L = np.linalg.norm(B - A, axis=1)
            ns = np.maximum(2, np.ceil(L / (sample_frac * eps)).astype(int))
            seg = np.repeat(np.arange(len(ii)), ns - 1)
            tpar = (np.arange(seg.size) - np.repeat(np.cumsum(ns - 1) - (ns - 1), ns - 1) + 1) / np.repeat(ns, ns - 1)
            samples = A[seg] + tpar[:, None] * (B[seg] - A[seg])
            cand.append(samples)
        if not cand:
            converged = True
            break
        S = np.concatenate(cand)
        keys = _cell_keys(S, eps)
        _, first = np.unique(keys, axis=0, return_index=True)
        first.sort()
        add = [i for i in first if keys[i].tobytes() not in occupied]
        if not add:
            converged = True
            break
        add = np.array(add)
        if len(P) + len(add) > max_points:
            add = add[: max(0, max_points - len(P))]
            partial = True
        for i in add:
            occupied.add(keys[i].tobytes())
        new_lo = len(P)
        P = np.concatenate([P, S[add]])
        G = np.concatenate([G, np.full(len(add), gen)])
        if partial:
            break
    return HullApprox(P.reshape((-1,) + shape), G, eps, gen, converged, partial, seeded)

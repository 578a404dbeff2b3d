"""Normal-form reduction of K1 quadruples and rank-one directions in subspaces."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .constitutive import ConstitutiveFn, Quadruple, p_map, q_map, translate
from .matspace import DEFAULT_TOL, Tolerance, minors, normalize_direction, numeric_rank, singular_values


@dataclass
class USet:
    """Reduced differences ``Q_{v_k}(h_i, r_i)`` relative to base point ``k``."""

    k: int
    base: tuple
    h: np.ndarray
    r: np.ndarray
    z: np.ndarray
    F: np.ndarray
    entries: np.ndarray  # (4, 3, 2)

    @property
    def others(self) -> list[int]:
        return [i for i in range(4) if i != self.k]

    def nonbase(self):
        """``(h, r, z, y, w)`` vectors over the three non-base indices."""
        idx = self.others
        h, r, z = self.h[idx], self.r[idx], self.z[idx]
        return h, r, z, h * z, 0.5 * h**2 + self.F[idx]


def reduction_matrix(f: ConstitutiveFn, u_k: float, v_k: float) -> np.ndarray:
    """Row operation ``B`` with ``B (P(u, v) - P(u_k, v_k)) = Q_{v_k}(u - u_k, v - v_k)``."""
    return np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-float(f.eval(v_k)), -float(u_k), 1.0]])


def reduce(f: ConstitutiveFn, K: Quadruple, k: int = 0) -> USet:
    if k not in range(4):
        raise ValueError(f"base index must be in 0..3, got {k}")
    K.validate(f)
    u, v = K.u, K.v
    h = u - u[k]
    r = v - v[k]
    tr = translate(f, v[k])
    z = np.asarray(tr.a(r), dtype=float)
    Fr = np.asarray(tr.F(r), dtype=float)
    h[k] = r[k] = z[k] = Fr[k] = 0.0
    entries = q_map(f, v[k], h, r)
    entries[k] = 0.0
    return USet(k, (float(u[k]), float(v[k])), h, r, z, Fr, entries)


def differences(f: ConstitutiveFn, K: Quadruple, k: int = 0) -> np.ndarray:
    """``V_i = P(u_i, v_i) - P(u_k, v_k)`` for all i."""
    P = p_map(f, K.u, K.v)
    return P - P[k]


def s_matrix(U: USet, tol: Tolerance = DEFAULT_TOL) -> tuple[np.ndarray, int]:
    """The 3x5 matrix with rows ``(h_i, r_i, a(r_i), h_i a(r_i), h_i^2/2 + F(r_i))`` and its rank."""
    h, r, z, y, w = U.nonbase()
    S = np.column_stack([h, r, z, y, w])
    return S, numeric_rank(S, tol)


@dataclass
class AMatrices:
    left: np.ndarray
    right: np.ndarray
    full: np.ndarray
    rank_left: int
    rank_right: int
    rank_full: int


def a_matrices(U: USet, tol: Tolerance = DEFAULT_TOL) -> AMatrices:
    """``A_l`` (rows h, z, y), ``A_r`` (rows r, h, w) and ``A_0 = [A_l | A_r]``."""
    h, r, z, y, w = U.nonbase()
    Al = np.vstack([h, z, y])
    Ar = np.vstack([r, h, w])
    A0 = np.hstack([Al, Ar])
    return AMatrices(Al, Ar, A0, numeric_rank(Al, tol), numeric_rank(Ar, tol), numeric_rank(A0, tol))


def debug_csv(U: USet, tol: Tolerance = DEFAULT_TOL) -> str:
    """CSV dump of the S and A matrices for one reduced set."""
    S, _ = s_matrix(U, tol)
    A = a_matrices(U, tol)
    buf = io.StringIO()
    wr = csv.writer(buf)
    for label, M in (("S", S), ("A_left", A.left), ("A_right", A.right)):
        for i, row in enumerate(M):
            wr.writerow([label, i, *(repr(float(x)) for x in row)])
    return buf.getvalue()


# ------------------------------------------------------------ subspaces

@dataclass
class SubspaceRep:
    """A subspace of 3x2 matrices.

    ``basis`` holds linearly independent matrices.  When ``left``/``right`` are
    given, the subspace is ``{(left x | right x)}``; ``amat`` is set when the
    subspace equals ``{(z | amat z)}``.
    """

    basis: list
    left: np.ndarray | None = None
    right: np.ndarray | None = None
    amat: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return len(self.basis)

    @classmethod
    def from_amat(cls, A) -> "SubspaceRep":
        A = np.asarray(A, dtype=float)
        basis = [np.column_stack([e, A @ e]) for e in np.eye(3)]
        return cls(basis, np.eye(3), A.copy(), A.copy())

    @classmethod
    def from_columns(cls, left, right, tol: Tolerance = DEFAULT_TOL) -> "SubspaceRep":
        left = np.asarray(left, dtype=float)
        right = np.asarray(right, dtype=float)
        mats = [np.column_stack([left[:, j], right[:, j]]) for j in range(left.shape[1])]
        rep = cls.from_matrices(mats, tol)
        if rep.dim == left.shape[1]:
            rep.left, rep.right = left, right
            if numeric_rank(left, tol) == left.shape[1] == 3:
                rep.amat = right @ np.linalg.inv(left)
        return rep

    @classmethod
    def from_matrices(cls, mats, tol: Tolerance = DEFAULT_TOL) -> "SubspaceRep":
        """Orthonormal basis (Frobenius) of the span of ``mats``."""
        flat = np.array([np.asarray(m, dtype=float).ravel() for m in mats])
        if flat.size == 0 or not np.any(flat):
            return cls([])
        _, s, vt = np.linalg.svd(flat, full_matrices=False)
        d = int(np.sum(s > tol.rank_tol * s[0]))
        return cls([vt[j].reshape(3, 2) for j in range(d)])


@dataclass
class Rank1Directions:
    """Rank-one directions inside a subspace.

    ``kind`` is ``"Empty"``, ``"Lines"``, ``"PlanePlusLine"`` or ``"Whole"``.
    For ``PlanePlusLine`` the extra ``line`` may be absent (plane only).
    """

    kind: str
    lines: list = field(default_factory=list)
    plane: list = field(default_factory=list)
    line: np.ndarray | None = None
    method: str = ""
    margin: float = float("nan")

    def count_lines(self) -> int:
        return len(self.lines)

    def excludes_t4(self, dim: int) -> bool:
        """Counting criterion: in dim 2 at most one line; in dim 3 at most three lines or plane plus line."""
        if self.kind == "Whole":
            return False
        if dim == 2:
            return self.kind == "Empty" or (self.kind == "Lines" and len(self.lines) <= 1)
        if dim == 3:
            return self.kind in ("Empty", "Lines", "PlanePlusLine") and len(self.lines) <= 3
        return dim <= 1

    def to_json(self) -> dict:
        out = {"kind": self.kind, "method": self.method, "margin": self.margin,
               "lines": [m.tolist() for m in self.lines]}
        if self.kind == "PlanePlusLine":
            out["plane"] = [m.tolist() for m in self.plane]
            out["line"] = None if self.line is None else self.line.tolist()
        return out


class ClassificationError(RuntimeError):
    """Rank-one directions could not be classified at the requested tolerance."""


def _rel_minors(M) -> float:
    M = np.asarray(M, dtype=float)
    n2 = float(np.sum(M * M))
    if n2 == 0.0:
        return np.inf
    return float(np.linalg.norm(minors(M)) / n2)


def _dedupe_lines(mats, atol=1e-7) -> list:
    out = []
    for m in mats:
        m = normalize_direction(m)
        if not any(min(np.linalg.norm(m - o), np.linalg.norm(m + o)) < atol for o in out):
            out.append(m)
    return out


def _dim1(M, tol) -> Rank1Directions:
    if numeric_rank(M, tol) == 1:
        return Rank1Directions("Lines", [normalize_direction(M)], method="dim1")
    return Rank1Directions("Empty", method="dim1")


def _binary_quadratic_roots(q, eps) -> list:
    """Projective roots ``(s, t)`` of ``q0 s^2 + q1 s t + q2 t^2``."""
    q0, q1, q2 = q
    roots = []
    scale = max(abs(q0), abs(q1), abs(q2))
    if scale == 0.0:
        return roots
    q0, q1, q2 = q0 / scale, q1 / scale, q2 / scale
    disc = q1 * q1 - 4 * q0 * q2
    if disc < -eps:
        return roots
    disc = max(disc, 0.0)
    sq = np.sqrt(disc)
    if abs(q0) >= abs(q2):
        # roots in s/t; t = 0 is a root only if q0 = 0, excluded here unless tiny
        if abs(q0) <= eps:
            roots.append((1.0, 0.0))
            if abs(q1) > eps:
                roots.append((-q2 / q1, 1.0))
            return roots
        w = -0.5 * (q1 + np.copysign(sq, q1 if q1 != 0 else 1.0))
        x1 = w / q0
        x2 = q2 / w if w != 0 else x1
        roots += [(x1, 1.0), (x2, 1.0)]
    else:
        w = -0.5 * (q1 + np.copysign(sq, q1 if q1 != 0 else 1.0))
        y1 = w / q2
        y2 = q0 / w if w != 0 else y1
        roots += [(1.0, y1), (1.0, y2)]
    return roots


def quadratic_forms(M1, M2) -> np.ndarray:
    """Coefficients ``(c_ss, c_st, c_tt)`` of the three minors of ``s M1 + t M2``."""
    m1, m2 = minors(M1), minors(M2)
    mix = minors(M1 + M2) - m1 - m2
    return np.column_stack([m1, mix, m2])


def _dim2(B, tol, eps=1e-9) -> Rank1Directions:
    M1, M2 = (np.asarray(b, dtype=float) for b in B)
    n1, n2 = np.linalg.norm(M1), np.linalg.norm(M2)
    M1, M2 = M1 / n1, M2 / n2
    Q = quadratic_forms(M1, M2)
    if np.max(np.abs(Q)) <= eps:
        return Rank1Directions("Whole", [], [M1, M2], method="dim2-forms", margin=float(np.max(np.abs(Q))))
    cands = []
    for q in Q:
        if np.max(np.abs(q)) > eps:
            cands.extend(_binary_quadratic_roots(q, eps))
    found = []
    for s, t in cands:
        x = np.array([s, t]) / np.hypot(s, t)
        # polish on the full minor system
        def res(th):
            c, sn = np.cos(th[0]), np.sin(th[0])
            return minors(c * M1 + sn * M2)
        th0 = np.arctan2(x[1], x[0])
        sol = least_squares(res, [th0], xtol=1e-15, ftol=1e-15, gtol=1e-15)
        th = sol.x[0]
        M = np.cos(th) * M1 + np.sin(th) * M2
        if _rel_minors(M) < max(tol.residual_tol, 1e-10) and numeric_rank(M, tol) == 1:
            found.append(M)
    lines = _dedupe_lines(found)
    if not lines:
        return Rank1Directions("Empty", method="dim2-forms")
    return Rank1Directions("Lines", lines, method="dim2-forms")


def _eigen_classify(Amat, to_matrix, tol, cluster_tol=1e-6, method="eigen") -> Rank1Directions:
    """Rank-one directions of ``{to_matrix(z)}`` where rank one iff ``z`` is a real eigenvector of ``Amat``."""
    A = np.asarray(Amat, dtype=float)
    scale = max(1.0, float(np.linalg.norm(A, 2)))
    evals = np.linalg.eigvals(A)
    real = [complex(e).real for e in evals if abs(complex(e).imag) <= cluster_tol * scale]
    clusters: list[list[float]] = []
    for lam in sorted(real):
        if clusters and abs(lam - np.mean(clusters[-1])) <= cluster_tol * scale:
            clusters[-1].append(lam)
        else:
            clusters.append([lam])
    lines, plane = [], []
    kind_whole = False
    gaps = []
    for cl in clusters:
        lam = float(np.mean(cl))
        Mshift = A - lam * np.eye(3)
        u, s, vt = np.linalg.svd(Mshift)
        if len(cl) == 1:
            geo = 1
        else:
            rel = s / scale
            geo = int(np.sum(rel <= max(10 * cluster_tol, 1e-8)))
            geo = max(1, min(geo, len(cl)))
        vecs = vt[3 - geo:]
        if len(cl) == 1:
            gaps.append(float(s[1] / scale))
        if geo == 1:
            lines.append(to_matrix(vecs[0], lam))
        elif geo == 2:
            plane = [to_matrix(vecs[0], lam), to_matrix(vecs[1], lam)]
        else:
            kind_whole = True
    margin = min(gaps) if gaps else float("nan")
    if kind_whole:
        return Rank1Directions("Whole", method=method, margin=margin)
    lines = _dedupe_lines(lines)
    for m in lines + plane:
        if numeric_rank(m, Tolerance(max(tol.rank_tol, 1e-8), tol.residual_tol)) != 1:
            raise ClassificationError("eigenvector does not yield a rank-one matrix")
    if plane:
        P = [normalize_direction(p) for p in plane]
        return Rank1Directions("PlanePlusLine", list(lines), P, lines[0] if lines else None, method, margin)
    if not lines:
        return Rank1Directions("Empty", method=method, margin=margin)
    return Rank1Directions("Lines", lines, method=method, margin=margin)


def _pencil_shift(L, R, tol):
    """Choose ``c`` making ``L + c R`` best conditioned; ``None`` for a singular pencil."""
    best = None
    for c in (0.0, 1.0, -1.0, 2.0, -2.0, 0.5, -0.5, 3.0, -3.0, 0.25, -0.25, 5.0, -5.0, 0.1, -0.1):
        Mc = L + c * R
        s = singular_values(Mc)
        if s[0] == 0.0:
            continue
        cond = s[-1] / s[0]
        if best is None or cond > best[1]:
            best = (c, cond)
    if best is None or best[1] <= 1e-8:
        return None
    return best


def _dim3_pencil(L, R, tol) -> Rank1Directions:
    # Right-multiplying by [[1, 0], [c, 1]] preserves rank: (Lx | Rx) -> (Lx + c Rx | Rx).
    shift = _pencil_shift(L, R, tol)
    if shift is None:
        raise ClassificationError("singular pencil")
    c, cond = shift
    Lc = L + c * R
    A = R @ np.linalg.inv(Lc)

    def to_matrix(zvec, lam):
        zz = np.asarray(zvec, dtype=float)
        return np.column_stack([zz - c * lam * zz, lam * zz])

    out = _eigen_classify(A, to_matrix, tol, method="eigen" if c == 0.0 else f"eigen-shift({c:g})")
    out.margin = min(out.margin, cond) if np.isfinite(out.margin) else cond
    return out


def chart_grid(step: float, lim: float = 1.0):
    """Unit directions from three affine charts ``(1, s, t)``, ``(s, 1, t)``, ``(s, t, 1)``."""
    g = np.arange(-lim, lim + step / 2, step)
    S, T = np.meshgrid(g, g, indexing="ij")
    ones = np.ones_like(S)
    charts = [np.stack([ones, S, T], -1), np.stack([S, ones, T], -1), np.stack([S, T, ones], -1)]
    return g, charts


def _grid_fallback(basis, tol, step=1e-2) -> Rank1Directions:
    """Projective scan of the minor system plus local refinement."""
    B = np.array([np.asarray(b, dtype=float) for b in basis])
    if np.max(np.abs(minors(np.einsum("i,ijk->jk", np.random.default_rng(0).standard_normal(3), B)))) < 1e-12:
        return Rank1Directions("Whole", method="grid")
    _, charts = chart_grid(step)
    found = []
    for X in charts:
        M = np.einsum("abi,ijk->abjk", X, B)
        val = np.linalg.norm(minors(M), axis=-1) / np.sum(M * M, axis=(-2, -1))
        interior = val[1:-1, 1:-1]
        neigh = np.stack([val[:-2, 1:-1], val[2:, 1:-1], val[1:-1, :-2], val[1:-1, 2:],
                          val[:-2, :-2], val[2:, 2:], val[:-2, 2:], val[2:, :-2]])
        mask = np.all(interior <= neigh, axis=0) & (interior < 0.05)
        for a, b in zip(*np.nonzero(mask)):
            x0 = X[a + 1, b + 1]

            def res(x):
                Mx = np.einsum("i,ijk->jk", x, B)
                return np.concatenate([minors(Mx), [np.dot(x, x) - 1.0]])

            sol = least_squares(res, x0 / np.linalg.norm(x0), xtol=1e-15, ftol=1e-15, gtol=1e-15)
            Mx = np.einsum("i,ijk->jk", sol.x, B)
            if _rel_minors(Mx) < 1e-10:
                found.append(Mx)
    lines = _dedupe_lines(found, atol=1e-6)
    if len(lines) > 3:
        sub = SubspaceRep.from_matrices(lines, Tolerance(1e-6, tol.residual_tol))
        if sub.dim == 2:
            return Rank1Directions("PlanePlusLine", [], sub.basis, None, "grid")
        raise ClassificationError(f"grid fallback found {len(lines)} directions; continuum suspected")
    if not lines:
        return Rank1Directions("Empty", method="grid")
    return Rank1Directions("Lines", lines, method="grid")


def rank1_directions(S: SubspaceRep, tol: Tolerance = DEFAULT_TOL) -> Rank1Directions:
    """Classify the rank-one matrices inside a subspace of dimension 1 to 3.

    Raises
    ------
    ClassificationError
        When no branch classifies the subspace reliably.
    """
    d = S.dim
    if d == 0 or d > 3:
        raise ValueError(f"subspace dimension must be 1..3, got {d}")
    if d == 1:
        return _dim1(S.basis[0], tol)
    if d == 2:
        return _dim2(S.basis, tol)
    if S.amat is not None:
        A = S.amat
        return _eigen_classify(A, lambda zz, lam: np.column_stack([zz, lam * zz]), tol)
    if S.left is not None and S.right is not None:
        L, R = S.left, S.right
    else:
        L = np.column_stack([b[:, 0] for b in S.basis])
        R = np.column_stack([b[:, 1] for b in S.basis])
    try:
        return _dim3_pencil(L, R, tol)
    except ClassificationError:
        return _grid_fallback(S.basis, tol)


def span_of_uset(U: USet, tol: Tolerance = DEFAULT_TOL) -> SubspaceRep:
    """Span of the reduced set, keeping the ``(A_l x | A_r x)`` parametrization when it is a basis."""
    A = a_matrices(U, tol)
    rep = SubspaceRep.from_columns(A.left, A.right, tol)
    return rep

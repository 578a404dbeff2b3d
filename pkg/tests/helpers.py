"""Shared fixtures data and generators for the test suite."""
import numpy as np

from rank1lab.constitutive import Quadruple, builtin
from rank1lab.roots import bisect
from rank1lab.tn import TnCertificate

TARTAR = np.array([np.diag([-1.0, -3.0]), np.diag([-3.0, 1.0]), np.diag([1.0, 3.0]), np.diag([3.0, -1.0])])
TARTAR_ORDER = (0, 3, 2, 1)
TARTAR_CORNERS = [np.diag([-1.0, 1.0]), np.diag([-1.0, -1.0]), np.diag([1.0, -1.0]), np.diag([1.0, 1.0])]


def tartar_certificate() -> TnCertificate:
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    factors = [(-2 * e2, e2), (2 * e1, e1), (2 * e2, e2), (-2 * e1, e1)]
    return TnCertificate(np.diag([-1.0, 1.0]), factors, [2.0, 2.0, 2.0, 2.0])


def random_tn(rng, N=4, rows=2):
    """Random T_N with its certificate; 3x2 cases embed a 2x2 one by a random injective map."""
    C = [np.outer(rng.normal(size=2), rng.normal(size=2)) for _ in range(N - 2)]
    R = -sum(C)
    X = np.outer(rng.normal(size=2), rng.normal(size=2))
    d0, d1 = np.linalg.det(R), np.linalg.det(R - X)
    t = d0 / (d0 - d1)  # det(R - tX) is affine in t
    C += [t * X, R - t * X]
    factors = []
    for c in C:
        u, s, vt = np.linalg.svd(c)
        factors.append((u[:, 0] * s[0], vt[0]))
    cert = TnCertificate(rng.normal(size=(2, 2)), factors, 1.2 + 3.0 * rng.random(N))
    if rows == 3:
        cert = cert.transformed(rng.normal(size=(3, 2)))
    return cert.predicted(), cert


def l17_family(lam2, u0=0.3, v0=0.0, name="exp"):
    """Quadruple (u0,v0), (u0+2l, v0), (u0+l, v0+r2), (u0+l, v0+r3) with F_{v0}(r) = l^2/2 at r2 < 0 < r3."""
    f = builtin(name)
    from rank1lab.constitutive import translate
    tr = translate(f, v0)
    g = lambda r: float(tr.F(r)) - 0.5 * lam2**2
    r2, r3 = bisect(g, -30.0, 0.0), bisect(g, 0.0, 30.0)
    K = np.array([[u0, v0], [u0 + 2 * lam2, v0], [u0 + lam2, v0 + r2], [u0 + lam2, v0 + r3]])
    return f, Quadruple.from_array(K)


def reduced_2x2(f, K: Quadruple) -> np.ndarray:
    """Matrices [[u, v], [a(v), u]] whose pairwise determinants are the D table entries."""
    return np.array([[[u, v], [float(f.eval(v)), u]] for u, v in K.as_array()])


def _exp_rows(h, r):
    a, F = np.expm1(r), np.expm1(r) - r
    return np.array([h, r, a, h * a, 0.5 * h * h + F])


def lc3_quadruples(rng, n):
    """Quadruples under exp whose reduced span has dimension 2 (third row a combination of the others)."""
    from scipy.optimize import least_squares
    out = []
    while len(out) < n:
        def res(x):
            h1, r1, h2, r2, h3, r3, al, be = x
            return _exp_rows(h3, r3) - al * _exp_rows(h1, r1) - be * _exp_rows(h2, r2)
        s = least_squares(res, rng.uniform(-1, 1, 8), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        h1, r1, h2, r2, h3, r3 = s.x[:6]
        rs = [r1, r2, r3]
        spread = min([abs(x) for x in rs] + [abs(x - y) for i, x in enumerate(rs) for y in rs[i + 1:]])
        if np.max(np.abs(s.fun)) < 1e-13 and spread > 0.05 and np.max(np.abs(s.x[:6])) < 1.5:
            out.append(np.array([[0.0, 0.0], [h1, r1], [h2, r2], [h3, r3]]))
    return out


def l15_quadruples(rng, n):
    """Quadruples under exp with both reduced side blocks singular."""
    from scipy.optimize import least_squares
    out = []
    while len(out) < n:
        def res(x):
            h, r = x[0::2], x[1::2]
            a, F = np.expm1(r), np.expm1(r) - r
            return [np.linalg.det(np.vstack([h, a, h * a])), np.linalg.det(np.vstack([r, h, 0.5 * h * h + F]))]
        s = least_squares(res, rng.uniform(-1, 1, 6), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        K = np.vstack([[0.0, 0.0], s.x.reshape(3, 2)])
        d = min(np.linalg.norm(K[i] - K[j]) for i in range(4) for j in range(i + 1, 4))
        if np.max(np.abs(s.fun)) < 1e-14 and np.max(np.abs(s.x)) < 1.5 and d > 0.05:
            out.append(K)
    return out


def lambda_quadruple(lam1, lam2, v0=0.0, u0=0.1, name="exp"):
    """Base point plus three nontrivial solutions of one lambda system (rank of A_0 equal to 2)."""
    from rank1lab.k1analysis import lambda_solve
    f = builtin(name)
    sysm = lambda_solve(f, v0, lam1, lam2)
    sols = sysm.solutions
    if len(sols) != 4:
        raise ValueError(f"expected 3 nontrivial solutions, got {len(sols) - 1}")
    return f, Quadruple.from_array([[u0 + s.h, v0 + s.r] for s in sols])

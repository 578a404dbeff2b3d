import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import l15_quadruples, l17_family, lambda_quadruple, lc3_quadruples, reduced_2x2
from oracles import lambda_roots_by_branches
from rank1lab.constitutive import ConstitutiveFn, Quadruple, builtin, p_map, translate
from rank1lab.k1analysis import (CertOptions, LambdaSolution, LambdaSystem, certify_no_t4, d_matrix, find_rank1,
                                 g_eval, l18_scan, lambda_residuals, lambda_solve, make_connection,
                                 structure_checks)
from rank1lab.matspace import sigma_ratio
from rank1lab.tn import det_sign_filter, search_all_orderings

EXP = builtin("exp")
CUBIC = builtin("cubic_plus_linear")


# ---------------------------------------------------------------- g_v(r)

def test_g_values():
    assert g_eval(EXP, 0.3, 0.0) == 0.0
    assert g_eval(EXP, 0.0, 1.0) == pytest.approx(math.e - 3, abs=1e-12)


@given(v=st.floats(-2, 2), r=st.floats(-2, 2).filter(lambda x: abs(x) > 1e-3))
def test_g_sign_convex(v, r):
    assert g_eval(EXP, v, r) * r < 0


@given(v=st.floats(-2, 2), r=st.floats(-2, 2).filter(lambda x: abs(x) > 1e-3))
def test_g_sign_concave(v, r):
    assert g_eval(builtin("concave_exp"), v, r) * r > 0


def test_l18_scan_reports():
    assert l18_scan(EXP, (-1, 1))["violations"] == 0
    assert l18_scan(builtin("log"), (0.5, 3))["expected"] == "positive"
    rep = l18_scan(CUBIC, (-2, 2))
    assert rep["convexity"] == 0 and rep["violations"] > 0 and rep["violating_v"]


# ----------------------------------------------------- rank-one connections

def test_no_connection_for_convex_flux():
    res = find_rank1(EXP, (-1, 1))
    assert res.connections == [] and res.certified_empty
    assert find_rank1(builtin("concave_exp"), (-1, 1)).certified_empty


def test_cubic_connections_follow_odd_symmetry():
    res = find_rank1(CUBIC, (-2, 2))
    assert res.connections and not res.certified_empty
    for c in res.connections:
        assert abs(c.v + c.r / 2) < 1e-6
        assert c.g_residual < 1e-10 and c.sigma_ratio < 1e-8
        assert abs(c.h**2 - c.r * translate(CUBIC, c.v).a(c.r)) < 1e-9


def test_known_cubic_connection():
    c = make_connection(CUBIC, -1.0, 2.0)
    assert c.h == pytest.approx(2 * math.sqrt(2))
    assert c.g_residual == 0.0 and c.sigma_ratio < 1e-12
    (u0, v0), (u1, v1) = c.witness
    assert sigma_ratio(p_map(CUBIC, u1, v1) - p_map(CUBIC, u0, v0)) < 1e-12


def test_connections_for_tanh_blend():
    f = builtin("tanh_blend", {"beta": 0.5})
    res = find_rank1(f, (-3, 3))
    assert res.connections
    assert all(c.sigma_ratio < 1e-8 for c in res.connections)


def test_flat_flux_is_not_certified():
    res = find_rank1(builtin("poly", {"coeffs": [0.0, 1.0]}), (-1, 1))
    assert res.connections == [] and not res.certified_empty


def test_find_rank1_errors():
    with pytest.raises(ValueError):
        find_rank1(EXP, (1, -1))
    with pytest.raises(ValueError):
        find_rank1(ConstitutiveFn("square", np.square, lambda v: 2 * v, lambda v: 2 + 0 * v, lambda v: v**3 / 3),
                   (-1, 1))


# ------------------------------------------------------------ lambda system

def test_lambda_trivial_root_and_errors():
    s = lambda_solve(EXP, 0.0, 2.0, 1.0)
    assert s.solutions[0].trivial or any(x.trivial for x in s.solutions)
    with pytest.raises(ValueError):
        lambda_solve(EXP, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        lambda_solve(EXP, 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        lambda_solve(EXP, 0.0, 1.0, 1.0, interval=(0.5, 2.0))


def test_lambda_roots_match_branch_oracle():
    s = lambda_solve(EXP, 0.0, 2.0, 1.0, interval=(-10, 10))
    ref = lambda_roots_by_branches(np.expm1, lambda r: np.expm1(r) - r, 2.0, 1.0, -10, 10)
    got = [(x.h, x.r) for x in s.nontrivial()]
    assert len(got) == len(ref) == 3
    for (h, r), (hr, rr) in zip(got, ref):
        assert abs(r - rr) < 1e-4 and abs(h - hr) < 1e-3
    assert s.count_below() <= 2
    assert all(max(x.residual26, x.residual27) < 1e-12 for x in s.solutions)


def test_lambda_poles_recorded():
    s = lambda_solve(EXP, 0.0, 2.0, 1.0)
    assert len(s.poles) == 1 and s.poles[0] == pytest.approx(math.log(3.0))
    assert lambda_solve(EXP, 0.0, -1.0, 1.0).poles == []


def test_residual_scaling():
    e1, e2 = lambda_residuals(EXP, 0.0, 2.0, 1.0, 0.0, 0.0)
    assert e1 == 0.0 and e2 == 0.0


# -------------------------------------------------------- structure checks

def test_structure_checks_on_generated_systems():
    rng = np.random.default_rng(6)
    systems = [lambda_solve(EXP, 0.0, float(l1), float(l2), n=4001)
               for l1, l2 in rng.uniform(-3, 3, (100, 2))]
    rep = structure_checks(EXP, systems)
    assert rep.ok
    assert rep.checked["l20"] > 0 and rep.checked["l21"] > 0 and rep.checked["l22"] > 0


def test_negative_lambda_gives_negative_d():
    s = lambda_solve(EXP, 0.0, -1.0, 2.0)
    nt = s.nontrivial()
    assert nt and all(x.D < 0 for x in nt if x.a > -1.0)


def test_structure_checks_flag_violations():
    fake = LambdaSystem(0.0, 1.0, 1.0, [LambdaSolution(0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
                                        LambdaSolution(1.0, -1.0, 0.5, -0.3, 0.0, 0.0),
                                        LambdaSolution(1.0, 1.0, 2.0, 1.0, 0.0, 0.0),
                                        LambdaSolution(1.0, 2.0, 3.0, 2.0, 0.0, 0.0),
                                        LambdaSolution(1.0, -2.0, 0.2, 1.0, 0.0, 0.0),
                                        LambdaSolution(1.0, -3.0, 0.1, 1.0, 0.0, 0.0)])
    rep = structure_checks(EXP, [fake])
    assert {v["check"] for v in rep.violations} == {"l20", "l21", "l22"}


# ----------------------------------------------------------------- D table

def test_d_matrix_symmetry_and_errors():
    rng = np.random.default_rng(2)
    for _ in range(200):
        Dm = d_matrix(EXP, Quadruple.from_array(rng.uniform(-1, 1, (4, 2))))
        assert Dm.symmetry_error < 1e-10
        np.testing.assert_array_equal(np.diag(Dm.D), 0.0)
    with pytest.raises(ValueError):
        d_matrix(EXP, Quadruple.from_array([[0, 0], [1, 0], [2, 0.5], [3, 0.7]]))


def test_d_matrix_matches_reduced_determinants():
    K = Quadruple.from_array(np.random.default_rng(3).uniform(-1, 1, (4, 2)))
    T = reduced_2x2(EXP, K)
    Dm = d_matrix(EXP, K)
    for i in range(4):
        for k in range(4):
            if i != k:
                assert Dm.D[i, k] == pytest.approx(np.linalg.det(T[i] - T[k]), abs=1e-12)


@pytest.mark.parametrize("lams", [(2.0, 1.0), (3.0, -1.0), (1.5, 0.7)])
def test_lambda_family_has_constant_row(lams):
    f, K = lambda_quadruple(*lams)
    assert d_matrix(f, K).constant_rows


@pytest.mark.parametrize("lam2", [0.5, 1.0, 1.5])
def test_l17_family_has_constant_row(lam2):
    f, K = l17_family(lam2)
    rep = det_sign_filter(reduced_2x2(f, K))
    assert not rep.passes
    assert d_matrix(f, K, require_distinct=False).constant_rows == rep.failing_rows


# ---------------------------------------------------------- certification

def test_random_exp_quadruples_certified():
    rng = np.random.default_rng(13)
    for _ in range(100):
        r = certify_no_t4(EXP, Quadruple.from_array(rng.uniform(-1, 1, (4, 2))))
        assert r.outcome == "NoT4" and r.lemma == "L12"


def test_duplicate_point_is_degenerate():
    r = certify_no_t4(EXP, Quadruple.from_array([[0, 0], [0, 0], [1, 0.5], [-1, 0.2]]))
    assert r.outcome == "Degenerate"


def test_hypothesis_gate():
    r = certify_no_t4(CUBIC, Quadruple.from_array([[0, -0.5], [1, 0.2], [-1, 0.4], [0.3, 0.9]]))
    assert r.outcome == "Inconclusive" and "hypothesis" in r.reason


def test_rank1_pair_detected():
    c = make_connection(CUBIC, -1.0, 2.0)
    (u0, v0), (u1, v1) = c.witness
    r = certify_no_t4(CUBIC, Quadruple.from_array([[u0, v0], [u1, v1], [0.3, 0.1], [-0.2, 0.5]]))
    assert r.outcome == "Rank1Present" and r.connection is not None


@pytest.mark.parametrize("col,tag", [(0, "L1.3"), (1, "L1.3")])
def test_constant_coordinate_paths(col, tag):
    K = np.random.default_rng(4).uniform(-1, 1, (4, 2))
    K[:, col] = 0.25
    r = certify_no_t4(EXP, Quadruple.from_array(K))
    assert (r.outcome, r.lemma) == ("NoT4", tag)


def test_parallel_path():
    K = np.random.default_rng(4).uniform(-1, 1, (4, 2))
    K[:, 0] = 0.5 + 1.7 * K[:, 1]
    assert (certify_no_t4(EXP, Quadruple.from_array(K)).lemma) == "L1.5"


def test_dim2_path():
    for K in lc3_quadruples(np.random.default_rng(1), 2):
        r = certify_no_t4(EXP, Quadruple.from_array(K))
        assert (r.outcome, r.lemma) == ("NoT4", "LC3")
        assert r.margins["span_dim"] == 2 and r.margins["fit_residual"] < 1e-8


def test_singular_blocks_path():
    for K in l15_quadruples(np.random.default_rng(1), 3):
        r = certify_no_t4(EXP, Quadruple.from_array(K))
        assert (r.outcome, r.lemma) == ("NoT4", "L15")


@pytest.mark.parametrize("lam2", [0.5, 1.5])
def test_l17_path(lam2):
    f, K = l17_family(lam2)
    r = certify_no_t4(f, K)
    assert (r.outcome, r.lemma) == ("NoT4", "L17")


@pytest.mark.parametrize("lams", [(2.0, 1.0), (3.0, -1.0)])
def test_l23_path(lams):
    f, K = lambda_quadruple(*lams)
    r = certify_no_t4(f, K)
    assert (r.outcome, r.lemma) == ("NoT4", "L23")
    assert r.margins["fit_residual"] < 1e-8


def test_concave_flux_certified():
    f = builtin("concave_exp")
    rng = np.random.default_rng(8)
    for _ in range(30):
        r = certify_no_t4(f, Quadruple.from_array(rng.uniform(-1, 1, (4, 2))))
        assert r.outcome == "NoT4"


def test_tight_margin_gives_inconclusive():
    f, K = l17_family(1.0)
    r = certify_no_t4(f, K, CertOptions(ambiguity=1e12))
    assert r.outcome == "Inconclusive"


def test_certify_and_search_agree():
    rng = np.random.default_rng(30)
    for _ in range(5):
        K = Quadruple.from_array(rng.uniform(-1, 1, (4, 2)))
        assert certify_no_t4(EXP, K).outcome == "NoT4"
        assert not search_all_orderings(p_map(EXP, K.u, K.v), starts=32).found_orbits


def test_report_json_has_audit():
    r = certify_no_t4(EXP, Quadruple.from_array([[0, 0], [1, 1], [2, -0.5], [-1, 0.3]]))
    d = r.to_json()
    assert d["outcome"] == "NoT4" and d["lemma"] == "L12"
    assert {"S", "A_left", "A_right", "rank1_directions"} <= set(d["audit"])

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import XR2, xwall, ywall
from jte.kinematics import HalfPlaneConstraint, certified_lower_bound, fk_position, lower_bound_poly
from jte.nlp import (CONVERGED, INFEASIBLE, NlpProblem, NlpSolution, SolverOptions, certify_with_backoff, check_psd,
                     eval_minors, initial_point, leading_minors, min_eigenvalue, minor_directional_derivatives,
                     post_check_psd, solve_nlp)
from jte.polyalg import LAMBDA, ONE, Polynomial, Var, deviation_vars
from jte.sos_core import GramProblem, build_gram, cone_problem, reduce_gram


def cofactor_det(M):
    """Laplace expansion along the first row; independent of any elimination."""
    n = len(M)
    if n == 0:
        return 1.0
    if n == 1:
        return float(M[0][0])
    total = 0.0
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in M[1:]]
        total += (-1) ** j * M[0][j] * cofactor_det(minor)
    return total


def _planar_problem(planar, c, order=2, reduce=True):
    g = certified_lower_bound(c, planar, XR2).poly
    gram = cone_problem(g, 2, order)
    return NlpProblem(reduce_gram(gram) if reduce else gram)


def _one_var_gram():
    y = deviation_vars(1)[0]
    a = Var("alpha_1", "multiplier")
    p0 = -Polynomial.var(a) * (1 - Polynomial.var(y) ** 2) - 1
    return build_gram(p0, 1)


def test_minor_examples():
    gram = _one_var_gram()
    np.testing.assert_allclose(eval_minors(gram, [0.0, -1.0]), [0.0, 0.0], atol=0)
    np.testing.assert_allclose(leading_minors(np.eye(3)), [1.0, 1.0, 1.0])


def test_minors_of_planar_gram_match_cofactor(planar):
    gram = cone_problem(certified_lower_bound(xwall(), planar, XR2).poly, 2, 2)
    v = initial_point(gram, SolverOptions())
    v[0] = 0.0
    Q = gram.numeric(v)
    got = eval_minors(gram, v)
    for k in range(1, 7):
        ref = cofactor_det(Q[:k, :k].tolist())
        assert got[k - 1] == pytest.approx(ref, rel=1e-9, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10 ** 6))
def test_minors_random_symmetric(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    Q = A + A.T
    got = leading_minors(Q)
    for k in range(1, n + 1):
        ref = cofactor_det(Q[:k, :k].tolist())
        assert got[k - 1] == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_minor_derivatives_match_central_differences(planar):
    gram = cone_problem(certified_lower_bound(xwall(), planar, XR2).poly, 2, 2)
    rng = np.random.default_rng(11)
    base = initial_point(gram, SolverOptions())
    for _ in range(20):
        v = base * rng.uniform(0.5, 2.0, size=base.size)
        d = rng.normal(size=base.size)
        h = 1e-6
        fd = (eval_minors(gram, v + h * d) - eval_minors(gram, v - h * d)) / (2 * h)
        an = minor_directional_derivatives(gram, v, d)
        np.testing.assert_allclose(an, fd, rtol=1e-4, atol=1e-9 * (1 + np.abs(an).max()))


def test_psd_check_examples():
    ok = check_psd(np.diag([1.0, 2.0]), 1e-8)
    assert ok.certified and ok.min_eigenvalue == pytest.approx(1.0)
    Q = np.array([[0.0, 0.0], [0.0, -1.0]])
    assert np.all(leading_minors(Q) >= 0)
    bad = check_psd(Q, 1e-8)
    assert not bad.certified and bad.min_eigenvalue == pytest.approx(-1.0)
    assert min_eigenvalue(np.eye(4) * 3) == pytest.approx(3.0)


def test_solve_xwall(planar):
    prob = _planar_problem(planar, xwall())
    sol = solve_nlp(prob)
    assert sol.status == CONVERGED
    assert 0.060 <= sol.lam <= 0.0682
    cert = certify_with_backoff(prob, sol)
    assert cert.certified and cert.backoff_rounds == 0
    assert post_check_psd(prob.gram, cert, 1e-8).certified
    assert np.all(eval_minors(prob.gram, cert.point) >= -1e-8)
    assert all(a >= -1e-12 for a in cert.alpha.values())


def test_solve_ywall_below_analytic_cap(planar):
    sol = solve_nlp(_planar_problem(planar, ywall()))
    assert 0.0 < sol.lam <= 0.0373


def test_unreduced_problem_has_no_interior(planar):
    # without the reduction some diagonal entries are forced <= 0, so no
    # point has all leading minors strictly positive
    prob = _planar_problem(planar, xwall(), reduce=False)
    sol = certify_with_backoff(prob, solve_nlp(prob, SolverOptions(max_iter=3000)))
    assert sol.status == INFEASIBLE and sol.certified is False and sol.lam == 0.0


def test_degenerate_reference_gives_zero(planar):
    on_plane = HalfPlaneConstraint([1.0, 0.0], float(fk_position(planar, XR2)[0]))
    g = lower_bound_poly(on_plane, planar, XR2)
    prob = NlpProblem(reduce_gram(cone_problem(g, 2, 2)))
    sol = certify_with_backoff(prob, solve_nlp(prob))
    assert sol.lam == 0.0 and sol.status == INFEASIBLE


def test_solver_is_deterministic(planar):
    a = solve_nlp(_planar_problem(planar, xwall()))
    b = solve_nlp(_planar_problem(planar, xwall()))
    assert a.lam == b.lam and a.iterations == b.iterations
    np.testing.assert_array_equal(a.point, b.point)


def test_objective_and_counts(planar):
    prob = _planar_problem(planar, xwall())
    assert prob.num_minor_constraints == prob.gram.size
    v = initial_point(prob.gram, SolverOptions())
    assert prob.objective(v) == -v[0]
    assert v[0] == 1e-3


def _threshold_gram(cut):
    """1x1 Gram [cut - lambda]: PSD exactly for lambda <= cut."""
    y = deviation_vars(1)
    p0 = Polynomial.constant(cut) - Polynomial.var(LAMBDA)
    return GramProblem([ONE], [[p0]], y, p0, [])


def test_backoff_noop_when_certified():
    prob = NlpProblem(_threshold_gram(0.097))
    sol = NlpSolution(0.09, np.array([0.09]), {}, CONVERGED, 5)
    out = certify_with_backoff(prob, sol)
    assert out.certified and out.lam == 0.09 and out.backoff_rounds == 0


def test_backoff_one_round():
    prob = NlpProblem(_threshold_gram(0.097))
    sol = NlpSolution(0.1, np.array([0.1]), {}, CONVERGED, 5)
    assert not post_check_psd(prob.gram, sol).certified
    out = certify_with_backoff(prob, sol)
    assert out.certified and out.backoff_rounds == 1
    assert out.lam == pytest.approx(0.095)


def test_backoff_exhaustion():
    prob = NlpProblem(_threshold_gram(0.01))
    sol = NlpSolution(0.1, np.array([0.1]), {}, CONVERGED, 5)
    out = certify_with_backoff(prob, sol, SolverOptions(backoff_rounds=3))
    assert out.status == INFEASIBLE and not out.certified and out.lam == 0.0


def test_backoff_never_emits_rejected_lambda():
    Q = np.array([[0.0, 0.0], [0.0, -1.0]])
    y = deviation_vars(1)
    entries = [[Polynomial.constant(Q[i, j]) for j in range(2)] for i in range(2)]
    gram = GramProblem([ONE, ONE], entries, y, Polynomial.constant(-1.0), [])
    sol = NlpSolution(0.05, np.array([0.05]), {}, CONVERGED, 1)
    out = certify_with_backoff(NlpProblem(gram), sol)
    assert not out.certified and out.lam == 0.0

import csv
import math

import numpy as np
import pytest

from conftest import XR2, general_plane, xwall, ywall
from jte.kinematics import HalfPlaneConstraint, certified_lower_bound, eval_constraint
from jte.nlp import NlpProblem, certify_with_backoff, solve_nlp
from jte.polyalg import LAMBDA, Polynomial, deviation_vars
from jte.sos_core import cone_problem, reduce_gram
from jte.verify import (InfeasibleReferenceError, check_lower_bound, combine_constraints, default_grid,
                        oracle_lambda, sample_check, write_samples_csv)


def _bisect(fun, lo, hi, tol=1e-12):
    """Plain bisection for a sign change of ``fun`` on [lo, hi]."""
    flo = fun(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (fun(mid) > 0) == (flo > 0):
            lo, flo = mid, fun(mid)
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_sample_check_zero_lambda(planar):
    rep = sample_check([xwall()], planar, XR2, 0.0, n=50, seed=3)
    assert rep.violations == 0
    assert np.all(rep.samples == XR2)
    assert rep.min_f == pytest.approx(eval_constraint(xwall(), planar, XR2), abs=1e-15)


def test_sample_check_at_certified_lambda(planar):
    g = certified_lower_bound(xwall(), planar, XR2).poly
    prob = NlpProblem(reduce_gram(cone_problem(g, 2, 2)))
    lam = certify_with_backoff(prob, solve_nlp(prob)).lam
    rep = sample_check([xwall()], planar, XR2, lam, n=10000, seed=0)
    assert rep.violations == 0 and rep.min_f > 0


def test_corner_biased_sampling_finds_violation(planar):
    # f at y = (-1, -1), lambda = 0.1 by direct trig evaluation
    corner = 1.456 - math.cos(math.pi / 3 - 0.1) - math.cos(math.pi / 6 - 0.1)
    assert corner < 0
    rep = sample_check([xwall()], planar, XR2, 0.10, n=2000, seed=0, corner_bias=0.5)
    assert rep.violations > 0


def test_sample_report_invariants_and_reproducibility(planar):
    cons = [xwall(), ywall()]
    a = sample_check(cons, planar, XR2, 0.08, n=3000, seed=9)
    b = sample_check(cons, planar, XR2, 0.08, n=3000, seed=9)
    assert 0 <= a.violations <= a.n_samples
    np.testing.assert_array_equal(a.samples, b.samples)
    assert (a.violations, a.min_f) == (b.violations, b.min_f)
    again = min(eval_constraint(c, planar, a.argmin) for c in cons)
    assert again == a.min_f
    assert np.all(np.abs(a.samples - XR2) <= 0.08 + 1e-15)


def test_sample_check_rejects_bad_input(planar):
    with pytest.raises(ValueError):
        sample_check([xwall()], planar, XR2, -0.1)
    with pytest.raises(ValueError):
        sample_check([xwall()], planar, XR2, 0.1, n=0)


def test_oracle_xwall_against_trig_root(planar):
    root = _bisect(lambda lam: 1.456 - math.cos(math.pi / 3 - lam) - math.cos(math.pi / 6 - lam), 0.0, 0.2)
    assert root == pytest.approx(0.06825, abs=5e-5)
    est = oracle_lambda(xwall(), planar, XR2)
    assert 0.066 <= est.lam <= 0.069
    assert est.lo <= root <= est.hi + 1e-9
    assert est.hi - est.lo <= 1e-4


def test_oracle_general_plane(planar):
    est = oracle_lambda(general_plane(), planar, XR2)
    assert 0.119 <= est.lam <= 0.120
    # worst case corner moves both joints toward the plane: y = (-1, +1)
    root = _bisect(lambda lam: (2.8 - (math.cos(math.pi / 3 - lam) + math.cos(math.pi / 6 + lam))
                                - (math.sin(math.pi / 3 - lam) + math.sin(math.pi / 6 + lam))) / math.sqrt(2),
                   0.0, 0.2)
    assert est.lo <= root <= est.hi


def test_oracle_cap_and_infeasible_reference(planar):
    far = HalfPlaneConstraint([1.0, 0.0], 12.0)
    assert eval_constraint(far, planar, XR2) > 10
    est = oracle_lambda(far, planar, XR2, lambda_max=0.2)
    assert est.capped and est.lam == 0.2
    with pytest.raises(InfeasibleReferenceError):
        oracle_lambda(HalfPlaneConstraint([1.0, 0.0], 1.0), planar, XR2)


def test_oracle_grid_feasibility_is_monotone(planar):
    axis = np.linspace(-1, 1, 41)
    grid = np.array(np.meshgrid(axis, axis)).reshape(2, -1).T
    mins = [eval_constraint(ywall(), planar, XR2 + grid * lam).min() for lam in np.linspace(0, 0.2, 30)]
    assert all(b <= a + 1e-15 for a, b in zip(mins, mins[1:]))


def test_default_grid():
    assert default_grid(2) == 447
    assert default_grid(6) == 7
    assert default_grid(6) ** 6 <= 200_000


def test_check_lower_bound_examples(planar):
    assert check_lower_bound(xwall(), planar, XR2, 0.0670, n=10000, seed=0) <= 1e-12
    g = certified_lower_bound(xwall(), planar, XR2).poly
    assert abs(check_lower_bound(xwall(), planar, XR2, 0.0, n=200, seed=0, g=g)) <= 1e-15
    with pytest.raises(ValueError):
        check_lower_bound(xwall(), planar, XR2, 0.3)


def test_check_lower_bound_detects_mutation(planar):
    g = certified_lower_bound(xwall(), planar, XR2).poly
    ys = deviation_vars(2)
    flipped = g.map_coefficients(lambda m, c: -c if m.degree_in(ys) == 1 else c)
    assert check_lower_bound(xwall(), planar, XR2, 0.0670, n=10000, seed=0, g=flipped) > 0


def test_combine_constraints():
    assert combine_constraints([0.0346, 0.0265, 0.035, 0.0302]) == 0.0265
    assert combine_constraints([0.07]) == 0.07
    assert combine_constraints([0.1, 0.1, 0.1]) == 0.1
    with pytest.raises(ValueError):
        combine_constraints([])
    with pytest.raises(ValueError):
        combine_constraints([0.1, -0.01])


def test_samples_csv(tmp_path, planar):
    rep = sample_check([xwall(), ywall()], planar, XR2, 0.03, n=25, seed=1)
    path = tmp_path / "s.csv"
    write_samples_csv(path, rep)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["sample_id", "x_1", "x_2", "f_min_over_constraints"]
    assert len(rows) == 26
    assert float(rows[5][1]) == rep.samples[4, 0]
    assert float(rows[5][3]) == rep.f_min[4]

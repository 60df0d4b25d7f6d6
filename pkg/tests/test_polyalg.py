import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jte.polyalg import (LAMBDA, ONE, Monomial, Polynomial, Var, collect_by, deviation_vars, evaluate,
                         monomials_up_to, poly_add, poly_mul)

y1, y2, y3 = deviation_vars(3)
a1 = Var("alpha_1", "multiplier")
Y1, Y2, Y3, L, A1 = (Polynomial.var(v) for v in (y1, y2, y3, LAMBDA, a1))
VARS = [y1, y2, y3, LAMBDA]


def test_add_cancellation_identity_and_merge():
    assert poly_add(Y1 + 1, -Y1) == Polynomial.constant(1.0)
    p = 3 * Y1 * Y2 - L
    assert poly_add(p, Polynomial()) == p
    merged = poly_add(0.5 * Y1 ** 2, 0.25 * Y1 ** 2)
    assert merged.terms == {Monomial([(y1, 2)]): 0.75}


def test_zero_terms_are_pruned():
    p = (Y1 + Y2) - Y1
    assert p.terms == {Monomial([(y2, 1)]): 1.0}
    assert (Y1 - Y1).is_zero() and len(Y1 - Y1) == 0


def test_mul_examples():
    prod = poly_mul(1 - Y1 ** 2, 1 - Y2 ** 2)
    assert prod == 1 - Y1 ** 2 - Y2 ** 2 + Y1 ** 2 * Y2 ** 2
    p = 2 * Y1 + L * Y3
    assert poly_mul(p, Polynomial.constant(1.0)) == p
    assert poly_mul(Y1 * L, Y1 * L).terms == {Monomial([(y1, 2), (LAMBDA, 2)]): 1.0}


def test_evaluate_examples():
    assert evaluate(1 - Y1 ** 2, {y1: 1.0}) == 0.0
    g = 0.08997 + 0.86603 * Y1 * L
    assert evaluate(g, {"y1": -1.0, "lambda": 0.067}) == pytest.approx(0.03195, abs=5e-6)
    p = 4.5 - 2 * Y1 * Y2 + L ** 3
    assert evaluate(p, {y1: 0.0, y2: 0.0, LAMBDA: 0.0}) == p.constant_term() == 4.5


def test_evaluate_missing_variable():
    with pytest.raises(KeyError, match="y2"):
        evaluate(Y1 + Y2, {y1: 1.0})


def test_evaluate_vectorised():
    p = 1 + Y1 * Y2 - L ** 2
    ys = np.linspace(-1, 1, 7)
    out = p.evaluate({y1: ys, y2: 2 * ys, LAMBDA: 0.5})
    np.testing.assert_allclose(out, 1 + 2 * ys ** 2 - 0.25)


def test_collect_by_examples():
    p = A1 * Y1 ** 2 + L * Y1
    groups = collect_by(p, [y1])
    assert groups == {Monomial([(y1, 2)]): A1, Monomial([(y1, 1)]): L}
    assert collect_by(Polynomial.constant(2.5), [y1]) == {ONE: Polynomial.constant(2.5)}


def _brute_expand(factors):
    """Expand a product of {exponent-tuple: coeff} dicts over (y1, y2, lambda)."""
    acc = {(0, 0, 0): 1.0}
    for f in factors:
        nxt = {}
        for (e1, c1), (e2, c2) in itertools.product(acc.items(), f.items()):
            key = tuple(a + b for a, b in zip(e1, e2))
            nxt[key] = nxt.get(key, 0.0) + c1 * c2
        acc = nxt
    return acc


def test_collect_by_against_brute_force_expansion():
    # gamma0 * gamma1 for the planar x-wall example
    g0 = {(0, 0, 0): -0.08997, (1, 0, 1): -0.86603, (0, 1, 1): -0.5, (2, 0, 2): -0.25, (0, 2, 2): -0.43301}
    g1 = {(0, 0, 0): 1.0, (2, 0, 0): -1.0}
    ref = _brute_expand([g0, g1])
    to_poly = lambda d: sum((c * Y1 ** a * Y2 ** b * L ** k for (a, b, k), c in d.items()), Polynomial())
    groups = collect_by(to_poly(g0) * to_poly(g1), [y1, y2])
    expect = {}
    for (a, b, k), c in ref.items():
        if c != 0.0:
            key = Monomial([(y1, a), (y2, b)])
            expect[key] = expect.get(key, Polynomial()) + c * L ** k
    assert groups.keys() == expect.keys()
    for k in expect:
        assert groups[k] == expect[k]


def test_monomial_grlex_basis():
    basis = monomials_up_to([y1, y2], 2)
    assert basis == [ONE, Monomial([(y1, 1)]), Monomial([(y2, 1)]), Monomial([(y1, 2)]),
                     Monomial([(y1, 1), (y2, 1)]), Monomial([(y2, 2)])]
    for d in range(1, 5):
        assert len(monomials_up_to([y1, y2], d)) == math.comb(2 + d, d)


def test_diff_and_substitute():
    p = 3 * Y1 ** 2 * L + Y2
    assert p.diff(y1) == 6 * Y1 * L
    assert p.diff(y3).is_zero()
    q = p.substitute({y1: Y2 + 1})
    assert q == 3 * (Y2 + 1) ** 2 * L + Y2


def test_partial_substitution():
    p = A1 * Y1 ** 2 + 2 * L * Y1 + A1
    assert p.partial({"alpha_1": 0.0}) == 2 * L * Y1
    assert p.partial({LAMBDA: 0.5, a1: 2.0}) == 2 * Y1 ** 2 + Y1 + 2


def test_to_string():
    assert (Y1 - Y1).to_string() == "0"
    assert "y1" in (2 * Y1 - 1).to_string()


# property tests ---------------------------------------------------------------

_exps = st.tuples(*[st.integers(0, 3)] * len(VARS))
int_polys = st.dictionaries(_exps, st.integers(-5, 5), max_size=6).map(
    lambda d: Polynomial({Monomial(zip(VARS, e)): float(c) for e, c in d.items()}))
float_polys = st.dictionaries(_exps, st.floats(-3, 3, allow_nan=False), max_size=6).map(
    lambda d: Polynomial({Monomial(zip(VARS, e)): c for e, c in d.items()}))


def _point(rng):
    return {v: rng.uniform(-1.5, 1.5) for v in VARS}


@settings(max_examples=60, deadline=None)
@given(float_polys, float_polys, float_polys)
def test_ring_axioms_by_evaluation(p, q, r):
    rng = np.random.default_rng(0)
    lhs, rhs = p * (q + r), p * q + p * r
    for _ in range(100):
        pt = _point(rng)
        scale = 1 + abs(p.evaluate(pt)) * (abs(q.evaluate(pt)) + abs(r.evaluate(pt)))
        assert abs(lhs.evaluate(pt) - rhs.evaluate(pt)) <= 1e-9 * scale * 10
        assert (p + q).evaluate(pt) == pytest.approx(p.evaluate(pt) + q.evaluate(pt), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(int_polys, int_polys)
def test_degree_is_additive(p, q):
    if p.is_zero() or q.is_zero():
        assert (p * q).is_zero()
    else:
        assert (p * q).degree() == p.degree() + q.degree()


@settings(max_examples=60, deadline=None)
@given(int_polys, int_polys, int_polys)
def test_canonical_form_is_order_independent(p, q, r):
    assert ((p + q) + r).terms == (r + (q + p)).terms
    assert ((p * q) * r).terms == (q * (r * p)).terms


@settings(max_examples=60, deadline=None)
@given(float_polys)
def test_collect_by_round_trip(p):
    groups = p.collect_by([y1, y2])
    back = sum((Polynomial.monomial(m) * w for m, w in groups.items()), Polynomial())
    assert back.terms == p.terms


@settings(max_examples=40, deadline=None)
@given(float_polys)
def test_diff_matches_finite_difference(p):
    rng = np.random.default_rng(1)
    pt = _point(rng)
    h = 1e-6
    up = dict(pt); up[y2] = pt[y2] + h
    dn = dict(pt); dn[y2] = pt[y2] - h
    fd = (p.evaluate(up) - p.evaluate(dn)) / (2 * h)
    assert p.diff(y2).evaluate(pt) == pytest.approx(fd, rel=1e-5, abs=1e-5)

"""Refute generators, scalar-multiplier cone terms and Gram decomposition of p0.

The refute set of ``g(y, lambda) >= 0 on |y_i| <= 1`` is generated by
``gamma_0 = -g`` and ``gamma_i = 1 - y_i^2``. Each nonempty subset ``S`` of
generator indices contributes ``alpha_S * prod_{j in S} gamma_j`` with a
scalar multiplier ``alpha_S >= 0``, and

    p0 = -sum_S alpha_S prod_{j in S} gamma_j - 1

must be a sum of squares. ``build_gram`` writes ``p0 = Y^T Q Y`` with a fixed
entry assignment; ``reduce_gram`` removes multipliers and basis monomials
that any positive semidefinite ``Q`` would force to zero.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .polyalg import LAMBDA, ONE, Monomial, Polynomial, Var, deviation_vars, monomials_up_to

logger = logging.getLogger(__name__)


class GramError(ValueError):
    pass


@dataclass(frozen=True)
class RefuteGenerators:
    gamma0: Polynomial
    gammas: tuple[Polynomial, ...]

    @property
    def n(self) -> int:
        return len(self.gammas)

    def all(self) -> list[Polynomial]:
        return [self.gamma0, *self.gammas]


def build_refute_generators(g: Polynomial, n: int) -> RefuteGenerators:
    ys = deviation_vars(n)
    gammas = tuple(1.0 - Polynomial.var(y) ** 2 for y in ys)
    return RefuteGenerators(-g, gammas)


def multiplier_var(subset: Sequence[int]) -> Var:
    return Var("alpha_" + "_".join(str(j) for j in subset), "multiplier")


def multiplier_subset(v: Var) -> tuple[int, ...]:
    if v.kind != "multiplier" or not v.name.startswith("alpha_"):
        raise ValueError(f"{v.name} is not a cone multiplier")
    return tuple(int(tok) for tok in v.name[len("alpha_"):].split("_"))


@dataclass(frozen=True)
class ConeTerm:
    subset: tuple[int, ...]
    multiplier: Var
    product: Polynomial


def enumerate_cone_terms(gens: RefuteGenerators, order: int) -> list[ConeTerm]:
    """One term per nonempty subset of size <= ``order``, sorted by size then lexicographically."""
    total = gens.n + 1
    if not 1 <= order <= total:
        raise ValueError(f"cone order must be in 1..{total}, got {order}")
    polys = gens.all()
    terms = []
    for size in range(1, order + 1):
        for subset in itertools.combinations(range(total), size):
            prod = Polynomial.constant(1.0)
            for j in subset:
                prod = prod * polys[j]
            terms.append(ConeTerm(subset, multiplier_var(subset), prod))
    return terms


def assemble_p0(terms: Sequence[ConeTerm]) -> Polynomial:
    if not terms:
        raise ValueError("at least one cone term is required")
    p0 = Polynomial.constant(-1.0)
    for t in terms:
        p0 = p0 - Polynomial.var(t.multiplier) * t.product
    return p0


# --------------------------------------------------------------------------- Gram


def _divide(m: Monomial, d: Monomial) -> Monomial | None:
    out = dict(m.powers)
    for v, e in d.powers:
        have = out.get(v, 0)
        if have < e:
            return None
        out[v] = have - e
    return Monomial(out.items())


def _multipliers_of(p: Polynomial) -> list[Var]:
    found = [v for v in p.variables() if v.kind == "multiplier"]
    return sorted(found, key=lambda v: (len(multiplier_subset(v)), multiplier_subset(v)))


def _assign(p0: Polynomial, basis: list[Monomial], y_vars: list[Var]) -> list[list[Polynomial]]:
    """Place every y-monomial of p0 on one Gram entry (diagonal first, else first factor pair)."""
    index = {m: i for i, m in enumerate(basis)}
    N = len(basis)
    acc: dict[tuple[int, int], Polynomial] = {}
    for m, w in p0.collect_by(y_vars).items():
        if m.is_square() and m.sqrt() in index:
            i = index[m.sqrt()]
            acc[(i, i)] = acc.get((i, i), Polynomial()) + w
            continue
        pair = None
        for i, b in enumerate(basis):
            q = _divide(m, b)
            if q is not None and index.get(q, -1) > i:
                pair = (i, index[q])
                break
        if pair is None:
            raise GramError(f"monomial {m!r} of p0 is not a product of two basis monomials")
        half = w * 0.5
        acc[pair] = acc.get(pair, Polynomial()) + half
        acc[pair[::-1]] = acc.get(pair[::-1], Polynomial()) + half
    return [[acc.get((i, j), Polynomial()) for j in range(N)] for i in range(N)]


@dataclass(eq=False)
class GramProblem:
    """``p0 = Y^T Q Y`` with polynomial entries in (lambda, alpha...).

    ``fixed`` lists multipliers pinned to zero by :func:`reduce_gram`; the
    reconstruction identity holds for ``p0`` with those set to zero.
    """

    basis: list[Monomial]
    entries: list[list[Polynomial]]
    y_vars: list[Var]
    p0: Polynomial
    multipliers: list[Var]
    fixed: dict[Var, float] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.basis)

    @property
    def decision_vars(self) -> list[Var]:
        return [LAMBDA, *self.multipliers]

    @property
    def weights(self) -> np.ndarray:
        w = np.zeros(1 + len(self.multipliers))
        w[0] = -1.0
        return w

    def effective_p0(self) -> Polynomial:
        if not self.fixed:
            return self.p0
        return self.p0.partial(self.fixed)

    def quadratic_form(self) -> Polynomial:
        ys = [Polynomial.monomial(m) for m in self.basis]
        out = Polynomial()
        for i in range(self.size):
            for j in range(self.size):
                e = self.entries[i][j]
                if not e.is_zero():
                    out = out + ys[i] * ys[j] * e
        return out

    def point_vector(self, point) -> np.ndarray:
        """Decision vector [lambda, alpha...] from a mapping or a sequence."""
        if isinstance(point, dict):
            by_name = {(k.name if isinstance(k, Var) else k): float(v) for k, v in point.items()}
            return np.array([by_name[v.name] for v in self.decision_vars])
        v = np.asarray(point, dtype=float)
        if v.shape != (len(self.decision_vars),):
            raise ValueError(f"expected {len(self.decision_vars)} decision values, got {v.shape}")
        return v

    @cached_property
    def _compiled(self):
        mult_index = {v: s + 1 for s, v in enumerate(self.multipliers)}
        K = 0
        for row in self.entries:
            for e in row:
                for m, _ in e.items():
                    K = max(K, m.exponent(LAMBDA))
        N = self.size
        C = np.zeros((K + 1, 1 + len(self.multipliers), N, N))
        for i, row in enumerate(self.entries):
            for j, e in enumerate(row):
                for m, c in e.items():
                    k = 0
                    s = 0
                    for v, p in m.powers:
                        if v == LAMBDA:
                            k = p
                        elif v in mult_index and p == 1 and s == 0:
                            s = mult_index[v]
                        else:
                            raise GramError(f"Gram entry is not affine in the multipliers: {m!r}")
                    C[k, s, i, j] += c
        return C

    def numeric(self, point) -> np.ndarray:
        """Evaluate Q at a decision point."""
        v = self.point_vector(point)
        C = self._compiled
        lam_pows = v[0] ** np.arange(C.shape[0])
        weights = np.concatenate(([1.0], v[1:]))
        return np.einsum("k,s,ksij->ij", lam_pows, weights, C)

    def derivative(self, var: Var) -> list[list[Polynomial]]:
        return [[e.diff(var) for e in row] for row in self.entries]


def gram_basis(p0: Polynomial, y_vars: list[Var]) -> list[Monomial]:
    deg = p0.degree(y_vars)
    if deg % 2:
        raise GramError(f"p0 has odd degree {deg} in y; no Gram decomposition")
    return monomials_up_to(y_vars, max(deg, 0) // 2)


def build_gram(p0: Polynomial, n: int) -> GramProblem:
    ys = deviation_vars(n)
    basis = gram_basis(p0, ys)
    entries = _assign(p0, basis, ys)
    return GramProblem(basis, entries, ys, p0, _multipliers_of(p0))


def _all_nonpositive(p: Polynomial) -> bool:
    return not p.is_zero() and all(c <= 0.0 for _, c in p.items())


def reduce_gram(gram: GramProblem) -> GramProblem:
    """Drop what positive semidefiniteness forces to vanish.

    With ``lambda >= 0`` and ``alpha >= 0`` a diagonal entry whose
    coefficients are all nonpositive can only be zero at a PSD point, so its
    multipliers are pinned to 0. A basis monomial whose diagonal is
    identically zero is removed when its monomials can be reassigned to the
    remaining entries. Both steps keep the set of certifiable lambdas intact.
    """
    fixed = dict(gram.fixed)
    basis = list(gram.basis)
    ys = gram.y_vars
    while True:
        p0 = gram.p0.partial(fixed) if fixed else gram.p0
        entries = _assign(p0, basis, ys)
        changed = False
        for i in range(1, len(basis)):
            diag = entries[i][i]
            if _all_nonpositive(diag):
                pinned = [v for v in diag.variables() if v.kind == "multiplier" and v not in fixed]
                if pinned:
                    for v in pinned:
                        fixed[v] = 0.0
                    changed = True
        if changed:
            continue
        for i in range(len(basis) - 1, 0, -1):
            if entries[i][i].is_zero():
                trial = basis[:i] + basis[i + 1:]
                try:
                    _assign(p0, trial, ys)
                except GramError:
                    continue
                basis = trial
                changed = True
                break
        if not changed:
            break
    p0 = gram.p0.partial(fixed) if fixed else gram.p0
    entries = _assign(p0, basis, ys)
    live = [v for v in gram.multipliers if v not in fixed]
    if fixed:
        logger.debug("reduce_gram pinned %s, basis %d -> %d", sorted(v.name for v in fixed), gram.size, len(basis))
    return GramProblem(basis, entries, ys, gram.p0, live, fixed)


def cone_problem(g: Polynomial, n: int, order: int) -> GramProblem:
    """g -> generators -> cone terms -> p0 -> Gram."""
    gens = build_refute_generators(g, n)
    terms = enumerate_cone_terms(gens, order)
    return build_gram(assemble_p0(terms), n)

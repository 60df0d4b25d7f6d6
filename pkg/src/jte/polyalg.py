"""Sparse multivariate polynomials over named variables.

Polynomials are immutable maps from :class:`Monomial` to float coefficients.
Zero coefficients are never stored (exact ``0.0`` test, no epsilon pruning).
Evaluation works elementwise on numpy arrays as well as on scalars.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import numpy as np

KINDS = ("deviation", "tolerance", "multiplier", "trig")
_KIND_RANK = {k: i for i, k in enumerate(KINDS)}


def _natural_key(name: str) -> tuple:
    return tuple(int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", name))


@dataclass(frozen=True)
class Var:
    """A named variable; ``kind`` is fixed at creation."""

    name: str
    kind: str = "deviation"
    sort_key: tuple = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.kind not in _KIND_RANK:
            raise ValueError(f"unknown variable kind {self.kind!r}")
        object.__setattr__(self, "sort_key", (_KIND_RANK[self.kind], _natural_key(self.name)))

    def __str__(self) -> str:
        return self.name


class Monomial:
    """Product of variables raised to positive integer powers.

    Stored as a tuple of ``(Var, exponent)`` pairs sorted by variable order.
    """

    __slots__ = ("powers", "_hash")

    def __init__(self, powers: Iterable[tuple[Var, int]] = ()):
        merged: dict[Var, int] = {}
        for v, e in powers:
            if e < 0 or int(e) != e:
                raise ValueError("exponents must be nonnegative integers")
            if e:
                merged[v] = merged.get(v, 0) + int(e)
        self.powers = tuple(sorted(merged.items(), key=lambda item: item[0].sort_key))
        self._hash = hash(self.powers)

    @classmethod
    def _raw(cls, powers: tuple) -> "Monomial":
        m = object.__new__(cls)
        m.powers = powers
        m._hash = hash(powers)
        return m

    @property
    def degree(self) -> int:
        return sum(e for _, e in self.powers)

    def degree_in(self, vars: Iterable[Var]) -> int:
        vs = set(vars)
        return sum(e for v, e in self.powers if v in vs)

    def exponent(self, v: Var) -> int:
        for w, e in self.powers:
            if w == v:
                return e
        return 0

    @property
    def variables(self) -> tuple[Var, ...]:
        return tuple(v for v, _ in self.powers)

    def __mul__(self, other: "Monomial") -> "Monomial":
        a, b = self.powers, other.powers
        if not a:
            return other
        if not b:
            return self
        out = []
        i = j = 0
        while i < len(a) and j < len(b):
            ka, kb = a[i][0].sort_key, b[j][0].sort_key
            if ka == kb:
                out.append((a[i][0], a[i][1] + b[j][1]))
                i += 1
                j += 1
            elif ka < kb:
                out.append(a[i])
                i += 1
            else:
                out.append(b[j])
                j += 1
        out.extend(a[i:])
        out.extend(b[j:])
        return Monomial._raw(tuple(out))

    def split(self, vars: Iterable[Var]) -> tuple["Monomial", "Monomial"]:
        """Split into (part in ``vars``, remaining part)."""
        vs = set(vars)
        inside = tuple(p for p in self.powers if p[0] in vs)
        outside = tuple(p for p in self.powers if p[0] not in vs)
        return Monomial._raw(inside), Monomial._raw(outside)

    def is_square(self) -> bool:
        return all(e % 2 == 0 for _, e in self.powers)

    def sqrt(self) -> "Monomial":
        if not self.is_square():
            raise ValueError(f"{self} is not a square")
        return Monomial._raw(tuple((v, e // 2) for v, e in self.powers))

    def grlex_key(self) -> tuple:
        """Sort key: ascending total degree, then lexicographically larger exponents first."""
        return (self.degree, tuple((v.sort_key, -e) for v, e in self.powers))

    def evaluate(self, values: Mapping[Var, object]):
        out = 1.0
        for v, e in self.powers:
            out = out * values[v] ** e
        return out

    def __eq__(self, other) -> bool:
        return isinstance(other, Monomial) and self.powers == other.powers

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        if not self.powers:
            return "1"
        return "*".join(v.name if e == 1 else f"{v.name}^{e}" for v, e in self.powers)


ONE = Monomial()

Number = Union[int, float]


class Polynomial:
    """Immutable sparse polynomial with float coefficients."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[Monomial, float] | None = None):
        clean: dict[Monomial, float] = {}
        if terms:
            for m, c in terms.items():
                c = float(c)
                if c != 0.0:
                    clean[m] = c
        self._terms = clean

    @classmethod
    def _wrap(cls, terms: dict) -> "Polynomial":
        p = object.__new__(cls)
        p._terms = terms
        return p

    # constructors ------------------------------------------------------
    @classmethod
    def constant(cls, c: Number) -> "Polynomial":
        return cls({ONE: c})

    @classmethod
    def var(cls, v: Var, coeff: Number = 1.0) -> "Polynomial":
        return cls({Monomial([(v, 1)]): coeff})

    @classmethod
    def monomial(cls, m: Monomial, coeff: Number = 1.0) -> "Polynomial":
        return cls({m: coeff})

    # views ---------------------------------------------------------------
    @property
    def terms(self) -> Mapping[Monomial, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def coefficient(self, m: Monomial) -> float:
        return self._terms.get(m, 0.0)

    def constant_term(self) -> float:
        return self._terms.get(ONE, 0.0)

    def variables(self) -> frozenset[Var]:
        return frozenset(v for m in self._terms for v, _ in m.powers)

    def degree(self, vars: Iterable[Var] | None = None) -> int:
        """Total degree, or degree in ``vars`` only. The zero polynomial has degree -1."""
        if not self._terms:
            return -1
        if vars is None:
            return max(m.degree for m in self._terms)
        vs = list(vars)
        return max(m.degree_in(vs) for m in self._terms)

    def sorted_terms(self) -> list[tuple[Monomial, float]]:
        return sorted(self._terms.items(), key=lambda t: t[0].grlex_key())

    # arithmetic ------------------------------------------------------------
    @staticmethod
    def _coerce(other) -> "Polynomial":
        if isinstance(other, Polynomial):
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(float(other))
        return NotImplemented

    def __add__(self, other) -> "Polynomial":
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for m, c in other._terms.items():
            s = out.get(m, 0.0) + c
            if s == 0.0:
                out.pop(m, None)
            else:
                out[m] = s
        return Polynomial._wrap(out)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial._wrap({m: -c for m, c in self._terms.items()})

    def __sub__(self, other) -> "Polynomial":
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other) -> "Polynomial":
        return (-self) + other

    def __mul__(self, other) -> "Polynomial":
        if isinstance(other, (int, float, np.floating, np.integer)):
            c0 = float(other)
            if c0 == 0.0:
                return Polynomial()
            return Polynomial({m: c * c0 for m, c in self._terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: dict[Monomial, float] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = m1 * m2
                out[m] = out.get(m, 0.0) + c1 * c2
        return Polynomial(out)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Polynomial":
        if k < 0 or int(k) != k:
            raise ValueError("only nonnegative integer powers are supported")
        out = Polynomial.constant(1.0)
        for _ in range(int(k)):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        other = self._coerce(other)
        if other is NotImplemented:
            return False
        return self._terms == other._terms

    __hash__ = None

    # evaluation --------------------------------------------------------------
    def evaluate(self, assignment: Mapping[Var | str, object]):
        """Sum of coefficient times monomial value.

        Keys may be :class:`Var` objects or variable names. Values may be
        numpy arrays, in which case evaluation is elementwise.
        """
        values = _resolve(assignment, self.variables())
        total = 0.0
        for m, c in self._terms.items():
            total = total + c * m.evaluate(values)
        return total

    def partial(self, assignment: Mapping[Var | str, Number]) -> "Polynomial":
        """Substitute numeric values for some variables, keeping the rest symbolic."""
        by_name = {(k.name if isinstance(k, Var) else k): float(v) for k, v in assignment.items()}
        out: dict[Monomial, float] = {}
        for m, c in self._terms.items():
            keep = []
            for v, e in m.powers:
                if v.name in by_name:
                    c = c * by_name[v.name] ** e
                else:
                    keep.append((v, e))
            key = Monomial._raw(tuple(keep))
            out[key] = out.get(key, 0.0) + c
        return Polynomial(out)

    def substitute(self, mapping: Mapping[Var, "Polynomial"]) -> "Polynomial":
        """Replace variables by polynomials."""
        cache: dict[tuple[Var, int], Polynomial] = {}
        acc = Polynomial()
        for m, c in self._terms.items():
            term = Polynomial.constant(c)
            rest = []
            for v, e in m.powers:
                if v in mapping:
                    key = (v, e)
                    if key not in cache:
                        cache[key] = mapping[v] ** e
                    term = term * cache[key]
                else:
                    rest.append((v, e))
            if rest:
                term = term * Polynomial.monomial(Monomial._raw(tuple(rest)))
            acc = acc + term
        return acc

    def diff(self, v: Var) -> "Polynomial":
        out: dict[Monomial, float] = {}
        for m, c in self._terms.items():
            e = m.exponent(v)
            if e:
                powers = tuple((w, k - 1 if w == v else k) for w, k in m.powers if not (w == v and k == 1))
                key = Monomial._raw(powers)
                out[key] = out.get(key, 0.0) + c * e
        return Polynomial(out)

    def collect_by(self, vars: Iterable[Var]) -> dict[Monomial, "Polynomial"]:
        """Group terms by their monomial in ``vars``.

        Returns a map from monomials in ``vars`` to polynomials in the
        remaining variables; summing key * value reproduces ``self``.
        """
        vs = list(vars)
        groups: dict[Monomial, dict[Monomial, float]] = {}
        for m, c in self._terms.items():
            inside, outside = m.split(vs)
            groups.setdefault(inside, {})[outside] = c
        return {k: Polynomial._wrap(v) for k, v in groups.items()}

    def map_coefficients(self, fn) -> "Polynomial":
        return Polynomial({m: fn(m, c) for m, c in self._terms.items()})

    def filter_terms(self, predicate) -> "Polynomial":
        return Polynomial._wrap({m: c for m, c in self._terms.items() if predicate(m, c)})

    # display -------------------------------------------------------------------
    def __repr__(self) -> str:
        if not self._terms:
            return "Polynomial(0)"
        return f"Polynomial({self.to_string()})"

    def to_string(self, digits: int = 6) -> str:
        if not self._terms:
            return "0"
        parts = []
        for m, c in self.sorted_terms():
            mag = f"{abs(c):.{digits}g}"
            body = mag if m == ONE else (m.__repr__() if abs(c) == 1.0 else f"{mag}*{m!r}")
            parts.append(("-" if c < 0 else "+", body))
        s = " ".join(f"{sign} {body}" for sign, body in parts)
        return s[2:] if s.startswith("+ ") else "-" + s[2:]


def _resolve(assignment: Mapping, needed: Iterable[Var]) -> dict[Var, object]:
    by_name = {}
    for k, val in assignment.items():
        by_name[k.name if isinstance(k, Var) else str(k)] = val
    values = {}
    missing = []
    for v in needed:
        if v.name in by_name:
            values[v] = by_name[v.name]
        else:
            missing.append(v.name)
    if missing:
        raise KeyError(f"assignment is missing variables: {', '.join(sorted(missing))}")
    return values


def poly_add(p: Polynomial, q: Polynomial) -> Polynomial:
    return p + q


def poly_mul(p: Polynomial, q: Polynomial) -> Polynomial:
    return p * q


def evaluate(p: Polynomial, assignment: Mapping[Var | str, object]):
    return p.evaluate(assignment)


def collect_by(p: Polynomial, vars: Iterable[Var]) -> dict[Monomial, Polynomial]:
    return p.collect_by(vars)


# canonical variables ---------------------------------------------------------
LAMBDA = Var("lambda", "tolerance")


def deviation_vars(n: int) -> list[Var]:
    return [Var(f"y{i + 1}", "deviation") for i in range(n)]


def monomials_up_to(vars: list[Var], degree: int) -> list[Monomial]:
    """All monomials in ``vars`` of total degree <= ``degree``, graded-lex ordered."""
    out = [ONE]
    frontier = [ONE]
    for _ in range(degree):
        nxt = set()
        for m in frontier:
            for v in vars:
                nxt.add(m * Monomial._raw(((v, 1),)))
        frontier = list(nxt)
        out.extend(frontier)
    out = sorted(set(out), key=Monomial.grlex_key)
    expected = math.comb(len(vars) + degree, degree)
    assert len(out) == expected
    return out

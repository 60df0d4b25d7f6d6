"""Independent checks of a certified tolerance.

Everything here evaluates the true trigonometric constraints; nothing
depends on the polynomial relaxation except :func:`check_lower_bound`,
which measures how far the relaxation sits below the true constraint.
"""

from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kinematics import SMALL_ANGLE_LIMIT, HalfPlaneConstraint, certified_lower_bound, eval_constraint
from .polyalg import LAMBDA, Polynomial, deviation_vars

logger = logging.getLogger(__name__)


class InfeasibleReferenceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SampleReport:
    n_samples: int
    violations: int
    min_f: float
    argmin: np.ndarray
    seed: int
    samples: np.ndarray = field(repr=False)
    f_min: np.ndarray = field(repr=False)

    @property
    def violation_rate(self) -> float:
        return self.violations / self.n_samples


@dataclass(frozen=True)
class OracleEstimate:
    lam: float
    lo: float
    hi: float
    grid_per_axis: int
    capped: bool = False


def _f_min(constraints, robot, x) -> np.ndarray:
    vals = [np.atleast_1d(eval_constraint(c, robot, x)) for c in constraints]
    return np.min(np.stack(vals), axis=0)


def sample_check(constraints: Sequence[HalfPlaneConstraint], robot, xr, lam: float, n: int = 10000, seed: int = 0,
                 corner_bias: float = 0.0) -> SampleReport:
    """Uniform samples in the cube ``|x - xr|_inf <= lam``, all constraints active.

    With ``corner_bias > 0`` that fraction of the samples is snapped to random
    cube vertices (adversarial mode, off by default).
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if n < 1:
        raise ValueError("need at least one sample")
    xr = np.asarray(xr, dtype=float)
    rng = np.random.default_rng(seed)
    y = rng.uniform(-1.0, 1.0, size=(n, xr.size))
    if corner_bias > 0.0:
        snap = rng.random(n) < corner_bias
        y[snap] = np.where(y[snap] < 0.0, -1.0, 1.0)
    x = xr + y * lam
    f = _f_min(constraints, robot, x)
    k = int(np.argmin(f))
    return SampleReport(n, int(np.count_nonzero(f < 0.0)), float(f[k]), x[k].copy(), seed, x, f)


def default_grid(n: int, budget: int = 200_000) -> int:
    """Largest odd per-axis count with at most ``budget`` grid points (at least 3)."""
    k = max(3, int(budget ** (1.0 / n)))
    if k % 2 == 0:
        k -= 1
    while k > 3 and k ** n > budget:
        k -= 2
    return k


def oracle_lambda(constraint: HalfPlaneConstraint | Sequence[HalfPlaneConstraint], robot, xr,
                  grid_per_axis: int | None = None, tol: float = 1e-4,
                  lambda_max: float = SMALL_ANGLE_LIMIT) -> OracleEstimate:
    """Bisection on lambda with a grid minimum of the true constraint as feasibility test.

    The grid includes every cube vertex. Because a grid can miss the true
    minimum, the bracket errs on the large side of the true tolerance.
    """
    constraints = [constraint] if isinstance(constraint, HalfPlaneConstraint) else list(constraint)
    xr = np.asarray(xr, dtype=float)
    if _f_min(constraints, robot, xr[None, :])[0] <= 0.0:
        raise InfeasibleReferenceError("reference configuration violates the constraint")
    k = grid_per_axis or default_grid(xr.size)
    axis = np.linspace(-1.0, 1.0, k)
    grid = np.array(list(itertools.product(axis, repeat=xr.size)))

    def feasible(lam: float) -> bool:
        return bool(_f_min(constraints, robot, xr + grid * lam).min() >= 0.0)

    if feasible(lambda_max):
        return OracleEstimate(lambda_max, lambda_max, lambda_max, k, capped=True)
    lo, hi = 0.0, lambda_max
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return OracleEstimate(0.5 * (lo + hi), lo, hi, k)


def check_lower_bound(constraint: HalfPlaneConstraint, robot, xr, lam: float, n: int = 10000, seed: int = 0,
                      g: Polynomial | None = None) -> float:
    """Largest sampled value of g - f over ``|y|_inf <= 1`` and ``lambda' in [0, lam]``.

    A nonpositive result means the polynomial stayed below the true
    constraint on every sample. ``g`` defaults to the certified lower bound;
    pass the plain small-angle polynomial to measure its own error.
    """
    if lam > SMALL_ANGLE_LIMIT:
        raise ValueError(f"lambda {lam} is outside the small-angle region (<= {SMALL_ANGLE_LIMIT})")
    xr = np.asarray(xr, dtype=float)
    if g is None:
        g = certified_lower_bound(constraint, robot, xr).poly
    rng = np.random.default_rng(seed)
    y = rng.uniform(-1.0, 1.0, size=(n, xr.size))
    lam_s = rng.uniform(0.0, lam, size=n)
    assignment = {v: y[:, i] for i, v in enumerate(deviation_vars(xr.size))}
    assignment[LAMBDA] = lam_s
    gv = np.broadcast_to(np.asarray(g.evaluate(assignment), dtype=float), (n,))
    fv = np.atleast_1d(eval_constraint(constraint, robot, xr + y * lam_s[:, None]))
    return float(np.max(gv - fv))


def combine_constraints(lams: Sequence[float]) -> float:
    """The smallest per-constraint bound is a bound for all constraints together."""
    lams = list(lams)
    if not lams:
        raise ValueError("no per-constraint bounds to combine")
    if any(v < 0 for v in lams):
        raise ValueError("per-constraint bounds must be nonnegative")
    return float(min(lams))


def write_samples_csv(path, report: SampleReport) -> None:
    n = report.samples.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", *[f"x_{i + 1}" for i in range(n)], "f_min_over_constraints"])
        for i, (x, f) in enumerate(zip(report.samples, report.f_min)):
            w.writerow([i, *[repr(float(v)) for v in x], repr(float(f))])

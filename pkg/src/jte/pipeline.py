"""End-to-end tolerance computation: one certificate per constraint, then the minimum.

Per constraint the stages run in a fixed order: lower-bound polynomial,
refute generators, cone terms, p0, Gram matrix, leading-minor program,
eigenvalue certification with backoff, and finally the independent checks
(sampling, lower-bound sweep, bisection oracle). Constraints are independent
problems, so they may be solved in parallel worker processes; the report
is always assembled in constraint order.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .config import ProblemSpec
from .kinematics import SMALL_ANGLE_LIMIT, HalfPlaneConstraint, certified_lower_bound
from .nlp import INFEASIBLE, MAX_ITER, NlpProblem, certify_with_backoff, solve_nlp
from .polyalg import deviation_vars
from .sos_core import (GramError, assemble_p0, build_gram, build_refute_generators, enumerate_cone_terms,
                       reduce_gram)
from .verify import SampleReport, check_lower_bound, combine_constraints, oracle_lambda, sample_check

logger = logging.getLogger(__name__)

#: g - f above this counts as a lower-bound breach; below it is float rounding.
LOWER_BOUND_TOL = 1e-12
#: Slack allowed between a certified value and the oracle bracket.
ORDERING_TOL = 1e-3


@dataclass
class ConstraintResult:
    name: str
    lam: float
    status: str
    certified: bool
    time_s: float
    cone_order: int
    gram_size: int = 0
    gram_size_full: int = 0
    multipliers: int = 0
    iterations: int = 0
    backoff_rounds: int = 0
    min_eigenvalue: float = float("nan")
    n_samples: int = 0
    violations: int | None = None
    min_f: float | None = None
    lower_bound_gap: float | None = None
    oracle_lo: float | None = None
    oracle_hi: float | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return not self.certified or (self.violations or 0) > 0


@dataclass
class ToleranceReport:
    name: str
    dof: int
    cone_order: int
    seed: int
    n_samples: int
    constraints: list[ConstraintResult]
    lam_min: float
    combined_violations: int | None = None
    combined_min_f: float | None = None
    total_time_s: float = 0.0
    warnings: list[str] = field(default_factory=list)
    combined_samples: SampleReport | None = field(default=None, repr=False, compare=False)

    @property
    def verified(self) -> bool:
        return self.combined_violations is not None

    @property
    def failed(self) -> bool:
        return any(c.failed for c in self.constraints) or (self.combined_violations or 0) > 0

    @property
    def exit_code(self) -> int:
        if self.failed:
            return 3
        if self.warnings or any(c.warnings for c in self.constraints):
            return 2
        return 0

    def all_warnings(self) -> list[str]:
        out = [f"{c.name}: {w}" for c in self.constraints for w in c.warnings]
        return out + list(self.warnings)


def _solve_one(spec: ProblemSpec, index: int) -> ConstraintResult:
    c: HalfPlaneConstraint = spec.constraints[index]
    n = spec.dof
    t0 = time.perf_counter()
    lb = certified_lower_bound(c, spec.robot, spec.reference, spec.max_y_degree, spec.taylor_allowance)
    g = lb.poly
    ys = deviation_vars(n)
    logger.debug("[%s] 1 lower bound g: %d terms, y-degree %d, truncation bound %s, allowance %s", c.name, len(g),
                 g.degree(ys), lb.truncation_bound.to_string(4), lb.allowance.to_string(4))
    gens = build_refute_generators(g, n)
    logger.debug("[%s] 2 refute generators: gamma_0 = -g plus %d box generators", c.name, gens.n)
    terms = enumerate_cone_terms(gens, spec.cone_order)
    logger.debug("[%s] 3 cone terms (order %d): %d", c.name, spec.cone_order, len(terms))
    p0 = assemble_p0(terms)
    logger.debug("[%s] 4 p0: %d terms, y-degree %d", c.name, len(p0), p0.degree(ys))
    result = ConstraintResult(c.name, 0.0, INFEASIBLE, False, 0.0, spec.cone_order)
    try:
        full = build_gram(p0, n)
    except GramError as exc:
        result.time_s = time.perf_counter() - t0
        result.warnings.append(f"no Gram decomposition: {exc}")
        logger.debug("[%s] 5 gram failed: %s", c.name, exc)
        return result
    gram = reduce_gram(full)
    logger.debug("[%s] 5 gram %dx%d, reduced to %dx%d with %d free multipliers", c.name, full.size, full.size,
                 gram.size, gram.size, len(gram.multipliers))
    problem = NlpProblem(gram)
    sol = solve_nlp(problem, spec.solver)
    logger.debug("[%s] 6 nlp: status %s, lambda %.10g after %d iterations", c.name, sol.status, sol.lam,
                 sol.iterations)
    cert = certify_with_backoff(problem, sol, spec.solver)
    logger.debug("[%s] 7 certification: certified=%s lambda %.10g, min eigenvalue %.3g, %d backoff rounds", c.name,
                 cert.certified, cert.lam, cert.min_eigenvalue, cert.backoff_rounds)
    result.time_s = time.perf_counter() - t0
    result.lam = cert.lam if cert.certified else 0.0
    result.status = cert.status if cert.certified else INFEASIBLE
    result.certified = cert.certified
    result.gram_size = gram.size
    result.gram_size_full = full.size
    result.multipliers = len(gram.multipliers)
    result.iterations = cert.iterations
    result.backoff_rounds = cert.backoff_rounds
    result.min_eigenvalue = cert.min_eigenvalue
    if not cert.certified:
        result.warnings.append("no certified tolerance; contributes lambda = 0")
    if sol.status == MAX_ITER:
        result.warnings.append("solver stopped at the iteration limit")
    if cert.backoff_rounds:
        result.warnings.append(f"PSD post-check needed {cert.backoff_rounds} backoff round(s)")
    if result.lam > SMALL_ANGLE_LIMIT:
        result.warnings.append(f"lambda {result.lam:.4f} exceeds the small-angle region ({SMALL_ANGLE_LIMIT})")

    if spec.samples > 0:
        rep = sample_check([c], spec.robot, spec.reference, result.lam, spec.samples, spec.seed)
        result.n_samples = rep.n_samples
        result.violations = rep.violations
        result.min_f = rep.min_f
        logger.debug("[%s] 8 sample check: %d/%d violations, min f %.6g", c.name, rep.violations, rep.n_samples,
                     rep.min_f)
        if result.lam <= SMALL_ANGLE_LIMIT:
            gap = check_lower_bound(c, spec.robot, spec.reference, max(result.lam, 0.0), spec.samples, spec.seed, g=g)
            result.lower_bound_gap = gap
            logger.debug("[%s] 9 lower-bound sweep: max(g - f) = %.3g", c.name, gap)
            if gap > LOWER_BOUND_TOL:
                result.warnings.append(f"g exceeded f by {gap:.3g} on a sample")
    if spec.oracle:
        est = oracle_lambda(c, spec.robot, spec.reference, spec.grid_per_axis, spec.oracle_tol)
        result.oracle_lo, result.oracle_hi = est.lo, est.hi
        logger.debug("[%s] 10 oracle bracket [%.6f, %.6f] (grid %d per axis)", c.name, est.lo, est.hi,
                     est.grid_per_axis)
        if result.lam > est.hi + ORDERING_TOL:
            result.warnings.append(f"certified lambda {result.lam:.4f} is above the oracle bracket {est.hi:.4f}")
    return result


def _workers(count: int) -> int:
    cap = os.environ.get("JTE_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            logger.warning("ignoring non-integer JTE_THREADS=%r", cap)
    return max(1, min(count, limit))


def run_pipeline(spec: ProblemSpec, *, workers: int | None = None) -> ToleranceReport:
    """Certify every constraint, combine them, and verify the combination."""
    t0 = time.perf_counter()
    k = len(spec.constraints)
    workers = _workers(k) if workers is None else max(1, min(workers, k))
    if logger.isEnabledFor(logging.DEBUG):
        workers = 1  # keep the trace in pipeline order
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_solve_one, [spec] * k, range(k)))
    else:
        results = [_solve_one(spec, i) for i in range(k)]

    warnings = []
    if all(not r.certified for r in results):
        warnings.append("every constraint failed to certify")
    lam_min = combine_constraints([r.lam for r in results])
    report = ToleranceReport(spec.name, spec.dof, spec.cone_order, spec.seed, spec.samples, results, lam_min,
                             warnings=warnings)
    if spec.samples > 0:
        rep = sample_check(spec.constraints, spec.robot, spec.reference, lam_min, spec.samples, spec.seed)
        report.combined_violations = rep.violations
        report.combined_min_f = rep.min_f
        report.combined_samples = rep
        logger.debug("combined check at lambda_min %.6f: %d/%d violations, min f %.6g", lam_min, rep.violations,
                     rep.n_samples, rep.min_f)
    report.total_time_s = time.perf_counter() - t0
    return report


def verify_only(spec: ProblemSpec, lam: float) -> SampleReport:
    """Sampling check of a given tolerance with every constraint active."""
    n = spec.samples if spec.samples > 0 else 10000
    return sample_check(spec.constraints, spec.robot, spec.reference, lam, n, spec.seed)


def oracle_only(spec: ProblemSpec) -> list[tuple[str, float, float]]:
    out = []
    for c in spec.constraints:
        est = oracle_lambda(c, spec.robot, spec.reference, spec.grid_per_axis, spec.oracle_tol)
        out.append((c.name, est.lo, est.hi))
    est = oracle_lambda(list(spec.constraints), spec.robot, spec.reference, spec.grid_per_axis, spec.oracle_tol)
    out.append(("all", est.lo, est.hi))
    return out


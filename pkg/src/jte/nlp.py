"""Leading-minor nonlinear program over the Gram matrix, plus PSD post-check.

The program maximizes ``lambda`` subject to ``det(Q_k) >= 0`` for every
leading principal block of ``Q(lambda, alpha)`` and ``alpha >= 0``. It is
solved with a log-barrier interior-point loop: iterates keep every leading
minor strictly positive, the inner problems are minimized with BFGS on
central finite-difference gradients, and the barrier weight shrinks
geometrically. Positive leading minors only certify definiteness of the
iterate itself; the eigenvalue check in :func:`post_check_psd` is what
decides whether a solution is reported as certified.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .sos_core import GramProblem, multiplier_subset

logger = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITER = "max-iter"
INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 20000
    inner_max_iter: int = 400
    max_outer: int = 60
    tol: float = 1e-8
    mu0: float = 1.0
    mu_factor: float = 0.2
    mu_min: float = 1e-12
    lambda0: float = 1e-3
    alpha_single: float = 0.1
    alpha_multi: float = 0.01
    alpha_max: float = 1e4
    lambda_cap: float = 1.0
    fd_step: float = 1e-6
    psd_tol: float = 1e-8
    backoff_rounds: int = 10
    backoff_factor: float = 0.95
    phase1_restarts: int = 3
    seed: int = 0


@dataclass(frozen=True)
class NlpProblem:
    """Leading-minor program built on a Gram problem."""

    gram: GramProblem

    @property
    def decision_vars(self):
        return self.gram.decision_vars

    @property
    def weights(self) -> np.ndarray:
        return self.gram.weights

    @property
    def num_minor_constraints(self) -> int:
        return self.gram.size

    def objective(self, point) -> float:
        return float(self.weights @ self.gram.point_vector(point))

    def minors(self, point) -> np.ndarray:
        return eval_minors(self.gram, point)


@dataclass(frozen=True)
class NlpSolution:
    lam: float
    point: np.ndarray
    alpha: dict
    status: str
    iterations: int = 0
    objective_trace: tuple = ()
    backoff_rounds: int = 0
    certified: bool | None = None
    min_eigenvalue: float | None = None


@dataclass(frozen=True)
class PsdCheck:
    certified: bool
    min_eigenvalue: float


# --------------------------------------------------------------------------- minors


def leading_minors(Q: np.ndarray) -> np.ndarray:
    """All leading principal minors from one elimination pass (product of pivots).

    No row exchanges are made, so a zero pivot means the corresponding
    leading block is singular; its minor is reported as 0 and the remaining
    minors are computed directly.
    """
    Q = np.asarray(Q, dtype=float)
    N = Q.shape[0]
    A = Q.copy()
    out = np.empty(N)
    det = 1.0
    for k in range(N):
        p = A[k, k]
        if p == 0.0:
            out[k] = 0.0
            for kk in range(k + 1, N):
                out[kk] = np.linalg.det(Q[: kk + 1, : kk + 1])
            return out
        det *= p
        out[k] = det
        if k + 1 < N:
            A[k + 1:, k + 1:] -= np.outer(A[k + 1:, k], A[k, k + 1:]) / p
    return out


def _log_minor_sum(Q: np.ndarray) -> float:
    """sum_k log det(Q_k); +inf signalled as None when some minor is not positive."""
    N = Q.shape[0]
    A = Q.copy()
    total = 0.0
    for k in range(N):
        p = A[k, k]
        if not p > 0.0:
            return None
        total += (N - k) * math.log(p)
        if k + 1 < N:
            A[k + 1:, k + 1:] -= np.outer(A[k + 1:, k], A[k, k + 1:]) / p
    return total


def eval_minors(gram: GramProblem, point) -> np.ndarray:
    return leading_minors(gram.numeric(point))


def minor_directional_derivatives(gram: GramProblem, point, direction) -> np.ndarray:
    """Exact derivative of each leading minor along ``direction`` (Jacobi's formula)."""
    v = gram.point_vector(point)
    d = np.asarray(direction, dtype=float)
    Q = gram.numeric(v)
    assignment = {var.name: val for var, val in zip(gram.decision_vars, v)}
    dQ = np.zeros_like(Q)
    for var, dv in zip(gram.decision_vars, d):
        if dv == 0.0:
            continue
        for i, row in enumerate(gram.derivative(var)):
            for j, e in enumerate(row):
                if not e.is_zero():
                    dQ[i, j] += dv * e.evaluate(assignment)
    out = np.empty(gram.size)
    for k in range(1, gram.size + 1):
        Qk = Q[:k, :k]
        adj = np.linalg.det(Qk) * np.linalg.inv(Qk)
        out[k - 1] = np.trace(adj @ dQ[:k, :k])
    return out


def min_eigenvalue(Q: np.ndarray) -> float:
    Q = np.asarray(Q, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (Q + Q.T))[0])


def check_psd(Q: np.ndarray, tol: float) -> PsdCheck:
    lam_min = min_eigenvalue(Q)
    return PsdCheck(lam_min >= -tol, lam_min)


def post_check_psd(gram: GramProblem, solution: NlpSolution, tol: float = 1e-8) -> PsdCheck:
    return check_psd(gram.numeric(solution.point), tol)


# --------------------------------------------------------------------------- barrier machinery


def initial_point(gram: GramProblem, opts: SolverOptions, lam: float | None = None) -> np.ndarray:
    v = [opts.lambda0 if lam is None else lam]
    for var in gram.multipliers:
        v.append(opts.alpha_single if len(multiplier_subset(var)) == 1 else opts.alpha_multi)
    return np.array(v, dtype=float)


class _Barrier:
    """Barrier function in log coordinates for the positive decision variables.

    ``free`` selects which decision variables move; ``shift`` adds the
    phase-one variable ``s`` (Q + s I must stay definite).
    """

    def __init__(self, gram, opts, base: np.ndarray, free: np.ndarray, objective: str):
        self.gram = gram
        self.opts = opts
        self.base = base.copy()
        self.free = free
        self.objective = objective  # "lambda", "shift" or "center"
        self.evals = 0

    def unpack(self, u):
        v = self.base.copy()
        nf = int(self.free.sum())
        v[self.free] = np.exp(u[:nf])
        s = u[nf] if self.objective == "shift" else 0.0
        return v, s

    def pack(self, v, s=None):
        u = np.log(v[self.free])
        if self.objective == "shift":
            u = np.append(u, s)
        return u

    def __call__(self, u, mu):
        self.evals += 1
        v, s = self.unpack(u)
        if not np.all(np.isfinite(v)):
            return math.inf
        lam, alpha = v[0], v[1:]
        opts = self.opts
        if np.any(alpha >= opts.alpha_max) or lam >= opts.lambda_cap or np.any(v <= 0.0):
            return math.inf
        Q = self.gram.numeric(v)
        if s:
            Q = Q + s * np.eye(Q.shape[0])
        logs = _log_minor_sum(Q)
        if logs is None:
            return math.inf
        barrier = logs + np.log(v[self.free]).sum() + np.log(opts.alpha_max - alpha).sum()
        if self.free[0]:
            barrier += math.log(opts.lambda_cap - lam)
        if self.objective == "lambda":
            obj = -lam
        elif self.objective == "shift":
            obj = s
        else:
            obj = 0.0
        return obj - mu * barrier


def _fd_gradient(fun, u, f0, step):
    g = np.empty_like(u)
    for i in range(u.size):
        h = step * (1.0 + abs(u[i]))
        for _ in range(8):
            e = np.zeros_like(u)
            e[i] = h
            fp, fm = fun(u + e), fun(u - e)
            if math.isfinite(fp) and math.isfinite(fm):
                g[i] = (fp - fm) / (2.0 * h)
                break
            if math.isfinite(fp):
                g[i] = (fp - f0) / h
                break
            if math.isfinite(fm):
                g[i] = (f0 - fm) / h
                break
            h *= 0.1
        else:
            g[i] = 0.0
    return g


def _bfgs(fun, u0, max_iter, step, stop=None):
    """Quasi-Newton descent with backtracking that never leaves the barrier domain."""
    u = u0.copy()
    f = fun(u)
    g = _fd_gradient(fun, u, f, step)
    H = np.eye(u.size)
    stalls = 0
    it = 0
    for it in range(1, max_iter + 1):
        p = -H @ g
        slope = g @ p
        if not slope < 0.0:
            H = np.eye(u.size)
            p = -g
            slope = g @ p
            if not slope < 0.0:
                break
        big = np.abs(p).max()
        if big > 1.0:
            p = p / big
            slope = g @ p
        t = 1.0
        accepted = False
        for _ in range(60):
            f_new = fun(u + t * p)
            if math.isfinite(f_new) and f_new <= f + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        s = t * p
        u_new = u + s
        g_new = _fd_gradient(fun, u_new, f_new, step)
        yv = g_new - g
        sy = s @ yv
        if sy > 1e-16:
            rho = 1.0 / sy
            I = np.eye(u.size)
            H = (I - rho * np.outer(s, yv)) @ H @ (I - rho * np.outer(yv, s)) + rho * np.outer(s, s)
        small = abs(f - f_new) <= 1e-15 * (1.0 + abs(f))
        u, f, g = u_new, f_new, g_new
        if stop is not None and stop(u):
            break
        stalls = stalls + 1 if small else 0
        if stalls >= 3 or np.abs(g).max() < 1e-12 or np.abs(s).max() < 1e-14:
            break
    return u, f, it


def _phase_one(gram, v0, free, opts, budget):
    """Find v with every leading minor of Q(v) strictly positive."""
    Q0 = gram.numeric(v0)
    if _log_minor_sum(Q0) is not None:
        return v0, 0
    model = _Barrier(gram, opts, v0, free, "shift")
    s0 = max(0.0, -min_eigenvalue(Q0)) + 1.0
    u = model.pack(v0, s0)
    used = 0
    mu = opts.mu0

    def strictly_feasible(uu):
        v, s = model.unpack(uu)
        return s < 0.0 and _log_minor_sum(gram.numeric(v)) is not None

    for _ in range(opts.max_outer):
        u, _, it = _bfgs(lambda x: model(x, mu), u, min(opts.inner_max_iter, budget - used), opts.fd_step,
                         stop=strictly_feasible)
        used += it
        if strictly_feasible(u):
            return model.unpack(u)[0], used
        if used >= budget or mu < opts.mu_min:
            break
        mu *= opts.mu_factor
    return None, used


def _solution(gram, v, status, iterations, trace, **kw) -> NlpSolution:
    alpha = {var.name: float(x) for var, x in zip(gram.multipliers, v[1:])}
    alpha.update({var.name: 0.0 for var in gram.fixed})
    return NlpSolution(float(v[0]), np.asarray(v, dtype=float), alpha, status, iterations, tuple(trace), **kw)


def _infeasible(gram, iterations, **kw) -> NlpSolution:
    v = np.zeros(1 + len(gram.multipliers))
    return _solution(gram, v, INFEASIBLE, iterations, (), **kw)


def solve_nlp(problem: NlpProblem, opts: SolverOptions | None = None, *, fixed_lambda: float | None = None,
              start=None) -> NlpSolution:
    """Maximize lambda (or, with ``fixed_lambda``, center the multipliers).

    Deterministic for fixed options: the only randomness is the seeded
    restart sequence used when the default start yields no strictly
    feasible point.
    """
    opts = opts or SolverOptions()
    gram = problem.gram
    nv = 1 + len(gram.multipliers)
    free = np.ones(nv, dtype=bool)
    if fixed_lambda is not None:
        free[0] = False
    if start is not None:
        v0 = gram.point_vector(start).copy()
        v0[1:] = np.clip(v0[1:], 1e-8, opts.alpha_max * 0.5)
    else:
        v0 = initial_point(gram, opts)
    if fixed_lambda is not None:
        v0[0] = fixed_lambda
        if fixed_lambda <= 0.0:
            raise ValueError("fixed lambda must be positive")

    # phase one runs with lambda held at its start value
    p1_free = free.copy()
    p1_free[0] = False
    rng = np.random.default_rng(opts.seed)
    used = 0
    v = None
    for attempt in range(opts.phase1_restarts + 1):
        trial = v0.copy()
        if attempt:
            trial[1:] = np.exp(np.log(v0[1:]) + rng.normal(0.0, 2.0, size=nv - 1))
            trial[1:] = np.minimum(trial[1:], opts.alpha_max * 0.5)
        v, it = _phase_one(gram, trial, p1_free, opts, opts.max_iter - used)
        used += it
        if v is not None or used >= opts.max_iter:
            break
    if v is None:
        logger.info("no strictly feasible start found (%d iterations)", used)
        return _infeasible(gram, used)

    if fixed_lambda is not None:
        model = _Barrier(gram, opts, v, free, "center")
        u, _, it = _bfgs(lambda x: model(x, 1.0), model.pack(v), opts.inner_max_iter, opts.fd_step)
        used += it
        v = model.unpack(u)[0]
        return _solution(gram, v, CONVERGED, used, (-v[0],))

    model = _Barrier(gram, opts, v, free, "lambda")
    u = model.pack(v)
    mu = opts.mu0
    trace = []
    status = MAX_ITER
    prev = None
    for stage in range(opts.max_outer):
        budget = min(opts.inner_max_iter, opts.max_iter - used)
        if budget <= 0:
            break
        u, _, it = _bfgs(lambda x: model(x, mu), u, budget, opts.fd_step)
        used += it
        lam = model.unpack(u)[0][0]
        trace.append(-lam)
        logger.debug("stage %d mu=%.1e lambda=%.10f (%d its)", stage, mu, lam, it)
        if prev is not None and abs(lam - prev) < opts.tol and mu < 1e-6:
            status = CONVERGED
            break
        if mu <= opts.mu_min:
            status = CONVERGED
            break
        prev = lam
        mu *= opts.mu_factor
    v = model.unpack(u)[0]
    return _solution(gram, v, status, used, trace)


def certify_with_backoff(problem: NlpProblem, solution: NlpSolution, opts: SolverOptions | None = None) -> NlpSolution:
    """Return a solution whose Q passes the eigenvalue check, shrinking lambda if needed."""
    opts = opts or SolverOptions()
    gram = problem.gram
    if solution.status == INFEASIBLE:
        return replace(solution, certified=False)
    check = post_check_psd(gram, solution, opts.psd_tol)
    if check.certified:
        return replace(solution, certified=True, min_eigenvalue=check.min_eigenvalue)
    logger.info("PSD post-check rejected lambda=%.6g (min eigenvalue %.3g)", solution.lam, check.min_eigenvalue)
    lam = solution.lam
    used = solution.iterations
    for rnd in range(1, opts.backoff_rounds + 1):
        lam *= opts.backoff_factor
        if lam <= 0.0:
            break
        sol = solve_nlp(problem, opts, fixed_lambda=lam, start=solution.point)
        used += sol.iterations
        if sol.status == INFEASIBLE:
            continue
        check = post_check_psd(gram, sol, opts.psd_tol)
        if check.certified:
            return replace(sol, iterations=used, backoff_rounds=rnd, certified=True,
                           min_eigenvalue=check.min_eigenvalue, objective_trace=solution.objective_trace)
    return _infeasible(gram, used, backoff_rounds=opts.backoff_rounds, certified=False)

"""
Fast primal-dual gradient method: accelerated dual updates with primal
averaging, an online stopping criterion and certified per-iteration
bounds.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .core import (
    STATUS_CONVERGED,
    STATUS_ITERATION_CAP,
    STATUS_NUMERICAL_FAILURE,
    BoundParams,
    DualPoint,
    PrimalPoint,
    SolveReport,
    Tolerances,
    TraceRow,
    accel_coefficients,
    positive_part,
    project_onto_lambda,
)

DEFAULT_MAX_ITER = 10 ** 6


@dataclass(frozen=True)
class AccelState:
    """Running state of the accelerated scheme at iteration k.

    ``grad_accum`` is the weighted gradient sum over iterations 0..k,
    ``x_hat`` the matching weighted average of the inner solutions and
    ``c_k`` the weight total. ``lam_next`` is the extrapolated point the
    next iteration will linearize at.
    """

    k: int
    lam: DualPoint
    eta: DualPoint
    zeta: DualPoint
    grad_accum: DualPoint
    x_hat: PrimalPoint
    c_k: float
    lam_next: DualPoint


def eta_step(oracle, lam: DualPoint, lipschitz: float,
             grad: Optional[DualPoint] = None) -> DualPoint:
    """Projected gradient step: the exact minimizer over the dual
    feasible set of the quadratic model around ``lam``.

    ``grad`` may carry a precomputed dual gradient at ``lam``.
    """
    if grad is None:
        grad = oracle.dual_gradient(lam)
    return project_onto_lambda(lam - (1.0 / lipschitz) * grad)


def zeta_step(grad_accum: DualPoint, lipschitz: float) -> DualPoint:
    """Minimizer over the dual feasible set of the accumulated linear
    model plus (L/2)||lambda||^2; constants are irrelevant to the argmin
    and are not tracked.
    """
    return project_onto_lambda((-1.0 / lipschitz) * grad_accum)


def iterate_states(oracle, lipschitz: Optional[float] = None) -> Iterator[AccelState]:
    """Generate the accelerated iteration from lambda_0 = 0.

    Yields one :class:`AccelState` per iteration; consumers decide when
    to stop. Raises FloatingPointError if the oracle output turns
    non-finite.
    """
    lip = oracle.lipschitz if lipschitz is None else lipschitz
    lam = oracle.zero_dual()
    grad_accum = oracle.zero_dual()
    x_hat = None
    k = 0
    while True:
        alpha, c_k, tau = accel_coefficients(k)
        x_lam = oracle.inner_solution(lam)
        grad = oracle.dual_gradient(lam)
        eta = eta_step(oracle, lam, lip, grad=grad)
        grad_accum = grad_accum + alpha * grad
        zeta = zeta_step(grad_accum, lip)
        lam_next = tau * zeta + (1.0 - tau) * eta
        if x_hat is None:
            x_hat = x_lam
        else:
            # tau_{k-1} = alpha_k / C_k for the running averages
            w = alpha / c_k
            x_hat = (1.0 - w) * x_hat + w * x_lam
        yield AccelState(k=k, lam=lam, eta=eta, zeta=zeta, grad_accum=grad_accum,
                         x_hat=x_hat, c_k=c_k, lam_next=lam_next)
        lam = lam_next
        k += 1


def _criteria_met(tol: Tolerances, gap: float, eq_res: float, in_res: float,
                  m1: int, m2: int) -> bool:
    if gap > tol.eps_f_tilde:
        return False
    if m1 > 0 and tol.eps_eq_tilde is not None and eq_res > tol.eps_eq_tilde:
        return False
    if m2 > 0 and tol.eps_in_tilde is not None and in_res > tol.eps_in_tilde:
        return False
    return True


def solve(oracle, tol: Tolerances, max_iter: Optional[int] = None,
          bounds: Optional[BoundParams] = None, timing: bool = False) -> SolveReport:
    """Run the fast primal-dual gradient method until the online
    stopping criterion holds.

    Parameters
    ----------
    oracle : problem oracle
        Supplies the dual oracle and the Lipschitz constant.
    tol : Tolerances
        Stopping thresholds; equality/inequality clauses are vacuous
        when the problem has no constraints of that type.
    max_iter : int, optional
        Iteration cap. Defaults to 10 * N_stop when ``bounds`` are
        given, otherwise 10**6.
    bounds : BoundParams, optional
        Dual-norm bounds; when given, the certified per-iteration bound
        is recorded in the trace and violations of the two certified
        inequalities are counted in ``report.meta["bound_violations"]``.
    timing : bool
        Record per-iteration wall time in the trace (off by default so
        traces are deterministic).

    Returns
    -------
    SolveReport
    """
    if max_iter is None:
        max_iter = 10 * iteration_bounds(bounds, tol)[0] if bounds is not None \
            else DEFAULT_MAX_ITER
    trace: list[TraceRow] = []
    violations = 0
    status = STATUS_ITERATION_CAP
    state = None
    gap = eq_res = in_res = math.nan
    phi_eta = f_hat = math.nan
    t_prev = time.perf_counter_ns() if timing else 0

    try:
        for state in iterate_states(oracle):
            phi_eta = oracle.dual_value(state.eta)
            f_hat = oracle.f_value(state.x_hat)
            eq_vals, in_vals = oracle.constraint_values(state.x_hat)
            gap = abs(f_hat + phi_eta)
            eq_res = float(np.linalg.norm(eq_vals)) if eq_vals.size else 0.0
            in_res = float(np.linalg.norm(positive_part(in_vals))) if in_vals.size else 0.0
            if not all(map(math.isfinite, (phi_eta, f_hat, gap))):
                raise FloatingPointError("non-finite oracle output")

            cert = None
            if bounds is not None:
                cert = 2.0 * bounds.lipschitz * bounds.r_sq / state.c_k
                slack = cert * 1e-12
                if gap > cert + slack:
                    violations += 1
                elif bounds.r1 * eq_res + bounds.r2 * in_res > cert + slack:
                    violations += 1

            wall = 0
            if timing:
                t_now = time.perf_counter_ns()
                wall, t_prev = t_now - t_prev, t_now
            trace.append(TraceRow(k=state.k, phi=phi_eta, f_primal=f_hat, gap=gap,
                                  eq_res=eq_res, in_res=in_res, cert_bound=cert,
                                  wall_ns=wall))

            if _criteria_met(tol, gap, eq_res, in_res, oracle.m1, oracle.m2):
                status = STATUS_CONVERGED
                break
            if state.k + 1 >= max_iter:
                status = STATUS_ITERATION_CAP
                break
    except (FloatingPointError, ValueError):
        status = STATUS_NUMERICAL_FAILURE

    if state is None:
        return SolveReport(status=STATUS_NUMERICAL_FAILURE, iterations=0,
                           final_gap=math.nan, final_eq_residual=math.nan,
                           final_in_residual=math.nan,
                           primal=np.full(oracle.n, math.nan),
                           dual=oracle.zero_dual(), trace=[],
                           meta={"bound_violations": violations})
    return SolveReport(status=status, iterations=len(trace),
                       final_gap=gap, final_eq_residual=eq_res,
                       final_in_residual=in_res, primal=state.x_hat,
                       dual=state.eta, trace=trace,
                       meta={"bound_violations": violations})


def stop_bound_terms(bounds: BoundParams, tol: Tolerances) -> list[float]:
    """Pre-ceiling terms of the a-priori stopping bound.

    One term per applicable stopping clause: sqrt(8 L R^2 / eps_f~),
    sqrt(8 L R^2 / (R1 eps_eq~)) and sqrt(8 L R^2 / (R2 eps_in~)).
    """
    base = 8.0 * bounds.lipschitz * bounds.r_sq
    terms = [math.sqrt(base / tol.eps_f_tilde)]
    if bounds.r1 > 0 and tol.eps_eq_tilde is not None:
        terms.append(math.sqrt(base / (bounds.r1 * tol.eps_eq_tilde)))
    if bounds.r2 > 0 and tol.eps_in_tilde is not None:
        terms.append(math.sqrt(base / (bounds.r2 * tol.eps_in_tilde)))
    return terms


def iteration_bounds(bounds: BoundParams, tol: Tolerances) -> tuple[int, Optional[int]]:
    """A-priori iteration counts (N_stop, N).

    N_stop bounds the iteration at which the online criterion fires for
    the thresholds in ``tol``. N bounds the iteration after which the
    averaged primal point meets target accuracies (eps_f, eps_eq,
    eps_in); it is None when those targets are not set. Terms for
    absent constraint types are omitted.
    """
    n_stop = max(math.ceil(t) for t in stop_bound_terms(bounds, tol)) - 1

    n_sol: Optional[int] = None
    if tol.eps_f is not None:
        base = 8.0 * bounds.lipschitz * bounds.r_sq
        terms = [math.sqrt(2.0 * base / tol.eps_f)]
        if bounds.r1 > 0 and tol.eps_eq is not None:
            terms.append(math.sqrt(base / (bounds.r1 * tol.eps_eq)))
        if bounds.r2 > 0 and tol.eps_in is not None:
            terms.append(math.sqrt(base / (bounds.r2 * tol.eps_in)))
        n_sol = max(math.ceil(t) for t in terms) - 1
    return n_stop, n_sol

"""
Comparison solvers for the equality-constrained duals: alternating
marginal balancing, Fletcher-Reeves conjugate gradients with exact line
search, and a Tikhonov-regularized accelerated dual method.
"""

from __future__ import annotations

import math
import time
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .core import (
    STATUS_CONVERGED,
    STATUS_ITERATION_CAP,
    STATUS_NUMERICAL_FAILURE,
    DualPoint,
    SolveReport,
    Tolerances,
    TraceRow,
)
from .solver import DEFAULT_MAX_ITER, _criteria_met

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class BracketingError(RuntimeError):
    """The exponential search failed to bracket a minimum."""


def line_search_1d(fun: Callable[[float], float],
                   bracket: Optional[tuple[float, float]] = None,
                   tol: float = 1e-10,
                   max_doublings: int = 60) -> float:
    """Minimize a unimodal function of one nonnegative variable.

    Brackets the minimizer by doubling from step 1 (unless ``bracket``
    is supplied), then runs golden-section search until the interval is
    below ``tol`` relative to the scale of the iterate. Returns the best
    evaluated point.
    """
    if bracket is None:
        fa = fun(0.0)
        b, fb = 1.0, fun(1.0)
        if fb >= fa:
            lo, hi = 0.0, 1.0
        else:
            lo = 0.0
            c, fc = 2.0 * b, fun(2.0 * b)
            doublings = 0
            while fc < fb:
                doublings += 1
                if doublings > max_doublings:
                    raise BracketingError(
                        f"no bracket after {max_doublings} doublings")
                lo, b, fb = b, c, fc
                c *= 2.0
                fc = fun(c)
            hi = c
    else:
        lo, hi = bracket
        if not hi > lo:
            raise ValueError("bracket must satisfy lo < hi")

    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1, f2 = fun(x1), fun(x2)
    while hi - lo > tol * max(1.0, abs(lo), abs(hi)):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = fun(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = fun(x2)
    return x1 if f1 <= f2 else x2


def _residuals(oracle, x) -> tuple[float, float, np.ndarray, np.ndarray]:
    eq_vals, in_vals = oracle.constraint_values(x)
    eq_res = float(np.linalg.norm(eq_vals)) if eq_vals.size else 0.0
    in_res = float(np.linalg.norm(np.maximum(in_vals, 0.0))) if in_vals.size else 0.0
    return eq_res, in_res, eq_vals, in_vals


def _report(status, trace, primal, dual, meta) -> SolveReport:
    last = trace[-1] if trace else None
    return SolveReport(
        status=status, iterations=len(trace),
        final_gap=last.gap if last else math.nan,
        final_eq_residual=last.eq_res if last else math.nan,
        final_in_residual=last.in_res if last else math.nan,
        primal=primal, dual=dual, trace=trace, meta=meta)


def sinkhorn_balance(rot, tol: Tolerances, max_iter: Optional[int] = None,
                     timing: bool = False) -> SolveReport:
    """Alternating marginal balancing for the entropic transport
    instance, run entirely in the log domain.

    One iteration is one full row+column sweep. After each sweep the
    scaled plan is compared against both marginals and the duality-gap
    surrogate is evaluated at the recovered dual point; the run stops
    when both fall below the thresholds in ``tol``. The additive gauge
    freedom of the potentials is fixed by centering the log row
    scalings at mean zero.
    """
    if rot.m2 != 0:
        raise ValueError("balancing applies to the equality-constrained instance")
    if np.any(rot.a1 <= 0) or np.any(rot.a2 <= 0):
        raise ValueError("balancing requires strictly positive marginals")
    if max_iter is None:
        max_iter = DEFAULT_MAX_ITER
    p = rot.p
    gamma = rot.gamma
    log_kernel = -rot.cost / gamma
    log_a1, log_a2 = np.log(rot.a1), np.log(rot.a2)
    log_u = np.zeros(p)
    log_v = np.zeros(p)
    trace: list[TraceRow] = []
    status = STATUS_ITERATION_CAP
    x = np.full(rot.n, math.nan)
    lam = rot.zero_dual()
    t_prev = time.perf_counter_ns() if timing else 0

    try:
        for k in range(max_iter):
            log_u = log_a1 - logsumexp(log_kernel + log_v[None, :], axis=1)
            log_v = log_a2 - logsumexp(log_kernel + log_u[:, None], axis=0)
            log_plan = log_u[:, None] + log_kernel + log_v[None, :]
            x = np.exp(log_plan).ravel()
            shift = log_u.mean()
            lam = DualPoint(-gamma * np.concatenate([log_u - shift, log_v + shift]),
                            np.zeros(0))
            phi = rot.dual_value(lam)
            f_val = rot.f_value(x)
            gap = abs(f_val + phi)
            eq_res, in_res, _, _ = _residuals(rot, x)
            if not all(map(math.isfinite, (phi, f_val, gap, eq_res))):
                raise FloatingPointError("balancing produced non-finite values")
            wall = 0
            if timing:
                t_now = time.perf_counter_ns()
                wall, t_prev = t_now - t_prev, t_now
            trace.append(TraceRow(k=k, phi=phi, f_primal=f_val, gap=gap,
                                  eq_res=eq_res, in_res=in_res, wall_ns=wall))
            if _criteria_met(tol, gap, eq_res, in_res, rot.m1, rot.m2):
                status = STATUS_CONVERGED
                break
    except (FloatingPointError, ValueError):
        status = STATUS_NUMERICAL_FAILURE

    return _report(status, trace, x, lam, {})


def cgm_fletcher_reeves(oracle, tol: Tolerances, max_iter: Optional[int] = None,
                        timing: bool = False) -> SolveReport:
    """Fletcher-Reeves conjugate gradients on the dual function, with
    the step chosen by one-dimensional minimization along the search
    direction.

    Applies to equality-constrained duals only (the multiplier set is a
    full space). The direction resets to steepest descent every m1
    iterations and whenever it stops being a descent direction; resets
    of the second kind are counted in ``meta["restarts"]``.
    """
    if oracle.m2 != 0:
        raise ValueError("conjugate gradients require an equality-constrained dual")
    if max_iter is None:
        max_iter = DEFAULT_MAX_ITER
    lam = np.zeros(oracle.m1)
    d = None
    g_prev_sq = 0.0
    restarts = 0
    trace: list[TraceRow] = []
    status = STATUS_ITERATION_CAP
    x = np.full(oracle.n, math.nan)
    t_prev = time.perf_counter_ns() if timing else 0

    def phi_at(vec: np.ndarray) -> float:
        return oracle.dual_value(DualPoint(vec, np.zeros(0)))

    try:
        for k in range(max_iter):
            point = DualPoint(lam, np.zeros(0))
            x = oracle.inner_solution(point)
            phi = oracle.dual_value(point)
            f_val = oracle.f_value(x)
            gap = abs(f_val + phi)
            eq_res, in_res, eq_vals, _ = _residuals(oracle, x)
            if not all(map(math.isfinite, (phi, f_val, gap, eq_res))):
                raise FloatingPointError("non-finite oracle output")
            wall = 0
            if timing:
                t_now = time.perf_counter_ns()
                wall, t_prev = t_now - t_prev, t_now
            trace.append(TraceRow(k=k, phi=phi, f_primal=f_val, gap=gap,
                                  eq_res=eq_res, in_res=in_res, wall_ns=wall))
            if _criteria_met(tol, gap, eq_res, in_res, oracle.m1, oracle.m2):
                status = STATUS_CONVERGED
                break

            g = -eq_vals  # dual gradient: b1 - A1 x(lam)
            g_sq = float(g @ g)
            if d is None or k % oracle.m1 == 0:
                d = -g
            else:
                beta = g_sq / g_prev_sq
                d = -g + beta * d
                if g @ d >= 0:
                    d = -g
                    restarts += 1
            g_prev_sq = g_sq
            step = line_search_1d(lambda t: phi_at(lam + t * d))
            lam = lam + step * d
    except (FloatingPointError, ValueError):
        status = STATUS_NUMERICAL_FAILURE

    return _report(status, trace, x, DualPoint(lam, np.zeros(0)),
                   {"restarts": restarts})


def reg_dual_fgm(oracle, tol: Tolerances, max_iter: Optional[int] = None,
                 delta: Optional[float] = None, timing: bool = False) -> SolveReport:
    """Accelerated gradient descent on the Tikhonov-regularized dual
    phi(lambda) + (delta/2) ||lambda||^2.

    With ``delta=None`` the regularization weight is derived from the
    stopping threshold and a running estimate of the multiplier norm,
    delta = eps_f~ / (8 R_est^2) with R_est = max(1, 2 ||lambda_k||);
    the estimate only grows, so delta only shrinks. There is no restart
    schedule. ``delta=0`` degenerates to the plain accelerated method
    on the dual.
    """
    if oracle.m2 != 0:
        raise ValueError("regularized dual method requires an equality-constrained dual")
    if max_iter is None:
        max_iter = DEFAULT_MAX_ITER
    lip = oracle.lipschitz
    lam = np.zeros(oracle.m1)
    y = lam.copy()
    t_momentum = 1.0
    r_est = 1.0
    adaptive = delta is None
    cur_delta = tol.eps_f_tilde / (8.0 * r_est ** 2) if adaptive else float(delta)
    trace: list[TraceRow] = []
    status = STATUS_ITERATION_CAP
    x = np.full(oracle.n, math.nan)
    t_prev = time.perf_counter_ns() if timing else 0

    try:
        for k in range(max_iter):
            point = DualPoint(lam, np.zeros(0))
            x = oracle.inner_solution(point)
            phi = oracle.dual_value(point)
            f_val = oracle.f_value(x)
            gap = abs(f_val + phi)
            eq_res, in_res, _, _ = _residuals(oracle, x)
            if not all(map(math.isfinite, (phi, f_val, gap, eq_res))):
                raise FloatingPointError("non-finite oracle output")
            wall = 0
            if timing:
                t_now = time.perf_counter_ns()
                wall, t_prev = t_now - t_prev, t_now
            trace.append(TraceRow(k=k, phi=phi, f_primal=f_val, gap=gap,
                                  eq_res=eq_res, in_res=in_res, wall_ns=wall))
            if _criteria_met(tol, gap, eq_res, in_res, oracle.m1, oracle.m2):
                status = STATUS_CONVERGED
                break

            if adaptive:
                r_est = max(r_est, 2.0 * float(np.linalg.norm(lam)))
                cur_delta = tol.eps_f_tilde / (8.0 * r_est ** 2)
            grad_y = oracle.dual_gradient(DualPoint(y, np.zeros(0))).eq_part \
                + cur_delta * y
            lam_next = y - grad_y / (lip + cur_delta)
            if cur_delta > 0:
                q = cur_delta / (lip + cur_delta)
                beta = (1.0 - math.sqrt(q)) / (1.0 + math.sqrt(q))
            else:
                t_next = (1.0 + math.sqrt(1.0 + 4.0 * t_momentum ** 2)) / 2.0
                beta = (t_momentum - 1.0) / t_next
                t_momentum = t_next
            y = lam_next + beta * (lam_next - lam)
            lam = lam_next
    except (FloatingPointError, ValueError):
        status = STATUS_NUMERICAL_FAILURE

    return _report(status, trace, x, DualPoint(lam, np.zeros(0)),
                   {"delta": cur_delta, "adaptive_delta": adaptive})

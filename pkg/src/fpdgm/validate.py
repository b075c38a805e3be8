"""
Built-in correctness checks on small seeded instances: finite-difference
gradient audits, brute-force inner-solution comparisons and the
certified-bound monitor.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from . import bench, solver
from .baselines import sinkhorn_balance
from .core import BoundParams, DualPoint, Tolerances, dual_norm_sq
from .oracles import RotProblem

# Test hook: set FPDGM_TEST_FLIP_GRADIENT=1 to feed the gradient check a
# sign-flipped gradient and confirm the check actually fails.
_FLIP_ENV = "FPDGM_TEST_FLIP_GRADIENT"


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _project_simplex(v: np.ndarray, total: float = 1.0) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = total} (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    idx = np.arange(1, v.size + 1)
    cond = u - css / idx > 0
    rho = idx[cond][-1]
    theta = css[cond][-1] / rho
    return np.maximum(v - theta, 0.0)


def _pga_inner_maximizer(oracle, lam: DualPoint, steps: int = 100_000) -> np.ndarray:
    """Projected gradient ascent on the inner problem, with monotone
    step-halving; independent of the closed-form softmax path."""
    lin = oracle.adjoint_map(lam)
    if isinstance(oracle, RotProblem) or oracle.m2 > 0:
        gamma = oracle.gamma
        lin = lin + oracle.cost.ravel()
        total = getattr(oracle, "mass", 1.0)

        def value(x):
            xs = np.maximum(x, 1e-300)
            return -gamma * float(np.sum(xs * np.log(xs))) - float(lin @ x)

        def grad(x):
            return -gamma * (np.log(np.maximum(x, 1e-300)) + 1.0) - lin
    else:
        log_xi = np.log(oracle.xi)
        total = 1.0

        def value(x):
            xs = np.maximum(x, 1e-300)
            return -float(np.sum(xs * (np.log(xs) - log_xi))) - float(lin @ x)

        def grad(x):
            return -(np.log(np.maximum(x, 1e-300)) - log_xi + 1.0) - lin

    x = np.full(oracle.n, total / oracle.n)
    fx = value(x)
    step = 1.0
    for _ in range(steps):
        cand = _project_simplex(x + step * grad(x), total)
        fc = value(cand)
        if fc < fx:
            step *= 0.5
            if step < 1e-18:
                break
            continue
        if np.max(np.abs(cand - x)) < 1e-14 * total:
            x, fx = cand, fc
            break
        x, fx = cand, fc
        step *= 1.2
    return x


def _fd_gradient(oracle, lam: DualPoint, h: float = 1e-6) -> np.ndarray:
    flat = np.concatenate([lam.eq_part, lam.ineq_part])

    def phi(vec):
        return oracle.dual_value(DualPoint(vec[:oracle.m1], vec[oracle.m1:]))

    g = np.zeros_like(flat)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        g[i] = (phi(flat + e) - phi(flat - e)) / (2 * h)
    return g


def _check_instances():
    return [
        ("elp", bench.random_elp_instance(6, 3, 11)),
        ("rot", bench.random_rot_instance(4, 0.5, 12, cost="random")),
        ("ropt", bench.random_ropt_instance(3, 0.5, 13, cost="random")),
    ]


def _random_dual(oracle, rng, scale=0.5) -> DualPoint:
    eq = scale * rng.normal(size=oracle.m1)
    ineq = scale * np.abs(rng.normal(size=oracle.m2))
    return DualPoint(eq, ineq)


def check_gradients(rel_tol: float = 1e-6, n_points: int = 4) -> CheckResult:
    """Central finite differences against the analytic dual gradient."""
    flip = -1.0 if os.environ.get(_FLIP_ENV) == "1" else 1.0
    worst = 0.0
    for name, oracle in _check_instances():
        rng = np.random.default_rng(hash(name) % 2 ** 32)
        for _ in range(n_points):
            lam = _random_dual(oracle, rng)
            g = oracle.dual_gradient(lam)
            analytic = flip * np.concatenate([g.eq_part, g.ineq_part])
            fd = _fd_gradient(oracle, lam)
            mask = np.abs(fd) >= 1e-8
            if not mask.any():
                continue
            rel = np.abs(analytic[mask] - fd[mask]) / np.abs(fd[mask])
            worst = max(worst, float(rel.max()))
    passed = worst <= rel_tol
    return CheckResult("gradient", passed,
                       f"max relative FD mismatch {worst:.3e} (tol {rel_tol:g})")


def check_inner_solutions(tol: float = 1e-8) -> CheckResult:
    """Closed-form inner solutions against projected gradient ascent."""
    worst = 0.0
    for name, oracle in _check_instances():
        rng = np.random.default_rng((hash(name) + 1) % 2 ** 32)
        lam = _random_dual(oracle, rng, scale=0.3)
        closed = oracle.inner_solution(lam)
        brute = _pga_inner_maximizer(oracle, lam)
        worst = max(worst, float(np.max(np.abs(closed - brute))))
    passed = worst <= tol
    return CheckResult("inner", passed,
                       f"max l_inf deviation from brute force {worst:.3e} (tol {tol:g})")


def check_certified_bounds() -> CheckResult:
    """Monitor the certified per-iteration inequalities on a seeded
    transport instance, with multiplier bounds taken from a
    high-accuracy balancing run."""
    oracle = bench.random_rot_instance(4, 0.2, 21, cost="random")
    ref = sinkhorn_balance(oracle, Tolerances(eps_f_tilde=1e-11, eps_eq_tilde=1e-12),
                           max_iter=200_000)
    if not ref.converged:
        return CheckResult("bounds", False, "reference balancing run did not converge")
    r1 = 2.0 * np.sqrt(dual_norm_sq(ref.dual))
    bounds = BoundParams(r1=r1, r2=0.0, lipschitz=oracle.lipschitz)
    tol = bench.relative_tolerances(oracle, 1e-4, 1e-4)
    report = solver.solve(oracle, tol, bounds=bounds)
    violations = report.meta.get("bound_violations", -1)
    passed = report.converged and violations == 0
    return CheckResult("bounds", passed,
                       f"status {report.status}, {violations} certified-bound violations "
                       f"over {report.iterations} iterations")


CHECKS = {
    "gradient": check_gradients,
    "inner": check_inner_solutions,
    "bounds": check_certified_bounds,
}


def run_validation(checks=None) -> list[CheckResult]:
    names = list(CHECKS) if not checks else list(checks)
    results = []
    for name in names:
        if name not in CHECKS:
            raise ValueError(f"unknown check {name!r}")
        results.append(CHECKS[name]())
    return results


def write_results_csv(results: list[CheckResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check", "passed", "detail"])
        for r in results:
            w.writerow([r.name, int(r.passed), r.detail])

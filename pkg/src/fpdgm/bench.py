"""
Experiment harness: seeded instance generation, relative tolerances,
solver sweeps over (n, gamma, eps_rel) grids, CSV persistence and
plot-data emission.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import baselines, solver
from .core import SolveReport, Tolerances
from .oracles import ElpProblem, RotProblem, RoptProblem, ingest_marginal

log = logging.getLogger("fpdgm.bench")

SOLVER_IDS = ("fpdgm", "bal", "cgm", "reg")


def grid_cost_matrix(p: int) -> np.ndarray:
    """Squared Euclidean pairwise distances between the points of a
    sqrt(p) x sqrt(p) integer lattice, in row-major point order."""
    side = math.isqrt(p)
    if side * side != p:
        raise ValueError(f"p={p} is not a perfect square")
    ii, jj = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    pts = np.column_stack([ii.ravel(), jj.ravel()]).astype(np.float64)
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sum(diff ** 2, axis=2)


def random_cost_matrix(p: int, rng: np.random.Generator) -> np.ndarray:
    """Symmetric cost matrix with uniform [0, 1) entries and zero diagonal."""
    c = rng.uniform(size=(p, p))
    c = 0.5 * (c + c.T)
    np.fill_diagonal(c, 0.0)
    return c


def random_marginals(p: int, seed) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Two independent draws from the flat Dirichlet on the p-simplex
    (normalized exponential variates) plus their stack.

    ``seed`` may be anything ``numpy.random.default_rng`` accepts; a
    fixed seed reproduces the draw bitwise.
    """
    rng = np.random.default_rng(seed)
    a1 = rng.exponential(size=p)
    a1 /= a1.sum()
    a2 = rng.exponential(size=p)
    a2 /= a2.sum()
    return a1, a2, np.concatenate([a1, a2])


def random_rot_instance(p: int, gamma: float, seed, cost: str = "grid") -> RotProblem:
    a1, a2, _ = random_marginals(p, seed)
    if cost == "grid":
        c = grid_cost_matrix(p)
    elif cost == "random":
        c = random_cost_matrix(p, np.random.default_rng((0xC057, ) + _seed_tuple(seed)))
    else:
        raise ValueError(f"unknown cost source {cost!r}")
    return RotProblem(c, a1, a2, gamma)


def random_ropt_instance(p: int, gamma: float, seed, cost: str = "grid",
                         mass_fraction: float = 0.5) -> RoptProblem:
    a1, a2, _ = random_marginals(p, seed)
    if cost == "grid":
        c = grid_cost_matrix(p)
    elif cost == "random":
        c = random_cost_matrix(p, np.random.default_rng((0xC057, ) + _seed_tuple(seed)))
    else:
        raise ValueError(f"unknown cost source {cost!r}")
    mass = mass_fraction * min(a1.sum(), a2.sum())
    return RoptProblem(c, a1, a2, mass, gamma)


def random_elp_instance(n: int, m1: int, seed) -> ElpProblem:
    """Random entropy-LP instance with a strictly feasible right-hand
    side (b = A x for an interior simplex point x)."""
    rng = np.random.default_rng(seed)
    xi = rng.uniform(0.2, 2.0, size=n)
    a_mat = rng.normal(size=(m1, n))
    x_feas = rng.exponential(size=n)
    x_feas /= x_feas.sum()
    return ElpProblem(xi, a_mat, a_mat @ x_feas)


def _seed_tuple(seed) -> tuple:
    return tuple(seed) if isinstance(seed, (tuple, list)) else (seed,)


TOLERANCE_FLOOR = 1e-12


def relative_tolerances(oracle, eps_rel_f: float, eps_rel_g: float,
                        floor: float = TOLERANCE_FLOOR) -> Tolerances:
    """Stopping thresholds scaled to the problem at lambda_0 = 0.

    eps_f = eps_rel_f * |f(x(0))|, eps_eq = eps_rel_g * ||A1 x(0) - b1||,
    and analogously for the positive-part inequality residual; a
    constraint type the problem lacks yields no threshold. A threshold
    that comes out zero is reported and replaced by ``floor``.
    """
    x0 = oracle.inner_solution(oracle.zero_dual())
    eq_vals, in_vals = oracle.constraint_values(x0)
    eps_f = eps_rel_f * abs(oracle.f_value(x0))
    eps_eq = eps_rel_g * float(np.linalg.norm(eq_vals)) if oracle.m1 else None
    eps_in = eps_rel_g * float(np.linalg.norm(np.maximum(in_vals, 0.0))) \
        if oracle.m2 else None
    if eps_f == 0.0:
        log.warning("zero objective scale at lambda=0; falling back to %g", floor)
        eps_f = floor
    if eps_eq == 0.0:
        log.warning("zero equality residual at lambda=0; falling back to %g", floor)
        eps_eq = floor
    if eps_in == 0.0:
        log.warning("zero inequality residual at lambda=0; falling back to %g", floor)
        eps_in = floor
    return Tolerances(eps_f_tilde=eps_f, eps_eq_tilde=eps_eq, eps_in_tilde=eps_in)


@dataclass(frozen=True)
class SweepConfig:
    """Grid definition for a solver sweep over ROT instances."""

    families: tuple[str, ...]
    n_list: tuple[int, ...]
    gamma_list: tuple[float, ...]
    eps_rel_list: tuple[float, ...]
    seed: int = 0
    max_iter: Optional[int] = None
    cost: str = "grid"

    def __post_init__(self):
        object.__setattr__(self, "families", tuple(self.families))
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        object.__setattr__(self, "gamma_list", tuple(float(g) for g in self.gamma_list))
        object.__setattr__(self, "eps_rel_list",
                           tuple(float(e) for e in self.eps_rel_list))
        for fam in self.families:
            if fam not in SOLVER_IDS:
                raise ValueError(f"unknown solver id {fam!r}")
        for n in self.n_list:
            if math.isqrt(n) ** 2 != n:
                raise ValueError(f"n={n} is not a perfect square")
        if any(g <= 0 for g in self.gamma_list):
            raise ValueError("gamma values must be positive")
        if any(not 0 < e < 1 for e in self.eps_rel_list):
            raise ValueError("relative accuracies must lie in (0, 1)")

    def cells(self) -> list[tuple[int, float, float]]:
        return [(n, g, e) for n in self.n_list for g in self.gamma_list
                for e in self.eps_rel_list]


@dataclass(frozen=True)
class SweepRecord:
    """One (solver, cell) result row."""

    solver: str
    n: int
    gamma: float
    eps_rel: float
    iterations: int
    wall_ns: int
    gap: float
    eq_res: float
    in_res: float
    status: str


def run_solver(solver_id: str, oracle, tol: Tolerances,
               max_iter: Optional[int] = None) -> SolveReport:
    """Dispatch one solver run by id."""
    if solver_id == "fpdgm":
        return solver.solve(oracle, tol, max_iter=max_iter)
    if solver_id == "bal":
        return baselines.sinkhorn_balance(oracle, tol, max_iter=max_iter)
    if solver_id == "cgm":
        return baselines.cgm_fletcher_reeves(oracle, tol, max_iter=max_iter)
    if solver_id == "reg":
        return baselines.reg_dual_fgm(oracle, tol, max_iter=max_iter)
    raise ValueError(f"unknown solver id {solver_id!r}")


def _run_cell(config: SweepConfig, cell_index: int) -> list[SweepRecord]:
    n, gamma, eps_rel = config.cells()[cell_index]
    p = math.isqrt(n)
    oracle = random_rot_instance(p, gamma, (config.seed, cell_index),
                                 cost=config.cost)
    tol = relative_tolerances(oracle, eps_rel, eps_rel)
    records = []
    for fam in config.families:
        t0 = time.perf_counter_ns()
        try:
            report = run_solver(fam, oracle, tol, max_iter=config.max_iter)
            wall = time.perf_counter_ns() - t0
            records.append(SweepRecord(
                solver=fam, n=n, gamma=gamma, eps_rel=eps_rel,
                iterations=report.iterations, wall_ns=wall,
                gap=report.final_gap, eq_res=report.final_eq_residual,
                in_res=report.final_in_residual, status=report.status))
        except Exception as exc:  # record the failure, keep sweeping
            wall = time.perf_counter_ns() - t0
            log.warning("cell %d solver %s failed: %s", cell_index, fam, exc)
            records.append(SweepRecord(
                solver=fam, n=n, gamma=gamma, eps_rel=eps_rel,
                iterations=0, wall_ns=wall, gap=math.nan, eq_res=math.nan,
                in_res=math.nan, status="error"))
    return records


def run_sweep(config: SweepConfig, jobs: int = 1) -> list[SweepRecord]:
    """Run every requested solver on every grid cell.

    Cells are independent: each draws its marginals from an RNG stream
    seeded by (config.seed, cell index), so results do not depend on
    ``jobs``. Records are returned in canonical cell order.
    """
    indices = range(len(config.cells()))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_cell = list(pool.map(_run_cell, [config] * len(config.cells()),
                                     indices))
    else:
        per_cell = [_run_cell(config, i) for i in indices]
    return [rec for cell in per_cell for rec in cell]


CSV_HEADER = ["solver", "n", "gamma", "eps_rel", "iterations", "wall_ns",
              "gap", "eq_res", "in_res", "status"]


def write_records_csv(records: Sequence[SweepRecord], path,
                      include_timings: bool = False) -> None:
    """Write sweep records as CSV. Timings are zeroed unless requested,
    keeping repeated runs byte-identical."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([r.solver, r.n, repr(r.gamma), repr(r.eps_rel),
                        r.iterations, r.wall_ns if include_timings else 0,
                        repr(r.gap), repr(r.eq_res), repr(r.in_res), r.status])


def read_records_csv(path) -> list[SweepRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            records.append(SweepRecord(
                solver=row["solver"], n=int(row["n"]), gamma=float(row["gamma"]),
                eps_rel=float(row["eps_rel"]), iterations=int(row["iterations"]),
                wall_ns=int(row["wall_ns"]), gap=float(row["gap"]),
                eq_res=float(row["eq_res"]), in_res=float(row["in_res"]),
                status=row["status"]))
    return records


def write_plot_data(records: Sequence[SweepRecord], config: SweepConfig,
                    prefix) -> list[str]:
    """Emit per-solver plain two-column plot files.

    ``<prefix>_<solver>_iters_vs_inv_gamma.txt`` holds (1/gamma,
    iterations) at the first n and first eps_rel of the grid;
    ``<prefix>_<solver>_iters_vs_eps.txt`` holds (eps_rel, iterations)
    at the first n and first gamma.
    """
    prefix = str(prefix)
    written = []
    n0 = config.n_list[0]
    eps0 = config.eps_rel_list[0]
    g0 = config.gamma_list[0]
    for fam in config.families:
        rows = sorted((1.0 / r.gamma, r.iterations) for r in records
                      if r.solver == fam and r.n == n0 and r.eps_rel == eps0)
        path = f"{prefix}_{fam}_iters_vs_inv_gamma.txt"
        with open(path, "w") as fh:
            for inv_gamma, iters in rows:
                fh.write(f"{inv_gamma!r} {iters}\n")
        written.append(path)
        rows = sorted((r.eps_rel, r.iterations) for r in records
                      if r.solver == fam and r.n == n0 and r.gamma == g0)
        path = f"{prefix}_{fam}_iters_vs_eps.txt"
        with open(path, "w") as fh:
            for eps_rel, iters in rows:
                fh.write(f"{eps_rel!r} {iters}\n")
        written.append(path)
    return written


def sweep_config_from_file(path) -> tuple[SweepConfig, Optional[str]]:
    """Load a sweep definition from a JSON config file.

    Returns the config and the optional output path stored under "out".
    """
    with open(path) as fh:
        raw = json.load(fh)
    out = raw.pop("out", None)
    jobs = raw.pop("jobs", None)
    cfg = SweepConfig(**raw)
    if jobs is not None:
        log.info("config requests jobs=%s; pass --jobs on the command line", jobs)
    return cfg, out


def instance_from_spec(spec: dict):
    """Build a problem oracle from a parsed instance description.

    Fields: family (elp|rot|ropt), p or n, gamma, cost (grid|random|file
    path), marginals ("random" or two file paths), seed, and mass for
    the partial-transport family.
    """
    family = spec.get("family")
    seed = spec.get("seed", 0)
    if family == "elp":
        return random_elp_instance(int(spec["n"]), int(spec.get("m1", 1)), seed)
    if family not in ("rot", "ropt"):
        raise ValueError(f"unknown family {spec.get('family')!r}")
    if "p" in spec:
        p = int(spec["p"])
    elif "n" in spec:
        n = int(spec["n"])
        p = math.isqrt(n)
        if p * p != n:
            raise ValueError(f"n={n} is not a perfect square")
    else:
        raise ValueError("instance needs p or n")
    gamma = float(spec["gamma"])
    cost_src = spec.get("cost", "grid")
    if cost_src == "grid":
        cost = grid_cost_matrix(p)
    elif cost_src == "random":
        cost = random_cost_matrix(p, np.random.default_rng((0xC057, ) + _seed_tuple(seed)))
    else:
        cost = np.loadtxt(cost_src)
        if cost.shape != (p, p):
            raise ValueError(f"cost file has shape {cost.shape}, expected ({p},{p})")
    marg = spec.get("marginals", "random")
    if marg == "random":
        a1, a2, _ = random_marginals(p, seed)
    else:
        a1 = ingest_marginal(marg[0])
        a2 = ingest_marginal(marg[1])
        if a1.size != p or a2.size != p:
            raise ValueError("marginal length does not match p")
    if family == "rot":
        return RotProblem(cost, a1, a2, gamma)
    mass = float(spec.get("mass", 0.5 * min(a1.sum(), a2.sum())))
    return RoptProblem(cost, a1, a2, mass, gamma)


def load_instance(path):
    """Build a problem oracle from a JSON instance file."""
    with open(path) as fh:
        return instance_from_spec(json.load(fh))

"""
Dual-space data types, projections, acceleration coefficients and reports
shared by all solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, TypeAlias

import numpy as np
from numpy.typing import NDArray

Vector: TypeAlias = NDArray[np.float64]

# A primal iterate is a plain vector in E (length n); transport plans are
# stored row-major flattened.
PrimalPoint: TypeAlias = Vector


def _as_vector(v) -> Vector:
    return np.atleast_1d(np.asarray(v, dtype=np.float64))


@dataclass(frozen=True)
class DualPoint:
    """A dual point lambda = (eq_part, ineq_part).

    ``eq_part`` collects the multipliers of the equality constraints
    (unrestricted in sign), ``ineq_part`` those of the inequality
    constraints (nonnegative for a point of the dual feasible set).
    Either part may be empty. Instances are immutable.
    """

    eq_part: Vector
    ineq_part: Vector

    def __post_init__(self):
        eq = _as_vector(self.eq_part)
        ineq = _as_vector(self.ineq_part) if np.size(self.ineq_part) else np.zeros(0)
        eq.flags.writeable = False
        ineq.flags.writeable = False
        object.__setattr__(self, "eq_part", eq)
        object.__setattr__(self, "ineq_part", ineq)

    @classmethod
    def zeros(cls, m1: int, m2: int) -> "DualPoint":
        return cls(np.zeros(m1), np.zeros(m2))

    @property
    def m1(self) -> int:
        return self.eq_part.size

    @property
    def m2(self) -> int:
        return self.ineq_part.size

    def __add__(self, other: "DualPoint") -> "DualPoint":
        return DualPoint(self.eq_part + other.eq_part,
                         self.ineq_part + other.ineq_part)

    def __sub__(self, other: "DualPoint") -> "DualPoint":
        return DualPoint(self.eq_part - other.eq_part,
                         self.ineq_part - other.ineq_part)

    def __mul__(self, t: float) -> "DualPoint":
        return DualPoint(t * self.eq_part, t * self.ineq_part)

    __rmul__ = __mul__

    def allclose(self, other: "DualPoint", atol: float = 0.0, rtol: float = 0.0) -> bool:
        return (np.allclose(self.eq_part, other.eq_part, atol=atol, rtol=rtol)
                and np.allclose(self.ineq_part, other.ineq_part, atol=atol, rtol=rtol))


def positive_part(v) -> Vector:
    """Componentwise positive part max(v, 0)."""
    return np.maximum(_as_vector(v), 0.0)


def project_onto_lambda(p: DualPoint) -> DualPoint:
    """Euclidean projection onto the dual feasible set.

    The feasible set is a product of a full space (equality multipliers)
    and the nonnegative orthant (inequality multipliers), so the
    projection is exact: identity on ``eq_part``, componentwise clamp at
    zero on ``ineq_part``. Idempotent and nonexpansive.
    """
    return DualPoint(p.eq_part, positive_part(p.ineq_part))


def dual_norm_sq(p: DualPoint) -> float:
    """Squared Euclidean norm ||eq_part||^2 + ||ineq_part||^2."""
    return float(np.dot(p.eq_part, p.eq_part) + np.dot(p.ineq_part, p.ineq_part))


def accel_coefficients(k: int) -> tuple[float, float, float]:
    """Acceleration coefficients (alpha_k, C_k, tau_k) at iteration k.

    alpha_k = (k+1)/2, C_k = (k+1)(k+2)/4 (the running sum of the
    alphas), tau_k = alpha_{k+1}/C_{k+1}. The sequence satisfies
    alpha_0 in (0, 1] and alpha_k^2 <= C_k for all k >= 0.
    """
    if k < 0:
        raise ValueError(f"iteration index must be >= 0, got {k}")
    alpha = (k + 1) / 2.0
    c_k = (k + 1) * (k + 2) / 4.0
    tau = 2.0 / (k + 3)  # alpha_{k+1}/C_{k+1} simplified
    return alpha, c_k, tau


def solution_quality(x: PrimalPoint, oracle, opt_value: float) -> tuple[float, float, float]:
    """Measure an approximate primal solution against a known optimum.

    Parameters
    ----------
    x : ndarray
        Candidate primal point.
    oracle : problem oracle
        Supplies the objective and the constraint maps.
    opt_value : float
        Optimal objective value, computed by an independent method.

    Returns
    -------
    (f_err, eq_res, in_res) : tuple of float
        Objective error |f(x) - opt_value|, equality residual
        ||A1 x - b1||_2 and inequality residual ||(A2 x - b2)_+||_2.
    """
    x = _as_vector(x)
    if x.size != oracle.n:
        raise ValueError(f"x has length {x.size}, problem has n={oracle.n}")
    eq, ineq = oracle.constraint_values(x)
    f_err = abs(oracle.f_value(x) - opt_value)
    eq_res = float(np.linalg.norm(eq)) if eq.size else 0.0
    in_res = float(np.linalg.norm(positive_part(ineq))) if ineq.size else 0.0
    return f_err, eq_res, in_res


@dataclass(frozen=True)
class Tolerances:
    """Stopping thresholds, optionally paired with target accuracies.

    ``eps_*_tilde`` are the thresholds the solvers test each iteration;
    ``eps_*`` are the target solution accuracies they were derived from,
    when known. A ``None`` threshold marks a constraint type that is
    absent from the problem (the corresponding clause is vacuous).
    """

    eps_f_tilde: float
    eps_eq_tilde: Optional[float] = None
    eps_in_tilde: Optional[float] = None
    eps_f: Optional[float] = None
    eps_eq: Optional[float] = None
    eps_in: Optional[float] = None

    def __post_init__(self):
        for name in ("eps_f_tilde", "eps_eq_tilde", "eps_in_tilde",
                     "eps_f", "eps_eq", "eps_in"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")

    @classmethod
    def from_targets(cls, eps_f: float, eps_eq: Optional[float],
                     eps_in: Optional[float], bounds: "BoundParams") -> "Tolerances":
        """Map target accuracies to stopping thresholds.

        eps_f_tilde = eps_f, eps_eq_tilde = min(eps_f/(2 R1), eps_eq),
        eps_in_tilde = min(eps_f/(2 R2), eps_in); a constraint term is
        dropped when its accuracy is None.
        """
        eq_tilde = in_tilde = None
        if eps_eq is not None:
            eq_tilde = min(eps_f / (2 * bounds.r1), eps_eq) if bounds.r1 > 0 else eps_eq
        if eps_in is not None:
            in_tilde = min(eps_f / (2 * bounds.r2), eps_in) if bounds.r2 > 0 else eps_in
        return cls(eps_f_tilde=eps_f, eps_eq_tilde=eq_tilde, eps_in_tilde=in_tilde,
                   eps_f=eps_f, eps_eq=eps_eq, eps_in=eps_in)


@dataclass(frozen=True)
class BoundParams:
    """Bounds on the optimal dual multipliers and the dual smoothness.

    r1 bounds ||lambda*_eq||_2, r2 bounds ||lambda*_ineq||_2, and
    lipschitz is the Lipschitz constant of the dual gradient. The
    bounds are only needed for a-priori iteration counts and certified
    per-iteration checks, not to run the solvers.
    """

    r1: float
    r2: float
    lipschitz: float

    def __post_init__(self):
        if self.r1 < 0 or self.r2 < 0:
            raise ValueError("multiplier bounds must be nonnegative")
        if not self.lipschitz > 0:
            raise ValueError("lipschitz must be positive")
        if self.r1 == 0 and self.r2 == 0:
            raise ValueError("at least one of r1, r2 must be positive")

    @property
    def r_sq(self) -> float:
        return self.r1 ** 2 + self.r2 ** 2


@dataclass(frozen=True)
class TraceRow:
    """One per-iteration record of a solver run."""

    k: int
    phi: float            # dual value at the reported dual point
    f_primal: float       # objective at the reported primal point
    gap: float            # |f + phi|
    eq_res: float
    in_res: float
    cert_bound: Optional[float] = None  # 2 L (R1^2+R2^2) / C_k, when bounds known
    wall_ns: int = 0


STATUS_CONVERGED = "converged"
STATUS_ITERATION_CAP = "iteration-cap"
STATUS_NUMERICAL_FAILURE = "numerical-failure"


@dataclass
class SolveReport:
    """Outcome of one solver run."""

    status: str
    iterations: int
    final_gap: float
    final_eq_residual: float
    final_in_residual: float
    primal: PrimalPoint
    dual: DualPoint
    trace: list[TraceRow]
    meta: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == STATUS_CONVERGED


def write_trace_csv(trace: list[TraceRow], path, include_timings: bool = False) -> None:
    """Write a per-iteration trace as CSV.

    ``cert_bound`` is left empty for rows without certified bounds.
    Timings are zeroed unless ``include_timings`` is set, so identical
    runs produce byte-identical files.
    """
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "phi_eta", "f_xhat", "gap", "eq_res", "in_res",
                    "cert_bound", "wall_ns"])
        for row in trace:
            cert = "" if row.cert_bound is None else repr(row.cert_bound)
            wall = row.wall_ns if include_timings else 0
            w.writerow([row.k, repr(row.phi), repr(row.f_primal), repr(row.gap),
                        repr(row.eq_res), repr(row.in_res), cert, wall])

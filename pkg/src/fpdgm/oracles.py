"""
Problem instances exposing the dual oracle: dual value, dual gradient and
the closed-form inner maximizer, for entropy-linear programming and
entropic (partial) optimal transport.
"""

from __future__ import annotations

import os
from typing import Protocol, Union, runtime_checkable

import numpy as np
from numpy.typing import NDArray
from scipy.special import logsumexp, xlogy

from .core import DualPoint, Vector

Matrix = NDArray[np.float64]


@runtime_checkable
class ProblemOracle(Protocol):
    """Contract shared by all problem instances.

    ``nu`` is the strong-convexity modulus of the objective on the simple
    set Q (w.r.t. the configured primal norm), ``lipschitz`` the induced
    Lipschitz constant of the dual gradient. ``constraint_values`` maps a
    primal point to (A1 x - b1, A2 x - b2); either part may be empty.
    """

    n: int
    m1: int
    m2: int
    nu: float
    lipschitz: float
    b1: Vector
    b2: Vector

    def f_value(self, x: Vector) -> float: ...

    def inner_solution(self, lam: DualPoint) -> Vector: ...

    def dual_value(self, lam: DualPoint) -> float: ...

    def dual_gradient(self, lam: DualPoint) -> DualPoint: ...

    def constraint_values(self, x: Vector) -> tuple[Vector, Vector]: ...

    def adjoint_map(self, lam: DualPoint) -> Vector: ...

    def materialize_constraints(self) -> tuple[Matrix, Matrix]: ...


class _OracleBase:
    """Shared plumbing: argument checks and the generic dual gradient."""

    n: int
    m1: int
    m2: int
    b1: Vector
    b2: Vector

    def _check_dual(self, lam: DualPoint) -> DualPoint:
        if lam.m1 != self.m1 or lam.m2 != self.m2:
            raise ValueError(
                f"dual point has shape ({lam.m1},{lam.m2}), "
                f"problem expects ({self.m1},{self.m2})")
        if not (np.all(np.isfinite(lam.eq_part)) and np.all(np.isfinite(lam.ineq_part))):
            raise ValueError("dual point has non-finite components")
        return lam

    def dual_gradient(self, lam: DualPoint) -> DualPoint:
        """Gradient (b1 - A1 x(lam), b2 - A2 x(lam)); not projected."""
        x = self.inner_solution(lam)
        eq, ineq = self.constraint_values(x)
        return DualPoint(-eq, -ineq)

    def zero_dual(self) -> DualPoint:
        return DualPoint.zeros(self.m1, self.m2)


def _softmax_from_logits(z: Vector) -> tuple[Vector, float]:
    """Return (softmax(z), logsumexp(z)) with max-shifted exponentials."""
    lse = float(logsumexp(z))
    x = np.exp(z - lse)
    return x, lse


class ElpProblem(_OracleBase):
    """Entropy-linear programming: minimize sum x_i log(x_i / xi_i) over
    the probability simplex subject to A x = b.

    Parameters
    ----------
    xi : array, shape (n,)
        Strictly positive prior.
    a_mat : array, shape (m1, n)
        Equality constraint matrix.
    b : array, shape (m1,)
        Equality right-hand side.
    pairing : {"l1", "l2"}
        Primal-norm pairing used for ``nu`` and ``lipschitz``; "l1" is
        the default, "l2" the conservative Euclidean variant.
    """

    def __init__(self, xi, a_mat, b, pairing: str = "l1"):
        self.xi = np.asarray(xi, dtype=np.float64)
        self.a_mat = np.atleast_2d(np.asarray(a_mat, dtype=np.float64))
        self.b1 = np.atleast_1d(np.asarray(b, dtype=np.float64))
        if np.any(self.xi <= 0):
            raise ValueError("prior xi must be strictly positive")
        self.n = self.xi.size
        self.m1, n_cols = self.a_mat.shape
        if n_cols != self.n or self.b1.size != self.m1:
            raise ValueError("constraint dimensions do not match xi")
        self.m2 = 0
        self.b2 = np.zeros(0)
        self._log_xi = np.log(self.xi)
        # KL divergence to a positive prior is 1-strongly convex w.r.t.
        # l1 on the simplex; its Hessian diag(1/x) dominates the identity.
        self.nu = 1.0
        self.nu_euclid = 1.0
        self.pairing = pairing
        n1, n2 = operator_norms(self, pairing)
        self.lipschitz = (n1 ** 2 + n2 ** 2) / (self.nu if pairing == "l1" else self.nu_euclid)

    def f_value(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(np.sum(xlogy(x, x)) - x @ self._log_xi)

    def inner_solution(self, lam: DualPoint) -> Vector:
        self._check_dual(lam)
        z = self._log_xi - self.a_mat.T @ lam.eq_part
        x, _ = _softmax_from_logits(z)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("inner solution overflowed")
        return x

    def dual_value(self, lam: DualPoint) -> float:
        self._check_dual(lam)
        z = self._log_xi - self.a_mat.T @ lam.eq_part
        return float(lam.eq_part @ self.b1 + logsumexp(z))

    def constraint_values(self, x) -> tuple[Vector, Vector]:
        return self.a_mat @ x - self.b1, np.zeros(0)

    def adjoint_map(self, lam: DualPoint) -> Vector:
        return self.a_mat.T @ lam.eq_part

    def materialize_constraints(self) -> tuple[Matrix, Matrix]:
        return self.a_mat.copy(), np.zeros((0, self.n))


def _marginal_operator(p: int) -> Matrix:
    """Stacked (row-sum, column-sum) operator on row-major p x p plans."""
    eye = np.eye(p)
    ones = np.ones((1, p))
    return np.vstack([np.kron(eye, ones), np.kron(ones, eye)])


class _TransportBase(_OracleBase):
    """Common structure of the entropic transport instances."""

    p: int
    cost: Matrix
    gamma: float

    def _init_transport(self, cost, gamma: float):
        self.cost = np.asarray(cost, dtype=np.float64)
        if self.cost.ndim != 2 or self.cost.shape[0] != self.cost.shape[1]:
            raise ValueError("cost must be a square matrix")
        if np.any(self.cost < 0):
            raise ValueError("cost entries must be nonnegative")
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        self.p = self.cost.shape[0]
        self.n = self.p * self.p
        self.gamma = float(gamma)

    def _kernel_logits(self, u: Vector, v: Vector) -> Matrix:
        return -(self.cost + u[:, None] + v[None, :]) / self.gamma

    def _marginals_of(self, x) -> tuple[Vector, Vector]:
        plan = np.asarray(x, dtype=np.float64).reshape(self.p, self.p)
        return plan.sum(axis=1), plan.sum(axis=0)

    def f_value(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(self.gamma * np.sum(xlogy(x, x)) + self.cost.ravel() @ x)


class RotProblem(_TransportBase):
    """Entropic optimal transport with equality marginals.

    minimize gamma * sum x_ij log x_ij + <c, x> over plans X >= 0 with
    total mass 1, subject to X e = a1 and X^T e = a2. The unit total
    mass is kept inside the simple set Q, which makes the objective
    gamma-strongly convex w.r.t. l1 and the inner maximizer a softmax
    of the transport kernel.
    """

    def __init__(self, cost, a1, a2, gamma: float, pairing: str = "l1"):
        self._init_transport(cost, gamma)
        self.a1 = np.asarray(a1, dtype=np.float64)
        self.a2 = np.asarray(a2, dtype=np.float64)
        if self.a1.size != self.p or self.a2.size != self.p:
            raise ValueError("marginals must have length p")
        if np.any(self.a1 < 0) or np.any(self.a2 < 0):
            raise ValueError("marginals must be nonnegative")
        if abs(self.a1.sum() - 1.0) > 1e-12 or abs(self.a2.sum() - 1.0) > 1e-12:
            raise ValueError("marginals must sum to 1")
        self.m1 = 2 * self.p
        self.m2 = 0
        self.b1 = np.concatenate([self.a1, self.a2])
        self.b2 = np.zeros(0)
        self.nu = self.gamma
        self.nu_euclid = self.gamma
        self.pairing = pairing
        n1, n2 = operator_norms(self, pairing)
        self.lipschitz = (n1 ** 2 + n2 ** 2) / (self.nu if pairing == "l1" else self.nu_euclid)

    def inner_solution(self, lam: DualPoint) -> Vector:
        self._check_dual(lam)
        u, v = lam.eq_part[:self.p], lam.eq_part[self.p:]
        x, _ = _softmax_from_logits(self._kernel_logits(u, v).ravel())
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("inner solution overflowed")
        return x

    def dual_value(self, lam: DualPoint) -> float:
        self._check_dual(lam)
        u, v = lam.eq_part[:self.p], lam.eq_part[self.p:]
        lse = float(logsumexp(self._kernel_logits(u, v)))
        return float(u @ self.a1 + v @ self.a2 + self.gamma * lse)

    def constraint_values(self, x) -> tuple[Vector, Vector]:
        row, col = self._marginals_of(x)
        return np.concatenate([row - self.a1, col - self.a2]), np.zeros(0)

    def adjoint_map(self, lam: DualPoint) -> Vector:
        u, v = lam.eq_part[:self.p], lam.eq_part[self.p:]
        return (u[:, None] + v[None, :]).ravel()

    def materialize_constraints(self) -> tuple[Matrix, Matrix]:
        return _marginal_operator(self.p), np.zeros((0, self.n))


class RoptProblem(_TransportBase):
    """Entropic partial transport with inequality marginals.

    minimize gamma * sum x_ij log x_ij + <c, x> over plans X >= 0 with
    total mass m, subject to X e <= a1 and X^T e <= a2. The total-mass
    equality lives inside Q (a scaled simplex), so only the 2p
    inequality rows are exposed to the solvers.
    """

    def __init__(self, cost, a1, a2, mass: float, gamma: float, pairing: str = "l1"):
        self._init_transport(cost, gamma)
        self.a1 = np.asarray(a1, dtype=np.float64)
        self.a2 = np.asarray(a2, dtype=np.float64)
        if self.a1.size != self.p or self.a2.size != self.p:
            raise ValueError("marginals must have length p")
        if np.any(self.a1 < 0) or np.any(self.a2 < 0):
            raise ValueError("marginals must be nonnegative")
        if not 0 < mass <= min(self.a1.sum(), self.a2.sum()):
            raise ValueError("mass must satisfy 0 < m <= min(sum a1, sum a2)")
        self.mass = float(mass)
        self.m1 = 0
        self.m2 = 2 * self.p
        self.b1 = np.zeros(0)
        self.b2 = np.concatenate([self.a1, self.a2])
        # On the mass-m simplex the entropy Hessian gives gamma/m strong
        # convexity w.r.t. l1; for m < 1 we keep the looser gamma so the
        # stacked operator yields the familiar 2/gamma constant.
        self.nu = self.gamma / max(self.mass, 1.0)
        self.nu_euclid = self.gamma / self.mass
        self.pairing = pairing
        n1, n2 = operator_norms(self, pairing)
        self.lipschitz = (n1 ** 2 + n2 ** 2) / (self.nu if pairing == "l1" else self.nu_euclid)

    def inner_solution(self, lam: DualPoint) -> Vector:
        self._check_dual(lam)
        u, v = lam.ineq_part[:self.p], lam.ineq_part[self.p:]
        x, _ = _softmax_from_logits(self._kernel_logits(u, v).ravel())
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("inner solution overflowed")
        return self.mass * x

    def dual_value(self, lam: DualPoint) -> float:
        self._check_dual(lam)
        u, v = lam.ineq_part[:self.p], lam.ineq_part[self.p:]
        lse = float(logsumexp(self._kernel_logits(u, v)))
        return float(u @ self.a1 + v @ self.a2
                     + self.gamma * self.mass * (lse - np.log(self.mass)))

    def constraint_values(self, x) -> tuple[Vector, Vector]:
        row, col = self._marginals_of(x)
        return np.zeros(0), np.concatenate([row - self.a1, col - self.a2])

    def adjoint_map(self, lam: DualPoint) -> Vector:
        u, v = lam.ineq_part[:self.p], lam.ineq_part[self.p:]
        return (u[:, None] + v[None, :]).ravel()

    def materialize_constraints(self) -> tuple[Matrix, Matrix]:
        return np.zeros((0, self.n)), _marginal_operator(self.p)


def _power_iteration_norm(a: Matrix, iters: int = 500, tol: float = 1e-13) -> float:
    """Spectral norm of ``a`` by power iteration on a^T a."""
    if a.size == 0:
        return 0.0
    gram = a.T @ a
    v = np.ones(gram.shape[0]) / np.sqrt(gram.shape[0])
    sigma_sq = 0.0
    for _ in range(iters):
        w = gram @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v_next = w / nw
        if np.linalg.norm(v_next - v) < tol:
            v = v_next
            break
        v = v_next
    sigma_sq = float(v @ (gram @ v))
    return float(np.sqrt(max(sigma_sq, 0.0)))


def operator_norms(instance, pairing: str = "l1") -> tuple[float, float]:
    """Operator norms of the constraint maps under the chosen pairing.

    With the l1 primal norm these are the maximum column Euclidean norms
    of the materialized matrices; with the Euclidean pairing, their
    spectral norms (computed by power iteration).
    """
    a1, a2 = instance.materialize_constraints()
    if pairing == "l1":
        n1 = float(np.max(np.linalg.norm(a1, axis=0))) if a1.size else 0.0
        n2 = float(np.max(np.linalg.norm(a2, axis=0))) if a2.size else 0.0
    elif pairing == "l2":
        n1 = _power_iteration_norm(a1)
        n2 = _power_iteration_norm(a2)
    else:
        raise ValueError(f"unknown pairing {pairing!r}")
    return n1, n2


def lipschitz_constant(instance, pairing: str = "l1") -> float:
    """Dual-gradient Lipschitz constant under the chosen norm pairing."""
    n1, n2 = operator_norms(instance, pairing)
    nu = instance.nu if pairing == "l1" else instance.nu_euclid
    return (n1 ** 2 + n2 ** 2) / nu


EPS_MASS = 1e-9


def _parse_pgm_p2(text: str) -> Vector:
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if not tokens or tokens[0] != "P2":
        raise ValueError("not a plain PGM (P2) file")
    if len(tokens) < 4:
        raise ValueError("truncated PGM header")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    pixels = np.asarray([float(t) for t in tokens[4:]], dtype=np.float64)
    if pixels.size != width * height:
        raise ValueError(f"PGM declares {width * height} pixels, found {pixels.size}")
    if maxval <= 0 or np.any(pixels < 0) or np.any(pixels > maxval):
        raise ValueError("PGM pixel values out of range")
    return pixels


def ingest_marginal(source: Union[str, os.PathLike, np.ndarray, list],
                    eps_mass: float = EPS_MASS) -> Vector:
    """Load a marginal histogram and normalize it to a probability vector.

    ``source`` may be a plain PGM (P2) image file, a text file with one
    nonnegative number per line, or a raw array. Every entry is shifted
    by ``eps_mass`` before normalization so the result is strictly
    positive (entropic oracles need positive marginals).
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source) as fh:
            text = fh.read()
        stripped = text.lstrip()
        if stripped.startswith("P2"):
            values = _parse_pgm_p2(text)
        else:
            rows = [line.split("#", 1)[0].strip() for line in text.splitlines()]
            rows = [r for r in rows if r]
            if not rows:
                raise ValueError(f"no histogram data in {source}")
            values = np.asarray([float(r) for r in rows], dtype=np.float64)
    else:
        values = np.asarray(source, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("empty histogram")
    if np.any(values < 0):
        raise ValueError("histogram entries must be nonnegative")
    total = values.sum()
    if total == 0:
        raise ValueError("all-zero histogram cannot be normalized")
    shifted = values + eps_mass
    return shifted / shifted.sum()

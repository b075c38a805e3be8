import numpy as np
import pytest

from fpdgm.core import DualPoint, dual_norm_sq
from fpdgm.oracles import (
    ElpProblem,
    RotProblem,
    RoptProblem,
    ingest_marginal,
    lipschitz_constant,
    operator_norms,
)
from fpdgm.bench import random_cost_matrix, random_marginals

from reference import (
    central_differences,
    elp_inner_objective,
    pga_maximize,
    transport_inner_objective,
)


def make_rot(p=3, gamma=0.5, seed=7):
    rng = np.random.default_rng(seed)
    a1, a2, _ = random_marginals(p, seed)
    return RotProblem(random_cost_matrix(p, rng), a1, a2, gamma)


def make_ropt(p=3, gamma=0.5, seed=9, mass=0.6):
    rng = np.random.default_rng(seed)
    a1, a2, _ = random_marginals(p, seed)
    return RoptProblem(random_cost_matrix(p, rng), a1, a2, mass, gamma)


def make_elp(n=5, m1=2, seed=3):
    rng = np.random.default_rng(seed)
    xi = rng.uniform(0.2, 2.0, size=n)
    a_mat = rng.normal(size=(m1, n))
    x_feas = rng.exponential(size=n)
    x_feas /= x_feas.sum()
    return ElpProblem(xi, a_mat, a_mat @ x_feas)


def flat_dual(oracle, vec):
    return DualPoint(vec[:oracle.m1], vec[oracle.m1:])


def phi_flat(oracle):
    return lambda vec: oracle.dual_value(flat_dual(oracle, vec))


# ---------------------------------------------------------------- inner


def test_elp_inner_uniform_prior_gives_uniform():
    oracle = ElpProblem(np.ones(3), np.ones((1, 3)), np.array([1.0]))
    x = oracle.inner_solution(oracle.zero_dual())
    assert np.allclose(x, 1.0 / 3.0, atol=1e-15)


def test_rot_inner_symmetric_gives_uniform():
    oracle = RotProblem(np.zeros((2, 2)), np.full(2, 0.5), np.full(2, 0.5), 1.0)
    x = oracle.inner_solution(oracle.zero_dual())
    assert np.allclose(x, 0.25, atol=1e-15)


def test_rot_inner_matches_projected_gradient_ascent():
    oracle = make_rot(p=3, gamma=0.5, seed=7)
    rng = np.random.default_rng(17)
    lam = DualPoint(0.4 * rng.normal(size=oracle.m1), np.zeros(0))
    closed = oracle.inner_solution(lam)
    u, v = lam.eq_part[:3], lam.eq_part[3:]
    value, grad = transport_inner_objective(oracle.cost, oracle.gamma, u, v)
    brute = pga_maximize(value, grad, oracle.n)
    assert np.max(np.abs(closed - brute)) <= 1e-8


def test_ropt_inner_matches_projected_gradient_ascent():
    oracle = make_ropt(p=3, gamma=0.5, seed=9, mass=0.6)
    rng = np.random.default_rng(19)
    lam = DualPoint(np.zeros(0), np.abs(0.3 * rng.normal(size=oracle.m2)))
    closed = oracle.inner_solution(lam)
    u, v = lam.ineq_part[:3], lam.ineq_part[3:]
    value, grad = transport_inner_objective(oracle.cost, oracle.gamma, u, v)
    brute = pga_maximize(value, grad, oracle.n, total=oracle.mass)
    assert np.max(np.abs(closed - brute)) <= 1e-8


def test_elp_inner_matches_projected_gradient_ascent():
    oracle = make_elp(n=5, m1=2, seed=3)
    rng = np.random.default_rng(23)
    lam = DualPoint(0.5 * rng.normal(size=oracle.m1), np.zeros(0))
    closed = oracle.inner_solution(lam)
    value, grad = elp_inner_objective(oracle.xi, oracle.a_mat, lam.eq_part)
    brute = pga_maximize(value, grad, oracle.n)
    assert np.max(np.abs(closed - brute)) <= 1e-8


def test_inner_membership_in_simple_set():
    rng = np.random.default_rng(31)
    for oracle, total in [(make_elp(), 1.0), (make_rot(), 1.0),
                          (make_ropt(mass=0.6), 0.6)]:
        for _ in range(10):
            lam = flat_dual(oracle, rng.normal(size=oracle.m1 + oracle.m2))
            lam = DualPoint(lam.eq_part, np.abs(lam.ineq_part))
            x = oracle.inner_solution(lam)
            assert np.all(x > 0)
            assert abs(x.sum() - total) <= 1e-12 * max(1.0, total)


def test_inner_rejects_bad_duals():
    oracle = make_rot()
    with pytest.raises(ValueError):
        oracle.inner_solution(DualPoint(np.zeros(3), np.zeros(0)))
    bad = np.zeros(oracle.m1)
    bad[0] = np.nan
    with pytest.raises(ValueError):
        oracle.inner_solution(DualPoint(bad, np.zeros(0)))


# ----------------------------------------------------------- dual value


def test_elp_dual_value_at_zero_is_log3():
    oracle = ElpProblem(np.ones(3), np.ones((1, 3)), np.array([1.0]))
    assert oracle.dual_value(oracle.zero_dual()) == pytest.approx(np.log(3.0), abs=1e-14)
    # cross-check: phi(0) equals the maximum of -f over the simplex
    value, grad = elp_inner_objective(oracle.xi, oracle.a_mat, np.zeros(1))
    x_star = pga_maximize(value, grad, 3)
    assert value(x_star) == pytest.approx(np.log(3.0), abs=1e-10)


def test_rot_dual_value_uniform_closed_form():
    p = 4
    oracle = RotProblem(np.zeros((p, p)), np.full(p, 1 / p), np.full(p, 1 / p), 1.0)
    assert oracle.dual_value(oracle.zero_dual()) == pytest.approx(2 * np.log(p), abs=1e-12)


@pytest.mark.parametrize("factory", [make_elp, make_rot, make_ropt])
def test_dual_value_matches_generic_formula(factory):
    # the log-sum-exp closed form must agree with
    # <lam, b> - f(x(lam)) - <adjoint(lam), x(lam)>
    oracle = factory()
    rng = np.random.default_rng(41)
    for _ in range(10):
        eq = rng.normal(size=oracle.m1)
        ineq = np.abs(rng.normal(size=oracle.m2))
        lam = DualPoint(eq, ineq)
        x = oracle.inner_solution(lam)
        generic = (float(lam.eq_part @ oracle.b1) + float(lam.ineq_part @ oracle.b2)
                   - oracle.f_value(x) - float(oracle.adjoint_map(lam) @ x))
        assert oracle.dual_value(lam) == pytest.approx(generic, abs=1e-10)


@pytest.mark.parametrize("factory", [make_elp, make_rot, make_ropt])
def test_dual_value_convex_along_chords(factory):
    oracle = factory()
    rng = np.random.default_rng(43)
    for _ in range(20):
        a = flat_dual(oracle, rng.normal(size=oracle.m1 + oracle.m2))
        b = flat_dual(oracle, rng.normal(size=oracle.m1 + oracle.m2))
        a = DualPoint(a.eq_part, np.abs(a.ineq_part))
        b = DualPoint(b.eq_part, np.abs(b.ineq_part))
        t = rng.uniform()
        mid = t * a + (1 - t) * b
        lhs = oracle.dual_value(mid)
        rhs = t * oracle.dual_value(a) + (1 - t) * oracle.dual_value(b)
        assert lhs <= rhs + 1e-10


# -------------------------------------------------------------- gradient


def test_rot_gradient_zero_at_symmetric_instance():
    p = 3
    oracle = RotProblem(np.zeros((p, p)), np.full(p, 1 / p), np.full(p, 1 / p), 0.7)
    g = oracle.dual_gradient(oracle.zero_dual())
    assert np.allclose(g.eq_part, 0.0, atol=1e-15)


def test_rot_gradient_finite_differences():
    oracle = make_rot(p=4, gamma=0.5, seed=11)
    rng = np.random.default_rng(47)
    lam_flat = 0.4 * rng.normal(size=oracle.m1)
    g = oracle.dual_gradient(flat_dual(oracle, lam_flat)).eq_part
    fd = central_differences(phi_flat(oracle), lam_flat)
    mask = np.abs(fd) >= 1e-8
    assert mask.any()
    assert np.max(np.abs(g[mask] - fd[mask]) / np.abs(fd[mask])) <= 1e-6


def test_elp_gradient_symbolic_and_finite_differences():
    oracle = make_elp(n=6, m1=3, seed=5)
    rng = np.random.default_rng(53)
    lam_flat = 0.5 * rng.normal(size=oracle.m1)
    g = oracle.dual_gradient(flat_dual(oracle, lam_flat)).eq_part
    # symbolic expansion: b - A softmax(log xi - A^T lam)
    z = np.log(oracle.xi) - oracle.a_mat.T @ lam_flat
    soft = np.exp(z - np.max(z))
    soft /= soft.sum()
    assert np.allclose(g, oracle.b1 - oracle.a_mat @ soft, atol=1e-14)
    fd = central_differences(phi_flat(oracle), lam_flat)
    mask = np.abs(fd) >= 1e-8
    assert np.max(np.abs(g[mask] - fd[mask]) / np.abs(fd[mask])) <= 1e-6


def test_ropt_gradient_finite_differences():
    oracle = make_ropt(p=3, gamma=0.5, seed=13, mass=0.7)
    rng = np.random.default_rng(59)
    lam_flat = np.abs(0.4 * rng.normal(size=oracle.m2))
    g = oracle.dual_gradient(flat_dual(oracle, lam_flat)).ineq_part
    fd = central_differences(phi_flat(oracle), lam_flat)
    mask = np.abs(fd) >= 1e-8
    assert np.max(np.abs(g[mask] - fd[mask]) / np.abs(fd[mask])) <= 1e-6


@pytest.mark.parametrize("pairing", ["l1", "l2"])
def test_gradient_lipschitz_certificate(pairing):
    rng = np.random.default_rng(61)
    for factory in (make_elp, make_rot, make_ropt):
        oracle = factory()
        lip = lipschitz_constant(oracle, pairing)
        for _ in range(10):
            a = flat_dual(oracle, rng.normal(size=oracle.m1 + oracle.m2))
            b = flat_dual(oracle, rng.normal(size=oracle.m1 + oracle.m2))
            a = DualPoint(a.eq_part, np.abs(a.ineq_part))
            b = DualPoint(b.eq_part, np.abs(b.ineq_part))
            diff = oracle.dual_gradient(a) - oracle.dual_gradient(b)
            lhs = np.sqrt(dual_norm_sq(diff))
            rhs = lip * np.sqrt(dual_norm_sq(a - b))
            assert lhs <= rhs * (1 + 1e-12)


# --------------------------------------------------------- operator norms


def test_operator_norms_rot_stacked_structure():
    oracle = make_rot(p=5, gamma=0.2)
    a1, a2 = oracle.materialize_constraints()
    assert a1.shape == (10, 25) and a2.size == 0
    col_norms = np.linalg.norm(a1, axis=0)
    n1, n2 = operator_norms(oracle)
    assert n1 == pytest.approx(np.max(col_norms), abs=0)
    assert n1 == pytest.approx(np.sqrt(2.0), abs=1e-15)
    assert n2 == 0.0
    assert oracle.lipschitz == pytest.approx(2.0 / oracle.gamma, rel=1e-14)


def test_operator_norms_elp_identity():
    oracle = ElpProblem(np.ones(4), np.eye(4), np.full(4, 0.25))
    n1, n2 = operator_norms(oracle)
    assert n1 == 1.0 and n2 == 0.0
    assert oracle.lipschitz == pytest.approx(1.0)


def test_operator_norms_ropt_stacked_structure():
    oracle = make_ropt(p=4, gamma=0.25, mass=0.5)
    a1, a2 = oracle.materialize_constraints()
    assert a1.size == 0 and a2.shape == (8, 16)
    n1, n2 = operator_norms(oracle)
    assert n1 == 0.0
    assert n2 == pytest.approx(np.sqrt(2.0), abs=1e-15)
    assert oracle.lipschitz == pytest.approx(2.0 / oracle.gamma, rel=1e-14)


def test_operator_norms_euclidean_variant_power_iteration():
    oracle = make_rot(p=4, gamma=0.3)
    n1, _ = operator_norms(oracle, pairing="l2")
    a1, _ = oracle.materialize_constraints()
    spectral = np.linalg.norm(a1, 2)
    assert n1 == pytest.approx(spectral, rel=1e-10)
    # stacked marginal operator has spectral norm sqrt(2p)
    assert spectral == pytest.approx(np.sqrt(2 * oracle.p), rel=1e-12)
    assert lipschitz_constant(oracle, "l2") == pytest.approx(
        2 * oracle.p / oracle.gamma, rel=1e-10)


def test_log_sum_exp_stability_extreme_parameters():
    p = 4
    rng = np.random.default_rng(67)
    cost = rng.uniform(0.0, 100.0, size=(p, p))
    np.fill_diagonal(cost, 0.0)
    a1, a2, _ = random_marginals(p, 71)
    oracle = RotProblem(cost, a1, a2, 1e-3)
    lam = DualPoint(rng.uniform(-1e3, 1e3, size=2 * p), np.zeros(0))
    x = oracle.inner_solution(lam)
    assert np.all(np.isfinite(x))
    assert np.isfinite(oracle.dual_value(lam))
    g = oracle.dual_gradient(lam)
    assert np.all(np.isfinite(g.eq_part))


# ------------------------------------------------------------ validation


def test_instance_validation_errors():
    with pytest.raises(ValueError):
        ElpProblem([1.0, 0.0], np.ones((1, 2)), [1.0])
    with pytest.raises(ValueError):
        RotProblem(-np.ones((2, 2)), [0.5, 0.5], [0.5, 0.5], 0.1)
    with pytest.raises(ValueError):
        RotProblem(np.zeros((2, 2)), [0.6, 0.6], [0.5, 0.5], 0.1)
    with pytest.raises(ValueError):
        RotProblem(np.zeros((2, 2)), [0.5, 0.5], [0.5, 0.5], 0.0)
    with pytest.raises(ValueError):
        RoptProblem(np.zeros((2, 2)), [0.5, 0.5], [0.5, 0.5], 1.5, 0.1)


# ------------------------------------------------------- marginal ingest


def test_ingest_pgm_uniform(tmp_path):
    path = tmp_path / "flat.pgm"
    path.write_text("P2\n# a comment\n2 2\n255\n1 1\n1 1\n")
    a = ingest_marginal(path)
    assert np.allclose(a, 0.25, atol=1e-12)


def test_ingest_raw_histogram_smoothing():
    a = ingest_marginal(np.array([0.0, 0.0, 0.0, 4.0]))
    assert a.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(a > 0)
    assert np.allclose(a[:3], 2.5e-10, rtol=1e-6)
    assert a[3] == pytest.approx(1.0, abs=1e-8)


def test_ingest_text_column(tmp_path):
    path = tmp_path / "hist.txt"
    path.write_text("1.0\n2.0\n1.0\n")
    a = ingest_marginal(path)
    assert a.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(a > 0)
    assert a[1] == pytest.approx(0.5, abs=1e-8)


def test_ingest_rejects_bad_input(tmp_path):
    with pytest.raises(ValueError):
        ingest_marginal(np.zeros(4))
    with pytest.raises(ValueError):
        ingest_marginal(np.array([1.0, -1.0]))
    with pytest.raises(OSError):
        ingest_marginal(tmp_path / "missing.txt")
    bad = tmp_path / "bad.pgm"
    bad.write_text("P2\n2 2\n255\n1 1 1\n")  # declares 4 pixels, has 3
    with pytest.raises(ValueError):
        ingest_marginal(bad)

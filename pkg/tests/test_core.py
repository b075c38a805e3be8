import numpy as np
import pytest

from fpdgm.core import (
    BoundParams,
    DualPoint,
    Tolerances,
    accel_coefficients,
    dual_norm_sq,
    positive_part,
    project_onto_lambda,
    solution_quality,
)
from fpdgm.oracles import ElpProblem

from reference import elp_segment_optimum


def test_positive_part_examples():
    assert np.array_equal(positive_part([-1.0, 0.0, 2.0]), [0.0, 0.0, 2.0])
    assert np.array_equal(positive_part([0.0, 0.0]), [0.0, 0.0])
    assert np.array_equal(positive_part([-3.5]), [0.0])


def test_project_onto_lambda_examples():
    p = project_onto_lambda(DualPoint([1.0, -2.0], [-1.0, 3.0]))
    assert np.array_equal(p.eq_part, [1.0, -2.0])
    assert np.array_equal(p.ineq_part, [0.0, 3.0])

    q = project_onto_lambda(DualPoint(np.zeros(0), [-5.0]))
    assert q.eq_part.size == 0
    assert np.array_equal(q.ineq_part, [0.0])


def test_projection_idempotent_and_fixes_feasible_points():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = DualPoint(rng.normal(size=3), rng.normal(size=4))
        once = project_onto_lambda(p)
        twice = project_onto_lambda(once)
        assert np.array_equal(once.eq_part, twice.eq_part)
        assert np.array_equal(once.ineq_part, twice.ineq_part)
        feasible = DualPoint(rng.normal(size=3), np.abs(rng.normal(size=4)))
        proj = project_onto_lambda(feasible)
        assert np.array_equal(proj.ineq_part, feasible.ineq_part)


def test_projection_nonexpansive():
    rng = np.random.default_rng(1)
    for _ in range(100):
        a = DualPoint(rng.normal(size=2), rng.normal(size=3))
        b = DualPoint(rng.normal(size=2), rng.normal(size=3))
        dist_before = np.sqrt(dual_norm_sq(a - b))
        diff = project_onto_lambda(a) - project_onto_lambda(b)
        assert np.sqrt(dual_norm_sq(diff)) <= dist_before + 1e-12


def test_dual_norm_sq_examples():
    assert dual_norm_sq(DualPoint([3.0], [4.0])) == 25.0
    assert dual_norm_sq(DualPoint.zeros(2, 2)) == 0.0
    assert dual_norm_sq(DualPoint([1.0, 1.0], np.zeros(0))) == 2.0


def test_dual_norm_sq_zero_iff_zero_point():
    rng = np.random.default_rng(2)
    for _ in range(50):
        p = DualPoint(rng.normal(size=3), rng.normal(size=2))
        if np.any(p.eq_part != 0) or np.any(p.ineq_part != 0):
            assert dual_norm_sq(p) > 0


def test_accel_coefficients_values():
    alpha0, c0, tau0 = accel_coefficients(0)
    assert alpha0 == 0.5 and c0 == 0.5
    assert tau0 == pytest.approx(2.0 / 3.0, abs=0)

    alpha3, c3, tau3 = accel_coefficients(3)
    assert alpha3 == 2.0 and c3 == 5.0
    assert tau3 == pytest.approx(1.0 / 3.0)


def test_accel_coefficients_admissibility():
    assert 0 < accel_coefficients(0)[0] <= 1
    prev_c = 0.0
    for k in range(10_001):
        alpha, c_k, _ = accel_coefficients(k)
        assert alpha ** 2 <= c_k
        assert c_k == pytest.approx(prev_c + alpha, rel=1e-15)
        prev_c = c_k
    with pytest.raises(ValueError):
        accel_coefficients(-1)


@pytest.fixture(scope="module")
def tiny_elp():
    # feasible set of this instance is the segment x = (t, 1-2t, t)
    xi = np.array([0.2, 0.5, 0.3])
    a_mat = np.array([[1.0, 2.0, 3.0]])
    b = np.array([2.0])
    oracle = ElpProblem(xi, a_mat, b)
    opt, x_opt = elp_segment_optimum(xi, a_mat, b)
    return oracle, opt, x_opt


def test_solution_quality_at_brute_force_optimum(tiny_elp):
    oracle, opt, x_opt = tiny_elp
    f_err, eq_res, in_res = solution_quality(x_opt, oracle, opt)
    assert f_err <= 1e-10
    assert eq_res <= 1e-10
    assert in_res == 0.0


def test_solution_quality_at_feasible_vertex(tiny_elp):
    oracle, opt, _ = tiny_elp
    vertex = np.array([0.0, 1.0, 0.0])  # t = 0 endpoint of the segment
    f_err, eq_res, in_res = solution_quality(vertex, oracle, opt)
    assert f_err == pytest.approx(oracle.f_value(vertex) - opt, abs=1e-12)
    assert f_err > 1e-3  # the vertex is not optimal
    assert eq_res <= 1e-12
    assert in_res == 0.0


def test_solution_quality_dimension_mismatch(tiny_elp):
    oracle, opt, _ = tiny_elp
    with pytest.raises(ValueError):
        solution_quality(np.ones(5) / 5, oracle, opt)


def test_tolerances_validation():
    with pytest.raises(ValueError):
        Tolerances(eps_f_tilde=0.0)
    with pytest.raises(ValueError):
        Tolerances(eps_f_tilde=1e-3, eps_eq_tilde=-1.0)
    tol = Tolerances(eps_f_tilde=1e-3)
    assert tol.eps_eq_tilde is None and tol.eps_in_tilde is None


def test_tolerances_target_mapping():
    bounds = BoundParams(r1=2.0, r2=4.0, lipschitz=1.0)
    tol = Tolerances.from_targets(1e-2, 1e-2, 1e-1, bounds)
    assert tol.eps_f_tilde == 1e-2
    # eps_f / (2 r1) = 2.5e-3 < eps_eq
    assert tol.eps_eq_tilde == pytest.approx(2.5e-3)
    # eps_f / (2 r2) = 1.25e-3 < eps_in
    assert tol.eps_in_tilde == pytest.approx(1.25e-3)
    assert (tol.eps_f, tol.eps_eq, tol.eps_in) == (1e-2, 1e-2, 1e-1)

    loose = Tolerances.from_targets(10.0, 1e-4, None, bounds)
    assert loose.eps_eq_tilde == 1e-4  # target tighter than the mapping
    assert loose.eps_in_tilde is None


def test_bound_params_validation():
    with pytest.raises(ValueError):
        BoundParams(r1=-1.0, r2=0.0, lipschitz=1.0)
    with pytest.raises(ValueError):
        BoundParams(r1=1.0, r2=0.0, lipschitz=0.0)
    with pytest.raises(ValueError):
        BoundParams(r1=0.0, r2=0.0, lipschitz=1.0)
    assert BoundParams(r1=3.0, r2=4.0, lipschitz=2.0).r_sq == 25.0


def test_dual_point_immutable():
    p = DualPoint([1.0], [2.0])
    with pytest.raises(ValueError):
        p.eq_part[0] = 5.0

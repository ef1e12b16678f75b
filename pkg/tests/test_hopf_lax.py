"""Hopf-Lax evolution against closed-form inf-convolutions."""
import math

import numpy as np
import pytest

from logsob_lab import hopf_lax as hl
from logsob_lab.errors import DomainError, UsageError
from logsob_lab.fields import FieldSpec
from logsob_lab.geometry import ScalarField, make_cylinder_shrinker, make_flat_chart, make_sphere


@pytest.fixture(scope="module")
def line():
    return make_flat_chart(1, 0, 5.0, 101)  # h = 0.1


def test_cone_closed_form(line):
    # inf_y -|y| + |x - y|^2 / (2t) = -|x| - t/2
    x = line.vertices[:, 0]
    u = ScalarField(line, -np.abs(x))
    table = hl.hopf_lax(line, u, [0.3, 0.5])
    for k, t in enumerate((0.3, 0.5), start=1):
        inside = np.abs(x) + t <= 5.0 + 1e-12
        assert np.allclose(table.values[k][inside], -np.abs(x[inside]) - t / 2, atol=1e-12)
    assert table.policy == "separable"


def test_concave_quadratic_closed_form():
    M = make_flat_chart(2, 1, 6.0, 121)
    beta, t = 0.5, 0.5
    u = hl.quadratic_profile(beta).on(M)
    table = hl.hopf_lax(M, u, [t])
    r2 = np.sum(M.vertices ** 2, axis=1)
    exact = -beta * r2 / (1.0 - 2.0 * beta * t)
    core = r2 <= 4.0
    h = M.mesh_size
    assert np.max(np.abs(table.values[1][core] - exact[core])) <= h * h / (2 * t) + 1e-12
    assert not table.any_ill_posed


def test_constant_is_fixed(line):
    u = ScalarField(line, np.full(line.num_vertices, -2.5))
    table = hl.hopf_lax(line, u, [0.1, 1.0])
    assert np.all(table.values == -2.5)


def test_dense_and_separable_policies_agree():
    M = make_flat_chart(2, 0, 2.0, 21)
    u = FieldSpec("gauss_sin", {"alpha": 0.7, "eps": 0.3, "freq": 2.0}).on(M)
    a = hl.hopf_lax(M, u, [0.2, 0.7], policy="separable")
    b = hl.hopf_lax(M, u, [0.2, 0.7], policy="dense")
    assert np.allclose(a.values, b.values, atol=1e-13)
    with pytest.raises(UsageError):
        hl.hopf_lax(make_sphere(2, 1.0, 1), u.values[:42], [0.1], policy="separable")


def test_brute_force_on_sphere():
    S = make_sphere(2, 1.0, 2)
    u = FieldSpec("gauss", {"center": (0, 0, 1)}).on(S)
    t = 0.3
    table = hl.hopf_lax(S, u, [t])
    D = S.exact_distance(S.vertices, S.vertices)
    brute = np.min(u.values[None, :] + D ** 2 / (2 * t), axis=1)
    assert np.allclose(table.values[1], brute, atol=1e-14)


def test_semigroup_inequality_holds_on_vertices():
    gaps = []
    for res in (65, 129):
        M = make_flat_chart(2, 1, 6.0, res)
        u = hl.quadratic_profile(0.25).on(M)
        violation, gap = hl.semigroup_gap(M, u, 0.5, 0.25)
        assert violation <= 1e-12
        gaps.append(gap)
    assert gaps[1] < gaps[0] / 3.0
    with pytest.raises(DomainError):
        hl.semigroup_gap(M, u, 0.5, 0.5)


def test_hamilton_jacobi_residual_first_order_under_joint_refinement():
    # lattice error is O(h^2 / dt), so space and time are refined together
    worst = []
    for res, steps in ((41, 5), (81, 10), (161, 20)):
        M = make_flat_chart(2, 0, 4.0, res)
        u = FieldSpec("gauss", {"alpha": 1.0}).on(M)
        table = hl.hopf_lax(M, u, np.linspace(0.5, 1.0, steps + 1))
        r, mask = hl.hamilton_jacobi_residual(table)
        core = mask & (np.linalg.norm(M.vertices, axis=1) < 2.0)
        worst.append(np.max(np.abs(r[1:, core])))
    assert worst[0] / worst[1] > 1.7 and worst[1] / worst[2] > 1.7
    assert worst[2] < 0.03


def test_time_grid_validation(line):
    u = ScalarField(line, np.zeros(line.num_vertices))
    for bad in ([], [0.0], [-0.1], [0.5, 0.2], [np.inf]):
        with pytest.raises(DomainError):
            hl.hopf_lax(line, u, bad)
    table = hl.hopf_lax(line, u, [0.0, 0.1])
    assert list(table.times) == [0.0, 0.1]


def test_well_posed_guard():
    hl.check_well_posed(0.9, 0.5)
    with pytest.raises(DomainError):
        hl.check_well_posed(0.96, 0.5)


def test_ill_posed_quadratic_is_flagged():
    M = make_flat_chart(2, 1, 6.0, 65)
    u = hl.quadratic_profile(1.5).on(M)  # beta > 1/(2t)
    assert hl.hopf_lax(M, u, [0.5]).any_ill_posed
    assert not hl.hopf_lax(M, u, [0.1]).any_ill_posed


def test_log_exp_norm_matches_direct_sum(line):
    vals = np.sin(line.vertices[:, 0])
    direct = math.log(np.sum(np.exp(3.0 * vals) * line.weights)) / 3.0
    assert hl.log_exp_norm(line, vals, 3.0) == pytest.approx(direct, rel=1e-13)


def test_euclidean_report_equality_profile_and_strict_case():
    M = make_flat_chart(2, 1, 6.0, 65)
    t = 0.5
    eq = hl.euclidean_hyper_report(M, hl.equality_profile(1.0, 2.0, t).on(M), 1.0, 2.0, [t])
    assert eq.max_ratio == pytest.approx(1.0, abs=1e-6)
    assert eq.profile_distance[0] < 1e-9
    assert eq.checks["boundary_negative"] and eq.checks["interior_minimizer"]
    other = hl.euclidean_hyper_report(M, hl.quadratic_profile(0.3, -0.5).on(M), 1.0, 2.0,
                                      [0.25, 0.5])
    assert np.all(other.ratio < 1.0 - 1e-3)
    assert other.profile_distance[-1] > 0.1
    with pytest.raises(DomainError):
        hl.euclidean_hyper_report(M, eq.log_F, 2.0, 1.0, [t])


def test_euclidean_log_bound_is_sharp_for_the_quadratic_profile():
    # ||e^{Q_t u}||_b / ||e^u||_a for u = -beta |x|^2 in R^n, computed by hand
    n, a, b, t = 3, 1.0, 3.0, 0.4
    beta = (b - a) / (2 * b * t)
    gamma = beta / (1 - 2 * beta * t)
    log_lhs = (0.5 * n / b) * math.log(math.pi / (b * gamma))
    log_rhs = (0.5 * n / a) * math.log(math.pi / (a * beta))
    assert hl.euclidean_log_bound(n, a, b, t) == pytest.approx(log_lhs - log_rhs, abs=1e-13)


def test_gaussian_report_monotone_on_cylinder():
    M = make_cylinder_shrinker(1, 2, 32)
    rep = hl.gaussian_hyper_report(M, FieldSpec("neg_norm"), 1.0, [0.25, 0.5, 1.0])
    assert np.all(rep.flags) and rep.checks["max_increase"] == 0.0
    assert np.all(np.diff(rep.F) <= 0)
    assert rep.checks["growth"]["regime"] == "subquadratic"
    assert rep.q[0] == 1.0 and rep.q[-1] == 1.5


def test_gaussian_report_rejects_fast_growth_and_non_shrinkers():
    M = make_cylinder_shrinker(1, 2, 16)
    with pytest.raises(UsageError):
        hl.gaussian_hyper_report(M, FieldSpec("power", {"theta": 2.5}), 1.0, [0.5])
    with pytest.raises(UsageError):
        hl.gaussian_hyper_report(make_sphere(2, 1.0, 1), FieldSpec("gauss"), 1.0, [0.5])


def test_growth_exponent_of_powers():
    for theta in (0.5, 1.0, 2.0):
        fit, C2 = hl.growth_exponent(FieldSpec("power", {"theta": theta, "scale": 0.1}), 3)
        assert fit == pytest.approx(theta, abs=1e-6)
        assert C2 == pytest.approx(0.1, rel=1e-5)


def test_sharpness_probes():
    ok = hl.sharpness_probe("euclidean_2pi", 2 * math.pi, resolution=65)
    assert ok["witness"] is None
    bad = hl.sharpness_probe("euclidean_2pi", 8.0, resolution=65)
    assert bad["witness"] is not None and bad["witness"]["ratio"] > 1.0
    assert hl.sharpness_probe("gaussian_factor2", 2.0)["witness"] is None
    assert hl.sharpness_probe("gaussian_factor2", 1.0)["witness"] is not None
    with pytest.raises(UsageError):
        hl.sharpness_probe("nope", 1.0)

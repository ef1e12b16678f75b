"""Functionals and deficits against closed-form Gaussian integrals."""
import math

import numpy as np
import pytest

from logsob_lab import functionals as fn
from logsob_lab.errors import DomainError, UsageError
from logsob_lab.fields import FieldSpec
from logsob_lab.geometry import ScalarField, gaussian, make_catenoid, make_flat_chart, make_sphere


@pytest.fixture(scope="module")
def flat():
    return make_flat_chart(2, 1, 7.0, 141)


def _gauss(M, alpha=1.0, **kw):
    return FieldSpec("gauss", {"alpha": alpha, **kw}).on(M)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_gaussian_entropy_and_energy_closed_form(flat, alpha):
    n = 2
    f = _gauss(flat, alpha)
    for rule in ("lumped", "cells"):
        assert fn.p_mass(f, 2.0, rule=rule) == pytest.approx((math.pi / alpha) ** (n / 2), rel=5e-3)
        phi = fn.normalize(f, 2.0, rule=rule)
        assert fn.p_mass(phi, 2.0, rule=rule) == pytest.approx(1.0, abs=1e-13)
        ent = fn.entropy(phi, 2.0, rule=rule)
        assert ent == pytest.approx(0.5 * n * math.log(alpha / math.pi) - 0.5 * n, abs=2e-2)
        assert fn.dirichlet_energy(phi, 2.0, rule=rule) == pytest.approx(n * alpha / 2, rel=2e-2)


def test_gaussian_main_deficit_converges_to_zero():
    defs = []
    for res in (33, 65, 129):
        M = make_flat_chart(2, 1, 6.0, res)
        defs.append(fn.deficit_main(_gauss(M)).deficit)
    assert all(d >= 0 for d in defs)
    # second order in the mesh size
    assert defs[0] / defs[1] == pytest.approx(4.0, rel=0.1)
    assert defs[1] / defs[2] == pytest.approx(4.0, rel=0.1)


def test_non_gaussian_fields_have_positive_deficit(flat):
    for spec in (FieldSpec("gauss_poly", {"alpha": 1.0, "coef": 0.5}),
                 FieldSpec("mixture", {}), FieldSpec("plateau", {"inner": 0.8, "outer": 2.4})):
        assert fn.deficit_main(spec.on(flat)).deficit > 1e-3


def test_parametric_family_is_minimized_at_the_optimal_alpha(flat):
    f = FieldSpec("gauss_poly", {"alpha": 1.0, "coef": 0.5}).on(flat)
    a_star = fn.optimal_alpha(f)
    main = fn.deficit_main(f).deficit
    assert fn.deficit_parametric(f, a_star).deficit == pytest.approx(main, abs=1e-12)
    for a in (0.3 * a_star, 0.9 * a_star, 1.1 * a_star, 4 * a_star):
        assert fn.deficit_parametric(f, a).deficit > main
    with pytest.raises(DomainError):
        fn.deficit_parametric(f, 0.0)


def test_linkage_gap_within_grid_bound(flat):
    f = FieldSpec("gauss_sin", {"eps": 0.1, "freq": 3.0}).on(flat)
    best, main, bound = fn.alpha_grid_linkage(f)
    assert 0.0 <= best - main.deficit <= bound


def test_lp_forms_reduce_to_main_at_p2(flat):
    f = FieldSpec("gauss_poly", {"alpha": 1.0, "coef": 0.5}).on(flat)
    main = fn.deficit_main(f).deficit
    assert fn.deficit_lp_minimal(f, 2.0).deficit == pytest.approx(main, abs=1e-12)
    assert fn.deficit_lp_general(f, 2.0).deficit == pytest.approx(main, abs=1e-12)
    assert fn.deficit_lp_minimal(f, 3.0).deficit > 0
    assert fn.deficit_lp_general(f, 3.0).deficit > 0


def test_lp_minimal_rejects_non_minimal():
    S = make_sphere(2, 2.0, 2)
    with pytest.raises(UsageError):
        fn.deficit_lp_minimal(_gauss(S), 2.0)
    with pytest.raises(DomainError):
        fn.deficit_lp_minimal(_gauss(make_flat_chart(2, 1, 3.0, 11)), 1.5)


def test_gaussian_weighted_form_has_exponential_extremals(flat):
    # exp(linear) fields are extremal for the Gaussian-weighted inequality
    f = FieldSpec("expfam", {"alpha": 0.25, "center": (1.0, 0.5)}).on(flat)
    assert abs(fn.deficit_gaussian(f, 0.25).deficit) < 1e-3
    g = FieldSpec("gauss_poly", {"alpha": 0.2, "coef": 0.5}).on(flat)
    assert fn.deficit_gaussian(g, 0.25).deficit > 1e-2


def test_curvature_energy_vanishes_only_when_minimal():
    C = make_catenoid(32, 1.0)
    assert fn.curvature_energy(_gauss(C)) == 0.0
    S = make_sphere(2, 2.0, 3)
    # |H| = 1 on the sphere of radius 2 and phi is normalized
    phi = fn.normalize(_gauss(S, 0.1))
    assert fn.curvature_energy(phi) == pytest.approx(1.0, rel=1e-2)


def test_entropy_requires_normalization(flat):
    with pytest.raises(UsageError):
        fn.entropy(_gauss(flat, 0.1), 2.0)
    with pytest.raises(UsageError):
        fn.p_mass(_gauss(flat), 2.0, rule="simpson")


def test_detached_field_rejected():
    with pytest.raises(UsageError):
        fn.deficit_main(ScalarField(None, np.ones(4)))


def test_constant_on_plane_is_degenerate():
    M = make_flat_chart(2, 1, 3.0, 11)
    rep = fn.deficit_main(ScalarField(M, np.ones(M.num_vertices)))
    assert rep.degenerate and math.isnan(rep.deficit)


def test_report_row_and_csv(flat):
    rep = fn.deficit_parametric(_gauss(flat), 1.0, label="g")
    row = rep.row()
    assert len(row) == len(fn.CSV_HEADER)
    assert row[0] == "parametric" and row[2] == "1.0" and row[4] == "141"
    text = fn.reports_to_csv([rep])
    assert text.splitlines()[0] == ",".join(fn.CSV_HEADER)


def test_divergence_residual_small(flat):
    assert abs(fn.divergence_residual(_gauss(flat))) < 2e-4
    S = make_sphere(2, 2.0, 4)
    assert abs(fn.divergence_residual(_gauss(S, 0.3, center=(1.0, 0.0, 0.0)))) < 5e-2


def test_saw_counterexample_flux_and_flags():
    rep = fn.saw_counterexample(2, 1.5, 40)
    assert np.all(rep.flux == 1.0)
    assert rep.in_W_alpha[0.0] and rep.in_W_alpha[0.5]
    assert not rep.in_W_alpha[1.0]
    with pytest.raises(DomainError):
        fn.saw_counterexample(2, 1.0, 10)


def test_integration_by_parts_on_sphere_is_exact():
    S = make_sphere(2, 1.0, 3)
    f = FieldSpec("gauss", {"alpha": 1.0, "center": (0.0, 0.0, 1.0)}).on(S)
    u = FieldSpec("gauss_sin", {"eps": 0.5}).on(S)
    assert abs(fn.integration_by_parts_residual(f, u)) < 1e-12


def test_integration_by_parts_on_chart_converges():
    res = []
    for r in (41, 81):
        M = make_flat_chart(2, 0, 3.0, r)
        f = FieldSpec("plateau", {"inner": 0.5, "outer": 2.0}).on(M)
        u = FieldSpec("gauss", {"alpha": 0.5}).on(M)
        res.append(abs(fn.integration_by_parts_residual(f, u)))
    assert res[1] < res[0] / 4.0

import math

import numpy as np
import pytest

from logsob_lab import geometry as g
from logsob_lab.errors import CapacityError, DomainError, UsageError


@pytest.fixture(scope="module")
def flat():
    return g.make_flat_chart(2, 1, 3.0, 61)


@pytest.fixture(scope="module")
def sphere():
    return g.make_sphere(2, 2.0, 4)


def test_flat_chart_shape_and_area(flat):
    assert flat.N == 3 and flat.m == 1 and flat.num_vertices == 61 ** 2
    assert flat.weights.sum() == pytest.approx(36.0, rel=1e-14)
    assert flat.minimal and flat.shrinker
    assert np.all(flat.vertices[:, 2] == 0.0)


def test_generator_arguments_validated():
    with pytest.raises(DomainError):
        g.make_flat_chart(2, 1, 3.0, 60)
    with pytest.raises(DomainError):
        g.make_cylinder_shrinker(2, 3, 16)
    with pytest.raises(CapacityError):
        g.make_flat_chart(3, 0, 1.0, 201, budget=10_000)


def test_sphere_area_and_mean_curvature(sphere):
    assert sphere.weights.sum() == pytest.approx(4.0 * math.pi * 4.0, rel=2e-3)
    Hn = np.linalg.norm(sphere.H, axis=1)
    assert np.allclose(Hn, 1.0, rtol=1e-3)
    # H points inward
    assert np.all(np.sum(sphere.H * sphere.vertices, axis=1) < 0)
    small = g.make_sphere(2, 1.5, 2)
    assert not small.shrinker
    assert small.H_sup == pytest.approx(2.0 / 1.5)


def test_sphere_of_radius_two_is_a_shrinker(sphere):
    assert sphere.shrinker
    coarse = np.max(g.shrinker_residual(g.make_sphere(2, 2.0, 3)))
    fine = np.max(g.shrinker_residual(sphere))
    assert fine < 5e-3 and fine < coarse / 1.5


def test_cylinder_shrinker_residual_vanishes():
    M = g.make_cylinder_shrinker(1, 2, 32, half_length=4.0)
    assert M.shrinker and M.N == 3
    assert np.max(g.shrinker_residual(M)) < 1e-12
    area = 2.0 * math.pi * math.sqrt(2.0) * 8.0
    assert M.weights.sum() == pytest.approx(area, rel=1e-12)


def test_catenoid_area_and_minimality():
    M = g.make_catenoid(96, 1.5)
    assert M.minimal
    assert M.weights.sum() == pytest.approx(g.catenoid_area(1.5), rel=2e-3)
    # cotangent mean curvature of the interior is small
    inner = M.interior_mask(3)
    assert np.max(np.linalg.norm(M.discrete_H[inner], axis=1)) < 5e-2


def test_surface_gradient_of_linear_function(flat):
    f = g.sample(flat, lambda x: 2.0 * x[:, 0] - x[:, 1] + 5.0 * x[:, 2])
    grad = g.surface_gradient(f).values
    assert np.allclose(grad, [2.0, -1.0, 0.0], atol=1e-12)


def test_sphere_gradient_is_tangent(sphere):
    f = g.sample(sphere, lambda x: x[:, 2])
    grad = g.surface_gradient(f).values
    normal = sphere.vertices / 2.0
    assert np.max(np.abs(np.sum(grad * normal, axis=1))) < 1e-12
    exact = np.array([0.0, 0.0, 1.0]) - normal[:, 2:3] * normal
    assert np.max(np.linalg.norm(grad - exact, axis=1)) < 5e-2


def test_laplacian_of_quadratic_on_chart(flat):
    lap = g.laplacian(g.sample(flat, lambda x: np.sum(x * x, axis=1)))
    inner = flat.interior_mask(3)
    assert np.allclose(lap.values[inner], 4.0, atol=1e-9)


def test_laplacian_eigenfunction_on_catenoid_coordinates():
    M = g.make_catenoid(128, 1.0)
    for k in range(3):
        lap = g.laplacian(g.sample(M, lambda x, k=k: x[:, k]))
        inner = M.interior_mask(4)
        assert np.max(np.abs(lap.values[inner])) < 1e-3


def test_integrate_against_gaussian(flat):
    one = g.ScalarField(flat, np.ones(flat.num_vertices))
    mass = g.integrate(flat, one, g.gaussian(1.0))
    assert mass == pytest.approx(math.erf(3.0) ** 2, rel=1e-5)
    other = g.make_flat_chart(2, 1, 3.0, 11)
    with pytest.raises(UsageError):
        g.integrate(other, one)


def test_scalar_field_rejects_bad_values(flat):
    with pytest.raises(UsageError):
        g.ScalarField(flat, np.zeros(3))
    with pytest.raises(UsageError):
        g.ScalarField(flat, np.full(flat.num_vertices, np.nan))


def test_geodesic_distance_on_flat_is_euclidean():
    M = g.make_flat_chart(2, 0, 2.0, 21)
    src = M.num_vertices // 2
    d = g.geodesic_distance(M, src).values
    exact = np.linalg.norm(M.vertices - M.vertices[src], axis=1)
    assert np.max(np.abs(d - exact)) < 1e-10


def test_graph_distance_on_sphere_approximates_great_circles():
    errs = []
    for level in (2, 3, 4):
        M = g.make_sphere(2, 1.0, level)
        D = g.distance_matrix(M, rows=[0, 7], metric="graph")
        E = g.distance_matrix(M, rows=[0, 7], metric="exact")
        errs.append(np.max(np.abs(D - E)))
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] < 0.05


def test_volume_growth_of_plane(flat):
    ratio = g.volume_growth(flat, [1.0, 2.0])
    assert ratio == pytest.approx([math.pi, math.pi], rel=2e-2)


def test_submesh_roundtrip(tmp_path, sphere):
    path = tmp_path / "s.submesh"
    g.write_submesh(sphere, path)
    M = g.read_submesh(path)
    assert np.array_equal(M.vertices, sphere.vertices)
    assert np.array_equal(M.weights, sphere.weights)
    assert np.array_equal(M.H, sphere.H)


def test_submesh_chart_recomputes_missing_blocks(tmp_path):
    M = g.make_catenoid(32, 1.0)
    path = tmp_path / "c.submesh"
    g.write_submesh(M, path, blocks=())
    L = g.read_submesh(path)
    assert L.grid_shape == M.grid_shape and L.periodic == M.periodic
    assert L.weights.sum() == pytest.approx(M.weights.sum(), rel=1e-3)


def test_bad_submesh_header(tmp_path):
    path = tmp_path / "bad"
    path.write_text("MESH 2\n")
    with pytest.raises(DomainError):
        g.read_submesh(path)

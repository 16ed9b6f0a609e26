from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from beamtrack.geometry import (ArrayGeometry, GeometryError, build_icosahedral_grid, build_refined_grid,
                                build_tdoa_lookup, cube_geometry, far_field_tdoa, from_azel,
                                geometry_from_json, near_field_tdoa, round_half_away, to_azel)

C, FS = 343.0, 48000


def pair_geometry():
    # two mics on x plus two off-axis ones to satisfy the 4-mic minimum
    return ArrayGeometry(np.array([[0.08, 0, 0], [-0.08, 0, 0], [0, 0.1, 0.05], [0, -0.1, -0.05]]))


unit_vectors = arrays(np.float64, 3, elements=st.floats(-1, 1)).filter(
    lambda v: np.linalg.norm(v) > 0.1).map(lambda v: v / np.linalg.norm(v))


@pytest.mark.parametrize("level,verts,tris", [(0, 12, 20), (1, 42, 80), (4, 2562, 5120)])
def test_grid_counts(level, verts, tris):
    g = build_icosahedral_grid(level)
    assert g.vertices.shape == (verts, 3)
    assert g.triangles.shape == (tris, 3)


@pytest.mark.parametrize("level", range(5))
def test_grid_is_closed_unit_mesh(level):
    g = build_icosahedral_grid(level)
    assert len(g.vertices) == 10 * 4 ** level + 2
    assert len(g.triangles) == 20 * 4 ** level
    assert np.allclose(np.linalg.norm(g.vertices, axis=1), 1.0, atol=1e-12)
    edges = Counter()
    for tri in g.triangles:
        for a, b in ((0, 1), (1, 2), (2, 0)):
            edges[tuple(sorted((tri[a], tri[b])))] += 1
    assert set(edges.values()) == {2}


def test_grid_has_north_pole_vertex():
    g = build_icosahedral_grid(4)
    assert np.any(np.all(np.isclose(g.vertices, [0, 0, 1]), axis=1))


def test_grid_covering_radius_and_spacing():
    g = build_icosahedral_grid(4)
    rng = np.random.default_rng(0)
    probes = rng.standard_normal((20000, 3))
    probes /= np.linalg.norm(probes, axis=1, keepdims=True)
    worst = np.degrees(np.arccos(np.clip((probes @ g.vertices.T).max(axis=1), -1, 1))).max()
    assert worst <= 3.0
    dots = g.vertices @ g.vertices.T
    np.fill_diagonal(dots, -2)
    nn = np.degrees(np.arccos(np.clip(dots.max(axis=1), -1, 1)))
    assert nn.max() < 5.0


def test_grid_level_limits():
    with pytest.raises(GeometryError):
        build_icosahedral_grid(-1)
    with pytest.raises(GeometryError):
        build_icosahedral_grid(12)


def test_far_field_examples():
    geo = pair_geometry()
    assert far_field_tdoa(geo, [1, 0, 0], (0, 1)) == pytest.approx(FS * 0.16 / C)
    assert far_field_tdoa(geo, [1, 0, 0], (0, 1)) == pytest.approx(22.39, abs=0.01)
    assert far_field_tdoa(geo, [0, 1, 0], (0, 1)) == pytest.approx(0.0, abs=1e-12)
    assert far_field_tdoa(geo, [-1, 0, 0], (0, 1)) == pytest.approx(-22.39, abs=0.01)


def second_order_gap(geo, u, d, pair):
    """Leading 1/d term of near-field minus far-field delay, from the expansion of |d u - p|."""
    i, j = pair
    pi, pj = geo.mic_positions[i], geo.mic_positions[j]
    perp = lambda p: p @ p - (p @ u) ** 2
    return FS / C * (perp(pj) - perp(pi)) / (2 * d)


def test_near_field_examples():
    geo = pair_geometry()
    assert near_field_tdoa(geo, [0, 1, 0], 1.0, (0, 1)) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(GeometryError):
        near_field_tdoa(geo, [1, 0, 0], 0.0, (0, 1))


def test_near_field_hand_value():
    # source 0.5 m out along mic 0's axis of the cube
    cube = cube_geometry()
    p0, p1 = cube.mic_positions[0], cube.mic_positions[1]
    u = p0 / np.linalg.norm(p0)
    src = 0.5 * u
    expected = FS * (np.linalg.norm(src - p1) - np.linalg.norm(src - p0)) / C
    near = near_field_tdoa(cube, u, 0.5, (0, 1))
    assert near == pytest.approx(expected, rel=1e-12)
    assert abs(near) > abs(far_field_tdoa(cube, u, (0, 1)))


@pytest.mark.parametrize("distance", [5.0, 100.0])
def test_near_field_follows_expansion(distance):
    cube = cube_geometry()
    rng = np.random.default_rng(1)
    radius = np.linalg.norm(cube.mic_positions, axis=1).max()
    residual_bound = FS / C * 2 * radius ** 3 / distance ** 2
    for _ in range(50):
        u = rng.standard_normal(3)
        u /= np.linalg.norm(u)
        for pair in cube.pairs:
            gap = near_field_tdoa(cube, u, distance, pair) - far_field_tdoa(cube, u, pair)
            assert abs(gap - second_order_gap(cube, u, distance, pair)) <= residual_bound


@pytest.mark.xfail(strict=True, reason="the 1/d term reaches ~0.27 samples at 5 m and ~0.013 at 100 m "
                                       "on cube diagonals; tolerance below that is unattainable")
@pytest.mark.parametrize("distance,tol", [(5.0, 0.1), (100.0, 0.01)])
def test_near_field_within_stated_tolerance(distance, tol):
    cube = cube_geometry()
    u = np.ones(3) / np.sqrt(3)
    for pair in cube.pairs:
        assert abs(near_field_tdoa(cube, u, distance, pair) - far_field_tdoa(cube, u, pair)) < tol


def test_lookup_shapes_and_antipodes():
    grid4 = build_icosahedral_grid(4)
    lk = build_tdoa_lookup(cube_geometry(), grid4)
    assert lk.delays.shape == (2562, 28)
    small = build_tdoa_lookup(cube_geometry().subset(range(4)), build_icosahedral_grid(0))
    assert small.delays.shape == (12, 6)
    # antipode: vertex set is symmetric, find each vertex's opposite
    v = grid4.vertices
    opp = np.argmax(-(v @ v.T), axis=1)
    exact = np.array([[far_field_tdoa(cube_geometry(), v[d], p) for p in lk.pairs] for d in range(0, 2562, 97)])
    nonhalf = np.abs(np.abs(exact) % 1 - 0.5) > 1e-9
    assert np.array_equal(lk.delays[opp[::97]][nonhalf], -lk.delays[::97][nonhalf])


def test_lookup_bounds_and_swap_antisymmetry():
    geo = cube_geometry()
    lk = build_tdoa_lookup(geo, build_icosahedral_grid(3))
    for p, (i, j) in enumerate(lk.pairs):
        bound = np.ceil(FS * np.linalg.norm(geo.mic_positions[i] - geo.mic_positions[j]) / C)
        assert np.abs(lk.delays[:, p]).max() <= bound
        for d in range(0, lk.n_points, 50):
            assert lk.lookup(d, (j, i)) == -lk.lookup(d, (i, j))


def test_round_half_away():
    assert list(round_half_away(np.array([0.5, -0.5, 1.5, -2.5, 0.49]))) == [1, -1, 2, -3, 0]


def test_refined_grid():
    center = from_azel(40.0, 25.0)
    rg = build_refined_grid(center, 2.5)
    assert len(rg) == 125
    assert rg.points.shape == (125, 3)
    assert np.allclose(rg.directions[62], center)
    assert np.isclose(rg.distances.min(), 0.5) and np.isclose(rg.distances.max(), 5.0)
    spread = np.degrees(np.arccos(np.clip(rg.directions @ center, -1, 1))).max()
    assert 2.5 <= spread <= 2.5 * np.sqrt(2) + 1e-9


def test_geometry_validation():
    with pytest.raises(GeometryError):
        ArrayGeometry(np.zeros((3, 3)) + np.arange(3)[:, None])
    with pytest.raises(GeometryError):
        ArrayGeometry(np.array([[0, 0, 0], [0, 0, 0], [1, 0, 0], [0, 1, 0]]))
    with pytest.raises(GeometryError):
        ArrayGeometry(np.array([[np.nan, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]))
    with pytest.raises(GeometryError, match="mics"):
        geometry_from_json({"positions": []})
    geo = cube_geometry()
    assert geometry_from_json(geo.to_json()).mic_positions.tolist() == geo.mic_positions.tolist()


@given(unit_vectors)
def test_azel_round_trip(u):
    az, el = to_azel(u)
    assert -180 < az <= 180 and -90 <= el <= 90
    assert np.allclose(from_azel(az, el), u, atol=1e-9)


@given(unit_vectors, st.integers(0, 27))
def test_far_field_antisymmetry(u, p):
    geo = cube_geometry()
    i, j = geo.pairs[p]
    assert far_field_tdoa(geo, u, (j, i)) == pytest.approx(-far_field_tdoa(geo, u, (i, j)), abs=1e-12)
    assert far_field_tdoa(geo, -u, (i, j)) == pytest.approx(-far_field_tdoa(geo, u, (i, j)), abs=1e-12)


@given(unit_vectors, st.integers(0, 27))
def test_near_field_converges(u, p):
    geo = cube_geometry()
    pair = geo.pairs[p]
    gap = lambda d: abs(near_field_tdoa(geo, u, d, pair) - far_field_tdoa(geo, u, pair))
    assert gap(100.0) < 0.02
    assert gap(1000.0) <= gap(100.0) + 1e-9

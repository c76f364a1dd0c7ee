import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from borsem.geometry import (DEFAULT_RATIOS, GeometryError, discretize, frustum_small_radius, make_body, make_cone,
                             make_cone_by_ratio, make_cylinder, make_sphere, make_truncated_cone)

FLARE = math.radians(23.0)


def test_cone_by_half_flare():
    g = make_cone(1.0, math.radians(11.5))
    assert g.L == pytest.approx(0.5 / math.tan(math.radians(11.5)), rel=1e-12)
    assert g.L == pytest.approx(2.457, abs=1e-3)
    assert g.ratio_aL == pytest.approx(0.407, abs=1e-3)


def test_cone_45_degrees():
    g = make_cone(1.0, math.pi / 4)
    assert g.L == pytest.approx(0.5) and g.ratio_aL == pytest.approx(2.0)


def test_cone_by_ratio():
    g = make_cone_by_ratio(1.0, 0.505)
    assert g.L == pytest.approx(1.980, abs=1e-3)
    assert g.closed_axis_ends == (True, True)


def test_truncated_cone_length_and_small_end():
    g = make_truncated_cone(1.0, 0.749)
    assert g.L == pytest.approx(1.335, abs=1e-3)
    rs = 0.5 - (1.0 / 0.749) * math.tan(FLARE / 2)
    assert rs > 0
    assert frustum_small_radius(1.0, g.L, FLARE) == pytest.approx(rs, rel=1e-14)
    assert g.generatrix[1][0] == pytest.approx(rs, rel=1e-14)


def test_truncated_cone_ratio_round_trip():
    assert make_truncated_cone(1.0, 1.0).ratio_aL == pytest.approx(1.0, rel=1e-12)


def test_truncated_cone_rejects_closed_frustum():
    with pytest.raises(GeometryError):
        make_truncated_cone(1.0, 0.2)


def test_cylinder_dimensions():
    g = make_cylinder(1.0, 0.5)
    assert g.L == 2.0
    g2 = make_cylinder(2.0, 0.5)
    assert g2.L == 4.0 and max(p[0] for p in g2.generatrix) == 1.0


def test_cylinder_surface_area():
    g = make_cylinder(1.0, 0.5)
    assert g.surface_area() == pytest.approx(2 * math.pi + math.pi / 2, rel=1e-12)


def test_sphere_dimensions():
    g = make_sphere(2.0)
    assert g.a == pytest.approx(2.0) and g.L == pytest.approx(2.0)
    assert g.length == pytest.approx(math.pi, rel=1e-14)


def test_sphere_mesh_length():
    m = discretize(make_sphere(2.0), 32)
    assert m.total_length == pytest.approx(math.pi, rel=1e-12)
    assert m.n_segments >= math.pi * 1 / (2 / 32)


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan")])
def test_rejects_bad_size(bad):
    with pytest.raises(GeometryError):
        make_cylinder(bad, 0.5)


@pytest.mark.parametrize("angle", [0.0, math.pi / 2, -0.1])
def test_rejects_bad_flare(angle):
    with pytest.raises(GeometryError):
        make_cone(1.0, angle)


def test_preset_bodies_share_size():
    sizes = {make_body(k, 1.0).a for k in DEFAULT_RATIOS}
    assert sizes == {1.0}
    for k, r in DEFAULT_RATIOS.items():
        assert make_body(k, 1.0).ratio_aL == pytest.approx(r, rel=1e-12)


@pytest.mark.parametrize("kind", ["cone", "truncated_cone", "cylinder", "sphere"])
def test_cylinder_mesh_h_and_corners(kind):
    g = make_body(kind, 1.0)
    m = discretize(g, 16)
    assert m.h_max <= 1.0 / 16 + 1e-15
    nodes = {tuple(np.round(p, 12)) for p in m.nodes}
    for corner in g.generatrix:
        assert tuple(np.round(corner, 12)) in nodes
    assert m.total_length == pytest.approx(g.length, rel=1e-12)


@pytest.mark.parametrize("kind", ["cone", "truncated_cone", "cylinder", "sphere"])
def test_refinement_monotone(kind):
    g = make_body(kind, 1.0)
    for d in (8, 16, 32):
        fine, coarse = discretize(g, 2 * d), discretize(g, d)
        # the guaranteed bound halves; per-piece rounding can leave h_max slightly above half
        assert fine.h_max <= g.a / (2 * d) + 1e-15
        assert fine.h_max < coarse.h_max


def test_density_guard():
    with pytest.raises(GeometryError):
        discretize(make_sphere(1.0), 4)


def test_sphere_normals_radial():
    m = discretize(make_sphere(2.0), 32)
    for s in m.segments:
        r = np.array(s.midpoint) / np.linalg.norm(s.midpoint)
        ang = math.acos(min(1.0, float(np.dot(r, s.normal))))
        assert ang <= 1.0 / 32
        assert np.linalg.norm(s.normal) == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("kind", ["cone", "truncated_cone", "cylinder"])
def test_normals_point_outward(kind):
    g = make_body(kind, 1.0)
    m = discretize(g, 16)
    centre = np.array([0.0, g.z_center])
    for s in m.segments:
        mid = np.array(s.midpoint)
        # a small step along the normal must leave the body: farther from the axis or beyond the z range
        p = mid + 1e-6 * np.array(s.normal)
        inside_before = mid + -1e-6 * np.array(s.normal)
        assert np.linalg.norm(p - centre) > np.linalg.norm(inside_before - centre) or p[0] > mid[0]


@given(st.floats(0.1, 10.0), st.floats(0.2, 3.0))
def test_cylinder_dimensions_recomputed(a, ratio):
    g = make_cylinder(a, ratio)
    assert g.a == pytest.approx(a, rel=1e-12) and g.L == pytest.approx(a / ratio, rel=1e-12)


@given(st.floats(0.1, 10.0), st.floats(0.2, 3.0))
def test_cone_dimensions_recomputed(a, ratio):
    g = make_cone_by_ratio(a, ratio)
    assert g.a == pytest.approx(a, rel=1e-12) and g.ratio_aL == pytest.approx(ratio, rel=1e-12)


def test_cone_ratio_wins_over_flare():
    assert make_body("cone", 1.0, ratio_aL=0.505, flare_deg=23.0).ratio_aL == pytest.approx(0.505)
    assert make_body("cone", 1.0, flare_deg=23.0).L == pytest.approx(0.5 / math.tan(FLARE / 2))

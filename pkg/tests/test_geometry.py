import numpy as np
import pytest
from hypothesis import given, strategies as st

from bcinclusion import pipeline as pl
from bcinclusion.geometry import (TauFunction, _sublevel_fraction, boundary_distance_hull, cone_volume_fn,
                                  background_distance_from_boundary, domain_of_influence, emit_segments,
                                  epsilon_scaling_probe, exact_sigma_distance, influence_volume,
                                  nearest_sigma_points, spike_volume_fn, sublevel_volume, tangent_tau,
                                  volume_pair)
from bcinclusion.grid import DiscreteDomain, SpeedModel


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_sublevel_fraction_is_exact_for_linear_fields(a, b, c):
    # triangle (0,0), (1,0), (0,1) with f = a + (b - a) x + (c - a) y;
    # compare against a fine Monte Carlo free quadrature on a lattice
    n = 400
    x, y = np.meshgrid((np.arange(n) + 0.5) / n, (np.arange(n) + 0.5) / n)
    inside = x + y < 1
    f = a + (b - a) * x + (c - a) * y
    ref = np.sum((f <= 0) & inside) / np.sum(inside)
    got = float(_sublevel_fraction(np.array([a]), np.array([b]), np.array([c]))[0])
    assert got == pytest.approx(ref, abs=0.01)


@given(st.floats(0.05, 0.95))
def test_sublevel_volume_of_a_half_plane(s):
    d = DiscreteDomain.square(16)
    X, _ = d.coords()
    assert sublevel_volume(d, X - s, np.ones(d.shape)) == pytest.approx(s, abs=1e-12)


@pytest.mark.parametrize("tau", [0.05, 0.1, 0.2, 0.3])
def test_constant_tau_volume_matches_closed_form(tau):
    d = DiscreteDomain.square(64)
    sp = SpeedModel.build(d)
    exact = 1.0 - (1.0 - 2.0 * tau) ** 2
    v = influence_volume(sp, TauFunction.constant(d, tau), False)
    assert v == pytest.approx(exact, abs=2 * d.h * 4 * (1 - 2 * tau) * 0.5)
    node = influence_volume(sp, TauFunction.constant(d, tau), False, "node")
    assert abs(node - exact) < 8 * d.h


def test_no_inclusion_volumes_agree(dom32):
    sp = SpeedModel.build(dom32)
    for tau in (0.1, 0.3):
        v, vt = volume_pair(sp, TauFunction.constant(dom32, tau))
        assert v == vt


def test_domain_of_influence_is_monotone(disk32):
    a = domain_of_influence(disk32, TauFunction.constant(disk32.domain, 0.2))
    b = domain_of_influence(disk32, TauFunction.constant(disk32.domain, 0.3))
    assert a <= b and not b <= a


def test_cone_curve_matches_explicit_tau(disk32):
    k = disk32.domain.boundary_index_of_point(0.5, 0.0)
    dist = background_distance_from_boundary(disk32, k)
    curve = cone_volume_fn(disk32, k, True)
    for r in (0.2, 0.4, 0.6):
        direct = influence_volume(disk32, TauFunction.cone(r, dist), True)
        assert curve(r) == pytest.approx(direct, abs=disk32.domain.h ** 2)


def test_spike_curve_matches_explicit_tau(disk32):
    dom = disk32.domain
    nodes = np.arange(10, 18)
    curve = spike_volume_fn(disk32, nodes, 0.05, True)
    for r in (0.1, 0.35):
        direct = influence_volume(disk32, TauFunction.spike(nodes, dom.n_boundary, r, 0.05), True)
        assert curve(r) == pytest.approx(direct, abs=disk32.domain.h ** 2)


def test_background_distance_from_boundary_variable_speed():
    d = DiscreteDomain.square(24)
    sp = SpeedModel.build(d, np.full(d.shape, 2.0))
    sp_var = SpeedModel.build(d, 2.0 + 1e-9 * np.arange(d.shape[0] * d.shape[1]).reshape(d.shape))
    exact = background_distance_from_boundary(sp, 5)
    fm = background_distance_from_boundary(sp_var, 5)
    assert np.max(np.abs(fm - exact)) < 3 * d.h


def test_tangent_tau_and_scaling_probe():
    d = DiscreteDomain.square(128)
    sp = pl.disk_speed(d, 2.0)
    tau = tangent_tau(sp)
    assert tau.values[0] == pytest.approx(0.35, abs=2 * d.h)
    probe = epsilon_scaling_probe(sp, tau, [0.16, 0.08, 0.04, 0.03])
    assert np.all(probe.differences > 0)
    assert 1.0 < probe.fitted_exponent < 2.0
    with pytest.raises(ValueError):
        epsilon_scaling_probe(sp, tau, [0.01, 0.02, 0.04, 0.08])


def test_triangle_example_reverses_the_volume_inequality():
    sp, tau = pl.triangle_example(64)
    m, mt = volume_pair(sp, tau)
    assert m == pytest.approx(8.0, rel=1e-9)
    assert mt > m


def test_exact_distances(disk32):
    d = exact_sigma_distance(disk32)
    k = disk32.domain.boundary_index_of_point(0.5, 0.0)
    assert d[k] == pytest.approx(0.35)
    assert d.min() == pytest.approx(0.35)
    near = nearest_sigma_points(disk32, disk32.domain.boundary_points()[[k]])
    assert np.allclose(near[0], (0.5, 0.35), atol=1e-3)


def test_hull_from_exact_distances_contains_sigma(disk32):
    r = exact_sigma_distance(disk32)
    hull = boundary_distance_hull(disk32.domain, disk32.c0, r)
    assert np.all(hull.mask[disk32.sigma_mask])
    X, Y = disk32.domain.coords()
    # a disk is its own convex hull: nothing far outside it survives
    assert np.all(np.hypot(X - 0.5, Y - 0.5)[hull.mask] <= 0.15 + 2 * disk32.domain.h)
    with pytest.raises(ValueError):
        boundary_distance_hull(disk32.domain, disk32.c0, -r)


def test_segments_point_at_the_inclusion(disk32):
    r = exact_sigma_distance(disk32)
    segs = emit_segments(disk32.domain, disk32.c0, r)
    for g in segs:
        end = np.asarray(g.point) + g.length * np.asarray(g.direction)
        assert np.hypot(end[0] - 0.5, end[1] - 0.5) < 0.15 + 0.08
        assert np.linalg.norm(g.direction) == pytest.approx(1.0)


def test_tau_validation(dom32):
    with pytest.raises(ValueError):
        TauFunction(-np.ones(dom32.n_boundary))
    t = TauFunction.constant(dom32, 0.2) + 0.1
    assert np.allclose(t.values, 0.3)

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bcinclusion.eikonal import dijkstra_distance, eikonal_distance, stencil
from bcinclusion.grid import DiscreteDomain


def _corner_error(n):
    d = DiscreteDomain.square(n)
    X, Y = d.coords()
    phi = eikonal_distance(d, np.ones(d.shape), [((0, 0), 0.0)]).phi
    return float(np.abs(phi - np.hypot(X, Y)).max())


def test_point_source_converges():
    e32, e64, e128 = (_corner_error(n) for n in (32, 64, 128))
    # first order with a logarithmic factor near the source
    assert e32 > e64 > e128
    assert e128 < 0.03


def test_axis_aligned_distance_is_exact():
    d = DiscreteDomain.square(32)
    seeds = [((j, 0), 0.0) for j in range(33)]
    phi = eikonal_distance(d, np.full(d.shape, 2.0), seeds).phi
    X, _ = d.coords()
    assert np.allclose(phi, X / 2.0, atol=1e-12)


def test_seed_offsets_shift_the_field():
    d = DiscreteDomain.square(16)
    c = np.ones(d.shape)
    a = eikonal_distance(d, c, [((0, 0), 0.0)]).phi
    b = eikonal_distance(d, c, [((0, 0), -0.25)]).phi
    assert np.allclose(b, a - 0.25)


@given(st.floats(0.5, 4.0), st.floats(0.5, 4.0))
def test_faster_medium_gives_shorter_times(c1, c2):
    d = DiscreteDomain.square(12)
    seeds = [((0, 0), 0.0)]
    lo, hi = sorted((c1, c2))
    slow = eikonal_distance(d, np.full(d.shape, lo), seeds).phi
    fast = eikonal_distance(d, np.full(d.shape, hi), seeds).phi
    assert np.all(fast <= slow + 1e-12)
    assert np.allclose(slow * lo, fast * hi)


def test_dijkstra_oracle_agrees_with_fast_marching():
    d = DiscreteDomain.square(48)
    X, Y = d.coords()
    c = 1.0 + (np.hypot(X - 0.5, Y - 0.5) < 0.2)
    seeds = [((0, i), 0.0) for i in range(49)]
    fmm = eikonal_distance(d, c, seeds).phi
    dij = dijkstra_distance(d, c, seeds, radius=4)
    # both over-estimate the true travel time by O(h); they agree to a few cells
    assert np.abs(fmm - dij).max() < 4 * d.h


def test_stencil_directions_are_primitive():
    for dj, di in stencil(3):
        assert np.gcd(abs(dj), abs(di)) == 1


def test_bad_inputs():
    d = DiscreteDomain.square(8)
    with pytest.raises(ValueError):
        eikonal_distance(d, np.zeros(d.shape), [((0, 0), 0.0)])
    with pytest.raises(ValueError):
        eikonal_distance(d, np.ones(d.shape), [])

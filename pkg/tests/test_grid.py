import numpy as np
import pytest
from hypothesis import given, strategies as st

from bcinclusion.grid import (DiscreteDomain, Disk, HalfPlane, SpeedModel, Triangle,
                              inclusion_from_dict)


@given(st.integers(4, 40), st.integers(4, 40), st.floats(0.1, 3.0))
def test_cell_weights_sum_to_area(nx, ny, h):
    d = DiscreteDomain(nx, ny, h)
    assert d.cell_weights().sum() == pytest.approx(d.Lx * d.Ly, rel=1e-12)


@given(st.integers(4, 30), st.integers(4, 30))
def test_boundary_walk_is_a_closed_unit_step_loop(nx, ny):
    d = DiscreteDomain(nx, ny, 1.0 / nx)
    b = d.boundary_nodes
    assert len(b) == d.n_boundary == len(np.unique(b, axis=0))
    steps = np.abs(np.diff(np.vstack([b, b[:1]]), axis=0)).sum(axis=1)
    assert np.all(steps == 1)
    assert tuple(b[0]) == (0, 0) and tuple(b[1]) == (0, 1)  # counter-clockwise
    # every boundary node lies on the rectangle edge
    on_edge = (b[:, 0] == 0) | (b[:, 0] == ny) | (b[:, 1] == 0) | (b[:, 1] == nx)
    assert on_edge.all()


def test_boundary_geometry(dom32):
    assert dom32.boundary_arc[-1] == pytest.approx(dom32.perimeter - dom32.h)
    assert dom32.boundary_lengths().sum() == pytest.approx(dom32.perimeter)
    k = dom32.boundary_index_of_point(1.0, 0.5)
    assert np.allclose(dom32.boundary_points()[k], (1.0, 0.5))
    assert np.allclose(dom32.boundary_normals()[k], (1.0, 0.0))
    assert dom32.arc_distance(0, dom32.n_boundary - 1) == pytest.approx(dom32.h)


def test_non_square_cells_rejected():
    with pytest.raises(ValueError):
        DiscreteDomain.rectangle(10, 10, 1.0, 2.0)
    assert DiscreteDomain.rectangle(20, 10, 2.0, 1.0).h == pytest.approx(0.1)


def test_primitives_distance_and_membership():
    X = np.array([0.5, 0.5, 0.9])
    Y = np.array([0.5, 0.0, 0.5])
    disk = Disk((0.5, 0.5), 0.2, 2.0)
    assert disk.contains(X, Y).tolist() == [True, False, False]
    assert np.allclose(disk.distance(X, Y), [0.0, 0.3, 0.2])
    tri = Triangle(((0.4, 0.4), (0.6, 0.4), (0.5, 0.6)), 2.0)
    assert tri.contains(np.array([0.5]), np.array([0.45]))[0]
    assert tri.distance(np.array([0.5]), np.array([0.3]))[0] == pytest.approx(0.1)
    hp = HalfPlane(0.7, 3.0)
    assert hp.distance(np.array([0.1]), np.array([0.9]))[0] == pytest.approx(0.2)
    assert hp.contains(np.array([0.1]), np.array([0.2]))[0]
    for inc in (disk, tri, hp):
        assert inclusion_from_dict(inc.to_dict()) == inc


def test_speed_model(disk32):
    sp = disk32
    assert sp.has_inclusion and sp.constant_background
    assert sp.c_tilde.max() == 2.0 and sp.c_tilde.min() == 1.0
    assert np.allclose(sp.density(True)[sp.sigma_mask], 0.25)
    bg = sp.background()
    assert not bg.has_inclusion and bg.digest() != sp.digest()
    assert SpeedModel.build(sp.domain, 1.0, sp.inclusions).digest() == sp.digest()
    assert np.allclose(sp.boundary_weights(), sp.domain.h)


def test_inclusion_must_keep_off_the_boundary(dom32):
    with pytest.raises(ValueError, match="collar"):
        SpeedModel.build(dom32, 1.0, [Disk((0.05, 0.5), 0.1, 2.0)])
    # half planes are clipped to the collar instead
    sp = SpeedModel.build(dom32, 1.0, [HalfPlane(0.5, 2.0)])
    assert not sp.sigma_mask[0].any() and sp.sigma_mask[3, 5] and not sp.sigma_mask[-4, 5]


def test_invalid_speed_rejected(dom32):
    with pytest.raises(ValueError, match="invalid speed"):
        SpeedModel.build(dom32, -1.0)

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bcinclusion.forward import (BasisMismatch, BoundarySignal, CFLError, SourceBasis,
                                 TimeGrid, assemble_lambda_matrix, snapshot_inner, solve_wave)
from bcinclusion.grid import DiscreteDomain, Disk, SpeedModel
from bcinclusion.selftest import smooth_signal


@pytest.fixture(scope="module")
def setup():
    dom = DiscreteDomain.square(16)
    sp = SpeedModel.build(dom, 1.0, [Disk((0.5, 0.5), 0.2, 2.0)])
    time = TimeGrid.for_speed(1.0, dom.h, 2.0, 0.5, 8)
    basis = SourceBasis(8, 8, dom.n_boundary, time)
    return sp, time, basis, assemble_lambda_matrix(sp, basis)


def test_cfl_violation_raises(setup):
    sp, _, _, _ = setup
    fast = TimeGrid(1.0, 4)
    with pytest.raises(CFLError):
        solve_wave(sp, np.zeros((fast.nt, sp.domain.n_boundary)), fast)


def test_energy_is_conserved_after_the_source_stops(setup):
    sp, time, _, _ = setup
    f = BoundarySignal.zeros(time, sp.boundary_weights())
    f.values[: time.n_half // 4, :5] = 1.0
    E = solve_wave(sp, f, energy=True, trace=False).energies
    tail = E[time.n_half // 4 + 1:]
    assert np.ptp(tail) < 1e-10 * tail[0]


def test_basis_is_orthonormal(setup):
    sp, _, basis, _ = setup
    w = sp.boundary_weights()
    G = np.array([[basis.synthesize(np.eye(basis.size)[i], w).inner(basis.synthesize(np.eye(basis.size)[j], w))
                   for j in range(0, basis.size, 7)] for i in range(0, basis.size, 7)])
    assert np.allclose(G, np.eye(len(G)), atol=1e-12)


def test_analyze_inverts_synthesize(setup, rng):
    sp, _, basis, _ = setup
    c = rng.standard_normal(basis.size)
    assert np.allclose(basis.analyze(basis.synthesize(c, sp.boundary_weights())), c)


def test_precomputed_matches_direct_solve(setup, rng):
    sp, time, basis, op = setup
    f = basis.synthesize(rng.standard_normal(basis.size), sp.boundary_weights())
    direct = solve_wave(sp, f).trace
    assert np.allclose(op.apply(f).values, direct, atol=1e-12 * np.abs(direct).max())
    j = 13
    col = basis.synthesize(np.eye(basis.size)[j], sp.boundary_weights())
    assert np.allclose(op.column(j), solve_wave(sp, col).trace, atol=1e-12)


def test_precomputed_rejects_signals_outside_the_span(setup, rng):
    sp, time, _, op = setup
    f = smooth_signal(sp.domain, time, rng, sp.boundary_weights())
    with pytest.raises(BasisMismatch):
        op.apply(f)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(a, b):
    dom = DiscreteDomain.square(8)
    sp = SpeedModel.build(dom)
    time = TimeGrid.for_speed(0.5, dom.h, 1.0)
    rng = np.random.default_rng(0)
    f, g = (rng.standard_normal((time.nt, dom.n_boundary)) for _ in range(2))
    lhs = solve_wave(sp, a * f + b * g, time).trace
    rhs = a * solve_wave(sp, f, time).trace + b * solve_wave(sp, g, time).trace
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * (1 + np.abs(rhs).max()))


def test_batched_solve_matches_single(setup, rng):
    sp, time, _, _ = setup
    src = rng.standard_normal((2, time.nt, sp.domain.n_boundary))
    both = solve_wave(sp, src, time).trace
    assert np.allclose(both[1], solve_wave(sp, src[1], time).trace)


def test_snapshot_inner_uses_the_inclusion_density(setup):
    sp, _, _, _ = setup
    one = np.ones(sp.domain.shape)
    area = sp.domain.cell_weights()
    assert snapshot_inner(sp, one, one) == pytest.approx(np.sum(area * sp.density(True)))
    assert snapshot_inner(sp, one, one) < 1.0

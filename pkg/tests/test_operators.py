import numpy as np
import pytest
from hypothesis import given, strategies as st

from bcinclusion.forward import BoundarySignal, TimeGrid
from bcinclusion.operators import i_adj_one, i_weights, j_weights, op_I, op_I_adj, op_J, op_R

N_B = 6


def _signal(time, seed):
    rng = np.random.default_rng(seed)
    return BoundarySignal(rng.standard_normal((time.nt, N_B)), time, rng.uniform(0.5, 2.0, N_B))


grids = st.builds(TimeGrid, st.floats(0.2, 3.0), st.integers(2, 60))


@given(grids, st.integers(0, 2**31))
def test_reversal_is_an_isometric_involution(time, seed):
    f = _signal(time, seed)
    assert np.array_equal(op_R(op_R(f)).values, f.values)
    assert op_R(f).norm() == pytest.approx(f.norm(), rel=1e-12)


@given(grids, st.integers(0, 2**31))
def test_i_adjoint(time, seed):
    f, g = _signal(time, seed), _signal(time, seed + 1)
    lhs, rhs = op_I(f).inner(g), f.inner(op_I_adj(g))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12 * f.norm() * g.norm())


@given(grids, st.integers(0, 2**31))
def test_j_matches_its_definition(time, seed):
    # J f(t_n) = 1/2 int_{t_n}^{2T - t_n} f, trapezoid, for n < n_half
    f = _signal(time, seed)
    Jf = op_J(f).values
    for n in (0, time.n_half // 2, time.n_half - 1):
        seg = f.values[n: time.nt - n]
        ref = 0.5 * time.dt * (seg.sum(axis=0) - 0.5 * (seg[0] + seg[-1]))
        assert np.allclose(Jf[n], ref, atol=1e-12)
    assert np.all(Jf[time.n_half:] == 0)


@given(grids)
def test_closed_forms(time):
    one = np.ones((time.nt, 1))
    assert np.allclose(op_J(one, time)[:, 0], np.maximum(time.T - time.times, 0.0), atol=1e-12)
    ref = np.where(np.arange(time.nt) < time.n_half, time.times, 0.0)
    assert np.allclose(op_I(one, time)[:, 0], ref, atol=1e-12)
    # the transpose holds the half trapezoid weight at s = 0
    ia = op_I_adj(one, time)[:, 0]
    assert np.max(np.abs(ia[1:] - i_adj_one(time)[1:])) <= time.dt
    assert ia[0] == pytest.approx(0.5 * time.T, abs=time.dt)


def test_dense_matrices_match_operators():
    time = TimeGrid(1.0, 7)
    x = np.random.default_rng(1).standard_normal((time.nt, 1))
    assert np.allclose(i_weights(time) @ x[:, 0], op_I(x, time)[:, 0])
    assert np.allclose(j_weights(time) @ x[:, 0], op_J(x, time)[:, 0])


def test_time_grid():
    t = TimeGrid.for_speed(1.5, 1 / 64, 2.0, 0.5, 120)
    assert t.n_half % 120 == 0 and t.dt <= 0.5 / 64 / 2.0
    assert t.times[t.n_half] == pytest.approx(1.5)
    assert t.nt == 2 * t.n_half + 1

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bcinclusion import pipeline as pl
from bcinclusion.detect import (DistanceProfile, LocateResult, SmoothnessResult, calibrate_tol,
                                consistent_breakdown, divergence_slopes, locate_known_bg,
                                relative_tol, scan_boundary, second_differences,
                                smoothness_test_unknown_bg)
from bcinclusion.geometry import exact_sigma_distance
from bcinclusion.grid import DiscreteDomain


def _pair(d, c=1.0, sign=1.0):
    """Synthetic background and measured curves separating at ``d``."""
    def bg(r):
        return 0.5 * r

    def meas(r):
        return 0.5 * r - sign * c * max(r - d, 0.0) ** 1.5

    return meas, bg


@given(st.floats(0.05, 0.7), st.floats(0.5, 5.0))
def test_locate_brackets_the_separation(d, c):
    meas, bg = _pair(d, c)
    res = locate_known_bg(meas, bg, 0.75, 1e-12, 1e-3)
    assert not res.flag
    assert res.bracket[0] <= d + 1e-9 and res.bracket[1] - res.bracket[0] <= 1e-3
    assert abs(res.r - d) <= 1e-3
    assert res.gap > 0


def test_locate_flags():
    meas, bg = _pair(0.9)
    res = locate_known_bg(meas, bg, 0.75, 1e-9, 1e-3)
    assert res.flag == "no inclusion seen" and res.r == 0.75
    meas, bg = _pair(0.3, sign=-1.0)
    res = locate_known_bg(meas, bg, 0.75, 1e-9, 1e-3)
    assert res.flag == "inconsistent data"
    meas, bg = _pair(0.0)
    res = locate_known_bg(meas, bg, 0.75, 1e-9, 1e-3, r_min=0.1)
    assert res.flag == "inclusion inside r_min"
    with pytest.raises(ValueError):
        locate_known_bg(meas, bg, 0.1, 1e-9, 1e-3, r_min=0.2)


def test_sign_window_skips_a_transient_dip():
    # a small negative blip right after contact, then the true positive gap
    def meas(r):
        x = max(r - 0.3, 0.0)
        return -(x**1.5) + (3e-3 if 0.3 < r < 0.302 else 0.0)

    def bg(r):
        return 0.0

    plain = locate_known_bg(meas, bg, 0.75, 1e-9, 1e-4)
    windowed = locate_known_bg(meas, bg, 0.75, 1e-9, 1e-4, sign_window=0.02)
    assert plain.flag == "inconsistent data"
    assert windowed.flag == "" and abs(windowed.r - 0.3) < 1e-3


def test_tolerances():
    meas, bg = _pair(0.3)
    assert calibrate_tol(bg, bg, [0.1, 0.5], floor=1e-4) == 1e-4
    assert calibrate_tol(meas, bg, [0.2, 0.4], 3.0) == pytest.approx(3 * 0.1**1.5)
    tol = relative_tol(1e-4, 0.01)
    assert tol(0.001) == 1e-4 and tol(1.0) == 0.01


def test_second_differences_of_a_quadratic():
    d2 = second_differences(lambda r: 3 * r**2 + r, [0.2, 0.3], [0.01, 0.02, 0.04])
    assert np.allclose(d2, 6.0)
    assert np.allclose(divergence_slopes(d2, [0.01, 0.02, 0.04]), 0.0, atol=1e-6)


@given(st.integers(25, 45), st.floats(0.0, 2e-4))
def test_smoothness_test_finds_a_square_root_kink(i, offset):
    # V = smooth + (r - d)_+^{3/2} has D2 ~ eps^{-1/2} at the kink; the kink
    # must sit within the smallest eps of a grid radius to be resolved
    d = i / 100 + offset
    def vol(r):
        return np.sin(r) + max(r - d, 0.0) ** 1.5

    grid = np.round(np.arange(0.2, 0.5, 0.01), 10)
    eps = [0.0025, 0.005, 0.01, 0.02]
    res = smoothness_test_unknown_bg(vol, grid, eps)
    assert not res.flag
    assert abs(res.r - d) <= max(eps)
    assert res.q_at_break <= -0.25
    assert np.all(res.q[grid < res.r - max(eps)] > -0.1)


def test_smoothness_test_errors_and_flags():
    with pytest.raises(ValueError, match="insufficient"):
        smoothness_test_unknown_bg(np.sin, [0.1, 0.2], [0.01, 0.02])
    res = smoothness_test_unknown_bg(np.sin, np.linspace(0.1, 0.5, 5), [0.005, 0.01, 0.02])
    assert res.flag == "no inclusion detected up to r_max" and np.isnan(res.q_at_break)


def test_consistent_breakdown():
    mk = lambda r, f="": SmoothnessResult(r, np.zeros(1), np.zeros((1, 1)), None, f)
    assert consistent_breakdown([mk(0.3), mk(0.31), mk(0.32)], 0.021) == (0.31, "")
    assert consistent_breakdown([mk(0.3), mk(0.4), mk(0.32)], 0.02)[1] == "inconsistent across h"
    assert consistent_breakdown([mk(0.5, "x")], 0.02)[1] == "no inclusion detected up to r_max"


def test_oracle_locate_on_the_disk():
    d = DiscreteDomain.square(64)
    sp = pl.disk_speed(d, 2.0)
    nodes = pl.even_nodes(d, 8)
    prof = pl.oracle_profile(sp, nodes, 0.75, d.h / 4)
    assert not any(prof.flags)
    assert np.max(np.abs(prof.r - exact_sigma_distance(sp)[nodes])) <= 3 * d.h
    assert prof.lipschitz_excess(sp, 3 * d.h) <= 0


def test_profile_interpolation_is_periodic(dom32):
    nodes = np.array([0, 32, 64, 96])
    prof = DistanceProfile(dom32, nodes, np.array([1.0, 2.0, 3.0, 4.0]), "test",
                           np.zeros(4), np.zeros(4), [""] * 4)
    full = prof.full()
    assert full[16] == pytest.approx(1.5) and full[112] == pytest.approx(2.5)


def test_scan_boundary_collects_results(dom32):
    prof = scan_boundary(dom32, [1, 2], lambda k: LocateResult(0.1 * k, "", 0.5), "stub")
    assert np.allclose(prof.r, [0.1, 0.2]) and np.allclose(prof.gap, 0.5)

"""Inclusion geometry from volume data.

``locate_known_bg`` finds ``d(x, Sigma)`` as the largest radius at which the
background and measured volumes still agree; ``smoothness_test_unknown_bg``
finds it as the first radius where the measured volume curve stops being
twice differentiable.  ``scan_boundary`` maps either over boundary samples
and ``reconstruct_hull_and_segments`` turns the resulting profile into the
boundary distance hull and direction segments.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .control import KOperator, estimate_volume, snap_tau
from .geometry import (RegionMask, Segment, boundary_distance_hull, cone_volume_fn,
                       emit_segments)
from .grid import DiscreteDomain, SpeedModel

log = logging.getLogger(__name__)

VolumeFn = Callable[[float], float]


# --------------------------------------------------------------------------- #
# known background


@dataclass
class LocateResult:
    r: float
    flag: str = ""
    gap: float = float("nan")  # V - V~ at the upper end of the final bracket
    bracket: tuple[float, float] = (float("nan"), float("nan"))
    evaluations: list = field(default_factory=list)  # (r, V, V~, tol)


def _threshold(tol_vol, v: float) -> float:
    return float(tol_vol(v)) if callable(tol_vol) else float(tol_vol)


def locate_known_bg(measured: VolumeFn, background: VolumeFn, r_max: float, tol_vol,
                    tol_r: float, r_min: float = 0.0, n_coarse: int = 32,
                    sign_window: float = 0.0) -> LocateResult:
    """Smallest radius where ``V(tau_r)`` and ``V~(tau_r)`` stop agreeing.

    ``tol_vol`` is a number or a callable of the background volume.  The
    volumes agree up to ``d(x, Sigma)`` and separate right after it; further
    out ``V~`` may overtake ``V`` (a fast inclusion enlarges ``M~``), so the
    first separation is located by a coarse forward scan on ``n_coarse``
    steps and then bisected to width ``tol_r``.  Returns ``r_max`` flagged
    "no inclusion seen" when nothing separates, and flags "inconsistent
    data" when the gap right after the first separation is negative.
    With ``sign_window > 0`` the gap is sampled on ``(hi, hi + sign_window]``
    and the flag needs ``V < V~ - tol_vol`` with no sample above
    ``+tol_vol``: just past contact the discretised curves can cross by a
    quadrature-sized amount, and a fast inclusion makes ``V~`` overtake
    ``V`` a little later, so only the short window after contact is telling.
    """
    if not r_max > r_min:
        raise ValueError("r_max must exceed r_min")
    if not tol_r > 0:
        raise ValueError("tol_r must be positive")
    evals = []

    def gap_at(r):
        v, vt = background(r), measured(r)
        evals.append((float(r), v, vt, _threshold(tol_vol, v)))
        return v - vt, evals[-1][3]

    def fires(r):
        g, tol = gap_at(r)
        return abs(g) > tol, g

    coarse = np.linspace(r_min, r_max, n_coarse + 1)
    hit, g0 = fires(coarse[0])
    if hit:
        return LocateResult(float(r_min), "inclusion inside r_min", g0, (r_min, r_min), evals)
    lo = hi = None
    for a, b in zip(coarse[:-1], coarse[1:]):
        hit, g = fires(b)
        if hit:
            lo, hi, gap = float(a), float(b), g
            break
    if hi is None:
        return LocateResult(float(r_max), "no inclusion seen", g, (r_max, r_max), evals)
    while hi - lo > tol_r:
        mid = 0.5 * (lo + hi)
        hit, g = fires(mid)
        if hit:
            hi, gap = mid, g
        else:
            lo = mid
    # the final bracket straddles the transition
    assert lo < hi and abs(gap) > 0
    if sign_window > 0:
        window = [gap_at(r) for r in np.linspace(hi, min(hi + sign_window, r_max), 5)[1:]]
        negative = any(g < -t for g, t in window) and not any(g > t for g, t in window)
    else:
        negative = gap < -evals[-1][3]
    flag = "inconsistent data" if negative else ""
    return LocateResult(0.5 * (lo + hi), flag, gap, (lo, hi), evals)


def calibrate_tol(measured: VolumeFn, background: VolumeFn, r_samples: Sequence[float],
                  factor: float = 3.0, floor: float = 0.0) -> float:
    """``factor * max |V - V~|`` over a run without inclusion, at least ``floor``."""
    dev = max((abs(background(r) - measured(r)) for r in r_samples), default=0.0)
    return max(factor * dev, floor)


def relative_tol(tol_abs: float, rel: float) -> Callable[[float], float]:
    """Threshold ``max(tol_abs, rel * V)``."""
    def tol(v: float) -> float:
        return max(tol_abs, rel * abs(v))

    tol.spec = {"abs": tol_abs, "rel": rel}
    return tol


def oracle_pair(speed: SpeedModel, k: int, T: float | None = None) -> tuple[VolumeFn, VolumeFn]:
    """Geometry-side ``(V~, V)`` along the cone family at boundary node ``k``."""
    return (cone_volume_fn(speed, k, True, T), cone_volume_fn(speed, k, False, T))


def control_volume_fn(K: KOperator, tau_of_r: Callable[[float], np.ndarray], alphas, weights,
                      cg_tol: float = 1e-8, cg_maxiter: int | None = None, cache: dict | None = None):
    """``r -> estimate_volume(K, tau_of_r(r))``; τ is snapped before the solve.

    Volumes are memoised on the snapped τ, so radii that snap alike cost one
    solve.
    """
    cache = {} if cache is None else cache

    def volume(r: float) -> float:
        tau = snap_tau(tau_of_r(r), K.basis)
        key = tau.tobytes()
        if key not in cache:
            est = estimate_volume(K, tau, alphas, weights, cg_tol, cg_maxiter)
            if est.flag:
                log.debug("r=%.4g: %s", r, est.flag)
            cache[key] = est.value
        return cache[key]

    volume.cache = cache
    return volume


def patch_spike(basis, k: int, h_level: float = 0.0) -> Callable[[float], np.ndarray]:
    """``r -> tau`` equal to ``r`` on the basis patch holding node ``k``, ``h_level`` elsewhere."""
    p = basis.patch_of_node()[k]
    nodes = basis.patch_nodes(p)

    def tau(r: float) -> np.ndarray:
        v = np.full(basis.n_boundary, float(h_level))
        v[nodes] = r
        return v

    tau.nodes = nodes
    return tau


# --------------------------------------------------------------------------- #
# unknown background


@dataclass
class SmoothnessResult:
    r: float
    q: np.ndarray  # slope per r_grid entry (nan where not computed)
    d2: np.ndarray  # (n_r, n_eps)
    r_grid: np.ndarray | None = None
    flag: str = ""

    @property
    def q_at_break(self) -> float:
        if self.flag or self.r_grid is None:
            return float("nan")
        return float(self.q[np.searchsorted(self.r_grid, self.r)])


def second_differences(volume: VolumeFn, r_grid, eps_list) -> np.ndarray:
    """``D2[i, j] = (V(r_i + e_j) - 2 V(r_i) + V(r_i - e_j)) / e_j**2``."""
    r_grid = np.asarray(r_grid, float)
    eps = np.asarray(eps_list, float)
    memo: dict[float, float] = {}

    def V(r):
        key = round(float(r), 12)
        if key not in memo:
            memo[key] = volume(key)
        return memo[key]

    out = np.empty((r_grid.size, eps.size))
    for i, r in enumerate(r_grid):
        v0 = V(r)
        for j, e in enumerate(eps):
            out[i, j] = (V(r + e) - 2 * v0 + V(r - e)) / e**2
    return out


def divergence_slopes(d2: np.ndarray, eps_list) -> np.ndarray:
    """Least-squares slope of ``log |D2|`` against ``log eps`` per row."""
    le = np.log(np.asarray(eps_list, float))
    with np.errstate(divide="ignore"):
        ld = np.log(np.abs(d2))
    out = np.full(d2.shape[0], np.nan)
    for i, row in enumerate(ld):
        ok = np.isfinite(row)
        if ok.sum() >= 3:
            out[i] = np.polyfit(le[ok], row[ok], 1)[0]
    return out


def smoothness_test_unknown_bg(volume: VolumeFn, r_grid, eps_list, q_break: float = -0.25) -> SmoothnessResult:
    """First radius where the second difference of ``V~`` starts to diverge.

    Where ``V~`` is twice differentiable ``D2`` settles to a constant as
    ``eps -> 0`` (slope near 0).  A square-root singularity from touching the
    inclusion makes ``D2 ~ eps**-0.5``; the breakdown is the smallest ``r``
    with slope ``<= q_break``.
    """
    eps = np.sort(np.asarray(eps_list, float))
    if eps.size < 3:
        raise ValueError("insufficient epsilon samples")
    r_grid = np.asarray(r_grid, float)
    if np.any(np.diff(r_grid) <= 0):
        raise ValueError("r_grid must be increasing")
    d2 = second_differences(volume, r_grid, eps)
    q = divergence_slopes(d2, eps)
    hit = np.flatnonzero(q <= q_break)
    if hit.size == 0:
        return SmoothnessResult(float(r_grid[-1]), q, d2, r_grid, "no inclusion detected up to r_max")
    return SmoothnessResult(float(r_grid[hit[0]]), q, d2, r_grid)


def consistent_breakdown(results: Sequence[SmoothnessResult], tol: float) -> tuple[float, str]:
    """Median breakdown over several ``h`` values, flagged if they spread more than ``tol``."""
    rs = np.array([res.r for res in results if not res.flag])
    if rs.size == 0:
        return float(results[0].r), "no inclusion detected up to r_max"
    flag = "" if rs.max() - rs.min() <= tol and rs.size == len(results) else "inconsistent across h"
    return float(np.median(rs)), flag


# --------------------------------------------------------------------------- #
# profiles


@dataclass
class DistanceProfile:
    """Estimated ``r_Sigma`` at sampled boundary nodes."""

    domain: DiscreteDomain
    nodes: np.ndarray
    r: np.ndarray
    method: str
    gap: np.ndarray
    q_slope: np.ndarray
    flags: list

    @property
    def s(self) -> np.ndarray:
        return self.domain.boundary_arc[self.nodes]

    def full(self) -> np.ndarray:
        """Periodic linear interpolation in arc length onto every boundary node."""
        if self.nodes.size == self.domain.n_boundary:
            out = np.empty(self.domain.n_boundary)
            out[self.nodes] = self.r
            return out
        P = self.domain.perimeter
        order = np.argsort(self.s)
        return np.interp(self.domain.boundary_arc, self.s[order], self.r[order], period=P)

    def lipschitz_excess(self, speed: SpeedModel, slack: float) -> float:
        """Largest ``|r1 - r2| - d^(y1, y2) - slack`` over sample pairs (<= 0 when Lipschitz)."""
        pts = self.domain.boundary_points()[self.nodes]
        c = float(np.min(speed.c0))
        d = np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1)) / c
        return float(np.max(np.abs(self.r[:, None] - self.r[None, :]) - d - slack))


def scan_boundary(domain: DiscreteDomain, nodes, locate: Callable[[int], LocateResult | SmoothnessResult],
                  method: str) -> DistanceProfile:
    """Run a per-node detection over ``nodes``; the runs are independent."""
    nodes = np.asarray(nodes, dtype=np.int64)
    r, gap, q, flags = [], [], [], []
    for k in nodes:
        res = locate(int(k))
        r.append(res.r)
        flags.append(res.flag)
        if isinstance(res, LocateResult):
            gap.append(res.gap)
            q.append(np.nan)
        else:
            gap.append(np.nan)
            q.append(res.q_at_break)
    for k, f in zip(nodes, flags):
        if f:
            log.info("node %d: %s", k, f)
    return DistanceProfile(domain, nodes, np.asarray(r), method, np.asarray(gap), np.asarray(q), flags)


def reconstruct_hull_and_segments(profile: DistanceProfile, background_speed) -> tuple[RegionMask, list[Segment]]:
    """Hull ``M minus union B^(y, r(y))`` and segments from a distance profile.

    ``background_speed`` is the true background ``c0`` or an assumed one (the
    hull is then a distorted image of the true hull).
    """
    r = np.maximum(profile.full(), 0.0)
    dom = profile.domain
    hull = boundary_distance_hull(dom, background_speed, r)
    return hull, emit_segments(dom, background_speed, r)

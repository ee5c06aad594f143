"""Wiring shared by the CLI and the self-test: operators, volume curves and profiles."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .control import KOperator, assemble_K
from .detect import (DistanceProfile, LocateResult, calibrate_tol, consistent_breakdown,
                     control_volume_fn, locate_known_bg, oracle_pair, patch_spike, scan_boundary,
                     smoothness_test_unknown_bg)
from .forward import LambdaOperator, SourceBasis, TimeGrid, assemble_lambda_matrix
from .geometry import TauFunction, exact_sigma_distance, spike_volume_fn
from .grid import DiscreteDomain, Disk, HalfPlane, SpeedModel, Triangle

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------- #
# operators


@dataclass
class Measurement:
    """Lambda and K for one speed model on a given time grid and basis."""

    op: LambdaOperator
    K: KOperator
    alphas: list

    @property
    def weights(self) -> np.ndarray:
        return self.op.weights


def alpha_schedule(K: KOperator, exponents=None, alphas=None) -> list[float]:
    if alphas is not None:
        return [float(a) for a in alphas]
    exponents = range(1, 7) if exponents is None else exponents
    return [K.norm_estimate * 10.0 ** (-k) for k in exponents]


def measure(speed: SpeedModel, basis: SourceBasis, cfl: float = 0.5, op: LambdaOperator | None = None,
            exponents=None, alphas=None) -> Measurement:
    """Assemble Lambda (unless given) and K."""
    op = assemble_lambda_matrix(speed, basis, cfl) if op is None else op
    K = assemble_K(op)
    return Measurement(op, K, alpha_schedule(K, exponents, alphas))


@lru_cache(maxsize=6)
def _cached_measurement(key):
    n, contrast, n_bin, T, cfl, cmax, background = key
    dom = DiscreteDomain.square(n)
    incs = [Disk((0.5, 0.5), 0.15, contrast)] if contrast != 1.0 else []
    speed = SpeedModel.build(dom, 1.0, incs)
    if background:
        speed = speed.background()
    time = TimeGrid.for_speed(T, dom.h, cmax, cfl, n_bin)
    basis = SourceBasis(32, n_bin, dom.n_boundary, time)
    return speed, measure(speed, basis, cfl)


def disk_measurement(n: int = 64, contrast: float = 2.0, n_bin: int = 120, T: float = 1.5,
                     cfl: float = 0.5, background: bool = False, cmax: float | None = None):
    """``(speed, Measurement)`` for the centred disk fixture, memoised per process.

    ``background=True`` drops the inclusion but keeps the time grid of the
    data (``cmax`` defaults to the contrast), as needed for comparisons.
    """
    cmax = max(contrast, 1.0) if cmax is None else cmax
    return _cached_measurement((n, float(contrast), n_bin, float(T), float(cfl), float(cmax), background))


# --------------------------------------------------------------------------- #
# fixtures


def disk_speed(domain: DiscreteDomain, contrast: float = 2.0, center=(0.5, 0.5), radius: float = 0.15) -> SpeedModel:
    return SpeedModel.build(domain, 1.0, [Disk(tuple(center), radius, contrast)])


def two_disk_speed(domain: DiscreteDomain, contrast: float = 2.0) -> SpeedModel:
    """Two disks of different size, offset from each other (a lens-shaped hull)."""
    return SpeedModel.build(domain, 1.0, [Disk((0.4, 0.45), 0.1, contrast), Disk((0.62, 0.6), 0.08, contrast)])


def triangle_example(n: int = 128, alpha: float = 0.1, contrast: float = 2.0):
    """Half plane plus a thin triangle of height 1 on ``[0, 4]^2``, with the tau of the example.

    ``tau = 2`` on the top edge and 0 elsewhere, so ``M(tau)`` is the upper
    half ``y >= 2``; the triangle has apex ``(2, 3)`` and base half-width
    ``tan(alpha)`` on ``y = 2``.
    """
    dom = DiscreteDomain.square(n, 4.0)
    ta = float(np.tan(alpha))
    speed = SpeedModel.build(dom, 1.0, [HalfPlane(2.0, contrast),
                                        Triangle(((2 - ta, 2.0), (2 + ta, 2.0), (2.0, 3.0)), contrast)])
    pts = dom.boundary_points()
    tau = TauFunction(np.where(pts[:, 1] >= dom.Ly - 1e-12, 2.0, 0.0), "top edge 2")
    return speed, tau


# --------------------------------------------------------------------------- #
# sampling and profiles


def sample_nodes(basis: SourceBasis) -> np.ndarray:
    """The centre node of every patch."""
    w = basis.patch_width
    return np.array([(basis.patch_offset + p * w + w // 2) % basis.n_boundary for p in range(basis.n_patch)])


def even_nodes(domain: DiscreteDomain, n: int) -> np.ndarray:
    """``n`` boundary nodes evenly spaced in arc length, starting at the origin corner."""
    step = domain.n_boundary / n
    return np.unique(np.round(np.arange(n) * step).astype(int) % domain.n_boundary)


def oracle_profile(speed: SpeedModel, nodes, r_max: float, tol_r: float, T: float | None = None) -> DistanceProfile:
    """Known-background profile with geometry-side volumes on both sides.

    Both curves come from the same eikonal discretisation, so they agree
    exactly until the inclusion is reached, so any gap is signal.  The sign
    is judged over three cells past contact.
    """
    window = 3 * speed.domain.h

    def locate(k: int) -> LocateResult:
        measured, background = oracle_pair(speed, k, T)
        return locate_known_bg(measured, background, r_max, 1e-12, tol_r, sign_window=window)

    return scan_boundary(speed.domain, nodes, locate, "bisection_known_bg")


def control_profile(data: Measurement, ref: Measurement, nodes, r_max: float, tol_vol, tol_r: float,
                    cg_tol: float = 1e-8, cg_maxiter=None) -> DistanceProfile:
    """Known-background profile from the boundary control pipeline.

    ``ref`` is the known background simulated on the data's time grid and
    basis; both sides use the spike family ``tau = r`` on the patch of the
    sample node, so discretisation bias of the volume estimate cancels.
    The scan starts at two time bins: a one-bin tau is below the resolution
    of the control and its volume estimate is noise.
    """
    basis = data.K.basis
    w = data.weights
    r_min = 2 * basis.bin_width

    def locate(k: int) -> LocateResult:
        tau = patch_spike(basis, k)
        measured = control_volume_fn(data.K, tau, data.alphas, w, cg_tol, cg_maxiter)
        background = control_volume_fn(ref.K, tau, ref.alphas, w, cg_tol, cg_maxiter)
        return locate_known_bg(measured, background, r_max, tol_vol, tol_r, r_min)

    return scan_boundary(basis_domain(data), nodes, locate, "bisection_known_bg")


def basis_domain(m: Measurement) -> DiscreteDomain:
    return m.op.speed.domain


def control_tol(data_bg: Measurement, ref: Measurement, nodes, r_max: float, floor: float,
                factor: float = 3.0) -> float:
    """Calibrated threshold: ``factor * max |V - V~|`` on a run without inclusion, at least ``floor``."""
    basis = ref.K.basis
    w = ref.weights
    rs = np.linspace(2 * basis.bin_width, r_max, 9)
    dev = 0.0
    for k in nodes:
        tau = patch_spike(basis, int(k))
        m = control_volume_fn(data_bg.K, tau, data_bg.alphas, w)
        b = control_volume_fn(ref.K, tau, ref.alphas, w)
        dev = max(dev, calibrate_tol(m, b, rs, factor, 0.0))
    return max(dev, floor)


def unknown_bg_oracle(speed: SpeedModel, nodes, h_levels, r_grid, eps_list, q_break: float = -0.25):
    """Breakdown radius of ``V~(tau_{r,h})`` for each ``h``, plus their consensus."""
    results = [smoothness_test_unknown_bg(spike_volume_fn(speed, nodes, h, True), r_grid, eps_list, q_break)
               for h in h_levels]
    step = float(np.min(np.diff(r_grid))) if len(r_grid) > 1 else 0.0
    r, flag = consistent_breakdown(results, max(step, 3 * speed.domain.h))
    return r, flag, results


def patch_around(domain: DiscreteDomain, k: int, half_width: float) -> np.ndarray:
    """Boundary nodes within arc distance ``half_width`` of node ``k``."""
    s = domain.boundary_arc
    P = domain.perimeter
    d = np.abs((s - s[k] + P / 2) % P - P / 2)
    return np.flatnonzero(d <= half_width + 1e-9 * domain.h)


def true_distances(speed: SpeedModel, nodes) -> np.ndarray:
    return exact_sigma_distance(speed)[np.asarray(nodes)]

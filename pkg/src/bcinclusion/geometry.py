"""Travel-time geometry: domains of influence, volumes, hulls and direction segments.

These are the ground-truth computations.  They serve as the known-background
side of the detection tests and as the oracle against which the boundary
control pipeline is checked.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .eikonal import DistanceField, eikonal_distance
from .grid import DiscreteDomain, SpeedModel

log = logging.getLogger(__name__)

# Grid quantities are compared with this slack to absorb round-off.
_ZERO = 1e-10


@dataclass(frozen=True)
class TauFunction:
    values: np.ndarray
    descriptor: str = "custom"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("tau must be finite and non-negative")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, domain: DiscreteDomain, s: float, T: float | None = None):
        s = float(s) if T is None else float(np.clip(s, 0.0, T))
        return cls(np.full(domain.n_boundary, max(s, 0.0)), f"constant s={s:g}")

    @classmethod
    def cone(cls, r: float, dist_from_x: np.ndarray, T: float | None = None, label: str = ""):
        """``tau_r(y) = r - d^(x, y)``, clipped to ``[0, T]``."""
        v = np.maximum(r - np.asarray(dist_from_x, float), 0.0)
        if T is not None:
            v = np.minimum(v, T)
        return cls(v, f"cone r={r:g}{label}")

    @classmethod
    def spike(cls, nodes, n_boundary: int, r: float, h_level: float):
        """``r`` on the given boundary nodes, ``h_level`` elsewhere."""
        v = np.full(n_boundary, float(h_level))
        v[np.asarray(nodes)] = float(r)
        return cls(v, f"spike r={r:g} h={h_level:g}")

    def __add__(self, eps: float) -> "TauFunction":
        return TauFunction(self.values + eps, f"{self.descriptor}+{eps:g}")


@dataclass(frozen=True)
class RegionMask:
    mask: np.ndarray
    density: np.ndarray
    domain: DiscreteDomain

    def volume(self) -> float:
        return region_volume(self)

    def __le__(self, other: "RegionMask") -> bool:
        return bool(np.all(~self.mask | other.mask))


def region_volume(mask: RegionMask) -> float:
    """``sum density * cell area`` over the nodes in the mask."""
    if mask.mask.shape != mask.density.shape:
        raise ValueError("mask and density live on different grids")
    w = mask.domain.cell_weights()
    return float(np.sum(w * mask.density * mask.mask))


def _sublevel_fraction(f1, f2, f3):
    """Area fraction of ``{f <= 0}`` for the linear interpolant on triangles."""
    v = np.sort(np.stack([f1, f2, f3]), axis=0)
    a, b, c = v
    out = np.zeros_like(a)
    out[c <= 0] = 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = (a < 0) & (b >= 0)
        out[lo] = a[lo] ** 2 / ((b[lo] - a[lo]) * (c[lo] - a[lo]))
        hi = (b < 0) & (c > 0)
        out[hi] = 1.0 - c[hi] ** 2 / ((c[hi] - a[hi]) * (c[hi] - b[hi]))
    return np.nan_to_num(out, nan=0.0, posinf=1.0)


def sublevel_volume(domain: DiscreteDomain, field: np.ndarray, density: np.ndarray) -> float:
    """``int_{field <= 0} density`` with ``field`` interpolated linearly.

    Each cell is split into four triangles around its centre (centre value
    the mean of the corners); density is the vertex mean per triangle.
    Unlike the node count this is continuous in the level, which keeps
    difference quotients of volume curves free of quadrature jitter.
    """
    f = np.where(np.isfinite(field), field, 1e300)
    corners = [f[:-1, :-1], f[:-1, 1:], f[1:, 1:], f[1:, :-1]]
    rho = [density[:-1, :-1], density[:-1, 1:], density[1:, 1:], density[1:, :-1]]
    fc = 0.25 * sum(corners)
    rc = 0.25 * sum(rho)
    total = 0.0
    for k in range(4):
        a, b = corners[k], corners[(k + 1) % 4]
        frac = _sublevel_fraction(a, b, fc)
        dens = (rho[k] + rho[(k + 1) % 4] + rc) / 3.0
        total += float(np.sum(frac * dens))
    return total * domain.h**2 / 4.0


def boundary_seeds(domain: DiscreteDomain, offsets) -> list:
    b = domain.boundary_nodes
    return [((int(j), int(i)), float(v)) for (j, i), v in zip(b, offsets)]


def influence_field(speed: SpeedModel, tau: TauFunction, with_inclusion: bool) -> DistanceField:
    """``min_y (d(x, y) - tau(y))`` from one multi-source eikonal solve."""
    c = speed.c_tilde if with_inclusion else speed.c0
    tag = "d~" if with_inclusion else "d"
    return eikonal_distance(speed.domain, c, boundary_seeds(speed.domain, -tau.values), tag)


def domain_of_influence(speed: SpeedModel, tau: TauFunction, with_inclusion: bool = True) -> RegionMask:
    """``M~(tau)`` (inclusion metric, density ``c_tilde**-2``) or ``M(tau)``."""
    phi = influence_field(speed, tau, with_inclusion).phi
    return RegionMask(phi <= _ZERO, speed.density(with_inclusion), speed.domain)


def influence_volume(speed: SpeedModel, tau: TauFunction, with_inclusion: bool = True,
                     quadrature: str = "linear") -> float:
    """Volume of ``M(tau)`` (or ``M~(tau)``).

    ``quadrature="node"`` counts dual cells of member nodes; ``"linear"``
    integrates the sublevel set of the interpolated influence field.
    """
    if quadrature == "node":
        return domain_of_influence(speed, tau, with_inclusion).volume()
    if quadrature != "linear":
        raise ValueError(f"unknown quadrature {quadrature!r}")
    phi = influence_field(speed, tau, with_inclusion).phi
    return sublevel_volume(speed.domain, phi, speed.density(with_inclusion))


def volume_pair(speed: SpeedModel, tau: TauFunction, quadrature: str = "linear") -> tuple[float, float]:
    """``(m(M(tau)), m~(M~(tau)))``."""
    return (influence_volume(speed, tau, False, quadrature),
            influence_volume(speed, tau, True, quadrature))


# --------------------------------------------------------------------------- #
# volume curves along one-parameter tau families


def _seeds(domain: DiscreteDomain, nodes, values) -> list:
    b = domain.boundary_nodes
    return [((int(b[k, 0]), int(b[k, 1])), float(v)) for k, v in zip(nodes, values)]


def cone_volume_fn(speed: SpeedModel, k: int, with_inclusion: bool = True, T: float | None = None):
    """``r -> volume of M(tau_r)`` for ``tau_r(y) = r - d^(x_k, y)``.

    Since ``min_y (d(z, y) - r + d^(x, y)) <= 0`` iff ``psi(z) <= r`` with
    ``psi(z) = min_y (d(z, y) + d^(x, y))``, one eikonal solve serves every
    ``r``.  Clipping at ``T`` is not applied; callers keep ``r`` below it.
    """
    dom = speed.domain
    dhat = background_distance_from_boundary(speed, k)
    c = speed.c_tilde if with_inclusion else speed.c0
    psi = eikonal_distance(dom, c, _seeds(dom, range(dom.n_boundary), dhat)).phi
    dens = speed.density(with_inclusion)

    def volume(r: float) -> float:
        if T is not None and r > T + dhat.min():
            log.info("cone r=%.4g is clipped by T=%.4g", r, T)
        return sublevel_volume(dom, psi - r, dens)

    volume.field = psi
    return volume


def spike_volume_fn(speed: SpeedModel, nodes, h_level: float, with_inclusion: bool = True):
    """``r -> volume of M(tau)`` with ``tau = r`` on ``nodes`` and ``h_level`` elsewhere."""
    dom = speed.domain
    nodes = np.asarray(nodes)
    rest = np.setdiff1d(np.arange(dom.n_boundary), nodes)
    c = speed.c_tilde if with_inclusion else speed.c0
    psi_p = eikonal_distance(dom, c, _seeds(dom, nodes, np.zeros(nodes.size))).phi
    psi_r = eikonal_distance(dom, c, _seeds(dom, rest, np.zeros(rest.size))).phi - float(h_level)
    dens = speed.density(with_inclusion)

    def volume(r: float) -> float:
        return sublevel_volume(dom, np.minimum(psi_p - r, psi_r), dens)

    return volume


# --------------------------------------------------------------------------- #


@dataclass
class ScalingProbe:
    eps: np.ndarray
    differences: np.ndarray
    fitted_exponent: float
    used: np.ndarray
    flag: str = ""


def epsilon_scaling_probe(speed: SpeedModel, tau: TauFunction, eps_list,
                          quadrature: str = "linear") -> ScalingProbe:
    """Differences ``m(M(tau+e)) - m~(M~(tau+e))`` and their log-log slope.

    Entries below ``10 h**2`` are treated as quadrature noise and left out of
    the fit.
    """
    eps = np.asarray(eps_list, dtype=float)
    if np.any(np.diff(eps) >= 0) or np.any(eps <= 0):
        raise ValueError("eps_list must be positive and decreasing")
    if len(eps) < 4:
        raise ValueError("need at least 4 epsilon values")
    h = speed.domain.h
    if eps.min() < 4 * h * (1 - 1e-9):
        log.warning("epsilon %.3g below 4h", eps.min())
    diffs = np.array([np.subtract(*volume_pair(speed, tau + e, quadrature)) for e in eps])
    used = diffs > 10 * h * h
    if not used.any():
        return ScalingProbe(eps, diffs, float("nan"), used, "no separation detected")
    if used.sum() < 2:
        return ScalingProbe(eps, diffs, float("nan"), used, "too few separated samples")
    slope = np.polyfit(np.log(eps[used]), np.log(diffs[used]), 1)[0]
    return ScalingProbe(eps, diffs, float(slope), used)


def tangent_tau(speed: SpeedModel) -> TauFunction:
    """Constant tau whose domain of influence just reaches the inclusion nodes.

    Uses the smallest background travel time from the boundary to a mask node.
    """
    if not speed.has_inclusion:
        raise ValueError("no inclusion")
    phi = influence_field(speed, TauFunction.constant(speed.domain, 0.0), False).phi
    return TauFunction.constant(speed.domain, float(phi[speed.sigma_mask].min()))


# --------------------------------------------------------------------------- #
# background distances, hulls and segments


def background_distance_from_boundary(speed: SpeedModel, k: int, collar: int | None = None) -> np.ndarray:
    """``d^(x_k, y)`` for every boundary node ``y``, in the complete background.

    Exact for a constant background; otherwise a fast-marching run on a grid
    padded by ``collar`` cells, with ``c0`` extended by its edge values.
    """
    dom = speed.domain
    pts = dom.boundary_points()
    if speed.constant_background:
        return np.hypot(*(pts - pts[k]).T) / float(speed.c0.flat[0])
    collar = collar if collar is not None else max(dom.nx, dom.ny) // 2
    ext = dom.extended(collar)
    c = np.pad(speed.c0, collar, mode="edge")
    j, i = dom.boundary_nodes[k]
    phi = eikonal_distance(ext, c, [((j + collar, i + collar), 0.0)]).phi
    b = dom.boundary_nodes + collar
    return phi[b[:, 0], b[:, 1]]


def _hull_field(domain: DiscreteDomain, c0, r_sigma, collar: int | None = None) -> np.ndarray:
    """``min_y (d^(x, y) - r(y))`` on the nodes of ``domain``."""
    c0 = np.broadcast_to(np.asarray(c0, float), domain.shape)
    if np.all(c0 == c0.flat[0]):
        X, Y = domain.coords()
        pts = domain.boundary_points()
        phi = np.full(domain.shape, np.inf)
        for (px, py), r in zip(pts, r_sigma):
            np.minimum(phi, np.hypot(X - px, Y - py) / c0.flat[0] - r, out=phi)
        return phi
    collar = collar if collar is not None else max(domain.nx, domain.ny) // 2
    ext = domain.extended(collar)
    c = np.pad(c0, collar, mode="edge")
    b = domain.boundary_nodes + collar
    seeds = [((int(j), int(i)), -float(r)) for (j, i), r in zip(b, r_sigma)]
    phi = eikonal_distance(ext, c, seeds).phi
    return phi[collar:-collar, collar:-collar]


def boundary_distance_hull(domain: DiscreteDomain, background_speed, r_sigma) -> RegionMask:
    """``M minus the union of the open background balls B^(y, r_sigma(y))``."""
    r = np.asarray(r_sigma, dtype=float)
    if r.shape != (domain.n_boundary,):
        raise ValueError("r_sigma must have one value per boundary node")
    if np.any(r < 0):
        raise ValueError("r_sigma must be non-negative")
    c0 = np.broadcast_to(np.asarray(background_speed, float), domain.shape)
    phi = _hull_field(domain, c0, r)
    return RegionMask(phi >= -_ZERO, c0**-2.0, domain)


@dataclass
class Segment:
    s: float
    point: tuple[float, float]
    direction: tuple[float, float]
    length: float


def _tangential_derivatives(domain: DiscreteDomain, r: np.ndarray) -> np.ndarray:
    """Euclidean gradient components of ``r`` along the boundary.

    Returns ``(n_b, 2)``: for edge nodes only the tangential component is
    filled (the other is NaN); corners get both one-sided components.
    """
    b = domain.boundary_nodes
    h = domain.h
    idx = {(int(j), int(i)): k for k, (j, i) in enumerate(b)}
    g = np.full((len(b), 2), np.nan)
    for k, (j, i) in enumerate(b):
        j, i = int(j), int(i)
        on_x = j in (0, domain.ny)  # horizontal edge: derivative along x
        on_y = i in (0, domain.nx)
        if on_x:
            lo, hi = idx.get((j, i - 1)), idx.get((j, i + 1))
            if lo is not None and hi is not None:
                g[k, 0] = (r[hi] - r[lo]) / (2 * h)
            elif hi is not None:
                g[k, 0] = (r[hi] - r[k]) / h
            elif lo is not None:
                g[k, 0] = (r[k] - r[lo]) / h
        if on_y:
            lo, hi = idx.get((j - 1, i)), idx.get((j + 1, i))
            if lo is not None and hi is not None:
                g[k, 1] = (r[hi] - r[lo]) / (2 * h)
            elif hi is not None:
                g[k, 1] = (r[hi] - r[k]) / h
            elif lo is not None:
                g[k, 1] = (r[k] - r[lo]) / h
    return g


def emit_segments(domain: DiscreteDomain, background_speed, r_sigma) -> list[Segment]:
    """One segment per boundary node, pointing down the gradient of ``r_sigma``.

    The tangential derivative comes from the boundary data; the normal one
    from the eikonal relation ``|grad r| = 1 / c0``, taken inward.
    """
    r = np.asarray(r_sigma, dtype=float)
    c0 = np.broadcast_to(np.asarray(background_speed, float), domain.shape)
    b = domain.boundary_nodes
    cb = c0[b[:, 0], b[:, 1]]
    pts = domain.boundary_points()
    normals = domain.boundary_normals()
    g = _tangential_derivatives(domain, r)
    out = []
    for k in range(len(b)):
        if r[k] <= 0:
            out.append(Segment(float(domain.boundary_arc[k]), tuple(pts[k]), (0.0, 0.0), 0.0))
            continue
        gk = g[k].copy()
        slow = 1.0 / cb[k]
        if np.all(np.isfinite(gk)):
            grad = gk
        else:
            axis = 0 if np.isfinite(gk[0]) else 1
            t = np.clip(gk[axis], -slow, slow)
            grad = np.zeros(2)
            grad[axis] = t
            grad[1 - axis] = normals[k][1 - axis] * np.sqrt(max(slow**2 - t * t, 0.0))
        nrm = np.linalg.norm(grad)
        d = -grad / nrm if nrm > 0 else -normals[k]
        out.append(Segment(float(domain.boundary_arc[k]), tuple(pts[k]), (float(d[0]), float(d[1])), float(r[k])))
    return out


def exact_sigma_distance(speed: SpeedModel) -> np.ndarray:
    """Euclidean ``d(y, Sigma) / c0`` per boundary node from the primitives (constant ``c0``)."""
    if not speed.constant_background:
        raise ValueError("exact distances need a constant background")
    pts = speed.domain.boundary_points()
    return speed.sigma_distance(pts[:, 0], pts[:, 1]) / float(speed.c0.flat[0])


def nearest_sigma_points(speed: SpeedModel, points: np.ndarray, n_dir: int = 4096) -> np.ndarray:
    """Nearest point of the inclusion to each point, by dense sampling of the primitive boundaries."""
    samples = []
    for inc in speed.inclusions:
        if inc.kind == "disk":
            a = np.linspace(0, 2 * np.pi, n_dir, endpoint=False)
            samples.append(np.column_stack([inc.center[0] + inc.radius * np.cos(a),
                                            inc.center[1] + inc.radius * np.sin(a)]))
        elif inc.kind == "triangle":
            v = np.asarray(inc.vertices)
            t = np.linspace(0, 1, n_dir // 3, endpoint=False)[:, None]
            for a, bb in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])]:
                samples.append(a + t * (bb - a))
    if not samples:
        raise ValueError("no bounded inclusion primitives")
    S = np.vstack(samples)
    out = np.empty_like(points, dtype=float)
    for k, p in enumerate(points):
        out[k] = S[np.argmin(np.hypot(*(S - p).T))]
    return out

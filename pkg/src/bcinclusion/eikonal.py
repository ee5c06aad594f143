"""First-order fast marching for ``|grad phi| = 1 / speed`` and a graph-distance oracle."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from math import gcd, hypot, sqrt

import numpy as np
from numba import njit

from .grid import DiscreteDomain

_FAR, _TRIAL, _KNOWN = 0, 1, 2


@dataclass(frozen=True)
class DistanceField:
    phi: np.ndarray
    metric_tag: str = "d"


@njit(cache=True)
def _fast_march(slowness, h, seed_idx, seed_val, nrow, ncol):
    n = nrow * ncol
    phi = np.full(n, np.inf)
    state = np.zeros(n, dtype=np.int8)
    heap = [(0.0, np.int64(0))]
    heap.pop()
    for k in range(seed_idx.size):
        s = seed_idx[k]
        if seed_val[k] < phi[s]:
            phi[s] = seed_val[k]
            state[s] = _TRIAL
            heapq.heappush(heap, (phi[s], s))
    while len(heap) > 0:
        val, k = heapq.heappop(heap)
        if state[k] == _KNOWN or val > phi[k]:
            continue
        state[k] = _KNOWN
        j = k // ncol
        i = k - j * ncol
        for dj, di in ((0, -1), (0, 1), (-1, 0), (1, 0)):
            jj = j + dj
            ii = i + di
            if jj < 0 or jj >= nrow or ii < 0 or ii >= ncol:
                continue
            q = jj * ncol + ii
            if state[q] == _KNOWN:
                continue
            a = np.inf
            if ii > 0 and state[q - 1] == _KNOWN:
                a = phi[q - 1]
            if ii < ncol - 1 and state[q + 1] == _KNOWN and phi[q + 1] < a:
                a = phi[q + 1]
            b = np.inf
            if jj > 0 and state[q - ncol] == _KNOWN:
                b = phi[q - ncol]
            if jj < nrow - 1 and state[q + ncol] == _KNOWN and phi[q + ncol] < b:
                b = phi[q + ncol]
            f = h * slowness[q]
            if abs(a - b) >= f:
                cand = min(a, b) + f
            else:
                cand = 0.5 * (a + b + sqrt(2.0 * f * f - (a - b) ** 2))
            if cand < phi[q]:
                phi[q] = cand
                state[q] = _TRIAL
                heapq.heappush(heap, (cand, q))
    return phi


def _check_inputs(speed, seeds):
    if len(seeds) == 0:
        raise ValueError("no sources")
    speed = np.asarray(speed, dtype=float)
    if not np.all(speed > 0) or not np.all(np.isfinite(speed)):
        raise ValueError("invalid speed")
    return speed


def _seed_arrays(domain_shape, seeds):
    ncol = domain_shape[1]
    idx = np.empty(len(seeds), dtype=np.int64)
    val = np.empty(len(seeds))
    for k, ((j, i), v) in enumerate(seeds):
        if not np.isfinite(v):
            raise ValueError("seed values must be finite")
        idx[k] = int(j) * ncol + int(i)
        val[k] = float(v)
    return idx, val


def eikonal_distance(domain: DiscreteDomain, speed_field, seeds, metric_tag: str = "d") -> DistanceField:
    """Travel-time field from seeds ``[((j, i), value), ...]`` by fast marching.

    The seed value is the arrival time imposed at the node; a seed may still be
    lowered by a neighbour reaching it earlier, which is what makes negative
    offsets (``-tau``) produce ``min_y (d(x, y) - tau(y))``.
    """
    speed = _check_inputs(speed_field, seeds)
    if speed.shape != domain.shape:
        raise ValueError(f"speed has shape {speed.shape}, expected {domain.shape}")
    idx, val = _seed_arrays(domain.shape, seeds)
    phi = _fast_march((1.0 / speed).ravel(), domain.h, idx, val, *domain.shape)
    return DistanceField(phi.reshape(domain.shape), metric_tag)


# --------------------------------------------------------------------------- #
# graph oracle


def stencil(radius: int) -> list[tuple[int, int]]:
    """Primitive lattice directions ``(dj, di)`` with ``max(|dj|, |di|) <= radius``."""
    out = []
    for dj in range(-radius, radius + 1):
        for di in range(-radius, radius + 1):
            if (dj, di) != (0, 0) and gcd(abs(dj), abs(di)) == 1:
                out.append((dj, di))
    return out


@njit(cache=True)
def _dijkstra(slowness, h, seed_idx, seed_val, nrow, ncol, offs, nsub):
    n = nrow * ncol
    dist = np.full(n, np.inf)
    done = np.zeros(n, dtype=np.bool_)
    heap = [(0.0, np.int64(0))]
    heap.pop()
    for k in range(seed_idx.size):
        s = seed_idx[k]
        if seed_val[k] < dist[s]:
            dist[s] = seed_val[k]
            heapq.heappush(heap, (dist[s], s))
    while len(heap) > 0:
        val, k = heapq.heappop(heap)
        if done[k] or val > dist[k]:
            continue
        done[k] = True
        j = k // ncol
        i = k - j * ncol
        for m in range(offs.shape[0]):
            dj = offs[m, 0]
            di = offs[m, 1]
            jj = j + dj
            ii = i + di
            if jj < 0 or jj >= nrow or ii < 0 or ii >= ncol:
                continue
            q = jj * ncol + ii
            if done[q]:
                continue
            # slowness averaged along the segment by sampling the nearest nodes
            acc = 0.0
            for s in range(nsub + 1):
                t = s / nsub
                sj = int(round(j + t * dj))
                si = int(round(i + t * di))
                w = 0.5 if (s == 0 or s == nsub) else 1.0
                acc += w * slowness[sj * ncol + si]
            length = h * hypot(float(dj), float(di))
            cand = val + length * acc / nsub
            if cand < dist[q]:
                dist[q] = cand
                heapq.heappush(heap, (cand, q))
    return dist


def dijkstra_distance(domain: DiscreteDomain, speed_field, seeds, radius: int = 4) -> np.ndarray:
    """Shortest-path travel times on the lattice graph with a long-range stencil.

    Independent of the fast-marching update: edges join nodes up to ``radius``
    cells apart and are weighted by their length times the slowness averaged
    along the segment.  Anisotropy bias is below 1% for ``radius >= 4``.
    """
    speed = _check_inputs(speed_field, seeds)
    idx, val = _seed_arrays(domain.shape, seeds)
    offs = np.array(stencil(radius), dtype=np.int64)
    nsub = 2 * radius
    return _dijkstra((1.0 / speed).ravel(), domain.h, idx, val, *domain.shape, offs, nsub).reshape(domain.shape)

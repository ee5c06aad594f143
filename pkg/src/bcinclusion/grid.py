"""Rectangular node grids, boundary enumeration and piecewise-constant speed models.

Fields live on grid *nodes* and are stored as ``(ny + 1, nx + 1)`` arrays indexed
``[j, i]`` with ``x = i * h`` and ``y = j * h``.  Every node owns the dual cell
around it (full, half or quarter cell), which is the quadrature used for volumes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Cells kept free of inclusions next to the outer boundary.
COLLAR_CELLS = 2


@dataclass(frozen=True)
class DiscreteDomain:
    """Axis-aligned rectangle ``[0, Lx] x [0, Ly]`` sampled with square cells."""

    nx: int
    ny: int
    h: float

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ValueError("grid needs at least 4 cells per direction")
        if not self.h > 0:
            raise ValueError("cell size must be positive")

    @classmethod
    def rectangle(cls, nx: int, ny: int, Lx: float = 1.0, Ly: float | None = None):
        h = Lx / nx
        if Ly is not None and abs(Ly / ny - h) > 1e-12 * max(1.0, h):
            raise ValueError(f"non-square cells: Lx/nx={h}, Ly/ny={Ly / ny}")
        return cls(nx, ny, h)

    @classmethod
    def square(cls, n: int, L: float = 1.0):
        return cls(n, n, L / n)

    @property
    def Lx(self) -> float:
        return self.nx * self.h

    @property
    def Ly(self) -> float:
        return self.ny * self.h

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny + 1, self.nx + 1)

    @property
    def perimeter(self) -> float:
        return 2.0 * (self.Lx + self.Ly)

    @property
    def diameter(self) -> float:
        return float(np.hypot(self.Lx, self.Ly))

    @property
    def n_boundary(self) -> int:
        return 2 * (self.nx + self.ny)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinate arrays ``(X, Y)`` of shape :attr:`shape`."""
        x = np.arange(self.nx + 1) * self.h
        y = np.arange(self.ny + 1) * self.h
        return np.meshgrid(x, y)

    def cell_weights(self) -> np.ndarray:
        """Dual-cell areas; they sum to ``Lx * Ly`` exactly."""
        wx = np.full(self.nx + 1, self.h)
        wx[[0, -1]] *= 0.5
        wy = np.full(self.ny + 1, self.h)
        wy[[0, -1]] *= 0.5
        return np.outer(wy, wx)

    @property
    def boundary_nodes(self) -> np.ndarray:
        """``(n_b, 2)`` array of ``(j, i)`` indices, counter-clockwise from the origin."""
        return _boundary_nodes(self.nx, self.ny)

    @property
    def boundary_arc(self) -> np.ndarray:
        """Arc-length coordinate ``s`` in ``[0, perimeter)`` of each boundary node."""
        return np.arange(self.n_boundary) * self.h

    def boundary_points(self) -> np.ndarray:
        """``(n_b, 2)`` physical ``(x, y)`` positions of the boundary nodes."""
        b = self.boundary_nodes
        return np.column_stack([b[:, 1] * self.h, b[:, 0] * self.h])

    def boundary_lengths(self) -> np.ndarray:
        """Euclidean boundary quadrature weights (trapezoid; corners get two halves)."""
        return np.full(self.n_boundary, self.h)

    def boundary_flat(self) -> np.ndarray:
        """Flat (row-major) indices of the boundary nodes."""
        b = self.boundary_nodes
        return b[:, 0] * (self.nx + 1) + b[:, 1]

    def boundary_normals(self) -> np.ndarray:
        """Outward unit normals; corners get the normalised diagonal."""
        b = self.boundary_nodes
        n = np.zeros((len(b), 2))
        n[b[:, 1] == 0, 0] = -1.0
        n[b[:, 1] == self.nx, 0] = 1.0
        n[b[:, 0] == 0, 1] = -1.0
        n[b[:, 0] == self.ny, 1] = 1.0
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def arc_distance(self, k1: int, k2: int) -> float:
        """Distance between two boundary nodes measured along the boundary."""
        d = abs(k1 - k2) * self.h
        return min(d, self.perimeter - d)

    def node_of_point(self, x: float, y: float) -> tuple[int, int]:
        return int(round(y / self.h)), int(round(x / self.h))

    def boundary_index_of_point(self, x: float, y: float) -> int:
        """Index of the boundary node nearest to ``(x, y)``."""
        d = np.hypot(*(self.boundary_points() - np.array([x, y])).T)
        return int(np.argmin(d))

    def interior_collar(self, cells: int = COLLAR_CELLS) -> np.ndarray:
        """Nodes strictly farther than ``cells`` cells from the boundary."""
        m = np.zeros(self.shape, dtype=bool)
        m[cells + 1 : -cells - 1, cells + 1 : -cells - 1] = True
        return m

    def refined(self, factor: int) -> "DiscreteDomain":
        return DiscreteDomain(self.nx * factor, self.ny * factor, self.h / factor)

    def extended(self, cells: int) -> "DiscreteDomain":
        """The same grid padded by ``cells`` nodes on every side."""
        return DiscreteDomain(self.nx + 2 * cells, self.ny + 2 * cells, self.h)


def _boundary_nodes(nx: int, ny: int) -> np.ndarray:
    bottom = [(0, i) for i in range(nx)]
    right = [(j, nx) for j in range(ny)]
    top = [(ny, i) for i in range(nx, 0, -1)]
    left = [(j, 0) for j in range(ny, 0, -1)]
    return np.array(bottom + right + top + left, dtype=np.int64)


# --------------------------------------------------------------------------- #
# inclusion primitives


@dataclass(frozen=True)
class Disk:
    center: tuple[float, float]
    radius: float
    contrast: float
    kind: str = field(default="disk", init=False)

    def contains(self, X, Y):
        cx, cy = self.center
        return (X - cx) ** 2 + (Y - cy) ** 2 <= self.radius**2

    def distance(self, X, Y):
        cx, cy = self.center
        return np.maximum(np.hypot(X - cx, Y - cy) - self.radius, 0.0)

    def to_dict(self):
        return {"kind": "disk", "center": list(self.center), "radius": self.radius,
                "contrast": self.contrast}


@dataclass(frozen=True)
class Triangle:
    vertices: tuple[tuple[float, float], tuple[float, float], tuple[float, float]]
    contrast: float
    kind: str = field(default="triangle", init=False)

    def contains(self, X, Y):
        (x0, y0), (x1, y1), (x2, y2) = self.vertices
        s = []
        for (ax, ay), (bx, by) in [((x0, y0), (x1, y1)), ((x1, y1), (x2, y2)), ((x2, y2), (x0, y0))]:
            s.append((bx - ax) * (Y - ay) - (by - ay) * (X - ax))
        s = np.array(s)
        tol = 1e-12
        return np.all(s >= -tol, axis=0) | np.all(s <= tol, axis=0)

    def distance(self, X, Y):
        X, Y = np.broadcast_arrays(np.asarray(X, float), np.asarray(Y, float))
        v = np.asarray(self.vertices, float)
        d = np.full(X.shape, np.inf)
        for a, b in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])]:
            d = np.minimum(d, _segment_distance(X, Y, a, b))
        return np.where(self.contains(X, Y), 0.0, d)

    def to_dict(self):
        return {"kind": "triangle", "vertices": [list(v) for v in self.vertices],
                "contrast": self.contrast}


@dataclass(frozen=True)
class HalfPlane:
    """``{y <= level}``, always clipped to the interior collar of the domain."""

    level: float
    contrast: float
    kind: str = field(default="halfplane", init=False)

    def contains(self, X, Y):
        return Y <= self.level

    def distance(self, X, Y):
        return np.maximum(np.asarray(Y, float) - self.level, 0.0)

    def to_dict(self):
        return {"kind": "halfplane", "level": self.level, "contrast": self.contrast}


Inclusion = Disk | Triangle | HalfPlane


def _segment_distance(X, Y, a, b):
    ab = b - a
    t = ((X - a[0]) * ab[0] + (Y - a[1]) * ab[1]) / float(ab @ ab)
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(X - a[0] - t * ab[0], Y - a[1] - t * ab[1])


def inclusion_from_dict(d: dict) -> Inclusion:
    kind = d.get("kind")
    if kind == "disk":
        return Disk(tuple(map(float, d["center"])), float(d["radius"]), float(d["contrast"]))
    if kind == "triangle":
        verts = tuple(tuple(map(float, v)) for v in d["vertices"])
        if len(verts) != 3:
            raise ValueError("triangle needs exactly 3 vertices")
        return Triangle(verts, float(d["contrast"]))
    if kind == "halfplane":
        return HalfPlane(float(d["level"]), float(d["contrast"]))
    raise ValueError(f"unknown inclusion kind {kind!r}")


# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class SpeedModel:
    """Background speed ``c0``, inclusion mask and contrast on the node grid.

    The total speed is ``c_tilde = c0 * contrast`` on the inclusion and ``c0``
    elsewhere; the two volume densities are ``c0**-2`` and ``c_tilde**-2``.
    """

    domain: DiscreteDomain
    c0: np.ndarray
    sigma_mask: np.ndarray
    contrast: np.ndarray
    inclusions: tuple = ()

    def __post_init__(self):
        shape = self.domain.shape
        for name in ("c0", "sigma_mask", "contrast"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if not np.all(self.c0 > 0) or not np.all(np.isfinite(self.c0)):
            raise ValueError("invalid speed: c0 must be positive and finite")
        if np.any(self.sigma_mask & ~self.domain.interior_collar()):
            raise ValueError("inclusion touches the boundary collar")
        if np.any(self.contrast[self.sigma_mask] <= 0):
            raise ValueError("invalid speed: contrast must be positive")

    @classmethod
    def build(cls, domain: DiscreteDomain, c0: float | np.ndarray = 1.0,
              inclusions: Sequence[Inclusion] = ()) -> "SpeedModel":
        X, Y = domain.coords()
        c0f = np.broadcast_to(np.asarray(c0, dtype=float), domain.shape).copy()
        collar = domain.interior_collar()
        mask = np.zeros(domain.shape, dtype=bool)
        contrast = np.ones(domain.shape)
        for inc in inclusions:
            m = inc.contains(X, Y)
            if not isinstance(inc, HalfPlane) and np.any(m & ~collar):
                raise ValueError(f"{inc.kind} inclusion touches the boundary collar")
            m &= collar
            mask |= m
            contrast[m] = inc.contrast
        return cls(domain, c0f, mask, contrast, tuple(inclusions))

    def background(self) -> "SpeedModel":
        """The same background without inclusions."""
        return SpeedModel(self.domain, self.c0, np.zeros_like(self.sigma_mask),
                          np.ones_like(self.contrast))

    @property
    def c_tilde(self) -> np.ndarray:
        return np.where(self.sigma_mask, self.c0 * self.contrast, self.c0)

    @property
    def has_inclusion(self) -> bool:
        return bool(self.sigma_mask.any())

    @property
    def constant_background(self) -> bool:
        return bool(np.all(self.c0 == self.c0.flat[0]))

    def density(self, with_inclusion: bool = True) -> np.ndarray:
        c = self.c_tilde if with_inclusion else self.c0
        return c**-2.0

    def boundary_weights(self) -> np.ndarray:
        """Quadrature weights of ``dS_g = c0**-1 dl`` at the boundary nodes."""
        b = self.domain.boundary_nodes
        return self.domain.boundary_lengths() / self.c0[b[:, 0], b[:, 1]]

    def sigma_distance(self, X, Y) -> np.ndarray:
        """Euclidean distance from points to the union of the inclusion primitives."""
        d = np.full(np.broadcast(X, Y).shape, np.inf)
        for inc in self.inclusions:
            d = np.minimum(d, inc.distance(X, Y))
        return d

    def digest(self) -> str:
        m = hashlib.sha256()
        m.update(np.asarray([self.domain.nx, self.domain.ny, self.domain.h]).tobytes())
        m.update(np.ascontiguousarray(self.c0).tobytes())
        m.update(np.ascontiguousarray(self.c_tilde).tobytes())
        return m.hexdigest()[:16]

"""Leapfrog simulation of the wave equation with Neumann boundary sources.

The semi-discrete system is ``M u'' = -S u + B f`` where ``M`` is the dual-cell
mass with density ``c_tilde**-2``, ``S`` the 5-point stiffness with mirrored
ghost nodes and ``B`` the ``dS_g`` boundary quadrature.  The ghost value at a
boundary node is ``u_inner + 2 h f / c0``, i.e. the source is the normal
derivative normalised in the background metric.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .grid import DiscreteDomain, SpeedModel

log = logging.getLogger(__name__)

DEFAULT_CFL = 0.5


class CFLError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


# --------------------------------------------------------------------------- #
# time grid and boundary signals


@dataclass(frozen=True)
class TimeGrid:
    """Samples ``t_k = k dt``, ``k = 0..2 n_half``, so that ``t_{n_half} = T``."""

    T: float
    n_half: int

    @property
    def dt(self) -> float:
        return self.T / self.n_half

    @property
    def nt(self) -> int:
        return 2 * self.n_half + 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.nt) * self.dt

    @classmethod
    def for_speed(cls, T: float, h: float, cmax: float, cfl: float = DEFAULT_CFL,
                  multiple: int = 1) -> "TimeGrid":
        """Coarsest grid with ``dt <= cfl h / cmax`` and ``n_half`` divisible by ``multiple``."""
        if T <= 0:
            raise ValueError("T must be positive")
        dt_max = cfl * h / cmax
        per = int(np.ceil(T / (multiple * dt_max) - 1e-12))
        return cls(T, per * multiple)


@dataclass
class BoundarySignal:
    """A function on ``(0, 2T) x boundary`` sampled as ``values[k, b]``.

    ``weights`` are the ``dS_g`` boundary quadrature weights; the inner product
    is ``sum f g dt weights``.
    """

    values: np.ndarray
    time: TimeGrid
    weights: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.time.nt, len(self.weights)):
            raise ValueError(f"signal shape {self.values.shape} does not match "
                             f"({self.time.nt}, {len(self.weights)})")

    @classmethod
    def zeros(cls, time: TimeGrid, weights) -> "BoundarySignal":
        return cls(np.zeros((time.nt, len(weights))), time, np.asarray(weights))

    def like(self, values) -> "BoundarySignal":
        return BoundarySignal(values, self.time, self.weights)

    def inner(self, other: "BoundarySignal") -> float:
        return float(self.time.dt * np.einsum("kb,kb,b->", self.values, other.values, self.weights))

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self), 0.0)))

    def __add__(self, other):
        return self.like(self.values + other.values)

    def __sub__(self, other):
        return self.like(self.values - other.values)

    def __mul__(self, a: float):
        return self.like(a * self.values)

    __rmul__ = __mul__


# --------------------------------------------------------------------------- #
# solver


@dataclass
class WaveRecord:
    trace: np.ndarray  # (..., nt, n_b)
    snapshot: np.ndarray | None = None
    energies: np.ndarray | None = None
    snapshot_step: int | None = None


def _neumann_count(domain: DiscreteDomain) -> np.ndarray:
    b = domain.boundary_nodes
    return ((b[:, 1] == 0) | (b[:, 1] == domain.nx)).astype(float) + \
        ((b[:, 0] == 0) | (b[:, 0] == domain.ny)).astype(float)


def _mirror_laplacian(u: np.ndarray, h: float, out: np.ndarray) -> np.ndarray:
    """5-point Laplacian with homogeneous Neumann ghosts over the last two axes."""
    out[...] = -4.0 * u
    out[..., :, 1:] += u[..., :, :-1]
    out[..., :, :-1] += u[..., :, 1:]
    out[..., :, 0] += u[..., :, 1]
    out[..., :, -1] += u[..., :, -2]
    out[..., 1:, :] += u[..., :-1, :]
    out[..., :-1, :] += u[..., 1:, :]
    out[..., 0, :] += u[..., 1, :]
    out[..., -1, :] += u[..., -2, :]
    out /= h * h
    return out


def check_cfl(speed: SpeedModel, dt: float, cfl: float = DEFAULT_CFL) -> None:
    limit = cfl * speed.domain.h / float(speed.c_tilde.max())
    if dt > limit * (1 + 1e-12):
        raise CFLError(f"CFL violated: dt={dt:.6g} > {cfl} h / max(c)={limit:.6g}")


def solve_wave(speed: SpeedModel, f, time: TimeGrid | None = None, *, trace: bool = True,
               snapshot_at_T: bool = False, energy: bool = False,
               cfl: float = DEFAULT_CFL) -> WaveRecord:
    """Run the leapfrog scheme from rest under the Neumann source ``f``.

    ``f`` is a :class:`BoundarySignal` or a raw array of shape
    ``(..., nt, n_b)``; leading axes are solved as a batch.  The trace holds
    ``u`` at the boundary nodes for every time sample, the snapshot ``u`` at
    the sample nearest ``T``.  ``energy`` records the leapfrog-conserved
    energy ``(v' M v + u_{n+1}' S u_n) / 2`` at the half steps.
    """
    if isinstance(f, BoundarySignal):
        time = f.time
        values = f.values
    else:
        values = np.asarray(f, dtype=float)
        if time is None:
            raise ValueError("a time grid is required for raw source arrays")
    dom = speed.domain
    nt, nb = values.shape[-2:]
    if nt != time.nt or nb != dom.n_boundary:
        raise ValueError(f"source shape {values.shape[-2:]} does not match ({time.nt}, {dom.n_boundary})")
    dt = time.dt
    check_cfl(speed, dt, cfl)

    batch = values.shape[:-2]
    ctil2 = speed.c_tilde**2
    h = dom.h
    bj, bi = dom.boundary_nodes.T
    # ghost contributions 2 f / (h c0) per outward direction
    src_scale = 2.0 * _neumann_count(dom) / (h * speed.c0[bj, bi])

    u_prev = np.zeros(batch + dom.shape)
    u = np.zeros_like(u_prev)
    lap = np.empty_like(u)
    tr = np.zeros(batch + (nt, nb)) if trace else None
    snap_step = time.n_half
    snap = None
    energies = np.zeros(batch + (nt - 1,)) if energy else None
    mass = dom.cell_weights() / ctil2
    cw = dom.cell_weights()
    dt2c2 = dt * dt * ctil2

    for n in range(nt):
        if trace:
            tr[..., n, :] = u[..., bj, bi]
        if snapshot_at_T and n == snap_step:
            snap = u.copy()
        if n == nt - 1:
            break
        _mirror_laplacian(u, h, lap)
        if energy:
            lap_free = lap.copy()
        lap[..., bj, bi] += src_scale * values[..., n, :]
        u_next = 2.0 * u - u_prev + dt2c2 * lap
        if energy:
            v = (u_next - u) / dt
            kin = np.einsum("...ji,ji->...", v * v, mass)
            pot = -np.einsum("...ji,...ji,ji->...", u_next, lap_free, cw)
            energies[..., n] = 0.5 * (kin + pot)
        u_prev, u = u, u_next
        if n % 100 == 99 and not np.all(np.isfinite(u)):
            raise NumericalFailure(f"non-finite wave field at step {n + 1}")
    if not np.all(np.isfinite(u)):
        raise NumericalFailure(f"non-finite wave field at step {nt - 1}")
    return WaveRecord(tr, snap, energies, snap_step if snapshot_at_T else None)


def snapshot_inner(speed: SpeedModel, u: np.ndarray, v: np.ndarray) -> float:
    """``(u, v)`` in ``L2(M; c_tilde**-2 dx)`` with dual-cell quadrature."""
    w = speed.domain.cell_weights() * speed.density(True)
    return float(np.sum(u * v * w))


# --------------------------------------------------------------------------- #
# source basis and the Neumann-to-Dirichlet operator


@dataclass(frozen=True)
class SourceBasis:
    """Indicators of (boundary patch) x (time bin) on ``(0, T)``, normalised in S.

    Patch ``p`` holds the contiguous boundary nodes ``offset + p * w + [0, w)``
    (mod ``n_b``); bin ``k`` holds the samples ``[k s, (k + 1) s)`` where
    ``s = n_half / n_bin``.  Element ``(p, k)`` has flat index ``p * n_bin + k``.
    """

    n_patch: int
    n_bin: int
    n_boundary: int
    time: TimeGrid
    offset: int | None = None

    def __post_init__(self):
        if self.n_boundary % self.n_patch:
            raise ValueError(f"{self.n_boundary} boundary nodes do not split into {self.n_patch} patches")
        if self.time.n_half % self.n_bin:
            raise ValueError(f"{self.time.n_half} steps do not split into {self.n_bin} bins")

    @property
    def patch_width(self) -> int:
        return self.n_boundary // self.n_patch

    @property
    def steps_per_bin(self) -> int:
        return self.time.n_half // self.n_bin

    @property
    def size(self) -> int:
        return self.n_patch * self.n_bin

    @property
    def bin_width(self) -> float:
        return self.steps_per_bin * self.time.dt

    @property
    def patch_offset(self) -> int:
        return self.patch_width // 2 if self.offset is None else self.offset

    def patch_nodes(self, p: int) -> np.ndarray:
        w = self.patch_width
        return (self.patch_offset + p * w + np.arange(w)) % self.n_boundary

    def patch_of_node(self) -> np.ndarray:
        out = np.empty(self.n_boundary, dtype=np.int64)
        for p in range(self.n_patch):
            out[self.patch_nodes(p)] = p
        return out

    def patch_indicator(self) -> np.ndarray:
        """``(n_patch, n_b)`` 0/1 matrix."""
        m = np.zeros((self.n_patch, self.n_boundary))
        for p in range(self.n_patch):
            m[p, self.patch_nodes(p)] = 1.0
        return m

    def norms(self, weights) -> np.ndarray:
        """S-norms of the unnormalised indicators, per patch."""
        beta = self.patch_indicator() @ np.asarray(weights)
        return np.sqrt(self.steps_per_bin * self.time.dt * beta)

    def synthesize(self, coeffs, weights) -> BoundarySignal:
        """The signal ``sum_j coeffs[j] phi_j``."""
        c = np.asarray(coeffs, dtype=float).reshape(self.n_patch, self.n_bin) / self.norms(weights)[:, None]
        s = self.steps_per_bin
        vals = np.zeros((self.time.nt, self.n_boundary))
        per_step = np.repeat(c, s, axis=1)  # (n_patch, n_half)
        vals[: self.time.n_half] = (per_step.T @ self.patch_indicator())
        return BoundarySignal(vals, self.time, np.asarray(weights))

    def analyze(self, f: BoundarySignal) -> np.ndarray:
        """Coefficients ``<f, phi_j>_S`` (orthogonal projection onto the span)."""
        s = self.steps_per_bin
        wsum = (f.values[: self.time.n_half] * f.weights) @ self.patch_indicator().T  # (n_half, n_patch)
        binned = wsum.reshape(self.n_bin, s, self.n_patch).sum(axis=1).T  # (n_patch, n_bin)
        return (f.time.dt * binned / self.norms(f.weights)[:, None]).ravel()

    def spec(self) -> dict:
        return {"n_patch": self.n_patch, "n_bin": self.n_bin, "offset": self.patch_offset}


class BasisMismatch(ValueError):
    pass


@dataclass
class LambdaOperator:
    """Discrete Neumann-to-Dirichlet map ``f -> u^f`` on the boundary over ``(0, 2T)``.

    In ``precomputed`` mode ``impulse[p]`` is the trace produced by a unit
    source on patch ``p`` at sample 0 only.  The scheme is time invariant, so
    the response to any patch-constant source is a causal discrete
    convolution of its time profile with these columns.
    """

    speed: SpeedModel
    time: TimeGrid
    mode: str = "matrix_free"
    basis: SourceBasis | None = None
    impulse: np.ndarray | None = None  # (n_patch, nt, n_b)
    cfl: float = DEFAULT_CFL
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        check_cfl(self.speed, self.time.dt, self.cfl)
        if self.mode not in ("matrix_free", "precomputed"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "precomputed" and (self.basis is None or self.impulse is None):
            raise ValueError("precomputed mode needs a basis and impulse responses")

    @property
    def weights(self) -> np.ndarray:
        return self.speed.boundary_weights()

    def zero_signal(self) -> BoundarySignal:
        return BoundarySignal.zeros(self.time, self.weights)

    def solve(self, f: BoundarySignal) -> BoundarySignal:
        return f.like(solve_wave(self.speed, f, cfl=self.cfl).trace)

    def patch_response(self, profiles: np.ndarray) -> np.ndarray:
        """Traces for patch-constant sources; ``profiles`` is ``(n_patch, nt)``.

        Returns ``(nt, n_b)``: the sum over patches of the convolution of each
        time profile with the patch impulse response.
        """
        nt = self.time.nt
        out = np.zeros((nt, self.speed.domain.n_boundary))
        for p in range(self.basis.n_patch):
            if np.any(profiles[p]):
                out += _causal_conv(profiles[p], self.impulse[p], nt)
        return out

    def column(self, j: int) -> np.ndarray:
        """Trace of basis element ``j`` (``(nt, n_b)``)."""
        b = self.basis
        p, k = divmod(j, b.n_bin)
        s = b.steps_per_bin
        imp = self.impulse[p]
        col = imp.copy()
        for m in range(1, s):
            col[m:] += imp[:-m]
        out = np.zeros_like(col)
        out[k * s:] = col[: self.time.nt - k * s]
        return out / b.norms(self.weights)[p]

    def apply(self, f: BoundarySignal) -> BoundarySignal:
        if f.time != self.time or len(f.weights) != self.speed.domain.n_boundary:
            raise BasisMismatch("signal discretisation does not match the operator")
        if self.mode == "matrix_free":
            return self.solve(f)
        coeffs = self.basis.analyze(f)
        back = self.basis.synthesize(coeffs, f.weights)
        if (f - back).norm() > 1e-9 * max(f.norm(), 1e-300):
            raise BasisMismatch("signal is not in the span of the source basis")
        b = self.basis
        prof = np.zeros((b.n_patch, self.time.nt))
        c = coeffs.reshape(b.n_patch, b.n_bin) / b.norms(self.weights)[:, None]
        prof[:, : self.time.n_half] = np.repeat(c, b.steps_per_bin, axis=1)
        return f.like(self.patch_response(prof))


def _causal_conv(profile: np.ndarray, kernel: np.ndarray, nt: int) -> np.ndarray:
    """``out[n] = sum_m profile[m] kernel[n - m]`` for ``n < nt``."""
    from scipy.signal import oaconvolve

    return oaconvolve(profile[:, None], kernel, axes=0)[:nt]


def assemble_lambda_matrix(speed: SpeedModel, basis: SourceBasis, cfl: float = DEFAULT_CFL,
                           batch: int = 32) -> LambdaOperator:
    """Precompute the per-patch impulse responses with batched solves."""
    time = basis.time
    nb = speed.domain.n_boundary
    ind = basis.patch_indicator()
    impulse = np.empty((basis.n_patch, time.nt, nb))
    for start in range(0, basis.n_patch, batch):
        stop = min(start + batch, basis.n_patch)
        src = np.zeros((stop - start, time.nt, nb))
        src[:, 0, :] = ind[start:stop]
        try:
            impulse[start:stop] = solve_wave(speed, src, time, cfl=cfl).trace
        except NumericalFailure as exc:
            raise NumericalFailure(f"columns {start}..{stop - 1}: {exc}") from exc
    log.info("assembled Lambda: %d patches x %d samples x %d nodes", basis.n_patch, time.nt, nb)
    meta = {"speed_hash": speed.digest(), "snapshot_time": time.n_half * time.dt}
    return LambdaOperator(speed, time, "precomputed", basis, impulse, cfl, meta)

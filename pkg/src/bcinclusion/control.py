"""Boundary control: the K operator, the regularised control equation and volumes.

Everything here works on coefficient vectors over a :class:`SourceBasis`.  The
basis is orthonormal in S, so the Euclidean inner product of coefficients is
the S inner product of the synthesised signals.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .forward import BasisMismatch, BoundarySignal, LambdaOperator, SourceBasis
from .operators import i_adj_one, op_I, op_J, op_R

log = logging.getLogger(__name__)


def bin_projector(basis: SourceBasis) -> np.ndarray:
    """``(n_bin, nt)`` matrix summing ``dt * g(n)`` over each time bin."""
    t = basis.time
    E = np.zeros((basis.n_bin, t.nt))
    s = basis.steps_per_bin
    for k in range(basis.n_bin):
        E[k, k * s : (k + 1) * s] = t.dt
    return E


def bin_profiles(basis: SourceBasis) -> np.ndarray:
    """``(n_bin, nt)`` unnormalised indicators of the time bins."""
    return bin_projector(basis) / basis.time.dt


@dataclass
class KOperator:
    """``K = J Lambda - R Lambda R J`` on basis coefficients (symmetrised)."""

    matrix: np.ndarray
    basis: SourceBasis
    asymmetry: float
    norm_estimate: float = float("nan")
    raw: np.ndarray | None = None

    def __matmul__(self, x):
        return self.matrix @ x


def _reduced_impulse(op: LambdaOperator) -> np.ndarray:
    """``G[p, q, n] = sum_{y in q} w_y impulse[p][n, y]``."""
    ind = op.basis.patch_indicator() * op.weights  # (n_patch, n_b)
    return np.einsum("pnb,qb->pqn", op.impulse, ind)


def _rfft_len(nt: int) -> int:
    return 1 << int(np.ceil(np.log2(2 * nt)))


def _conv_time(F_profiles: np.ndarray, kernels: np.ndarray, nt: int) -> np.ndarray:
    """Causal convolution of pre-transformed profiles ``(K, nf)`` with ``kernels (Q, nt)`` -> ``(Q, K, nt)``."""
    nfft = _rfft_len(nt)
    Fk = np.fft.rfft(kernels, nfft, axis=-1)
    return np.fft.irfft(Fk[:, None, :] * F_profiles[None, :, :], nfft, axis=-1)[..., :nt]


def _bin_sum(A: np.ndarray, basis: SourceBasis) -> np.ndarray:
    """``sum dt * A`` over each time bin along axis -2 (the rows of :func:`bin_projector`)."""
    nh, s = basis.time.n_half, basis.steps_per_bin
    lead = A.shape[:-2]
    return basis.time.dt * A[..., :nh, :].reshape(*lead, basis.n_bin, s, A.shape[-1]).sum(axis=-2)


def assemble_K(op: LambdaOperator, keep_raw: bool = False) -> KOperator:
    """Matrix of ``K`` on the source basis, from the precomputed Lambda.

    Both terms are formed literally: ``J`` applied after ``Lambda`` and
    ``R Lambda R J`` applied to each basis element.  The result is
    symmetrised; the relative asymmetry beforehand is kept as a diagnostic.
    """
    if op.mode != "precomputed":
        raise BasisMismatch("assemble_K needs a precomputed Lambda operator")
    b = op.basis
    t = op.time
    nt = t.nt
    G = _reduced_impulse(op)
    nu = 1.0 / b.norms(op.weights)
    P = bin_profiles(b)
    # R J applied to every bin indicator; the indicators carry no space axis
    RJP = op_R(op_J(P[:, :, None], t))[..., 0]  # (n_bin, nt)
    nfft = _rfft_len(nt)
    FP = np.fft.rfft(P, nfft, axis=-1)
    FRJP = np.fft.rfft(RJP, nfft, axis=-1)
    K = np.zeros((b.n_patch, b.n_bin, b.n_patch, b.n_bin))  # [q, l, p, k]
    for p in range(b.n_patch):
        lam = _conv_time(FP, G[p], nt)  # (q, k, n)  Lambda 1_{p,k} summed over q
        A = _bin_sum(op_J(np.swapaxes(lam, -1, -2), t), b)  # (q, l, k)
        lam_rj = _conv_time(FRJP, G[p], nt)[..., ::-1]  # (q, k, n), R applied
        B = _bin_sum(np.swapaxes(lam_rj, -1, -2), b)
        K[:, :, p, :] = (A - B) * nu[p] * nu[:, None, None]
    K = K.reshape(b.size, b.size)
    nrm = np.linalg.norm(K)
    asym = float(np.linalg.norm(K - K.T) / nrm) if nrm > 0 else 0.0
    Ks = 0.5 * (K + K.T)
    log.info("K assembled: size %d, asymmetry %.3e", b.size, asym)
    out = KOperator(Ks, b, asym, raw=K if keep_raw else None)
    out.norm_estimate = power_norm(Ks)
    return out


def apply_K_matrix_free(op: LambdaOperator, f: BoundarySignal) -> BoundarySignal:
    """``K f`` with two forward solves (no basis required)."""
    jl = op_J(op.solve(f))
    rlrj = op_R(op.solve(op_R(op_J(f))))
    return jl - rlrj


def power_norm(A: np.ndarray, iters: int = 20, seed: int = 0) -> float:
    """Spectral norm estimate of a symmetric matrix by power iteration."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(A.shape[0])
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        y = A @ x
        lam = float(np.linalg.norm(y))
        if lam == 0:
            return 0.0
        x = y / lam
    return lam


# --------------------------------------------------------------------------- #
# projections and right-hand sides


def snap_tau(tau_nodes: np.ndarray, basis: SourceBasis) -> np.ndarray:
    """Per-node tau snapped down to bin boundaries and to the patch minimum."""
    tau_nodes = np.asarray(tau_nodes, dtype=float)
    bw = basis.bin_width
    out = np.empty_like(tau_nodes)
    for p in range(basis.n_patch):
        nodes = basis.patch_nodes(p)
        t = np.clip(tau_nodes[nodes].min(), 0.0, basis.time.T)
        out[nodes] = np.floor(t / bw + 1e-9) * bw
    return out


def tau_mask(tau_nodes: np.ndarray, basis: SourceBasis) -> np.ndarray:
    """0/1 diagonal of ``P_tau``: keep bins inside ``[T - tau(y), T]`` on the whole patch."""
    T = basis.time.T
    bw = basis.bin_width
    keep = np.zeros((basis.n_patch, basis.n_bin))
    for p in range(basis.n_patch):
        t = np.clip(np.min(tau_nodes[basis.patch_nodes(p)]), 0.0, T)
        start = np.arange(basis.n_bin) * bw
        keep[p] = start >= T - t - 1e-9 * bw
    return keep.ravel()


def project_tau(f, tau_nodes, basis: SourceBasis, weights=None):
    """``P_tau`` on coefficients, or on a signal in the span of the basis."""
    m = tau_mask(tau_nodes, basis)
    if isinstance(f, BoundarySignal):
        return basis.synthesize(m * basis.analyze(f), f.weights)
    return m * np.asarray(f)


def rhs_vector(basis: SourceBasis, weights) -> np.ndarray:
    """Basis coefficients of ``I^+ 1 = (T - s)_+``."""
    t = basis.time
    prof = i_adj_one(t)
    sig = BoundarySignal(np.repeat(prof[:, None], basis.n_boundary, axis=1), t, np.asarray(weights))
    return basis.analyze(sig)


def volume_functional(basis: SourceBasis, weights) -> np.ndarray:
    """``c_j = (I phi_j, 1)_S`` so that ``(I f, 1) = c . coeffs``."""
    t = basis.time
    Iprof = op_I(bin_profiles(basis)[:, :, None], t)[..., 0]  # (n_bin, nt)
    beta = basis.patch_indicator() @ np.asarray(weights)
    nu = 1.0 / basis.norms(weights)
    return (t.dt * Iprof.sum(axis=1)[None, :] * (beta * nu)[:, None]).ravel()


# --------------------------------------------------------------------------- #
# control equation


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool
    history: list = field(default_factory=list)
    flag: str = ""


def conjugate_gradient(apply, b, tol=1e-8, maxiter=None, x0=None) -> CGResult:
    """Plain CG for a symmetric positive definite operator.

    Returns the best iterate (smallest residual) if the cap is hit.
    """
    n = b.size
    maxiter = 10 * n if maxiter is None else maxiter
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - apply(x)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return CGResult(np.zeros(n), 0, 0.0, True, [0.0])
    p = r.copy()
    rr = r @ r
    hist = [np.sqrt(rr) / bnorm]
    best = (hist[0], x.copy())
    it = 0
    while hist[-1] > tol and it < maxiter:
        Ap = apply(p)
        a = rr / (p @ Ap)
        x += a * p
        r -= a * Ap
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
        hist.append(np.sqrt(rr) / bnorm)
        if hist[-1] < best[0]:
            best = (hist[-1], x.copy())
    conv = hist[-1] <= tol
    xo = x if conv else best[1]
    return CGResult(xo, it, hist[-1] if conv else best[0], conv, hist,
                    "" if conv else "unconverged")


@dataclass
class ControlProblem:
    K: KOperator
    tau_nodes: np.ndarray
    alpha: float
    rhs: np.ndarray
    mask: np.ndarray
    cg_tol: float = 1e-8
    cg_maxiter: int | None = None

    @classmethod
    def build(cls, K: KOperator, tau_nodes, alpha: float, weights, **kw) -> "ControlProblem":
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        tau_nodes = np.asarray(tau_nodes, dtype=float)
        mask = tau_mask(tau_nodes, K.basis)
        rhs = mask * rhs_vector(K.basis, weights)
        return cls(K, tau_nodes, alpha, rhs, mask, **kw)

    def apply(self, x):
        m = self.mask
        return m * (self.K.matrix @ (m * x)) + self.alpha * x

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


def solve_control(problem: ControlProblem, x0=None) -> CGResult:
    """Solve ``(P K P + alpha) f = P I^+ 1`` by conjugate gradients.

    Off the support of ``P_tau`` the equation reads ``alpha f = 0``, so CG
    runs on the active block only; the result is scattered back.
    """
    act = problem.active
    n = problem.rhs.size
    maxiter = problem.cg_maxiter or 10 * n
    if act.size == 0:
        return CGResult(np.zeros(n), 0, 0.0, True, [0.0])
    Kaa = problem.K.matrix[np.ix_(act, act)]
    a = problem.alpha
    res = conjugate_gradient(lambda v: Kaa @ v + a * v, problem.rhs[act], problem.cg_tol, maxiter,
                             None if x0 is None else np.asarray(x0)[act])
    x = np.zeros(n)
    x[act] = res.x
    res.x = x
    if not res.converged:
        log.warning("CG stopped after %d iterations at residual %.2e", res.iterations, res.residual)
    return res


def default_alpha_schedule(K: KOperator, n: int = 4) -> list[float]:
    return [K.norm_estimate * 10.0 ** (-k) for k in range(1, n + 1)]


@dataclass
class VolumeEstimate:
    value: float
    raw: list  # [(alpha, v_alpha, iterations, residual)]
    exponent: float = float("nan")
    fit_residual: float = float("nan")
    flag: str = ""


def extrapolate(alphas, values) -> tuple[float, float, float]:
    """Fit ``v = v0 + a alpha^p`` through the last three points; returns ``(v0, p, misfit)``.

    ``misfit`` is the largest deviation of the fitted curve at the earlier
    points (zero when only three are given).
    """
    a = np.asarray(alphas, float)[-3:]
    v = np.asarray(values, float)[-3:]
    d1, d2 = v[0] - v[1], v[1] - v[2]
    if d2 == 0 or d1 / d2 <= 0:
        raise ValueError("non-monotone tail")

    def g(p):
        return (a[0] ** p - a[1] ** p) / (a[1] ** p - a[2] ** p) - d1 / d2

    lo, hi = 1e-3, 8.0
    if g(lo) * g(hi) > 0:
        raise ValueError("no exponent fits the tail")
    p = brentq(g, lo, hi)
    coef = d2 / (a[1] ** p - a[2] ** p)
    v0 = v[2] - coef * a[2] ** p
    ea = np.asarray(alphas, float)[:-3]
    ev = np.asarray(values, float)[:-3]
    misfit = float(np.max(np.abs(v0 + coef * ea**p - ev))) if ea.size else 0.0
    return float(v0), float(p), misfit


def estimate_volume(K: KOperator, tau_nodes, alphas, weights, cg_tol=1e-8,
                    cg_maxiter=None, return_solutions: bool = False):
    """Volume ``m~(M~(tau))`` from ``(I f_alpha, 1)`` extrapolated to ``alpha -> 0``."""
    alphas = list(alphas)
    if len(alphas) < 3 or any(b >= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alpha schedule must be decreasing with at least 3 entries")
    c = volume_functional(K.basis, weights)
    raw, sols = [], []
    x0 = None
    for a in alphas:
        prob = ControlProblem.build(K, tau_nodes, a, weights, cg_tol=cg_tol, cg_maxiter=cg_maxiter)
        res = solve_control(prob, x0)
        x0 = res.x
        raw.append((a, float(c @ res.x), res.iterations, res.residual))
        sols.append(res.x)
    vals = [r[1] for r in raw]
    scale = max(abs(v) for v in vals)
    out = VolumeEstimate(vals[-1], raw)
    if scale == 0:
        out.value = 0.0
    else:
        rises = [vals[i + 1] - vals[i] for i in range(len(vals) - 1)]
        if min(rises) < -0.05 * scale:
            out.flag = "extrapolation unreliable"
        else:
            try:
                v0, p, mis = extrapolate(alphas, vals)
                out.value, out.exponent, out.fit_residual = v0, p, mis
            except ValueError:
                out.flag = "extrapolation unreliable"
    if return_solutions:
        return out, sols
    return out

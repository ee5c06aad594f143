"""Command line entry point.

``bcinclusion {forward|volumes|locate|hull|oracle|selftest} --config <path>``
with ``--store``/``--load`` for the Lambda operator and ``--out`` for the
output directory.  Exit codes: 0 ok, 2 config error, 3 numerical failure,
4 selftest failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .config import ConfigError, ExperimentConfig
from .control import estimate_volume
from .detect import DistanceProfile, reconstruct_hull_and_segments
from .eikonal import eikonal_distance
from .forward import BasisMismatch, CFLError, NumericalFailure, solve_wave
from .geometry import (TauFunction, background_distance_from_boundary, epsilon_scaling_probe,
                       exact_sigma_distance, tangent_tau, volume_pair)
from .io import StoreMismatch, load_lambda, store_lambda, write_csv, write_field, write_json, write_pgm, write_segments
from .selftest import report, run_selftest

log = logging.getLogger("bcinclusion")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_SELFTEST = 0, 2, 3, 4
COMMANDS = ("forward", "volumes", "locate", "hull", "oracle", "selftest")
PROBE_EPS = (0.08, 0.04, 0.02, 0.01, 0.008)


# --------------------------------------------------------------------------- #
# shared stages


def _measurement(cfg: ExperimentConfig, speed):
    """Lambda (assembled or loaded) and K for the configured model."""
    time = cfg.time_grid(speed)
    basis = cfg.source_basis(speed, time)
    op = None
    if cfg.io.load:
        try:
            op = load_lambda(cfg.io.load, speed, basis)
        except (OSError, KeyError, ValueError) as exc:
            if isinstance(exc, StoreMismatch):
                raise
            raise StoreMismatch(f"cannot load {cfg.io.load}: {exc}") from None
        log.info("loaded Lambda from %s", cfg.io.load)
    c = cfg.control
    m = pl.measure(speed, basis, cfg.time.cfl, op, c.alpha_exponents, c.alphas)
    if cfg.io.store:
        store_lambda(cfg.io.store, m.op)
        log.info("stored Lambda in %s", cfg.io.store)
    return m


def _reference(cfg: ExperimentConfig, speed, data: pl.Measurement):
    """The known background simulated on the data's time grid and basis."""
    c = cfg.control
    return pl.measure(speed.background(), data.K.basis, cfg.time.cfl, None, c.alpha_exponents, c.alphas)


def _true_distances(speed) -> np.ndarray:
    """``d(y, Sigma)`` per boundary node: exact for constant backgrounds, eikonal otherwise."""
    if speed.constant_background:
        return exact_sigma_distance(speed)
    dom = speed.domain
    idx = np.argwhere(speed.sigma_mask)
    phi = eikonal_distance(dom, speed.c0, [((int(j), int(i)), 0.0) for j, i in idx]).phi
    b = dom.boundary_nodes
    return phi[b[:, 0], b[:, 1]]


def _tau_values(speed, tau_cfg, value: float, basis=None) -> np.ndarray:
    dom = speed.domain
    if tau_cfg.kind == "constant":
        return np.full(dom.n_boundary, value)
    k = dom.boundary_index_of_point(*tau_cfg.x)
    if tau_cfg.kind == "cone":
        return TauFunction.cone(value, background_distance_from_boundary(speed, k)).values
    nodes = basis.patch_nodes(basis.patch_of_node()[k]) if basis is not None else pl.patch_around(dom, k, dom.perimeter / 64)
    return TauFunction.spike(nodes, dom.n_boundary, value, tau_cfg.h_level).values


def _profile(cfg: ExperimentConfig, speed) -> tuple[DistanceProfile, dict]:
    d = cfg.detect
    dom = speed.domain
    info = {"method": d.method, "volumes": d.volumes}
    if d.method == "unknown_bg":
        ref = cfg.grid.model_copy(update={"nx": cfg.grid.nx * d.oracle_refine, "ny": cfg.grid.ny * d.oracle_refine})
        fine_cfg = cfg.model_copy(update={"grid": ref})
        fine = fine_cfg.speed_model()
        nodes = pl.even_nodes(dom, d.n_samples)
        r, q, flags = [], [], []
        for k in nodes:
            kf = fine.domain.boundary_index_of_point(*dom.boundary_points()[k])
            patch = pl.patch_around(fine.domain, kf, fine.domain.perimeter / 64)
            rk, flag, res = pl.unknown_bg_oracle(fine, patch, d.h_levels, d.r_grid.values(), d.eps_list, d.q_break)
            r.append(rk)
            flags.append(flag)
            q.append(float(np.nanmin([x.q_at_break for x in res])) if not flag else float("nan"))
        info.update({"refine": d.oracle_refine, "h_levels": d.h_levels, "eps_list": d.eps_list})
        prof = DistanceProfile(dom, nodes, np.asarray(r), "smoothness_unknown_bg",
                               np.full(len(nodes), np.nan), np.asarray(q), flags)
        return prof, info
    if d.volumes == "oracle":
        nodes = pl.even_nodes(dom, d.n_samples)
        return pl.oracle_profile(speed, nodes, d.r_max, d.tol_r, cfg.time.T), info
    data = _measurement(cfg, speed)
    ref = _reference(cfg, speed, data)
    basis = data.K.basis
    nodes = pl.sample_nodes(basis)
    if d.n_samples < len(nodes):
        nodes = nodes[np.round(np.linspace(0, len(nodes), d.n_samples, endpoint=False)).astype(int)]
    tol = d.tol_vol_floor if d.tol_vol == "calibrated" else float(d.tol_vol)
    info.update({"tol_vol": tol, "alphas": data.alphas, "K_asymmetry": data.K.asymmetry,
                 "r_min": 2 * basis.bin_width})
    prof = pl.control_profile(data, ref, nodes, d.r_max, tol, d.tol_r, cfg.control.cg_tol, cfg.control.cg_maxiter)
    return prof, info


def _profile_rows(prof: DistanceProfile, truth: np.ndarray):
    pts = prof.domain.boundary_points()[prof.nodes]
    for k, s, (x, y), r, g, q, f in zip(prof.nodes, prof.s, pts, prof.r, prof.gap, prof.q_slope, prof.flags):
        t = float(truth[k])
        yield (int(k), float(s), float(x), float(y), float(r), t, float(r) - t, float(g), float(q), f)


PROFILE_HEADER = ("node", "s", "x", "y", "r_est", "r_true", "error", "gap", "q_slope", "flag")


# --------------------------------------------------------------------------- #
# subcommands


def cmd_forward(cfg: ExperimentConfig, out: Path) -> dict:
    speed = cfg.speed_model()
    m = _measurement(cfg, speed)
    op, time = m.op, m.op.time
    rng = np.random.default_rng(cfg.seed)
    from .selftest import smooth_signal

    f = smooth_signal(speed.domain, time, rng, op.weights)
    trace = solve_wave(speed, f, cfl=cfg.time.cfl).trace
    dom = speed.domain
    probe = [dom.boundary_index_of_point(x, y) for x, y in ((0.5 * dom.Lx, 0.0), (dom.Lx, 0.5 * dom.Ly),
                                                         (0.5 * dom.Lx, dom.Ly), (0.0, 0.5 * dom.Ly))]
    write_csv(out / "traces.csv", ["t"] + [f"node_{k}" for k in probe],
              ([float(t)] + [float(v) for v in trace[n, probe]] for n, t in enumerate(time.times)))
    write_field(out / "c_tilde.f32", speed.c_tilde, dom, "c_tilde")
    summary = {"grid": {"nx": dom.nx, "ny": dom.ny, "h": dom.h},
               "time": {"T": time.T, "n_half": time.n_half, "dt": time.dt, "nt": time.nt},
               "basis": m.K.basis.spec(), "K_asymmetry": m.K.asymmetry, "K_norm": m.K.norm_estimate,
               "alphas": m.alphas, "speed_hash": speed.digest(), "seed": cfg.seed,
               "stored": cfg.io.store, "loaded": cfg.io.load}
    write_json(out / "forward.json", summary)
    return summary


def cmd_volumes(cfg: ExperimentConfig, out: Path) -> dict:
    speed = cfg.speed_model()
    m = _measurement(cfg, speed)
    basis = m.K.basis
    rows = []
    for t in cfg.volumes.taus:
        x = t.x or (float("nan"), float("nan"))
        for v in t.values:
            tau = _tau_values(speed, t, v, basis)
            est = estimate_volume(m.K, tau, m.alphas, m.weights, cfg.control.cg_tol, cfg.control.cg_maxiter)
            vol, vol_t = volume_pair(speed, TauFunction(tau))
            rows.append((t.kind, x[0], x[1], v, t.h_level, est.value, vol_t, vol, est.exponent, est.flag))
    header = ("tau_kind", "x", "y", "value", "h_level", "V_control", "V_tilde_oracle", "V_oracle",
              "alpha_exponent", "flag")
    write_csv(out / "volumes.csv", header, rows)
    summary = {"rows": len(rows), "alphas": m.alphas, "flags": sum(bool(r[-1]) for r in rows)}
    write_json(out / "volumes.json", summary)
    return summary


def cmd_locate(cfg: ExperimentConfig, out: Path) -> dict:
    speed = cfg.speed_model()
    prof, info = _profile(cfg, speed)
    truth = _true_distances(speed)
    rows = list(_profile_rows(prof, truth))
    write_csv(out / "profile.csv", PROFILE_HEADER, rows)
    err = np.abs([r[6] for r in rows])
    summary = {**info, "n_samples": len(rows), "max_abs_error": float(err.max()),
               "mean_abs_error": float(err.mean()), "flags": {str(r[0]): r[9] for r in rows if r[9]},
               "h": speed.domain.h}
    write_json(out / "locate.json", summary)
    return summary


def cmd_hull(cfg: ExperimentConfig, out: Path) -> dict:
    speed = cfg.speed_model()
    prof, info = _profile(cfg, speed)
    truth = _true_distances(speed)
    write_csv(out / "profile.csv", PROFILE_HEADER, list(_profile_rows(prof, truth)))
    metric = speed.c0 * cfg.detect.hull_metric_scale
    hull, segments = reconstruct_hull_and_segments(prof, metric)
    write_pgm(out / "hull.pgm", hull.mask)
    write_pgm(out / "sigma.pgm", speed.sigma_mask)
    write_segments(out / "segments.csv", segments)
    summary = {**info, "hull_nodes": int(hull.mask.sum()), "sigma_nodes": int(speed.sigma_mask.sum()),
               "contains_sigma": bool(np.all(hull.mask[speed.sigma_mask])), "segments": len(segments),
               "hull_metric_scale": cfg.detect.hull_metric_scale}
    write_json(out / "hull.json", summary)
    return summary


def cmd_oracle(cfg: ExperimentConfig, out: Path) -> dict:
    speed = cfg.speed_model()
    dom = speed.domain
    rows = []
    for t in cfg.volumes.taus:
        x = t.x or (float("nan"), float("nan"))
        for v in t.values:
            vol, vol_t = volume_pair(speed, TauFunction(_tau_values(speed, t, v)))
            rows.append((t.kind, x[0], x[1], v, t.h_level, vol_t, vol, vol_t - vol))
    write_csv(out / "oracle_volumes.csv",
              ("tau_kind", "x", "y", "value", "h_level", "V_tilde", "V", "difference"), rows)
    summary = {"volumes": len(rows), "max_abs_difference": max((abs(r[-1]) for r in rows), default=0.0)}
    if speed.has_inclusion:
        tau = tangent_tau(speed)
        eps = [e for e in PROBE_EPS if e >= 4 * dom.h]
        if len(eps) >= 4:
            probe = epsilon_scaling_probe(speed, tau, eps)
            write_csv(out / "scaling.csv", ("eps", "difference", "used"),
                      zip(probe.eps, probe.differences, probe.used.astype(int)))
            summary["scaling"] = {"tau": float(tau.values[0]), "exponent": probe.fitted_exponent, "flag": probe.flag}
        else:
            summary["scaling"] = {"flag": "grid too coarse for the epsilon probe"}
        r = _true_distances(speed)
        hull, segments = reconstruct_hull_and_segments(
            DistanceProfile(dom, np.arange(dom.n_boundary), r, "exact", r * np.nan, r * np.nan,
                            [""] * dom.n_boundary), speed.c0)
        write_pgm(out / "hull_exact.pgm", hull.mask)
        write_segments(out / "segments_exact.csv", segments)
        summary["hull"] = {"hull_nodes": int(hull.mask.sum()),
                           "contains_sigma": bool(np.all(hull.mask[speed.sigma_mask]))}
    write_json(out / "oracle.json", summary)
    return summary


def cmd_selftest(cfg: ExperimentConfig, out: Path) -> dict:
    checks = run_selftest(cfg.seed)
    for c in checks:
        print(c.line())
    rep = report(checks)
    write_json(out / "selftest.json", rep)
    return rep


HANDLERS = {"forward": cmd_forward, "volumes": cmd_volumes, "locate": cmd_locate, "hull": cmd_hull,
            "oracle": cmd_oracle, "selftest": cmd_selftest}


# --------------------------------------------------------------------------- #


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bcinclusion", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON experiment configuration")
    p.add_argument("--store", help="write the assembled Lambda operator here")
    p.add_argument("--load", help="read a stored Lambda operator instead of simulating")
    p.add_argument("--out", help="output directory (overrides io.out)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config).with_io(out=args.out, store=args.store, load=args.load)
        cfg.check_for(args.command)
        out = Path(cfg.io.out)
        out.mkdir(parents=True, exist_ok=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            result = HANDLERS[args.command](cfg, out)
    except (ConfigError, StoreMismatch, BasisMismatch) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CFLError, NumericalFailure, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.command == "selftest" and not result["passed"]:
        return EXIT_SELFTEST
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

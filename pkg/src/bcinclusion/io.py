"""File formats: PGM masks, float32 fields with JSON sidecars, CSV tables and stored Lambda.

A stored Lambda operator is a JSON header next to a flat float64 file.  The
binary holds the per-patch impulse responses as an ``(nt * n_b) x n_patch``
matrix in column-major order; every basis column is a shifted sum of these,
so nothing else needs to be kept.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .forward import LambdaOperator, SourceBasis, TimeGrid
from .grid import DiscreteDomain, SpeedModel

LAMBDA_FORMAT = "bcinclusion.lambda/1"


class StoreMismatch(ValueError):
    """A stored operator does not fit the configuration it is loaded for."""


def _ensure_dir(path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_pgm(path, mask: np.ndarray) -> Path:
    """8-bit binary PGM, 255 where ``mask`` is true; the first image row is the top of the domain."""
    path = _ensure_dir(path)
    img = np.where(np.asarray(mask, bool)[::-1], 255, 0).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    """Inverse of :func:`write_pgm` (boolean array, row 0 at ``y = 0``)."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise ValueError("only 8-bit PGM is supported")
    pix = np.frombuffer(data, np.uint8, w * h, pos + 1).reshape(h, w)
    return (pix > 0)[::-1].copy()


def write_field(path, values: np.ndarray, domain: DiscreteDomain, name: str, **extra) -> Path:
    """Flat little-endian float32 file plus ``<path>.json`` describing it."""
    path = _ensure_dir(path)
    arr = np.ascontiguousarray(values, dtype="<f4")
    arr.tofile(path)
    meta = {"nx": domain.nx, "ny": domain.ny, "h": domain.h, "field": name,
            "dtype": "float32", "shape": list(arr.shape), "order": "C", **extra}
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def read_field(path) -> tuple[np.ndarray, dict]:
    meta = json.loads(Path(str(path) + ".json").read_text())
    arr = np.fromfile(path, dtype="<f4").reshape(meta["shape"])
    return arr, meta


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """RFC-4180 CSV with '.' decimals and full float precision."""
    path = _ensure_dir(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, obj) -> Path:
    path = _ensure_dir(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


SEGMENT_HEADER = ("s", "y_x", "y_y", "dir_x", "dir_y", "length")


def write_segments(path, segments) -> Path:
    rows = [(g.s, g.point[0], g.point[1], g.direction[0], g.direction[1], g.length) for g in segments]
    return write_csv(path, SEGMENT_HEADER, rows)


# --------------------------------------------------------------------------- #
# Lambda persistence


def _binary_path(path: Path) -> Path:
    return path.with_suffix(".f64")


def store_lambda(path, op: LambdaOperator) -> Path:
    """Write ``<path>`` (JSON header) and ``<path minus suffix>.f64`` (column-major float64)."""
    if op.mode != "precomputed":
        raise ValueError("only precomputed operators can be stored")
    path = _ensure_dir(Path(path))
    b, t, dom = op.basis, op.time, op.speed.domain
    # column-major: column p (impulse of patch p, time-major) is contiguous
    np.ascontiguousarray(op.impulse, dtype="<f8").tofile(_binary_path(path))
    header = {
        "format": LAMBDA_FORMAT,
        "grid": {"nx": dom.nx, "ny": dom.ny, "h": dom.h},
        "time": {"T": t.T, "n_half": t.n_half, "dt": t.dt, "nt": t.nt},
        "basis": {"n_patch": b.n_patch, "n_bin": b.n_bin, "offset": b.patch_offset},
        "speed_hash": op.speed.digest(),
        "cfl": op.cfl,
        "matrix": {"rows": t.nt * dom.n_boundary, "cols": b.n_patch, "dtype": "float64",
                   "order": "column-major", "content": "patch impulse responses"},
        "binary": _binary_path(path).name,
        "meta": op.meta,
    }
    path.write_text(json.dumps(header, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def load_lambda(path, speed: SpeedModel, basis: SourceBasis | None = None) -> LambdaOperator:
    """Read a stored operator and check it against ``speed`` (and ``basis`` if given)."""
    path = Path(path)
    header = json.loads(path.read_text())
    if header.get("format") != LAMBDA_FORMAT:
        raise StoreMismatch(f"{path}: unknown format {header.get('format')!r}")
    dom = speed.domain
    g = header["grid"]
    if (g["nx"], g["ny"]) != (dom.nx, dom.ny) or abs(g["h"] - dom.h) > 1e-12:
        raise StoreMismatch("stored grid differs from the configured grid")
    if header["speed_hash"] != speed.digest():
        raise StoreMismatch("stored operator was computed for a different speed model")
    tt = header["time"]
    time = TimeGrid(float(tt["T"]), int(tt["n_half"]))
    bb = header["basis"]
    stored = SourceBasis(int(bb["n_patch"]), int(bb["n_bin"]), dom.n_boundary, time, int(bb["offset"]))
    if basis is not None and (basis.spec() != stored.spec() or basis.time != time):
        raise StoreMismatch("stored basis or time grid differs from the configured one")
    m = header["matrix"]
    raw = np.fromfile(path.parent / header["binary"], dtype="<f8")
    if raw.size != m["rows"] * m["cols"]:
        raise StoreMismatch("binary size does not match the header")
    cols = raw.reshape(m["cols"], m["rows"])  # column-major: column p is contiguous
    impulse = cols.reshape(stored.n_patch, time.nt, dom.n_boundary)
    return LambdaOperator(speed, time, "precomputed", stored, impulse, float(header["cfl"]),
                          dict(header.get("meta", {})))

"""Plain-text clouds and snapshots, CSV tables and binary PGM images."""

from __future__ import annotations

import csv
import re
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "write_cloud", "read_cloud", "write_snapshot", "read_snapshot", "write_csv",
    "read_csv", "write_pgm", "read_pgm", "ENERGY_COLUMNS", "VERIFY_COLUMNS",
]

CLOUD_MAGIC = "medflow-cloud v1"
ENERGY_COLUMNS = ("step", "time", "dirichlet", "tv", "l2", "min", "max")
VERIFY_COLUMNS = ("test", "parameter", "measured", "predicted", "tolerance", "pass")

_HEADER = re.compile(r"#\s*medflow-cloud v1\s+(.*)$")


def _fmt(x: float) -> str:
    return "%.17g" % x


def _parse_kv(text: str) -> dict:
    out = {}
    for tok in text.split():
        if "=" not in tok:
            raise ValueError(f"malformed header token {tok!r}")
        k, v = tok.split("=", 1)
        out[k] = v
    return out


def write_cloud(path, positions: NDArray, seed: Optional[int] = None,
                extra_columns: Sequence[NDArray] = (), extra_header: str | None = None):
    """Write ``# medflow-cloud v1 d=<d> n=<n> seed=<seed>`` then one point per line."""
    pos = np.asarray(positions, float)
    n, d = pos.shape
    cols = [pos] + [np.asarray(c, float).reshape(n, 1) for c in extra_columns]
    data = np.hstack(cols) if len(cols) > 1 else pos
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# {CLOUD_MAGIC} d={d} n={n} seed={'' if seed is None else seed}\n")
        if extra_header:
            fh.write(f"# {extra_header}\n")
        for row in data:
            fh.write(" ".join(_fmt(v) for v in row))
            fh.write("\n")


def _read_table(path):
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    m = _HEADER.match(lines[0])
    if not m:
        raise ValueError(f"{path}: missing '# {CLOUD_MAGIC}' header")
    meta = _parse_kv(m.group(1))
    extra = {}
    body = []
    for line in lines[1:]:
        if line.startswith("#"):
            extra.update(_parse_kv(line[1:]))
        elif line.strip():
            body.append([float(t) for t in line.split(" ")])
    d, n = int(meta["d"]), int(meta["n"])
    data = np.array(body, dtype=float).reshape(n, -1) if n else np.empty((0, d))
    seed = int(meta["seed"]) if meta.get("seed") not in (None, "") else None
    return data, d, n, seed, extra


def read_cloud(path):
    """Return ``(positions, seed)`` from a cloud file."""
    data, d, n, seed, _ = _read_table(path)
    if data.shape[1] != d:
        raise ValueError(f"{path}: expected {d} columns, found {data.shape[1]}")
    return data, seed


def write_snapshot(path, positions, values, t: float, step: int, mode: str,
                   seed: Optional[int] = None, config: str | None = None):
    """Cloud format plus a ``u`` column and a ``# t=<t> n=<step> mode=<mode>`` line.

    ``config`` (a config hash) is appended to that line when given.
    """
    tag = f" config={config}" if config else ""
    write_cloud(path, positions, seed, extra_columns=[values],
                extra_header=f"t={_fmt(t)} n={step} mode={mode}{tag}")


def read_snapshot(path):
    """Return ``(positions, values, t, step, mode, seed)``."""
    data, d, n, seed, extra = _read_table(path)
    if data.shape[1] != d + 1:
        raise ValueError(f"{path}: expected {d + 1} columns")
    return (data[:, :d], data[:, d], float(extra["t"]), int(extra["n"]),
            extra["mode"], seed)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], comment: str | None = None):
    """Comma-separated table with a mandatory header row.

    Floats use 17 significant digits so identical runs give identical bytes.
    """
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, float) else
                        ("true" if v is True else "false" if v is False else v) for v in row])


def read_csv(path):
    """Return ``(columns, rows)`` with comment lines skipped."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    cols = next(reader)
    return cols, [row for row in reader]


def write_pgm(path, image: NDArray, comment: str | None = None):
    """Binary PGM (P5), maxval 255. Row 0 of ``image`` is written last so the
    picture appears with the domain's y axis pointing up. An optional
    one-line ``comment`` goes into the header."""
    img = np.asarray(image)
    if img.dtype != np.uint8:
        raise ValueError("PGM images must be uint8")
    h, w = img.shape
    note = f"# {comment}\n" if comment else ""
    with open(path, "wb") as fh:
        fh.write(f"P5\n{note}{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img[::-1]).tobytes())


def read_pgm(path) -> NDArray:
    """Inverse of :func:`write_pgm`."""
    raw = Path(path).read_bytes()
    m = re.match(rb"P5(?:\s+(?:#[^\n]*\n)*\s*)(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if not m or int(m.group(3)) != 255:
        raise ValueError("not a P5 image with maxval 255")
    w, h = int(m.group(1)), int(m.group(2))
    pix = np.frombuffer(raw[m.end():m.end() + w * h], dtype=np.uint8).reshape(h, w)
    return pix[::-1].copy()

"""Plain-text file formats.

* dataset CSV, header ``x,y,value``; orphan rows leave ``x`` and ``y`` empty
* density CSV, header ``x,y,density`` in row-major grid order
* HDR CSV, header ``x,y,alpha_level``
* chain CSV, header ``iter,loc_index,x,y``
* raster CSV, header ``x,y,v1,...,vp`` with ``x, y`` the cell centres
* config files: ``key=value`` lines, ``#`` starts a comment

Floats are written with ``repr`` so that a read/write cycle reproduces the
file byte for byte.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import InputError
from .model import Rect, SpatialDataset
from .quadrature import Grid, PredictiveField


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _parse_float(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise InputError(f"{where}: cannot parse {text!r} as a number") from None


def _open_rows(path, expected_header=None):
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if expected_header is not None and header != expected_header:
        raise InputError(f"{path}: expected header {','.join(expected_header)}, got {','.join(header)}")
    return header, [r for r in rows[1:] if r]


def write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def read_dataset(path, region: Rect | None = None) -> SpatialDataset:
    _, rows = _open_rows(path, ["x", "y", "value"])
    known, values, orphans = [], [], []
    for lineno, row in enumerate(rows, start=2):
        where = f"{path}:{lineno}"
        if len(row) != 3:
            raise InputError(f"{where}: expected 3 fields, got {len(row)}")
        x, y, v = (c.strip() for c in row)
        if not x and not y:
            orphans.append(_parse_float(v, where))
        elif x and y:
            known.append((_parse_float(x, where), _parse_float(y, where)))
            values.append(_parse_float(v, where))
        else:
            raise InputError(f"{where}: only one coordinate given")
    if not known:
        raise InputError(f"{path}: no located measurements")
    return SpatialDataset(np.array(known), np.array(values), np.array(orphans), region)


def write_dataset(path, data: SpatialDataset) -> None:
    """Known rows first, then orphan rows ``,,value``."""
    rows = [[fmt(x), fmt(y), fmt(v)] for (x, y), v in zip(data.known_locations, data.known_values)]
    rows += [["", "", fmt(v)] for v in data.orphan_values]
    write_rows(path, ["x", "y", "value"], rows)


def read_config(path) -> dict:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    out = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_config(path, values: dict, comment: str | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {comment}"] if comment else []
    lines += [f"{k}={fmt(v)}" for k, v in values.items()]
    path.write_text("\n".join(lines) + "\n")


def write_field(path, field: PredictiveField) -> None:
    nodes = field.grid.nodes()
    rows = [[fmt(x), fmt(y), fmt(w)] for (x, y), w in zip(nodes, field.weights)]
    write_rows(path, ["x", "y", "density"], rows)


def write_grid_values(path, grid: Grid, values, column: str = "density") -> None:
    nodes = grid.nodes()
    rows = [[fmt(x), fmt(y), fmt(v)] for (x, y), v in zip(nodes, values)]
    write_rows(path, ["x", "y", column], rows)


def read_field(path) -> tuple[np.ndarray, np.ndarray]:
    """Nodes ``(N, 2)`` and weights ``(N,)`` of a density CSV."""
    _, rows = _open_rows(path, ["x", "y", "density"])
    arr = np.array([[_parse_float(c, str(path)) for c in r] for r in rows], dtype=float)
    return arr[:, :2], arr[:, 2]


def write_hdr(path, grid: Grid, indices, alpha: float) -> None:
    nodes = grid.nodes()[np.asarray(indices, dtype=int)]
    rows = [[fmt(x), fmt(y), fmt(alpha)] for x, y in nodes]
    write_rows(path, ["x", "y", "alpha_level"], rows)


def write_chain(path, samples: np.ndarray, iterations: np.ndarray) -> None:
    rows = []
    for it, locs in zip(iterations, samples):
        for k, (x, y) in enumerate(locs):
            rows.append([fmt(int(it)), str(k), fmt(x), fmt(y)])
    write_rows(path, ["iter", "loc_index", "x", "y"], rows)


def read_chain(path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(iterations, samples)`` with samples shaped ``(n, n_missing, 2)``."""
    _, rows = _open_rows(path, ["iter", "loc_index", "x", "y"])
    if not rows:
        raise InputError(f"{path}: chain file has no samples")
    try:
        its = np.array([int(r[0]) for r in rows])
        locs = np.array([int(r[1]) for r in rows])
        xy = np.array([[float(r[2]), float(r[3])] for r in rows])
    except (ValueError, IndexError):
        raise InputError(f"{path}: malformed chain row") from None
    n_missing = int(locs.max()) + 1
    if len(rows) % n_missing or np.any(locs != np.tile(np.arange(n_missing), len(rows) // n_missing)):
        raise InputError(f"{path}: rows are not grouped by iteration with loc_index 0..{n_missing - 1}")
    return its[::n_missing], xy.reshape(-1, n_missing, 2)


def read_raster(path):
    """Read a raster CSV on a regular grid of cell centres.

    Returns ``(values, x0, y0, dx, dy)`` where ``values`` has shape
    ``(ny, nx, p)`` and ``(x0, y0)`` is the lower-left cell corner.
    """
    header, rows = _open_rows(path)
    if header[:2] != ["x", "y"] or len(header) < 3:
        raise InputError(f"{path}: raster header must be x,y,v1,...,vp")
    p = len(header) - 2
    arr = np.array([[_parse_float(c, str(path)) for c in r] for r in rows], dtype=float)
    if arr.ndim != 2 or arr.shape[1] != p + 2:
        raise InputError(f"{path}: every row needs {p + 2} fields")
    xs = np.unique(arr[:, 0])
    ys = np.unique(arr[:, 1])
    nx, ny = xs.size, ys.size
    if nx * ny != arr.shape[0]:
        raise InputError(f"{path}: {arr.shape[0]} rows do not form a complete {nx}x{ny} grid")
    dx = float(np.diff(xs).mean()) if nx > 1 else 1.0
    dy = float(np.diff(ys).mean()) if ny > 1 else 1.0
    if (nx > 1 and not np.allclose(np.diff(xs), dx, rtol=1e-6)) or (
        ny > 1 and not np.allclose(np.diff(ys), dy, rtol=1e-6)
    ):
        raise InputError(f"{path}: raster cell centres are not regularly spaced")
    i = np.rint((arr[:, 0] - xs[0]) / dx).astype(int)
    j = np.rint((arr[:, 1] - ys[0]) / dy).astype(int)
    values = np.full((ny, nx, p), np.nan)
    values[j, i] = arr[:, 2:]
    if np.any(np.isnan(values)):
        raise InputError(f"{path}: raster has duplicate or missing cells")
    return values, xs[0] - dx / 2, ys[0] - dy / 2, dx, dy

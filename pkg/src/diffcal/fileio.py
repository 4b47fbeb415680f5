"""Plain-text artifact formats shared by the pipeline stages.

Grid files: a one-line header ``# grid H W x0 y0 x1 y1`` followed by H rows
of W decimal floats, row-major with row 0 at the smallest y.  Floats are
written with ``repr`` so a read/write round trip is lossless.

Curves travel as two-column CSV (t, y); chains, betas, and energies as
headed CSV.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .grid import Box
from .shapes import CurveShape, GridImage, curve_from_series


def write_grid(path, image: GridImage) -> None:
    h, w = image.values.shape
    b = image.box
    lines = [f"# grid {h} {w} {b.x0!r} {b.y0!r} {b.x1!r} {b.y1!r}"]
    for row in image.values:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid(path) -> GridImage:
    text = Path(path).read_text().strip().splitlines()
    if not text or not text[0].startswith("# grid"):
        raise InvalidInputError(f"{path}: not a grid file (missing '# grid' header)")
    fields = text[0].split()
    if len(fields) != 8:
        raise InvalidInputError(f"{path}: malformed grid header {text[0]!r}")
    h, w = int(fields[2]), int(fields[3])
    x0, y0, x1, y1 = (float(v) for v in fields[4:8])
    rows = [line.split() for line in text[1:] if line.strip()]
    if len(rows) != h or any(len(r) != w for r in rows):
        raise InvalidInputError(f"{path}: expected {h}x{w} values")
    values = np.array([[float(v) for v in r] for r in rows])
    if not np.all(np.isfinite(values)):
        raise InvalidInputError(f"{path}: non-finite values")
    return GridImage(values, Box(x0, y0, x1, y1))


def write_series(path, t, y) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "y"])
        for ti, yi in zip(t, y):
            writer.writerow([repr(float(ti)), repr(float(yi))])


def read_series(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0][:2]] != ["t", "y"]:
        raise InvalidInputError(f"{path}: expected CSV with header 't,y'")
    data = np.array([[float(r[0]), float(r[1])] for r in rows[1:]])
    return data[:, 0], data[:, 1]


def read_curve(path) -> CurveShape:
    """Read a (t, y) series and embed it as a normalized curve."""
    t, y = read_series(path)
    return curve_from_series(t, y)


def write_points(path, points, header=("x", "y")) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in np.atleast_2d(points):
            writer.writerow([repr(float(v)) for v in row])


def read_points(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in r] for r in rows[1:]])


def write_betas(path, names, betas) -> None:
    betas = np.atleast_2d(betas)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name"] + [f"beta_{i + 1}" for i in range(betas.shape[1])])
        for name, row in zip(names, betas):
            writer.writerow([name] + [repr(float(v)) for v in row])


def read_betas(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "name":
        raise InvalidInputError(f"{path}: expected a betas CSV with a 'name' column")
    names = [r[0] for r in rows[1:]]
    betas = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return names, betas


def write_table(path, header, rows) -> None:
    """CSV with repr-formatted floats (ints and strings pass through)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_chain_csv(path, chain) -> None:
    header = list(chain.param_names) + ["log_post"]
    rows = [
        list(map(float, s)) + [float(lp)]
        for s, lp in zip(chain.samples, chain.log_post)
    ]
    write_table(path, header, rows)


def read_chain_csv(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    header, rows = read_table(path)
    data = np.array([[float(v) for v in r] for r in rows])
    return header[:-1], data[:, :-1], data[:, -1]

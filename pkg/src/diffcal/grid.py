"""Uniform 2-D grid geometry and finite-difference operators.

Arrays are indexed ``[i, j]`` with row ``i`` along y (row 0 at the smallest y)
and column ``j`` along x.  Values live at cell centers.  Derivatives use
2nd-order central differences in the interior and 2nd-order one-sided stencils
at the boundary; each operator comes with its exact transpose, needed by the
reverse-mode passes in :mod:`diffcal.shooting`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class Box:
    """Axis-aligned domain [x0, x1] x [y0, y1]."""

    x0: float = 0.0
    y0: float = 0.0
    x1: float = 1.0
    y1: float = 1.0

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise InvalidInputError(f"degenerate box {self}")


@dataclass(frozen=True)
class GridGeometry:
    """(H, W) grid of cell centers over a box."""

    shape: tuple[int, int]
    box: Box = Box()

    def __post_init__(self):
        h, w = self.shape
        if h < 2 or w < 2:
            raise InvalidInputError(f"grid must be at least 2x2, got {self.shape}")

    @property
    def spacing(self) -> tuple[float, float]:
        """(hy, hx) cell sizes."""
        h, w = self.shape
        return (self.box.y1 - self.box.y0) / h, (self.box.x1 - self.box.x0) / w

    @property
    def cell_area(self) -> float:
        hy, hx = self.spacing
        return hy * hx

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) coordinate arrays of shape (H, W)."""
        h, w = self.shape
        hy, hx = self.spacing
        x = self.box.x0 + (np.arange(w) + 0.5) * hx
        y = self.box.y0 + (np.arange(h) + 0.5) * hy
        return np.meshgrid(x, y)

    def points(self) -> np.ndarray:
        """Cell centers flattened to (H*W, 2) as (x, y) pairs."""
        xg, yg = self.centers()
        return np.stack([xg.ravel(), yg.ravel()], axis=1)


def _diff(q: np.ndarray, h: float, axis: int) -> np.ndarray:
    """d/dx along `axis` of a 2-D field, central interior, one-sided at edges."""
    out = np.empty_like(q)
    if axis == 0:
        n = q.shape[0]
        if n == 2:
            out[0] = out[1] = (q[1] - q[0]) / h
        else:
            out[1:-1] = (q[2:] - q[:-2]) / (2 * h)
            out[0] = (-3 * q[0] + 4 * q[1] - q[2]) / (2 * h)
            out[-1] = (3 * q[-1] - 4 * q[-2] + q[-3]) / (2 * h)
    else:
        n = q.shape[1]
        if n == 2:
            out[:, 0] = out[:, 1] = (q[:, 1] - q[:, 0]) / h
        else:
            out[:, 1:-1] = (q[:, 2:] - q[:, :-2]) / (2 * h)
            out[:, 0] = (-3 * q[:, 0] + 4 * q[:, 1] - q[:, 2]) / (2 * h)
            out[:, -1] = (3 * q[:, -1] - 4 * q[:, -2] + q[:, -3]) / (2 * h)
    return out


def _diff_adj(s: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Exact transpose of :func:`_diff` along `axis`."""
    out = np.zeros_like(s)
    if axis == 0:
        n = s.shape[0]
        if n == 2:
            out[1] = (s[0] + s[1]) / h
            out[0] = -(s[0] + s[1]) / h
        else:
            out[2:] += s[1:-1] / (2 * h)
            out[:-2] -= s[1:-1] / (2 * h)
            out[0] += -3 * s[0] / (2 * h)
            out[1] += 4 * s[0] / (2 * h)
            out[2] += -s[0] / (2 * h)
            out[-1] += 3 * s[-1] / (2 * h)
            out[-2] += -4 * s[-1] / (2 * h)
            out[-3] += s[-1] / (2 * h)
    else:
        n = s.shape[1]
        if n == 2:
            out[:, 1] = (s[:, 0] + s[:, 1]) / h
            out[:, 0] = -(s[:, 0] + s[:, 1]) / h
        else:
            out[:, 2:] += s[:, 1:-1] / (2 * h)
            out[:, :-2] -= s[:, 1:-1] / (2 * h)
            out[:, 0] += -3 * s[:, 0] / (2 * h)
            out[:, 1] += 4 * s[:, 0] / (2 * h)
            out[:, 2] += -s[:, 0] / (2 * h)
            out[:, -1] += 3 * s[:, -1] / (2 * h)
            out[:, -2] += -4 * s[:, -1] / (2 * h)
            out[:, -3] += s[:, -1] / (2 * h)
    return out


def gradient(q: np.ndarray, geom: GridGeometry) -> np.ndarray:
    """Spatial gradient of a scalar field, shape (H, W, 2) ordered (d/dx, d/dy)."""
    hy, hx = geom.spacing
    return np.stack([_diff(q, hx, axis=1), _diff(q, hy, axis=0)], axis=-1)


def gradient_adjoint(gbar: np.ndarray, geom: GridGeometry) -> np.ndarray:
    """Transpose of :func:`gradient`: (H, W, 2) -> (H, W)."""
    hy, hx = geom.spacing
    return _diff_adj(gbar[..., 0], hx, axis=1) + _diff_adj(gbar[..., 1], hy, axis=0)


def divergence(w: np.ndarray, geom: GridGeometry) -> np.ndarray:
    """Divergence of a vector field (H, W, 2) -> (H, W)."""
    hy, hx = geom.spacing
    return _diff(w[..., 0], hx, axis=1) + _diff(w[..., 1], hy, axis=0)


def divergence_adjoint(s: np.ndarray, geom: GridGeometry) -> np.ndarray:
    """Transpose of :func:`divergence`: (H, W) -> (H, W, 2)."""
    hy, hx = geom.spacing
    return np.stack(
        [_diff_adj(s, hx, axis=1), _diff_adj(s, hy, axis=0)], axis=-1
    )

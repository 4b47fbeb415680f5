"""Reproducing-kernel machinery for the admissible velocity space.

The velocity space is an RKHS of vector fields with a scalar Gaussian kernel
times the identity: momenta attached at points (or sampled on a grid) are
turned into smooth velocity fields by kernel summation / convolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.ndimage import convolve1d

from .errors import InvalidInputError
from .grid import GridGeometry


class KernelFamily(Enum):
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class KernelSpec:
    """Isotropic kernel k(x, y) = amplitude * exp(-|x - y|^2 / (2 lengthscale^2))."""

    lengthscale: float
    amplitude: float = 1.0
    family: KernelFamily = KernelFamily.GAUSSIAN

    def __post_init__(self):
        if not (math.isfinite(self.lengthscale) and self.lengthscale > 0):
            raise InvalidInputError(f"lengthscale must be positive, got {self.lengthscale}")
        if not (math.isfinite(self.amplitude) and self.amplitude > 0):
            raise InvalidInputError(f"amplitude must be positive, got {self.amplitude}")
        if self.family is not KernelFamily.GAUSSIAN:
            raise InvalidInputError(f"unsupported kernel family {self.family}")


def _check_points(points: np.ndarray, name: str) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] not in (1, 2, 3):
        raise InvalidInputError(f"{name} must be (n, d) with d in 1..3, got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError(f"{name} contains non-finite coordinates")
    return pts


def kernel_matrix(points_a, points_b, spec: KernelSpec) -> np.ndarray:
    """Gram matrix k(a_i, b_j), shape (m, n)."""
    a = _check_points(points_a, "points_a")
    b = _check_points(points_b, "points_b")
    if a.shape[1] != b.shape[1]:
        raise InvalidInputError("points_a and points_b have different ambient dimensions")
    # broadcasting keeps K(a, a) exactly symmetric
    d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
    return spec.amplitude * np.exp(-d2 / (2.0 * spec.lengthscale**2))


def velocity_at(x, control_points, momenta, spec: KernelSpec) -> np.ndarray:
    """Velocity sum_i k(x, q_i) pi_i at a single point x."""
    q = _check_points(control_points, "control_points")
    pi = np.asarray(momenta, dtype=float)
    xp = np.asarray(x, dtype=float)
    if xp.shape != (q.shape[1],):
        raise InvalidInputError(f"x must be a {q.shape[1]}-vector, got shape {xp.shape}")
    if pi.shape != q.shape:
        raise InvalidInputError(f"momenta shape {pi.shape} does not match control points {q.shape}")
    if not np.all(np.isfinite(xp)) or not np.all(np.isfinite(pi)):
        raise InvalidInputError("non-finite input")
    k = kernel_matrix(xp[None, :], q, spec)[0]
    return k @ pi


def velocity_field(points, control_points, momenta, spec: KernelSpec) -> np.ndarray:
    """Velocity at many points at once, shape (m, d)."""
    k = kernel_matrix(points, control_points, spec)
    return k @ np.asarray(momenta, dtype=float)


def _kernel_1d(h: float, n: int, spec: KernelSpec, truncate: float) -> np.ndarray:
    """Symmetric 1-D Gaussian samples on the grid lattice, truncated."""
    if math.isfinite(truncate):
        r = min(int(math.ceil(truncate * spec.lengthscale / h)), n - 1)
    else:
        r = n - 1
    offsets = np.arange(-r, r + 1) * h
    return np.exp(-(offsets**2) / (2.0 * spec.lengthscale**2))


def convolve_grid(
    momentum_field: np.ndarray,
    geom: GridGeometry,
    spec: KernelSpec,
    truncate: float = 4.0,
) -> np.ndarray:
    """Kernel smoothing of a grid momentum field into a velocity field.

    Midpoint-rule quadrature: the result approximates
    v(x) = sum_cells k(x, x_c) m(x_c) * cell_area, computed per vector
    component with separable 1-D convolutions (zero padding outside the
    domain) truncated at `truncate` lengthscales.
    """
    m = np.asarray(momentum_field, dtype=float)
    h, w = geom.shape
    if m.ndim != 3 or m.shape[:2] != (h, w):
        raise InvalidInputError(f"momentum field must be (H, W, d)=({h}, {w}, d), got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("momentum field contains non-finite values")
    hy, hx = geom.spacing
    ky = _kernel_1d(hy, h, spec, truncate)
    kx = _kernel_1d(hx, w, spec, truncate)
    out = convolve1d(m, ky, axis=0, mode="constant", cval=0.0)
    out = convolve1d(out, kx, axis=1, mode="constant", cval=0.0)
    return spec.amplitude * geom.cell_area * out

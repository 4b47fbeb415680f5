"""Synthetic image test case: a warped Gaussian blob with four parameters.

Pixel intensities on the unit square (cell centers at (i + 1/2) / size):

    p(x, y) = exp(-6 ((x + b1 sin(2 pi b3 y))^2 + (y + b2 cos(2 pi b4 x))^2))

The reference parameter vector used throughout tests and examples is
beta* = (0.2, 0.3, 0.4, 0.8); design samples come from seeded Latin
hypercube sampling within [0, 0.5]^2 x [0, 0.7]^2.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import qmc

from .errors import InvalidInputError
from .grid import Box, GridGeometry
from .shapes import GridImage

BETA_STAR = (0.2, 0.3, 0.4, 0.8)
DEFAULT_BOUNDS = (np.zeros(4), np.array([0.5, 0.5, 0.7, 0.7]))


def toy_image(beta, size: int = 32) -> GridImage:
    """Render the toy intensity field for one parameter vector."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (4,) or not np.all(np.isfinite(beta)):
        raise InvalidInputError(f"beta must be 4 finite reals, got {beta}")
    geom = GridGeometry((size, size), Box(0, 0, 1, 1))
    x, y = geom.centers()
    b1, b2, b3, b4 = beta
    values = np.exp(
        -6.0 * ((x + b1 * np.sin(2 * np.pi * b3 * y)) ** 2 + (y + b2 * np.cos(2 * np.pi * b4 * x)) ** 2)
    )
    return GridImage(values, geom.box)


def lhs_betas(n: int, lo=None, hi=None, seed: int = 0) -> np.ndarray:
    """Latin hypercube design of n parameter vectors within [lo, hi]."""
    lo = DEFAULT_BOUNDS[0] if lo is None else np.asarray(lo, dtype=float)
    hi = DEFAULT_BOUNDS[1] if hi is None else np.asarray(hi, dtype=float)
    if lo.shape != hi.shape or np.any(lo >= hi):
        raise InvalidInputError(f"invalid bounds lo={lo} hi={hi}")
    sampler = qmc.LatinHypercube(d=len(lo), seed=seed)
    return qmc.scale(sampler.random(n), lo, hi)

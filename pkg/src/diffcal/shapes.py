"""Shape representations, group actions, and matching functionals.

Three representations share one protocol: landmark point sets, scalar images
on a uniform grid, and polyline curves compared as currents.  Momenta mirror
the representation: point covectors ``(n, d)`` for landmarks/curves, a scalar
field ``(H, W)`` for images.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Union

import numpy as np

from .errors import InvalidInputError
from .grid import Box, GridGeometry, gradient
from .kernels import KernelSpec, kernel_matrix


@dataclass(eq=False)
class LandmarkShape:
    """Finite point set q = (q_1, ..., q_n) in R^d."""

    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[0] < 1:
            raise InvalidInputError(f"landmarks must be (n>=1, d), got {self.points.shape}")
        if not np.all(np.isfinite(self.points)):
            raise InvalidInputError("landmark coordinates must be finite")


@dataclass(eq=False)
class GridImage:
    """Scalar intensity field sampled at the cell centers of a uniform grid."""

    values: np.ndarray
    box: Box = field(default_factory=Box)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or min(self.values.shape) < 2:
            raise InvalidInputError(f"image must be (H>=2, W>=2), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("image values must be finite")

    @property
    def geometry(self) -> GridGeometry:
        return GridGeometry(self.values.shape, self.box)


@dataclass(eq=False)
class CurveShape:
    """Ordered polyline with non-degenerate segments."""

    vertices: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[0] < 2:
            raise InvalidInputError(f"curve must be (m>=2, d), got {self.vertices.shape}")
        if not np.all(np.isfinite(self.vertices)):
            raise InvalidInputError("curve vertices must be finite")
        seg = np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)
        if np.any(seg <= 1e-12):
            raise InvalidInputError("curve has coincident consecutive vertices")


Shape = Union[LandmarkShape, GridImage, CurveShape]


@dataclass(eq=False)
class CurrentEmbedding:
    """Curve as a current: one weighted Dirac per segment.

    centers are segment midpoints, tangents the un-normalized segment vectors.
    """

    centers: np.ndarray
    tangents: np.ndarray

    @classmethod
    def from_curve(cls, curve: CurveShape) -> "CurrentEmbedding":
        v = curve.vertices
        return cls(centers=0.5 * (v[1:] + v[:-1]), tangents=v[1:] - v[:-1])


class MatchKind(Enum):
    L2_LANDMARKS = "l2_landmarks"
    L2_IMAGE = "l2_image"
    CURRENT_MMD = "current_mmd"


@dataclass(frozen=True)
class MatchSpec:
    """Matching functional C plus its weight in the registration loss."""

    kind: MatchKind
    weight: float = 10.0
    current_kernel: KernelSpec | None = None

    def __post_init__(self):
        if self.weight <= 0:
            raise InvalidInputError("match weight must be positive")
        if self.kind is MatchKind.CURRENT_MMD and self.current_kernel is None:
            raise InvalidInputError("CurrentMMD matching needs a current_kernel")


def curve_from_series(t, y) -> CurveShape:
    """Embed a function graph (t, y) as a curve in [0, 1]^2.

    Both axes are affinely mapped to [0, 1] so a single kernel lengthscale is
    meaningful regardless of the original units or time resolution.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.ndim != 1 or t.shape != y.shape or t.size < 2:
        raise InvalidInputError("series must be two equal-length 1-D arrays with >= 2 samples")
    tr = np.ptp(t)
    yr = np.ptp(y)
    ts = (t - t.min()) / tr if tr > 0 else np.linspace(0, 1, t.size)
    ys = (y - y.min()) / yr if yr > 0 else np.zeros_like(y)
    return CurveShape(np.stack([ts, ys], axis=1))


def _current_terms(ca, ta, cb, tb, spec: KernelSpec):
    k = kernel_matrix(ca, cb, spec)
    g = ta @ tb.T
    return k, g


def _current_mmd(q1: CurveShape, q2: CurveShape, spec: KernelSpec):
    e1 = CurrentEmbedding.from_curve(q1)
    e2 = CurrentEmbedding.from_curve(q2)
    l2 = spec.lengthscale**2
    k11, g11 = _current_terms(e1.centers, e1.tangents, e1.centers, e1.tangents, spec)
    k12, g12 = _current_terms(e1.centers, e1.tangents, e2.centers, e2.tangents, spec)
    k22, g22 = _current_terms(e2.centers, e2.tangents, e2.centers, e2.tangents, spec)
    cost = float(np.sum(k11 * g11) - 2 * np.sum(k12 * g12) + np.sum(k22 * g22))

    # d cost / d centers_1: self term is doubled by symmetry
    w11 = k11 * g11 / l2
    w12 = k12 * g12 / l2
    dc = -2 * (w11.sum(axis=1)[:, None] * e1.centers - w11 @ e1.centers)
    dc += 2 * (w12.sum(axis=1)[:, None] * e1.centers - w12 @ e2.centers)
    # d cost / d tangents_1
    dt = 2 * (k11 @ e1.tangents) - 2 * (k12 @ e2.tangents)

    grad = np.zeros_like(q1.vertices)
    grad[:-1] += 0.5 * dc - dt
    grad[1:] += 0.5 * dc + dt
    return cost, grad


def match_cost(q1: Shape, q2: Shape, spec: MatchSpec):
    """Matching cost C(q1, q2) >= 0 and its gradient in q1's degrees of freedom."""
    if spec.kind is MatchKind.L2_LANDMARKS:
        if not isinstance(q1, LandmarkShape) or not isinstance(q2, LandmarkShape):
            raise InvalidInputError("L2Landmarks matching expects two landmark shapes")
        if q1.points.shape != q2.points.shape:
            raise InvalidInputError("landmark sets must have equal shapes")
        n = q1.points.shape[0]
        diff = q1.points - q2.points
        return float(np.sum(diff**2) / n), 2.0 * diff / n

    if spec.kind is MatchKind.L2_IMAGE:
        if not isinstance(q1, GridImage) or not isinstance(q2, GridImage):
            raise InvalidInputError("L2Image matching expects two grid images")
        if q1.values.shape != q2.values.shape or q1.box != q2.box:
            raise InvalidInputError("images must share the same grid")
        area = q1.geometry.cell_area
        diff = q1.values - q2.values
        return float(np.sum(diff**2) * area), 2.0 * diff * area

    if spec.kind is MatchKind.CURRENT_MMD:
        if not isinstance(q1, CurveShape) or not isinstance(q2, CurveShape):
            raise InvalidInputError("CurrentMMD matching expects two curves")
        return _current_mmd(q1, q2, spec.current_kernel)

    raise InvalidInputError(f"unknown match kind {spec.kind}")


def _velocity_on(points: np.ndarray, v) -> np.ndarray:
    """Evaluate a velocity accessor (callable or precomputed array) at points."""
    vals = v(points) if callable(v) else np.asarray(v, dtype=float)
    if vals.shape != points.shape:
        raise InvalidInputError(f"velocity shape {vals.shape} != support shape {points.shape}")
    return vals


def infinitesimal_action(q: Shape, v) -> np.ndarray:
    """Tangent vector v . q in q's degrees of freedom.

    Landmarks and curves: the velocity sampled at the points.  Images: the
    advection term -grad(q) . v with v given on the grid (H, W, 2) or as a
    callable over the cell centers.
    """
    if isinstance(q, (LandmarkShape, CurveShape)):
        pts = q.points if isinstance(q, LandmarkShape) else q.vertices
        return _velocity_on(pts, v)
    if isinstance(q, GridImage):
        geom = q.geometry
        if callable(v):
            vals = v(geom.points()).reshape(*geom.shape, 2)
        else:
            vals = np.asarray(v, dtype=float)
        if vals.shape != (*geom.shape, 2):
            raise InvalidInputError(f"image velocity must be (H, W, 2), got {vals.shape}")
        g = gradient(q.values, geom)
        return -(g[..., 0] * vals[..., 0] + g[..., 1] * vals[..., 1])
    raise InvalidInputError(f"unknown shape type {type(q)}")


def dual_action(q: Shape, pi: np.ndarray) -> np.ndarray:
    """Momentum density m = xi_q^* pi in the dual of the velocity space.

    Landmarks and curves: point momenta attached at the points (identity
    layout).  Images: the vector field -pi * grad(q) on the grid.
    """
    pi = np.asarray(pi, dtype=float)
    if isinstance(q, (LandmarkShape, CurveShape)):
        pts = q.points if isinstance(q, LandmarkShape) else q.vertices
        if pi.shape != pts.shape:
            raise InvalidInputError(f"momentum shape {pi.shape} != point layout {pts.shape}")
        return pi
    if isinstance(q, GridImage):
        if pi.shape != q.values.shape:
            raise InvalidInputError(f"momentum shape {pi.shape} != grid {q.values.shape}")
        return -pi[..., None] * gradient(q.values, q.geometry)
    raise InvalidInputError(f"unknown shape type {type(q)}")


def support_points(q: Shape) -> np.ndarray:
    """Point support of a shape: its points, vertices, or grid cell centers."""
    if isinstance(q, LandmarkShape):
        return q.points
    if isinstance(q, CurveShape):
        return q.vertices
    if isinstance(q, GridImage):
        return q.geometry.points()
    raise InvalidInputError(f"unknown shape type {type(q)}")

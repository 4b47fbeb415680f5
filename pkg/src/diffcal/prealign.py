"""Mean rigid pre-alignment over SE(d), parametrized in the Lie algebra.

A single rigid transform (shared across the whole dataset) is fitted so the
transformed simulation shapes match the measurement on average, removing
bulk translation/rotation that would otherwise be charged as deformation
energy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import InvalidInputError, UnsupportedRepresentationError
from .optim import OptimizerConfig
from .shapes import CurveShape, GridImage, LandmarkShape, MatchSpec, Shape, match_cost


def _dim_from_params(omega: np.ndarray) -> int:
    for d in (2, 3):
        if omega.size == d * (d + 1) // 2:
            return d
    raise InvalidInputError(f"omega length {omega.size} is not d(d+1)/2 for d in {{2, 3}}")


def _lie_matrix(omega: np.ndarray, d: int) -> np.ndarray:
    """Block matrix [[Omega, v], [0, 0]] from (rotation generators, translation)."""
    m = np.zeros((d + 1, d + 1))
    if d == 2:
        theta = omega[0]
        m[0, 1] = -theta
        m[1, 0] = theta
        m[:2, 2] = omega[1:3]
    else:
        wx, wy, wz = omega[:3]
        m[:3, :3] = [[0, -wz, wy], [wz, 0, -wx], [-wy, wx, 0]]
        m[:3, 3] = omega[3:6]
    return m


def se_exp(omega) -> np.ndarray:
    """Closed-form exp of an se(d) element as a homogeneous (d+1)x(d+1) matrix."""
    omega = np.asarray(omega, dtype=float)
    if not np.all(np.isfinite(omega)):
        raise InvalidInputError("omega must be finite")
    d = _dim_from_params(omega)
    t = np.eye(d + 1)
    if d == 2:
        theta = omega[0]
        c, s = np.cos(theta), np.sin(theta)
        r = np.array([[c, -s], [s, c]])
        if abs(theta) < 1e-8:
            vmat = np.eye(2) + 0.5 * theta * np.array([[0.0, -1.0], [1.0, 0.0]])
        else:
            vmat = np.array([[s, -(1 - c)], [1 - c, s]]) / theta
        t[:2, :2] = r
        t[:2, 2] = vmat @ omega[1:3]
    else:
        w = omega[:3]
        theta = np.linalg.norm(w)
        wx = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
        if theta < 1e-8:
            r = np.eye(3) + wx + 0.5 * wx @ wx
            vmat = np.eye(3) + 0.5 * wx + wx @ wx / 6.0
        else:
            a = np.sin(theta) / theta
            b = (1 - np.cos(theta)) / theta**2
            cc = (theta - np.sin(theta)) / theta**3
            r = np.eye(3) + a * wx + b * wx @ wx
            vmat = np.eye(3) + b * wx + cc * wx @ wx
        t[:3, :3] = r
        t[:3, 3] = vmat @ omega[3:6]
    return t


def se_exp_derivatives(omega: np.ndarray):
    """exp(M(omega)) and its exact derivative along each coordinate of omega.

    Uses the block-augmentation identity: the upper-right block of
    expm([[M, E], [0, M]]) is the directional derivative of expm at M along E.
    """
    omega = np.asarray(omega, dtype=float)
    d = _dim_from_params(omega)
    m = _lie_matrix(omega, d)
    n = d + 1
    derivs = np.empty((omega.size, n, n))
    for k in range(omega.size):
        e = np.zeros_like(omega)
        e[k] = 1.0
        big = np.zeros((2 * n, 2 * n))
        big[:n, :n] = m
        big[n:, n:] = m
        big[:n, n:] = _lie_matrix(e, d)
        derivs[k] = expm(big)[:n, n:]
    return se_exp(omega), derivs


def apply_rigid(shape: Shape, transform: np.ndarray) -> Shape:
    """Apply a homogeneous rigid matrix to a point-based shape."""
    if isinstance(shape, GridImage):
        raise UnsupportedRepresentationError("rigid alignment is not defined for grid images")
    t = np.asarray(transform, dtype=float)
    pts = shape.points if isinstance(shape, LandmarkShape) else shape.vertices
    d = pts.shape[1]
    if t.shape != (d + 1, d + 1):
        raise InvalidInputError(f"transform must be {(d + 1, d + 1)}, got {t.shape}")
    moved = pts @ t[:d, :d].T + t[:d, d]
    return LandmarkShape(moved) if isinstance(shape, LandmarkShape) else CurveShape(moved)


@dataclass
class RigidFit:
    omega: np.ndarray
    converged: bool
    objective: float
    iterations: int


def _alignment_objective(omega, q_mes, dataset, match):
    """Summed cost and its gradient in omega, via the exact exp derivative."""
    t, dt = se_exp_derivatives(omega)
    d = q_mes.points.shape[1] if isinstance(q_mes, LandmarkShape) else q_mes.vertices.shape[1]
    total = 0.0
    grad = np.zeros_like(omega)
    for q in dataset:
        moved = apply_rigid(q, t)
        cost, gpts = match_cost(moved, q_mes, match)
        total += cost
        pts = q.points if isinstance(q, LandmarkShape) else q.vertices
        for k in range(omega.size):
            dpts = pts @ dt[k][:d, :d].T + dt[k][:d, d]
            grad[k] += float(np.sum(gpts * dpts))
    return total, grad


def fit_mean_rigid(
    q_mes: Shape,
    dataset: list[Shape],
    match: MatchSpec,
    opt: OptimizerConfig | None = None,
) -> RigidFit:
    """Fit one shared omega minimizing sum_i C(q_mes, exp(M(omega)) . q_i).

    Backtracking (Armijo) gradient descent: the recorded objective is
    non-increasing by construction.  The caller applies the transform.
    """
    if isinstance(q_mes, GridImage) or any(isinstance(q, GridImage) for q in dataset):
        raise UnsupportedRepresentationError("mean rigid alignment needs point-based shapes")
    if not dataset:
        raise InvalidInputError("dataset is empty")
    opt = opt or OptimizerConfig(step_size=1.0, max_iters=200, tolerance=1e-10)
    d = q_mes.points.shape[1] if isinstance(q_mes, LandmarkShape) else q_mes.vertices.shape[1]
    omega = np.zeros(d * (d + 1) // 2)
    obj, grad = _alignment_objective(omega, q_mes, dataset, match)
    step = opt.step_size
    converged = False
    iters = 0
    for iters in range(1, opt.max_iters + 1):
        gnorm2 = float(np.dot(grad, grad))
        if gnorm2 < 1e-24:
            converged = True
            break
        accepted = False
        for _ in range(40):
            cand = omega - step * grad
            cand_obj, cand_grad = _alignment_objective(cand, q_mes, dataset, match)
            if cand_obj <= obj - 1e-4 * step * gnorm2:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        if abs(obj - cand_obj) <= opt.tolerance * max(abs(obj), 1.0):
            omega, obj, grad = cand, cand_obj, cand_grad
            converged = True
            break
        omega, obj, grad = cand, cand_obj, cand_grad
        step *= 1.5
    return RigidFit(omega=omega, converged=converged, objective=obj, iterations=iters)

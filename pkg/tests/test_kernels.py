import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffcal import Box, GridGeometry, InvalidInputError, KernelSpec, convolve_grid, kernel_matrix, velocity_at
from diffcal.kernels import velocity_field


def test_kernel_at_same_point_is_amplitude():
    k = kernel_matrix([(0.0, 0.0)], [(0.0, 0.0)], KernelSpec(lengthscale=1.0))
    assert k.shape == (1, 1)
    assert k[0, 0] == pytest.approx(1.0)
    k2 = kernel_matrix([(1.0, 2.0)], [(1.0, 2.0)], KernelSpec(lengthscale=0.5, amplitude=3.0))
    assert k2[0, 0] == pytest.approx(3.0)


def test_kernel_closed_form_unit_distance():
    k = kernel_matrix([(0.0, 0.0)], [(1.0, 0.0)], KernelSpec(lengthscale=1.0))
    assert k[0, 0] == pytest.approx(np.exp(-0.5), abs=1e-12)


def test_kernel_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        kernel_matrix([(np.nan, 0.0)], [(0.0, 0.0)], KernelSpec(lengthscale=1.0))
    with pytest.raises(InvalidInputError):
        KernelSpec(lengthscale=-1.0)
    with pytest.raises(InvalidInputError):
        KernelSpec(lengthscale=1.0, amplitude=0.0)


def test_kernel_psd_random_5_points():
    rng = np.random.default_rng(0)
    pts = rng.uniform(size=(5, 2))
    k = kernel_matrix(pts, pts, KernelSpec(lengthscale=0.3))
    # dense eigensolve oracle
    assert np.linalg.eigvalsh(k).min() >= -1e-10


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(min_value=1, max_value=50),
    d=st.integers(min_value=1, max_value=3),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_kernel_psd_property(n, d, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-2, 2, size=(n, d))
    k = kernel_matrix(pts, pts, KernelSpec(lengthscale=0.5))
    assert np.allclose(k, k.T)
    assert np.linalg.eigvalsh(k).min() >= -1e-10


def test_velocity_at_control_point():
    q = np.array([[0.0, 0.0]])
    pi = np.array([[1.0, 0.0]])
    spec = KernelSpec(lengthscale=1.0)
    assert velocity_at(np.zeros(2), q, pi, spec) == pytest.approx([1.0, 0.0])
    v = velocity_at(np.array([1.0, 0.0]), q, pi, spec)
    assert v == pytest.approx([np.exp(-0.5), 0.0], abs=1e-12)


def test_velocity_at_matches_double_loop_oracle():
    rng = np.random.default_rng(1)
    q = rng.normal(size=(3, 2))
    pi = rng.normal(size=(3, 2))
    x = rng.normal(size=2)
    spec = KernelSpec(lengthscale=0.7, amplitude=1.3)
    expect = np.zeros(2)
    for i in range(3):
        expect += spec.amplitude * np.exp(-np.sum((x - q[i]) ** 2) / (2 * 0.7**2)) * pi[i]
    assert np.allclose(velocity_at(x, q, pi, spec), expect, atol=1e-12)


def test_velocity_at_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        velocity_at(np.zeros(3), np.zeros((2, 2)), np.zeros((2, 2)), KernelSpec(lengthscale=1.0))
    with pytest.raises(InvalidInputError):
        velocity_at(np.zeros(2), np.zeros((2, 2)), np.zeros((3, 2)), KernelSpec(lengthscale=1.0))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31))
def test_velocity_linearity_in_momenta(seed):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(4, 2))
    p1, p2 = rng.normal(size=(2, 4, 2))
    x = rng.normal(size=2)
    a, b = rng.normal(size=2)
    spec = KernelSpec(lengthscale=0.6)
    lhs = velocity_at(x, q, a * p1 + b * p2, spec)
    rhs = a * velocity_at(x, q, p1, spec) + b * velocity_at(x, q, p2, spec)
    assert np.allclose(lhs, rhs, atol=1e-12)


def _naive_convolution(field, geom, spec):
    pts = geom.points()
    k = kernel_matrix(pts, pts, spec)
    flat = field.reshape(-1, field.shape[-1])
    return (geom.cell_area * (k @ flat)).reshape(field.shape)


def test_convolve_zero_field():
    geom = GridGeometry((8, 8))
    out = convolve_grid(np.zeros((8, 8, 2)), geom, KernelSpec(lengthscale=0.1))
    assert np.all(out == 0)


def test_convolve_impulse_is_sampled_gaussian():
    geom = GridGeometry((9, 9))
    spec = KernelSpec(lengthscale=0.2)
    field = np.zeros((9, 9, 1))
    field[4, 4, 0] = 1.0
    out = convolve_grid(field, geom, spec, truncate=np.inf)
    pts = geom.points()
    center = pts[4 * 9 + 4]
    expect = geom.cell_area * np.exp(-np.sum((pts - center) ** 2, axis=1) / (2 * spec.lengthscale**2))
    assert np.allclose(out[..., 0].ravel(), expect, atol=1e-14)


def test_convolve_matches_naive_quadrature_oracle():
    rng = np.random.default_rng(2)
    geom = GridGeometry((16, 16))
    spec = KernelSpec(lengthscale=0.45, amplitude=1.7)
    field = rng.normal(size=(16, 16, 2))
    # 4 lengthscales = 1.8 covers the whole unit box: truncation is inactive
    out = convolve_grid(field, geom, spec)
    expect = spec.amplitude * _naive_convolution(field, geom, KernelSpec(spec.lengthscale))
    rel = np.abs(out - expect).max() / np.abs(expect).max()
    assert rel < 1e-10


def test_convolve_truncation_error_is_bounded():
    rng = np.random.default_rng(3)
    geom = GridGeometry((16, 16))
    spec = KernelSpec(lengthscale=0.1)
    field = rng.normal(size=(16, 16, 2))
    out = convolve_grid(field, geom, spec)  # truncated at 4 lengthscales
    full = convolve_grid(field, geom, spec, truncate=np.inf)
    assert np.abs(out - full).max() <= np.exp(-8) * np.abs(full).max() * 20


def test_convolve_translation_equivariant_in_interior():
    geom = GridGeometry((24, 24))
    spec = KernelSpec(lengthscale=0.08)
    f1 = np.zeros((24, 24, 1))
    f2 = np.zeros((24, 24, 1))
    f1[10, 10, 0] = 1.0
    f2[13, 14, 0] = 1.0
    o1 = convolve_grid(f1, geom, spec)
    o2 = convolve_grid(f2, geom, spec)
    # responses around each impulse agree once shifted (both windows interior)
    w = 5
    assert np.allclose(
        o1[10 - w : 10 + w + 1, 10 - w : 10 + w + 1],
        o2[13 - w : 13 + w + 1, 14 - w : 14 + w + 1],
        atol=1e-15,
    )


def test_velocity_field_batches_velocity_at():
    rng = np.random.default_rng(4)
    q = rng.normal(size=(5, 2))
    pi = rng.normal(size=(5, 2))
    xs = rng.normal(size=(7, 2))
    spec = KernelSpec(lengthscale=0.8)
    batch = velocity_field(xs, q, pi, spec)
    for i, x in enumerate(xs):
        assert np.allclose(batch[i], velocity_at(x, q, pi, spec), atol=1e-14)

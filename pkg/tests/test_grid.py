import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirac_eq.grid import (
    GridMismatchError,
    GridSpec,
    RealField8,
    SpinorField,
    TestFunction,
    charge,
    complexify,
    fft_forward,
    fft_inverse,
    from_half_spectrum,
    gaussian_bump,
    half_spectrum,
    inner,
    local_seminorm,
    point_source,
    pointwise_norm,
    realify,
    smooth_bump,
)

from conftest import random_field


@pytest.mark.parametrize("n, L", [(7, 1.0), (6, 1.0), (9, 1.0), (8, 0.0), (8, -2.0)])
def test_gridspec_rejects(n, L):
    with pytest.raises(ValueError):
        GridSpec(n, L)


def test_grid_axes(grid16):
    g = grid16
    assert g.h == 1.0
    assert g.x_axis[0] == 0 and g.x_axis.min() == -8 and g.x_axis.max() == 7
    k = g.k_axis()
    assert k[g.n // 2] == 0.0  # Nyquist mapped to zero
    assert np.allclose(np.sort(np.abs(k[1:g.n // 2])), 2 * np.pi * np.arange(1, 8) / 16)
    assert g.sample_wavevectors()[8, 0, 0, 0] == pytest.approx(-np.pi)
    assert g.wavevectors(half=True).shape == (16, 16, 9, 3)


def test_realify_example(grid16):
    data = np.zeros((4,) + grid16.shape, complex)
    data[0, 0, 0, 0] = 1 + 2j
    r = realify(SpinorField(grid16, data))
    assert np.array_equal(r.data[:, 0, 0, 0], [1, 0, 0, 0, 2, 0, 0, 0])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_realify_roundtrip_and_norm(seed):
    g = GridSpec(8, 4.0)
    rng = np.random.default_rng(seed)
    psi = SpinorField(g, rng.standard_normal((4,) + g.shape) + 1j * rng.standard_normal((4,) + g.shape))
    r = realify(psi)
    assert np.array_equal(complexify(r).data, psi.data)
    assert np.allclose(pointwise_norm(r), np.sqrt(np.sum(np.abs(psi.data) ** 2, axis=0)), rtol=1e-14)


def test_fields_are_immutable_and_validated(grid16):
    f = RealField8.zeros(grid16)
    with pytest.raises(ValueError):
        f.data[0, 0, 0, 0] = 1.0
    with pytest.raises(ValueError):
        RealField8(grid16, np.zeros((8, 4, 4, 4)))
    with pytest.raises(TypeError):
        RealField8(grid16, np.zeros((8,) + grid16.shape, complex))
    bad = np.zeros((8,) + grid16.shape)
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        RealField8(grid16, bad)


def test_inner_properties(grid16, rng):
    a, b = random_field(grid16, rng), random_field(grid16, rng)
    assert inner(a, b) == pytest.approx(inner(b, a), rel=1e-14)
    assert inner(a, a) == pytest.approx(charge(a))
    assert charge(RealField8.zeros(grid16)) == 0
    assert inner(a, a) > 0
    with pytest.raises(GridMismatchError):
        inner(a, random_field(GridSpec(8, 8.0), rng))


def test_parseval(grid16, rng):
    a, b = random_field(grid16, rng), random_field(grid16, rng)
    A, B = fft_forward(a).data, fft_forward(b).data
    spectral = grid16.cell_volume / grid16.size * np.vdot(A, B).real
    assert spectral == pytest.approx(inner(a, b), rel=1e-12)


def test_fft_roundtrip_and_symmetry(grid16, rng):
    a = random_field(grid16, rng)
    F = fft_forward(a)
    back = fft_inverse(F)
    assert np.abs(back.data - a.data).max() < 1e-12
    assert abs(charge(back) - charge(a)) / charge(a) < 1e-12
    # real input: F(-k) = conj F(k)
    neg = np.roll(np.flip(F.data, axis=(1, 2, 3)), 1, axis=(1, 2, 3))
    assert np.abs(neg - np.conj(F.data)).max() < 1e-10


def test_fft_constant_and_convention(grid16):
    const = RealField8(grid16, np.ones((8,) + grid16.shape))
    F = fft_forward(const).data
    assert np.allclose(F[:, 0, 0, 0], grid16.size)
    assert np.abs(F[:, 1:]).max() < 1e-9 and np.abs(F[:, 0, 1:]).max() < 1e-9
    # e^{+ikx} forward sign: a shifted delta picks up exp(+i k x0)
    d = np.zeros((8,) + grid16.shape)
    d[0, 1, 0, 0] = 1.0
    F = fft_forward(RealField8(grid16, d)).data[0]
    k1 = grid16.k_axis()[1]
    assert F[1, 0, 0] == pytest.approx(np.exp(1j * k1 * grid16.h))


def test_half_spectrum_roundtrip(grid16, rng):
    a = random_field(grid16, rng)
    X = half_spectrum(a.data)
    assert np.allclose(X, fft_forward(a).data[..., : grid16.n // 2 + 1])
    assert np.abs(from_half_spectrum(X, grid16.n) - a.data).max() < 1e-12


def test_fft_inverse_rejects_non_hermitian(grid16):
    from dirac_eq.grid import SpectralField
    X = np.zeros((8,) + grid16.shape, complex)
    X[0, 1, 0, 0] = 1.0
    with pytest.raises(ValueError):
        fft_inverse(SpectralField(grid16, X))


def test_local_seminorm(grid16, rng):
    a = random_field(grid16, rng)
    with pytest.raises(ValueError):
        local_seminorm(a, 8.0)
    with pytest.raises(ValueError):
        local_seminorm(a, np.sqrt(3) * 8)
    vals = [local_seminorm(a, R) for R in np.linspace(0.1, 7.9, 30)]
    assert np.all(np.diff(vals) >= 0)
    bump = smooth_bump(grid16, 3.0)
    assert local_seminorm(bump, 3.5) == pytest.approx(np.sqrt(charge(bump)), rel=1e-14)


def test_test_functions(grid16):
    b = gaussian_bump(grid16, 1.0, component=2, cutoff=1e-6)
    assert np.all(b.data[:, grid16.radius > b.radius] == 0)
    assert b.data[2, 0, 0, 0] == 1.0 and np.all(b.data[[0, 1, 3, 4, 5, 6, 7]] == 0)
    p = point_source(grid16)
    assert p.radius == 0 and charge(p) == grid16.cell_volume
    with pytest.raises(ValueError):
        TestFunction(RealField8(grid16, np.ones((8,) + grid16.shape)), 2.0)

"""Periodic grids, spinor/real field containers, transforms and seminorms.

The continuum R^3 is replaced by the torus [-L/2, L/2)^3 sampled at ``n``
points per axis.  Arrays are stored in FFT order: index ``j`` along an axis
is the coordinate ``j*h`` for ``j < n/2`` and ``(j - n)*h`` otherwise, so the
origin sits at index 0.

Transform normalisation (binding for the whole package): the forward
transform is the unscaled sum ``sum_x exp(+i k.x) f(x)``, the inverse carries
``1/n^3``; physical integrals multiply by ``h^3``.

The spectral wave numbers are ``2 pi m / L`` with ``m`` in ``[-n/2, n/2)``,
except that the unpaired Nyquist index ``m = -n/2`` is mapped to wave number
0.  This keeps every symbol Hermitian-symmetric on the grid so that real
fields stay real and the propagator stays exactly unitary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Mapping

import numpy as np
import scipy.fft as sfft

__all__ = [
    "GridSpec",
    "SpinorField",
    "RealField8",
    "SpectralField",
    "TestFunction",
    "realify",
    "complexify",
    "inner",
    "charge",
    "local_seminorm",
    "pointwise_norm",
    "fft_forward",
    "fft_inverse",
    "half_spectrum",
    "from_half_spectrum",
    "gaussian_bump",
    "smooth_bump",
    "point_source",
    "GridMismatchError",
]

_AXES = (1, 2, 3)


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    n: int
    L: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 8 or self.n % 2:
            raise ValueError(f"n must be an even integer >= 8, got {self.n!r}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.h**3

    @property
    def size(self) -> int:
        return self.n**3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @cached_property
    def x_axis(self) -> np.ndarray:
        """Node coordinates along one axis, FFT order."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n) * self.h

    @cached_property
    def radius(self) -> np.ndarray:
        """Periodic distance of every node from the origin, shape (n, n, n)."""
        x = self.x_axis
        r2 = x[:, None, None] ** 2 + x[None, :, None] ** 2 + x[None, None, :] ** 2
        return np.sqrt(r2)

    def positions(self) -> np.ndarray:
        """Node coordinates, shape (3, n, n, n)."""
        x = self.x_axis
        return np.stack(np.meshgrid(x, x, x, indexing="ij"))

    def k_axis(self) -> np.ndarray:
        """Full spectral wave numbers along one axis (Nyquist mapped to 0)."""
        m = np.fft.fftfreq(self.n, d=1.0 / self.n)
        m[self.n // 2] = 0.0
        return 2 * np.pi * m / self.L

    def k_half_axis(self) -> np.ndarray:
        """Wave numbers along the last axis of a half spectrum."""
        m = np.arange(self.n // 2 + 1, dtype=float)
        m[-1] = 0.0
        return 2 * np.pi * m / self.L

    def wavevectors(self, half: bool = False) -> np.ndarray:
        """Wave vectors of every mode, shape (n, n, n or n//2+1, 3)."""
        ka = self.k_axis()
        kz = self.k_half_axis() if half else ka
        return np.stack(np.meshgrid(ka, ka, kz, indexing="ij"), axis=-1)

    def sample_wavevectors(self, half: bool = False) -> np.ndarray:
        """Like :meth:`wavevectors` but keeping the Nyquist index at -pi/h.

        Used to sample smooth, even covariance profiles; the 0-mapped grid is
        reserved for the differential operator.
        """
        ka = 2 * np.pi * np.fft.fftfreq(self.n, d=self.h)
        kz = 2 * np.pi * np.arange(self.n // 2 + 1) / self.L if half else ka
        return np.stack(np.meshgrid(ka, ka, kz, indexing="ij"), axis=-1)

    def wavenumber_components(self, half: bool = True):
        """Broadcastable (kx, ky, kz) arrays over the (half) spectrum."""
        ka = self.k_axis()
        kz = self.k_half_axis() if half else ka
        return ka[:, None, None], ka[None, :, None], kz[None, None, :]

    def mode_index(self, m) -> tuple[int, int, int]:
        """Array index of the integer mode vector ``m`` (each in [-n/2, n/2))."""
        return tuple(int(mi) % self.n for mi in m)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SpinorField:
    """Complex 4-spinor per node, data shape (4, n, n, n)."""

    grid: GridSpec
    data: np.ndarray
    meta: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.shape != (4,) + self.grid.shape:
            raise ValueError(f"spinor data must have shape {(4,) + self.grid.shape}, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("spinor field has non-finite entries")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))

    def charge(self) -> float:
        return charge(self)


@dataclass(frozen=True)
class RealField8:
    """Real 8-vector per node ordered (Re psi_1..4, Im psi_1..4), data shape (8, n, n, n)."""

    grid: GridSpec
    data: np.ndarray
    meta: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if np.iscomplexobj(data):
            raise TypeError("RealField8 data must be real")
        data = data.astype(float, copy=False)
        if data.shape != (8,) + self.grid.shape:
            raise ValueError(f"real field data must have shape {(8,) + self.grid.shape}, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("real field has non-finite entries")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))

    def charge(self) -> float:
        return charge(self)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "RealField8":
        return cls(grid, np.zeros((8,) + grid.shape))


@dataclass(frozen=True)
class SpectralField:
    """Forward transform of a RealField8, complex data shape (8, n, n, n)."""

    grid: GridSpec
    data: np.ndarray


@dataclass(frozen=True)
class TestFunction:
    """Real test function with a recorded support radius.

    The field vanishes identically at every node farther than ``radius`` from
    the origin (periodic distance).
    """

    __test__ = False  # not a pytest class

    field: RealField8
    radius: float
    label: str = ""

    def __post_init__(self):
        outside = self.field.grid.radius > self.radius
        if np.any(self.field.data[:, outside] != 0):
            raise ValueError(f"test function does not vanish outside radius {self.radius}")

    @property
    def grid(self) -> GridSpec:
        return self.field.grid

    @property
    def data(self) -> np.ndarray:
        return self.field.data


def _as_real(f) -> RealField8:
    if isinstance(f, RealField8):
        return f
    if isinstance(f, TestFunction):
        return f.field
    if isinstance(f, SpinorField):
        return realify(f)
    raise TypeError(f"expected a field, got {type(f).__name__}")


def realify(psi: SpinorField) -> RealField8:
    return RealField8(psi.grid, np.concatenate([psi.data.real, psi.data.imag]), meta=psi.meta)


def complexify(f: RealField8) -> SpinorField:
    return SpinorField(f.grid, f.data[:4] + 1j * f.data[4:], meta=f.meta)


def _check_same_grid(a: GridSpec, b: GridSpec):
    if a != b:
        raise GridMismatchError(f"grid mismatch: {a} vs {b}")


def inner(psi, phi) -> float:
    """Real inner product h^3 sum_x sum_j R^j psi(x) R^j phi(x)."""
    a = _as_real(psi)
    b = _as_real(phi)
    _check_same_grid(a.grid, b.grid)
    return float(a.grid.cell_volume * np.dot(a.data.ravel(), b.data.ravel()))


def charge(psi) -> float:
    """L^2 charge h^3 sum |psi(x)|^2."""
    return inner(psi, psi)


def pointwise_norm(psi) -> np.ndarray:
    """|psi(x)| at every node, shape (n, n, n)."""
    a = _as_real(psi)
    return np.sqrt(np.einsum("i...,i...->...", a.data, a.data))


def local_seminorm(psi, R: float) -> float:
    """(h^3 sum_{|x|<R} |psi(x)|^2)^(1/2).

    Raises
    ------
    ValueError
        If ``R >= L/2`` (the ball would wrap around the torus).
    """
    a = _as_real(psi)
    g = a.grid
    if not R < g.L / 2:
        raise ValueError(f"seminorm radius R={R} must be below L/2={g.L / 2}")
    mask = g.radius < R
    sq = np.einsum("i...,i...->...", a.data, a.data)
    return float(np.sqrt(g.cell_volume * sq[mask].sum()))


def fft_forward(f) -> SpectralField:
    """sum_x exp(+i k.x) f(x) for every grid mode (unscaled)."""
    a = _as_real(f)
    return SpectralField(a.grid, sfft.ifftn(a.data, axes=_AXES, norm="forward"))


def fft_inverse(F: SpectralField, tol: float = 1e-9) -> RealField8:
    """Inverse of :func:`fft_forward`; rejects spectra of non-real fields."""
    out = sfft.fftn(F.data, axes=_AXES, norm="forward")
    scale = max(np.abs(out).max(), 1e-300)
    if np.abs(out.imag).max() > tol * scale:
        raise ValueError("spectrum is not Hermitian-symmetric; inverse is not real")
    return RealField8(F.grid, out.real)


def half_spectrum(data: np.ndarray) -> np.ndarray:
    """Forward transform of real data on the half spectrum (last axis 0..n/2)."""
    return np.conj(sfft.rfftn(data, axes=_AXES))


def from_half_spectrum(X: np.ndarray, n: int) -> np.ndarray:
    return sfft.irfftn(np.conj(X), s=(n, n, n), axes=_AXES)


# -- test functions -----------------------------------------------------------

def _component_vector(component) -> np.ndarray:
    v = np.zeros(8)
    if isinstance(component, (int, np.integer)):
        v[int(component)] = 1.0
    else:
        v = np.asarray(component, dtype=float)
        if v.shape != (8,):
            raise ValueError("component must be an index or an 8-vector")
    return v


def _profile_to_test_function(grid, profile, radius, component, label):
    vec = _component_vector(component)
    profile = np.where(grid.radius <= radius, profile, 0.0)
    data = vec[:, None, None, None] * profile[None]
    return TestFunction(RealField8(grid, data), float(radius), label)


def gaussian_bump(grid: GridSpec, sigma: float, component=0, cutoff: float = 1e-16,
                  amplitude: float = 1.0) -> TestFunction:
    """Gaussian exp(-|x|^2 / 2 sigma^2) truncated where it drops below ``cutoff``.

    The truncation makes the support compact on the grid while the jump at the
    edge stays at the ``cutoff`` level, so the spectrum is essentially that of
    the Gaussian.
    """
    radius = sigma * np.sqrt(-2.0 * np.log(cutoff))
    prof = amplitude * np.exp(-0.5 * (grid.radius / sigma) ** 2)
    return _profile_to_test_function(grid, prof, radius, component, f"gaussian(sigma={sigma!r})")


def smooth_bump(grid: GridSpec, radius: float, component=0, power: int = 4,
                amplitude: float = 1.0) -> TestFunction:
    """Polynomial bump (1 - |x|^2/radius^2)^power, C^(power-1) at the edge."""
    s = np.clip(1.0 - (grid.radius / radius) ** 2, 0.0, None)
    prof = amplitude * s**power
    return _profile_to_test_function(grid, prof, radius, component, f"bump(radius={radius!r})")


def point_source(grid: GridSpec, component=0, amplitude: float = 1.0) -> TestFunction:
    prof = np.zeros(grid.shape)
    prof[0, 0, 0] = amplitude
    return _profile_to_test_function(grid, prof, 0.0, component, "point")

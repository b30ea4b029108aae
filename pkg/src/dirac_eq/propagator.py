"""Exact spectral evolution under the Dirac group and its dual.

Evolution is one multiplication per Fourier mode by
``G_t(k) = cos(omega t) - P(-ik) sin(omega t)/omega`` applied to the real
8-component view; there is no time stepping.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .clifford import LAMBDA, LAMBDA0, spinor_propagator_symbol
from .grid import (
    GridSpec,
    RealField8,
    SpinorField,
    TestFunction,
    from_half_spectrum,
    half_spectrum,
    local_seminorm,
    pointwise_norm,
    realify,
    complexify,
)

__all__ = [
    "evolve",
    "adjoint_evolve",
    "evolve_spinor_direct",
    "support_radius",
    "local_estimate_check",
    "LocalEstimateReport",
    "TrigCache",
    "WraparoundWarning",
]


class WraparoundWarning(UserWarning):
    """Signal travelling from the support would wrap around the torus."""


class TrigCache:
    """Per-mode cos(omega t) and sin(omega t)/omega, keyed by (grid, m, t).

    Ensembles evolve many fields to the same few times; the trigonometric
    tables are the only part of the symbol worth keeping.
    """

    def __init__(self, maxsize: int = 8):
        self.maxsize = maxsize
        self._store: dict = {}

    def get(self, grid: GridSpec, m: float, t: float):
        key = (grid, float(m), float(t))
        hit = self._store.get(key)
        if hit is None:
            hit = _trig_tables(grid, m, t)
            if len(self._store) >= self.maxsize:
                self._store.pop(next(iter(self._store)))
            self._store[key] = hit
        return hit

    def __len__(self):
        return len(self._store)


def _trig_tables(grid: GridSpec, m: float, t: float):
    kx, ky, kz = grid.wavenumber_components(half=True)
    w = np.sqrt(kx**2 + ky**2 + kz**2 + m * m)
    return np.cos(w * t), np.sin(w * t) / w


def _apply_symbol(X: np.ndarray, grid: GridSpec, t: float, m: float, sign: float, cache):
    """Multiply a half spectrum (8, n, n, n//2+1) by cos - sign * P sin/omega."""
    c, s = cache.get(grid, m, t) if cache is not None else _trig_tables(grid, m, t)
    kx, ky, kz = grid.wavenumber_components(half=True)
    PX = m * np.tensordot(LAMBDA0, X, axes=(1, 0))
    for lam, kc in zip(LAMBDA, (kx, ky, kz)):
        PX += (-1j * kc) * np.tensordot(lam, X, axes=(1, 0))
    PX *= s
    out = c * X
    if sign > 0:
        out -= PX
    else:
        out += PX
    return out


def _check_budget(grid: GridSpec, t: float, support: float | None):
    if support is None:
        return False
    wraps = abs(t) + support >= grid.L / 2
    if wraps:
        warnings.warn(
            f"t={t} with support radius {support} exceeds the torus half-width {grid.L / 2}",
            WraparoundWarning,
            stacklevel=3,
        )
    return wraps


def _evolve_real(f: RealField8, t: float, m: float, sign: float, cache, support):
    grid = f.grid
    wraps = _check_budget(grid, t, support)
    if t == 0:
        out = np.array(f.data)
    else:
        X = half_spectrum(f.data)
        out = from_half_spectrum(_apply_symbol(X, grid, t, m, sign, cache), grid.n)
    return RealField8(grid, out, meta={"t": float(t), "m": float(m), "wraparound": wraps})


def evolve(psi0, t: float, m: float = 1.0, cache: TrigCache | None = None,
           support: float | None = None):
    """U(t) psi0.  Accepts SpinorField or RealField8 and returns the same kind.

    ``support`` is the radius that must stay inside the torus (initial support
    plus correlation range); when ``|t| + support >= L/2`` a
    :class:`WraparoundWarning` is raised and ``meta['wraparound']`` is set.
    Spectral quantities remain valid either way.
    """
    if isinstance(psi0, SpinorField):
        return complexify(_evolve_real(realify(psi0), t, m, +1.0, cache, support))
    if isinstance(psi0, TestFunction):
        psi0 = psi0.field
    return _evolve_real(psi0, t, m, +1.0, cache, support)


def adjoint_evolve(phi, t: float, m: float = 1.0, cache: TrigCache | None = None) -> RealField8:
    """U'(t) phi, so that <U(t) psi, phi> = <psi, U'(t) phi>."""
    support = phi.radius if isinstance(phi, TestFunction) else None
    if isinstance(phi, TestFunction):
        phi = phi.field
    elif isinstance(phi, SpinorField):
        phi = realify(phi)
    return _evolve_real(phi, t, m, -1.0, cache, support)


def evolve_spinor_direct(psi0: SpinorField, t: float, m: float = 1.0) -> SpinorField:
    """Cross-check path: complex 4x4 symbol on the full complex spectrum."""
    grid = psi0.grid
    axes = (1, 2, 3)
    X = sfft.ifftn(psi0.data, axes=axes, norm="forward")
    G = spinor_propagator_symbol(grid.wavevectors(half=False), t, m)
    Y = np.einsum("xyzab,bxyz->axyz", G, X)
    return SpinorField(grid, sfft.fftn(Y, axes=axes, norm="forward"))


def support_radius(psi, amplitude_floor: float) -> float:
    """Smallest R with |psi(x)| < amplitude_floor at every node with |x| > R."""
    if isinstance(psi, TestFunction):
        psi = psi.field
    norm = pointwise_norm(psi)
    above = norm >= amplitude_floor
    if not above.any():
        return 0.0
    return float(psi.grid.radius[above].max())


@dataclass(frozen=True)
class LocalEstimateReport:
    t: float
    R: float
    seminorm_t: float
    seminorm_0: float

    @property
    def ratio(self) -> float:
        if self.seminorm_0 == 0:
            return 0.0 if self.seminorm_t == 0 else float("inf")
        return self.seminorm_t / self.seminorm_0


def local_estimate_check(psi0, t: float, R: float, m: float = 1.0) -> LocalEstimateReport:
    """Compare ||U(t) psi0||_{0,R} against ||psi0||_{0,R+|t|}."""
    L = psi0.grid.L
    if not R + abs(t) < L / 2:
        raise ValueError(f"R + |t| = {R + abs(t)} must be below L/2 = {L / 2}")
    psit = evolve(psi0, t, m)
    return LocalEstimateReport(float(t), float(R), local_seminorm(psit, R),
                               local_seminorm(psi0, R + abs(t)))

"""Initial random measures with exactly known covariance.

Both samplers are linear filters of i.i.d. noise, ``psi0 = C xi``:

* ``gaussian_spectral``: ``xi`` standard normal, ``C = F^-1 q0_hat(k)^(1/2) F / h^(3/2)``,
  giving a zero-mean translation-invariant Gaussian field with covariance
  symbol ``q0_hat``.
* ``moving_average``: ``xi`` i.i.d. symmetric +-1, ``C`` a convolution with a
  compactly supported kernel ``b(u) A``.  Values farther apart than twice the
  kernel radius are independent, so the mixing coefficient vanishes beyond
  that range.

Because the filter is linear, a projection ``<psi0, phi>`` equals
``h^3 (xi . C^T phi)``; ensembles use this to avoid rebuilding fields.
Per-sample noise is drawn from ``SeedSequence(seed, spawn_key=(index,))`` so
any sample can be regenerated on its own.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .clifford import build_dirac_matrices
from .grid import (
    GridMismatchError,
    GridSpec,
    RealField8,
    from_half_spectrum,
    half_spectrum,
)

__all__ = [
    "CovarianceSymbol",
    "gaussian_symbol",
    "flat_symbol",
    "polarization_matrix",
    "SamplerSpec",
    "Sampler",
    "GaussianSampler",
    "MovingAverageSampler",
    "make_sampler",
    "sample_gaussian",
    "sample_moving_average",
    "exact_covariance",
    "empirical_covariance",
    "CovarianceEstimate",
    "NonPSDError",
    "psd_sqrt",
]


class NonPSDError(ValueError):
    pass


@dataclass(frozen=True)
class CovarianceSymbol:
    """k -> 8x8 Hermitian PSD matrix q0_hat(k), vectorised over (..., 3).

    ``separable`` optionally records the factorisation ``g(k) * D`` with a
    scalar profile ``g`` and constant matrix ``D``; it enables cheap square
    roots but carries no extra meaning.  ``r_corr`` is the position-space
    support radius of q0 (``inf`` if not compact); ``effective_range`` is a
    finite radius beyond which q0 is below double precision, used for
    torus budgets.
    """

    func: Callable[[np.ndarray], np.ndarray]
    r_corr: float = np.inf
    effective_range: float | None = None
    name: str = "custom"
    separable: tuple | None = None
    grid_func: Callable | None = None

    def __call__(self, k) -> np.ndarray:
        return self.func(np.asarray(k, dtype=float))

    @property
    def budget_range(self) -> float:
        if np.isfinite(self.r_corr):
            return float(self.r_corr)
        return float(self.effective_range if self.effective_range is not None else np.inf)

    def on_grid(self, grid: GridSpec, half: bool = False) -> np.ndarray:
        """Symbol on every spectral mode, shape (n, n, n or n//2+1, 8, 8)."""
        if self.grid_func is not None:
            return self.grid_func(grid, half)
        kv = grid.sample_wavevectors(half=half)
        if self.separable is not None:
            g, D = self.separable
            return g(kv)[..., None, None] * D
        out = np.empty(kv.shape[:-1] + (8, 8), dtype=complex)
        for i in range(kv.shape[0]):
            out[i] = self(kv[i])
        return out

    def trace_integral(self, grid: GridSpec) -> float:
        """(2 pi)^-3 int tr q0_hat dk as a grid sum: the mean charge density e0."""
        if self.grid_func is not None or self.separable is not None:
            table = self.on_grid(grid, half=False)
            return float(np.trace(table, axis1=-2, axis2=-1).real.sum() / grid.L**3)
        kv = grid.sample_wavevectors(half=False)
        total = 0.0
        for i in range(kv.shape[0]):
            total += np.trace(self(kv[i]), axis1=-2, axis2=-1).real.sum()
        return float(total / grid.L**3)


def polarization_matrix(p: float = 0.0) -> np.ndarray:
    """I + p * diag(beta, beta): a constant PSD matrix for |p| <= 1.

    For ``p != 0`` it does not commute with the Dirac symbols, so a symbol
    ``g(k) * polarization_matrix(p)`` is not already an equilibrium.
    """
    beta = build_dirac_matrices().beta.real
    return np.eye(8) + p * np.kron(np.eye(2), beta)


def gaussian_symbol(kappa: float = 1.0, polarization: float = 0.0, amplitude: float = 1.0) -> CovarianceSymbol:
    """q0_hat(k) = amplitude * exp(-|k|^2 / 2 kappa^2) * (I + polarization * diag(beta, beta))."""
    D = amplitude * polarization_matrix(polarization)

    def g(k):
        return np.exp(-0.5 * np.sum(k * k, axis=-1) / kappa**2)

    def func(k):
        return g(k)[..., None, None] * D

    # q0(z) ~ exp(-kappa^2 |z|^2 / 2): below 1e-16 relative beyond ~8.6/kappa
    reach = np.sqrt(-2 * np.log(1e-16)) / kappa
    return CovarianceSymbol(func, np.inf, reach, f"gaussian(kappa={kappa!r}, polarization={polarization!r})",
                            separable=(g, D))


def flat_symbol(c: float = 1.0) -> CovarianceSymbol:
    D = c * np.eye(8)

    def g(k):
        return np.ones(np.shape(k)[:-1])

    return CovarianceSymbol(lambda k: g(k)[..., None, None] * D, 0.0, 0.0, f"flat({c!r})", separable=(g, D))


def psd_sqrt(Q: np.ndarray, kv: np.ndarray | None = None, clamp: float = 1e-12) -> np.ndarray:
    """Hermitian PSD square root of a stack of matrices.

    Eigenvalues in ``[-clamp, 0)`` are set to zero; anything more negative is
    an error naming the offending mode.
    """
    w, V = np.linalg.eigh(Q)
    bad = w < -clamp
    if bad.any():
        idx = np.unravel_index(np.argmin(w), w.shape)
        where = tuple(int(i) for i in idx[:-1])
        k = kv[where] if kv is not None else where
        raise NonPSDError(f"covariance symbol not PSD at k={np.round(k, 12).tolist()}: "
                          f"most negative eigenvalue {w[idx]:.3e}")
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))


@dataclass(frozen=True)
class SamplerSpec:
    """Serializable description of the initial measure.

    ``params`` for ``gaussian_spectral``: ``kappa``, ``polarization``,
    ``amplitude``.  For ``moving_average``: ``kernel_radius`` (0 means a
    delta kernel), ``amplitude`` and ``polarization`` (the mixing matrix is
    the square root of ``I + polarization * diag(beta, beta)``).
    """

    kind: str
    grid: GridSpec
    seed: int = 0
    params: dict = field(default_factory=dict)

    KINDS = ("gaussian_spectral", "moving_average")
    ALIASES = {"finite_range_moving_average": "moving_average"}

    def __post_init__(self):
        object.__setattr__(self, "kind", self.ALIASES.get(self.kind, self.kind))
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}; expected one of {self.KINDS}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "params", dict(self.params))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.grid.n, "L": self.grid.L, "seed": int(self.seed),
                "params": dict(sorted(self.params.items()))}

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerSpec":
        return cls(d["kind"], GridSpec(d["n"], d["L"]), int(d["seed"]), dict(d.get("params", {})))


def _rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


class Sampler:
    """Linear-filter sampler: field = color(noise(index))."""

    #: excess kurtosis of a single noise entry
    noise_excess_kurtosis = 0.0

    def __init__(self, spec: SamplerSpec):
        self.spec = spec
        self.grid = spec.grid

    def noise(self, index: int) -> np.ndarray:
        raise NotImplementedError

    def color(self, xi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def color_adjoint(self, phi: np.ndarray) -> np.ndarray:
        """Euclidean transpose of :meth:`color` (no h^3 weights)."""
        raise NotImplementedError

    def exact_covariance(self) -> CovarianceSymbol:
        raise NotImplementedError

    @property
    def correlation_range(self) -> float:
        return self.exact_covariance().budget_range

    def sample(self, index: int) -> RealField8:
        return RealField8(self.grid, self.color(self.noise(index)),
                          meta={"sampler": self.spec.kind, "index": int(index)})

    def projection_weights(self, phi) -> np.ndarray:
        """w with <sample(i), phi> = w . noise(i) for every i."""
        data = phi.data if hasattr(phi, "data") else np.asarray(phi)
        return self.grid.cell_volume * self.color_adjoint(data)


class GaussianSampler(Sampler):
    def __init__(self, spec: SamplerSpec, symbol: CovarianceSymbol | None = None):
        super().__init__(spec)
        p = spec.params
        self.symbol = symbol if symbol is not None else gaussian_symbol(
            p.get("kappa", 1.0), p.get("polarization", 0.0), p.get("amplitude", 1.0))
        self._sqrt = self._build_sqrt()

    def _build_sqrt(self):
        grid = self.grid
        if self.symbol.grid_func is not None:
            table = self.symbol.on_grid(grid, half=True)
            kv = grid.sample_wavevectors(half=True)
            S = np.empty(table.shape, dtype=complex)
            for i in range(table.shape[0]):
                S[i] = psd_sqrt(table[i], kv[i])
            return S
        if self.symbol.separable is not None:
            g, D = self.symbol.separable
            kv = grid.sample_wavevectors(half=True)
            gk = g(kv)
            if np.any(gk < -1e-12):
                raise NonPSDError("scalar covariance profile is negative somewhere")
            return np.sqrt(np.clip(gk, 0, None)), psd_sqrt(np.asarray(D, dtype=complex))
        kv = grid.sample_wavevectors(half=True)
        S = np.empty(kv.shape[:-1] + (8, 8), dtype=complex)
        for i in range(kv.shape[0]):
            S[i] = psd_sqrt(self.symbol(kv[i]), kv[i])
        return S

    def noise(self, index: int) -> np.ndarray:
        return _rng(self.spec.seed, index).standard_normal((8,) + self.grid.shape)

    def _filter(self, data: np.ndarray, adjoint: bool) -> np.ndarray:
        X = half_spectrum(data)
        if isinstance(self._sqrt, tuple):
            sg, sD = self._sqrt
            M = np.conj(sD.T) if adjoint else sD
            Y = sg * np.tensordot(M, X, axes=(1, 0))
        else:
            S = np.conj(np.swapaxes(self._sqrt, -1, -2)) if adjoint else self._sqrt
            Y = np.einsum("xyzab,bxyz->axyz", S, X)
        return from_half_spectrum(Y, self.grid.n) / self.grid.h**1.5

    def color(self, xi):
        return self._filter(xi, adjoint=False)

    def color_adjoint(self, phi):
        return self._filter(phi, adjoint=True)

    def exact_covariance(self) -> CovarianceSymbol:
        return self.symbol


def bump_kernel(grid: GridSpec, radius: float) -> np.ndarray:
    """C^1 bump (1 - |u|^2/r^2)^2 on the grid, scaled to unit sum of squares.

    ``radius == 0`` gives the discrete delta.
    """
    if radius == 0:
        b = np.zeros(grid.shape)
        b[0, 0, 0] = 1.0
        return b
    s = np.clip(1.0 - (grid.radius / radius) ** 2, 0.0, None)
    b = s**2
    return b / np.sqrt(np.sum(b * b))


class MovingAverageSampler(Sampler):
    noise_excess_kurtosis = -2.0

    def __init__(self, spec: SamplerSpec, matrix: np.ndarray | None = None):
        super().__init__(spec)
        grid = self.grid
        self.radius = float(spec.params.get("kernel_radius", 3.0 * grid.h))
        if self.radius > grid.L / 4:
            raise ValueError(f"kernel radius {self.radius} exceeds L/4 = {grid.L / 4}")
        if self.radius < 0:
            raise ValueError("kernel radius must be non-negative")
        if matrix is None:
            pol = spec.params.get("polarization", 0.0)
            matrix = spec.params.get("amplitude", 1.0) * psd_sqrt(polarization_matrix(pol).astype(complex)).real
        self.matrix = np.asarray(matrix, dtype=float)
        self.kernel = bump_kernel(grid, self.radius)
        self._khat = half_spectrum(self.kernel[None])[0]
        nz = np.nonzero(self.kernel)
        pos = grid.positions()
        self._support_pos = np.stack([p[nz] for p in pos], axis=-1)
        self._support_val = self.kernel[nz]

    def noise(self, index: int) -> np.ndarray:
        rng = _rng(self.spec.seed, index)
        count = 8 * self.grid.size
        bits = np.unpackbits(np.frombuffer(rng.bytes(count // 8), dtype=np.uint8))
        return (2.0 * bits - 1.0).reshape((8,) + self.grid.shape)

    def color(self, xi):
        X = np.tensordot(self.matrix, half_spectrum(xi), axes=(1, 0))
        return from_half_spectrum(self._khat * X, self.grid.n)

    def color_adjoint(self, phi):
        X = np.tensordot(self.matrix.T, half_spectrum(phi), axes=(1, 0))
        return from_half_spectrum(np.conj(self._khat) * X, self.grid.n)

    def kernel_transform(self, k) -> np.ndarray:
        """sum_u exp(i k.u) b(u) evaluated at arbitrary wave vectors (..., 3)."""
        k = np.asarray(k, dtype=float)
        phase = np.tensordot(k, self._support_pos.T, axes=([-1], [0]))
        return np.exp(1j * phase) @ self._support_val

    def exact_covariance(self) -> CovarianceSymbol:
        h3 = self.grid.cell_volume
        D = self.matrix @ self.matrix.T

        def g(k):
            return h3 * np.abs(self.kernel_transform(k)) ** 2

        def func(k):
            return g(k)[..., None, None] * D

        def grid_func(grid, half):
            # the sampler convolves with the DFT of the kernel, which differs
            # from kernel_transform at the Nyquist planes
            if grid != self.grid:
                raise GridMismatchError("moving-average symbol is tied to its sampler grid")
            if half:
                bh = self._khat
            else:
                bh = np.fft.ifftn(self.kernel, norm="forward")
            return (h3 * np.abs(bh) ** 2)[..., None, None] * D

        rc = 2.0 * self.radius
        return CovarianceSymbol(func, rc, rc, f"moving_average(radius={self.radius!r})",
                                separable=(g, D), grid_func=grid_func)


def make_sampler(spec: SamplerSpec) -> Sampler:
    if spec.kind == "gaussian_spectral":
        return GaussianSampler(spec)
    return MovingAverageSampler(spec)


def sample_gaussian(spec: SamplerSpec, index: int = 0) -> RealField8:
    return GaussianSampler(spec).sample(index)


def sample_moving_average(spec: SamplerSpec, index: int = 0) -> RealField8:
    return MovingAverageSampler(spec).sample(index)


def exact_covariance(spec: SamplerSpec) -> CovarianceSymbol:
    return make_sampler(spec).exact_covariance()


@dataclass(frozen=True)
class CovarianceEstimate:
    """Empirical covariance at a list of offsets.

    ``mean[i]`` estimates ``q0(z_i)[a, b] = E psi_a(x + z_i) psi_b(x)``; ``se``
    is the standard error across samples.
    """

    offsets: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    n_samples: int


def empirical_covariance(samples, offsets) -> CovarianceEstimate:
    """Average psi(x+z) psi(x)^T over samples and base points.

    Offsets are physical vectors and must lie on the grid.
    """
    samples = list(samples)
    if len(samples) < 1:
        raise ValueError("need at least one sample")
    grid = samples[0].grid
    for s in samples[1:]:
        if s.grid != grid:
            raise GridMismatchError("samples live on different grids")
    offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
    shifts = np.rint(offsets / grid.h).astype(int)
    if np.abs(shifts * grid.h - offsets).max() > 1e-9 * grid.h:
        raise ValueError("offsets must be integer multiples of the grid spacing")
    per = np.empty((len(samples), len(offsets), 8, 8))
    N = grid.size
    for s, f in enumerate(samples):
        A = f.data.reshape(8, N)
        for i, sh in enumerate(shifts):
            B = np.roll(f.data, shift=tuple(-sh), axis=(1, 2, 3)).reshape(8, N)
            per[s, i] = B @ A.T / N
    mean = per.mean(axis=0)
    M = len(samples)
    se = per.std(axis=0, ddof=1) / np.sqrt(M) if M > 1 else np.full_like(mean, np.nan)
    return CovarianceEstimate(offsets, mean, se, M)

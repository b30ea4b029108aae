"""Exact time-t and equilibrium covariances and their convergence diagnostics.

Everything here is deterministic: covariance symbols are propagated mode by
mode, ``q_t_hat = G_t q0_hat G_t^dagger``, and the equilibrium symbol is

    q_inf_hat = q0_hat / 2 + P(-ik) q0_hat P^T(ik) / (2 (|k|^2 + m^2)).

Position-space covariances use ``q(z) = (2 pi)^-3 int exp(-ik.z) q_hat(k) dk``
which on the torus is ``(1 / (n^3 h^3)) sum_k exp(-ik.z) q_hat(k)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .clifford import adjoint_propagator_symbol, dispersion, propagator_symbol, symbol_P
from .grid import GridSpec, TestFunction, RealField8
from .measures import CovarianceSymbol

__all__ = [
    "q_hat_t",
    "q_hat_t_expanded",
    "q_hat_inf",
    "symbol_table",
    "propagate_table",
    "equilibrium_table",
    "q_position",
    "q_inf_yukawa",
    "yukawa_kernel",
    "convergence_profile",
    "ConvergenceProfile",
    "quadratic_form",
    "fixed_point_residual",
    "time_average",
    "time_average_error",
    "write_covariance_csv",
]


def _dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def _values(q0, k):
    if callable(q0):
        return q0(k)
    return np.asarray(q0)


def q_hat_t(k, t: float, q0, m: float = 1.0) -> np.ndarray:
    """G_t(k) q0_hat(k) G_t(k)^dagger."""
    G = propagator_symbol(k, t, m)
    return G @ _values(q0, k) @ _dagger(G)


def q_hat_t_expanded(k, t: float, q0, m: float = 1.0) -> np.ndarray:
    """Same as :func:`q_hat_t` written with cos(2 omega t) and sin(2 omega t)."""
    k = np.asarray(k, dtype=float)
    q = _values(q0, k)
    w = dispersion(k, m)[..., None, None]
    P = symbol_P(k, m)
    PT = np.swapaxes(symbol_P(-k, m), -1, -2)  # P^T(ik)
    return ((1 + np.cos(2 * w * t)) / 2 * q
            - np.sin(2 * w * t) / (2 * w) * (q @ PT + P @ q)
            + (1 - np.cos(2 * w * t)) / (2 * w**2) * (P @ q @ PT))


def q_hat_inf(k, q0, m: float = 1.0) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    q = _values(q0, k)
    P = symbol_P(k, m)
    PT = np.swapaxes(symbol_P(-k, m), -1, -2)
    yuk = 1.0 / (np.sum(k * k, axis=-1) + m * m)
    return 0.5 * q + 0.5 * yuk[..., None, None] * (P @ q @ PT)


def symbol_table(q0, grid: GridSpec, half: bool = False) -> np.ndarray:
    """q0_hat on every spectral mode, shape (n, n, n or n//2+1, 8, 8)."""
    if isinstance(q0, CovarianceSymbol):
        return q0.on_grid(grid, half=half).astype(complex)
    if callable(q0):
        kv = grid.sample_wavevectors(half=half)
        return np.stack([q0(kv[i]) for i in range(grid.n)]).astype(complex)
    return np.asarray(q0, dtype=complex)


def _slabwise(table, grid, half, fn):
    kv = grid.wavevectors(half=half)
    out = np.empty_like(table, dtype=complex)
    for i in range(grid.n):
        out[i] = fn(kv[i], table[i])
    return out


def propagate_table(table: np.ndarray, grid: GridSpec, t: float, m: float = 1.0,
                    half: bool = False) -> np.ndarray:
    return _slabwise(table, grid, half, lambda k, q: q_hat_t(k, t, q, m))


def equilibrium_table(table: np.ndarray, grid: GridSpec, m: float = 1.0, half: bool = False) -> np.ndarray:
    return _slabwise(table, grid, half, lambda k, q: q_hat_inf(k, q, m))


def fixed_point_residual(table_inf: np.ndarray, grid: GridSpec, t: float, m: float = 1.0) -> float:
    """max |G_t q_inf G_t^dagger - q_inf| over the grid."""
    moved = propagate_table(table_inf, grid, t, m)
    return float(np.abs(moved - table_inf).max())


def time_average(k, T: float, q0, m: float = 1.0, panels: int | None = None, order: int = 8) -> np.ndarray:
    """(1/T) int_0^T q_t_hat(k) dt by composite Gauss-Legendre quadrature.

    The default uses one panel per unit time, which resolves the 2 omega
    oscillation for |k| up to about 5.
    """
    k = np.asarray(k, dtype=float)
    panels = max(1, int(np.ceil(T))) if panels is None else panels
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, T, panels + 1)
    acc = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        half = 0.5 * (b - a)
        for xi, wi in zip(x, w):
            acc = acc + wi * half * q_hat_t(k, a + half * (xi + 1), q0, m)
    return acc / T


def time_average_error(q0, Ts, m: float = 1.0, n_k: int = 500, k_max: float = 3.0, seed: int = 0) -> np.ndarray:
    """RMS over random k (uniform in the ball |k| <= k_max) of the max-entry
    error between the time average over [0, T] and q_inf_hat, per T.

    A single mode oscillates like |sin 2 omega T| / (2 omega T); averaging over
    many modes exposes the 1/T envelope.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n_k, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    k = v * (k_max * rng.random(n_k) ** (1 / 3))[:, None]
    qi = q_hat_inf(k, q0, m)
    out = []
    for T in Ts:
        err = np.abs(time_average(k, T, q0, m) - qi).max(axis=(-2, -1))
        out.append(np.sqrt(np.mean(err**2)))
    return np.array(out)


def _offset_indices(grid: GridSpec, offsets) -> np.ndarray:
    offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
    idx = np.rint(offsets / grid.h).astype(int)
    if np.abs(idx * grid.h - offsets).max() > 1e-9 * grid.h:
        raise ValueError("offsets must be integer multiples of the grid spacing")
    return idx % grid.n


def q_position(symbol, grid: GridSpec, offsets, imag_tol: float = 1e-10) -> np.ndarray:
    """Position-space covariance q(z) at grid offsets, shape (len(offsets), 8, 8).

    ``symbol`` is a CovarianceSymbol, a callable or a full-grid table.  The
    imaginary residue of the inverse transform is checked against
    ``imag_tol`` (relative to the largest entry).
    """
    table = symbol_table(symbol, grid, half=False)
    idx = _offset_indices(grid, offsets)
    out = np.empty((len(idx), 8, 8))
    scale = 1.0 / grid.cell_volume
    worst = 0.0
    peak = 0.0
    for a in range(8):
        for b in range(8):
            q = sfft.fftn(table[..., a, b], norm="forward") * scale
            worst = max(worst, float(np.abs(q.imag).max()))
            peak = max(peak, float(np.abs(q.real).max()))
            out[:, a, b] = q.real[idx[:, 0], idx[:, 1], idx[:, 2]]
    if worst > imag_tol * max(peak, 1e-300):
        raise ValueError(f"inverse transform has imaginary residue {worst:.3e} (peak {peak:.3e})")
    return out


def yukawa_kernel(grid: GridSpec, m: float = 1.0, center: str = "cell") -> np.ndarray:
    """Quadrature weights h^3 exp(-m|z|)/(4 pi |z|) on the torus.

    ``center`` selects the weight of the singular z = 0 cell: ``"omit"`` drops
    it, ``"cell"`` uses the integral over the ball of equal volume.
    """
    r = grid.radius
    with np.errstate(divide="ignore", invalid="ignore"):
        w = grid.cell_volume * np.exp(-m * r) / (4 * np.pi * r)
    if center == "omit":
        w[0, 0, 0] = 0.0
    elif center == "cell":
        rc = grid.h * (3.0 / (4 * np.pi)) ** (1.0 / 3.0)
        # int_0^rc r exp(-m r) dr
        w[0, 0, 0] = (1.0 - np.exp(-m * rc) * (1.0 + m * rc)) / m**2
    else:
        raise ValueError(f"unknown center treatment {center!r}")
    return w


def q_inf_yukawa(symbol, grid: GridSpec, offsets, m: float = 1.0, center: str = "cell") -> np.ndarray:
    """Equilibrium covariance via the position-space Yukawa convolution.

    q_inf = q0/2 - (1/2) Y * [P(nabla) q0 P(<-nabla)] with Y the fundamental
    solution of -Laplacian + m^2.  The bracket is formed spectrally; only the
    division by |k|^2 + m^2 is replaced by a direct convolution.  Cross-check
    for :func:`q_position` of the equilibrium table.
    """
    table = symbol_table(symbol, grid, half=False)
    kv = grid.wavevectors(half=False)
    # P(nabla) q0 P(<-nabla) has symbol P(-ik) q0_hat P(-ik)
    inner = np.empty_like(table)
    for i in range(grid.n):
        P = symbol_P(kv[i], m)
        inner[i] = P @ table[i] @ P
    Yhat = sfft.ifftn(yukawa_kernel(grid, m, center), norm="forward")
    idx = _offset_indices(grid, offsets)
    out = np.empty((len(idx), 8, 8))
    scale = 1.0 / grid.cell_volume
    for a in range(8):
        for b in range(8):
            q0 = sfft.fftn(table[..., a, b], norm="forward").real * scale
            conv = sfft.fftn(Yhat * inner[..., a, b], norm="forward").real * scale
            val = 0.5 * q0 - 0.5 * conv
            out[:, a, b] = val[idx[:, 0], idx[:, 1], idx[:, 2]]
    return out


@dataclass(frozen=True)
class ConvergenceProfile:
    """|q_t(z) - q_inf(z)| (max over matrix entries) per probe and time."""

    times: np.ndarray
    probes: np.ndarray
    deviation: np.ndarray  # (len(times), len(probes))
    scale: float  # max |q_inf| over probes, for relative reading

    @property
    def worst(self) -> np.ndarray:
        """max over probes, per time."""
        return self.deviation.max(axis=1)

    def dyadic_envelope(self, t0: float = 1.0):
        """Max of :attr:`worst` over windows [t0 2^j, t0 2^(j+1)).

        Returns (window starts, envelope); windows without samples are skipped.
        """
        j = np.floor(np.log2(self.times / t0)).astype(int)
        starts, env = [], []
        for jj in np.unique(j[self.times >= t0]):
            sel = j == jj
            starts.append(t0 * 2.0**jj)
            env.append(self.worst[sel].max())
        return np.array(starts), np.array(env)

    def envelope_slope(self, t0: float = 1.0) -> float:
        """Least-squares slope of log envelope against log window midpoint."""
        starts, env = self.dyadic_envelope(t0)
        mids = starts * 1.5
        return float(np.polyfit(np.log(mids), np.log(env), 1)[0])

    def at(self, t: float) -> float:
        i = int(np.argmin(np.abs(self.times - t)))
        return float(self.worst[i])


def convergence_profile(q0, grid: GridSpec, z_probes, t_grid, m: float = 1.0) -> ConvergenceProfile:
    """Tabulate |q_t(z) - q_inf(z)| over probes and times (deterministic).

    Uses the cos(2wt)/sin(2wt) split of q_t: only three position-space
    matrices per probe are needed, after which every time is a cheap
    combination.  No wraparound correction is attempted; keep
    ``2 t + |z| + range(q0) < L``.
    """
    table = symbol_table(q0, grid, half=False)
    kv = grid.wavevectors(half=False)
    probes = np.atleast_2d(np.asarray(z_probes, dtype=float))
    idx = _offset_indices(grid, probes)
    times = np.asarray(t_grid, dtype=float)
    w = dispersion(kv, m)

    # oscillating part: q_t - q_inf = cos(2wt) A + sin(2wt) B with
    # A = q0/2 - P q0 PT / (2 w^2), B = -(q0 PT + P q0) / (2 w)
    A = np.empty_like(table)
    B = np.empty_like(table)
    for i in range(grid.n):
        P = symbol_P(kv[i], m)
        PT = np.swapaxes(symbol_P(-kv[i], m), -1, -2)
        q = table[i]
        wi = w[i][..., None, None]
        A[i] = 0.5 * q - (P @ q @ PT) / (2 * wi**2)
        B[i] = -(q @ PT + P @ q) / (2 * wi)

    # q(z) at a probe is a direct sum over modes with phase exp(-ik.z); all
    # times at once as one matrix product per probe
    pos = idx * grid.h
    K = grid.size
    A = A.reshape(K, 64)
    B = B.reshape(K, 64)
    wt = 2 * np.outer(times, w.ravel())
    cos_t, sin_t = np.cos(wt), np.sin(wt)
    del wt
    # phases must match the FFT, whose Nyquist index carries (-1)^j
    kflat = grid.sample_wavevectors(half=False).reshape(K, 3)
    scale = 1.0 / (grid.size * grid.cell_volume)
    dev = np.zeros((len(times), len(probes)))
    for p, z in enumerate(pos):
        ph = np.exp(-1j * (kflat @ z))
        val = (cos_t * ph) @ A + (sin_t * ph) @ B
        dev[:, p] = np.abs(val.real * scale).max(axis=1)
    qinf = q_position(equilibrium_table(table, grid, m), grid, probes)
    return ConvergenceProfile(times, probes, dev, float(np.abs(qinf).max()))


def quadratic_form(phi, q_hat, grid: GridSpec | None = None) -> float:
    """Q(phi, phi) = (2 pi)^-3 int R phi_hat^dagger q_hat R phi_hat dk on the grid.

    ``q_hat`` may be a CovarianceSymbol, a callable of k, or a full-grid table.
    """
    if isinstance(phi, TestFunction):
        phi = phi.field
    if isinstance(phi, RealField8):
        grid = phi.grid
        data = phi.data
    else:
        data = np.asarray(phi)
    F = sfft.ifftn(data, axes=(1, 2, 3), norm="forward")
    total = 0.0
    if isinstance(q_hat, CovarianceSymbol) and q_hat.separable is not None and q_hat.grid_func is None:
        g, D = q_hat.separable
        gk = g(grid.sample_wavevectors(half=False))
        total = np.einsum("xyz,axyz,ab,bxyz->", gk, np.conj(F), D, F)
    else:
        table = symbol_table(q_hat, grid, half=False)
        for i in range(grid.n):
            total += np.einsum("ayz,yzab,byz->", np.conj(F[:, i]), table[i], F[:, i])
    return float((total * grid.cell_volume / grid.size).real)


def write_covariance_csv(path, offsets, tables, times) -> None:
    """Rows (t, z1, z2, z3, q11..q88) for each time and offset.

    ``tables[i]`` holds the (len(offsets), 8, 8) matrices at ``times[i]``.
    """
    header = ["t", "z1", "z2", "z3"] + [f"q{a + 1}{b + 1}" for a in range(8) for b in range(8)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, tab in zip(times, tables):
            for z, q in zip(np.atleast_2d(offsets), tab):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in z] + [repr(float(v)) for v in np.ravel(q)])

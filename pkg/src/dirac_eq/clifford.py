"""Dirac matrices, the real 8x8 representation and the per-mode propagator symbols.

Fourier convention: ``F f(k) = int exp(+i k.x) f(x) dx``, so a derivative
``d/dx_j`` has the symbol ``-i k_j``.  Every function below that takes a wave
vector accepts an array of shape ``(..., 3)`` and returns matrices of shape
``(..., 8, 8)`` (or ``(..., 4, 4)`` for the spinor form).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DiracMatrices",
    "RealSymbols",
    "build_dirac_matrices",
    "build_real_symbols",
    "dispersion",
    "symbol_P",
    "propagator_symbol",
    "adjoint_propagator_symbol",
    "spinor_propagator_symbol",
    "PAULI",
    "LAMBDA",
    "LAMBDA0",
]


@dataclass(frozen=True)
class DiracMatrices:
    """Standard (Dirac) representation, complex 4x4."""

    alpha1: np.ndarray
    alpha2: np.ndarray
    alpha3: np.ndarray
    beta: np.ndarray

    @property
    def alpha(self) -> np.ndarray:
        return np.stack([self.alpha1, self.alpha2, self.alpha3])


@dataclass(frozen=True)
class RealSymbols:
    """Real 8x8 matrices acting on ``(Re psi, Im psi)``.

    ``Lambda1..3`` are symmetric, ``Lambda0`` is antisymmetric.
    """

    Lambda1: np.ndarray
    Lambda2: np.ndarray
    Lambda3: np.ndarray
    Lambda0: np.ndarray
    m: float

    @property
    def Lambda(self) -> np.ndarray:
        return np.stack([self.Lambda1, self.Lambda2, self.Lambda3])


def _pauli() -> np.ndarray:
    s1 = np.array([[0, 1], [1, 0]], dtype=complex)
    s2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
    s3 = np.array([[1, 0], [0, -1]], dtype=complex)
    return np.stack([s1, s2, s3])


PAULI = _pauli()


def build_dirac_matrices() -> DiracMatrices:
    z2 = np.zeros((2, 2), dtype=complex)
    i2 = np.eye(2, dtype=complex)
    beta = np.block([[i2, z2], [z2, -i2]])
    alphas = [np.block([[z2, s], [s, z2]]) for s in PAULI]
    return DiracMatrices(alphas[0], alphas[1], alphas[2], beta)


def build_real_symbols(m: float = 1.0) -> RealSymbols:
    """Assemble the 8x8 blocks from the Dirac matrices.

    Raises
    ------
    ValueError
        If ``m`` is not strictly positive.
    """
    if not m > 0:
        raise ValueError(f"mass must be positive, got {m!r}")
    d = build_dirac_matrices()
    z4 = np.zeros((4, 4))

    def real(a):
        if np.abs(a.imag).max() > 0:
            raise AssertionError("block expected to be real")
        return a.real

    a1 = real(d.alpha1)
    a3 = real(d.alpha3)
    ia2 = real(1j * d.alpha2)
    b = real(d.beta)
    lam1 = np.block([[a1, z4], [z4, a1]])
    lam2 = np.block([[z4, ia2], [-ia2, z4]])
    lam3 = np.block([[a3, z4], [z4, a3]])
    lam0 = np.block([[z4, -b], [b, z4]])
    return RealSymbols(lam1, lam2, lam3, lam0, float(m))


_RS = build_real_symbols(1.0)
LAMBDA = _RS.Lambda
LAMBDA0 = _RS.Lambda0
_DM = build_dirac_matrices()
_ALPHA = _DM.alpha
_BETA = _DM.beta


def dispersion(k, m: float = 1.0) -> np.ndarray:
    """omega(k) = sqrt(|k|^2 + m^2)."""
    k = np.asarray(k, dtype=float)
    return np.sqrt(np.sum(k * k, axis=-1) + m * m)


def symbol_P(k, m: float = 1.0) -> np.ndarray:
    """P(-ik) = -i Lambda.k + m Lambda0, the symbol of P(nabla)."""
    k = np.asarray(k, dtype=float)
    lam_k = np.tensordot(k, LAMBDA, axes=([-1], [0]))
    return -1j * lam_k + m * LAMBDA0


def _trig(k, t, m):
    w = dispersion(k, m)[..., None, None]
    return np.cos(w * t), np.sin(w * t) / w


def propagator_symbol(k, t: float, m: float = 1.0) -> np.ndarray:
    """G_t(k) = cos(omega t) - P(-ik) sin(omega t) / omega.

    Unitary for real ``k`` and ``t``; solves ``dG/dt = -P(-ik) G`` with
    ``G_0 = I``.
    """
    c, s = _trig(k, t, m)
    return c * np.eye(8) - s * symbol_P(k, m)


def adjoint_propagator_symbol(k, t: float, m: float = 1.0) -> np.ndarray:
    """Symbol of the dual group acting on test functions.

    Equal to ``propagator_symbol(k, t).conj().T`` and to
    ``propagator_symbol(-k, t).T``; generated by ``+P(-ik)``.
    """
    c, s = _trig(k, t, m)
    return c * np.eye(8) + s * symbol_P(k, m)


def spinor_propagator_symbol(k, t: float, m: float = 1.0) -> np.ndarray:
    """Complex 4x4 form: cos(omega t) - (alpha.(-ik) + i beta m) sin(omega t)/omega."""
    k = np.asarray(k, dtype=float)
    w = dispersion(k, m)[..., None, None]
    gen = np.tensordot(-1j * k, _ALPHA, axes=([-1], [0])) + 1j * m * _BETA
    return np.cos(w * t) * np.eye(4) - gen * (np.sin(w * t) / w)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirac_eq.clifford import (
    LAMBDA,
    LAMBDA0,
    adjoint_propagator_symbol,
    build_dirac_matrices,
    build_real_symbols,
    dispersion,
    propagator_symbol,
    spinor_propagator_symbol,
    symbol_P,
)

coord = st.floats(-50, 50, allow_nan=False)
kvec = st.tuples(coord, coord, coord).map(np.array)
times = st.floats(-100, 100, allow_nan=False)


def test_pauli_and_beta_entries():
    d = build_dirac_matrices()
    s1 = d.alpha1[2:, :2]
    assert np.array_equal(s1, [[0, 1], [1, 0]])
    assert np.array_equal(np.diag(d.beta).real, [1, 1, -1, -1])
    assert np.array_equal(d.alpha1 @ d.alpha1, np.eye(4))


def test_dirac_anticommutators():
    d = build_dirac_matrices()
    for i, a in enumerate(d.alpha):
        assert np.array_equal(a, a.conj().T)
        assert np.abs(a @ d.beta + d.beta @ a).max() == 0
        for j, b in enumerate(d.alpha):
            assert np.abs(a @ b + b @ a - 2 * (i == j) * np.eye(4)).max() <= 1e-14
    assert np.array_equal(d.beta @ d.beta, np.eye(4))


def test_real_symbols_structure():
    r = build_real_symbols(2.0)
    d = build_dirac_matrices()
    assert np.array_equal(r.Lambda1[:4, :4], d.alpha1.real)
    assert np.array_equal(r.Lambda1[4:, 4:], d.alpha1.real)
    assert np.array_equal(r.Lambda0.T, -r.Lambda0)
    for lam in r.Lambda:
        assert np.array_equal(lam, lam.T)
        assert set(np.unique(lam)) <= {-1.0, 0.0, 1.0}
        assert np.abs(lam @ r.Lambda0 + r.Lambda0 @ lam).max() == 0
    assert np.array_equal(r.Lambda0 @ r.Lambda0, -np.eye(8))
    k = np.array([1.0, 2.0, 3.0])
    lk = np.tensordot(k, r.Lambda, axes=1)
    assert np.abs(lk @ lk - 14 * np.eye(8)).max() <= 1e-13


@pytest.mark.parametrize("m", [0.0, -1.0])
def test_nonpositive_mass_rejected(m):
    with pytest.raises(ValueError):
        build_real_symbols(m)


def test_dispersion_examples():
    assert dispersion(np.zeros(3), 1.5) == 1.5
    assert dispersion(np.array([3.0, 0, 0]), 4.0) == 5.0
    k = np.array([0.3, -1.2, 2.0])
    assert dispersion(k) == dispersion(-k)


def test_symbol_P_examples():
    m = 1.7
    P0 = symbol_P(np.zeros(3), m)
    assert np.allclose(P0, m * LAMBDA0)
    assert np.abs(P0 @ P0 + m**2 * np.eye(8)).max() <= 1e-14
    k = np.array([1.0, -1.0, 2.0])
    PT = symbol_P(-k, m).T
    assert np.abs(symbol_P(k, m) @ PT - (6 + m * m) * np.eye(8)).max() <= 1e-12
    # P^T(ik) = -P(-ik)
    assert np.abs(PT + symbol_P(k, m)).max() == 0


@settings(max_examples=50, deadline=None)
@given(kvec)
def test_P_skew_hermitian_and_square(k):
    P = symbol_P(k)
    w2 = dispersion(k) ** 2
    assert np.abs(P.conj().T + P).max() == 0
    assert np.abs(P @ P + w2 * np.eye(8)).max() <= 1e-12 * w2


def test_propagator_examples():
    k = np.array([0.5, 1.0, -2.0])
    assert np.array_equal(propagator_symbol(k, 0.0), np.eye(8))
    m = 2.0
    G = propagator_symbol(np.zeros(3), np.pi / (2 * m), m)
    assert np.abs(G + LAMBDA0).max() <= 1e-15
    G = propagator_symbol(k, 3.7)
    assert np.abs(G @ G.conj().T - np.eye(8)).max() <= 1e-12


@settings(max_examples=50, deadline=None)
@given(kvec, times, times)
def test_unitarity_and_group_law(k, t, s):
    G = propagator_symbol(k, t)
    assert np.abs(G @ G.conj().T - np.eye(8)).max() <= 1e-12
    assert np.abs(propagator_symbol(k, t + s) - G @ propagator_symbol(k, s)).max() <= 1e-11


def test_propagator_solves_generator_ode():
    k = np.array([0.4, -0.3, 1.1])
    t, dt = 2.3, 1e-5
    dG = (propagator_symbol(k, t + dt) - propagator_symbol(k, t - dt)) / (2 * dt)
    assert np.abs(dG + symbol_P(k) @ propagator_symbol(k, t)).max() <= 1e-8


def test_adjoint_symbol(rng):
    k = rng.standard_normal(3)
    t = 1.9
    Ga = adjoint_propagator_symbol(k, t)
    assert np.array_equal(adjoint_propagator_symbol(k, 0.0), np.eye(8))
    assert np.abs(Ga - propagator_symbol(-k, t).T).max() <= 1e-15
    assert np.abs(Ga - propagator_symbol(k, t).conj().T).max() <= 1e-15
    psi = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    phi = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    lhs = np.vdot(phi, propagator_symbol(k, t) @ psi)
    rhs = np.vdot(Ga @ phi, psi)
    assert abs(lhs - rhs) <= 1e-13
    e = np.array([1.0, 0, 0])
    assert np.abs(adjoint_propagator_symbol(e, 3.5)
                  - adjoint_propagator_symbol(e, 1.0) @ adjoint_propagator_symbol(e, 2.5)).max() <= 1e-13


def test_spinor_symbol_unitary_with_rest_frame_phases(rng):
    k = rng.standard_normal(3)
    t = 0.77
    G4 = spinor_propagator_symbol(k, t)
    assert np.abs(G4 @ G4.conj().T - np.eye(4)).max() <= 1e-13
    # at k = 0 the generator is -i beta m
    G40 = spinor_propagator_symbol(np.zeros(3), t)
    assert np.allclose(G40, np.diag(np.exp(-1j * t * np.array([1, 1, -1, -1]))))


def test_vectorised_shapes():
    k = np.zeros((4, 5, 3))
    assert symbol_P(k).shape == (4, 5, 8, 8)
    assert propagator_symbol(k, 1.0).shape == (4, 5, 8, 8)
    assert LAMBDA.shape == (3, 8, 8)

import numpy as np
import pytest

from dirac_eq.covariance import (
    convergence_profile,
    equilibrium_table,
    fixed_point_residual,
    propagate_table,
    q_hat_inf,
    q_hat_t,
    q_hat_t_expanded,
    q_inf_yukawa,
    q_position,
    quadratic_form,
    symbol_table,
    time_average,
    time_average_error,
    write_covariance_csv,
)
from dirac_eq.grid import GridSpec, RealField8, gaussian_bump, smooth_bump
from dirac_eq.measures import gaussian_symbol

POL = gaussian_symbol(1.0, 0.5)


@pytest.fixture
def ks():
    return np.random.default_rng(3).uniform(-4, 4, (200, 3))


def test_q_hat_t_forms_agree(ks):
    for t in (0.0, 0.4, 3.3, 27.0):
        a = q_hat_t(ks, t, POL)
        b = q_hat_t_expanded(ks, t, POL)
        assert np.abs(a - b).max() < 1e-12
        assert np.allclose(np.trace(a, axis1=-2, axis2=-1), np.trace(POL(ks), axis1=-2, axis2=-1))
    assert np.allclose(q_hat_t(ks, 0.0, POL), POL(ks))


def test_equilibrium_of_identity_and_zero(ks):
    eye = np.broadcast_to(np.eye(8), ks.shape[:-1] + (8, 8))
    assert np.abs(q_hat_inf(ks, eye) - eye).max() < 1e-13
    assert np.array_equal(q_hat_inf(ks, np.zeros((8, 8))), np.zeros(ks.shape[:-1] + (8, 8)))
    # identity-type symbols are invariant under the flow
    assert np.abs(q_hat_t(ks, 5.0, eye) - eye).max() < 1e-13


def test_equilibrium_is_invariant(ks):
    qi = q_hat_inf(ks, POL)
    for t in (1.0, 10.0, 100.0):
        assert np.abs(q_hat_t(ks, t, qi) - qi).max() < 1e-12
    assert np.abs(q_hat_inf(ks, POL) - POL(ks)).max() > 0.05


def test_fixed_point_on_grid(grid16):
    table = equilibrium_table(symbol_table(POL, grid16), grid16)
    for t in (1.0, 10.0, 100.0):
        assert fixed_point_residual(table, grid16, t) < 1e-11


def test_time_average_approaches_equilibrium(ks):
    k = ks[:5]
    Ts = [4.0, 8.0, 16.0, 32.0]
    errs = [np.abs(time_average(k, T, POL) - q_hat_inf(k, POL)).max() for T in Ts]
    assert errs[-1] < errs[0]
    rms = time_average_error(POL, Ts, n_k=300, seed=1)
    ratios = rms[:-1] / rms[1:]
    assert np.all((ratios > 1.6) & (ratios < 2.4))


def test_time_average_quadrature_is_converged():
    k = np.array([[0.5, 1.0, -2.0]])
    a = time_average(k, 10.0, POL)
    b = time_average(k, 10.0, POL, panels=40, order=12)
    assert np.abs(a - b).max() < 1e-12


def test_yukawa_cross_check():
    g = GridSpec(64, 16.0)
    probes = [[0, 0, 0], [0.25, 0, 0], [0.5, 0.5, 0], [1.0, 0, 0.5], [2.0, 1.0, 0]]
    qi = q_position(equilibrium_table(symbol_table(POL, g), g), g, probes)
    qy = q_inf_yukawa(POL, g, probes)
    assert np.abs(qy - qi).max() / np.abs(qi).max() < 0.01
    omit = q_inf_yukawa(POL, g, probes, center="omit")
    assert np.abs(omit - qi).max() > np.abs(qy - qi).max()


def test_q_position_symmetry(grid16):
    z = [[1.0, 2.0, 0.0], [-1.0, -2.0, 0.0]]
    q = q_position(propagate_table(symbol_table(POL, grid16), grid16, 2.5), grid16, z)
    assert np.allclose(q[0], q[1].T, atol=1e-13)
    with pytest.raises(ValueError):
        q_position(POL, grid16, [[0.3, 0, 0]])


def test_quadratic_form_brute_force():
    g = GridSpec(8, 8.0)
    rng = np.random.default_rng(7)
    phi = RealField8(g, rng.standard_normal((8,) + g.shape))
    pos = g.positions().reshape(3, -1).T
    diff = (pos[:, None, :] - pos[None, :, :]).reshape(-1, 3)
    table = symbol_table(POL, g)
    uniq, inv = np.unique(np.mod(np.rint(diff / g.h), g.n).astype(int), axis=0, return_inverse=True)
    qz = q_position(table, g, uniq * g.h)[inv.ravel()].reshape(g.size, g.size, 8, 8)
    f = phi.data.reshape(8, -1).T
    brute = g.cell_volume**2 * np.einsum("xa,xyab,yb->", f, qz, f)
    fast = quadratic_form(phi, POL)
    assert abs(fast - brute) < 1e-8 * abs(brute)
    assert abs(quadratic_form(phi, table) - fast) < 1e-10 * abs(fast)


def test_quadratic_form_parseval(grid16):
    phi = smooth_bump(grid16, 3.0).field
    eye = lambda k: np.broadcast_to(np.eye(8), k.shape[:-1] + (8, 8))
    # unit symbol is the delta covariance scaled by 1: Q = ||phi||^2
    assert abs(quadratic_form(phi, eye) - grid16.cell_volume * np.sum(phi.data**2)) < 1e-10


def test_convergence_profile(grid32):
    eq = lambda k: np.exp(-0.5 * np.sum(k * k, axis=-1))[..., None, None] * np.eye(8)
    probes = [[0, 0, 0], [1, 0, 0]]
    times = np.arange(1.0, 9.0, 0.5)
    flat = convergence_profile(eq, grid32, probes, times)
    assert flat.worst.max() < 1e-14
    prof = convergence_profile(POL, grid32, probes, times)
    assert prof.worst[0] > 10 * prof.worst[-1]
    starts, env = prof.dyadic_envelope()
    assert np.all(np.diff(env) < 0)
    # direct propagation agrees with the split used by the profile
    t = times[5]
    table = symbol_table(POL, grid32)
    direct = q_position(propagate_table(table, grid32, t), grid32, probes) - q_position(
        equilibrium_table(table, grid32), grid32, probes)
    assert abs(np.abs(direct).max(axis=(1, 2)).max() - prof.deviation[5].max()) < 1e-12


def test_covariance_csv(tmp_path, grid16):
    offsets = [[0, 0, 0], [1, 0, 0]]
    tabs = [q_position(POL, grid16, offsets)] * 2
    p = tmp_path / "cov.csv"
    write_covariance_csv(p, offsets, tabs, [0.0, float("inf")])
    lines = p.read_text().splitlines()
    assert lines[0].startswith("t,z1,z2,z3,q11,q12")
    assert len(lines) == 5 and lines[-1].startswith("inf,1.0,0.0,0.0,")
    assert len(lines[1].split(",")) == 4 + 64

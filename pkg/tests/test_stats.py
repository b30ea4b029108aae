import math

import numpy as np
import pytest

from dirac_eq.covariance import quadratic_form
from dirac_eq.grid import GridSpec, RealField8, gaussian_bump, pointwise_norm, smooth_bump
from dirac_eq.measures import CovarianceSymbol, GaussianSampler, SamplerSpec, make_sampler
from dirac_eq.stats import (
    BudgetError,
    RoomCorridorLayout,
    char_functional,
    cumulant_report,
    decay_probe,
    exact_excess_kurtosis,
    room_corridor_decompose,
    run_ensemble,
    variance_scaling_report,
)

G32 = GridSpec(32, 32.0)


@pytest.fixture(scope="module")
def gauss_ens():
    s = make_sampler(SamplerSpec("gaussian_spectral", G32, 8, {"kappa": 1.0, "polarization": 0.5}))
    phi = smooth_bump(G32, 2.0)
    return run_ensemble(s, [0.0, 2.0, 4.0], [phi], M=400, spot_checks=3), s, phi


@pytest.fixture(scope="module")
def ma_ens():
    s = make_sampler(SamplerSpec("moving_average", G32, 9, {"kernel_radius": 1.5, "polarization": 0.5}))
    phi = smooth_bump(G32, 1.5)
    return run_ensemble(s, [0.0, 6.0], [phi], M=2000, spot_checks=2), s, phi


def test_single_sample_of_zero_measure(grid16):
    zero = CovarianceSymbol(lambda k: np.zeros(k.shape[:-1] + (8, 8)), 0.0, 0.0, "zero")
    s = GaussianSampler(SamplerSpec("gaussian_spectral", grid16), zero)
    res = run_ensemble(s, [0.0, 1.0], [smooth_bump(grid16, 2.0)], M=1)
    assert res.M == 1 and np.all(res.projections == 0)
    with pytest.warns(RuntimeWarning):
        rep = cumulant_report(res, 1.0)
    assert rep.mean == 0.0 and math.isnan(rep.skewness) and math.isnan(rep.variance)
    rows = char_functional(res, 0.0, lambdas=(0.0, 1.0))
    assert rows[0].estimate == 1 and rows[1].estimate == 1


def test_spot_check_and_exact_variance(gauss_ens):
    res, s, phi = gauss_ens
    assert res.spot_check_error < 1e-10
    assert abs(res.q_t[0, 0] - quadratic_form(phi, s.exact_covariance())) < 1e-10 * res.q_t[0, 0]
    for t in res.times:
        x = res.values(t)
        q = res.q_t[res._index(t, 0)]
        assert abs(np.var(x) - q) < 5 * q * math.sqrt(2 / res.M)


def test_gaussian_sampler_cumulants(gauss_ens):
    res, _, _ = gauss_ens
    for t in res.times:
        rep = cumulant_report(res, t, warn=False)
        assert abs(rep.mean / rep.mean_se) < 4
        assert abs(rep.skewness_z) < 4 and abs(rep.kurtosis_z) < 4
        assert res.exact_excess_kurtosis(t) == 0.0


def test_char_functional_rows(gauss_ens):
    res, _, _ = gauss_ens
    rows = char_functional(res, 4.0, lambdas=(0.0, 0.5, 1.0))
    assert rows[0].estimate == 1 and rows[0].se == 0
    for r in rows[1:]:
        assert r.se > 0
        assert abs(r.estimate - r.gaussian_t) < 4 * r.se + 1e-12
        assert abs(r.gaussian_t - r.gaussian_inf) <= r.bias + 1e-15


def test_moving_average_kurtosis(ma_ens):
    res, s, phi = ma_ens
    k0 = res.exact_excess_kurtosis(0.0)
    assert k0 < -0.05
    assert abs(k0 - exact_excess_kurtosis(s.projection_weights(phi.field), -2.0)) < 1e-12
    assert abs(res.exact_excess_kurtosis(6.0)) < abs(k0)
    rep = cumulant_report(res, 0.0)
    assert abs(rep.excess_kurtosis - k0) < 4 * rep.kurtosis_se
    assert np.allclose(np.abs(res.values(0.0)) > 0, True)


def test_budget_and_csv(tmp_path, ma_ens, grid16):
    res, s, phi = ma_ens
    with pytest.raises(BudgetError, match="L/2"):
        run_ensemble(s, [20.0], [phi], M=2)
    p = tmp_path / "proj.csv"
    res.write_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "sample_id,t,phi_id,value"
    assert len(lines) == 1 + res.M * 2
    rows = res.summary()
    assert len(rows) == 2 and {"q_t", "q_inf", "exact_excess_kurtosis"} <= rows[0].keys()


def test_layout_geometry():
    g = GridSpec(64, 64.0)
    single = RoomCorridorLayout.for_time(0.5, g)
    assert single.N == 0 and single.rho_cells == 0 and single.partition_residual() == 0
    lay = RoomCorridorLayout.for_time(16.0, g, delta=0.5, r_bar=1.5)
    assert lay.d == round(16 / math.log(16)) * g.h and lay.rho == 4.0
    assert lay.partition_residual() == 0
    kind, j = lay.labels()
    assert set(np.unique(kind)) == {0, 1}
    assert lay.N * lay.period + lay.d / 2 >= 16 + 1.5
    with pytest.raises(ValueError):
        RoomCorridorLayout.for_time(4.0, g, delta=1.2)


def test_decomposition_identity():
    g = GridSpec(64, 64.0)
    psi0 = make_sampler(SamplerSpec("moving_average", g, 1)).sample(0)
    phi = gaussian_bump(g, 2.0, cutoff=1e-10)
    for t in (0.5, 4.0, 8.0):
        dec = room_corridor_decompose(psi0, phi, t, delta=0.5)
        assert dec.relative_error < 1e-10
        assert dec.out_of_cone < 1e-6 * max(abs(dec.direct), 1.0)


def test_variance_scaling_small():
    s = make_sampler(SamplerSpec("moving_average", G32, 4))
    phi = smooth_bump(G32, 1.5)
    with pytest.warns(RuntimeWarning):
        rep = variance_scaling_report(s, phi, [3.0, 6.0], delta=0.9, M=200)
    for r in rep.rows:
        assert abs(r["room_var"] - r["room_var_exact"]) < 5 * r["room_var_se"]
        assert r["corridor_var_exact"] <= r["room_var_exact"]
    assert rep.column("t").tolist() == [3.0, 6.0]
    assert rep.room_constant_spread >= 1.0


def test_decay_probe():
    phi = gaussian_bump(G32, 1.5, cutoff=1e-8)
    rep = decay_probe(phi, [0.0, 2.0, 4.0, 5.0, 6.0], fit_from=2.0)
    assert rep.sup[0] == pointwise_norm(phi.field).max()
    assert np.all(np.diff(rep.sup) < 0)
    assert rep.exponent < -0.5
    assert np.isnan(rep.residuals[0]) and np.all(np.isfinite(rep.residuals[1:]))
    with pytest.raises(BudgetError):
        decay_probe(phi, [20.0])

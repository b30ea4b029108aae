"""The five experiment families run by the command line tool.

Each runner takes a validated :class:`ExperimentConfig` and returns an
:class:`ExperimentResult` holding pass/fail checks, columnar tables and a
JSON-ready summary.  Nothing here depends on wall-clock time, so reruns with
the same configuration reproduce every number.
"""

from __future__ import annotations

import math

import numpy as np

from . import clifford as cl
from .config import ExperimentConfig
from .covariance import (
    convergence_profile,
    equilibrium_table,
    fixed_point_residual,
    propagate_table,
    q_hat_inf,
    q_inf_yukawa,
    q_position,
    symbol_table,
    time_average_error,
)
from .grid import RealField8, charge, complexify, inner
from .measures import make_sampler
from .propagator import (
    adjoint_evolve,
    evolve,
    evolve_spinor_direct,
    local_estimate_check,
    support_radius,
)
from .report import ExperimentResult, Table
from .stats import (
    char_functional,
    cumulant_report,
    decay_probe,
    room_corridor_decompose,
    run_ensemble,
    variance_scaling_report,
)

__all__ = ["run_experiment", "algebra_residuals", "symbol_residuals", "RUNNERS"]


# -- algebra -----------------------------------------------------------------------

def algebra_residuals(m: float = 1.0) -> dict[str, float]:
    """Max entry errors of the Dirac and Lambda anticommutation relations."""
    d = cl.build_dirac_matrices()
    r = cl.build_real_symbols(m)
    I4, I8 = np.eye(4), np.eye(8)
    a = d.alpha
    dirac = 0.0
    for i in range(3):
        dirac = max(dirac, np.abs(a[i] - a[i].conj().T).max())
        dirac = max(dirac, np.abs(a[i] @ d.beta + d.beta @ a[i]).max())
        for j in range(3):
            dirac = max(dirac, np.abs(a[i] @ a[j] + a[j] @ a[i] - 2 * (i == j) * I4).max())
    dirac = max(dirac, np.abs(d.beta @ d.beta - I4).max(), np.abs(d.beta - d.beta.conj().T).max())
    lam = r.Lambda
    L0 = r.Lambda0
    real = np.abs(L0.T + L0).max()
    for i in range(3):
        real = max(real, np.abs(lam[i] - lam[i].T).max(), np.abs(lam[i] @ L0 + L0 @ lam[i]).max())
        for j in range(3):
            real = max(real, np.abs(lam[i] @ lam[j] + lam[j] @ lam[i] - 2 * (i == j) * I8).max())
    real = max(real, np.abs(L0 @ L0 + I8).max())
    return {"dirac": float(dirac), "lambda": float(real)}


def symbol_residuals(m: float = 1.0, count: int = 1000, seed: int = 0, k_scale: float = 10.0) -> dict[str, float]:
    """Relative errors of P^2 = -omega^2 I and P(-ik) P^T(ik) = omega^2 I, and
    unitarity/group-law errors of G_t, over random k."""
    rng = np.random.default_rng(seed)
    k = rng.uniform(-k_scale, k_scale, (count, 3))
    w2 = (cl.dispersion(k, m) ** 2)[:, None, None]
    P = cl.symbol_P(k, m)
    PT = np.swapaxes(cl.symbol_P(-k, m), -1, -2)
    I8 = np.eye(8)
    sq = np.abs(P @ P + w2 * I8).max(axis=(1, 2)) / w2[:, 0, 0]
    pp = np.abs(P @ PT - w2 * I8).max(axis=(1, 2)) / w2[:, 0, 0]
    t = rng.uniform(-100, 100, count)
    s = rng.uniform(-100, 100, count)
    # per-mode times broadcast against the (count, 1, 1) trig factors
    G = cl.propagator_symbol(k, t[:, None, None], m)
    Gs = cl.propagator_symbol(k, s[:, None, None], m)
    Gts = cl.propagator_symbol(k, (t + s)[:, None, None], m)
    unit = np.abs(G @ np.conj(np.swapaxes(G, -1, -2)) - I8).max()
    group = np.abs(G @ Gs - Gts).max()
    return {"P_squared": float(sq.max()), "P_PT": float(pp.max()), "unitarity": float(unit),
            "group_law": float(group)}


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


# -- verify ------------------------------------------------------------------------------

def run_verify(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult("verify")
    m = cfg.m
    tol = lambda k: cfg.get("checks", k)  # noqa: E731
    alg = algebra_residuals(m)
    res.check("dirac_relations", alg["dirac"] <= tol("algebra_tol"), alg["dirac"], f"<= {tol('algebra_tol')}")
    res.check("lambda_relations", alg["lambda"] <= tol("algebra_tol"), alg["lambda"], f"<= {tol('algebra_tol')}")
    sym = symbol_residuals(m, seed=cfg.seed)
    for key in ("P_squared", "P_PT", "unitarity"):
        res.check(f"symbol_{key}", sym[key] <= tol("symbol_tol"), sym[key], f"<= {tol('symbol_tol')}")
    res.check("symbol_group_law", sym["group_law"] <= tol("group_tol"), sym["group_law"], f"<= {tol('group_tol')}")

    grid = cfg.grid
    rng = np.random.default_rng(cfg.seed)
    psi0 = RealField8(grid, rng.standard_normal((8,) + grid.shape))
    rt = tol("relative_tol")
    t1, t2 = 17.3, -5.1
    u1 = evolve(psi0, t1, m)
    q0 = charge(psi0)
    err = abs(charge(u1) - q0) / q0
    res.check("charge_conservation", err <= rt, err, f"<= {rt}", f"t = {t1}")
    err = _rel(evolve(u1, t2, m).data, evolve(psi0, t1 + t2, m).data)
    res.check("group_law", err <= rt, err, f"<= {rt}")
    err = _rel(evolve(u1, -t1, m).data, psi0.data)
    res.check("time_reversal", err <= rt, err, f"<= {rt}")
    spinor = complexify(psi0)
    err = _rel(evolve(spinor, t1, m).data, evolve_spinor_direct(spinor, t1, m).data)
    res.check("spinor_path", err <= tol("symbol_tol"), err, f"<= {tol('symbol_tol')}")
    phi = cfg.test_function()
    lhs = inner(u1, phi)
    rhs = inner(psi0, adjoint_evolve(phi.field, t1, m))  # spectral identity, no budget
    err = abs(lhs - rhs) / max(abs(lhs), 1e-300)
    res.check("duality", err <= rt, err, f"<= {rt}")

    floor = tol("amplitude_floor")
    cone = Table(["t", "support_radius", "bound"])
    r0 = support_radius(phi, floor)
    worst = -math.inf
    for t in cfg.get("experiment", "times"):
        r = support_radius(evolve(phi.field, t, m), floor)
        bound = abs(t) + r0 + grid.h * math.sqrt(3)
        cone.add(t, r, bound)
        worst = max(worst, r - bound)
    res.check("finite_speed", worst <= 0, worst, "<= 0", f"radius minus (t + r0 + h sqrt 3), floor {floor}")
    res.tables["cone"] = cone

    local = Table(["t", "R", "seminorm_t", "seminorm_0", "ratio"])
    for R in cfg.get("experiment", "seminorm_radii"):
        for t in (0.0,) + tuple(cfg.get("experiment", "times")):
            if R + abs(t) < grid.L / 2:
                rep = local_estimate_check(psi0, t, R, m)
                local.add(t, R, rep.seminorm_t, rep.seminorm_0, rep.ratio)
    res.tables["local_estimates"] = local
    if local.rows:
        ratios = np.array([r[4] for r in local.rows])
        at0 = max(r[4] for r in local.rows if r[0] == 0.0)
        res.check("local_estimate_t0", at0 <= 1.0, at0, "<= 1")
        res.summary["local_estimate_max_ratio"] = float(ratios.max())
    # compact data with R covering the cone: the ratio is the charge ratio, 1
    fit = [t for t in cfg.get("experiment", "times") if phi.radius + 2 * abs(t) < grid.L / 2]
    if fit:
        tc = max(fit, key=abs)
        R = phi.radius + abs(tc)
        rep = local_estimate_check(phi.field, tc, R, m)
        err = abs(rep.ratio - 1)
        res.check("local_estimate_compact", err <= rt, err, f"|ratio - 1| <= {rt}", f"R = {R:.3f}, t = {tc}")
    res.summary.update({"algebra": alg, "symbols": sym})
    res.fields["psi0"] = psi0
    res.fields[f"psi_t{t1}"] = u1
    return res


# -- covariance ----------------------------------------------------------------------------

def run_covariance(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult("covariance")
    m = cfg.m
    grid = cfg.grid
    sampler = make_sampler(cfg.sampler_spec())
    symbol = sampler.exact_covariance()
    table0 = symbol_table(symbol, grid)
    table_inf = equilibrium_table(table0, grid, m)
    ftol = cfg.get("checks", "fixed_point_tol")
    for t in (1.0, 10.0, 100.0):
        r = fixed_point_residual(table_inf, grid, t, m)
        res.check(f"fixed_point_t{t:g}", r <= ftol, r, f"<= {ftol}")
    ident = np.abs(q_hat_inf(grid.wavevectors(), np.eye(8), m) - np.eye(8)).max()
    stol = cfg.get("checks", "symbol_tol")
    res.check("identity_is_equilibrium", ident <= stol, ident, f"<= {stol}")

    if hasattr(symbol, "func"):
        Ts = (25.0, 50.0, 100.0)
        errs = time_average_error(symbol, Ts, m, n_k=2000, seed=cfg.seed)
        ta = Table(["T", "rms_error", "ratio_to_next"])
        for i, T in enumerate(Ts):
            ta.add(T, errs[i], errs[i] / errs[i + 1] if i + 1 < len(Ts) else float("nan"))
        res.tables["time_average"] = ta
        ratios = errs[:-1] / errs[1:]
        if np.all(errs > 0):
            ok = bool(np.all((ratios >= 1.6) & (ratios <= 2.4)))
            res.check("time_average_rate", ok, float(ratios.min()), "each ratio in [1.6, 2.4]",
                      "ratios " + ", ".join(f"{r:.3f}" for r in ratios))

    probes = np.array(cfg.get("experiment", "probes"))
    times = np.array(cfg.get("experiment", "times"))
    prof = convergence_profile(symbol, grid, probes, times, m)
    tab = Table(["t", "worst"] + [f"probe{p}" for p in range(len(probes))])
    for i, t in enumerate(times):
        tab.add(t, prof.worst[i], *prof.deviation[i])
    res.tables["convergence"] = tab
    starts, env = prof.dyadic_envelope()
    mono = np.concatenate([[True], np.diff(env) <= 0])
    et = Table(["window_start", "envelope", "monotone"])
    for s, e, ok in zip(starts, env, mono):
        et.add(s, e, bool(ok))
    res.tables["envelope"] = et
    if len(env):
        res.check("envelope_nonincreasing", bool(mono.all()), float(np.diff(env).max()) if len(env) > 1 else 0.0,
                  "max step <= 0")
    if len(env) >= 2:
        slope = prof.envelope_slope()
        lim = cfg.get("checks", "max_envelope_slope")
        res.check("envelope_slope", slope <= lim, slope, f"<= {lim}")
    if times.min() <= 2 <= times.max() and times.min() <= 20 <= times.max():
        factor = prof.at(2.0) / prof.at(20.0)
        lim = cfg.get("checks", "decay_factor")
        res.check("decay_t2_to_t20", factor >= lim, factor, f">= {lim}")
    if cfg.get("experiment", "yukawa_check"):
        qi = q_position(table_inf, grid, probes)
        qy = q_inf_yukawa(symbol, grid, probes, m)
        err = float(np.abs(qy - qi).max() / np.abs(qi).max())
        lim = cfg.get("checks", "yukawa_tol")
        res.check("yukawa_cross_check", err <= lim, err, f"<= {lim}")

    csv_times = cfg.get("experiment", "csv_times")
    if csv_times:
        tables = [q_position(propagate_table(table0, grid, t, m), grid, probes) for t in csv_times]
        tables.append(q_position(table_inf, grid, probes))
        cols = ["t", "z1", "z2", "z3"] + [f"q{a + 1}{b + 1}" for a in range(8) for b in range(8)]
        ct = Table(cols)
        for t, tb in zip(list(csv_times) + [math.inf], tables):
            for z, q in zip(probes, tb):
                ct.add(t, *z, *np.ravel(q))
        res.tables["covariance"] = ct
    res.summary.update({"symbol": symbol.name, "scale": prof.scale,
                        "worst_t2": prof.at(2.0), "worst_t20": prof.at(20.0)})
    return res


# -- ensemble ---------------------------------------------------------------------------------

def run_ensemble_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult("ensemble")
    m = cfg.m
    sampler = make_sampler(cfg.sampler_spec())
    phi = cfg.test_function()
    times = cfg.get("experiment", "times")
    M = cfg.get("experiment", "M")
    ens = run_ensemble(sampler, times, [phi], M, m, spot_checks=cfg.get("experiment", "spot_checks"))
    rt = cfg.get("checks", "relative_tol")
    res.check("adjoint_vs_forward", ens.spot_check_error <= rt, ens.spot_check_error, f"<= {rt}")

    k_se = cfg.get("checks", "cumulant_se")
    cum = Table(["t", "mean", "mean_se", "variance", "q_t", "q_inf", "skewness", "skewness_se",
                 "excess_kurtosis", "kurtosis_se", "exact_excess_kurtosis", "skewness_p", "kurtosis_p"])
    worst_mean = 0.0
    for t in ens.times:
        c = cumulant_report(ens, t, warn=False)
        cum.add(t, c.mean, c.mean_se, c.variance, ens.q_t[list(ens.times).index(t), 0], ens.q_inf[0],
                c.skewness, c.skewness_se, c.excess_kurtosis, c.kurtosis_se, ens.exact_excess_kurtosis(t),
                c.skewness_p, c.kurtosis_p)
        if M > 1:
            worst_mean = max(worst_mean, abs(c.mean / c.mean_se))
    res.tables["cumulants"] = cum
    lim = cfg.get("checks", "mean_se")
    res.check("zero_mean", worst_mean < lim, worst_mean, f"< {lim} SE")

    gaussian = sampler.noise_excess_kurtosis == 0
    t_last = float(max(ens.times))
    late = cumulant_report(ens, t_last, warn=False)
    res.check("late_skewness", abs(late.skewness_z) < k_se, abs(late.skewness_z), f"< {k_se} SE", f"t = {t_last}")
    res.check("late_kurtosis", abs(late.kurtosis_z) < k_se, abs(late.kurtosis_z), f"< {k_se} SE", f"t = {t_last}")
    if gaussian:
        for t in ens.times:
            c = cumulant_report(ens, t, warn=False)
            z = max(abs(c.skewness_z), abs(c.kurtosis_z))
            res.check(f"gaussian_cumulants_t{t:g}", z < k_se, z, f"< {k_se} SE")
    else:
        t_first = float(min(ens.times))
        if t_first == 0.0:
            early = cumulant_report(ens, 0.0, warn=False)
            z = max(abs(early.skewness_z), abs(early.kurtosis_z))
            lim0 = cfg.get("checks", "initial_cumulant_se")
            res.check("initial_non_gaussian", z > lim0, z, f"> {lim0} SE", "largest of |skewness|, |kurtosis| in SE")

    cf_se = cfg.get("checks", "charfun_se")
    cf = Table(["t", "lambda", "re", "im", "se", "gaussian_t", "gaussian_inf", "bias", "deviation"])
    for t in ens.times:
        for row in char_functional(ens, t, 0, cfg.get("experiment", "lambdas")):
            cf.add(t, row.lam, row.estimate.real, row.estimate.imag, row.se, row.gaussian_t,
                   row.gaussian_inf, row.bias, row.deviation)
            if gaussian:
                dev = abs(row.estimate - row.gaussian_t)
                ok = dev < cf_se * row.se + 1e-15
                res.check(f"charfun_t{t:g}_lambda{row.lam:g}", ok, dev, f"< {cf_se} SE = {cf_se * row.se:.4g}")
            elif t == t_last:
                ok = row.deviation < cf_se * row.se + row.bias
                res.check(f"charfun_lambda{row.lam:g}", ok, row.deviation,
                          f"< {cf_se} SE + bias = {cf_se * row.se + row.bias:.4g}")
    res.tables["charfun"] = cf
    if cfg.get("experiment", "write_projections"):
        res.extra_files["projections.csv"] = ens.write_csv
    res.summary.update({"M": M, "sampler": ens.spec, "ensemble": ens.summary()})
    res.fields["psi0_sample0"] = sampler.sample(0)
    return res


# -- rooms -----------------------------------------------------------------------------------

def run_rooms(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult("rooms")
    m = cfg.m
    sampler = make_sampler(cfg.sampler_spec())
    phi = cfg.test_function()
    delta = cfg.get("experiment", "delta")
    times = cfg.get("experiment", "times")
    rt = cfg.get("checks", "relative_tol")
    psi0 = sampler.sample(0)
    dec = Table(["t", "d", "rho", "N", "sum_rooms", "sum_corridors", "direct", "relative_error", "out_of_cone",
                 "partition_residual"])
    worst = 0.0
    part = 0.0
    for t in times:
        d = room_corridor_decompose(psi0, phi, t, delta, m)
        lay = d.layout
        dec.add(t, lay.d, lay.rho, lay.N, math.fsum(d.rooms.values()), math.fsum(d.corridors.values()),
                d.direct, d.relative_error, d.out_of_cone, lay.partition_residual())
        worst = max(worst, d.relative_error)
        part = max(part, lay.partition_residual())
    res.tables["decomposition"] = dec
    res.check("exact_reconstruction", worst <= rt, worst, f"<= {rt}")
    res.check("partition_of_unity", part == 0, part, "== 0")

    rep = variance_scaling_report(sampler, phi, times, delta, cfg.get("experiment", "M"), m)
    cols = list(rep.rows[0].keys())
    vt = Table(cols)
    for r in rep.rows:
        vt.add(*[r[c] for c in cols])
    res.tables["variance_scaling"] = vt
    lim = cfg.get("checks", "max_room_spread")
    res.check("room_variance_bounded", rep.room_constant_spread < lim, rep.room_constant_spread,
              f"max/min of E|r|^2 t/d_t < {lim}")
    ratios = rep.column("corridor_room_ratio")
    step = float(np.diff(ratios).max()) if len(ratios) > 1 else 0.0
    res.check("corridor_ratio_decreasing", rep.corridor_ratio_decreasing, step, "max step < 0")
    res.summary.update({"delta": delta, "M": cfg.get("experiment", "M"), "rows": rep.rows})
    res.fields["psi0_sample0"] = psi0
    return res


# -- decay -------------------------------------------------------------------------------------

def run_decay(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult("decay")
    phi = cfg.test_function()
    times = cfg.get("experiment", "times")
    target = cfg.get("checks", "target_exponent")
    etol = cfg.get("checks", "exponent_tol")
    table = Table(["m", "t", "sup", "residual", "in_fit"])
    fits = Table(["m", "exponent", "intercept", "points"])
    exps = []
    for mass in cfg.get("experiment", "masses"):
        rep = decay_probe(phi, times, mass, cfg.get("experiment", "fit_from"))
        for t, s, r, f in zip(rep.times, rep.sup, rep.residuals, rep.fit_mask):
            table.add(mass, t, s, r, bool(f))
        fits.add(mass, rep.exponent, rep.intercept, int(rep.fit_mask.sum()))
        exps.append(rep.exponent)
        res.check(f"exponent_m{mass:g}", abs(rep.exponent - target) <= etol, rep.exponent,
                  f"{target} +/- {etol}")
    if len(exps) > 1:
        spread = max(exps) - min(exps)
        lim = cfg.get("checks", "mass_tol")
        res.check("exponent_mass_stability", spread <= lim, spread, f"<= {lim}")
    res.tables["decay"] = table
    res.tables["decay_fit"] = fits
    res.summary["exponents"] = dict(zip([f"{m:g}" for m in cfg.get("experiment", "masses")], exps))
    res.fields["phi_t_last"] = adjoint_evolve(phi, max(times), cfg.get("experiment", "masses")[0])
    return res


RUNNERS = {
    "verify": run_verify,
    "covariance": run_covariance,
    "ensemble": run_ensemble_experiment,
    "rooms": run_rooms,
    "decay": run_decay,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return RUNNERS[cfg.experiment](cfg)

"""Monte Carlo statistics of projections <U(t) psi0, phi>.

Projections are computed through the dual group: one ``U'(t) phi`` per
(time, test function), pulled back through the sampler's linear filter to a
weight vector ``w`` with ``<psi0_i, U'(t) phi> = w . xi_i`` for the noise
``xi_i`` of sample ``i``.  Each sample then costs one noise draw and a dot
product.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .covariance import equilibrium_table, quadratic_form, symbol_table
from .grid import GridSpec, RealField8, TestFunction, inner, pointwise_norm
from .measures import Sampler
from .propagator import TrigCache, adjoint_evolve, evolve

__all__ = [
    "BudgetError",
    "EnsembleResult",
    "run_ensemble",
    "char_functional",
    "CharFunctionalRow",
    "cumulant_report",
    "CumulantReport",
    "exact_excess_kurtosis",
    "RoomCorridorLayout",
    "RoomCorridorDecomposition",
    "room_corridor_decompose",
    "variance_scaling_report",
    "VarianceScalingReport",
    "decay_probe",
    "DecayReport",
]


class BudgetError(ValueError):
    """A requested time would let the signal wrap around the torus."""


def _check_budget(grid: GridSpec, t: float, rbar: float, rcorr: float):
    need = abs(t) + rbar + rcorr
    if not need < grid.L / 2:
        raise BudgetError(f"t + r_bar + r_corr = {abs(t)} + {rbar} + {rcorr} = {need} "
                          f"is not below L/2 = {grid.L / 2}")


def _as_test_function(phi) -> TestFunction:
    if isinstance(phi, TestFunction):
        return phi
    if isinstance(phi, RealField8):
        # support taken from the data itself
        r = pointwise_norm(phi)
        rad = float(phi.grid.radius[r > 0].max()) if np.any(r > 0) else 0.0
        return TestFunction(phi, rad)
    raise TypeError(f"expected a test function, got {type(phi).__name__}")


# -- ensembles ----------------------------------------------------------------

@dataclass
class EnsembleResult:
    """Raw projections, shape (M, len(times), len(labels)), plus exact references.

    ``q_t[i, j]`` is the exact variance of projection (t_i, phi_j) for the
    sampler on its grid, ``q_inf[j]`` the equilibrium value.
    """

    spec: dict
    times: np.ndarray
    labels: list
    projections: np.ndarray
    q_t: np.ndarray
    q_inf: np.ndarray
    weight_l4: np.ndarray  # sum w^4 / (sum w^2)^2 per (t, phi)
    noise_excess_kurtosis: float
    spot_check_error: float = float("nan")
    m: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return int(self.projections.shape[0])

    def _index(self, t: float, label) -> tuple[int, int]:
        ti = np.flatnonzero(np.isclose(self.times, t, rtol=0, atol=1e-12))
        if ti.size == 0:
            raise KeyError(f"time {t} not in ensemble")
        if isinstance(label, (int, np.integer)):
            pj = int(label)
        else:
            pj = self.labels.index(label)
        return int(ti[0]), pj

    def values(self, t: float, label=0) -> np.ndarray:
        i, j = self._index(t, label)
        return self.projections[:, i, j]

    def exact_excess_kurtosis(self, t: float, label=0) -> float:
        i, j = self._index(t, label)
        return float(self.noise_excess_kurtosis * self.weight_l4[i, j])

    def summary(self) -> list[dict]:
        rows = []
        for i, t in enumerate(self.times):
            for j, lab in enumerate(self.labels):
                rep = cumulant_report(self, t, j, warn=False)
                rows.append({
                    "t": float(t), "phi": lab, "M": self.M,
                    "mean": rep.mean, "mean_se": rep.mean_se,
                    "variance": rep.variance, "q_t": float(self.q_t[i, j]), "q_inf": float(self.q_inf[j]),
                    "skewness": rep.skewness, "skewness_se": rep.skewness_se,
                    "excess_kurtosis": rep.excess_kurtosis, "kurtosis_se": rep.kurtosis_se,
                    "exact_excess_kurtosis": self.exact_excess_kurtosis(t, j),
                })
        return rows

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample_id", "t", "phi_id", "value"])
            for s in range(self.M):
                for i, t in enumerate(self.times):
                    for j, lab in enumerate(self.labels):
                        w.writerow([s, repr(float(t)), lab, repr(float(self.projections[s, i, j]))])


def run_ensemble(sampler: Sampler, times, phis, M: int, m: float = 1.0, spot_checks: int = 10,
                 enforce_budget: bool = True, batch: int = 16) -> EnsembleResult:
    """Draw ``M`` samples and project each onto ``U'(t) phi`` for every (t, phi).

    The first ``spot_checks`` samples are also evolved forward and projected
    directly; the largest discrepancy relative to the projection's standard
    deviation is stored in ``spot_check_error``.
    """
    if M < 1:
        raise ValueError("need at least one sample")
    grid = sampler.grid
    times = np.asarray(times, dtype=float).ravel()
    phis = [_as_test_function(p) for p in phis]
    labels = [p.label or f"phi{j}" for j, p in enumerate(phis)]
    rcorr = sampler.correlation_range
    if enforce_budget:
        for t in times:
            for p in phis:
                _check_budget(grid, t, p.radius, rcorr)

    cache = TrigCache()
    T, P = len(times), len(phis)
    W = np.empty((T * P, 8 * grid.size))
    for i, t in enumerate(times):
        for j, p in enumerate(phis):
            W[i * P + j] = sampler.projection_weights(adjoint_evolve(p.field, t, m, cache)).ravel()
    w2 = np.einsum("ij,ij->i", W, W)
    w4 = np.einsum("ij,ij->i", W**2, W**2)
    l4 = np.where(w2 > 0, w4 / np.where(w2 > 0, w2, 1.0) ** 2, 0.0)

    proj = np.empty((M, T * P))
    for start in range(0, M, batch):
        idx = range(start, min(M, start + batch))
        Xi = np.stack([sampler.noise(s).ravel() for s in idx])
        proj[start:start + len(idx)] = Xi @ W.T
    proj = proj.reshape(M, T, P)

    table0 = symbol_table(sampler.exact_covariance(), grid)
    table_inf = equilibrium_table(table0, grid, m)
    q_inf = np.array([quadratic_form(p, table_inf, grid) for p in phis])

    worst = 0.0
    for s in range(min(spot_checks, M)):
        psi0 = sampler.sample(s)
        for i, t in enumerate(times):
            psit = evolve(psi0, t, m, cache)
            for j, p in enumerate(phis):
                direct = inner(psit, p.field)
                scale = math.sqrt(w2[i * P + j]) or 1.0
                worst = max(worst, abs(direct - proj[s, i, j]) / scale)

    return EnsembleResult(
        spec=sampler.spec.to_dict(), times=times, labels=labels, projections=proj,
        q_t=w2.reshape(T, P), q_inf=q_inf, weight_l4=l4.reshape(T, P),
        noise_excess_kurtosis=float(sampler.noise_excess_kurtosis),
        spot_check_error=float(worst) if spot_checks and M else float("nan"), m=float(m),
    )


def exact_excess_kurtosis(weights: np.ndarray, noise_excess_kurtosis: float) -> float:
    """Excess kurtosis of w . xi for i.i.d. unit-variance xi."""
    w = np.ravel(weights)
    s2 = float(np.dot(w, w))
    if s2 == 0:
        return 0.0
    return float(noise_excess_kurtosis * np.sum(w**4) / s2**2)


# -- cumulants and characteristic functional ------------------------------------

@dataclass(frozen=True)
class CumulantReport:
    t: float
    label: str
    M: int
    mean: float
    mean_se: float
    variance: float
    skewness: float
    skewness_se: float
    excess_kurtosis: float
    kurtosis_se: float
    skewness_p: float
    kurtosis_p: float

    @property
    def skewness_z(self) -> float:
        return self.skewness / self.skewness_se

    @property
    def kurtosis_z(self) -> float:
        return self.excess_kurtosis / self.kurtosis_se


def cumulant_report(result: EnsembleResult, t: float, label=0, warn: bool = True) -> CumulantReport:
    """Sample skewness and excess kurtosis with the sqrt(6/M), sqrt(24/M) baselines."""
    x = result.values(t, label)
    M = x.size
    if warn and M < 1000:
        warnings.warn(f"cumulant report with only M={M} samples", RuntimeWarning, stacklevel=2)
    lab = result.labels[result._index(t, label)[1]]
    var = float(np.var(x, ddof=1)) if M > 1 else float("nan")
    if M > 2 and np.ptp(x) > 0:
        skew = float(sps.skew(x))
        kurt = float(sps.kurtosis(x))
    else:
        skew = kurt = float("nan")
    sp = float(sps.skewtest(x).pvalue) if M >= 8 and np.ptp(x) > 0 else float("nan")
    kp = float(sps.kurtosistest(x).pvalue) if M >= 20 and np.ptp(x) > 0 else float("nan")
    return CumulantReport(
        t=float(t), label=lab, M=M, mean=float(np.mean(x)),
        mean_se=math.sqrt(var / M) if M > 1 else float("nan"), variance=var,
        skewness=skew, skewness_se=math.sqrt(6.0 / M), excess_kurtosis=kurt,
        kurtosis_se=math.sqrt(24.0 / M), skewness_p=sp, kurtosis_p=kp,
    )


@dataclass(frozen=True)
class CharFunctionalRow:
    lam: float
    estimate: complex
    se: float
    gaussian_t: float  # exp(-lam^2 Q_t / 2)
    gaussian_inf: float  # exp(-lam^2 Q_inf / 2)
    bias: float  # lam^2 |Q_t - Q_inf| / 2, bounds |gaussian_t - gaussian_inf|

    @property
    def deviation(self) -> float:
        return abs(self.estimate - self.gaussian_inf)


def char_functional(result: EnsembleResult, t: float, label=0, lambdas=(0.5, 1.0, 2.0)) -> list[CharFunctionalRow]:
    """Empirical E exp(i lam <psi(t), phi>) with jackknife standard errors."""
    x = result.values(t, label)
    i, j = result._index(t, label)
    qt, qi = float(result.q_t[i, j]), float(result.q_inf[j])
    M = x.size
    rows = []
    for lam in lambdas:
        z = np.exp(1j * lam * x)
        est = complex(np.mean(z))
        if M > 1:
            loo = (est * M - z) / (M - 1)
            se = float(math.sqrt((M - 1) / M * np.sum(np.abs(loo - loo.mean()) ** 2)))
        else:
            se = float("nan")
        if lam == 0:
            est, se = 1.0 + 0j, 0.0
        rows.append(CharFunctionalRow(
            float(lam), est, se, math.exp(-0.5 * lam**2 * qt), math.exp(-0.5 * lam**2 * qi),
            0.5 * lam**2 * abs(qt - qi)))
    return rows


# -- rooms and corridors --------------------------------------------------------

@dataclass(frozen=True)
class RoomCorridorLayout:
    """Alternating slabs along x3: room j is [j H - d/2, j H + d/2), corridor j
    follows it up to (j+1) H - d/2, with H = d + rho.

    Widths are grid multiples (in cells: ``d_cells``, ``rho_cells``).
    """

    t: float
    delta: float
    grid: GridSpec
    d_cells: int
    rho_cells: int
    r_bar: float = 0.0

    @classmethod
    def for_time(cls, t: float, grid: GridSpec, delta: float = 0.25, r_bar: float = 0.0) -> "RoomCorridorLayout":
        if not 0 < delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {delta}")
        h = grid.h
        t = abs(float(t))
        if t <= 1.0:
            # one room spanning the torus
            return cls(t, delta, grid, grid.n, 0, r_bar)
        d = max(h, t / math.log(t))
        rho = max(h, t ** (1.0 - delta))
        dc = max(1, int(round(d / h)))
        rc = max(1, int(round(rho / h)))
        return cls(t, delta, grid, dc, rc, r_bar)

    @property
    def d(self) -> float:
        return self.d_cells * self.grid.h

    @property
    def rho(self) -> float:
        return self.rho_cells * self.grid.h

    @property
    def period(self) -> float:
        return self.d + self.rho

    @property
    def N(self) -> int:
        """Largest |j| whose slabs meet the inflated cone |x3| <= t + r_bar."""
        reach = self.t + self.r_bar
        return int(math.floor((reach + self.d / 2) / self.period)) if self.rho_cells else 0

    def labels(self) -> tuple[np.ndarray, np.ndarray]:
        """Per x3 node (FFT order): slab kind (0 room, 1 corridor) and index j."""
        n = self.grid.n
        i3 = np.fft.fftfreq(n, d=1.0 / n).astype(int)
        if self.rho_cells == 0:
            return np.zeros(n, dtype=int), np.zeros(n, dtype=int)
        H = self.d_cells + self.rho_cells
        s = i3 + self.d_cells // 2
        j = np.floor_divide(s, H)
        kind = (s - j * H >= self.d_cells).astype(int)
        return kind, j

    def indicators(self) -> dict:
        """{(kind, j): boolean mask over x3} for every slab present on the torus."""
        kind, j = self.labels()
        return {(int(k), int(jj)): (kind == k) & (j == jj) for k, jj in sorted(set(zip(kind, j)))}

    def partition_residual(self) -> float:
        total = sum(mask.astype(int) for mask in self.indicators().values())
        return float(np.abs(total - 1).max())

    def slab_sums(self, plane: np.ndarray) -> tuple[dict, dict]:
        """Sum a per-x3 array over each room and each corridor."""
        kind, j = self.labels()
        rooms: dict = {}
        corridors: dict = {}
        for k, jj, v in zip(kind, j, plane):
            target = rooms if k == 0 else corridors
            target[int(jj)] = target.get(int(jj), 0.0) + v
        return rooms, corridors


def _plane_products(psi0, phit) -> np.ndarray:
    """h^3 sum over components and (x1, x2) of psi0 * phit, per x3 node."""
    a = psi0.data if hasattr(psi0, "data") else psi0
    b = phit.data if hasattr(phit, "data") else phit
    return phit.grid.cell_volume * np.einsum("cxyz,cxyz->z", a, b)


@dataclass(frozen=True)
class RoomCorridorDecomposition:
    layout: RoomCorridorLayout
    rooms: dict
    corridors: dict
    total: float  # sum over all slabs
    direct: float  # <U(t) psi0, phi> by forward evolution
    out_of_cone: float  # |sum over slabs with |j| > N|

    @property
    def relative_error(self) -> float:
        return abs(self.total - self.direct) / max(abs(self.direct), 1e-300)


def room_corridor_decompose(psi0: RealField8, phi, t: float, delta: float = 0.25, m: float = 1.0,
                            layout: RoomCorridorLayout | None = None) -> RoomCorridorDecomposition:
    """Split <U(t) psi0, phi> into room terms r_j and corridor terms c_j."""
    phi = _as_test_function(phi)
    grid = psi0.grid
    if layout is None:
        layout = RoomCorridorLayout.for_time(t, grid, delta, phi.radius)
    if layout.rho_cells and not layout.N * layout.period + layout.d / 2 <= grid.L / 2:
        raise BudgetError("room-corridor layout around the cone does not fit in the torus")
    phit = adjoint_evolve(phi.field, t, m)
    rooms, corridors = layout.slab_sums(_plane_products(psi0, phit))
    total = float(math.fsum(list(rooms.values()) + list(corridors.values())))
    direct = inner(evolve(psi0, t, m), phi.field)
    N = layout.N
    outside = math.fsum([v for j, v in rooms.items() if abs(j) > N]
                        + [v for j, v in corridors.items() if abs(j) > N])
    return RoomCorridorDecomposition(layout, rooms, corridors, total, direct, abs(outside))


@dataclass
class VarianceScalingReport:
    """Per time: max over slabs of E|r_j|^2 and E|c_j|^2, empirical and exact."""

    rows: list

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    @property
    def room_constant_spread(self) -> float:
        """max/min over t of E|r|^2 t / d_t (empirical)."""
        c = self.column("room_scaled")
        return float(c.max() / c.min())

    @property
    def corridor_ratio_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.column("corridor_room_ratio")) < 0))


def variance_scaling_report(sampler: Sampler, phi, t_grid, delta: float = 0.25, M: int = 1000,
                            m: float = 1.0) -> VarianceScalingReport:
    """Room and corridor variances across ``t_grid`` from ``M`` samples.

    Exact variances use the sampler weights: E|r_j|^2 = |w_j|^2 for unit
    variance noise.
    """
    if M < 1000:
        warnings.warn(f"variance scaling with only M={M} samples", RuntimeWarning, stacklevel=2)
    phi = _as_test_function(phi)
    grid = sampler.grid
    rcorr = sampler.correlation_range
    setups = []
    for t in t_grid:
        _check_budget(grid, t, phi.radius, rcorr)
        lay = RoomCorridorLayout.for_time(t, grid, delta, phi.radius)
        phit = adjoint_evolve(phi.field, t, m)
        kind, j = lay.labels()
        keys = sorted({(int(k), int(jj)) for k, jj in zip(kind, j) if abs(jj) <= lay.N})
        # slab membership as a (n, S) matrix
        S = np.zeros((grid.n, len(keys)))
        for c, key in enumerate(keys):
            S[:, c] = (kind == key[0]) & (j == key[1])
        exact = []
        for c in range(len(keys)):
            masked = phit.data * S[:, c][None, None, None, :]
            w = sampler.projection_weights(masked)
            exact.append(float(np.dot(w.ravel(), w.ravel())))
        setups.append((lay, phit, keys, S, np.array(exact)))

    sums = [np.zeros((M, len(s[2]))) for s in setups]
    for i in range(M):
        psi0 = sampler.sample(i)
        for a, (lay, phit, keys, S, _) in enumerate(setups):
            sums[a][i] = _plane_products(psi0, phit) @ S

    rows = []
    for (lay, phit, keys, S, exact), vals in zip(setups, sums):
        sq = vals**2
        ev = sq.mean(axis=0)
        se = sq.std(axis=0, ddof=1) / math.sqrt(M) if M > 1 else np.full_like(ev, np.nan)
        is_room = np.array([k == 0 for k, _ in keys])
        ri = np.flatnonzero(is_room)
        ci = np.flatnonzero(~is_room)
        r_best = ri[np.argmax(ev[ri])]
        room = float(ev[r_best])
        if ci.size:
            c_best = ci[np.argmax(ev[ci])]
            corr, corr_se, corr_exact = float(ev[c_best]), float(se[c_best]), float(exact[ci].max())
        else:
            corr = corr_se = corr_exact = 0.0
        t = lay.t
        rows.append({
            "t": t, "d": lay.d, "rho": lay.rho, "N": lay.N, "slabs": len(keys),
            "room_var": room, "room_var_se": float(se[r_best]), "room_var_exact": float(exact[ri].max()),
            "corridor_var": corr, "corridor_var_se": corr_se, "corridor_var_exact": corr_exact,
            "room_scaled": room * t / lay.d if t > 0 else float("nan"),
            "corridor_scaled": corr * t / lay.rho if t > 0 and lay.rho > 0 else float("nan"),
            "corridor_room_ratio": corr / room if room > 0 else float("nan"),
            "corridor_room_ratio_exact": corr_exact / float(exact[ri].max()) if exact[ri].max() > 0 else float("nan"),
        })
    return VarianceScalingReport(rows)


# -- dispersive decay -------------------------------------------------------------

@dataclass(frozen=True)
class DecayReport:
    times: np.ndarray
    sup: np.ndarray
    exponent: float
    intercept: float
    fit_mask: np.ndarray

    @property
    def residuals(self) -> np.ndarray:
        """log sup - fitted line, NaN outside the fit window."""
        pred = self.intercept + self.exponent * np.log(np.where(self.times > 0, self.times, np.nan))
        res = np.log(self.sup) - pred
        return np.where(self.fit_mask, res, np.nan)


def decay_probe(phi, t_grid, m: float = 1.0, fit_from: float | None = None) -> DecayReport:
    """sup_x |U'(t) phi| per t and a least-squares log-log exponent.

    The fit uses ``t >= fit_from`` (default: the top decade, t >= max(t)/10).
    """
    phi = _as_test_function(phi)
    times = np.asarray(t_grid, dtype=float)
    grid = phi.grid
    for t in times:
        _check_budget(grid, t, phi.radius, 0.0)
    sup = np.array([pointwise_norm(adjoint_evolve(phi.field, t, m)).max() for t in times])
    lo = times.max() / 10 if fit_from is None else fit_from
    mask = (times >= lo) & (times > 0)
    if mask.sum() >= 2:
        slope, icept = np.polyfit(np.log(times[mask]), np.log(sup[mask]), 1)
    else:
        slope = icept = float("nan")
    return DecayReport(times, sup, float(slope), float(icept), mask)

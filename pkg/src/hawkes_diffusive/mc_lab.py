"""Monte Carlo experiments comparing the N-system with its diffusion limit."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import hawkes_engine, limit_engine, stationary
from .generators import TestFunction, loglog_fit
from .model import ModelSpec
from .rng import derive_seed


@dataclass
class MCEstimate:
    mean: float
    sem: float
    reps: int

    @classmethod
    def from_samples(cls, values) -> "MCEstimate":
        v = np.asarray(values, dtype=np.float64)
        n = v.size
        sem = float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(np.mean(v)), sem, int(n))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "sem": self.sem, "reps": self.reps}


@dataclass
class LimitEstimate(MCEstimate):
    """Estimate at step h, plus the same functional at h/2 on the coupled
    fine path; ``richardson_diff`` is est(h) - est(h/2)."""

    fine_mean: float = float("nan")
    richardson_diff: float = 0.0
    richardson_sem: float = 0.0

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(fine_mean=self.fine_mean, richardson_diff=self.richardson_diff,
                 richardson_sem=self.richardson_sem)
        return d


def _cov_with_sem(a, b):
    """Sample covariance and the standard error of that estimate."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = a.size
    prod = (a - a.mean()) * (b - b.mean())
    cov = float(prod.sum() / (n - 1))
    return cov, float(np.std(prod, ddof=1) / math.sqrt(n))


# ---------------------------------------------------------------------------
# semigroups


def _cv_samples(y, x, known_mean):
    """Samples of y - b (x - E x) with the least-squares coefficient b."""
    xc = x - x.mean()
    vx = float(xc @ xc)
    b = float(xc @ (y - y.mean())) / vx if vx > 0 else 0.0
    return y - b * (x - known_mean)


def semigroup_n(spec: ModelSpec, g: TestFunction, x: float, t: float, reps: int, seed: int,
                workers=None, control_variate: bool = False) -> MCEstimate:
    """E_x[g(X^N_t)] from ``reps`` exact runs.

    With ``control_variate`` the samples are corrected by X^N_t, whose mean
    x e^{-alpha t} is exact for every N (the marks are centred).
    """
    if t == 0:
        return MCEstimate(float(g.g(x)), 0.0, int(reps))
    batch = hawkes_engine.simulate_batch(spec.with_(x0=float(x)), t, [t], reps, seed, track=0,
                                         workers=workers)
    xt = batch.x[:, 0]
    y = g.g(xt)
    if control_variate:
        y = _cv_samples(y, xt, x * math.exp(-spec.alpha * t))
    return MCEstimate.from_samples(y)


def semigroup_limit(spec: ModelSpec, g: TestFunction, x: float, t: float, h: float, reps: int,
                    seed: int, workers=None, control_variate: bool = False) -> LimitEstimate:
    """E_x[g(X_bar_t)] by Euler-Maruyama at step h, with the h/2 estimate
    from the same Brownian paths.

    The control variate uses the scheme's exact mean x (1 - alpha h)^k.
    """
    if t == 0:
        v = float(g.g(x))
        return LimitEstimate(v, 0.0, int(reps), v, 0.0, 0.0)
    batch = limit_engine.simulate_em_batch(spec.with_(x0=float(x)), t, h, [t], reps, seed,
                                           workers=workers)
    xc, xf = batch.coarse[:, 0], batch.fine[:, 0]
    gc, gf = g.g(xc), g.g(xf)
    if control_variate:
        k = int(round(t / h))
        gc = _cv_samples(gc, xc, x * (1.0 - spec.alpha * h) ** k)
        gf = _cv_samples(gf, xf, x * (1.0 - 0.5 * spec.alpha * h) ** (2 * k))
    est = MCEstimate.from_samples(gc)
    d = MCEstimate.from_samples(gc - gf)
    return LimitEstimate(est.mean, est.sem, est.reps, float(np.mean(gf)), d.mean, d.sem)


# ---------------------------------------------------------------------------
# rate of convergence


class UnresolvableRate(RuntimeError):
    def __init__(self, report):
        super().__init__("fewer than 3 rows have error > 3 sem; increase reps")
        self.report = report


@dataclass
class RateReport:
    table: list  # (N, error, sem), sorted by N
    slope: Optional[float]
    intercept: Optional[float]
    half_width: Optional[float]
    resolvable: list = field(default_factory=list)  # N values used in the fit
    limit: Optional[LimitEstimate] = None
    n_estimates: dict = field(default_factory=dict)
    step_too_coarse: bool = False

    @property
    def status(self) -> str:
        return "ok" if self.slope is not None else "unresolvable"

    def to_json(self) -> dict:
        return {
            "table": [{"N": n, "error": e, "sem": s} for n, e, s in self.table],
            "slope": self.slope,
            "intercept": self.intercept,
            "half_width": self.half_width,
            "resolvable_N": list(self.resolvable),
            "status": self.status,
            "step_too_coarse": self.step_too_coarse,
            "limit": None if self.limit is None else self.limit.to_dict(),
            "n_side": {str(k): v.to_dict() for k, v in sorted(self.n_estimates.items())},
        }


def fit_rate(table) -> RateReport:
    """Log-log least squares of error on N over rows with error > 3 sem.

    The half-width is twice the slope's standard deviation obtained by
    propagating each row's relative error sem/error through the fit.
    """
    rows = sorted((int(n), float(e), float(s)) for n, e, s in table)
    use = [r for r in rows if r[1] > 3.0 * r[2]]
    if len(use) < 3:
        return RateReport(rows, None, None, None, [r[0] for r in use])
    ns = np.array([r[0] for r in use], dtype=np.float64)
    err = np.array([r[1] for r in use])
    sem = np.array([r[2] for r in use])
    slope, intercept, _ = loglog_fit(ns, err)
    lx = np.log(ns)
    c = (lx - lx.mean()) / float(((lx - lx.mean()) ** 2).sum())
    sd = math.sqrt(float(np.sum(c * c * (sem / err) ** 2)))
    return RateReport(rows, slope, intercept, 2.0 * sd, [r[0] for r in use])


def rate_experiment(base_spec: ModelSpec, g: TestFunction, x: float, t: float, n_grid,
                    reps: int, seed: int, h: float = limit_engine.DEFAULT_H, workers=None,
                    strict: bool = True, control_variate: bool = True) -> RateReport:
    """|P^N_t g(x) - P_bar_t g(x)| over N and its fitted log-log slope.

    Both sides use independent randomness.  The Richardson guard flags
    ``step_too_coarse`` when |est(h) - est(h/2)| is not below a fifth of
    the smallest resolved error.  Both sides use the X_t control variate
    unless ``control_variate`` is False.
    """
    lim = semigroup_limit(base_spec, g, x, t, h, reps, derive_seed(seed, "limit"), workers,
                          control_variate)
    table, ests = [], {}
    for n in sorted(int(v) for v in n_grid):
        est = semigroup_n(base_spec.with_(n_components=n), g, x, t, reps,
                          derive_seed(seed, "N", n), workers, control_variate)
        ests[n] = est
        table.append((n, abs(est.mean - lim.mean), math.hypot(est.sem, lim.sem)))
    report = fit_rate(table)
    report.limit = lim
    report.n_estimates = ests
    resolved = [e for n, e, s in report.table if n in report.resolvable]
    if resolved:
        report.step_too_coarse = abs(lim.richardson_diff) >= min(resolved) / 5.0
    if strict and report.slope is None:
        raise UnresolvableRate(report)
    return report


# ---------------------------------------------------------------------------
# moments


@dataclass
class MomentCurve:
    rows: list  # (t, m2, sem2, m4, sem4)
    trend_slope: Optional[float]
    trend_sem: Optional[float]

    @property
    def trend_flat(self) -> bool:
        if self.trend_slope is None:
            return True
        return abs(self.trend_slope) <= 2.0 * self.trend_sem

    def to_json(self) -> dict:
        return {
            "rows": [{"t": t, "m2": a, "sem2": b, "m4": c, "sem4": d}
                     for t, a, b, c, d in self.rows],
            "trend_slope": self.trend_slope,
            "trend_sem": self.trend_sem,
            "trend_flat": self.trend_flat,
        }


def _linear_trend(ts, ys, sems):
    ts = np.asarray(ts, dtype=np.float64)
    c = (ts - ts.mean()) / float(((ts - ts.mean()) ** 2).sum())
    return float(c @ np.asarray(ys)), math.sqrt(float(np.sum((c * np.asarray(sems)) ** 2)))


def moment_curve(spec: ModelSpec, times, reps: int, seed: int, workers=None) -> MomentCurve:
    """Empirical E[X^2], E[X^4] of X^N_t on a time grid; the trend of E[X^2]
    is fitted over the last half of the grid."""
    ts = np.asarray(times, dtype=np.float64)
    if np.any(np.diff(ts) < 0):
        raise ValueError("times must be sorted")
    rows = []
    pos = ts[ts > 0]
    xs = None
    if pos.size:
        batch = hawkes_engine.simulate_batch(spec, float(pos[-1]), pos, reps, seed, track=0,
                                             workers=workers)
        xs = batch.x
    j = 0
    for t in ts:
        if t == 0:
            x0 = float(spec.x0)
            rows.append((0.0, x0 ** 2, 0.0, x0 ** 4, 0.0))
            continue
        col = xs[:, j]
        j += 1
        e2 = MCEstimate.from_samples(col ** 2)
        e4 = MCEstimate.from_samples(col ** 4)
        rows.append((float(t), e2.mean, e2.sem, e4.mean, e4.sem))
    tail = rows[len(rows) // 2:]
    if len(tail) >= 2:
        slope, sem = _linear_trend([r[0] for r in tail], [r[1] for r in tail],
                                   [r[2] for r in tail])
    else:
        slope, sem = None, None
    return MomentCurve(rows, slope, sem)


# ---------------------------------------------------------------------------
# conditional propagation of chaos


@dataclass
class ChaosReport:
    cov_n: float
    sem_cov_n: float
    var_lambda: float
    sem_var_lambda: float
    var_lambda_fine: float
    cov_cox: float
    sem_cov_cox: float
    n_components: int
    reps: int

    @property
    def combined_sem(self) -> float:
        return math.hypot(self.sem_cov_n, self.sem_var_lambda)

    @property
    def gap(self) -> float:
        return abs(self.cov_n - self.var_lambda)

    @property
    def agree(self) -> bool:
        return self.gap <= 4.0 * self.combined_sem

    def to_json(self) -> dict:
        return {
            "N": self.n_components, "reps": self.reps,
            "cov_N": self.cov_n, "sem_cov_N": self.sem_cov_n,
            "var_lambda": self.var_lambda, "sem_var_lambda": self.sem_var_lambda,
            "var_lambda_half_step": self.var_lambda_fine,
            "cov_cox": self.cov_cox, "sem_cov_cox": self.sem_cov_cox,
            "gap": self.gap, "combined_sem": self.combined_sem, "agree": self.agree,
        }


def chaos_covariance(spec: ModelSpec, T: float, k: int, reps: int, seed: int,
                     h: float = limit_engine.DEFAULT_H, workers=None) -> ChaosReport:
    """Cov(Z^{N,1}_T, Z^{N,2}_T) against Var(int_0^T f(X_bar_s) ds).

    For Cox processes sharing one intensity the conditional covariance
    vanishes, so their covariance is the variance of the integrated
    intensity.  The limit side also reports the covariance of directly
    sampled Cox counts.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    hb = hawkes_engine.simulate_batch(spec, T, [T], reps, derive_seed(seed, "hawkes"), track=k,
                                      workers=workers)
    cov_n, sem_n = _cov_with_sem(hb.counts[:, 0], hb.counts[:, 1])
    lb = limit_engine.simulate_em_batch(spec, T, h, [T], reps, derive_seed(seed, "limit"),
                                        cox_k=2, workers=workers)
    var_l, sem_l = _cov_with_sem(lb.integral_coarse, lb.integral_coarse)
    var_f = float(np.var(lb.integral_fine, ddof=1))
    cov_c, sem_c = _cov_with_sem(lb.cox_counts[:, 0], lb.cox_counts[:, 1])
    return ChaosReport(cov_n, sem_n, var_l, sem_l, var_f, cov_c, sem_c, spec.n_components, reps)


# ---------------------------------------------------------------------------
# joint (N, t) limit


@dataclass
class JointLimitReport:
    rows: list  # (t, N, w1, sem)

    @property
    def decreasing(self) -> bool:
        return all(b[2] < a[2] + a[3] for a, b in zip(self.rows, self.rows[1:]))

    def to_json(self) -> dict:
        return {
            "rows": [{"t": t, "N": n, "w1": w, "sem": s} for t, n, w, s in self.rows],
            "decreasing": self.decreasing,
        }


def joint_limit_experiment(spec: ModelSpec, schedule, reps: int, seed: int,
                           workers=None) -> JointLimitReport:
    """W1(law(X^{N_j}_{t_j}), invariant law) along a schedule of (t, N)."""
    dens = stationary.invariant_density(spec)
    rows = []
    for t, n in schedule:
        xs = stationary.long_run_law(spec.with_(n_components=int(n)), float(t), reps,
                                     derive_seed(seed, "joint", float(t), int(n)), workers)
        w, s = stationary.wasserstein1_with_sem(xs, dens, seed=derive_seed(seed, "boot", t, n))
        rows.append((float(t), int(n), w, s))
    return JointLimitReport(rows)

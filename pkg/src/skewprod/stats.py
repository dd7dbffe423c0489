"""Realized (cross-)quadratic variation and the hypothesis tests built on it.

All ensemble statistics are reduced in path order, so they are deterministic
given the inputs.  Tests report two-sided p-values; ``passed`` means
"fail to reject" for hypothesis tests (``kind="test"``) and "within
tolerance" for deterministic checks (``kind="check"``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .errors import FlatClock, GridMismatch, TooFewPaths, TooFewSamples
from .sde import Grid, SamplePath

ALPHA = 0.01
MIN_PATHS = 30
MIN_SAMPLES = 30


@dataclass(frozen=True)
class QVEstimate:
    grid: Grid
    values: np.ndarray

    @property
    def total(self) -> float:
        return float(self.values[-1])


@dataclass(frozen=True)
class TestReport:
    __test__ = False  # not a pytest class

    name: str
    statistic: float
    null_scale: float
    z_score: float
    p_value: float
    passed: bool
    alpha: float = ALPHA
    kind: str = "test"
    tolerance: float | None = None
    null_value: float = 0.0
    components: tuple = ()
    detail: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def component(self, name: str) -> "TestReport":
        for c in self.components:
            if c.name == name or c.name.endswith("." + name):
                return c
        raise KeyError(name)

    def flatten(self, prefix: str = "") -> list["TestReport"]:
        """This report followed by its components, names prefixed."""
        from dataclasses import replace
        me = replace(self, name=prefix + self.name, components=())
        out = [me]
        for c in self.components:
            # component names usually already carry this report's name
            if c.name.startswith(self.name + "."):
                out.extend(c.flatten(prefix=prefix))
            else:
                out.extend(c.flatten(prefix=me.name + "."))
        return out


def two_sided_p(z: float) -> float:
    if math.isnan(z):
        return math.nan
    return float(2.0 * sps.norm.sf(abs(z)))


def _z(stat: float, null_value: float, scale: float) -> float:
    diff = stat - null_value
    if scale > 0:
        return diff / scale
    if diff == 0:
        return 0.0
    return math.copysign(math.inf, diff)


def z_report(name: str, statistic: float, null_scale: float, alpha: float = ALPHA,
             null_value: float = 0.0, **kw) -> TestReport:
    z = _z(statistic, null_value, null_scale)
    p = two_sided_p(z)
    return TestReport(name=name, statistic=float(statistic), null_scale=float(null_scale),
                      z_score=float(z), p_value=p, passed=bool(p >= alpha), alpha=alpha,
                      null_value=null_value, **kw)


def check_report(name: str, statistic: float, tolerance: float, null_scale: float = math.nan,
                 **kw) -> TestReport:
    """Deterministic tolerance check: passes iff ``|statistic| <= tolerance``."""
    z = statistic / null_scale if null_scale and null_scale > 0 else math.nan
    return TestReport(name=name, statistic=float(statistic), null_scale=float(null_scale),
                      z_score=float(z), p_value=math.nan, passed=bool(abs(statistic) <= tolerance),
                      kind="check", tolerance=float(tolerance), **kw)


# -- estimators ---------------------------------------------------------------

def _values(p) -> np.ndarray:
    return p.values if isinstance(p, SamplePath) else np.asarray(p, dtype=float)


def realized_qv(path: SamplePath) -> QVEstimate:
    """Running sum of squared increments, ``values[k] = sum_{j<k} dx_j^2``."""
    x = _values(path)
    if x.ndim != 1 or len(x) < 2:
        raise ValueError("realized_qv needs a scalar path with at least 2 samples")
    out = np.zeros(len(x))
    out[1:] = np.cumsum(np.diff(x) ** 2)
    return QVEstimate(path.grid, out)


def realized_cross_qv(p1: SamplePath, p2: SamplePath) -> QVEstimate:
    """Running sum of increment products."""
    if p1.grid != p2.grid:
        raise GridMismatch(f"{p1.grid} vs {p2.grid}")
    x, y = _values(p1), _values(p2)
    out = np.zeros(len(x))
    out[1:] = np.cumsum(np.diff(x) * np.diff(y))
    return QVEstimate(p1.grid, out)


def riemann(grid: Grid, integrand) -> np.ndarray:
    """Left-endpoint running integral ``int_0^{t_k} g ds`` on ``grid``."""
    g = np.asarray(integrand, dtype=float)
    out = np.zeros(grid.n_steps + 1)
    out[1:] = np.cumsum(g[:-1] * grid.dt)
    return out


def relative_error(realized: float, predicted: float) -> float:
    return realized / predicted - 1.0


# -- tests --------------------------------------------------------------------

def _as_list(x) -> list:
    return [x] if isinstance(x, SamplePath) else list(x)


def drift_slope(paths: Sequence[SamplePath], alpha: float = ALPHA, null_value: float = 0.0,
                name: str = "drift_slope") -> TestReport:
    """Least-squares drift of ``x_t - x_0`` against ``t`` with H0: slope = ``null_value``.

    Each path gets a through-the-origin slope ``b_i = sum(s y) / sum(s^2)``;
    the estimate is their mean (equal to the slope of the ensemble mean when
    the paths share a grid) and the standard error is their spread over
    ``sqrt(n)``.  Paths may live on different grids.
    """
    paths = _as_list(paths)
    if len(paths) < MIN_PATHS:
        raise TooFewPaths(f"drift_slope needs >= {MIN_PATHS} paths, got {len(paths)}")
    slopes = np.empty(len(paths))
    for i, p in enumerate(paths):
        s = p.times - p.times[0]
        y = p.values - p.values[0]
        slopes[i] = np.dot(s, y) / np.dot(s, s)
    slope = float(np.mean(slopes))
    se = float(np.std(slopes, ddof=1) / np.sqrt(len(slopes)))
    return z_report(name, slope, se, alpha, null_value=null_value,
                    detail={"n_paths": len(paths)})


def _bonferroni(pvals: np.ndarray) -> float:
    return float(min(1.0, np.min(pvals) * len(pvals)))


def bm_conformance_test(paths: Sequence[SamplePath], alpha: float = ALPHA,
                        name: str = "bm_conformance") -> TestReport:
    """Is every path a standard BM started at its first value?

    A level-``alpha`` test made of three components, each run at level
    ``alpha / 3`` (Bonferroni), so the combined size stays at ``alpha``.  The
    combined p-value is ``min(1, 3 * min p)``; it fails iff a component does.

    ``qv``
        Per path, ``QV / h ~ chi2(m)`` for ``m`` steps of size ``h``.  The
        two-sided p-values are Bonferroni-combined over paths, which amounts
        to a per-path window ``|QV_t / t - 1| <= eps_m`` at level ``alpha / (3 n)``.
        The statistic is the worst ``|QV_t / t - 1|``.
    ``normality``
        Per-path Kolmogorov-Smirnov of the increments against Normal(0, h),
        Bonferroni-combined.
    ``drift``
        :func:`drift_slope` with H0: slope = 0.
    """
    paths = _as_list(paths)
    if len(paths) < MIN_PATHS:
        raise TooFewPaths(f"bm_conformance_test needs >= {MIN_PATHS} paths, got {len(paths)}")
    n = len(paths)
    a = alpha / 3
    qv_p = np.empty(n)
    ks_p = np.empty(n)
    dev = np.empty(n)
    dev_sd = np.empty(n)
    ks_d = np.empty(n)
    for i, p in enumerate(paths):
        inc = np.diff(p.values)
        m, h = len(inc), p.grid.dt
        q = float(np.dot(inc, inc)) / h
        qv_p[i] = min(1.0, 2.0 * min(sps.chi2.cdf(q, m), sps.chi2.sf(q, m)))
        dev[i] = q / m - 1.0
        dev_sd[i] = math.sqrt(2.0 / m)
        ks = sps.kstest(inc / math.sqrt(h), "norm")
        ks_p[i], ks_d[i] = ks.pvalue, ks.statistic
    worst = int(np.argmax(np.abs(dev)))
    p_qv = _bonferroni(qv_p)
    qv = TestReport(name=f"{name}.qv", statistic=float(dev[worst]), null_scale=float(dev_sd[worst]),
                    z_score=float(dev[worst] / dev_sd[worst]), p_value=p_qv,
                    passed=bool(p_qv >= a), alpha=a,
                    detail={"mean_qv_ratio": float(np.mean(dev) + 1.0),
                            "paths_rejected_uncorrected": int(np.sum(qv_p < alpha))})
    worst_ks = int(np.argmin(ks_p))
    p_ks = _bonferroni(ks_p)
    normality = TestReport(name=f"{name}.normality", statistic=float(ks_d[worst_ks]),
                           null_scale=math.nan, z_score=math.nan, p_value=p_ks,
                           passed=bool(p_ks >= a), alpha=a)
    drift = drift_slope(paths, a, name=f"{name}.drift")
    comps = (qv, normality, drift)
    p_min = _bonferroni(np.array([c.p_value for c in comps]))
    zmax = max((abs(c.z_score) for c in comps if not math.isnan(c.z_score)), default=math.nan)
    return TestReport(name=name, statistic=zmax, null_scale=1.0, z_score=zmax, p_value=p_min,
                      passed=all(c.passed for c in comps), alpha=alpha, components=comps,
                      detail={"n_paths": n})


def independence_cross_test(angles, radial_components, predicted=None, alpha: float = ALPHA,
                            name: str = "independence_cross") -> TestReport:
    """H0: realized cross-QV of (angle, radial component) at the horizon equals ``predicted``.

    ``predicted`` is ``None`` (zero: an independence test) or one running
    prediction per path (a :class:`SamplePath` or array on the same grid).
    Accepts single paths or ensembles; ensembles are pooled, with statistic
    the mean of ``cross_i - predicted_i``.

    The null variance of a realized covariation is estimated per path by
    ``sum (dX dY)^2 - sum dP^2``, which for Gaussian increments is unbiased
    for ``sum (sigma_X^2 sigma_Y^2 + sigma_XY^2) dt^2``.
    """
    angles = _as_list(angles)
    radials = _as_list(radial_components)
    if len(angles) != len(radials):
        raise ValueError("need one radial component per angle path")
    if predicted is None:
        preds = [None] * len(angles)
    else:
        preds = _as_list(predicted) if not isinstance(predicted, np.ndarray) else [predicted]
        if len(preds) != len(angles):
            raise ValueError("need one prediction per path")
    diffs = np.empty(len(angles))
    var = np.empty(len(angles))
    cross_tot = pred_tot = 0.0
    rel = np.empty(len(angles))
    for i, (a, r, pr) in enumerate(zip(angles, radials, preds)):
        if a.grid != r.grid:
            raise GridMismatch(f"path {i}: {a.grid} vs {r.grid}")
        prod = np.diff(a.values) * np.diff(r.values)
        c = float(np.sum(prod))
        if pr is None:
            pv, dp2 = 0.0, 0.0
        else:
            pr = _values(pr)
            if pr.shape != a.values.shape:
                raise GridMismatch(f"path {i}: prediction has shape {pr.shape}")
            pv = float(pr[-1] - pr[0])
            dp2 = float(np.sum(np.diff(pr) ** 2))
        diffs[i] = c - pv
        var[i] = max(float(np.sum(prod * prod)) - dp2, 0.0)
        cross_tot += c
        pred_tot += pv
        rel[i] = c / pv - 1.0 if pv != 0 else math.nan
    n = len(angles)
    stat = float(np.sum(diffs) / n)
    se = float(math.sqrt(np.sum(var)) / n)
    detail = {"n_paths": n, "realized_cross": cross_tot / n, "predicted_cross": pred_tot / n}
    if predicted is not None and pred_tot != 0:
        detail["relative_error"] = relative_error(cross_tot, pred_tot)
        detail["max_path_relative_error"] = float(np.nanmax(np.abs(rel)))
    return z_report(name, stat, se, alpha, detail=detail)


def time_changed_bm(tc, rng: np.random.Generator) -> np.ndarray:
    """Brownian motion sampled exactly at the clock times ``tc.values``."""
    inc = np.sqrt(np.diff(tc.values)) * rng.standard_normal(len(tc.values) - 1)
    out = np.zeros(len(tc.values))
    out[1:] = np.cumsum(inc)
    return out


def rescaled_driver(time_changed: SamplePath, tc) -> SamplePath:
    """``gamma_t = int_0^t J_s^{-1/2} d(beta_rho)_s`` with ``J`` the clock rate."""
    j = np.diff(tc.values) / tc.grid.dt
    if np.any(~(j > 0)):
        raise FlatClock("clock rate vanishes; rescaling undefined", step=int(np.argmax(~(j > 0))))
    g = np.zeros(len(j) + 1)
    g[1:] = np.cumsum(np.diff(time_changed.values) / np.sqrt(j))
    return SamplePath(time_changed.grid, g, time_changed.seed)


def timechange_validators(time_changed, tcs, independent_marts, alpha: float = ALPHA,
                          qv_tolerance: float = 0.05, name: str = "timechange") -> TestReport:
    """Numerical checks of three facts about time-changed Brownian motion.

    ``time_changed`` holds paths of ``beta_{rho_t}`` on the real grid, one per
    clock in ``tcs``; ``independent_marts`` are martingales adapted to the
    clock's own filtration, so independent of ``beta``.

    ``qv``
        pooled realized QV of ``beta_rho`` against ``rho_t`` (relative error
        within ``qv_tolerance``; a deterministic check);
    ``gamma_bm``
        the rescaled driver ``gamma`` passes :func:`bm_conformance_test`;
    ``cross``
        ``[eta, gamma] = 0`` by :func:`independence_cross_test`.

    The two hypothesis tests run at ``alpha / 2`` each, so the combined
    p-value ``min(1, 2 * min p)`` is a level-``alpha`` test.
    """
    xs, cs, etas = _as_list(time_changed), _as_list(tcs), _as_list(independent_marts)
    if not (len(xs) == len(cs) == len(etas)):
        raise ValueError("need matching numbers of paths, clocks and martingales")
    qv_tot = rho_tot = var = 0.0
    for x, tc in zip(xs, cs):
        if x.grid != tc.grid:
            raise GridMismatch(f"{x.grid} vs {tc.grid}")
        qv_tot += realized_qv(x).total
        rho_tot += float(tc.values[-1])
        var += 2.0 * float(np.sum(np.diff(tc.values) ** 2))
    rel = relative_error(qv_tot, rho_tot)
    z = (qv_tot - rho_tot) / math.sqrt(var) if var > 0 else math.nan
    qv = check_report(f"{name}.qv", rel, qv_tolerance, null_scale=math.sqrt(var) / rho_tot,
                      detail={"z_score_pooled": z, "p_value_pooled": two_sided_p(z)})
    gammas = [rescaled_driver(x, tc) for x, tc in zip(xs, cs)]
    gamma_bm = bm_conformance_test(gammas, alpha / 2, name=f"{name}.gamma_bm")
    cross = independence_cross_test(etas, gammas, None, alpha / 2, name=f"{name}.cross")
    comps = (qv, gamma_bm, cross)
    return TestReport(name=name, statistic=rel, null_scale=qv.null_scale,
                      z_score=cross.z_score,
                      p_value=_bonferroni(np.array([gamma_bm.p_value, cross.p_value])),
                      passed=all(c.passed for c in comps), alpha=alpha, components=comps)


def ks_two_sample(sample_a, sample_b, alpha: float = ALPHA,
                  name: str = "ks_two_sample") -> TestReport:
    """Two-sample Kolmogorov-Smirnov with the asymptotic p-value."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if len(a) < MIN_SAMPLES or len(b) < MIN_SAMPLES:
        raise TooFewSamples(f"ks_two_sample needs >= {MIN_SAMPLES} values per sample")
    res = sps.ks_2samp(a, b, method="asymp")
    d, p = float(res.statistic), float(res.pvalue)
    # scale of D under the null: sqrt((n+m)/(n m))
    scale = math.sqrt((len(a) + len(b)) / (len(a) * len(b)))
    return TestReport(name=name, statistic=d, null_scale=scale, z_score=d / scale, p_value=p,
                      passed=bool(p >= alpha), alpha=alpha)

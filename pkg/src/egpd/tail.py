"""Return levels, the kappa = 1 likelihood-ratio test, threshold-stability
profiling and QQ diagnostics with bootstrap tolerance bands.

Return levels are obtained by generic quantile inversion of the fitted
family (never from family-specific algebra), so one code path serves all
four families and stays consistent with ``models.cdf`` by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import special as _sp

from .fitting import (
    ExcessSample,
    FitError,
    FitOptions,
    FitResult,
    fit_mle,
    log_likelihood,
)
from .models import ModelFamily, ModelParams, quantile
from .special import std_normal_quantile

__all__ = [
    "LrtResult",
    "QQTable",
    "ReturnLevelEstimate",
    "SelectionResult",
    "ThresholdProfile",
    "ThresholdRow",
    "lrt_kappa",
    "lrt_nested",
    "qq_data",
    "return_level",
    "return_level_se",
    "select_threshold",
    "threshold_profile",
]


# ---------------------------------------------------------------------------
# return levels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReturnLevelEstimate:
    """Level exceeded on average once every T observations."""

    T: float
    value: float
    std_error: float | None
    ci: tuple | None
    method: str = "delta"


def _exceedance_quantile(params: ModelParams, T: float, zeta_u: float) -> float:
    if T * zeta_u <= 1.0:
        raise ValueError(
            f"return level below threshold: T*zeta_u = {T * zeta_u:.6g} <= 1"
        )
    return float(quantile(1.0 - 1.0 / (T * zeta_u), params))


def return_level(
    fit: FitResult,
    T: float,
    zeta_u: float,
    u: float,
    level: float = 0.95,
) -> ReturnLevelEstimate:
    """T-observation return level u + F^{-1}(1 - 1/(T*zeta_u)).

    A delta-method standard error and Wald interval are attached whenever
    the fit carries a covariance matrix.
    """
    x_T = u + _exceedance_quantile(fit.params, T, zeta_u)
    se = ci = None
    if fit.covariance is not None:
        se = return_level_se(fit, T, zeta_u, u)
        z = float(std_normal_quantile(0.5 + level / 2.0))
        ci = (x_T - z * se, x_T + z * se)
    return ReturnLevelEstimate(T=float(T), value=x_T, std_error=se, ci=ci)


def return_level_se(fit: FitResult, T: float, zeta_u: float, u: float) -> float:
    """Delta-method standard error sqrt(g' Cov g) of the return level.

    g is the central-difference gradient of the return level with respect
    to the fitted parameters on their natural scale.
    """
    if fit.covariance is None:
        raise ValueError("fit carries no covariance matrix")
    names = fit.param_names
    theta = np.array([getattr(fit.params, n) for n in names])
    family = fit.params.family

    def x_T_at(vals) -> float:
        full = {"kappa": 1.0, "sigma": None, "xi": None}
        for n, v in zip(names, vals):
            full[n] = v
        params = ModelParams(family, full["kappa"], full["sigma"], full["xi"])
        return u + _exceedance_quantile(params, T, zeta_u)

    grad = np.empty(theta.size)
    h = 1e-5 * np.maximum(1.0, np.abs(theta))
    for i in range(theta.size):
        step = np.zeros(theta.size)
        step[i] = h[i]
        # keep sigma/kappa positive if the step would cross zero
        if theta[i] - h[i] <= 0 and names[i] != "xi":
            step[i] = theta[i] / 2.0
        grad[i] = (x_T_at(theta + step) - x_T_at(theta - step)) / (2.0 * step[i])
    var = float(grad @ fit.covariance @ grad)
    return float(np.sqrt(max(var, 0.0)))


# ---------------------------------------------------------------------------
# likelihood-ratio tests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LrtResult:
    """Generalised likelihood-ratio test between nested fits."""

    lambda_stat: float
    p_value: float
    df: int
    fit_null: object
    fit_alt: object


def _chi2_sf(x: float, df: int) -> float:
    return float(_sp.gammaincc(df / 2.0, x / 2.0))


def _lambda_from_logliks(ll_alt: float, ll_null: float) -> float:
    lam = 2.0 * (ll_alt - ll_null)
    if lam < -1e-6:
        raise FitError(
            f"nested fits are inconsistent: alternative log likelihood "
            f"{ll_alt:.6f} below null {ll_null:.6f}"
        )
    return max(lam, 0.0)


def lrt_kappa(
    sample: ExcessSample,
    family,
    options: FitOptions | None = None,
) -> LrtResult:
    """Test of the GP submodel (kappa = 1) against an extended family.

    The alternative search is seeded with the GP solution, so the statistic
    is nonnegative by construction; its null distribution is chi-squared
    with 1 degree of freedom.
    """
    family = ModelFamily.coerce(family)
    if family is ModelFamily.GP:
        raise ValueError("alternative family must be one of the extended models")
    options = options or FitOptions()
    fit_null = fit_mle(sample, ModelFamily.GP, options)
    alt_options = replace(
        options,
        gp_prestart=False,
        extra_starts=tuple(options.extra_starts)
        + ((1.0, fit_null.params.sigma, fit_null.params.xi),),
    )
    fit_alt = fit_mle(sample, family, alt_options)
    lam = _lambda_from_logliks(fit_alt.loglik, fit_null.loglik)
    return LrtResult(lam, _chi2_sf(lam, 1), 1, fit_null, fit_alt)


def lrt_nested(fit_alt, fit_null, df: int | None = None) -> LrtResult:
    """Likelihood-ratio test between two already-computed nested fits.

    ``df`` defaults to the difference in the number of free parameters.
    """
    if df is None:
        df = len(fit_alt.param_names) - len(fit_null.param_names)
    if df <= 0:
        raise ValueError("alternative must have more free parameters than the null")
    lam = _lambda_from_logliks(fit_alt.loglik, fit_null.loglik)
    return LrtResult(lam, _chi2_sf(lam, df), df, fit_null, fit_alt)


# ---------------------------------------------------------------------------
# threshold stability profiling
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ThresholdRow:
    """Per-threshold summary inside a :class:`ThresholdProfile`."""

    u: float
    n_u: int
    zeta_hat: float
    ok: bool
    message: str = ""
    fit: FitResult | None = None
    gp_fit: FitResult | None = None
    kappa_hat: float = np.nan
    kappa_ci: tuple = (np.nan, np.nan)
    sigma_star: float = np.nan
    sigma_star_ci: tuple = (np.nan, np.nan)
    xi_hat: float = np.nan
    xi_ci: tuple = (np.nan, np.nan)
    lrt_p: float = np.nan
    return_levels: dict = None


@dataclass(eq=False)
class ThresholdProfile:
    """Fits, stability quantities and LRT p-values along a threshold grid."""

    family: ModelFamily
    grid: np.ndarray
    T_list: tuple
    level: float
    rows: list


def _wald_ci(est: float, se: float, z: float) -> tuple:
    return (est - z * se, est + z * se)


def _row_from_fits(sample, family, fit, gp_fit, T_list, z) -> ThresholdRow:
    u = sample.threshold
    row = ThresholdRow(u=u, n_u=sample.n_u, zeta_hat=sample.zeta_hat, ok=True)
    row.fit = fit
    row.gp_fit = gp_fit
    p = fit.params
    row.xi_hat = p.xi
    row.sigma_star = p.sigma - p.xi * u
    row.kappa_hat = p.kappa

    if fit.covariance is not None:
        names = list(fit.param_names)
        isig, ixi = names.index("sigma"), names.index("xi")
        cov = fit.covariance
        se_xi = np.sqrt(cov[ixi, ixi])
        var_star = cov[isig, isig] + u**2 * cov[ixi, ixi] - 2 * u * cov[isig, ixi]
        se_star = np.sqrt(max(var_star, 0.0))
        row.xi_ci = _wald_ci(p.xi, se_xi, z)
        row.sigma_star_ci = _wald_ci(row.sigma_star, se_star, z)
        if "kappa" in names:
            ik = names.index("kappa")
            se_log_kappa = np.sqrt(cov[ik, ik]) / p.kappa
            row.kappa_ci = (
                p.kappa * np.exp(-z * se_log_kappa),
                p.kappa * np.exp(z * se_log_kappa),
            )

    if family is ModelFamily.GP:
        row.kappa_hat = 1.0
        row.kappa_ci = (1.0, 1.0)
    elif gp_fit is not None:
        lam = _lambda_from_logliks(fit.loglik, gp_fit.loglik)
        row.lrt_p = _chi2_sf(lam, 1)

    row.return_levels = {}
    for T in T_list:
        try:
            row.return_levels[T] = return_level(fit, T, sample.zeta_hat, u)
        except ValueError as exc:
            row.return_levels[T] = None
            row.message = (row.message + f" T={T}: {exc};").strip()
    return row


def threshold_profile(
    data,
    grid,
    family,
    T_list=(),
    level: float = 0.95,
    options: FitOptions | None = None,
) -> ThresholdProfile:
    """Fit the family above every threshold of an increasing grid.

    Each row records the fitted shape with a Wald interval on the log
    scale, the modified scale sigma* = sigma - xi*u with its interval, the
    tail index interval, the p-value of the kappa = 1 test against the GP
    submodel and return-level estimates for each requested T.  Rows whose
    fit fails are flagged, never dropped.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("threshold grid is empty")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("threshold grid must be strictly increasing")
    family = ModelFamily.coerce(family)
    options = options or FitOptions()
    data = np.asarray(data, dtype=float)
    z = float(std_normal_quantile(0.5 + level / 2.0))

    rows = []
    for u in grid:
        sample = ExcessSample.from_data(data, u)
        try:
            if family is ModelFamily.GP:
                fit = fit_mle(sample, family, options)
                gp_fit = fit
            else:
                lrt = lrt_kappa(sample, family, options)
                gp_fit, fit = lrt.fit_null, lrt.fit_alt
            rows.append(_row_from_fits(sample, family, fit, gp_fit, T_list, z))
        except (FitError, ValueError) as exc:
            rows.append(
                ThresholdRow(
                    u=float(u),
                    n_u=sample.n_u,
                    zeta_hat=sample.zeta_hat,
                    ok=False,
                    message=str(exc),
                    return_levels={T: None for T in T_list},
                )
            )
    return ThresholdProfile(
        family=family, grid=grid, T_list=tuple(T_list), level=level, rows=rows
    )


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of the lowest-GP-compatible-threshold rule."""

    found: bool
    threshold: float | None
    alpha: float
    p_values: tuple
    thresholds: tuple
    reason: str


def select_threshold(profile: ThresholdProfile, alpha: float = 0.05) -> SelectionResult:
    """Lowest threshold whose kappa = 1 test is not rejected there nor at
    any higher threshold.

    Rows with failed fits carry no p-value and do not block the rule; the
    p-value trace is returned either way.
    """
    if not profile.rows:
        raise ValueError("profile has no rows")
    ps = tuple(row.lrt_p for row in profile.rows)
    us = tuple(row.u for row in profile.rows)
    ok_from_here = True
    chosen = None
    for row in reversed(profile.rows):
        if np.isfinite(row.lrt_p):
            if row.lrt_p < alpha:
                ok_from_here = False
            elif ok_from_here:
                chosen = row.u
    if chosen is None:
        return SelectionResult(
            False, None, alpha, ps, us, "no GP-compatible threshold found"
        )
    return SelectionResult(
        True,
        chosen,
        alpha,
        ps,
        us,
        f"lowest threshold with p >= {alpha} here and above",
    )


# ---------------------------------------------------------------------------
# QQ diagnostics
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class QQTable:
    """Quantile-quantile data on the excess scale with tolerance bands."""

    probabilities: np.ndarray
    model_quantiles: np.ndarray
    observed: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    n_boot: int
    low_boot: bool  # set when n_boot < 100 makes the bands unreliable


def qq_data(
    fit: FitResult,
    sample: ExcessSample,
    n_boot: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> QQTable:
    """Ordered excesses against fitted quantiles at positions i/(n_u + 1),
    with pointwise order-statistic tolerance bounds from ``n_boot``
    parametric bootstrap samples of the fitted model.
    """
    n = sample.n_u
    if n == 0:
        raise ValueError("empty sample")
    probs = np.arange(1, n + 1) / (n + 1.0)
    model_q = quantile(probs, fit.params)
    observed = np.sort(sample.excesses)

    rng = np.random.Generator(np.random.Philox(key=int(seed) % (1 << 64)))
    draws = quantile(rng.random((int(n_boot), n)), fit.params)
    draws.sort(axis=1)
    lo_q, hi_q = (1.0 - level) / 2.0, (1.0 + level) / 2.0
    lower = np.quantile(draws, lo_q, axis=0)
    upper = np.quantile(draws, hi_q, axis=0)
    return QQTable(
        probabilities=probs,
        model_quantiles=np.asarray(model_q),
        observed=observed,
        lower=lower,
        upper=upper,
        level=level,
        n_boot=int(n_boot),
        low_boot=n_boot < 100,
    )

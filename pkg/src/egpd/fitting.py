"""Maximum likelihood fitting of excess samples.

Estimation runs a derivative-free Nelder-Mead search on the transformed
parameter vector (log kappa, log sigma, xi) so positivity constraints are
built in; support violations (an excess beyond sigma/|xi| when xi < 0)
return -inf log likelihood and are thereby rejected.  Multi-start jitter,
observed-information standard errors, profile-likelihood intervals and
multi-group fits with parameter pooling are provided on top of the same
core search.

All fits are pure functions of (sample, options): the restart jitter is
drawn from a counter-based generator keyed by ``options.seed``, so repeated
calls give bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize

from .models import ModelFamily, ModelParams, _negloglik, log_density
from .special import reg_inc_gamma_lower_inv

__all__ = [
    "ExcessSample",
    "FitError",
    "FitOptions",
    "FitResult",
    "PooledFitResult",
    "PoolingScheme",
    "ProfileInterval",
    "fit_mle",
    "fit_pooled",
    "log_likelihood",
    "profile_ci",
    "standard_errors",
]


class FitError(RuntimeError):
    """Raised when a fit cannot be carried out or never converges.

    ``best`` carries the best-so-far diagnostics when any search ran.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True, eq=False)
class ExcessSample:
    """Threshold excesses x_i - u together with the exceedance counts.

    ``n_total`` is the size of the original sample the exceedances were
    taken from; the empirical exceedance probability is ``zeta_hat``.
    """

    threshold: float
    excesses: np.ndarray
    n_total: int

    def __post_init__(self):
        exc = np.asarray(self.excesses, dtype=float)
        object.__setattr__(self, "excesses", exc)
        if exc.ndim != 1:
            raise ValueError("excesses must be a 1-d vector")
        if exc.size and (not np.all(np.isfinite(exc)) or np.any(exc <= 0)):
            raise ValueError("excesses must be finite and strictly positive")
        if self.n_total < exc.size:
            raise ValueError("n_total cannot be smaller than the number of excesses")

    @classmethod
    def from_data(cls, data, threshold: float) -> "ExcessSample":
        data = np.asarray(data, dtype=float)
        if not np.all(np.isfinite(data)):
            raise ValueError("data must be finite")
        exc = data[data > threshold] - threshold
        return cls(threshold=float(threshold), excesses=exc, n_total=data.size)

    @property
    def n_u(self) -> int:
        return int(self.excesses.size)

    @property
    def zeta_hat(self) -> float:
        return self.n_u / self.n_total


@dataclass(frozen=True)
class FitOptions:
    """Controls for the Nelder-Mead multi-start search."""

    n_restarts: int = 5
    seed: int = 0
    min_exceedances: int = 5
    xatol: float = 1e-8
    fatol: float = 1e-9
    max_iter: int = 2000
    gp_prestart: bool = True  # seed EGP searches from the GP solution
    extra_starts: tuple = ()  # extra (kappa, sigma, xi) start triples
    compute_uncertainty: bool = True  # attach observed-information SEs


@dataclass(frozen=True)
class PoolingScheme:
    """Sharing pattern across groups for each parameter.

    Each of ``kappa``, ``sigma``, ``xi`` is either ``"shared"`` (one value
    for all groups) or ``"free"`` (one value per group).
    """

    kappa: str = "shared"
    sigma: str = "shared"
    xi: str = "shared"

    def __post_init__(self):
        for name in ("kappa", "sigma", "xi"):
            if getattr(self, name) not in ("shared", "free"):
                raise ValueError(f"{name} must be 'shared' or 'free'")


@dataclass(eq=False)
class FitResult:
    """Maximum likelihood fit of a single excess sample."""

    params: ModelParams
    loglik: float
    param_names: tuple
    std_errors: np.ndarray | None
    covariance: np.ndarray | None
    converged: bool
    n_restarts_used: int
    hessian_ok: bool

    @property
    def estimates(self) -> np.ndarray:
        return np.array([getattr(self.params, n) for n in self.param_names])


@dataclass(eq=False)
class PooledFitResult:
    """Joint fit of several groups under a :class:`PoolingScheme`."""

    group_params: tuple
    loglik: float
    scheme: PoolingScheme
    param_names: tuple
    estimates: np.ndarray
    std_errors: np.ndarray | None
    covariance: np.ndarray | None
    converged: bool
    n_restarts_used: int
    hessian_ok: bool

    @property
    def n_free_params(self) -> int:
        return len(self.param_names)


def log_likelihood(params: ModelParams, sample: ExcessSample) -> float:
    """Sum of log densities over the excesses; -inf off the support."""
    if sample.n_u == 0:
        raise ValueError("log_likelihood of an empty sample is undefined")
    return float(np.sum(log_density(sample.excesses, params)))


# ---------------------------------------------------------------------------
# packed parameterisation shared by single and pooled fits
# ---------------------------------------------------------------------------


def _layout(family: ModelFamily, scheme: PoolingScheme, n_groups: int):
    """Packed layout: per-parameter blocks, kappa absent for the GP family.

    Returns (names, transforms, group_index) where ``group_index[g]`` maps
    group g to its (kappa, sigma, xi) positions in the packed vector
    (kappa position is None for GP).
    """
    names, transforms = [], []
    positions = {}
    has_kappa = family is not ModelFamily.GP
    for pname, trans in (("kappa", "log"), ("sigma", "log"), ("xi", "raw")):
        if pname == "kappa" and not has_kappa:
            continue
        if getattr(scheme, pname) == "shared" or n_groups == 1:
            positions[pname] = [len(names)] * n_groups
            names.append(pname)
            transforms.append(trans)
        else:
            positions[pname] = list(range(len(names), len(names) + n_groups))
            names.extend(f"{pname}[{g}]" for g in range(n_groups))
            transforms.extend([trans] * n_groups)
    group_index = [
        (
            positions["kappa"][g] if has_kappa else None,
            positions["sigma"][g],
            positions["xi"][g],
        )
        for g in range(n_groups)
    ]
    return tuple(names), tuple(transforms), group_index


def _to_natural(theta, transforms):
    out = np.array(theta, dtype=float)
    for i, t in enumerate(transforms):
        if t == "log":
            out[i] = np.exp(out[i])
    return out


def _to_transformed(values, transforms):
    out = np.array(values, dtype=float)
    for i, t in enumerate(transforms):
        if t == "log":
            out[i] = np.log(out[i])
    return out


def _group_params(natural, group_index, family):
    params = []
    for ik, isig, ixi in group_index:
        kappa = 1.0 if ik is None else natural[ik]
        params.append(ModelParams(family, kappa, natural[isig], natural[ixi]))
    return params


def _make_objective(samples, family, transforms, group_index):
    groups = [(s.excesses, float(np.max(s.excesses))) for s in samples]

    def negloglik(theta):
        natural = _to_natural(theta, transforms)
        total = 0.0
        for (ik, isig, ixi), (exc, exc_max) in zip(group_index, groups):
            kappa = 1.0 if ik is None else natural[ik]
            nll = _negloglik(exc, exc_max, family, kappa, natural[isig],
                             natural[ixi])
            if not np.isfinite(nll):
                return np.inf
            total += nll
        return total

    return negloglik


def _base_start(samples, family, scheme, transforms, group_index):
    """kappa = 1, sigma = mean excess, xi = 0, respecting the layout."""
    n_params = len(transforms)
    natural = np.empty(n_params)
    pooled_mean = float(np.mean(np.concatenate([s.excesses for s in samples])))
    for g, (ik, isig, ixi) in enumerate(group_index):
        if ik is not None:
            natural[ik] = 1.0
        if getattr(scheme, "sigma") == "free" and len(samples) > 1:
            natural[isig] = float(np.mean(samples[g].excesses))
        else:
            natural[isig] = pooled_mean
        natural[ixi] = 0.0
    return _to_transformed(natural, transforms)


def _jittered(natural_start, transforms, rng):
    out = np.array(natural_start, dtype=float)
    for i, t in enumerate(transforms):
        if t == "log":
            out[i] *= 1.0 + rng.uniform(-0.5, 0.5)
        else:
            out[i] += rng.uniform(-0.3, 0.3)
    return _to_transformed(out, transforms)


def _run_searches(objective, starts, options):
    best = None
    # inf objective values at rejected simplex vertices trip harmless
    # invalid-subtract warnings inside Nelder-Mead
    with np.errstate(invalid="ignore"):
        for theta0 in starts:
            res = minimize(
                objective,
                theta0,
                method="Nelder-Mead",
                options={
                    "xatol": options.xatol,
                    "fatol": options.fatol,
                    "maxiter": options.max_iter,
                    "maxfev": options.max_iter,
                },
            )
            if best is None or res.fun < best.fun:
                best = res
    return best, len(starts)


def _fit_packed(samples, family, scheme, options):
    family = ModelFamily.coerce(family)
    for s in samples:
        if s.n_u == 0:
            raise FitError("cannot fit an empty excess sample")
        if s.n_u < options.min_exceedances:
            raise FitError(
                f"only {s.n_u} exceedances, below the floor of "
                f"{options.min_exceedances}"
            )
        if s.n_u > 1 and np.ptp(s.excesses) == 0.0:
            raise FitError("degenerate sample: all excesses identical")

    names, transforms, group_index = _layout(family, scheme, len(samples))
    objective = _make_objective(samples, family, transforms, group_index)
    rng = np.random.Generator(np.random.Philox(key=int(options.seed) % (1 << 64)))

    base_t = _base_start(samples, family, scheme, transforms, group_index)
    starts = [base_t]
    if family is not ModelFamily.GP and options.gp_prestart:
        gp_fit = _fit_packed(
            samples,
            ModelFamily.GP,
            scheme,
            replace(options, n_restarts=0, gp_prestart=False, extra_starts=()),
        )
        gp_natural = gp_fit["natural"]
        _, gp_transforms, gp_index = _layout(ModelFamily.GP, scheme, len(samples))
        natural = np.empty(len(transforms))
        for (ik, isig, ixi), (gsig, gxi) in zip(
            group_index, [(i[1], i[2]) for i in gp_index]
        ):
            natural[ik] = 1.0
            natural[isig] = gp_natural[gsig]
            natural[ixi] = gp_natural[gxi]
        starts.append(_to_transformed(natural, transforms))
    for triple in options.extra_starts:
        kappa, sigma, xi = triple
        natural = np.empty(len(transforms))
        for ik, isig, ixi in group_index:
            if ik is not None:
                natural[ik] = kappa
            natural[isig] = sigma
            natural[ixi] = xi
        starts.append(_to_transformed(natural, transforms))
    base_natural = _to_natural(base_t, transforms)
    for _ in range(options.n_restarts):
        starts.append(_jittered(base_natural, transforms, rng))

    best, n_runs = _run_searches(objective, starts, options)
    if not np.isfinite(best.fun):
        raise FitError("no feasible parameter values found", best=best)
    if not best.success:
        raise FitError(
            f"optimiser failed to converge in {n_runs} runs: {best.message}",
            best=best,
        )
    natural = _to_natural(best.x, transforms)
    return {
        "natural": natural,
        "names": names,
        "transforms": transforms,
        "group_index": group_index,
        "loglik": -float(best.fun),
        "converged": bool(best.success),
        "n_runs": n_runs,
        "family": family,
    }


# ---------------------------------------------------------------------------
# observed information
# ---------------------------------------------------------------------------


def _packed_loglik_fn(samples, family, group_index):
    excess_arrays = [s.excesses for s in samples]

    def loglik(natural):
        total = 0.0
        for (ik, isig, ixi), exc in zip(group_index, excess_arrays):
            kappa = 1.0 if ik is None else natural[ik]
            try:
                params = ModelParams(family, kappa, natural[isig], natural[ixi])
            except ValueError:
                return -np.inf
            total += np.sum(log_density(exc, params))
        return total

    return loglik


def _numerical_hessian(fn, theta, rel_step=1e-4):
    """Central-difference Hessian on the natural scale.

    Steps shrink automatically when an evaluation leaves the support.
    Returns None when no finite Hessian could be formed.
    """
    theta = np.asarray(theta, dtype=float)
    k = theta.size
    for shrink in (1.0, 0.1, 0.01):
        h = rel_step * shrink * np.maximum(1.0, np.abs(theta))
        hess = np.empty((k, k))
        f0 = fn(theta)
        ok = np.isfinite(f0)
        for i in range(k):
            if not ok:
                break
            ei = np.zeros(k)
            ei[i] = h[i]
            fp, fm = fn(theta + ei), fn(theta - ei)
            if not (np.isfinite(fp) and np.isfinite(fm)):
                ok = False
                break
            hess[i, i] = (fp - 2.0 * f0 + fm) / h[i] ** 2
            for j in range(i + 1, k):
                ej = np.zeros(k)
                ej[j] = h[j]
                fpp, fpm = fn(theta + ei + ej), fn(theta + ei - ej)
                fmp, fmm = fn(theta - ei + ej), fn(theta - ei - ej)
                if not np.all(np.isfinite([fpp, fpm, fmp, fmm])):
                    ok = False
                    break
                hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (
                    4.0 * h[i] * h[j]
                )
        if ok:
            return hess
    return None


def _covariance_from_hessian(hess):
    """Invert the negative Hessian; None unless it is positive definite."""
    if hess is None:
        return None
    info = -hess
    try:
        np.linalg.cholesky(info)
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        return None
    return (cov + cov.T) / 2.0


def _attach_uncertainty(core, samples, options):
    if not options.compute_uncertainty:
        return None, None, True
    fn = _packed_loglik_fn(samples, core["family"], core["group_index"])
    hess = _numerical_hessian(fn, core["natural"])
    cov = _covariance_from_hessian(hess)
    if cov is None:
        return None, None, False
    return np.sqrt(np.diag(cov)), cov, True


# ---------------------------------------------------------------------------
# public fitting API
# ---------------------------------------------------------------------------


def fit_mle(
    sample: ExcessSample,
    family,
    options: FitOptions | None = None,
) -> FitResult:
    """Maximum likelihood fit of one excess sample.

    Searches on (log kappa, log sigma, xi) from the moment-based start
    (kappa=1, sigma=mean excess, xi=0), a GP-solution start for the
    extended families, and ``options.n_restarts`` jittered restarts; the
    highest log likelihood over all converged runs wins.
    """
    options = options or FitOptions()
    core = _fit_packed([sample], ModelFamily.coerce(family), PoolingScheme(), options)
    se, cov, hessian_ok = _attach_uncertainty(core, [sample], options)
    params = _group_params(core["natural"], core["group_index"], core["family"])[0]
    return FitResult(
        params=params,
        loglik=log_likelihood(params, sample),
        param_names=core["names"],
        std_errors=se,
        covariance=cov,
        converged=core["converged"],
        n_restarts_used=core["n_runs"],
        hessian_ok=hessian_ok,
    )


def fit_pooled(
    samples,
    family,
    scheme: PoolingScheme | None = None,
    options: FitOptions | None = None,
) -> PooledFitResult:
    """Joint fit of several groups under a parameter sharing pattern.

    Maximises the sum of the group log likelihoods; with a single group and
    any scheme this reduces exactly to :func:`fit_mle`.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("fit_pooled needs at least one group")
    scheme = scheme or PoolingScheme()
    options = options or FitOptions()
    core = _fit_packed(samples, ModelFamily.coerce(family), scheme, options)
    se, cov, hessian_ok = _attach_uncertainty(core, samples, options)
    group_params = tuple(
        _group_params(core["natural"], core["group_index"], core["family"])
    )
    loglik = sum(log_likelihood(p, s) for p, s in zip(group_params, samples))
    return PooledFitResult(
        group_params=group_params,
        loglik=loglik,
        scheme=scheme,
        param_names=core["names"],
        estimates=core["natural"].copy(),
        std_errors=se,
        covariance=cov,
        converged=core["converged"],
        n_restarts_used=core["n_runs"],
        hessian_ok=hessian_ok,
    )


def standard_errors(fit: FitResult, sample: ExcessSample):
    """Observed-information standard errors at the fitted parameters.

    The covariance is the inverse negative central-difference Hessian of
    the log likelihood on the natural (kappa, sigma, xi) scale.  Returns
    (std_errors, covariance); both are None when the Hessian is not
    negative definite at the fit.
    """
    family = fit.params.family
    names, _, group_index = _layout(family, PoolingScheme(), 1)
    fn = _packed_loglik_fn([sample], family, group_index)
    theta = np.array([getattr(fit.params, n) for n in names])
    cov = _covariance_from_hessian(_numerical_hessian(fn, theta))
    if cov is None:
        return None, None
    return np.sqrt(np.diag(cov)), cov


# ---------------------------------------------------------------------------
# profile likelihood intervals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProfileInterval:
    """Profile-likelihood interval; open flags mark unreached endpoints."""

    parameter: str
    level: float
    lo: float
    hi: float
    lo_open: bool = False
    hi_open: bool = False


def _chi2_quantile_1df(level: float) -> float:
    if not 0 <= level < 1:
        raise ValueError("level must be in [0, 1)")
    if level == 0:
        return 0.0
    return 2.0 * float(reg_inc_gamma_lower_inv(level, 0.5))


def profile_ci(
    sample: ExcessSample,
    family,
    which: str,
    level: float = 0.95,
    options: FitOptions | None = None,
    fit: FitResult | None = None,
) -> ProfileInterval:
    """Profile-likelihood confidence interval for one parameter.

    The endpoints are where the profile log likelihood has dropped by half
    the chi-squared(1) quantile of ``level`` below its maximum.  When the
    drop is not reached within the search range the endpoint is flagged
    open and set to the last value examined.
    """
    options = options or FitOptions()
    family = ModelFamily.coerce(family)
    if fit is None:
        fit = fit_mle(sample, family, options)
    names, transforms, group_index = _layout(family, PoolingScheme(), 1)
    if which not in names:
        raise ValueError(f"parameter {which!r} not in {names}")
    idx = names.index(which)
    mle = np.array([getattr(fit.params, n) for n in names])
    cutoff = 0.5 * _chi2_quantile_1df(level)
    if cutoff == 0.0:
        return ProfileInterval(which, level, mle[idx], mle[idx])

    free = [i for i in range(len(names)) if i != idx]
    free_transforms = [transforms[i] for i in free]
    excesses = sample.excesses

    def profile_ll(t_value: float) -> float:
        def obj(theta_free):
            natural = np.empty(len(names))
            natural[idx] = t_value
            vals = _to_natural(theta_free, free_transforms)
            for pos, v in zip(free, vals):
                natural[pos] = v
            ik, isig, ixi = group_index[0]
            kappa = 1.0 if ik is None else natural[ik]
            try:
                params = ModelParams(family, kappa, natural[isig], natural[ixi])
            except ValueError:
                return np.inf
            ll = np.sum(log_density(excesses, params))
            return -ll if np.isfinite(ll) else np.inf

        start = _to_transformed(mle[free], free_transforms)
        res = minimize(
            obj,
            start,
            method="Nelder-Mead",
            options={"xatol": options.xatol, "fatol": options.fatol,
                     "maxiter": options.max_iter, "maxfev": options.max_iter},
        )
        return -res.fun

    ll_target = fit.loglik - cutoff

    def g(t):
        return profile_ll(t) - ll_target

    se_scale = None
    if fit.std_errors is not None:
        se_scale = fit.std_errors[idx]
    if se_scale is None or not np.isfinite(se_scale) or se_scale == 0:
        se_scale = max(0.25 * abs(mle[idx]), 0.1)

    def search(direction: int):
        prev = mle[idx]
        for step in range(1, 41):
            if transforms[idx] == "log":
                # multiplicative stepping keeps positive parameters positive
                cand = mle[idx] * 1.35 ** (direction * step)
            else:
                cand = mle[idx] + direction * step * se_scale
            val = g(cand)
            if val < 0:
                return brentq(g, min(prev, cand), max(prev, cand), xtol=1e-8), False
            prev = cand
        return prev, True

    lo, lo_open = search(-1)
    hi, hi_open = search(+1)
    return ProfileInterval(which, level, lo, hi, lo_open, hi_open)

"""Distribution kernels for threshold excesses.

Four families are provided:

* ``GP``   -- generalised Pareto with scale ``sigma`` and tail index ``xi``;
  survival ``(1 + xi*x/sigma)**(-1/xi)`` on ``x > 0``.
* ``EGP1`` -- the GP distribution composed with a beta-type generator on the
  unit interval, adding a shape parameter ``kappa``.
* ``EGP2`` -- the law of ``sigma*(exp(xi*Z) - 1)/xi`` with ``Z ~ gamma(kappa, 1)``.
* ``EGP3`` -- the GP distribution function raised to the power ``kappa``.

All three extensions reduce exactly to the GP family at ``kappa = 1`` and
share its tail index, so ``xi`` keeps its usual interpretation (heavy tail
for ``xi > 0``, exponential decay at ``xi = 0``, finite upper end point
``sigma/|xi|`` for ``xi < 0``).

Every function here is pure and vectorised over the data argument; parameter
values are scalars held in :class:`ModelParams`.  Tail indices with
``|xi| < XI_ZERO_TOL`` are evaluated on the analytic ``xi -> 0`` branch.

The unit-interval generator distribution of each family is exposed as
:func:`fv_cdf`: the family CDF factorises as ``fv_cdf(gp_cdf(x))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .special import (
    reg_inc_beta,
    reg_inc_beta_inv,
    reg_inc_gamma_lower,
    reg_inc_gamma_lower_inv,
)
from scipy import special as _sp

__all__ = [
    "ModelFamily",
    "ModelParams",
    "XI_ZERO_TOL",
    "fv_cdf",
    "cdf",
    "survival",
    "log_density",
    "density",
    "quantile",
    "sample",
]

# |xi| below this is treated as xi = 0 (exponential-type limit branch).
XI_ZERO_TOL = 1e-6


class ModelFamily(str, Enum):
    """Closed enumeration of the supported excess distributions."""

    GP = "gp"
    EGP1 = "egp1"
    EGP2 = "egp2"
    EGP3 = "egp3"

    @classmethod
    def coerce(cls, value) -> "ModelFamily":
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower())


@dataclass(frozen=True)
class ModelParams:
    """Parameter triple (kappa, sigma, xi) plus the family tag.

    ``kappa`` is the extra shape parameter of the extended families and must
    equal 1 for the plain GP family.  ``sigma > 0`` is the scale in data
    units and ``xi`` the dimensionless tail index.
    """

    family: ModelFamily
    kappa: float
    sigma: float
    xi: float

    def __post_init__(self):
        object.__setattr__(self, "family", ModelFamily.coerce(self.family))
        for name in ("kappa", "sigma", "xi"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not np.isfinite(self.kappa) or self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not np.isfinite(self.xi):
            raise ValueError(f"xi must be finite, got {self.xi}")
        if self.family is ModelFamily.GP and self.kappa != 1.0:
            raise ValueError("GP family has kappa fixed at 1")

    @property
    def upper_support(self) -> float:
        """Upper end point of the support: sigma/|xi| if xi < 0, else inf."""
        if self.xi < -XI_ZERO_TOL:
            return self.sigma / abs(self.xi)
        return np.inf

    @property
    def xi_is_zero(self) -> bool:
        return abs(self.xi) < XI_ZERO_TOL


def _log1mexp(z):
    """log(1 - exp(-z)) for z >= 0.

    Exact for small z via expm1; for huge z the absolute error is below
    1e-16, immaterial inside log densities.
    """
    with np.errstate(divide="ignore"):
        return np.log(-np.expm1(-np.asarray(z, dtype=float)))


def _exp_scale(x, params: ModelParams):
    """Map x to the exponential scale z with x = sigma*expm1(xi*z)/xi.

    z coincides with x/sigma when xi ~ 0 and with log1p(xi*x/sigma)/xi
    otherwise.  Valid only where 1 + xi*x/sigma > 0.
    """
    x = np.asarray(x, dtype=float)
    if params.xi_is_zero:
        return x / params.sigma
    return np.log1p(params.xi * x / params.sigma) / params.xi


def fv_cdf(v, params: ModelParams):
    """CDF of the unit-interval generator variable of the family.

    The family CDF is the composition ``fv_cdf(gp_cdf(x; sigma, xi))``; at
    ``kappa = 1`` every generator reduces to the uniform(0, 1) law.
    """
    v = np.asarray(v, dtype=float)
    if np.any((v < 0) | (v > 1)):
        raise ValueError("fv_cdf requires 0 <= v <= 1")
    fam, kappa, xi = params.family, params.kappa, params.xi
    with np.errstate(divide="ignore"):
        neg_log_1mv = -np.log1p(-v)  # -log(1 - v), inf at v = 1
    if fam is ModelFamily.GP:
        out = v.copy()
    elif fam is ModelFamily.EGP3:
        out = v**kappa
    elif fam is ModelFamily.EGP2 or params.xi_is_zero:
        out = reg_inc_gamma_lower(neg_log_1mv, kappa)
    else:  # EGP1, xi != 0
        w = -np.expm1(-abs(xi) * neg_log_1mv)  # 1 - (1-v)^|xi|
        out = reg_inc_beta(w, kappa, 1.0 / abs(xi))
    return out[()] if out.ndim == 0 else out


def _kernel_cdf(z, params: ModelParams):
    """Family CDF as a function of the exponential scale z >= 0."""
    fam, kappa = params.family, params.kappa
    if fam is ModelFamily.GP:
        return -np.expm1(-z)
    if fam is ModelFamily.EGP3:
        return (-np.expm1(-z)) ** kappa
    if fam is ModelFamily.EGP2 or params.xi_is_zero:
        return reg_inc_gamma_lower(z, kappa)
    w = -np.expm1(-abs(params.xi) * z)
    return reg_inc_beta(w, kappa, 1.0 / abs(params.xi))


def _kernel_survival(z, params: ModelParams):
    """1 - _kernel_cdf(z), evaluated without cancellation."""
    fam, kappa = params.family, params.kappa
    if fam is ModelFamily.GP:
        return np.exp(-z)
    if fam is ModelFamily.EGP3:
        with np.errstate(divide="ignore"):
            return -np.expm1(kappa * np.log1p(-np.exp(-z)))
    if fam is ModelFamily.EGP2 or params.xi_is_zero:
        return _sp.gammaincc(kappa, z)
    # upper beta tail via the reflection I_w(a,b) = 1 - I_{1-w}(b,a)
    one_minus_w = np.exp(-abs(params.xi) * z)
    return reg_inc_beta(one_minus_w, 1.0 / abs(params.xi), kappa)


def _split_support(x, params: ModelParams):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    below = x <= 0
    above = x >= params.upper_support
    inside = ~(below | above)
    return x, below, above, inside


def cdf(x, params: ModelParams):
    """Distribution function; 0 below the support and 1 above it."""
    scalar = np.ndim(x) == 0
    xv, below, above, inside = _split_support(x, params)
    out = np.empty_like(xv)
    out[below] = 0.0
    out[above] = 1.0
    if np.any(inside):
        z = _exp_scale(xv[inside], params)
        out[inside] = _kernel_cdf(z, params)
    return out[0] if scalar else out


def survival(x, params: ModelParams):
    """Survival function 1 - cdf, accurate deep in the tail."""
    scalar = np.ndim(x) == 0
    xv, below, above, inside = _split_support(x, params)
    out = np.empty_like(xv)
    out[below] = 1.0
    out[above] = 0.0
    if np.any(inside):
        z = _exp_scale(xv[inside], params)
        out[inside] = _kernel_survival(z, params)
    return out[0] if scalar else out


def _log_density_inside(z, family, kappa, sigma, xi, xi_is_zero):
    """Log density on the exponential scale, for points inside the support."""
    xi_eff = 0.0 if xi_is_zero else xi
    base = -np.log(sigma) - (1.0 + xi_eff) * z
    with np.errstate(divide="ignore", invalid="ignore"):
        if family is ModelFamily.GP:
            return base
        if family is ModelFamily.EGP3:
            val = np.log(kappa) + base
            if kappa != 1.0:
                val = val + (kappa - 1.0) * _log1mexp(z)
            return val
        if family is ModelFamily.EGP2 or xi_is_zero:
            val = -float(_sp.gammaln(kappa)) + base
            if kappa != 1.0:
                val = val + (kappa - 1.0) * np.log(z)
            return val
        a = abs(xi)  # EGP1, xi != 0
        val = np.log(a) - float(_sp.betaln(kappa, 1.0 / a)) + base
        if kappa != 1.0:
            val = val + (kappa - 1.0) * _log1mexp(a * z)
        return val


def log_density(x, params: ModelParams):
    """Log of the density; -inf outside the open support (0, upper)."""
    scalar = np.ndim(x) == 0
    x, below, above, inside = _split_support(x, params)
    out = np.full_like(x, -np.inf)
    if inside.all():
        z = _exp_scale(x, params)
        out = np.asarray(
            _log_density_inside(
                z, params.family, params.kappa, params.sigma,
                params.xi, params.xi_is_zero,
            )
        )
    elif np.any(inside):
        z = _exp_scale(x[inside], params)
        out[inside] = _log_density_inside(
            z, params.family, params.kappa, params.sigma,
            params.xi, params.xi_is_zero,
        )
    return out[0] if scalar else out


def _negloglik(excesses, excess_max, family, kappa, sigma, xi):
    """Fast negative log likelihood for strictly positive excesses.

    Shares `_log_density_inside` with the public density so optimiser
    objective values and reported log likelihoods agree bit for bit.
    Returns +inf for invalid parameters or support violations.
    """
    if not (np.isfinite(kappa) and np.isfinite(sigma) and np.isfinite(xi)):
        return np.inf
    if kappa <= 0 or sigma <= 0:
        return np.inf
    xi_is_zero = abs(xi) < XI_ZERO_TOL
    if xi < -XI_ZERO_TOL and excess_max >= sigma / (-xi):
        return np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        if xi_is_zero:
            z = excesses / sigma
        else:
            z = np.log1p(xi * excesses / sigma) / xi
        ll = np.sum(_log_density_inside(z, family, kappa, sigma, xi, xi_is_zero))
    return -ll if np.isfinite(ll) else np.inf


def density(x, params: ModelParams):
    """Density function; 0 outside the support."""
    with np.errstate(over="ignore"):
        return np.exp(log_density(x, params))


def quantile(p, params: ModelParams):
    """Quantile function for 0 <= p < 1 (p = 1 allowed when xi < 0).

    Inverts the composition exactly: the generator variable is inverted
    with the matching incomplete-beta/gamma inverse and mapped through the
    GP quantile.
    """
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("quantile requires 0 <= p <= 1")
    if np.any(p == 1.0) and np.isinf(params.upper_support):
        raise ValueError("quantile at p = 1 is infinite for xi >= 0")
    fam, kappa, sigma, xi = params.family, params.kappa, params.sigma, params.xi

    with np.errstate(divide="ignore"):
        if fam is ModelFamily.GP:
            z = -np.log1p(-p)
        elif fam is ModelFamily.EGP3:
            # 1 - p**(1/kappa) without cancellation
            one_minus_v = -np.expm1(np.log(np.where(p > 0, p, 1.0)) / kappa)
            one_minus_v = np.where(p > 0, one_minus_v, 1.0)
            z = -np.log(one_minus_v)
        elif fam is ModelFamily.EGP2 or params.xi_is_zero:
            z = reg_inc_gamma_lower_inv(np.minimum(p, 1.0 - 1e-16), kappa)
            z = np.where(p == 1.0, np.inf, z)
        else:  # EGP1, xi != 0
            w = reg_inc_beta_inv(p, kappa, 1.0 / abs(xi))
            z = -np.log1p(-w) / abs(xi)

    if params.xi_is_zero:
        out = sigma * z
    else:
        with np.errstate(over="ignore"):
            out = sigma / xi * np.expm1(xi * z)
    return out[()] if np.ndim(out) == 0 else out


def sample(n: int, params: ModelParams, seed: int):
    """Draw ``n`` values by inverse transform of a seeded uniform stream.

    The stream is a counter-based Philox generator keyed by ``seed``, so a
    given (n, params, seed) triple always produces the same vector.
    """
    if n < 0:
        raise ValueError("sample size must be nonnegative")
    rng = np.random.Generator(np.random.Philox(key=int(seed) % (1 << 64)))
    u = rng.random(int(n))
    return quantile(u, params)

"""Regularised incomplete beta/gamma functions, their inverses and the
standard normal quantile.

Thin validating wrappers around ``scipy.special``; every distribution
kernel in this package routes through these so that domain errors are
raised eagerly instead of surfacing as NaNs deep inside a fit.
All functions are pure, operate in double precision and accept scalars
or arrays.
"""

from __future__ import annotations

import numpy as np
from scipy import special as _sp

__all__ = [
    "log_gamma",
    "log_beta",
    "reg_inc_beta",
    "reg_inc_beta_inv",
    "reg_inc_gamma_lower",
    "reg_inc_gamma_lower_inv",
    "std_normal_quantile",
]


def _validate(cond: np.ndarray | bool, msg: str) -> None:
    if not np.all(cond):
        raise ValueError(msg)


def log_gamma(a):
    """Natural log of the gamma function for a > 0."""
    a = np.asarray(a, dtype=float)
    _validate(a > 0, "log_gamma requires a > 0")
    return _sp.gammaln(a)[()] if a.ndim == 0 else _sp.gammaln(a)


def log_beta(a, b):
    """Natural log of the beta function for a, b > 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _validate((a > 0) & (b > 0), "log_beta requires a > 0 and b > 0")
    out = _sp.betaln(a, b)
    return out[()] if np.ndim(out) == 0 else out


def reg_inc_beta(x, a, b):
    """Regularised incomplete beta function I_x(a, b) on 0 <= x <= 1."""
    x = np.asarray(x, dtype=float)
    _validate((x >= 0) & (x <= 1), "reg_inc_beta requires 0 <= x <= 1")
    _validate(np.asarray(a) > 0, "reg_inc_beta requires a > 0")
    _validate(np.asarray(b) > 0, "reg_inc_beta requires b > 0")
    out = _sp.betainc(a, b, x)
    return out[()] if np.ndim(out) == 0 else out


def reg_inc_beta_inv(p, a, b):
    """Inverse of ``reg_inc_beta`` in its first argument.

    Exact at the endpoints p in {0, 1}.  Raises ``ArithmeticError`` if the
    underlying inversion fails to produce a finite value in [0, 1].
    """
    p = np.asarray(p, dtype=float)
    _validate((p >= 0) & (p <= 1), "reg_inc_beta_inv requires 0 <= p <= 1")
    _validate(np.asarray(a) > 0, "reg_inc_beta_inv requires a > 0")
    _validate(np.asarray(b) > 0, "reg_inc_beta_inv requires b > 0")
    out = _sp.betaincinv(a, b, p)
    if not np.all(np.isfinite(out) & (out >= 0) & (out <= 1)):
        raise ArithmeticError(
            f"incomplete beta inversion failed for p={p!r}, a={a!r}, b={b!r}"
        )
    return out[()] if np.ndim(out) == 0 else out


def reg_inc_gamma_lower(y, a):
    """Regularised lower incomplete gamma function P(a, y) for y >= 0."""
    y = np.asarray(y, dtype=float)
    _validate(y >= 0, "reg_inc_gamma_lower requires y >= 0")
    _validate(np.asarray(a) > 0, "reg_inc_gamma_lower requires a > 0")
    out = _sp.gammainc(a, y)
    return out[()] if np.ndim(out) == 0 else out


def reg_inc_gamma_lower_inv(p, a):
    """Inverse of ``reg_inc_gamma_lower`` in y.

    Defined for 0 <= p < 1; p = 1 is a domain error (the inverse is
    infinite), so callers must cap p below 1.
    """
    p = np.asarray(p, dtype=float)
    _validate((p >= 0) & (p < 1), "reg_inc_gamma_lower_inv requires 0 <= p < 1")
    _validate(np.asarray(a) > 0, "reg_inc_gamma_lower_inv requires a > 0")
    out = _sp.gammaincinv(a, p)
    if not np.all(np.isfinite(out) & (out >= 0)):
        raise ArithmeticError(
            f"incomplete gamma inversion failed for p={p!r}, a={a!r}"
        )
    return out[()] if np.ndim(out) == 0 else out


def std_normal_quantile(p):
    """Standard normal quantile (probit) for 0 < p < 1."""
    p = np.asarray(p, dtype=float)
    _validate((p > 0) & (p < 1), "std_normal_quantile requires 0 < p < 1")
    out = _sp.ndtri(p)
    return out[()] if np.ndim(out) == 0 else out

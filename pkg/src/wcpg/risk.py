"""Gaussian return distributions: CVaR in closed form and the 2-Wasserstein loss.

All functions broadcast over numpy arrays, so a batch of critic outputs can be
passed as a single :class:`GaussianReturn` whose fields are arrays.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy import special

VARIANCE_FLOOR = 1e-6
ALPHA_MIN, ALPHA_MAX = 0.01, 1.0
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class GaussianReturn(NamedTuple):
    mean: float | np.ndarray
    variance: float | np.ndarray

    @property
    def std(self):
        return np.sqrt(np.maximum(self.variance, VARIANCE_FLOOR))

    def validate(self, floor: float = VARIANCE_FLOOR) -> "GaussianReturn":
        mean = np.asarray(self.mean, dtype=np.float64)
        var = np.asarray(self.variance, dtype=np.float64)
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(var))):
            raise ValueError("return distribution has non-finite parameters")
        if np.any(var < floor):
            raise ValueError(f"variance below floor {floor}")
        return self


class RiskLevel(float):
    """A CVaR tail fraction restricted to ``[0.01, 1.0]``."""

    def __new__(cls, alpha):
        alpha = float(alpha)
        if not ALPHA_MIN <= alpha <= ALPHA_MAX:
            raise ValueError(f"alpha must lie in [{ALPHA_MIN}, {ALPHA_MAX}], got {alpha}")
        return super().__new__(cls, alpha)


def std_normal_pdf(x):
    x = np.asarray(x, dtype=np.float64)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def std_normal_cdf(x):
    x = np.asarray(x, dtype=np.float64)
    return special.ndtr(x)


def std_normal_ppf(p):
    return special.ndtri(np.asarray(p, dtype=np.float64))


def cvar_coefficient(alpha, kind: str = "ratio"):
    """Weight on the return standard deviation in the Gaussian CVaR.

    ``"ratio"`` is ``pdf(alpha) / cdf(alpha)``, evaluated at alpha itself.
    ``"standard"`` is the textbook lower-tail value ``pdf(ppf(alpha)) / alpha``,
    which is exactly 0 at alpha = 1.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if kind == "ratio":
        return std_normal_pdf(alpha) / std_normal_cdf(alpha)
    if kind == "standard":
        if np.any(alpha <= 0) or np.any(alpha > 1):
            raise ValueError("alpha must lie in (0, 1]")
        with np.errstate(invalid="ignore"):
            c = std_normal_pdf(std_normal_ppf(alpha)) / alpha
        return np.where(alpha >= 1.0, 0.0, c)
    raise ValueError(f"unknown CVaR coefficient {kind!r}")


def cvar_gaussian(z: GaussianReturn, alpha, kind: str = "ratio"):
    """``mean - C(alpha) * sqrt(variance)`` with the variance floored."""
    mean = np.asarray(z.mean, dtype=np.float64)
    out = mean - cvar_coefficient(alpha, kind) * np.sqrt(np.maximum(z.variance, VARIANCE_FLOOR))
    return out if out.ndim else float(out)


def cvar_gaussian_standard(z: GaussianReturn, alpha):
    mean = np.asarray(z.mean, dtype=np.float64)
    c = cvar_coefficient(alpha, "standard")
    # at alpha = 1 the tail is the whole distribution; return the mean bit-for-bit
    out = np.where(c == 0.0, mean, mean - c * np.sqrt(np.maximum(z.variance, VARIANCE_FLOOR)))
    return out if out.ndim else float(out)


def cvar_partials(z: GaussianReturn, alpha, kind: str = "ratio"):
    """Partial derivatives of :func:`cvar_gaussian` w.r.t. mean and variance."""
    var = np.maximum(np.asarray(z.variance, dtype=np.float64), VARIANCE_FLOOR)
    d_var = -cvar_coefficient(alpha, kind) / (2.0 * np.sqrt(var))
    d_mean = np.ones_like(d_var)
    if d_var.ndim == 0:
        return 1.0, float(d_var)
    return d_mean, d_var


def w2_gaussian(u: GaussianReturn, v: GaussianReturn):
    """Squared 2-Wasserstein distance between 1-D Gaussians.

    ``(mu1 - mu2)^2 + (sigma1 - sigma2)^2``, the scalar case of the
    trace formula.
    """
    du = np.asarray(u.mean, dtype=np.float64) - np.asarray(v.mean, dtype=np.float64)
    ds = np.sqrt(np.asarray(u.variance, dtype=np.float64)) - np.sqrt(np.asarray(v.variance, dtype=np.float64))
    out = du * du + ds * ds
    return out if out.ndim else float(out)

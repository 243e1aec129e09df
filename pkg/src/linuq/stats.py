"""Normal and chi-square helpers used throughout the package.

The normal CDF is evaluated through scipy's erfc-based ``ndtr`` (absolute
accuracy well below 1e-12) and quantiles through ``ndtri``; the chi-square
quantile inverts the regularized incomplete gamma function directly.
"""

import numpy as np
from scipy import special


def norm_cdf(t):
    """Standard normal CDF, vectorized."""
    return special.ndtr(t)


def norm_quantile(q):
    """Standard normal quantile function."""
    return special.ndtri(q)


def z_value(alpha):
    """Two-sided critical value z_{1-alpha/2}."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    return float(special.ndtri(1.0 - alpha / 2.0))


def chi2_quantile(prob, dof):
    """chi-square quantile via regularized incomplete gamma inversion."""
    if not 0.0 < prob < 1.0:
        raise ValueError(f"prob must be in (0, 1), got {prob}")
    if dof <= 0:
        raise ValueError(f"dof must be positive, got {dof}")
    return float(2.0 * special.gammaincinv(dof / 2.0, prob))


def mc_standard_error(p_hat, n):
    """Binomial standard error of an empirical proportion."""
    return float(np.sqrt(max(p_hat * (1.0 - p_hat), 1e-12) / n))

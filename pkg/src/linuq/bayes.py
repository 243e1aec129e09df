"""Operational Bayesian retrieval with exact bias and coverage diagnostics.

The maximum-a-posteriori estimate under a Gaussian prior is linear in the
data, so its bias, sampling variance and frequentist coverage all have
closed forms; those diagnostics are first-class functions here so they can
be unit-tested and evaluated over grids without Monte Carlo.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import SingularSystem
from .problem import whiten
from .stats import norm_cdf, z_value


@dataclass(frozen=True)
class PriorModel:
    """Gaussian prior N(mu_a, sigma_a) on the state vector."""

    mu_a: np.ndarray
    sigma_a: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu_a, dtype=float).ravel()
        sig = np.atleast_2d(np.asarray(self.sigma_a, dtype=float))
        object.__setattr__(self, "mu_a", mu)
        object.__setattr__(self, "sigma_a", sig)
        if sig.shape != (mu.size, mu.size):
            raise ValueError(
                f"sigma_a has shape {sig.shape}, expected ({mu.size}, {mu.size})"
            )
        try:
            scipy.linalg.cholesky(sig, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise ValueError("sigma_a must be positive definite") from exc

    @property
    def p(self):
        return self.mu_a.size


@dataclass(frozen=True)
class BayesResult:
    x_hat: np.ndarray
    theta_hat: float
    posterior_sd: float
    standard_error: float
    credible_interval: tuple
    gain_matrix: np.ndarray
    averaging_kernel: np.ndarray
    bias_multipliers: np.ndarray
    alpha: float


class BayesSetup:
    """Precomputed pieces of the posterior shared across repeated y draws.

    All quantities derive from the regularized normal matrix
    M = K' Sigma_eps^-1 K + Sigma_a^-1, factorized once by Cholesky (never
    inverted explicitly for the solve paths).
    """

    def __init__(self, problem, prior):
        if prior.p != problem.p:
            raise ValueError("prior dimension does not match the problem")
        self.problem = problem
        self.prior = prior
        wp, _ = whiten(problem)
        self.wp = wp
        p = problem.p
        cf_a = scipy.linalg.cho_factor(prior.sigma_a, lower=True)
        self.sigma_a_inv = scipy.linalg.cho_solve(cf_a, np.eye(p))
        fisher = wp.K_w.T @ wp.K_w
        M = fisher + self.sigma_a_inv
        try:
            self._cf_M = scipy.linalg.cho_factor(M, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise SingularSystem(
                "regularized normal matrix is not positive definite"
            ) from exc
        self.M = M
        self.u_h = scipy.linalg.cho_solve(self._cf_M, problem.h)
        self.posterior_var = float(problem.h @ self.u_h)
        v = wp.K_w @ self.u_h
        self.standard_error = float(np.sqrt(v @ v))
        self.posterior_sd = float(np.sqrt(self.posterior_var))
        # theta_hat = coef . y_w + const
        self.coef_w = v
        self.prior_pull = scipy.linalg.cho_solve(
            self._cf_M, self.sigma_a_inv @ prior.mu_a
        )
        self.theta_const = float(problem.h @ self.prior_pull)
        # m = (A_k' - I) h = K' Sigma^-1 K M^-1 h - h
        self.bias_multipliers = fisher @ self.u_h - problem.h

    def solve_state(self, y):
        """MAP state for one observation vector."""
        y_w = self.wp.whiten_obs(y)
        rhs = self.wp.K_w.T @ y_w
        return scipy.linalg.cho_solve(self._cf_M, rhs) + self.prior_pull

    def theta_hat(self, y):
        y_w = self.wp.whiten_obs(y)
        return float(self.coef_w @ y_w) + self.theta_const

    def theta_hat_whitened(self, y_w):
        return self.coef_w @ y_w + self.theta_const

    def gain_matrix(self):
        """G = M^-1 K' Sigma_eps^-1 (p x n), materialized on demand."""
        Kw_M = scipy.linalg.cho_solve(self._cf_M, self.wp.K_w.T)
        return scipy.linalg.solve_triangular(
            self.wp.chol_L, Kw_M.T, lower=True
        ).T

    def averaging_kernel(self):
        return self.gain_matrix() @ self.problem.K


def bayes_retrieve(problem, prior, y, alpha=0.05):
    """MAP retrieval with its credible interval and diagnostics."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    setup = BayesSetup(problem, prior)
    x_hat = setup.solve_state(y)
    theta = float(problem.h @ x_hat)
    z = z_value(alpha)
    half = z * setup.posterior_sd
    return BayesResult(
        x_hat=x_hat,
        theta_hat=theta,
        posterior_sd=setup.posterior_sd,
        standard_error=setup.standard_error,
        credible_interval=(theta - half, theta + half),
        gain_matrix=setup.gain_matrix(),
        averaging_kernel=setup.averaging_kernel(),
        bias_multipliers=setup.bias_multipliers,
        alpha=alpha,
    )


def bias_multipliers(problem, prior):
    """Vector m with bias(theta_hat) = m'(x - mu_a); depends on sigma_a only."""
    return BayesSetup(problem, prior).bias_multipliers


def bayes_bias(problem, prior, x_true):
    """Exact bias of the MAP functional estimate at a known true state."""
    x_true = np.asarray(x_true, dtype=float).ravel()
    if x_true.size != problem.p:
        raise ValueError(f"x_true has length {x_true.size}, expected {problem.p}")
    m = bias_multipliers(problem, prior)
    return float(m @ (x_true - prior.mu_a))


def bayes_coverage(bias, standard_error, posterior_sd, alpha):
    """Frequentist coverage of the credible interval at a given bias.

    Even in the bias, maximized at zero bias, strictly decreasing in |bias|.
    """
    if standard_error <= 0.0 or posterior_sd <= 0.0:
        raise ValueError("standard_error and posterior_sd must be positive")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    z = z_value(alpha)
    ratio = bias / standard_error
    width = z * posterior_sd / standard_error
    return float(norm_cdf(ratio + width) - norm_cdf(ratio - width))


def bias_distribution(problem, prior, generative):
    """Mean and variance of the bias when x ~ N(mu_x, sigma_x).

    Returns the pair (mean, variance); the variance is of the bias itself,
    not its square root.
    """
    m = bias_multipliers(problem, prior)
    mu_x = np.asarray(generative.mu_x, dtype=float).ravel()
    sigma_x = np.atleast_2d(np.asarray(generative.sigma_x, dtype=float))
    mean = float(m @ (mu_x - prior.mu_a))
    variance = float(m @ sigma_x @ m)
    return mean, variance

"""Inference problem definition, whitening and spectral analysis.

A :class:`LinearProblem` bundles the forward matrix, the noise covariance
and the functional weights.  Everything downstream of this module operates
on the whitened problem (identity noise covariance); the raw covariance is
only touched here.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import CholeskyFailure

DEFAULT_RANK_TOL = 1e-10


@dataclass(frozen=True)
class LinearProblem:
    """Linear Gaussian inverse problem y = K x + eps, functional theta = h'x.

    Parameters
    ----------
    K : (n, p) ndarray
        Forward operator.
    noise_cov : (n, n) ndarray
        Symmetric positive definite noise covariance (diagonal typical).
    h : (p,) ndarray
        Functional weights; must not be identically zero.
    labels : list of str, optional
        Names for the p state elements.
    """

    K: np.ndarray
    noise_cov: np.ndarray
    h: np.ndarray
    labels: list = field(default=None)

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        noise_cov = np.atleast_2d(np.asarray(self.noise_cov, dtype=float))
        h = np.asarray(self.h, dtype=float).ravel()
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "noise_cov", noise_cov)
        object.__setattr__(self, "h", h)
        n, p = K.shape
        if n < 1 or p < 1:
            raise ValueError("K must be a nonempty n x p matrix")
        if noise_cov.shape != (n, n):
            raise ValueError(
                f"noise_cov has shape {noise_cov.shape}, expected ({n}, {n})"
            )
        if h.shape != (p,):
            raise ValueError(f"h has length {h.size}, expected {p}")
        if not np.any(h != 0.0):
            raise ValueError("h must not be identically zero")
        if not np.allclose(noise_cov, noise_cov.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(noise_cov).max())):
            raise ValueError("noise_cov must be symmetric")
        if self.labels is not None and len(self.labels) != p:
            raise ValueError(f"labels has length {len(self.labels)}, expected {p}")

    @property
    def n(self):
        return self.K.shape[0]

    @property
    def p(self):
        return self.K.shape[1]


@dataclass(frozen=True)
class WhitenedProblem:
    """Problem after the noise-whitening transform.

    ``K_w = L^{-1} K`` where ``L L' = noise_cov``; the transformed noise has
    identity covariance by construction.
    """

    K_w: np.ndarray
    chol_L: np.ndarray
    h: np.ndarray
    labels: list = field(default=None)

    @property
    def n(self):
        return self.K_w.shape[0]

    @property
    def p(self):
        return self.K_w.shape[1]

    def whiten_obs(self, y):
        """Transform an observation vector into whitened coordinates."""
        y = np.asarray(y, dtype=float).ravel()
        if y.size != self.n:
            raise ValueError(f"y has length {y.size}, expected {self.n}")
        return scipy.linalg.solve_triangular(self.chol_L, y, lower=True)


@dataclass(frozen=True)
class SpectralSummary:
    """SVD-based diagnostics of the whitened forward operator."""

    singular_values: np.ndarray
    numeric_rank: int
    condition_number: float
    U: np.ndarray
    D: np.ndarray
    V: np.ndarray


def whiten(problem, y=None):
    """Whiten a problem (and optionally an observation).

    Returns ``(WhitenedProblem, y_w)``; ``y_w`` is None when no observation
    is supplied.  Raises :class:`CholeskyFailure` when the noise covariance
    is not positive definite.
    """
    try:
        L = scipy.linalg.cholesky(problem.noise_cov, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise CholeskyFailure(
            "noise_cov is not positive definite; check the problem file"
        ) from exc
    K_w = scipy.linalg.solve_triangular(L, problem.K, lower=True)
    wp = WhitenedProblem(K_w=K_w, chol_L=L, h=problem.h, labels=problem.labels)
    y_w = None if y is None else wp.whiten_obs(y)
    return wp, y_w


def spectral_summary(problem, rank_tol=DEFAULT_RANK_TOL):
    """Singular-value summary of the whitened operator.

    ``numeric_rank`` counts singular values above ``rank_tol`` relative to
    the largest one; the condition number is the ratio of the largest to the
    smallest singular value above that threshold.
    """
    if rank_tol <= 0.0:
        raise ValueError("rank_tol must be positive")
    wp, _ = whiten(problem)
    U, s, Vt = np.linalg.svd(wp.K_w, full_matrices=False)
    if s[0] == 0.0:
        numeric_rank = 0
        condition = np.inf
    else:
        above = s > rank_tol * s[0]
        numeric_rank = int(np.count_nonzero(above))
        condition = float(s[0] / s[above][-1]) if numeric_rank > 0 else np.inf
    return SpectralSummary(
        singular_values=s,
        numeric_rank=numeric_rank,
        condition_number=condition,
        U=U,
        D=np.diag(s),
        V=Vt.T,
    )


def apply_functional(h, x):
    """Inner product h'x with a length check."""
    h = np.asarray(h, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    if h.size != x.size:
        raise ValueError(f"length mismatch: h has {h.size}, x has {x.size}")
    return float(h @ x)


def uniform_average_weights(p, indices):
    """Weight vector averaging over ``indices`` with halved boundary weights.

    Interior members of the index subset get weight 1/(k-1) and the two
    boundary members 1/(2(k-1)), so the weights are strictly positive on the
    subset and sum to one.
    """
    indices = list(indices)
    k = len(indices)
    if k < 2:
        raise ValueError("need at least two supported indices")
    h = np.zeros(p)
    w = 1.0 / (k - 1)
    h[indices] = w
    h[indices[0]] = 0.5 * w
    h[indices[-1]] = 0.5 * w
    return h

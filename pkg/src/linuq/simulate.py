"""Synthetic problems and data: states, spatial fields, noise, observations.

The generator reproduces the structural features of a real sounding
retrieval at configurable scale: an exponentially decaying singular
spectrum with an optional null direction, a block-structured state
covariance (profile / pressure / albedo / aerosols), a deliberately
misspecified prior, and zero-mean Gaussian noise whose variance is
proportional to the mean signal in each spectral band.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import AssemblyNotPSD
from .problem import LinearProblem, uniform_average_weights


def as_rng(seed):
    """Accept an int, SeedSequence or Generator and return a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class GenerativeModel:
    """True single-sounding law x ~ N(mu_x, sigma_x)."""

    mu_x: np.ndarray
    sigma_x: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu_x, dtype=float).ravel()
        sig = np.atleast_2d(np.asarray(self.sigma_x, dtype=float))
        object.__setattr__(self, "mu_x", mu)
        object.__setattr__(self, "sigma_x", sig)
        if sig.shape != (mu.size, mu.size):
            raise ValueError(
                f"sigma_x has shape {sig.shape}, expected ({mu.size}, {mu.size})"
            )

    @property
    def p(self):
        return self.mu_x.size


@dataclass(frozen=True)
class NoiseModel:
    """Independent Gaussian noise with Var(eps_j) = c_b(j) * mean_signal_j."""

    band_of: np.ndarray
    band_constants: np.ndarray
    mean_signal: np.ndarray

    def __post_init__(self):
        band = np.asarray(self.band_of, dtype=int).ravel()
        const = np.asarray(self.band_constants, dtype=float).ravel()
        sig = np.asarray(self.mean_signal, dtype=float).ravel()
        object.__setattr__(self, "band_of", band)
        object.__setattr__(self, "band_constants", const)
        object.__setattr__(self, "mean_signal", sig)
        if band.size != sig.size:
            raise ValueError("band_of and mean_signal lengths differ")
        if const.size == 0 or np.any(const <= 0):
            raise ValueError("band constants must be positive")
        if np.any(sig <= 0):
            raise ValueError("mean_signal must be positive (apply the floor)")

    @property
    def variances(self):
        return self.band_constants[self.band_of] * self.mean_signal


MATERN_SMOOTHNESS = (0.5, 1.5, 2.5)


def matern_correlation(dist, nu, rho):
    """Matern correlation at half-integer smoothness 1/2, 3/2 or 5/2."""
    dist = np.asarray(dist, dtype=float)
    if rho <= 0:
        raise ValueError("range must be positive")
    t = dist / rho
    if np.isclose(nu, 0.5):
        return np.exp(-t)
    if np.isclose(nu, 1.5):
        a = np.sqrt(3.0) * t
        return (1.0 + a) * np.exp(-a)
    if np.isclose(nu, 2.5):
        a = np.sqrt(5.0) * t
        return (1.0 + a + a * a / 3.0) * np.exp(-a)
    raise ValueError(
        f"smoothness {nu} unsupported; use one of {MATERN_SMOOTHNESS}"
    )


@dataclass(frozen=True)
class SpatialModel:
    """Gaussian process over locations with cross-covariance
    C_kl(s_i, s_j) = sigma_x[k, l] * Matern(||s_i - s_j||; nu_kl, rho_kl)."""

    locations: np.ndarray
    matern_smoothness: np.ndarray
    matern_range: np.ndarray
    base: GenerativeModel

    def __post_init__(self):
        loc = np.atleast_2d(np.asarray(self.locations, dtype=float))
        nu = np.atleast_2d(np.asarray(self.matern_smoothness, dtype=float))
        rho = np.atleast_2d(np.asarray(self.matern_range, dtype=float))
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "matern_smoothness", nu)
        object.__setattr__(self, "matern_range", rho)
        p = self.base.p
        for name, mat in (("matern_smoothness", nu), ("matern_range", rho)):
            if mat.shape != (p, p):
                raise ValueError(f"{name} must be {p}x{p}")
            if not np.allclose(mat, mat.T):
                raise ValueError(f"{name} must be symmetric")
            if np.any(mat <= 0):
                raise ValueError(f"{name} entries must be positive")

    @property
    def n_locations(self):
        return self.locations.shape[0]

    @classmethod
    def from_element_params(cls, locations, nu, rho, base):
        """Per-element smoothness/range vectors; cross pairs use the smaller
        smoothness and the geometric-mean range."""
        nu = np.asarray(nu, dtype=float).ravel()
        rho = np.asarray(rho, dtype=float).ravel()
        nu_kl = np.minimum.outer(nu, nu)
        rho_kl = np.sqrt(np.multiply.outer(rho, rho))
        return cls(locations, nu_kl, rho_kl, base)


def _chol_with_jitter(cov, cap_rel=1e-8):
    """Cholesky factor with escalating diagonal jitter; returns (L, jitter)."""
    scale = float(np.max(np.diag(cov))) if cov.size else 0.0
    if scale <= 0.0:
        raise AssemblyNotPSD("covariance diagonal is not positive")
    jitter = 0.0
    while True:
        try:
            L = scipy.linalg.cholesky(
                cov + jitter * np.eye(cov.shape[0]) if jitter else cov,
                lower=True,
            )
            return L, jitter
        except scipy.linalg.LinAlgError:
            jitter = max(jitter * 10.0, 1e-12 * scale)
            if jitter > cap_rel * scale:
                raise AssemblyNotPSD(
                    f"covariance not PSD within jitter cap {cap_rel:g} * max diag"
                    " (check smoothness/range inputs)"
                ) from None


class SpatialSampler:
    """Assembles and factorizes the full cross-covariance once; cheap draws.

    The assembled system is (n_locations * p) square with location-major
    ordering.  The jitter applied during factorization is recorded in
    ``jitter_used``.
    """

    def __init__(self, spatial, jitter_cap_rel=1e-8):
        self.spatial = spatial
        p = spatial.base.p
        N = spatial.n_locations
        loc = spatial.locations
        D = np.linalg.norm(loc[:, None, :] - loc[None, :, :], axis=2)
        C = np.empty((N * p, N * p))
        cache = {}
        nu_m, rho_m = spatial.matern_smoothness, spatial.matern_range
        sig = spatial.base.sigma_x
        for k in range(p):
            for l in range(k, p):
                key = (nu_m[k, l], rho_m[k, l])
                corr = cache.get(key)
                if corr is None:
                    corr = matern_correlation(D, *key)
                    cache[key] = corr
                block = sig[k, l] * corr
                C[k::p, l::p] = block
                if l != k:
                    C[l::p, k::p] = block.T
        self.cov = C
        self._L, self.jitter_used = _chol_with_jitter(C, jitter_cap_rel)
        self._mean = np.tile(spatial.base.mu_x, N)

    def sample(self, seed):
        rng = as_rng(seed)
        z = rng.standard_normal(self._mean.size)
        draw = self._mean + self._L @ z
        return draw.reshape(self.spatial.n_locations, self.spatial.base.p)


def sample_state(gen, seed):
    """One draw from the single-sounding law, reproducible under the seed."""
    rng = as_rng(seed)
    if not np.any(gen.sigma_x):
        return gen.mu_x.copy()
    L, _ = _chol_with_jitter(gen.sigma_x)
    return gen.mu_x + L @ rng.standard_normal(gen.p)


def sample_grid(spatial, seed):
    """Joint draw of states over all locations (n_locations x p)."""
    return SpatialSampler(spatial).sample(seed)


def sample_noise(noise, seed):
    """Independent zero-mean Gaussian noise with the model variances."""
    rng = as_rng(seed)
    return np.sqrt(noise.variances) * rng.standard_normal(noise.band_of.size)


def observe(problem, x, noise_draw):
    """Forward map y = K x + eps."""
    x = np.asarray(x, dtype=float).ravel()
    eps = np.asarray(noise_draw, dtype=float).ravel()
    if x.size != problem.p:
        raise ValueError(f"x has length {x.size}, expected {problem.p}")
    if eps.size != problem.n:
        raise ValueError(f"noise has length {eps.size}, expected {problem.n}")
    return problem.K @ x + eps


# ---------------------------------------------------------------------------
# synthetic problem generation


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for the synthetic sounding-like problem family.

    ``decay`` is the per-index ratio of consecutive singular values; the
    last ``rank_deficiency`` singular values are collapsed to ~1e-13 of the
    top one.  ``functional_indices`` designates the averaged (profile)
    block; weights are uniform with halved boundary weights.  The prior is
    a controlled perturbation of the generative law: the mean is shifted by
    ``prior_mean_shift`` generative standard deviations along a seeded
    direction and the prior standard deviations are inflated by
    ``prior_sd_inflation``.
    """

    n: int
    p: int = 39
    sigma_top: float = 1.0
    decay: float = None
    rank_deficiency: int = 1
    functional_indices: tuple = None
    blocks: tuple = None
    snr: float = 20.0
    band_factors: tuple = (1.0, 1.4, 0.7)
    noise_mode: str = "signal"
    structured_modes: bool = True
    prior_mean_shift: float = 1.0
    prior_sd_inflation: float = 2.0
    signal_floor_rel: float = 1e-6

    def __post_init__(self):
        if self.n < self.p:
            raise ValueError("need n >= p")
        if self.rank_deficiency < 0 or self.rank_deficiency >= self.p:
            raise ValueError("rank_deficiency must be in [0, p)")
        if self.decay is None:
            # keep the decaying part well above the default rank tolerance
            span = max(self.p - 1 - self.rank_deficiency, 1)
            object.__setattr__(self, "decay", 10.0 ** (-8.0 / span))
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must be in (0, 1]")
        if self.functional_indices is None:
            k = min(20, self.p)
            object.__setattr__(self, "functional_indices", tuple(range(k)))
        if self.blocks is None:
            object.__setattr__(self, "blocks", _default_blocks(self.p, len(self.functional_indices)))
        if sum(self.blocks) != self.p:
            raise ValueError(f"blocks {self.blocks} do not sum to p={self.p}")


def _default_blocks(p, profile_len):
    rest = p - profile_len
    if rest <= 0:
        return (p,)
    pressure = 1 if rest >= 1 else 0
    albedo = min(6, max(rest - pressure - 1, 0))
    aerosol = rest - pressure - albedo
    blocks = [profile_len]
    for b in (pressure, albedo, aerosol):
        if b > 0:
            blocks.append(b)
    return tuple(blocks)


def _ar1_correlation(size, rho):
    idx = np.arange(size)
    return rho ** np.abs(np.subtract.outer(idx, idx))


def _haar(rng, rows, cols):
    """Haar-distributed orthonormal columns with a canonical sign."""
    Z = rng.standard_normal((rows, cols))
    Q, R = np.linalg.qr(Z)
    return Q * np.sign(np.diag(R))


def _cosine_basis(p):
    """Orthonormal DCT-II-style basis, columns ordered by frequency."""
    i = np.arange(p)
    B = np.cos(np.pi * np.outer(2 * i + 1, np.arange(p)) / (2.0 * p))
    B[:, 0] /= np.sqrt(p)
    B[:, 1:] *= np.sqrt(2.0 / p)
    return B


def _structured_right_factor(rng, p, window=4):
    """Frequency-ordered orthonormal factor with randomized mixing inside
    small frequency windows.

    Smooth state patterns load on the leading singular values and
    oscillatory ones on the trailing (weak or null) values, so a smooth
    averaging functional is nearly orthogonal to the weak directions, as
    in instrument Jacobians.
    """
    V = _cosine_basis(p)
    for start in range(0, p, window):
        stop = min(start + window, p)
        k = stop - start
        if k > 1:
            V[:, start:stop] = V[:, start:stop] @ _haar(rng, k, k)
    return V


_BLOCK_TEMPLATES = (
    # (mean_center, mean_spread, sd_lo, sd_hi, ar1_rho)
    (400.0, 8.0, 2.0, 8.0, 0.7),   # profile
    (970.0, 3.0, 1.2, 2.5, 0.5),   # pressure
    (0.2, 0.1, 0.005, 0.03, 0.3),  # albedo
    (-4.0, 1.0, 0.05, 0.5, 0.4),   # aerosols
)


def gen_problem(spec, seed):
    """Generate (LinearProblem, GenerativeModel, PriorModel) from the spec."""
    rng = as_rng(seed)
    n, p = spec.n, spec.p

    # forward operator with exponential spectrum and a controlled null space
    U = _haar(rng, n, p)
    V = (_structured_right_factor(rng, p) if spec.structured_modes
         else _haar(rng, p, p))
    sv = spec.sigma_top * spec.decay ** np.arange(p)
    d = spec.rank_deficiency
    if d > 0:
        sv[p - d:] = spec.sigma_top * 1e-13
    K = (U * sv) @ V.T

    h = uniform_average_weights(p, spec.functional_indices)

    # block-structured generative law
    mu_x = np.empty(p)
    sds = np.empty(p)
    corr = np.zeros((p, p))
    start = 0
    for bi, size in enumerate(spec.blocks):
        tmpl = _BLOCK_TEMPLATES[min(bi, len(_BLOCK_TEMPLATES) - 1)]
        center, spread, sd_lo, sd_hi, rho = tmpl
        sl = slice(start, start + size)
        mu_x[sl] = center + spread * rng.standard_normal(size) * 0.3
        sds[sl] = rng.uniform(sd_lo, sd_hi, size)
        corr[sl, sl] = _ar1_correlation(size, rho)
        start += size
    sigma_x = corr * np.outer(sds, sds)
    generative = GenerativeModel(mu_x=mu_x, sigma_x=sigma_x)

    # misspecified prior: shifted mean, inflated sd, simplified correlation
    direction = rng.standard_normal(p)
    direction /= np.linalg.norm(direction)
    mu_a = mu_x + spec.prior_mean_shift * sds * direction * np.sqrt(p / 3.0)
    sd_a = spec.prior_sd_inflation * sds
    corr_a = np.eye(p)
    size0 = spec.blocks[0]
    corr_a[:size0, :size0] = _ar1_correlation(size0, 0.4)
    sigma_a = corr_a * np.outer(sd_a, sd_a)
    from .bayes import PriorModel  # local import to avoid a cycle

    prior = PriorModel(mu_a=mu_a, sigma_a=sigma_a)

    noise = _noise_from(spec, K, mu_x)
    problem = LinearProblem(
        K=K,
        noise_cov=np.diag(noise.variances),
        h=h,
        labels=_default_labels(spec.blocks),
    )
    return problem, generative, prior


def _noise_from(spec, K, mu_x):
    raw = K @ mu_x
    mean_signal = np.abs(raw)
    floor = spec.signal_floor_rel * max(float(mean_signal.max()), 1e-30)
    mean_signal = np.maximum(mean_signal, floor)
    med = float(np.median(mean_signal))
    if spec.noise_mode == "white":
        # constant variance per band; whitening preserves the spectrum shape
        mean_signal = np.full_like(mean_signal, med)
    elif spec.noise_mode != "signal":
        raise ValueError(f"unknown noise_mode {spec.noise_mode!r}")
    n = mean_signal.size
    n_bands = len(spec.band_factors)
    band_of = np.minimum(np.arange(n) * n_bands // n, n_bands - 1)
    base = med / spec.snr ** 2
    band_constants = base * np.asarray(spec.band_factors)
    return NoiseModel(band_of=band_of, band_constants=band_constants,
                      mean_signal=mean_signal)


def build_noise_model(spec, problem, generative):
    """The NoiseModel matching a generated problem (deterministic)."""
    noise = _noise_from(spec, problem.K, generative.mu_x)
    if not np.allclose(noise.variances, np.diag(problem.noise_cov)):
        raise ValueError("problem noise covariance does not match the spec")
    return noise


_BLOCK_NAMES = ("co2", "pressure", "albedo", "aerosol")


def _default_labels(blocks):
    labels = []
    for bi, size in enumerate(blocks):
        name = _BLOCK_NAMES[min(bi, len(_BLOCK_NAMES) - 1)]
        labels.extend(f"{name}_{i + 1}" for i in range(size))
    return labels


def grid_locations(nx, ny, spacing_km=1.0):
    """Regular nx-by-ny grid of 2-D coordinates in km."""
    xs, ys = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    return np.column_stack([xs.ravel() * spacing_km, ys.ravel() * spacing_km])

"""Posterior class probabilities and the Bayes rule for zero-inflated rows.

A new observation splits into observed (positive) and truncated (zero)
coordinates.  Observed coordinates map to latent scale through the fitted
marginal transforms; the latent coordinates behind zeros follow a Gaussian
distribution conditioned on the observed latents and truncated above at the
estimated thresholds.  Two rules integrate the probit link over that
distribution: a Monte-Carlo average and a first-order (linear) rule that
plugs in the Monte-Carlo mean.  Only truncated coordinates carrying non-zero
direction weights are ever sampled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import log_ndtr, ndtr, ndtri_exp

from .errors import DataValidationError, DomainError
from .latentcorr import LatentCorrelation

__all__ = [
    "PosteriorRule",
    "ClassifierModel",
    "ConditionalTruncatedGaussian",
    "ObservationContext",
    "split_observation",
    "sample_truncated",
    "posterior_mc",
    "posterior_linear",
    "classify_observation",
    "predict_matrix",
]

GIBBS_BURN_IN = 100
SCALE_FLOOR = 1e-8
_JITTER = 1e-8


@dataclass(frozen=True)
class PosteriorRule:
    """Posterior evaluation rule: 'mc' or 'linear', with MC sample size."""

    kind: str = "linear"
    n_samples: int = 100

    def __post_init__(self):
        if self.kind not in ("mc", "linear"):
            raise DomainError("rule kind must be 'mc' or 'linear'")
        if self.n_samples < 1:
            raise DomainError("rule needs at least one MC sample")


@dataclass(frozen=True)
class ClassifierModel:
    """Everything prediction needs.

    ``beta`` is the sparse direction over covariates, ``delta_y`` the tuned
    intercept on latent scale, ``v_hat`` the conditional scale
    ``sqrt(max(1 - s21' S22^-1 s21, 1e-8))``, ``latent`` the fitted joint
    correlation (with thresholds), and ``transforms`` one marginal transform
    per covariate.
    """

    beta: np.ndarray
    delta_y: float
    v_hat: float
    latent: LatentCorrelation
    transforms: tuple
    rule: PosteriorRule = PosteriorRule()
    lam: float = float("nan")
    column_names: tuple = ()

    @property
    def n_features(self):
        return self.beta.shape[0]


@dataclass(frozen=True)
class ConditionalTruncatedGaussian:
    """Gaussian law of hidden latent coordinates, truncated above at ``upper``."""

    mu: np.ndarray
    gamma: np.ndarray
    upper: np.ndarray


def conditional_scale(latent):
    """Scale of the label's latent residual given all covariate latents."""
    s21 = latent.sigma21
    s22 = latent.sigma22
    quad = float(s21 @ np.linalg.solve(s22, s21))
    return float(np.sqrt(max(1.0 - quad, SCALE_FLOOR)))


def split_observation(x_new, model=None, n_features=None):
    """Partition a row into truncated (zero) and observed (positive) indices."""
    x_new = np.asarray(x_new, dtype=float)
    p = model.n_features if model is not None else n_features
    if x_new.shape != (p,):
        raise DataValidationError(f"observation must have length {p}")
    if np.any(~np.isfinite(x_new)):
        raise DataValidationError("observation contains non-finite values")
    if np.any(x_new < 0.0):
        raise DataValidationError("observation contains negative values")
    trunc = np.flatnonzero(x_new == 0.0)
    obs = np.flatnonzero(x_new > 0.0)
    return obs, trunc


# ---------------------------------------------------------------------------
# Univariate truncated-normal machinery (upper truncation, inverse-CDF based)


def _std_upper_trunc_mean(alpha):
    """Mean of a standard normal conditioned on being below ``alpha``."""
    alpha = np.asarray(alpha, dtype=float)
    with np.errstate(invalid="ignore"):
        log_phi = -0.5 * alpha * alpha - 0.5 * np.log(2.0 * np.pi)
        out = -np.exp(log_phi - log_ndtr(alpha))
    return np.where(np.isposinf(alpha), 0.0, out)


def _std_upper_trunc_sample(alpha, u):
    """Inverse-CDF draw of a standard normal below ``alpha`` from uniforms."""
    u = np.clip(u, 1e-300, 1.0 - 1e-16)
    return ndtri_exp(np.log(u) + log_ndtr(alpha))


def _gibbs_setup(cond):
    """Conditional regression weights, scales, and the chain's start point."""
    mu = np.asarray(cond.mu, dtype=float)
    gamma = np.asarray(cond.gamma, dtype=float)
    upper = np.asarray(cond.upper, dtype=float)
    d = mu.shape[0]
    try:
        prec = np.linalg.inv(gamma)
    except np.linalg.LinAlgError:
        prec = np.linalg.inv(gamma + _JITTER * np.eye(d))
    cond_var = 1.0 / np.diag(prec)
    if np.any(cond_var <= 0.0):
        raise DomainError("conditional covariance is not positive definite")
    cond_sd = np.sqrt(cond_var)
    weights = -prec * cond_var[:, None]       # row i: coefficients on (z - mu)
    np.fill_diagonal(weights, 0.0)
    sd_marg = np.sqrt(np.diag(gamma))
    start = mu + sd_marg * _std_upper_trunc_mean((upper - mu) / sd_marg)
    return mu, upper, cond_sd, weights, start


def sample_truncated(cond, n_samples, seed):
    """Draw from an upper-truncated multivariate Gaussian.

    A coordinatewise Gibbs chain with inverse-CDF conditionals, burn-in 100
    and no thinning, initialized at the coordinatewise truncated conditional
    means; in one dimension every step is an exact independent draw.
    Deterministic for a fixed seed.
    """
    if n_samples < 1:
        raise DomainError("need at least one sample")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mu, upper, cond_sd, weights, z = _gibbs_setup(cond)
    d = mu.shape[0]
    total = GIBBS_BURN_IN + n_samples
    log_u = np.log(np.clip(rng.random((total, d)), 1e-300, 1.0 - 1e-16))

    if d == 1:
        alpha = (upper[0] - mu[0]) / cond_sd[0]
        draws = mu[0] + cond_sd[0] * ndtri_exp(log_u[:, 0] + log_ndtr(alpha))
        return draws[GIBBS_BURN_IN:, None]

    out = np.empty((n_samples, d))
    for t in range(total):
        lu = log_u[t]
        for i in range(d):
            m = mu[i] + weights[i] @ (z - mu)
            alpha = (upper[i] - m) / cond_sd[i]
            z[i] = m + cond_sd[i] * float(ndtri_exp(lu[i] + log_ndtr(alpha)))
        if t >= GIBBS_BURN_IN:
            out[t - GIBBS_BURN_IN] = z
    return out


def _lockstep_bucket(conds, n_samples, rngs):
    """Lockstep Gibbs for chains sharing one dimension d >= 2."""
    n_chains = len(conds)
    d = conds[0].mu.shape[0]
    total = GIBBS_BURN_IN + n_samples
    mu = np.empty((n_chains, d))
    upper = np.empty((n_chains, d))
    sd = np.empty((n_chains, d))
    weights = np.empty((n_chains, d, d))
    z = np.empty((n_chains, d))
    log_u = np.empty((n_chains, total, d))
    for c, cond in enumerate(conds):
        mu[c], upper[c], sd[c], weights[c], z[c] = _gibbs_setup(cond)
        log_u[c] = np.log(np.clip(rngs[c].random((total, d)), 1e-300, 1.0 - 1e-16))

    out = np.empty((n_chains, n_samples, d))
    for t in range(total):
        for i in range(d):
            m = mu[:, i] + np.einsum("cj,cj->c", weights[:, i, :], z - mu)
            alpha = (upper[:, i] - m) / sd[:, i]
            z[:, i] = m + sd[:, i] * ndtri_exp(log_u[:, t, i] + log_ndtr(alpha))
        if t >= GIBBS_BURN_IN:
            out[:, t - GIBBS_BURN_IN] = z
    return out


def sample_truncated_lockstep(conds, n_samples, rngs):
    """Draw from many truncated Gaussians, vectorizing chains in lockstep.

    Each chain keeps its own generator and follows exactly the
    :func:`sample_truncated` recursion (so draws do not depend on which
    chains share a batch); chains are bucketed by dimension and univariate
    chains collapse to direct vectorized inverse-CDF draws.  Returns one
    (n_samples, p_t) array per chain.
    """
    total = GIBBS_BURN_IN + n_samples
    results = [None] * len(conds)
    buckets = {}
    for c, cond in enumerate(conds):
        d = cond.mu.shape[0]
        if d == 1:
            mu, upper, sd, _, _ = _gibbs_setup(cond)
            log_u = np.log(np.clip(rngs[c].random((total, 1)), 1e-300, 1.0 - 1e-16))
            alpha = (upper[0] - mu[0]) / sd[0]
            draws = mu[0] + sd[0] * ndtri_exp(log_u[:, 0] + log_ndtr(alpha))
            results[c] = draws[GIBBS_BURN_IN:, None]
        else:
            buckets.setdefault(d, []).append(c)
    for d, idx in buckets.items():
        out = _lockstep_bucket([conds[c] for c in idx], n_samples,
                               [rngs[c] for c in idx])
        for row, c in enumerate(idx):
            results[c] = out[row]
    return results


# ---------------------------------------------------------------------------
# Per-row conditioning context (cached across penalty levels / subsets)


class ObservationContext:
    """Caches the observed-block factorization for one row.

    Repeated posterior evaluations for the same row (different penalties or
    rules) reuse the Cholesky factor of the observed block and memoize
    truncated-coordinate draws per sampled subset.
    """

    def __init__(self, latent, transforms, x_new, seed_entropy=()):
        self.latent = latent
        x_new = np.asarray(x_new, dtype=float)
        p = latent.sigma22.shape[0]
        self.obs, self.trunc = split_observation(x_new, n_features=p)
        # SeedSequence entropy must be non-negative integers
        self.seed_entropy = tuple(int(v) & ((1 << 63) - 1) for v in seed_entropy)
        s22 = latent.sigma22
        if self.obs.size:
            self.z_obs = np.array([
                transforms[j].to_latent(x_new[j]) for j in self.obs], dtype=float)
            self._chol = cho_factor(s22[np.ix_(self.obs, self.obs)], lower=True)
            self._solved_z = cho_solve(self._chol, self.z_obs)
        else:
            self.z_obs = np.zeros(0)
            self._chol = None
            self._solved_z = None
        self._draw_cache = {}

    def observed_score(self, beta):
        if self.obs.size == 0:
            return 0.0
        return float(beta[self.obs] @ self.z_obs)

    def conditional(self, subset):
        """Truncated-Gaussian parameters for ``subset`` of hidden coordinates."""
        subset = np.asarray(subset, dtype=int)
        s22 = self.latent.sigma22
        upper = self.latent.thresholds.delta[subset]
        if self.obs.size == 0:
            gamma = s22[np.ix_(subset, subset)].copy()
            mu = np.zeros(subset.size)
        else:
            cross = s22[np.ix_(self.obs, subset)]
            mu = cross.T @ self._solved_z
            gamma = s22[np.ix_(subset, subset)] - cross.T @ cho_solve(self._chol, cross)
            gamma = (gamma + gamma.T) / 2.0
        try:
            np.linalg.cholesky(gamma)
        except np.linalg.LinAlgError:
            gamma = gamma + _JITTER * np.eye(subset.size)
        return ConditionalTruncatedGaussian(mu=mu, gamma=gamma, upper=upper)

    def needed_subset(self, beta):
        """Hidden coordinates that carry direction weight for this row."""
        return self.trunc[beta[self.trunc] != 0.0]

    def _chain_rng(self, key):
        seed = np.random.SeedSequence(self.seed_entropy + key[0] + (key[1],))
        return np.random.default_rng(seed)

    def has_draws(self, subset, n_samples):
        return (tuple(int(j) for j in subset), int(n_samples)) in self._draw_cache

    def draws(self, subset, n_samples):
        """Memoized truncated draws for a hidden-coordinate subset."""
        key = (tuple(int(j) for j in subset), int(n_samples))
        if key not in self._draw_cache:
            cond = self.conditional(np.asarray(subset, dtype=int))
            self._draw_cache[key] = sample_truncated(cond, n_samples, self._chain_rng(key))
        return self._draw_cache[key]

    def hidden_scores(self, beta, n_samples):
        """Per-draw inner products over sampled hidden coordinates.

        Returns an array of length ``n_samples`` (all zeros when no hidden
        coordinate carries direction weight, in which case nothing is
        sampled).
        """
        subset = self.needed_subset(beta)
        if subset.size == 0:
            return np.zeros(1)
        return self.draws(subset, n_samples) @ beta[subset]


def fill_draw_caches(pairs, n_samples):
    """Batch-populate draw caches for (context, subset) pairs.

    Chains are seeded exactly as :meth:`ObservationContext.draws` would seed
    them, so batch composition does not influence any chain's draws.
    """
    pending = []
    for ctx, subset in pairs:
        key = (tuple(int(j) for j in subset), int(n_samples))
        if key not in ctx._draw_cache:
            pending.append((ctx, subset, key))
    if not pending:
        return
    conds = [ctx.conditional(np.asarray(subset, dtype=int))
             for ctx, subset, _ in pending]
    rngs = [ctx._chain_rng(key) for ctx, _, key in pending]
    outs = sample_truncated_lockstep(conds, n_samples, rngs)
    for (ctx, _, key), draws in zip(pending, outs):
        ctx._draw_cache[key] = draws


def _posterior_from_scores(hidden, observed, delta_y, v_hat, kind):
    if kind == "mc":
        return float(np.mean(ndtr((hidden + observed - delta_y) / v_hat)))
    return float(ndtr((float(np.mean(hidden)) + observed - delta_y) / v_hat))


def _seed_entropy(seed):
    if isinstance(seed, tuple):
        return tuple(int(v) for v in seed)
    return (int(seed),)


def _posterior(model, x_new, seed, kind):
    ctx = ObservationContext(model.latent, model.transforms, x_new,
                             seed_entropy=_seed_entropy(seed))
    hidden = ctx.hidden_scores(model.beta, model.rule.n_samples)
    observed = ctx.observed_score(model.beta)
    return _posterior_from_scores(hidden, observed, model.delta_y, model.v_hat, kind)


def posterior_mc(model, x_new, seed=0):
    """Monte-Carlo posterior probability of class 1 for one row.

    ``seed`` may be an integer or a tuple of integers (a derived stream, as
    used per-row by :func:`predict_matrix`).
    """
    return _posterior(model, x_new, seed, "mc")


def posterior_linear(model, x_new, seed=0):
    """Linear-rule posterior probability of class 1 for one row.

    Plugs the Monte-Carlo mean of the hidden coordinates into the probit
    link; the thresholded decision does not depend on ``v_hat``.
    """
    return _posterior(model, x_new, seed, "linear")


def classify_observation(model, x_new, seed=0):
    """Class decision: 1 when the rule's posterior strictly exceeds 0.5."""
    kind = model.rule.kind
    p = posterior_mc(model, x_new, seed) if kind == "mc" else posterior_linear(model, x_new, seed)
    return int(p > 0.5)


def predict_matrix(model, x, rule=None, seed=0):
    """Posteriors and decisions for every row of ``x``.

    Row ``i`` uses the derived seed stream ``(seed, i)``, so results do not
    depend on evaluation order and match per-row calls with that tuple seed.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise DataValidationError("prediction matrix has the wrong shape")
    rule = rule or model.rule
    posteriors = np.empty(x.shape[0])
    for i, row in enumerate(x):
        ctx = ObservationContext(model.latent, model.transforms, row,
                                 seed_entropy=(int(seed), i))
        hidden = ctx.hidden_scores(model.beta, rule.n_samples)
        observed = ctx.observed_score(model.beta)
        posteriors[i] = _posterior_from_scores(
            hidden, observed, model.delta_y, model.v_hat, rule.kind)
    return posteriors, (posteriors > 0.5).astype(int)

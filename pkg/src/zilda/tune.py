"""Cross-validated selection of the penalty and the intercept.

A stratified 5-fold split scores a descending penalty grid jointly against an
equally spaced intercept grid using held-out misclassification; ties break
toward the larger penalty, then the intercept nearest zero.  The winning pair
is refit on all data to produce the final classifier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .classify import (ClassifierModel, ObservationContext, PosteriorRule,
                       conditional_scale, fill_draw_caches)
from .direction import lambda_grid, solve_direction
from .errors import DataValidationError, DomainError, StratificationError
from .latentcorr import estimate_latent_correlation, validate_covariates, validate_label
from .transform import fit_marginal

__all__ = ["TuneConfig", "CVResult", "stratified_folds", "cross_validate", "fit"]


@dataclass(frozen=True)
class TuneConfig:
    """Cross-validation settings.

    ``intercept_grid`` is (low, high, count).  ``cv_rule`` is the posterior
    rule used while scoring folds (the cheap linear rule by default,
    regardless of the final prediction rule in ``rule``).
    """

    n_folds: int = 5
    n_lambdas: int = 100
    lambda_ratio: float = 1e-3
    intercept_grid: tuple = (-1.5, 1.5, 100)
    rule: PosteriorRule = PosteriorRule("linear", 100)
    cv_rule: str = "linear"
    nu: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.n_folds < 2:
            raise DomainError("need at least two folds")
        lo, hi, count = self.intercept_grid
        if count < 1 or not lo < hi:
            raise DomainError("intercept grid must satisfy lo < hi, count >= 1")
        if self.cv_rule not in ("mc", "linear"):
            raise DomainError("cv_rule must be 'mc' or 'linear'")

    @property
    def intercepts(self):
        lo, hi, count = self.intercept_grid
        return np.linspace(lo, hi, count)


@dataclass(frozen=True)
class CVResult:
    best_lambda: float
    best_intercept: float
    error_table: np.ndarray       # n_lambdas x n_intercepts mean CV error
    lambdas: np.ndarray
    intercepts: np.ndarray


def stratified_folds(y, n_folds, seed):
    """Fold labels with per-class balance within one observation.

    Raises
    ------
    StratificationError
        If any fold would miss a class entirely; retry with another seed or
        fewer folds.
    """
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    folds = np.empty(y.shape[0], dtype=int)
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        folds[idx] = np.arange(idx.size) % n_folds
    for f in range(n_folds):
        held = folds == f
        if len(np.unique(y[held])) < 2 or len(np.unique(y[~held])) < 2:
            raise StratificationError(
                f"fold {f} is missing a class; "
                f"re-run with a different seed or fewer folds")
    return folds


def _fold_error_table(x, y, train_mask, cfg, lambdas):
    """Held-out misclassification for one fold over the (lambda, intercept) grid."""
    x_tr, y_tr = x[train_mask], y[train_mask]
    x_te, y_te = x[~train_mask], y[~train_mask]
    latent = estimate_latent_correlation(x_tr, y_tr, nu=cfg.nu)
    transforms = tuple(fit_marginal(col) for col in x_tr.T)
    v_hat = conditional_scale(latent)
    intercepts = cfg.intercepts
    errors = np.zeros((lambdas.size, intercepts.size))

    contexts = [ObservationContext(latent, transforms, row,
                                   seed_entropy=(cfg.seed, 101, i))
                for i, row in enumerate(x_te)]

    # solve the whole path first so every (row, subset) draw job is known,
    # then fill all caches in one lockstep batch
    solutions = []
    warm = None
    for lam in lambdas:
        sol = solve_direction(latent.sigma22, latent.sigma21, lam, warm_start=warm)
        warm = sol.beta
        solutions.append(sol)
    jobs = []
    for sol in solutions:
        for ctx in contexts:
            sub = ctx.needed_subset(sol.beta)
            if sub.size:
                jobs.append((ctx, sub))
    fill_draw_caches(jobs, cfg.rule.n_samples)

    for li, sol in enumerate(solutions):
        for ctx, yi in zip(contexts, y_te):
            observed = ctx.observed_score(sol.beta)
            hidden = ctx.hidden_scores(sol.beta, cfg.rule.n_samples)
            if cfg.cv_rule == "linear":
                score = float(np.mean(hidden)) + observed
                pred = (score > intercepts).astype(int)
            else:
                post = np.mean(ndtr((hidden[:, None] + observed - intercepts) / v_hat), axis=0)
                pred = (post > 0.5).astype(int)
            errors[li] += pred != yi
    return errors / max(len(y_te), 1), len(y_te)


def select_from_table(error_table, lambdas, intercepts):
    """Grid argmin with the documented tie-break.

    Among minimal-error cells, prefer the largest penalty; among those, the
    intercept nearest zero (ties toward the lower intercept value).
    """
    best = error_table.min()
    cand = np.argwhere(error_table <= best + 1e-15)
    li = cand[:, 0].min()                          # lambdas descend: min index = largest
    sub = cand[cand[:, 0] == li][:, 1]
    order = np.lexsort((intercepts[sub], np.abs(intercepts[sub])))
    ii = sub[order[0]]
    return float(lambdas[li]), float(intercepts[ii]), int(li), int(ii)


def cross_validate(x, y, cfg=TuneConfig()):
    """Mean cross-validated misclassification over the (lambda, intercept) grid."""
    x = validate_covariates(x)
    y = validate_label(y)
    if len(np.unique(y)) < 2:
        raise DataValidationError("both classes must be present")
    folds = stratified_folds(y, cfg.n_folds, cfg.seed)

    # shared grid: anchor the penalty grid on the all-data correlation scale
    latent_all = estimate_latent_correlation(x, y, nu=cfg.nu)
    lambdas = lambda_grid(latent_all.sigma21, cfg.n_lambdas, cfg.lambda_ratio)

    total = np.zeros((lambdas.size, cfg.intercepts.size))
    weight = 0
    for f in range(cfg.n_folds):
        table, n_held = _fold_error_table(x, y, folds != f, cfg, lambdas)
        total += table * n_held
        weight += n_held
    table = total / weight
    best_lambda, best_intercept, _, _ = select_from_table(table, lambdas, cfg.intercepts)
    return CVResult(best_lambda=best_lambda, best_intercept=best_intercept,
                    error_table=table, lambdas=lambdas, intercepts=cfg.intercepts)


def fit(x, y, cfg=TuneConfig(), column_names=None):
    """Cross-validate, then refit on all data at the selected penalty."""
    cv = cross_validate(x, y, cfg)
    return fit_at(x, y, cv.best_lambda, cv.best_intercept, cfg, column_names), cv


def fit_at(x, y, lam, intercept, cfg=TuneConfig(), column_names=None):
    """Fit the full-data classifier at a fixed penalty and intercept."""
    x = validate_covariates(x, column_names)
    y = validate_label(y)
    latent = estimate_latent_correlation(x, y, nu=cfg.nu, column_names=column_names)
    sol = solve_direction(latent.sigma22, latent.sigma21, lam)
    transforms = tuple(fit_marginal(col) for col in x.T)
    names = tuple(column_names) if column_names is not None else ()
    return ClassifierModel(
        beta=sol.beta,
        delta_y=float(intercept),
        v_hat=conditional_scale(latent),
        latent=latent,
        transforms=transforms,
        rule=cfg.rule,
        lam=float(lam),
        column_names=names,
    )

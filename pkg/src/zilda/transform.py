"""Winsorized empirical-CDF transforms from observed scale to latent Gaussian scale.

A fitted transform stores the training column; queries count training values
with a right-continuous ``<=`` comparison, winsorize the resulting empirical
CDF value, and map through the normal quantile.  Zeros never pass through the
latent map (they are handled by the classifier's truncated path); the zero
proportion only sets the lower winsorization clamp.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import DataValidationError, DomainError

__all__ = ["MarginalTransform", "fit_marginal"]


@dataclass(frozen=True)
class MarginalTransform:
    """Empirical marginal transform of one covariate column.

    ``sorted_values`` holds all training values (zeros included) ascending;
    ``pi_hat`` is the zero proportion and ``delta_n`` the winsorization
    constant, ``1/(2n)`` by default.
    """

    sorted_values: np.ndarray
    pi_hat: float
    delta_n: float
    n: int

    def ecdf(self, x):
        """Winsorized empirical CDF value(s) at ``x``.

        The raw count fraction ``(1/n) * #{x_i <= x}`` is clamped into
        ``[max(pi_hat, delta_n), 1 - delta_n]``; the positive floor keeps the
        latent map finite for zero-free columns.
        """
        x = np.asarray(x, dtype=float)
        raw = np.searchsorted(self.sorted_values, x, side="right") / self.n
        lo = max(self.pi_hat, self.delta_n)
        return np.clip(raw, lo, 1.0 - self.delta_n)

    def to_latent(self, x):
        """Latent Gaussian coordinate(s) of positive observed value(s).

        Raises
        ------
        DomainError
            If any query is not strictly positive (zeros belong to the
            truncated path, not the latent map).
        """
        x = np.asarray(x, dtype=float)
        if np.any(~np.isfinite(x)) or np.any(x <= 0.0):
            raise DomainError("to_latent requires strictly positive values")
        return ndtri(self.ecdf(x))


def fit_marginal(column, delta_n=None):
    """Fit a :class:`MarginalTransform` to one non-negative training column."""
    column = np.asarray(column, dtype=float)
    if column.ndim != 1 or column.size < 2:
        raise DataValidationError("marginal fit needs a vector of length >= 2")
    if np.any(~np.isfinite(column)) or np.any(column < 0.0):
        raise DataValidationError("marginal fit requires finite non-negative values")
    if column.max() == column.min():
        raise DataValidationError("constant column has no usable marginal")
    n = column.size
    if delta_n is None:
        delta_n = 1.0 / (2.0 * n)
    return MarginalTransform(
        sorted_values=np.sort(column),
        pi_hat=float(np.mean(column == 0.0)),
        delta_n=float(delta_n),
        n=n,
    )

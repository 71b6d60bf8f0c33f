"""Streaming moments, Student-t confidence intervals and OLS surrogates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg
from scipy.stats import t as student_t


class InsufficientDataError(ValueError):
    pass


class SingularDesignError(ValueError):
    pass


@lru_cache(maxsize=4096)
def t_quantile(confidence: float, df: int) -> float:
    """Two-sided Student-t critical value for ``confidence`` and ``df``."""
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")
    return float(student_t.ppf(0.5 + confidence / 2.0, df))


# --------------------------------------------------------------------------
# Per-condition sample statistics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionEstimate:
    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else math.nan

    @classmethod
    def from_values(cls, values: Iterable[float]) -> "ConditionEstimate":
        est = cls()
        for v in values:
            est = update_stats(est, v)
        return est


def update_stats(est: ConditionEstimate, value: float) -> ConditionEstimate:
    """Welford update with one new observation."""
    n = est.n + 1
    delta = value - est.mean
    mean = est.mean + delta / n
    m2 = est.m2 + delta * (value - mean)
    return ConditionEstimate(n, mean, max(m2, 0.0))


def ci_width(est: ConditionEstimate, confidence: float = 0.95) -> float:
    """Full width of the two-sided t interval on the mean.

    Raises :class:`InsufficientDataError` for ``n < 2``.
    """
    if est.n < 2:
        raise InsufficientDataError(f"need at least 2 observations, have {est.n}")
    if est.m2 == 0.0:
        return 0.0
    sd = math.sqrt(est.m2 / (est.n - 1))
    return 2.0 * t_quantile(confidence, est.n - 1) * sd / math.sqrt(est.n)


def ci_width_or_inf(est: ConditionEstimate, confidence: float = 0.95) -> float:
    return ci_width(est, confidence) if est.n >= 2 else math.inf


# --------------------------------------------------------------------------
# Regression surrogate
# --------------------------------------------------------------------------


def design_matrix(x1, x2, with_interaction: bool) -> np.ndarray:
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    cols = [np.ones_like(x1), x1, x2]
    if with_interaction:
        cols.append(x1 * x2)
    return np.column_stack(cols)


@dataclass(frozen=True)
class RegressionModel:
    with_interaction: bool
    beta: np.ndarray | None = None
    xtx_inverse: np.ndarray | None = None
    sigma2_hat: float = math.nan
    n_total: int = 0

    @property
    def n_params(self) -> int:
        return 4 if self.with_interaction else 3

    @property
    def fitted(self) -> bool:
        return self.beta is not None

    @property
    def df(self) -> int:
        return self.n_total - self.n_params

    def design_row(self, x1: float, x2: float) -> np.ndarray:
        return design_matrix([x1], [x2], self.with_interaction)[0]


def _check_spread(x1, x2):
    for name, x in (("x1 (Buprenorphine)", x1), ("x2 (Naloxone)", x2)):
        if np.unique(x).size < 2:
            raise SingularDesignError(f"design is singular: covariate {name} takes a single value")


def _solve(xtx, xty, with_interaction):
    try:
        factor = linalg.cho_factor(xtx)
    except linalg.LinAlgError as exc:
        raise SingularDesignError("design matrix is rank deficient") from exc
    # cho_factor accepts nearly singular matrices; reject them explicitly
    if np.linalg.cond(xtx) > 1e12:
        which = "x1*x2 interaction" if with_interaction else "covariates"
        raise SingularDesignError(f"design matrix is rank deficient ({which} not identifiable)")
    beta = linalg.cho_solve(factor, xty)
    xtx_inv = linalg.cho_solve(factor, np.eye(xtx.shape[0]))
    return beta, 0.5 * (xtx_inv + xtx_inv.T)


def _sigma2(rss, n, p, scale):
    # exact fits leave rounding-level residuals; report them as zero
    if rss <= 1e-24 * max(scale, 1.0):
        return 0.0
    return rss / (n - p) if n > p else 0.0


def fit_ols(observations: Sequence[tuple[float, float, float]], with_interaction: bool = True) -> RegressionModel:
    """Least-squares fit of ``y`` on ``(1, x1, x2[, x1*x2])``.

    ``observations`` is a sequence of ``(x1, x2, y)`` triples (or an
    ``(n, 3)`` array).
    """
    obs = np.asarray(observations, dtype=float).reshape(-1, 3)
    x1, x2, y = obs[:, 0], obs[:, 1], obs[:, 2]
    p = 4 if with_interaction else 3
    if len(y) < p:
        raise SingularDesignError(f"need at least {p} observations, have {len(y)}")
    _check_spread(x1, x2)
    X = design_matrix(x1, x2, with_interaction)
    beta, xtx_inv = _solve(X.T @ X, X.T @ y, with_interaction)
    resid = y - X @ beta
    rss = float(resid @ resid)
    return RegressionModel(with_interaction, beta, xtx_inv, _sigma2(rss, len(y), p, float(y @ y)), len(y))


def fit_ols_grouped(x1, x2, estimates: Sequence[ConditionEstimate], with_interaction: bool = True) -> RegressionModel:
    """Same fit as :func:`fit_ols` from per-condition sufficient statistics.

    Observations repeated at a design point only enter OLS through their
    count, mean and within-point sum of squares, so this equals fitting the
    raw observations without storing them.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    n = np.array([e.n for e in estimates], dtype=float)
    ybar = np.array([e.mean for e in estimates], dtype=float)
    within = float(sum(e.m2 for e in estimates))
    p = 4 if with_interaction else 3
    total = int(n.sum())
    if total < p:
        raise SingularDesignError(f"need at least {p} observations, have {total}")
    seen = n > 0
    _check_spread(x1[seen], x2[seen])
    X = design_matrix(x1, x2, with_interaction)
    Xw = X * n[:, None]
    beta, xtx_inv = _solve(X.T @ Xw, Xw.T @ ybar, with_interaction)
    lack = ybar - X @ beta
    rss = within + float(np.sum(n * lack * lack))
    yy = within + float(np.sum(n * ybar * ybar))
    return RegressionModel(with_interaction, beta, xtx_inv, _sigma2(rss, total, p, yy), total)


def predict_with_ci(model: RegressionModel, cond, confidence: float = 0.95) -> tuple[float, float]:
    """Model mean at a condition and full width of the CI on that mean.

    ``cond`` is a treatment condition (anything with ``x1``/``x2``) or an
    ``(x1, x2)`` pair.
    """
    if not model.fitted:
        raise ValueError("regression model has not been fitted")
    x1, x2 = (cond.x1, cond.x2) if hasattr(cond, "x1") else cond
    row = model.design_row(x1, x2)
    mean = float(row @ model.beta)
    if model.sigma2_hat == 0.0:
        return mean, 0.0
    if model.df < 1:
        return mean, math.inf
    leverage = float(row @ model.xtx_inverse @ row)
    se = math.sqrt(model.sigma2_hat * max(leverage, 0.0))
    return mean, 2.0 * t_quantile(confidence, model.df) * se

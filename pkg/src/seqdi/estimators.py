"""Point estimators of the population total and their plug-in variances.

Sequential estimators treat the observed non-probability units as a
certainty stratum and estimate the complement-stratum total from the
second-stage Poisson sample: a Hajek stratified estimator, a stratified
Horvitz-Thompson estimator, and separate/combined regression estimators.
Competitors from the independent-sampling literature (GREG on an
independent probability sample, IPW, doubly robust, and their fusion)
are included for comparison studies.

All design variances ship in their Poisson specialization
sum (1-pi_i)/pi_i^2 * e_i^2; the general double-sum form is kept for
verification against exact enumeration.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptySample
from .numerics import logistic_fit, normal_quantile, weighted_ls, _logistic
from .pilot import PilotVarianceModel, predict_sigma2
from .population import Partition, Population


@dataclass(frozen=True)
class WeightSpec:
    """Working regression weights: 1/pi ("inverse_pi") or 1/(pi*sigma2_i)
    ("inverse_pi_sigma"), truncated at an upper quantile within the
    estimating sample."""

    kind: str = "inverse_pi"
    truncation_quantile: float = 0.999

    def __post_init__(self):
        if self.kind not in ("inverse_pi", "inverse_pi_sigma"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if not 0.0 < self.truncation_quantile <= 1.0:
            raise ValueError("truncation quantile must lie in (0, 1]")

    def build(self, pi: np.ndarray, sigma2: np.ndarray | None = None) -> np.ndarray:
        pi = np.asarray(pi, dtype=float)
        if self.kind == "inverse_pi":
            q = 1.0 / pi
        else:
            if sigma2 is None:
                raise ValueError("variance-scaled weights need per-unit variances")
            q = 1.0 / (pi * np.asarray(sigma2, dtype=float))
        if self.truncation_quantile < 1.0 and len(q) > 1:
            q = np.minimum(q, np.quantile(q, self.truncation_quantile))
        return q


@dataclass(frozen=True)
class Estimate:
    """Point estimate with optional plug-in variance and Wald interval."""

    point: float
    variance: float | None
    ci_low: float | None
    ci_high: float | None
    tag: str
    level: float = 0.95

    def to_csv_row(self):
        fmt = lambda v: "" if v is None else repr(float(v))
        return [self.tag, repr(float(self.point)), fmt(self.variance),
                fmt(self.ci_low), fmt(self.ci_high)]

    def to_json_dict(self):
        return {
            "tag": self.tag,
            "point": float(self.point),
            "variance": None if self.variance is None else float(self.variance),
            "ci_low": None if self.ci_low is None else float(self.ci_low),
            "ci_high": None if self.ci_high is None else float(self.ci_high),
            "level": self.level,
        }

    def to_json(self):
        return json.dumps(self.to_json_dict())


def _make_estimate(tag, point, variance=None, level=0.95) -> Estimate:
    if variance is None:
        return Estimate(float(point), None, None, None, tag, level)
    variance = max(float(variance), 0.0)
    half = normal_quantile((1.0 + level) / 2.0) * np.sqrt(variance)
    return Estimate(float(point), variance, float(point - half), float(point + half),
                    tag, level)


def poisson_plugin_variance(residuals: np.ndarray, pi: np.ndarray) -> float:
    """Plug-in design variance for a Poisson HT-type total: sum (1-pi)/pi^2 e^2."""
    residuals = np.asarray(residuals, dtype=float)
    pi = np.asarray(pi, dtype=float)
    return float(np.sum((1.0 - pi) / pi**2 * residuals**2))


def plugin_variance_double_sum(
    residuals: np.ndarray, pi: np.ndarray, joint: np.ndarray | None = None
) -> float:
    """General double-sum plug-in variance over the realized sample.

    sum_ij Delta_ij / pi_ij * (e_i/pi_i) * (e_j/pi_j) with
    Delta_ij = pi_ij - pi_i pi_j.  When ``joint`` is omitted the Poisson
    identities pi_ij = pi_i pi_j (i != j), pi_ii = pi_i apply, and the
    expression collapses to :func:`poisson_plugin_variance`.
    """
    residuals = np.asarray(residuals, dtype=float)
    pi = np.asarray(pi, dtype=float)
    n = len(pi)
    if joint is None:
        joint = np.outer(pi, pi)
        np.fill_diagonal(joint, pi)
    delta = joint - np.outer(pi, pi)
    z = residuals / pi
    total = 0.0
    for i in range(n):
        total += float(np.sum(delta[i] / joint[i] * z[i] * z))
    return total


def y_di(y_certainty: np.ndarray, y_s: np.ndarray, pi_s: np.ndarray,
         n_complement: int, level: float = 0.95) -> Estimate:
    """Stratified estimator: exact certainty total plus N1 times the Hajek mean.

    Variance by the standard ratio linearization with z_i = y_i - hajek
    mean: N1^2 (sum 1/pi)^-2 sum (1-pi) z_i^2 / pi_i^2.
    """
    if len(y_s) == 0:
        raise EmptySample("Hajek mean needs a nonempty sample")
    inv = 1.0 / np.asarray(pi_s, dtype=float)
    hajek = float(np.sum(inv * y_s) / np.sum(inv))
    point = float(np.sum(y_certainty)) + n_complement * hajek
    z = np.asarray(y_s, dtype=float) - hajek
    variance = n_complement**2 / float(np.sum(inv)) ** 2 * poisson_plugin_variance(z, pi_s)
    return _make_estimate("DI", point, variance, level)


def y_ht_seq(y_certainty: np.ndarray, y_s: np.ndarray, pi_s: np.ndarray,
             level: float = 0.95) -> Estimate:
    """Stratified Horvitz-Thompson total; defined (with zero HT part) on empty samples."""
    point = float(np.sum(y_certainty)) + float(np.sum(np.asarray(y_s) / np.asarray(pi_s)))
    variance = poisson_plugin_variance(y_s, pi_s) if len(y_s) else 0.0
    return _make_estimate("HT_seq", point, variance, level)


def regression_coefficient(x: np.ndarray, y: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Weighted regression coefficient (sum q x x')^{-1} sum q x y."""
    return weighted_ls(x, y, q)


def _greg_point(y_certainty, y_s, x_s, pi_s, x_total_complement, coef):
    inv = 1.0 / np.asarray(pi_s, dtype=float)
    ht_y = float(np.sum(inv * y_s))
    ht_x = (np.asarray(x_s, dtype=float) * inv[:, None]).sum(axis=0)
    correction = float((np.asarray(x_total_complement, dtype=float) - ht_x) @ coef)
    return float(np.sum(y_certainty)) + ht_y + correction


def y_sep_di(
    y_certainty: np.ndarray,
    y_s: np.ndarray,
    x_s: np.ndarray,
    pi_s: np.ndarray,
    x_total_complement: np.ndarray,
    wspec: WeightSpec,
    model: PilotVarianceModel | None = None,
    level: float = 0.95,
    tag: str | None = None,
) -> Estimate:
    """Separate regression estimator: coefficient fitted on the probability sample only."""
    if wspec.kind == "inverse_pi_sigma" and model is None:
        raise ValueError("variance-scaled weights need a fitted pilot model")
    sigma2 = predict_sigma2(model, x_s) if wspec.kind == "inverse_pi_sigma" else None
    q = wspec.build(pi_s, sigma2)
    coef = regression_coefficient(x_s, y_s, q)
    point = _greg_point(y_certainty, y_s, x_s, pi_s, x_total_complement, coef)
    residuals = np.asarray(y_s) - np.asarray(x_s) @ coef
    variance = poisson_plugin_variance(residuals, pi_s)
    return _make_estimate(tag or "sepDI", point, variance, level)


def y_com_di(
    y_certainty: np.ndarray,
    x_certainty: np.ndarray,
    y_s: np.ndarray,
    x_s: np.ndarray,
    pi_s: np.ndarray,
    x_total_complement: np.ndarray,
    wspec: WeightSpec,
    model: PilotVarianceModel | None = None,
    level: float = 0.95,
    tag: str | None = None,
) -> Estimate:
    """Combined regression estimator: coefficient pooled over both samples.

    Certainty-stratum rows enter the pooled fit with inclusion
    probability one; the variance keeps the Poisson plug-in form with
    residuals at the pooled coefficient over the probability sample.
    """
    if wspec.kind == "inverse_pi_sigma" and model is None:
        raise ValueError("variance-scaled weights need a fitted pilot model")
    x_certainty = np.asarray(x_certainty, dtype=float)
    pooled_x = np.vstack([x_certainty, np.asarray(x_s, dtype=float)])
    pooled_y = np.concatenate([np.asarray(y_certainty, dtype=float), np.asarray(y_s, dtype=float)])
    pooled_pi = np.concatenate([np.ones(len(y_certainty)), np.asarray(pi_s, dtype=float)])
    sigma2 = predict_sigma2(model, pooled_x) if wspec.kind == "inverse_pi_sigma" else None
    q = wspec.build(pooled_pi, sigma2)
    coef = regression_coefficient(pooled_x, pooled_y, q)
    point = _greg_point(y_certainty, y_s, x_s, pi_s, x_total_complement, coef)
    residuals = np.asarray(y_s) - np.asarray(x_s) @ coef
    variance = poisson_plugin_variance(residuals, pi_s)
    return _make_estimate(tag or "comDI", point, variance, level)


def y_greg_independent(
    x_total_population: np.ndarray,
    y_s: np.ndarray,
    x_s: np.ndarray,
    pi_s: np.ndarray,
    level: float = 0.95,
) -> Estimate:
    """Classical GREG on an independent probability sample from the whole frame."""
    inv = 1.0 / np.asarray(pi_s, dtype=float)
    coef = regression_coefficient(x_s, y_s, inv)
    ht_y = float(np.sum(inv * y_s))
    ht_x = (np.asarray(x_s, dtype=float) * inv[:, None]).sum(axis=0)
    point = ht_y + float((np.asarray(x_total_population) - ht_x) @ coef)
    residuals = np.asarray(y_s) - np.asarray(x_s) @ coef
    variance = poisson_plugin_variance(residuals, pi_s)
    return _make_estimate("GREG", point, variance, level)


def estimate_propensity(pop: Population, partition: Partition) -> np.ndarray:
    """Logistic MLE of certainty-stratum membership on the full frame covariates."""
    return logistic_fit(pop.x, partition.delta.astype(float))


def y_ipw(pop: Population, partition: Partition,
          alpha_hat: np.ndarray | None = None) -> Estimate:
    """Inverse probability weighting with an estimated membership propensity.

    No variance is reported; the estimator is a point-only competitor.
    """
    if alpha_hat is None:
        alpha_hat = estimate_propensity(pop, partition)
    idx = partition.certainty_idx
    prop = _logistic(pop.x[idx] @ np.asarray(alpha_hat, dtype=float))
    point = float(np.sum(pop.y[idx] / prop))
    return _make_estimate("IPW", point)


def y_dr(pop: Population, partition: Partition,
         alpha_hat: np.ndarray | None = None) -> Estimate:
    """Doubly robust estimator: IPW plus a regression correction on covariate totals."""
    if alpha_hat is None:
        alpha_hat = estimate_propensity(pop, partition)
    idx = partition.certainty_idx
    x_np, y_np_vals = pop.x[idx], pop.y[idx]
    prop = _logistic(x_np @ np.asarray(alpha_hat, dtype=float))
    beta = weighted_ls(x_np, y_np_vals, np.ones(len(idx)))
    ipw_point = float(np.sum(y_np_vals / prop))
    x_total = pop.x.sum(axis=0)
    x_ipw = (x_np / prop[:, None]).sum(axis=0)
    point = ipw_point + float((x_total - x_ipw) @ beta)
    return _make_estimate("DR", point)


def y_fusion(greg: Estimate, dr: Estimate, alpha: float) -> Estimate:
    """Convex combination alpha * GREG + (1 - alpha) * DR."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return _make_estimate("GREG_DR", alpha * greg.point + (1.0 - alpha) * dr.point)

"""Coefficient-homogeneity diagnostic between the two strata.

Compares FGLS regression coefficients fitted on the certainty stratum
and on the probability sample through a Wald-type quadratic form,
calibrated against a chi-square distribution with d degrees of freedom.
The two coefficient estimators come from disjoint population subsets, so
no covariance term enters the statistic.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import NotPositiveDefinite, SingularVariance
from .estimators import Estimate
from .numerics import chisq_sf, inv_spd, solve_spd
from .pilot import PilotVarianceModel, fit_power_variance, predict_sigma2


@dataclass(frozen=True)
class HomogeneityResult:
    beta_certainty: np.ndarray
    beta_probability: np.ndarray
    v_certainty: np.ndarray
    v_probability: np.ndarray
    statistic: float
    df: int
    p_value: float
    alpha: float
    reject: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "beta_certainty": [float(v) for v in self.beta_certainty],
                "beta_probability": [float(v) for v in self.beta_probability],
                "v_certainty": [float(v) for v in self.v_certainty.ravel()],
                "v_probability": [float(v) for v in self.v_probability.ravel()],
                "statistic": self.statistic,
                "df": self.df,
                "p_value": self.p_value,
                "alpha": self.alpha,
                "reject": self.reject,
            }
        )


def _sandwich(x, weights, meat_scale, residuals):
    """A^{-1} B A^{-1} with A = sum w_i x_i x_i' and B = sum meat_scale_i e_i^2 x_i x_i'."""
    bread = x.T @ (weights[:, None] * x)
    bread = (bread + bread.T) / 2.0
    inv_bread = inv_spd(bread)
    meat = x.T @ ((meat_scale * residuals**2)[:, None] * x)
    meat = (meat + meat.T) / 2.0
    return inv_bread @ meat @ inv_bread


def design_variance_meat(x_s, residuals, pi_s, tau2_s) -> np.ndarray:
    """Poisson design-variance meat sum (1-pi) (x e)(x e)' / (pi tau2)^2.

    This is the inner matrix of the coefficient design variance; the full
    estimate wraps it in the inverse weighted Gram matrix on both sides.
    """
    x_s = np.asarray(x_s, dtype=float)
    scale = (1.0 - pi_s) * residuals**2 / (pi_s * tau2_s) ** 2
    meat = x_s.T @ (scale[:, None] * x_s)
    return (meat + meat.T) / 2.0


def fgls_np(
    x: np.ndarray,
    y: np.ndarray,
    fgls_iterations: int = 1,
    model: PilotVarianceModel | None = None,
):
    """Certainty-stratum FGLS coefficient and its sandwich variance.

    A prefitted pilot variance model can be supplied to avoid refitting;
    otherwise the standard pilot fit runs first.  The sandwich uses the
    residuals at the final coefficient and the model's variance
    predictions, and stays consistent even when the variance model is
    misspecified.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if model is None:
        model = fit_power_variance(x, y, np.ones(len(y)), fgls_iterations)
    sigma2 = predict_sigma2(model, x)
    residuals = y - x @ model.beta
    v = _sandwich(x, 1.0 / sigma2, 1.0 / sigma2**2, residuals)
    return model.beta, v


def fgls_p(
    x_s: np.ndarray,
    y_s: np.ndarray,
    pi_s: np.ndarray,
    fgls_iterations: int = 1,
    include_model_variance: bool = False,
):
    """Probability-sample FGLS coefficient and its design-based variance.

    The per-unit variance proxies come from the same two-stage
    power-variance recipe as the pilot, with the first-stage regression
    weighted by inverse inclusion probabilities.  The design variance is
    the Poisson specialization

        M^{-1} [ sum (1-pi) (x e)(x e)' / (pi tau2)^2 ] M^{-1},

    with M = sum x x' / (pi tau2).  The model-variance sandwich is
    asymptotically dominated when the second-stage sampling fraction is
    small and is excluded by default; enabling it gives a statistic whose
    null calibration also holds at non-vanishing sampling fractions.
    """
    x_s = np.asarray(x_s, dtype=float)
    y_s = np.asarray(y_s, dtype=float)
    pi_s = np.asarray(pi_s, dtype=float)
    tau_model = fit_power_variance(x_s, y_s, 1.0 / pi_s, fgls_iterations)
    tau2 = predict_sigma2(tau_model, x_s)
    residuals = y_s - x_s @ tau_model.beta

    w = 1.0 / (pi_s * tau2)
    bread = x_s.T @ (w[:, None] * x_s)
    inv_bread = inv_spd((bread + bread.T) / 2.0)
    v = inv_bread @ design_variance_meat(x_s, residuals, pi_s, tau2) @ inv_bread
    if include_model_variance:
        v = v + _sandwich(x_s, w, w / tau2, residuals)
    return tau_model.beta, v


def homogeneity_test(np_fit, p_fit, alpha: float = 0.05) -> HomogeneityResult:
    """Wald quadratic form comparing the two stratum coefficient vectors."""
    beta_np, v_np = np_fit
    beta_p, v_p = p_fit
    diff = np.asarray(beta_np, dtype=float) - np.asarray(beta_p, dtype=float)
    total = np.asarray(v_np, dtype=float) + np.asarray(v_p, dtype=float)
    total = (total + total.T) / 2.0
    try:
        statistic = float(diff @ solve_spd(total, diff))
    except NotPositiveDefinite as err:
        raise SingularVariance(str(err)) from err
    statistic = max(statistic, 0.0)
    df = len(diff)
    p_value = chisq_sf(statistic, df)
    return HomogeneityResult(
        beta_certainty=np.asarray(beta_np, dtype=float),
        beta_probability=np.asarray(beta_p, dtype=float),
        v_certainty=np.asarray(v_np, dtype=float),
        v_probability=np.asarray(v_p, dtype=float),
        statistic=statistic,
        df=df,
        p_value=p_value,
        alpha=alpha,
        reject=bool(p_value < alpha),
    )


def adaptive_estimate(sep: Estimate, com: Estimate, test: HomogeneityResult) -> Estimate:
    """Separate estimator when homogeneity is rejected, combined otherwise."""
    chosen = sep if test.reject else com
    return Estimate(chosen.point, chosen.variance, chosen.ci_low, chosen.ci_high,
                    "adDI", chosen.level)

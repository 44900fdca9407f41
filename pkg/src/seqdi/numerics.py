"""Dependency-light numerical kernels.

Symmetric positive-definite solves, weighted least squares, logistic
maximum likelihood, the chi-square survival function, and a seeded
stream-based random number contract.  Everything here is a pure function
of its inputs except :class:`RngStream`, which is single-consumer.
"""

import math

import numpy as np

from .errors import NoConvergence, NotPositiveDefinite, Separation

# 97.5th standard normal quantile used for 95% Wald intervals.
Z_975 = 1.959964


class RngStream:
    """Reproducible random stream identified by (seed, stream_id).

    Identical (seed, stream_id) pairs yield identical draw sequences;
    distinct stream ids give statistically independent streams.  One
    stream must not be shared across concurrent consumers.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence((self.seed, self.stream_id)))
        )

    def uniform(self, size=None):
        return self._gen.uniform(size=size)

    def normal(self, mean=0.0, sd=1.0, size=None):
        return self._gen.normal(mean, sd, size=size)

    def bernoulli(self, p):
        """Independent Bernoulli indicators, one per entry of p."""
        p = np.asarray(p, dtype=float)
        return self._gen.uniform(size=p.shape) < p

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def solve_spd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b for symmetric positive-definite A by Cholesky.

    Raises NotPositiveDefinite when a pivot falls at or below
    1e-12 * trace(A)/d, which in regression callers signals collinear
    covariates.  A must be symmetric within 1e-10 relative to its
    largest entry.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = a.shape[0]
    if a.shape != (d, d):
        raise ValueError("matrix must be square")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")

    pivot_tol = 1e-12 * float(np.trace(a)) / d
    lower = np.zeros_like(a)
    for k in range(d):
        pivot = a[k, k] - lower[k, :k] @ lower[k, :k]
        if pivot <= pivot_tol:
            raise NotPositiveDefinite(f"pivot {pivot:.3e} at column {k}")
        lower[k, k] = math.sqrt(pivot)
        if k + 1 < d:
            lower[k + 1 :, k] = (a[k + 1 :, k] - lower[k + 1 :, :k] @ lower[k, :k]) / lower[k, k]

    # forward then back substitution
    z = np.zeros(d)
    for i in range(d):
        z[i] = (b[i] - lower[i, :i] @ z[:i]) / lower[i, i]
    x = np.zeros(d)
    for i in range(d - 1, -1, -1):
        x[i] = (z[i] - lower[i + 1 :, i] @ x[i + 1 :]) / lower[i, i]
    return x


def inv_spd(a: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix via column solves."""
    a = np.asarray(a, dtype=float)
    d = a.shape[0]
    out = np.column_stack([solve_spd(a, e) for e in np.eye(d)])
    return (out + out.T) / 2.0


def weighted_ls(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted least squares, argmin over beta of sum w_i (y_i - x_i'beta)^2.

    Requires nonnegative weights with at least d strictly positive ones;
    rank problems surface as NotPositiveDefinite from the normal equations.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    gram = x.T @ (w[:, None] * x)
    gram = (gram + gram.T) / 2.0
    return solve_spd(gram, x.T @ (w * y))


def _logistic(eta):
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ex = np.exp(eta[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _log_likelihood(eta, delta):
    # sum delta*eta - log(1+exp(eta)), stable for large |eta|
    return float(np.sum(delta * eta - np.logaddexp(0.0, eta)))


def logistic_fit(
    x: np.ndarray,
    delta: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 100,
    max_abs_coef: float = 30.0,
) -> np.ndarray:
    """Newton-Raphson MLE of logit P(delta=1 | x) = x'alpha.

    Halves the step while the log-likelihood decreases.  Raises
    Separation when any coefficient exceeds ``max_abs_coef`` in absolute
    value, and NoConvergence after ``max_iter`` iterations.
    """
    x = np.asarray(x, dtype=float)
    delta = np.asarray(delta, dtype=float)
    n, d = x.shape
    if n < d:
        raise ValueError("need at least as many rows as coefficients")
    if delta.min() == delta.max():
        raise ValueError("both classes must be present")

    alpha = np.zeros(d)
    eta = x @ alpha
    loglik = _log_likelihood(eta, delta)
    for _ in range(max_iter):
        p = _logistic(eta)
        wdiag = p * (1.0 - p)
        grad = x.T @ (delta - p)
        hess = x.T @ (wdiag[:, None] * x)
        hess = (hess + hess.T) / 2.0
        step = solve_spd(hess, grad)

        factor = 1.0
        for _ in range(30):
            cand = alpha + factor * step
            cand_eta = x @ cand
            cand_ll = _log_likelihood(cand_eta, delta)
            if cand_ll >= loglik - 1e-12:
                break
            factor /= 2.0
        alpha, eta, loglik = cand, cand_eta, cand_ll

        if np.max(np.abs(alpha)) > max_abs_coef:
            raise Separation("coefficient escaped toward infinity")
        if np.max(np.abs(factor * step)) <= tol:
            return alpha
    raise NoConvergence(f"no convergence in {max_iter} iterations")


def _lower_gamma_series(a, x):
    # regularized lower incomplete gamma P(a, x) by power series
    term = 1.0 / a
    total = term
    k = a
    for _ in range(1000):
        k += 1.0
        term *= x / k
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_gamma_cf(a, x):
    # regularized upper incomplete gamma Q(a, x) by Lentz continued fraction
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def chisq_sf(x: float, df: int) -> float:
    r"""Survival function P(chi2_df > x) of the chi-square distribution.

    Computed as the regularized upper incomplete gamma function
    Q(df/2, x/2), using the series expansion of P for x/2 < df/2 + 1 and
    the Lentz continued fraction for Q otherwise.  Absolute error is
    below 1e-10; at df = 2 the value equals exp(-x/2) to full precision.
    """
    if x < 0:
        raise ValueError("x must be nonnegative")
    if df < 1:
        raise ValueError("df must be a positive integer")
    a = df / 2.0
    xx = x / 2.0
    if xx == 0.0:
        return 1.0
    if xx < a + 1.0:
        return 1.0 - _lower_gamma_series(a, xx)
    return _upper_gamma_cf(a, xx)


def normal_quantile(p: float) -> float:
    """Standard normal quantile.

    Uses the pinned constant at p = 0.975 so that 95% Wald intervals are
    reproducible to the digit, and Acklam's rational approximation
    (|relative error| < 1.2e-9) elsewhere.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly between 0 and 1")
    if p == 0.975:
        return Z_975

    # Acklam's inverse normal CDF approximation
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)
    p_low, p_high = 0.02425, 1 - 0.02425
    if p < p_low:
        q = math.sqrt(-2 * math.log(p))
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1
        )
    if p <= p_high:
        q = p - 0.5
        r = q * q
        return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / (
            ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1
        )
    q = math.sqrt(-2 * math.log(1 - p))
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
        (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1
    )

"""Finite population synthesis, selection mechanisms, and CSV ingestion.

The synthetic population follows a scaled lognormal outcome model on two
uniform covariates, with the regression estimators working from the
covariate vector (1, x1, x2) that deliberately omits the interaction
used in the data-generating mean.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegeneratePartition,
    InvalidParams,
    MissingColumn,
    OutOfBracket,
    ParseError,
)
from .numerics import RngStream, _logistic


@dataclass(frozen=True)
class Population:
    """Fixed finite population: working design matrix X (first column 1) and outcome y."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if x.ndim != 2 or len(y) != x.shape[0]:
            raise InvalidParams("X must be N x d with one y per row")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidParams("population values must be finite")
        if not np.all(x[:, 0] == 1.0):
            raise InvalidParams("first column of X must be the intercept")

    @property
    def size(self) -> int:
        return self.x.shape[0]

    @property
    def true_total(self) -> float:
        return float(np.sum(self.y))


@dataclass
class SelectionMechanism:
    """Certainty-stratum selection model: logit(p) = intercept + slopes . features.

    kind "MAR" uses features (x1, x2); kind "NMAR" adds log(1 + y).
    The intercept is None until calibrated against a target rate.
    """

    kind: str
    slopes: tuple
    target_rate: float
    intercept: float | None = None

    def __post_init__(self):
        if self.kind not in ("MAR", "NMAR"):
            raise InvalidParams(f"unknown mechanism kind {self.kind!r}")
        want = 2 if self.kind == "MAR" else 3
        if len(self.slopes) != want:
            raise InvalidParams(f"{self.kind} mechanism needs {want} slopes")
        if not 0.0 < self.target_rate < 1.0:
            raise InvalidParams("target_rate must lie in (0, 1)")

    def linear_predictor(self, pop: Population) -> np.ndarray:
        """Slope part of the logit, without the intercept."""
        if pop.x.shape[1] < 3:
            raise InvalidParams("selection mechanisms need covariates x1 and x2")
        x1, x2 = pop.x[:, 1], pop.x[:, 2]
        eta = self.slopes[0] * x1 + self.slopes[1] * x2
        if self.kind == "NMAR":
            if np.any(pop.y < 0):
                raise InvalidParams("NMAR selection requires nonnegative y")
            eta = eta + self.slopes[2] * np.log1p(pop.y)
        return eta

    def probabilities(self, pop: Population) -> np.ndarray:
        if self.intercept is None:
            raise InvalidParams("mechanism is not calibrated")
        return _logistic(self.intercept + self.linear_predictor(pop))


@dataclass(frozen=True)
class Partition:
    """Split of the population into the certainty stratum and its complement."""

    delta: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.delta)
        if d.dtype != bool:
            if not np.all((d == 0) | (d == 1)):
                raise InvalidParams("delta must be 0/1")
            d = d.astype(bool)
        object.__setattr__(self, "delta", d)

    @property
    def certainty_idx(self) -> np.ndarray:
        return np.flatnonzero(self.delta)

    @property
    def complement_idx(self) -> np.ndarray:
        return np.flatnonzero(~self.delta)

    @property
    def n_certainty(self) -> int:
        return int(np.sum(self.delta))

    @property
    def n_complement(self) -> int:
        return int(len(self.delta) - self.n_certainty)


def generate_population(params: dict, rng: RngStream) -> Population:
    """Generate the lognormal population.

    params holds N, beta (four mean coefficients including the x1*x2
    interaction) and sigma.  Outcomes are mu_i * exp(eps_i) with
    eps_i ~ N(-sigma^2/2, sigma^2), so E(y|x) = mu.  The stored working
    covariates are (1, x1, x2); the interaction stays out of X.
    """
    n = int(params["N"])
    b0, b1, b2, b3 = (float(v) for v in params["beta"])
    sigma = float(params["sigma"])
    if n < 10:
        raise InvalidParams("N must be at least 10")
    if sigma <= 0:
        raise InvalidParams("sigma must be positive")

    x1 = rng.uniform(size=n)
    x2 = rng.uniform(size=n)
    mu = b0 + b1 * x1 + b2 * x2 + b3 * x1 * x2
    if np.any(mu <= 0):
        raise InvalidParams("mean function must stay positive")
    eps = rng.normal(-sigma**2 / 2.0, sigma, size=n)
    y = mu * np.exp(eps)
    return Population(x=np.column_stack([np.ones(n), x1, x2]), y=y)


def calibrate_intercept(mech: SelectionMechanism, pop: Population) -> float:
    """Intercept making the mean selection probability hit the target rate.

    Bisection on [-50, 50]; the map from intercept to mean probability is
    strictly increasing, so the root is unique when bracketed.
    """
    eta = mech.linear_predictor(pop)
    target = mech.target_rate

    def mean_prob(a0):
        return float(np.mean(_logistic(a0 + eta)))

    lo, hi = -50.0, 50.0
    if mean_prob(lo) > target or mean_prob(hi) < target:
        raise OutOfBracket("target rate unattainable with intercept in [-50, 50]")
    for _ in range(200):
        mid = (lo + hi) / 2.0
        value = mean_prob(mid)
        if abs(value - target) <= 1e-10:
            return mid
        if value < target:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


def draw_nonprob(pop: Population, mech: SelectionMechanism, rng: RngStream) -> Partition:
    """Draw certainty-stratum membership as independent Bernoulli indicators."""
    p = mech.probabilities(pop)
    delta = rng.bernoulli(p)
    if delta.all() or not delta.any():
        raise DegeneratePartition("selection left an empty stratum")
    return Partition(delta=delta)


@dataclass
class PopulationData:
    """A population loaded from CSV, plus whatever optional columns it carried."""

    population: Population
    partition: Partition | None = None
    pi: np.ndarray | None = None
    ids: list = field(default_factory=list)


def _parse_float(raw: str, row: int, column: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ParseError(
            f"non-numeric value {raw!r} in row {row}, column {column!r}",
            row=row,
            column=column,
        ) from None


def load_population_csv(path) -> PopulationData:
    """Read a population file.

    Required columns: id, y.  Covariates arrive as x1, x2, ... and an
    intercept column is prepended.  Optional delta (0/1 certainty-stratum
    membership) and pi (realized inclusion probabilities) columns are
    returned when present.  Missing values are not permitted; data rows
    are numbered from 1 in error messages.
    """
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        for required in ("id", "y"):
            if required not in header:
                raise MissingColumn(f"column {required!r} is required")
        xcols = sorted(
            (c for c in header if c.startswith("x") and c[1:].isdigit()),
            key=lambda c: int(c[1:]),
        )
        has_delta = "delta" in header
        has_pi = "pi" in header

        ids, ys, xs, deltas, pis = [], [], [], [], []
        for i, record in enumerate(reader, start=1):
            if any(v is None or v == "" for v in record.values()):
                raise ParseError(f"missing value in row {i}", row=i)
            ids.append(record["id"])
            ys.append(_parse_float(record["y"], i, "y"))
            xs.append([_parse_float(record[c], i, c) for c in xcols])
            if has_delta:
                value = record["delta"].strip()
                if value not in ("0", "1"):
                    raise ParseError(
                        f"delta must be 0 or 1 in row {i}", row=i, column="delta"
                    )
                deltas.append(int(value))
            if has_pi:
                pis.append(_parse_float(record["pi"], i, "pi"))

    n = len(ids)
    if n == 0:
        raise ParseError("file has no data rows", row=0)
    x = np.column_stack([np.ones(n)] + [np.asarray(col, dtype=float) for col in zip(*xs)]) \
        if xcols else np.ones((n, 1))
    pop = Population(x=x, y=np.asarray(ys, dtype=float))
    part = Partition(delta=np.asarray(deltas)) if has_delta else None
    pi = np.asarray(pis, dtype=float) if has_pi else None
    return PopulationData(population=pop, partition=part, pi=pi, ids=ids)


def save_population_csv(path, pop: Population, partition: Partition | None = None,
                        pi: np.ndarray | None = None, ids=None) -> None:
    """Write a population file that reloads to exactly the same values."""
    n = pop.size
    d = pop.x.shape[1]
    ids = ids if ids is not None else [str(i + 1) for i in range(n)]
    header = ["id"] + [f"x{j}" for j in range(1, d)] + ["y"]
    if partition is not None:
        header.append("delta")
    if pi is not None:
        header.append("pi")
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for i in range(n):
            row = [ids[i]] + [repr(float(v)) for v in pop.x[i, 1:]] + [repr(float(pop.y[i]))]
            if partition is not None:
                row.append(str(int(partition.delta[i])))
            if pi is not None:
                row.append(repr(float(pi[i])))
            writer.writerow(row)

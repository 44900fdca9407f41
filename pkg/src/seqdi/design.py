"""Second-stage Poisson designs on the complement stratum.

Three allocations: anticipated-variance optimal (inclusion probability
proportional to the predicted conditional standard deviation), equal
probability, and probability proportional to size.  The optimal and
equal designs enforce the probability floor of 0.01; the PPS design only
truncates at 1, so it keeps the raw proportional-to-size behavior (and
its instability when tiny sizes occur).  Rescaling of unconstrained
units preserves the expected size whenever the bounds leave room.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import EmptySample, Infeasible, NonpositiveSize
from .numerics import RngStream
from .pilot import PilotVarianceModel, predict_sigma2

PI_FLOOR = 0.01


@dataclass(frozen=True)
class SecondStageDesign:
    """Inclusion probabilities over the complement-stratum units."""

    indices: np.ndarray
    pi: np.ndarray
    kind: str
    expected_size: float

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=int))
        object.__setattr__(self, "pi", np.asarray(self.pi, dtype=float))
        if len(self.indices) != len(self.pi):
            raise ValueError("one probability per unit")
        if np.any(self.pi <= 0.0) or np.any(self.pi > 1.0 + 1e-12):
            raise ValueError("inclusion probabilities must lie in (0, 1]")
        floor = PI_FLOOR if self.kind in ("optimal", "equal") else 0.0
        if np.any(self.pi < floor - 1e-12):
            raise ValueError(f"{self.kind} design must respect the {floor} floor")


@dataclass(frozen=True)
class DrawnSample:
    """Realized Poisson sample: selected unit ids and their design probabilities."""

    members: np.ndarray
    pi_realized: np.ndarray

    @property
    def size(self) -> int:
        return len(self.members)


def _scale_clamp_rescale(raw: np.ndarray, n_p: float, floor: float) -> np.ndarray:
    """Scale raw scores to sum n_p, clamping at [floor, 1] and rescaling the rest.

    Clamped units never unclamp, so the loop ends within len(raw) passes.
    A zero floor disables the lower clamp (probabilities stay positive
    because the raw scores are).
    """
    n1 = len(raw)
    if not 1 <= n_p <= n1:
        raise Infeasible(f"expected size {n_p} outside [1, {n1}]")
    if floor * n1 > n_p + 1e-12:
        raise Infeasible(f"floor {floor} over {n1} units already exceeds size {n_p}")

    pi = np.empty(n1)
    at_ceiling = np.zeros(n1, dtype=bool)
    at_floor = np.zeros(n1, dtype=bool)
    for _ in range(n1 + 1):
        free = ~(at_ceiling | at_floor)
        budget = n_p - np.sum(at_ceiling) - floor * np.sum(at_floor)
        if not free.any():
            break
        total_free = float(np.sum(raw[free]))
        if total_free <= 0.0 or budget <= 0.0:
            at_floor |= free
            break
        pi[free] = raw[free] * (budget / total_free)
        over = free & (pi > 1.0)
        under = free & (pi < floor)
        if not (over.any() or under.any()):
            break
        at_ceiling |= over
        at_floor |= under
    pi[at_ceiling] = 1.0
    pi[at_floor] = floor
    return pi


def optimal_probabilities(
    model: PilotVarianceModel, x_complement: np.ndarray, n_p: int,
    indices: np.ndarray | None = None,
) -> SecondStageDesign:
    """Estimated-optimal Poisson design: pi proportional to predicted std dev.

    Minimizes anticipated variance of the separate regression estimator
    under the working variance model; probabilities are scale free in the
    outcome because the normalization cancels the variance scale.
    """
    sd = np.sqrt(predict_sigma2(model, x_complement))
    pi = _scale_clamp_rescale(sd, n_p, PI_FLOOR)
    idx = indices if indices is not None else np.arange(len(pi))
    return SecondStageDesign(indices=idx, pi=pi, kind="optimal", expected_size=float(n_p))


def equal_probabilities(
    n_complement: int, n_p: int, indices: np.ndarray | None = None
) -> SecondStageDesign:
    """Equal-probability Poisson design, pi = n_p / N1 for every unit."""
    if not 1 <= n_p <= n_complement:
        raise Infeasible(f"expected size {n_p} outside [1, {n_complement}]")
    value = n_p / n_complement
    if value < PI_FLOOR - 1e-12:
        raise Infeasible(f"uniform probability {value:.4f} below the {PI_FLOOR} floor")
    idx = indices if indices is not None else np.arange(n_complement)
    return SecondStageDesign(
        indices=idx,
        pi=np.full(n_complement, min(value, 1.0)),
        kind="equal",
        expected_size=float(n_p),
    )


def pps_probabilities(
    size_var: np.ndarray, n_p: int, indices: np.ndarray | None = None
) -> SecondStageDesign:
    """Poisson PPS design, pi proportional to a positive size variable.

    No probability floor is applied: only truncation at 1 with rescaling,
    so small sizes produce genuinely small inclusion probabilities.
    """
    size_var = np.asarray(size_var, dtype=float)
    if np.any(size_var <= 0):
        raise NonpositiveSize("size values must all be positive")
    pi = _scale_clamp_rescale(size_var, n_p, 0.0)
    idx = indices if indices is not None else np.arange(len(pi))
    return SecondStageDesign(indices=idx, pi=pi, kind="pps", expected_size=float(n_p))


def poisson_draw(design: SecondStageDesign, rng: RngStream) -> DrawnSample:
    """Independent Bernoulli(pi_i) inclusion; raises EmptySample on an empty draw."""
    selected = rng.bernoulli(design.pi)
    if not selected.any():
        raise EmptySample("no unit selected")
    return DrawnSample(
        members=design.indices[selected], pi_realized=design.pi[selected]
    )


def design_to_csv(design: SecondStageDesign, path, ids=None, seed=None) -> None:
    """Write id, pi, kind rows; ids default to the design indices."""
    ids = ids if ids is not None else [str(int(i)) for i in design.indices]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        if seed is not None:
            handle.write(f"# seed={seed}\n")
        writer = csv.writer(handle)
        writer.writerow(["id", "pi", "kind"])
        for unit, p in zip(ids, design.pi):
            writer.writerow([unit, repr(float(p)), design.kind])

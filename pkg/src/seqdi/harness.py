"""Monte Carlo engine for the sequential data-integration experiments.

A run fixes one finite population, then repeatedly draws the
non-probability stratum (or conditions on a supplied one), fits the
pilot variance model, constructs second-stage designs, draws Poisson
samples, and computes the requested estimators plus the coefficient
homogeneity test.  Replications are independent with stream id equal to
the replication index, so results are identical regardless of worker
count, and aggregation runs in replication order to keep summaries
bit-reproducible.
"""

import concurrent.futures
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import design as design_mod
from . import estimators as est
from . import homogeneity as homog
from .errors import ConfigError, DegenerateMetrics, EmptySample, InvalidParams
from .numerics import RngStream, normal_quantile
from .pilot import fit_power_variance
from .population import (
    SelectionMechanism,
    calibrate_intercept,
    draw_nonprob,
    generate_population,
    load_population_csv,
)

SEQUENTIAL_TAGS = ("DI", "HT_seq", "sepDI_b", "sepDI_sigma", "comDI_sigma", "adDI")
FRAME_TAGS = ("GREG", "IPW", "DR", "GREG_DR")
ALL_TAGS = SEQUENTIAL_TAGS + FRAME_TAGS
DESIGN_KINDS = ("optimal", "equal", "pps")
VARIANCE_TAGS = set(SEQUENTIAL_TAGS) | {"GREG"}

DEFAULT_SLOPES = {"MAR": (2.0, -2.0), "NMAR": (2.0, -2.0, 0.5)}
MAX_REDRAWS = 20


@dataclass
class McConfig:
    replications: int
    seed: int = 20240901
    mechanism: str = "MAR"
    f_np: float = 0.70
    f_p: float = 0.40
    designs: tuple = ("optimal",)
    estimators: tuple = SEQUENTIAL_TAGS
    alpha: float = 0.05
    level: float = 0.95
    population_params: dict | None = None
    population_csv: str | None = None
    slopes: tuple | None = None
    n_p: int | None = None
    fgls_iterations: int = 1
    include_model_variance: bool = False
    run_test: bool = True

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if self.mechanism not in ("MAR", "NMAR", "FixedPartition"):
            raise ConfigError(f"unknown mechanism {self.mechanism!r}")
        for frac in (self.f_np, self.f_p):
            if not 0.0 < frac < 1.0:
                raise ConfigError("sampling fractions must lie in (0, 1)")
        self.designs = tuple(self.designs)
        self.estimators = tuple(self.estimators)
        for kind in self.designs:
            if kind not in DESIGN_KINDS:
                raise ConfigError(f"unknown design kind {kind!r}")
        if len(set(self.designs)) != len(self.designs) or not self.designs:
            raise ConfigError("designs must be a nonempty list without duplicates")
        for tag in self.estimators:
            if tag not in ALL_TAGS:
                raise ConfigError(f"unknown estimator {tag!r}")
        if not self.estimators:
            raise ConfigError("estimators must be a nonempty list")
        if self.mechanism == "FixedPartition" and self.population_csv is None:
            raise ConfigError("FixedPartition mode needs population_csv with a delta column")
        if self.population_params is None and self.population_csv is None:
            raise ConfigError("either population_params or population_csv is required")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0.0 < self.level < 1.0:
            raise ConfigError("level must lie in (0, 1)")
        if self.fgls_iterations < 0:
            raise ConfigError("fgls_iterations must be nonnegative")


@dataclass
class ArmMetrics:
    estimator: str
    design: str
    rb: float
    rrmse: float
    var_ratio: float | None
    coverage: float | None
    points: np.ndarray = field(repr=False)
    variances: np.ndarray | None = field(repr=False, default=None)


@dataclass
class TestSummary:
    design: str
    replications: int
    alpha: float
    reject_rate: float
    mean_p: float
    median_p: float
    p_values: np.ndarray = field(repr=False, default=None)


@dataclass
class McSummary:
    y_true: float
    replications: int
    seed: int
    mechanism: str
    arms: list
    tests: list
    level: float = 0.95


def metrics(points, variances, y_true, level=0.95):
    """Relative bias and RRMSE in percent, variance ratio, and coverage.

    var_ratio is the mean plug-in variance over the (R-1)-denominator
    Monte Carlo variance; coverage counts Wald intervals containing the
    target.  Both need variances and at least two replications.
    """
    points = np.asarray(points, dtype=float)
    if y_true == 0:
        raise ValueError("relative measures need a nonzero target")
    re = 100.0 * (points - y_true) / y_true
    out = {
        "rb": float(np.mean(re)),
        "rrmse": float(math.sqrt(np.mean(re**2))),
        "var_ratio": None,
        "coverage": None,
    }
    if variances is not None:
        if len(points) < 2:
            raise DegenerateMetrics("variance-based metrics need at least 2 replications")
        variances = np.asarray(variances, dtype=float)
        v_mc = float(np.var(points, ddof=1))
        out["var_ratio"] = float(np.mean(variances) / v_mc) if v_mc > 0 else None
        z = normal_quantile((1.0 + level) / 2.0)
        covered = np.abs(points - y_true) <= z * np.sqrt(variances)
        out["coverage"] = float(np.mean(covered))
    return out


def _build_population(config: McConfig):
    if config.population_csv is not None:
        data = load_population_csv(config.population_csv)
        return data.population, data.partition
    pop = generate_population(config.population_params, RngStream(config.seed, 0))
    return pop, None


def _plan(config: McConfig):
    """Resolve which quantities each replication must compute."""
    requested = set(config.estimators)
    if config.mechanism == "FixedPartition":
        requested -= set(FRAME_TAGS)
        if not requested:
            raise ConfigError("FixedPartition mode reports sequential estimators only")
    computed = set(requested)
    if "adDI" in computed:
        computed |= {"sepDI_sigma", "comDI_sigma"}
    if "GREG_DR" in computed:
        computed |= {"GREG", "DR"}
    need_test = config.run_test or "adDI" in computed
    need_pilot = (
        "optimal" in config.designs
        or bool(computed & {"sepDI_sigma", "comDI_sigma", "adDI"})
        or need_test
    )
    need_propensity = bool(computed & {"IPW", "DR"})
    need_ind_sample = bool(computed & {"GREG", "GREG_DR"})
    return {
        "requested": requested,
        "computed": computed,
        "need_test": need_test,
        "need_pilot": need_pilot,
        "need_propensity": need_propensity,
        "need_ind_sample": need_ind_sample,
    }


def _draw_with_retry(dsgn, rng, context):
    for _ in range(MAX_REDRAWS):
        try:
            return design_mod.poisson_draw(dsgn, rng)
        except EmptySample:
            continue
    raise EmptySample(f"{context}: empty sample after {MAX_REDRAWS} redraws")


def _build_design(kind, pop, u1, n_p, pilot):
    x_u1 = pop.x[u1]
    if kind == "optimal":
        return design_mod.optimal_probabilities(pilot, x_u1, n_p, indices=u1)
    if kind == "equal":
        return design_mod.equal_probabilities(len(u1), n_p, indices=u1)
    if pop.x.shape[1] < 2:
        raise InvalidParams("pps design needs a size covariate x1")
    return design_mod.pps_probabilities(x_u1[:, 1], n_p, indices=u1)


def _replicate(r, config, pop, mech, fixed):
    """One Monte Carlo replication; all randomness comes from stream id r + 1."""
    plan = fixed["plan"]
    rng = RngStream(config.seed, r + 1)
    y, x = pop.y, pop.x
    level = config.level

    if config.mechanism == "FixedPartition":
        partition = fixed["partition"]
        pilot = fixed["pilot"]
        np_fit = fixed["np_fit"]
        designs = fixed["designs"]
    else:
        partition = draw_nonprob(pop, mech, rng)
        s_np = partition.certainty_idx
        pilot = (
            fit_power_variance(x[s_np], y[s_np], np.ones(len(s_np)), config.fgls_iterations)
            if plan["need_pilot"]
            else None
        )
        np_fit = (
            homog.fgls_np(x[s_np], y[s_np], model=pilot) if plan["need_test"] else None
        )
        designs = None

    s_np = partition.certainty_idx
    u1 = partition.complement_idx
    y_np_vals, x_np = y[s_np], x[s_np]
    n1 = len(u1)
    x_total_u1 = x[u1].sum(axis=0)
    n_p = config.n_p if config.n_p is not None else int(config.f_p * n1)

    points, variances, tests = {}, {}, {}
    computed = plan["computed"]
    seq_needed = computed & set(SEQUENTIAL_TAGS)

    for kind in config.designs:
        dsgn = designs[kind] if designs is not None else _build_design(kind, pop, u1, n_p, pilot)
        sample = _draw_with_retry(dsgn, rng, f"replication {r}, design {kind}")
        y_s, x_s, pi_s = y[sample.members], x[sample.members], sample.pi_realized

        results = {}
        if "DI" in seq_needed:
            results["DI"] = est.y_di(y_np_vals, y_s, pi_s, n1, level)
        if "HT_seq" in seq_needed:
            results["HT_seq"] = est.y_ht_seq(y_np_vals, y_s, pi_s, level)
        if "sepDI_b" in seq_needed:
            results["sepDI_b"] = est.y_sep_di(
                y_np_vals, y_s, x_s, pi_s, x_total_u1,
                est.WeightSpec("inverse_pi"), None, level, tag="sepDI_b",
            )
        if "sepDI_sigma" in seq_needed:
            results["sepDI_sigma"] = est.y_sep_di(
                y_np_vals, y_s, x_s, pi_s, x_total_u1,
                est.WeightSpec("inverse_pi_sigma"), pilot, level, tag="sepDI_sigma",
            )
        if "comDI_sigma" in seq_needed:
            results["comDI_sigma"] = est.y_com_di(
                y_np_vals, x_np, y_s, x_s, pi_s, x_total_u1,
                est.WeightSpec("inverse_pi_sigma"), pilot, level, tag="comDI_sigma",
            )
        if plan["need_test"]:
            p_fit = homog.fgls_p(
                x_s, y_s, pi_s, config.fgls_iterations, config.include_model_variance
            )
            test = homog.homogeneity_test(np_fit, p_fit, config.alpha)
            tests[kind] = (test.p_value, test.reject)
            if "adDI" in seq_needed:
                results["adDI"] = homog.adaptive_estimate(
                    results["sepDI_sigma"], results["comDI_sigma"], test
                )
        for tag, estimate in results.items():
            if tag in plan["requested"]:
                points[(tag, kind)] = estimate.point
                variances[(tag, kind)] = (
                    estimate.variance if estimate.variance is not None else np.nan
                )

    frame_needed = computed & set(FRAME_TAGS)
    if frame_needed:
        frame = {}
        alpha_hat = (
            est.estimate_propensity(pop, partition) if plan["need_propensity"] else None
        )
        if "IPW" in frame_needed:
            frame["IPW"] = est.y_ipw(pop, partition, alpha_hat)
        if "DR" in frame_needed:
            frame["DR"] = est.y_dr(pop, partition, alpha_hat)
        if plan["need_ind_sample"]:
            n_ind = int(config.f_p * (1.0 - config.f_np) * pop.size)
            ind_design = design_mod.equal_probabilities(pop.size, n_ind)
            ind_sample = _draw_with_retry(
                ind_design, rng, f"replication {r}, independent sample"
            )
            frame["GREG"] = est.y_greg_independent(
                pop.x.sum(axis=0),
                y[ind_sample.members],
                x[ind_sample.members],
                ind_sample.pi_realized,
                level,
            )
            if "GREG_DR" in frame_needed:
                size_alpha = ind_sample.size / (ind_sample.size + len(s_np))
                frame["GREG_DR"] = est.y_fusion(frame["GREG"], frame["DR"], size_alpha)
        for tag, estimate in frame.items():
            if tag in plan["requested"]:
                points[(tag, "")] = estimate.point
                variances[(tag, "")] = (
                    estimate.variance if estimate.variance is not None else np.nan
                )

    return points, variances, tests


_WORKER_GLOBALS = {}


def _init_worker(config, pop, mech, fixed):
    _WORKER_GLOBALS["args"] = (config, pop, mech, fixed)


def _run_one(r):
    config, pop, mech, fixed = _WORKER_GLOBALS["args"]
    return _replicate(r, config, pop, mech, fixed)


def run_mc(config: McConfig, threads: int = 1, progress: bool = False) -> McSummary:
    """Execute the Monte Carlo experiment described by ``config``.

    ``threads`` only controls process-level parallelism; summaries are
    identical for any worker count because replication r consumes stream
    id r + 1 and aggregation is ordered by replication index.
    """
    pop, loaded_partition = _build_population(config)
    plan = _plan(config)

    mech = None
    if config.mechanism in ("MAR", "NMAR"):
        slopes = tuple(config.slopes) if config.slopes is not None else DEFAULT_SLOPES[config.mechanism]
        mech = SelectionMechanism(config.mechanism, slopes, config.f_np)
        mech.intercept = calibrate_intercept(mech, pop)

    fixed = {"plan": plan, "partition": None, "pilot": None, "np_fit": None, "designs": None}
    if config.mechanism == "FixedPartition":
        if loaded_partition is None:
            raise ConfigError("population_csv lacks the delta column")
        partition = loaded_partition
        s_np, u1 = partition.certainty_idx, partition.complement_idx
        pilot = (
            fit_power_variance(
                pop.x[s_np], pop.y[s_np], np.ones(len(s_np)), config.fgls_iterations
            )
            if plan["need_pilot"]
            else None
        )
        np_fit = (
            homog.fgls_np(pop.x[s_np], pop.y[s_np], model=pilot)
            if plan["need_test"]
            else None
        )
        n_p = config.n_p if config.n_p is not None else int(config.f_p * len(u1))
        designs = {
            kind: _build_design(kind, pop, u1, n_p, pilot) for kind in config.designs
        }
        fixed.update(partition=partition, pilot=pilot, np_fit=np_fit, designs=designs)

    n_rep = config.replications
    results = [None] * n_rep
    if threads <= 1:
        _init_worker(config, pop, mech, fixed)
        step = max(1, n_rep // 20)
        for r in range(n_rep):
            results[r] = _replicate(r, config, pop, mech, fixed)
            if progress and (r + 1) % step == 0:
                print(f"replication {r + 1}/{n_rep}", file=sys.stderr, flush=True)
    else:
        chunk = max(1, n_rep // (threads * 8))
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=threads,
            initializer=_init_worker,
            initargs=(config, pop, mech, fixed),
        ) as pool:
            for r, res in enumerate(pool.map(_run_one, range(n_rep), chunksize=chunk)):
                results[r] = res
                if progress and (r + 1) % max(1, n_rep // 20) == 0:
                    print(f"replication {r + 1}/{n_rep}", file=sys.stderr, flush=True)

    return _aggregate(config, pop, plan, results)


def _aggregate(config, pop, plan, results):
    n_rep = config.replications
    arm_keys = []
    for tag in config.estimators:
        if tag in SEQUENTIAL_TAGS:
            if tag in plan["requested"]:
                arm_keys.extend((tag, kind) for kind in config.designs)
        elif tag in plan["requested"]:
            arm_keys.append((tag, ""))

    arms = []
    for key in arm_keys:
        pts = np.array([res[0][key] for res in results], dtype=float)
        has_var = key[0] in VARIANCE_TAGS
        vrs = (
            np.array([res[1][key] for res in results], dtype=float) if has_var else None
        )
        if n_rep >= 2:
            m = metrics(pts, vrs, pop.true_total, config.level)
        else:
            m = metrics(pts, None, pop.true_total, config.level)
            m["var_ratio"] = None
            m["coverage"] = None
        arms.append(
            ArmMetrics(
                estimator=key[0], design=key[1], rb=m["rb"], rrmse=m["rrmse"],
                var_ratio=m["var_ratio"], coverage=m["coverage"],
                points=pts, variances=vrs,
            )
        )

    tests = []
    if plan["need_test"] and config.run_test:
        for kind in config.designs:
            p_values = np.array([res[2][kind][0] for res in results], dtype=float)
            rejects = np.array([res[2][kind][1] for res in results], dtype=bool)
            tests.append(
                TestSummary(
                    design=kind,
                    replications=n_rep,
                    alpha=config.alpha,
                    reject_rate=float(np.mean(rejects)),
                    mean_p=float(np.mean(p_values)),
                    median_p=float(np.median(p_values)),
                    p_values=p_values,
                )
            )

    return McSummary(
        y_true=pop.true_total,
        replications=n_rep,
        seed=config.seed,
        mechanism=config.mechanism,
        arms=arms,
        tests=tests,
        level=config.level,
    )


def _fmt(value):
    return "" if value is None else repr(float(value))


def emit_results(summary: McSummary, out_dir) -> list:
    """Write summary, test summary, per-replication errors, and metadata files."""
    os.makedirs(out_dir, exist_ok=True)
    header_line = f"# seed={summary.seed}\n"
    paths = []

    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "w", newline="", encoding="utf-8") as handle:
        handle.write(header_line)
        writer = csv.writer(handle)
        writer.writerow(["Estimator", "Design", "RB", "RRMSE", "VarRatio", "Coverage"])
        for arm in summary.arms:
            writer.writerow(
                [arm.estimator, arm.design, _fmt(arm.rb), _fmt(arm.rrmse),
                 _fmt(arm.var_ratio), _fmt(arm.coverage)]
            )
    paths.append(summary_path)

    test_path = os.path.join(out_dir, "test_summary.csv")
    with open(test_path, "w", newline="", encoding="utf-8") as handle:
        handle.write(header_line)
        writer = csv.writer(handle)
        writer.writerow(["Design", "R", "alpha", "reject_rate", "mean_p", "median_p"])
        for ts in summary.tests:
            writer.writerow(
                [ts.design, ts.replications, _fmt(ts.alpha), _fmt(ts.reject_rate),
                 _fmt(ts.mean_p), _fmt(ts.median_p)]
            )
    paths.append(test_path)

    errors_path = os.path.join(out_dir, "replication_errors.csv")
    with open(errors_path, "w", newline="", encoding="utf-8") as handle:
        handle.write(header_line)
        writer = csv.writer(handle)
        writer.writerow(["rep", "estimator", "design", "point", "variance", "re"])
        for arm in summary.arms:
            re = 100.0 * (arm.points - summary.y_true) / summary.y_true
            for r in range(len(arm.points)):
                var = "" if arm.variances is None else repr(float(arm.variances[r]))
                writer.writerow(
                    [r, arm.estimator, arm.design, repr(float(arm.points[r])), var,
                     repr(float(re[r]))]
                )
    paths.append(errors_path)

    meta_path = os.path.join(out_dir, "run_metadata.json")
    with open(meta_path, "w", encoding="utf-8") as handle:
        json.dump(
            {
                "seed": summary.seed,
                "replications": summary.replications,
                "mechanism": summary.mechanism,
                "y_true": summary.y_true,
                "level": summary.level,
                "boxplot_truncation_quantiles": {"estimators_panel": 0.999,
                                                 "designs_panel": 0.99},
            },
            handle,
            indent=2,
        )
    paths.append(meta_path)
    return paths


def read_replication_errors(path):
    """Reload the per-replication file into arrays keyed by (estimator, design)."""
    out = {}
    with open(path, newline="", encoding="utf-8") as handle:
        rows = [line for line in handle if not line.startswith("#")]
    reader = csv.DictReader(rows)
    for record in reader:
        key = (record["estimator"], record["design"])
        entry = out.setdefault(key, {"points": [], "variances": [], "re": []})
        entry["points"].append(float(record["point"]))
        entry["variances"].append(
            float(record["variance"]) if record["variance"] != "" else np.nan
        )
        entry["re"].append(float(record["re"]))
    for entry in out.values():
        for name in ("points", "variances", "re"):
            entry[name] = np.asarray(entry[name], dtype=float)
    return out

"""Command-line front end.

Subcommands: ``simulate`` runs a Monte Carlo experiment from a JSON
config, ``design`` builds second-stage inclusion probabilities from CSV
inputs, ``estimate`` evaluates the sequential estimators on a realized
sample, and ``test`` runs the coefficient-homogeneity diagnostic.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import estimators as est
from . import homogeneity as homog
from .design import design_to_csv, equal_probabilities, optimal_probabilities, pps_probabilities
from .errors import ConfigError, SeqdiError, SingularVariance
from .harness import DESIGN_KINDS, McConfig, emit_results, run_mc
from .pilot import fit_pilot
from .population import load_population_csv

DEFAULT_SEED = 20240901

_SCHEMA = {
    "replications": ("integer", int),
    "seed": ("integer", int),
    "mechanism": ("string", str),
    "f_np": ("number", (int, float)),
    "f_p": ("number", (int, float)),
    "designs": ("array of strings", list),
    "estimators": ("array of strings", list),
    "alpha": ("number", (int, float)),
    "level": ("number", (int, float)),
    "population": ("object with N, beta, sigma", dict),
    "population_csv": ("string", str),
    "slopes": ("array of numbers", list),
    "n_p": ("integer", int),
    "fgls_iterations": ("integer", int),
    "include_model_variance": ("boolean", bool),
    "run_test": ("boolean", bool),
}


def _validate_config(raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    for key, value in raw.items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        expected_name, expected_type = _SCHEMA[key]
        if isinstance(value, bool) and expected_type in (int, (int, float)):
            raise ConfigError(f"config key {key!r} must be a {expected_name}")
        if not isinstance(value, expected_type):
            raise ConfigError(f"config key {key!r} must be a {expected_name}")
    if "replications" not in raw:
        raise ConfigError("config key 'replications' is required (integer)")
    if "population" in raw:
        popblock = raw["population"]
        for key, name in (("N", "integer"), ("beta", "array of 4 numbers"),
                          ("sigma", "number")):
            if key not in popblock:
                raise ConfigError(f"config key 'population.{key}' is required ({name})")
        if not isinstance(popblock["N"], int) or isinstance(popblock["N"], bool):
            raise ConfigError("config key 'population.N' must be an integer")
        beta = popblock["beta"]
        if not isinstance(beta, list) or len(beta) != 4 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in beta
        ):
            raise ConfigError("config key 'population.beta' must be an array of 4 numbers")
        if not isinstance(popblock["sigma"], (int, float)):
            raise ConfigError("config key 'population.sigma' must be a number")
        extra = set(popblock) - {"N", "beta", "sigma"}
        if extra:
            raise ConfigError(f"unknown config key 'population.{sorted(extra)[0]}'")
    return raw


def _config_from_json(path, seed_flag, full_scale):
    try:
        with open(path, encoding="utf-8") as handle:
            raw = json.load(handle)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config: {err}") from err
    raw = _validate_config(raw)
    kwargs = dict(raw)
    if "population" in kwargs:
        kwargs["population_params"] = kwargs.pop("population")
    if seed_flag is not None:
        kwargs["seed"] = seed_flag
    kwargs.setdefault("seed", DEFAULT_SEED)
    if full_scale:
        kwargs["replications"] = 100_000
    if "designs" in kwargs:
        kwargs["designs"] = tuple(kwargs["designs"])
    if "estimators" in kwargs:
        kwargs["estimators"] = tuple(kwargs["estimators"])
    if "slopes" in kwargs:
        kwargs["slopes"] = tuple(kwargs["slopes"])
    return McConfig(**kwargs)


def _print_summary(summary):
    print(f"Y = {summary.y_true:.6g}   R = {summary.replications}   seed = {summary.seed}")
    header = f"{'Estimator':<14}{'Design':<10}{'RB (%)':>10}{'RRMSE (%)':>12}{'V/Vmc':>9}{'Coverage':>10}"
    print(header)
    print("-" * len(header))
    for arm in summary.arms:
        vr = "" if arm.var_ratio is None else f"{arm.var_ratio:.3f}"
        cov = "" if arm.coverage is None else f"{arm.coverage:.3f}"
        print(f"{arm.estimator:<14}{arm.design:<10}{arm.rb:>10.3f}{arm.rrmse:>12.3f}{vr:>9}{cov:>10}")
    for ts in summary.tests:
        print(
            f"test[{ts.design}]: reject rate {ts.reject_rate:.4f}, "
            f"mean p {ts.mean_p:.5f}, median p {ts.median_p:.6f} (alpha={ts.alpha})"
        )


def _load_sample_csv(path):
    """Sample file with columns id, pi, and optional y."""
    with open(path, newline="", encoding="utf-8") as handle:
        rows = [line for line in handle if not line.startswith("#")]
    reader = csv.DictReader(rows)
    header = reader.fieldnames or []
    for required in ("id", "pi"):
        if required not in header:
            raise ConfigError(f"sample file needs column {required!r}")
    ids, pis, ys = [], [], []
    for record in reader:
        ids.append(record["id"])
        pis.append(float(record["pi"]))
        if "y" in header:
            ys.append(float(record["y"]))
    return ids, np.asarray(pis, dtype=float), (np.asarray(ys, dtype=float) if ys else None)


def _split_by_delta(data):
    if data.partition is None:
        raise ConfigError("population file needs a delta column")
    part = data.partition
    return part.certainty_idx, part.complement_idx


def cmd_simulate(args):
    config = _config_from_json(args.config, args.seed, args.full_scale)
    summary = run_mc(config, threads=args.threads, progress=True)
    paths = emit_results(summary, args.out)
    _print_summary(summary)
    print("wrote:", ", ".join(paths))
    return 0


def cmd_design(args):
    data = load_population_csv(args.pop)
    pop = data.population
    seed = args.seed if args.seed is not None else DEFAULT_SEED

    if args.pilot is not None:
        pilot_data = load_population_csv(args.pilot)
        pilot_x, pilot_y = pilot_data.population.x, pilot_data.population.y
        frame_idx = np.arange(pop.size)
    else:
        s_np, u1 = _split_by_delta(data)
        pilot_x, pilot_y = pop.x[s_np], pop.y[s_np]
        frame_idx = u1

    frame_ids = [data.ids[i] for i in frame_idx]
    if args.kind == "optimal":
        model = fit_pilot(pilot_x, pilot_y)
        dsgn = optimal_probabilities(model, pop.x[frame_idx], args.np_size, indices=frame_idx)
    elif args.kind == "equal":
        dsgn = equal_probabilities(len(frame_idx), args.np_size, indices=frame_idx)
    else:
        if pop.x.shape[1] < 2:
            raise ConfigError("pps design needs a size covariate x1")
        dsgn = pps_probabilities(pop.x[frame_idx, 1], args.np_size, indices=frame_idx)
    design_to_csv(dsgn, args.out, ids=frame_ids, seed=seed)
    print(f"wrote {args.out}: {len(frame_ids)} rows, total pi = {float(np.sum(dsgn.pi)):.6f}")
    return 0


_CLI_ESTIMATORS = ("di", "ht", "sep", "com")


def _resolve_sample(args, pop, data):
    s_np, u1 = _split_by_delta(data)
    id_to_row = {uid: i for i, uid in enumerate(data.ids)}
    u1_ids = {data.ids[i] for i in u1}
    sample_ids, pi_s, y_override = _load_sample_csv(args.sample)
    missing = [sid for sid in sample_ids if sid not in u1_ids]
    if missing:
        raise SeqdiError(
            f"sample ids not in the complement stratum: {', '.join(missing[:5])}"
        )
    rows = np.asarray([id_to_row[sid] for sid in sample_ids], dtype=int)
    y_s = y_override if y_override is not None else pop.y[rows]
    return s_np, u1, rows, pi_s, y_s


def cmd_estimate(args):
    wanted = [e.strip() for e in args.estimators.split(",") if e.strip()]
    for name in wanted:
        if name not in _CLI_ESTIMATORS:
            raise ConfigError(
                f"unknown estimator {name!r}; choose from {', '.join(_CLI_ESTIMATORS)}"
            )
    data = load_population_csv(args.pop)
    pop = data.population
    s_np, u1, rows, pi_s, y_s = _resolve_sample(args, pop, data)
    y_np_vals = pop.y[s_np]
    x_s = pop.x[rows]
    x_total_u1 = pop.x[u1].sum(axis=0)
    kind = "inverse_pi" if args.weights == "b" else "inverse_pi_sigma"
    wspec = est.WeightSpec(kind)
    model = None
    if kind == "inverse_pi_sigma" and ("sep" in wanted or "com" in wanted):
        model = fit_pilot(pop.x[s_np], y_np_vals)

    out_rows = []
    for name in wanted:
        if name == "di":
            record = est.y_di(y_np_vals, y_s, pi_s, len(u1))
        elif name == "ht":
            record = est.y_ht_seq(y_np_vals, y_s, pi_s)
        elif name == "sep":
            record = est.y_sep_di(y_np_vals, y_s, x_s, pi_s, x_total_u1, wspec, model)
        else:
            record = est.y_com_di(
                y_np_vals, pop.x[s_np], y_s, x_s, pi_s, x_total_u1, wspec, model
            )
        out_rows.append(record)
        ci = "" if record.variance is None else f"  ci=[{record.ci_low:.6g}, {record.ci_high:.6g}]"
        var = "" if record.variance is None else f"  variance={record.variance:.6g}"
        print(f"{record.tag}: point={record.point:.6g}{var}{ci}")

    if args.out:
        seed = args.seed if args.seed is not None else DEFAULT_SEED
        with open(args.out, "w", newline="", encoding="utf-8") as handle:
            handle.write(f"# seed={seed}\n")
            writer = csv.writer(handle)
            writer.writerow(["tag", "point", "variance", "ci_low", "ci_high"])
            for record in out_rows:
                writer.writerow(record.to_csv_row())
        print(f"wrote {args.out}")
    return 0


def cmd_test(args):
    if not 0.0 < args.alpha < 1.0:
        raise ConfigError("alpha must lie strictly between 0 and 1")
    data = load_population_csv(args.pop)
    pop = data.population
    s_np, u1, rows, pi_s, y_s = _resolve_sample(args, pop, data)
    np_fit = homog.fgls_np(pop.x[s_np], pop.y[s_np])
    p_fit = homog.fgls_p(pop.x[rows], y_s, pi_s)
    result = homog.homogeneity_test(np_fit, p_fit, args.alpha)
    decision = "reject homogeneity" if result.reject else "do not reject homogeneity"
    print(
        f"F = {result.statistic:.6g}, df = {result.df}, p = {result.p_value:.6g} "
        f"-> {decision} at alpha = {args.alpha}"
    )
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="seqdi",
        description="Sequential design-based data integration for finite-population totals.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo experiment from a JSON config")
    sim.add_argument("--config", required=True, help="path to the JSON experiment config")
    sim.add_argument("--out", required=True, help="output directory for result files")
    sim.add_argument("--seed", type=int, default=None,
                     help=f"override the config seed (default {DEFAULT_SEED})")
    sim.add_argument("--threads", type=int, default=None,
                     help="worker processes; defaults to SEQDI_THREADS or 1")
    sim.add_argument("--full-scale", action="store_true",
                     help="run 100000 replications regardless of the config value")
    sim.set_defaults(func=cmd_simulate)

    dsg = sub.add_parser("design", help="build second-stage inclusion probabilities")
    dsg.add_argument("--pop", required=True, help="population CSV (id, x1..., y[, delta])")
    dsg.add_argument("--pilot", default=None,
                     help="separate pilot CSV; without it the delta column of --pop splits the strata")
    dsg.add_argument("--np", dest="np_size", type=int, required=True,
                     help="expected Poisson sample size")
    dsg.add_argument("--kind", choices=DESIGN_KINDS, default="optimal")
    dsg.add_argument("--out", required=True, help="output CSV (id, pi, kind)")
    dsg.add_argument("--seed", type=int, default=None)
    dsg.set_defaults(func=cmd_design)

    estp = sub.add_parser("estimate", help="one-shot estimation on a realized sample")
    estp.add_argument("--pop", required=True, help="population CSV with a delta column")
    estp.add_argument("--sample", required=True, help="sample CSV with id, pi and optional y")
    estp.add_argument("--estimators", default="di,ht,sep,com",
                      help="comma list from di, ht, sep, com")
    estp.add_argument("--weights", choices=("b", "sigma"), default="b",
                      help="regression weights: inverse-probability (b) or variance scaled (sigma)")
    estp.add_argument("--out", default=None, help="optional output CSV")
    estp.add_argument("--seed", type=int, default=None)
    estp.set_defaults(func=cmd_estimate)

    tst = sub.add_parser("test", help="coefficient homogeneity test")
    tst.add_argument("--pop", required=True, help="population CSV with a delta column")
    tst.add_argument("--sample", required=True, help="sample CSV with id, pi and optional y")
    tst.add_argument("--alpha", type=float, default=0.05)
    tst.add_argument("--seed", type=int, default=None)
    tst.set_defaults(func=cmd_test)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        args.threads = int(os.environ.get("SEQDI_THREADS", "1"))
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except SingularVariance as err:
        print(f"error: singular variance matrix ({err})", file=sys.stderr)
        return 1
    except (SeqdiError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

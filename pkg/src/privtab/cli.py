"""Command-line front end: config-driven, fully seeded, reproducible runs.

Every command writes its artifacts plus a manifest recording the resolved
configuration, the seed, and the resulting privacy account, so a run can be
replayed byte for byte from the manifest alone.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__, kernels
from .data import load_csv, save_csv
from .fbp import FbpModel
from .fbs import FbsModel
from .laplace import allocate_budget, build_noised_tables
from .mcmc import SampleConfig
from .release import load_release
from .riskweights import compute_alpha, epsilon as privacy_epsilon, \
    build_profile, fit_pseudo, record_lipschitz, tune_to_target
from .rng import derive_seed_sequence
from .simharness import PopulationSpec, allocate_proportional, \
    default_population_spec, gen_population, monte_carlo, population_truth, \
    pps_sample
from .tabulate import build_release_tables

CONFIG_DEFAULTS = {
    "mcmc": {"chains": 2, "warmup": 5000, "keep": 2000, "thin": 1},
    "model": {"interactions": False, "include_jacobian": False},
    "tune": {"tol": 0.05, "c2": 0.0, "max_fits": 48},
    "laplace": {"replicates": 10},
    "sample": {"n": 1000},
    "montecarlo": {"mechanisms": ["fbs", "fbp"]},
}


class CliError(ValueError):
    pass


def _deep_update(base, extra):
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value
    return base


def load_config(path):
    config = json.loads(json.dumps(CONFIG_DEFAULTS))
    digest = None
    if path is not None:
        raw = Path(path).read_bytes()
        digest = hashlib.sha256(raw).hexdigest()
        loaded = yaml.safe_load(raw) or {}
        if not isinstance(loaded, dict):
            raise CliError("config file must contain a key-value mapping")
        _deep_update(config, loaded)
    return config, digest


def mcmc_config(config, seed):
    m = config["mcmc"]
    return SampleConfig(chains=int(m["chains"]), warmup=int(m["warmup"]),
                        keep=int(m["keep"]), thin=int(m["thin"]), seed=seed)


def population_spec(config):
    pop = config.get("population")
    if pop is None:
        return default_population_spec()
    return PopulationSpec(**pop)


def _parse_schema(text):
    if not text:
        return None
    schema = {}
    for part in text.split(","):
        role, _, column = part.partition("=")
        if not column:
            raise CliError(f"bad schema entry {part!r}; use role=column")
        schema[role.strip()] = column.strip()
    return schema


def _outdir(args):
    out = os.environ.get("PRIVTAB_OUTDIR", args.out)
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(outdir, command, args, config_digest, seed, privacy, outputs):
    manifest = {
        "command": command,
        "arguments": {k: v for k, v in sorted(vars(args).items())
                      if k not in ("func",)},
        "config_sha256": config_digest,
        "seed": seed,
        "privacy": privacy,
        "outputs": sorted(outputs),
        "kernel_backend": kernels.BACKEND,
        "version": __version__,
    }
    path = outdir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path


def _resolve_delta_epsilon(args, m):
    given = [x is not None for x in (args.target_delta, args.epsilon)]
    if sum(given) != 1:
        raise CliError("give exactly one of --target-delta and --epsilon "
                       "(the other is derived via epsilon = 2 * delta * m)")
    if args.target_delta is not None:
        return float(args.target_delta), 2.0 * float(args.target_delta) * m
    return float(args.epsilon) / (2.0 * m), float(args.epsilon)


def _make_model(mechanism, dataset, config):
    opts = config["model"]
    if mechanism == "fbs":
        return FbsModel(dataset, interactions=opts["interactions"],
                        include_jacobian=opts["include_jacobian"])
    if mechanism == "fbp":
        return FbpModel(dataset, interactions=opts["interactions"],
                        include_jacobian=opts["include_jacobian"])
    raise CliError(f"unknown mechanism {mechanism!r}")


def cmd_synthesize(args):
    config, digest = load_config(args.config)
    outdir = _outdir(args)
    dataset = load_csv(args.input, _parse_schema(args.schema))
    target_delta, epsilon_target = _resolve_delta_epsilon(args, args.m)
    model = _make_model(args.mechanism, dataset, config)
    cfg = mcmc_config(config, args.seed)
    tune = config["tune"]
    tuned = tune_to_target(model, target_delta, float(tune["tol"]), cfg,
                           c2=float(tune["c2"]), max_fits=int(tune["max_fits"]))
    account = privacy_epsilon(tuned.profile.overall_lipschitz, args.m)
    release = model.synthesize(tuned.draws, args.m, args.seed, account=account)
    release.save(outdir)
    tuned.profile.to_csv(outdir / "riskprofile.csv")
    privacy = {
        "mechanism": args.mechanism,
        "target_delta": target_delta,
        "epsilon_target": epsilon_target,
        "delta_achieved": account.delta_alpha,
        "m": account.m,
        "epsilon": account.epsilon,
        "c1": tuned.c1,
        "c2": tuned.c2,
        "delta_unweighted": tuned.delta_unweighted,
    }
    outputs = [p.name for p in outdir.iterdir() if p.name != "manifest.json"]
    _write_manifest(outdir, "synthesize", args, digest, args.seed, privacy, outputs)
    print(f"synthesized m={args.m} datasets: delta={account.delta_alpha:.4f} "
          f"epsilon={account.epsilon:.4f} -> {outdir}")
    return 0


def cmd_tabulate(args):
    config, digest = load_config(args.config)
    outdir = _outdir(args)
    release = load_release(Path(args.release))
    counts, means = build_release_tables(release)
    counts.to_csv(outdir / "counts.csv")
    counts.to_json(outdir / "counts.json")
    means.to_csv(outdir / "means.csv")
    means.to_json(outdir / "means.json")
    privacy = None
    if release.account is not None:
        privacy = {"delta_alpha": release.account.delta_alpha,
                   "m": release.account.m, "epsilon": release.account.epsilon}
    outputs = ["counts.csv", "counts.json", "means.csv", "means.json"]
    _write_manifest(outdir, "tabulate", args, digest, None, privacy, outputs)
    print(f"wrote {len(counts.rows)}-cell tables -> {outdir}")
    return 0


def cmd_noise(args):
    config, digest = load_config(args.config)
    outdir = _outdir(args)
    dataset = load_csv(args.input, _parse_schema(args.schema))
    replicates = int(config["laplace"]["replicates"])
    counts, means, profile, budget = build_noised_tables(
        dataset, args.epsilon, args.seed, replicates=replicates)
    counts.to_csv(outdir / "counts.csv")
    counts.to_json(outdir / "counts.json")
    means.to_csv(outdir / "means.csv")
    means.to_json(outdir / "means.json")
    privacy = {
        "mechanism": "laplace",
        "epsilon_total": budget.epsilon_total,
        "epsilon_pc": budget.epsilon_pc,
        "epsilon_vc": budget.epsilon_vc,
        "epsilon_rep": budget.epsilon_rep,
        "replicates": budget.replicates,
        "delta_count_star": profile.delta_count_star,
        "delta_mean_star": profile.delta_mean_star,
    }
    with open(outdir / "privacy_account.json", "w", encoding="utf-8") as fh:
        json.dump(privacy, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs = ["counts.csv", "counts.json", "means.csv", "means.json",
               "privacy_account.json"]
    _write_manifest(outdir, "noise", args, digest, args.seed, privacy, outputs)
    print(f"noised tables at epsilon={budget.epsilon_total} -> {outdir}")
    return 0


def cmd_simulate(args):
    config, digest = load_config(args.config)
    outdir = _outdir(args)
    spec = population_spec(config)
    if args.population_size:
        spec.N = args.population_size
    population = gen_population(spec, args.seed)
    n = args.sample_size or int(config["sample"]["n"])
    alloc = allocate_proportional(n, spec.field_props)
    sample = pps_sample(population, alloc, args.seed)
    save_csv(sample, outdir / "sample.csv")
    truth = population_truth(population)
    with open(outdir / "truth.csv", "w", newline="", encoding="utf-8") as fh:
        import csv as _csv

        writer = _csv.writer(fh)
        writer.writerow(["cell_kind", "field", "gender", "count", "mean"])
        for cell in population.cells():
            if cell.key() not in truth:
                continue
            count, mean = truth[cell.key()]
            writer.writerow([
                cell.kind,
                "" if cell.field is None else population.field_levels[cell.field],
                "" if cell.gender is None else population.gender_levels[cell.gender],
                repr(count), repr(mean)])
    outputs = ["sample.csv", "truth.csv"]
    if args.write_population:
        save_csv(population, outdir / "population.csv")
        outputs.append("population.csv")
    corr = float(np.corrcoef(sample.y, sample.w)[0, 1])
    _write_manifest(outdir, "simulate", args, digest, args.seed,
                    {"sample_corr_y_w": corr}, outputs)
    print(f"simulated population N={spec.N}, sample n={sample.n} "
          f"(corr(y, w) = {corr:.3f}) -> {outdir}")
    return 0


def cmd_montecarlo(args):
    config, digest = load_config(args.config)
    outdir = _outdir(args)
    spec = population_spec(config)
    cfg = mcmc_config(config, args.seed)
    mechanisms = args.mechanisms.split(",") if args.mechanisms \
        else list(config["montecarlo"]["mechanisms"])
    result = monte_carlo(spec, mechanisms, args.reps, args.m, args.target_delta,
                         args.seed, cfg, n_sample=int(config["sample"]["n"]),
                         tol=float(config["tune"]["tol"]))
    result.to_metrics_csv(outdir / "metrics.csv")
    result.to_frontier_csv(outdir / "frontier.csv")
    privacy = {"target_delta": args.target_delta, "m": args.m,
               "epsilon": 2.0 * args.target_delta * args.m,
               "failures": len(result.failures),
               "replicates_used": result.replicates_used}
    _write_manifest(outdir, "montecarlo", args, digest, args.seed, privacy,
                    ["metrics.csv", "frontier.csv"])
    print(f"monte carlo over {args.reps} replicates, "
          f"{len(result.failures)} failures -> {outdir}")
    return 0


def cmd_riskprofile(args):
    config, digest = load_config(args.config)
    outdir = _outdir(args)
    dataset = load_csv(args.input, _parse_schema(args.schema))
    model = _make_model(args.mechanism, dataset, config)
    cfg = mcmc_config(config, args.seed)
    if args.target_delta is not None:
        tune = config["tune"]
        tuned = tune_to_target(model, args.target_delta, float(tune["tol"]), cfg,
                               c2=float(tune["c2"]),
                               max_fits=int(tune["max_fits"]))
        profile = tuned.profile
        delta_unweighted = tuned.delta_unweighted
    else:
        seed_u = int(derive_seed_sequence(args.seed, "profile-unweighted")
                     .generate_state(1)[0])
        unweighted = fit_pseudo(model, np.ones(model.n), replace(cfg, seed=seed_u))
        delta_y = record_lipschitz(unweighted, model.loglik_matrix(unweighted))
        alpha = compute_alpha(delta_y)
        seed_p = int(derive_seed_sequence(args.seed, "profile-pseudo")
                     .generate_state(1)[0])
        pseudo = fit_pseudo(model, alpha, replace(cfg, seed=seed_p))
        profile = build_profile(alpha, pseudo, model.loglik_matrix(pseudo),
                                c1=1.0, c2=0.0)
        delta_unweighted = float(np.max(delta_y))
    profile.to_csv(outdir / "riskprofile.csv")
    privacy = {"mechanism": args.mechanism,
               "overall_lipschitz": profile.overall_lipschitz,
               "delta_unweighted": delta_unweighted,
               "c1": profile.c1, "c2": profile.c2}
    _write_manifest(outdir, "riskprofile", args, digest, args.seed, privacy,
                    ["riskprofile.csv"])
    print(f"risk profile: overall Lipschitz {profile.overall_lipschitz:.4f} "
          f"(unweighted {delta_unweighted:.4f}) -> {outdir}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="privtab",
        description="Privacy-protected tabular survey products from synthetic "
                    "microdata (risk-weighted synthesizers) or Laplace noise.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, needs_input=True):
        if needs_input:
            p.add_argument("--input", required=True, help="survey sample CSV")
            p.add_argument("--schema", default=None,
                           help="role=column overrides, e.g. y=salary,weight=wt")
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", default=None, help="YAML config file")

    p = sub.add_parser("synthesize", help="fit, tune, and release m synthetic datasets")
    common(p)
    p.add_argument("--mechanism", choices=["fbs", "fbp"], required=True)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--target-delta", type=float, default=None, dest="target_delta")
    p.add_argument("--epsilon", type=float, default=None)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("tabulate", help="combined tables from a synthetic release")
    p.add_argument("--release", required=True, help="release directory")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_tabulate)

    p = sub.add_parser("noise", help="Laplace-noised tables from confidential data")
    common(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("simulate", help="generate the simulation population and sample")
    common(p, needs_input=False)
    p.add_argument("--population-size", type=int, default=None)
    p.add_argument("--sample-size", type=int, default=None)
    p.add_argument("--write-population", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("montecarlo", help="repeated-sampling utility comparison")
    common(p, needs_input=False)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--target-delta", type=float, required=True, dest="target_delta")
    p.add_argument("--mechanisms", default=None,
                   help="comma-separated subset of fbs,fbp,laplace")
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("riskprofile", help="export per-record risk weights and bounds")
    common(p)
    p.add_argument("--mechanism", choices=["fbs", "fbp"], required=True)
    p.add_argument("--target-delta", type=float, default=None, dest="target_delta")
    p.set_defaults(func=cmd_riskprofile)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single-line diagnostic contract
        print(f"privtab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Batch front end: simulate datasets, fit chains, evaluate against truth.

Subcommands: simulate, fit, evaluate, diagnose. Configuration comes from a
flat key = value text file; a handful of flags override it. Every effective
value is echoed into the output manifest so a run is reproducible from its
outputs alone.

Exit codes: 0 success, 2 non-convergence (reports still written),
3 numerical failure, 4 I/O or configuration error.
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys
import warnings
from pathlib import Path

import numpy as np

from . import dataio
from .data import Hyperparameters, gamma_to_B, triu_pairs
from .diagnostics import (
    DEFAULT_RHAT_THRESHOLD,
    assess_convergence,
    format_convergence_text,
)
from .gibbs import SweepConfig, run_chains
from .samplers import NumericalSingularityError, rng_stream
from .simulate import SimConfig, generate
from .summaries import (
    DEFAULT_CREDIBLE_LEVEL,
    DEFAULT_PP_THRESHOLD,
    build_summary,
    classification_rates,
    mse_metrics,
)

EXIT_OK = 0
EXIT_NONCONVERGED = 2
EXIT_NUMERICAL = 3
EXIT_CONFIG = 4

DEFAULT_MAX_BURN_IN = 340_000


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _sim_config_from(cfg: dict[str, str], args) -> SimConfig:
    seed = args.seed if args.seed is not None else dataio.config_int(cfg, "seed", 0)
    kind = dataio.config_str(cfg, "kind")
    return SimConfig(
        kind=kind,
        n=dataio.config_int(cfg, "n"),
        d=dataio.config_int(cfg, "d", 30),
        k=dataio.config_int(cfg, "k", 8),
        pi=dataio.config_float(cfg, "pi", 0.8),
        mu=dataio.config_float(cfg, "mu", 1.6),
        coefficients=dataio.config_str(cfg, "coefficients", "random"),
        L=dataio.config_float(cfg, "L", None) if "L" in cfg else None,
        count_pairs_once=dataio.config_bool(cfg, "count_pairs_once", False),
        seed=seed,
    )


def cmd_simulate(args) -> int:
    try:
        cfg = dataio.read_config_file(args.config)
        config = _sim_config_from(cfg, args)
        out = Path(args.output or dataio.config_str(cfg, "output"))
    except (OSError, ValueError) as exc:
        return _fail(str(exc), EXIT_CONFIG)
    if out.exists():
        return _fail(f"output {out} already exists", EXIT_CONFIG)

    rng = rng_stream(config.seed, 0)
    data, truth = generate(config, rng)

    staging = out.parent / (out.name + ".partial")
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir(parents=True)
    dataio.write_dataset(staging, data)
    dataio.write_truth(staging / "truth.json", config, truth)
    dataio.write_manifest(staging / "manifest.txt", {
        "command": "simulate",
        "kind": config.kind, "n": config.n, "d": config.d, "k": config.k,
        "pi": config.pi, "mu": config.mu, "coefficients": config.coefficients,
        "L": config.L, "count_pairs_once": config.count_pairs_once,
        "seed": config.seed, "V": data.V, "q": data.q,
    })
    dataio.atomic_publish_dir(staging, out)
    print(f"wrote dataset ({data.n} samples, V={data.V}) to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _hyper_from(cfg: dict[str, str]) -> Hyperparameters:
    R = dataio.config_int(cfg, "R", 7)
    return Hyperparameters(
        R=R,
        eta=dataio.config_float(cfg, "eta", 1.01),
        nu=dataio.config_float(cfg, "nu", float(R + 2)),
        a_delta=dataio.config_float(cfg, "a_delta", 1.0),
        b_delta=dataio.config_float(cfg, "b_delta", 1.0),
        zeta=dataio.config_float(cfg, "zeta", 1.0),
        iota=dataio.config_float(cfg, "iota", 1.0),
    )


def _write_summary_csvs(directory: Path, summary, V: int) -> None:
    with open(directory / "node_pp.csv", "w") as fh:
        fh.write("node,posterior_probability\n")
        for k, pp in enumerate(summary.node_pp, start=1):
            fh.write(f"{k},{float(pp)!r}\n")
    rows, cols = triu_pairs(V)
    with open(directory / "edge_ci.csv", "w") as fh:
        fh.write("edge,node_k,node_l,lower,upper,influential\n")
        for e in range(rows.size):
            fh.write(
                f"{e + 1},{rows[e] + 1},{cols[e] + 1},"
                f"{float(summary.edge_lower[e])!r},{float(summary.edge_upper[e])!r},"
                f"{str(bool(summary.edge_influential[e])).lower()}\n"
            )
    for name, B in (("b_map.csv", summary.B_map), ("b_mean.csv", summary.B_mean)):
        with open(directory / name, "w") as fh:
            fh.write("node_k,node_l,value\n")
            for e in range(rows.size):
                fh.write(f"{rows[e] + 1},{cols[e] + 1},{float(B[rows[e], cols[e]])!r}\n")


def cmd_fit(args) -> int:
    try:
        cfg = dataio.read_config_file(args.config)
        dataset_dir = Path(dataio.config_str(cfg, "dataset"))
        out = Path(args.output or dataio.config_str(cfg, "output"))
        hyper = _hyper_from(cfg)
        sweep = SweepConfig(
            burn_in=args.burn_in if args.burn_in is not None else dataio.config_int(cfg, "burn_in", 30_000),
            retained=args.retained if args.retained is not None else dataio.config_int(cfg, "retained", 20_000),
            thinning=dataio.config_int(cfg, "thinning", 1),
            chains=args.chains if args.chains is not None else dataio.config_int(cfg, "chains", 3),
            seed=args.seed if args.seed is not None else dataio.config_int(cfg, "seed", 0),
        )
        threshold = (args.rhat_threshold if args.rhat_threshold is not None
                     else dataio.config_float(cfg, "rhat_threshold", DEFAULT_RHAT_THRESHOLD))
        max_burn_in = dataio.config_int(cfg, "max_burn_in", DEFAULT_MAX_BURN_IN)
        credible_level = dataio.config_float(cfg, "credible_level", DEFAULT_CREDIBLE_LEVEL)
        workers = dataio.config_int(cfg, "workers", min(sweep.chains, os.cpu_count() or 1))
        data = dataio.read_dataset(dataset_dir)
    except (OSError, ValueError) as exc:
        return _fail(str(exc), EXIT_CONFIG)
    if out.exists():
        return _fail(f"output {out} already exists", EXIT_CONFIG)
    if sweep.chains < 2:
        print("warning: a single chain weakens the convergence diagnostic", file=sys.stderr)

    burn_schedule = [sweep.burn_in]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            draws, checkpoints = run_chains(data, hyper, sweep, workers=workers)
            report = assess_convergence(draws, threshold)
            total_burn = max(sweep.burn_in, 1)
            while not report.converged and 2 * total_burn <= max_burn_in:
                extra = total_burn
                print(f"R-hat {report.max_rhat:.3f} > {threshold}; extending burn-in by {extra}",
                      file=sys.stderr)
                draws, checkpoints = run_chains(
                    data, hyper, sweep, workers=workers,
                    checkpoints=checkpoints, burn_in=extra,
                )
                burn_schedule.append(extra)
                total_burn *= 2
                report = assess_convergence(draws, threshold)
    except NumericalSingularityError as exc:
        return _fail(str(exc), EXIT_NUMERICAL)

    summary = build_summary(draws, credible_level)

    staging = out.parent / (out.name + ".partial")
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir(parents=True)
    dataio.save_draws(staging / "draws.npz", draws)
    (staging / "convergence.txt").write_text(format_convergence_text(report))
    _write_summary_csvs(staging, summary, data.V)
    ckpt_dir = staging / "checkpoints"
    ckpt_dir.mkdir()
    for ck in checkpoints:
        ck.save(ckpt_dir / f"chain_{ck.chain_index}.ckpt")
    dataio.write_manifest(staging / "manifest.txt", {
        "command": "fit",
        "dataset": dataset_dir,
        "R": hyper.R, "eta": hyper.eta, "nu": hyper.nu,
        "a_delta": hyper.a_delta, "b_delta": hyper.b_delta,
        "zeta": hyper.zeta, "iota": hyper.iota,
        "chains": sweep.chains, "burn_in": sweep.burn_in,
        "retained": sweep.retained, "thinning": sweep.thinning,
        "seed": sweep.seed, "rhat_threshold": threshold,
        "max_burn_in": max_burn_in, "credible_level": credible_level,
        "burn_in_schedule": ",".join(str(b) for b in burn_schedule),
        "converged": str(report.converged).lower(),
        "max_rhat": repr(report.max_rhat),
    })
    import json

    with open(staging / "overview.json", "w") as fh:
        json.dump({
            "converged": report.converged,
            "max_rhat": report.max_rhat,
            "rhat_threshold": threshold,
            "chains": sweep.chains,
            "retained": sweep.retained,
            "burn_in_schedule": burn_schedule,
            "credible_level": credible_level,
            "n": data.n, "V": data.V, "q": data.q,
            "n_influential_edges": int(np.sum(summary.edge_influential)),
            "nodes_above_default_pp": int(np.sum(summary.node_pp > DEFAULT_PP_THRESHOLD)),
            "files": ["draws.npz", "convergence.txt", "node_pp.csv", "edge_ci.csv",
                      "b_map.csv", "b_mean.csv", "manifest.txt"],
        }, fh, indent=1)
    dataio.atomic_publish_dir(staging, out)
    if not report.converged:
        print(f"not converged: max R-hat {report.max_rhat:.4f} > {threshold} "
              f"after burn-in schedule {burn_schedule}", file=sys.stderr)
        return EXIT_NONCONVERGED
    print(f"converged (max R-hat {report.max_rhat:.4f}); results in {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    try:
        run_dir = Path(args.run)
        manifest = dataio.read_config_file(run_dir / "manifest.txt")
        draws = dataio.load_draws(run_dir / "draws.npz")
        truth = dataio.read_truth(args.truth)
        data = dataio.read_dataset(dataio.config_str(manifest, "dataset"))
    except (OSError, ValueError, KeyError) as exc:
        return _fail(str(exc), EXIT_CONFIG)
    if truth["xi_true"].size != draws.V or truth["gamma_true"].size != draws.q:
        return _fail(
            f"truth dimensions (V={truth['xi_true'].size}, q={truth['gamma_true'].size}) "
            f"do not match draws (V={draws.V}, q={draws.q})", EXIT_CONFIG)
    if data.V != draws.V or data.q != draws.q:
        return _fail("dataset dimensions do not match draws", EXIT_CONFIG)

    level = dataio.config_float(manifest, "credible_level", DEFAULT_CREDIBLE_LEVEL)
    summary = build_summary(draws, level)
    rates = classification_rates(summary, truth["edge_influential"], truth["xi_true"] == 1,
                                 pp_threshold=args.pp_threshold)
    truth_B = truth["B_true"] if truth.get("B_true") is not None \
        else gamma_to_B(truth["gamma_true"])
    coef_mse, response_mse = mse_metrics(draws, truth_B, data)
    sim_cfg = truth["config"]
    row = {
        "dataset": dataio.config_str(manifest, "dataset"),
        "kind": sim_cfg["kind"], "n": sim_cfg["n"], "V": truth["xi_true"].size,
        "k": sim_cfg["k"], "pi": float(sim_cfg["pi"]), "mu": float(sim_cfg["mu"]),
        "coefficients": sim_cfg["coefficients"], "seed": sim_cfg["seed"],
        "edge_fpr": rates.edge_fpr, "edge_fnr": rates.edge_fnr,
        "node_fpr": rates.node_fpr, "node_fnr": rates.node_fnr,
        "coefficient_mse": coef_mse, "response_mse": response_mse,
    }
    dataio.write_metrics_csv(args.output, row)
    print(f"wrote metrics to {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------

def cmd_diagnose(args) -> int:
    try:
        draws = dataio.load_draws(Path(args.run) / "draws.npz")
    except (OSError, ValueError) as exc:
        return _fail(str(exc), EXIT_CONFIG)
    threshold = args.rhat_threshold if args.rhat_threshold is not None else DEFAULT_RHAT_THRESHOLD
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = assess_convergence(draws, threshold)
    text = format_convergence_text(report)
    if args.output:
        Path(args.output).write_text(text)
    else:
        print(text, end="")
    return EXIT_OK if report.converged else EXIT_NONCONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netreg",
        description="Bayesian network regression: simulate, fit, evaluate, diagnose",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic dataset with truth sidecar")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--output")
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="run Gibbs chains and emit reports")
    p_fit.add_argument("--config", required=True)
    p_fit.add_argument("--seed", type=int)
    p_fit.add_argument("--chains", type=int)
    p_fit.add_argument("--burn-in", type=int, dest="burn_in")
    p_fit.add_argument("--retained", type=int)
    p_fit.add_argument("--rhat-threshold", type=float, dest="rhat_threshold")
    p_fit.add_argument("--output")
    p_fit.set_defaults(func=cmd_fit)

    p_eval = sub.add_parser("evaluate", help="score a fitted run against simulation truth")
    p_eval.add_argument("--run", required=True, help="fit output directory")
    p_eval.add_argument("--truth", required=True, help="truth sidecar JSON")
    p_eval.add_argument("--output", required=True, help="metrics CSV path")
    p_eval.add_argument("--pp-threshold", type=float, default=DEFAULT_PP_THRESHOLD,
                        dest="pp_threshold")
    p_eval.set_defaults(func=cmd_evaluate)

    p_diag = sub.add_parser("diagnose", help="recompute convergence from stored draws")
    p_diag.add_argument("--run", required=True)
    p_diag.add_argument("--rhat-threshold", type=float, dest="rhat_threshold")
    p_diag.add_argument("--output")
    p_diag.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Subcommands: ``pushforward``, ``posterior``, ``diagnose``, ``converge``,
``compare`` and ``stability``. Every run reads an optional JSON config whose
fields are echoed into the written report.

Exit codes: 0 success, 1 other failure, 2 config error, 3 missing input,
4 empty posterior, 5 dominance violations above ``max_violations``.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from typing import List, Optional

import numpy as np

from .core import RngStream
from .density import fit_gkde
from .errors import ConsistentBayesError, DominanceError, EmptyPosteriorError, InputError
from .experiments import (
    ExperimentReport,
    _tv_vs_observed,
    run_chi2_convergence,
    run_comparison,
    run_stability_oracle,
    synthetic_power_law,
)
from .inference import PosteriorHandle, build_pushforward, diagnostics, rejection_sample
from .io import (
    ConfigError,
    RunConfig,
    build_observed,
    build_prior,
    load_config,
    model_from_config,
    read_pushforward,
    write_batch,
    write_json,
    write_pushforward,
    write_rows,
)

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_MISSING, EXIT_EMPTY, EXIT_DOMINANCE = 0, 1, 2, 3, 4, 5
_PROBE_COUNT = 1000


class MissingInputError(ConsistentBayesError):
    pass


class DominanceExceeded(ConsistentBayesError):
    pass


def _streams(seed):
    # same split as experiments.run_pipeline: sampling, probe, accept/reject
    return RngStream(seed).spawn(3)


def _setup(cfg: RunConfig):
    model, _, spec = model_from_config(cfg)
    return model, build_prior(cfg, spec), build_observed(cfg)


def cmd_pushforward(cfg: RunConfig):
    """Sample the prior, evaluate the model, store samples.csv and pushforward.json."""
    model, prior, _ = _setup(cfg)
    sample_rng, _, _ = _streams(cfg.seed)
    kde, batch = build_pushforward(model, prior, cfg.M, sample_rng, cfg.bandwidth_rule, workers=cfg.workers)
    samples = os.path.join(cfg.out, "samples.csv")
    record = os.path.join(cfg.out, "pushforward.json")
    write_batch(samples, batch)
    write_pushforward(record, kde, "samples.csv",
                      {"model": model.name, "seed": cfg.seed, "config": cfg.as_dict()})
    return samples, record


def _load_pushforward(cfg: RunConfig, path: Optional[str]):
    path = path or os.path.join(cfg.out, "pushforward.json")
    if not os.path.exists(path):
        raise MissingInputError(f"push-forward record not found: {path}")
    try:
        return read_pushforward(path)
    except FileNotFoundError as exc:
        raise MissingInputError(f"sample file not found: {exc.filename}") from None


def _handle_and_probe(cfg, kde):
    model, prior, observed = _setup(cfg)
    handle = PosteriorHandle(prior, observed, kde, model)
    _, probe_rng, accept_rng = _streams(cfg.seed)
    probe = observed.sample(_PROBE_COUNT, probe_rng) if observed.sampleable else None
    return handle, probe, accept_rng


def cmd_posterior(cfg: RunConfig, pushforward: Optional[str] = None):
    """Rejection-sample the stored batch; write accepted.csv and report.json."""
    t0 = time.perf_counter()
    kde, batch, _ = _load_pushforward(cfg, pushforward)
    handle, probe, accept_rng = _handle_and_probe(cfg, kde)
    accepted, diag = rejection_sample(handle, batch, accept_rng, cfg.safety_factor, probe=probe)
    report = ExperimentReport(cfg.experiment_id, cfg.as_dict(), cfg.seed, diagnostics=diag.as_dict(),
                              accepted_count=accepted.count)
    if handle.model.out_dim == 1:
        report.tv_pushforward_prior_vs_observed = _tv_vs_observed(kde, handle.observed)
        if accepted.count >= 2 and np.ptp(accepted.qois[:, 0]) > 0:
            post = fit_gkde(accepted.qois, cfg.bandwidth_rule)
            report.tv_pushforward_posterior_vs_observed = _tv_vs_observed(post, handle.observed)
    report.wall_ms = 1e3 * (time.perf_counter() - t0)
    write_batch(os.path.join(cfg.out, "accepted.csv"), accepted)
    write_json(os.path.join(cfg.out, "report.json"), report.as_dict())
    _check_violations(cfg, diag.dominance_violations)
    return report


def cmd_diagnose(cfg: RunConfig, pushforward: Optional[str] = None):
    """Diagnostics only, without acceptance; writes diagnostics.json."""
    kde, batch, _ = _load_pushforward(cfg, pushforward)
    handle, probe, _ = _handle_and_probe(cfg, kde)
    diag = diagnostics(handle, batch, probe=probe)
    write_json(os.path.join(cfg.out, "diagnostics.json"), {"diagnostics": diag.as_dict(), "config": cfg.as_dict()})
    _check_violations(cfg, diag.dominance_violations)
    return diag


def _check_violations(cfg, count):
    if count > cfg.max_violations:
        raise DominanceExceeded(f"{count} dominance violations (allowed {cfg.max_violations})")


def cmd_converge(cfg: RunConfig, synthetic: bool = False):
    """Write convergence.csv: one row per repetition plus median rows carrying the slope."""
    header = ["d", "m", "N", "rep", "l1_error", "slope"]
    rows = []
    if synthetic or cfg.synthetic:
        rec = synthetic_power_law(cfg.N_grid)
        rows = [["", "", n, "median", e, rec.fitted_slope] for n, e in zip(rec.sample_sizes, rec.errors)]
        records = [rec]
    else:
        records = run_chi2_convergence(cfg.dims, cfg.qoi_counts, cfg.N_grid, cfg.reps, cfg.seed,
                                       cfg.bandwidth_rule, cfg.block_quantile, cfg.eval_count, cfg.workers)
        for rec in records:
            for rep, errs in enumerate(rec.raw_errors):
                rows.extend([rec.dim, rec.qoi_count, n, rep, float(e), None] for n, e in zip(rec.sample_sizes, errs))
            rows.extend([rec.dim, rec.qoi_count, n, "median", e, rec.fitted_slope]
                        for n, e in zip(rec.sample_sizes, rec.errors))
    write_rows(os.path.join(cfg.out, "convergence.csv"), header, rows)
    return records


def cmd_compare(cfg: RunConfig):
    """Write compare.csv with one row per method per exponent."""
    header = ["p", "method", "tv_pushforward_vs_observed", "accepted_count", "tv_posteriors", "M", "seed"]
    rows, reports = [], []
    for p in cfg.p_values:
        rep = run_comparison(p, cfg.M, cfg.seed, bandwidth_rule=cfg.bandwidth_rule)
        reports.append(rep)
        x = rep.extra
        rows.append([p, "consistent", x["tv_consistent"], rep.accepted_count, x["tv_posteriors"], cfg.M, cfg.seed])
        rows.append([p, "statistical", x["tv_statistical"], x["statistical_accepted_count"], x["tv_posteriors"],
                     cfg.M, cfg.seed])
    write_rows(os.path.join(cfg.out, "compare.csv"), header, rows)
    return reports


def cmd_stability(cfg: RunConfig):
    """Write stability.csv comparing posterior and observed TV under shifts."""
    header = ["delta", "tv_obs_pair", "tv_post_pair", "difference", "node_doubling_change"]
    rows = []
    for delta in cfg.deltas:
        x = run_stability_oracle(float(delta), cfg.seed).extra
        rows.append([float(delta), x["tv_obs_pair"], x["tv_post_pair"], x["difference"], x["node_doubling_change"]])
    write_rows(os.path.join(cfg.out, "stability.csv"), header, rows)
    return rows


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="consistent-bayes",
                                     description="Consistent Bayesian inversion with push-forward density estimates.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--workers", type=int, help="model evaluation threads")
    common.add_argument("--block-quantile", choices=["paper", "mass-preserving"],
                        help="quantile levels of the block observed density")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("pushforward", parents=[common], help="sample the prior and fit the push-forward KDE")
    for name, text in (("posterior", "rejection-sample the posterior"), ("diagnose", "posterior diagnostics only")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--pushforward", help="path to pushforward.json (default: <out>/pushforward.json)")
    p = sub.add_parser("converge", parents=[common], help="posterior error against KDE sample size")
    p.add_argument("--synthetic", action="store_true", help="self-test on an exact N^-0.4 power law")
    sub.add_parser("compare", parents=[common], help="consistent against statistical posterior")
    sub.add_parser("stability", parents=[common], help="TV stability oracle")
    return parser


def _config(args) -> RunConfig:
    if args.config:
        if not os.path.exists(args.config):
            raise MissingInputError(f"config file not found: {args.config}")
        cfg = load_config(args.config)
    else:
        cfg = RunConfig()
    return cfg.replace(seed=args.seed, out=args.out, workers=args.workers, block_quantile=args.block_quantile)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        if args.command == "pushforward":
            cmd_pushforward(cfg)
        elif args.command == "posterior":
            cmd_posterior(cfg, args.pushforward)
        elif args.command == "diagnose":
            cmd_diagnose(cfg, args.pushforward)
        elif args.command == "converge":
            cmd_converge(cfg, args.synthetic)
        elif args.command == "compare":
            cmd_compare(cfg)
        else:
            cmd_stability(cfg)
    except MissingInputError as exc:
        print(f"error: missing-input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EmptyPosteriorError as exc:
        print(f"error: empty-posterior: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (DominanceError, DominanceExceeded) as exc:
        print(f"error: dominance-violation: {exc}", file=sys.stderr)
        return EXIT_DOMINANCE
    except InputError as exc:
        print(f"error: input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConsistentBayesError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: fit, explore, impute, simulate."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, io
from .dataset import Hyperparameters, validate
from .explore import build_report
from .sampler import impute as impute_fit
from .sampler import run
from .simulate import simulate


def _add_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--iters", type=int, default=1000, help="Gibbs sweeps")
    p.add_argument("--burnin", type=int, default=500, help="sweeps discarded before retention")
    p.add_argument("--thin", type=int, default=5, help="retention stride after burn-in")
    p.add_argument("--alpha", type=float, default=1.0, help="feature-process mass")
    p.add_argument("--sigma-b", type=float, default=1.0, help="weight prior std")
    p.add_argument("--sigma-u", type=float, default=0.1, help="auxiliary noise std")
    p.add_argument("--sample-alpha", choices=["on", "off"], default="on")
    p.add_argument("--kmax-new", type=int, default=3, help="max new features proposed per row")
    p.add_argument("--k-init", type=int, default=1, help="initial feature count")


def _hyper_from_args(args, seed: int) -> Hyperparameters:
    return Hyperparameters(
        alpha=args.alpha,
        sigma_b_sq=args.sigma_b**2,
        sigma_u_sq=args.sigma_u**2,
        sample_alpha=args.sample_alpha == "on",
        k_new_max=args.kmax_new,
        k_init=args.k_init,
        n_iterations=args.iters,
        burn_in=args.burnin,
        thinning=args.thin,
        seed=seed,
    )


def _manifest(outdir: Path, command: str, args: argparse.Namespace, extra: dict, wall: float):
    doc = {
        "command": command,
        "config": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "versions": {"mixedlfm": __version__, "numpy": np.__version__},
        "wall_time_s": wall,
    }
    doc.update(extra)
    with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, default=str)
        fh.write("\n")


def _load_checked(args):
    dataset = io.load(args.data, args.schema)
    violations = validate(dataset)
    if violations:
        for v in violations[:20]:
            print(f"invalid cell (row {v.row}, column {dataset.names[v.column]!r}): {v.reason}", file=sys.stderr)
        raise SystemExit(f"dataset fails validation with {len(violations)} violations")
    return dataset


def cmd_fit(args) -> int:
    t0 = time.perf_counter()
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    dataset = _load_checked(args)
    chains = []
    for c in range(args.chains):
        hyper = _hyper_from_args(args, args.seed + c)
        fit = run(dataset, hyper)
        suffix = f"_chain{c}" if args.chains > 1 else ""
        fit_path = outdir / f"fit{suffix}.json.gz"
        io.save_fit(fit, fit_path)
        io.write_trace(fit, outdir / f"trace{suffix}.csv")
        chains.append(
            {
                "fit": fit_path.name,
                "seed": hyper.seed,
                "k_last": fit.last.k,
                "mean_retained_loglik": fit.mean_retained_loglik(),
                "median_sweep_s": float(np.median(fit.sweep_seconds)),
            }
        )
        print(f"chain {c}: K={fit.last.k} retained={fit.n_retained} -> {fit_path}")
    _manifest(outdir, "fit", args, {"chains": chains, "n_objects": dataset.n_objects}, time.perf_counter() - t0)
    return 0


def cmd_explore(args) -> int:
    t0 = time.perf_counter()
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    fit, stored_hash = io.load_fit(args.fit)
    dataset = _load_checked(args)
    current = io.schema_hash(dataset.names, dataset.types)
    if current != stored_hash:
        raise SystemExit(
            f"schema hash mismatch: fit was produced for {stored_hash[:12]}, data is {current[:12]}"
        )
    report = build_report(fit, dataset, min_count=args.min_count)
    files = io.write_report(report, outdir)
    print(f"wrote {len(files)} report files to {outdir}")
    _manifest(outdir, "explore", args, {"n_patterns": len(report.patterns)}, time.perf_counter() - t0)
    return 0


def cmd_impute(args) -> int:
    t0 = time.perf_counter()
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    fit, stored_hash = io.load_fit(args.fit)
    dataset = _load_checked(args)
    current = io.schema_hash(dataset.names, dataset.types)
    if current != stored_hash:
        raise SystemExit(
            f"schema hash mismatch: fit was produced for {stored_hash[:12]}, data is {current[:12]}"
        )
    result = impute_fit(fit, dataset)
    io.save_dataset(result.completed, outdir / "completed.csv")
    io.write_uncertainty(result.cells, dataset.types, dataset.names, outdir / "uncertainty.csv")
    print(f"imputed {len(result.cells)} cells -> {outdir}")
    _manifest(outdir, "impute", args, {"n_imputed": len(result.cells)}, time.perf_counter() - t0)
    return 0


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    names, types, _ = io.load_schema(args.schema)
    hyper = _hyper_from_args(args, args.seed)
    sim = simulate(args.n, types, names, hyper)
    io.save_dataset(sim.dataset, outdir / "data.csv")
    io.save_schema(outdir / "schema.json", names, types)
    truth = {
        "z": sim.z.astype(int).tolist(),
        "b": sim.b.tolist(),
        "thresholds": {
            str(d): list(s.thresholds) for d, s in enumerate(sim.specs) if s.thresholds is not None
        },
    }
    with open(outdir / "truth.json", "w", encoding="utf-8") as fh:
        json.dump(truth, fh)
        fh.write("\n")
    print(f"simulated {args.n} objects with K={sim.z.shape[1] - 1} -> {outdir}")
    _manifest(outdir, "simulate", args, {"k_true": sim.z.shape[1] - 1}, time.perf_counter() - t0)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixedlfm",
        description="Latent feature modeling of mixed-type tabular data",
    )
    parser.add_argument("--version", action="version", version=f"mixedlfm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="run the Gibbs sampler on a dataset")
    p_fit.add_argument("--data", required=True, help="CSV file")
    p_fit.add_argument("--schema", required=True, help="schema JSON file")
    p_fit.add_argument("--out", required=True, help="output directory")
    _add_model_flags(p_fit)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--chains", type=int, default=1, help="independent chains (seeds seed+i)")
    p_fit.set_defaults(func=cmd_fit)

    p_exp = sub.add_parser("explore", help="build the effects report from a fit")
    p_exp.add_argument("--fit", required=True, help="fit artifact (json.gz)")
    p_exp.add_argument("--data", required=True)
    p_exp.add_argument("--schema", required=True)
    p_exp.add_argument("--out", required=True)
    p_exp.add_argument("--min-count", type=int, default=0, help="drop patterns observed fewer times")
    p_exp.add_argument("--seed", type=int, default=0, help="echoed in the manifest; explore is deterministic")
    p_exp.set_defaults(func=cmd_explore)

    p_imp = sub.add_parser("impute", help="fill missing cells from the posterior predictive")
    p_imp.add_argument("--fit", required=True)
    p_imp.add_argument("--data", required=True)
    p_imp.add_argument("--schema", required=True)
    p_imp.add_argument("--out", required=True)
    p_imp.add_argument("--seed", type=int, default=0, help="echoed in the manifest; imputation is deterministic")
    p_imp.set_defaults(func=cmd_impute)

    p_sim = sub.add_parser("simulate", help="draw a synthetic dataset from the generative model")
    p_sim.add_argument("--schema", required=True)
    p_sim.add_argument("--n", type=int, required=True, help="number of objects")
    p_sim.add_argument("--out", required=True)
    _add_model_flags(p_sim)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # diagnostics raised with a message
        if isinstance(exc.code, int):
            raise
        print(f"error: {exc.code}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Usage:
    blocknngp simulate --n 2000 --seed 1 --phi 12 --out sim/
    blocknngp fit --data sim/dataset.csv --blocking regular --rows 4 --cols 4 \
        --nb 2 --sampler collapsed --out fit/
    blocknngp predict --data sim/dataset.csv --draws fit/draws.csv \
        --config fit/config_used.txt --out pred/
    blocknngp kld --data sim/dataset.csv --m-list 16,25,36,64 --nb-list 2,4 \
        --phi 12 --out diag/
    blocknngp corrcurve --data sim/dataset.csv --m 25 --nb 2 --phi 12 --out diag/
    blocknngp pattern --data sim/dataset.csv --m 25 --nb 2 --out diag/

Every flag can also come from a flat key=value --config file; explicit
flags win. Commands exit 0 on success and print one 'error: ...' line to
stderr otherwise.
"""
from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import dataio
from .blockgraph import build_graph
from .covariance import CovarianceSpec, effective_range_to_phi
from .dataio import DataError
from .factors import FactorStructure, assemble_precision, compute_block_factors
from .geometry import (LocationSet, kdtree_partition, regular_partition,
                       singleton_partition)
from .inference import (McmcConfig, ModelSpec, PriorSpec, metrics,
                        posterior_summary, recover_field_draws,
                        run_collapsed_mcmc, run_full_mcmc)
from .predict import predict_y
from .process import (empirical_correlation_curve, kld_vs_full_gp,
                      simulate_block_nngp, simulate_full_gp)


def _merged(args, keys):
    """Resolve option values: explicit flag > config file > default."""
    cfg = {}
    if getattr(args, "config", None):
        cfg = dataio.parse_config_file(args.config)
    out = {}
    for key, typ, default in keys:
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in cfg:
            raw = cfg[key]
            out[key] = (raw if typ is str
                        else typ(raw) if typ is not bool
                        else raw.lower() in ("1", "true", "yes"))
        else:
            out[key] = default
    return argparse.Namespace(**out)


_BLOCKING_KEYS = [
    ("blocking", str, "regular"),
    ("rows", int, 0), ("cols", int, 0), ("m", int, 16), ("nb", int, 2),
    ("kernel", str, "exponential"),
]


def _build_partition(opts, locs):
    mode = opts.blocking
    if mode == "regular":
        rows, cols = opts.rows, opts.cols
        if rows < 1 or cols < 1:
            rows = int(np.ceil(np.sqrt(opts.m)))
            cols = int(np.ceil(opts.m / rows))
        return regular_partition(locs, rows, cols)
    if mode == "kdtree":
        return kdtree_partition(locs, opts.m)
    if mode == "nngp":
        return singleton_partition(locs)
    raise DataError(f"unknown blocking '{mode}' (regular|kdtree|nngp)")


def _priors(opts):
    return PriorSpec(phi_bounds=(opts.phi_min, opts.phi_max),
                     sigma2_ig=(opts.sigma2_a, opts.sigma2_b),
                     tau2_ig=(opts.tau2_a, opts.tau2_b))


_PRIOR_KEYS = [
    ("phi_min", float, 1.0), ("phi_max", float, 30.0),
    ("sigma2_a", float, 2.0), ("sigma2_b", float, 1.0),
    ("tau2_a", float, 2.0), ("tau2_b", float, 1.0),
]


def _out_dir(opts):
    os.makedirs(opts.out, exist_ok=True)
    return opts.out


def _spec_from(opts):
    """Decay parameter: --phi when given, else --range, else 12."""
    phi = opts.phi
    if phi is None or phi <= 0:
        if opts.range and opts.range > 0:
            phi = effective_range_to_phi(opts.range)
        else:
            phi = 12.0
    return CovarianceSpec(kind=opts.kernel, sigma2=opts.sigma2, phi=phi)


def cmd_simulate(args):
    keys = [("n", int, 500), ("seed", int, 0), ("sigma2", float, 1.0),
            ("phi", float, 0.0), ("range", float, 0.0), ("tau2", float, 0.1),
            ("beta", str, "1,5"), ("kernel", str, "exponential"),
            ("holdout", int, 0), ("cap", int, 10000), ("approx", bool, False),
            ("m", int, 64), ("nb", int, 2), ("out", str, "sim")]
    opts = _merged(args, keys)
    out = _out_dir(opts)
    beta = np.array([float(v) for v in opts.beta.split(",")])
    rng = np.random.default_rng(opts.seed)
    coords = rng.uniform(0.0, 1.0, size=(opts.n, 2))
    locs = LocationSet(coords)
    spec = _spec_from(opts)
    if opts.n <= opts.cap:
        w = simulate_full_gp(spec, locs, seed=opts.seed + 1, cap=opts.cap).values
    elif opts.approx:
        part = kdtree_partition(locs, opts.m)
        graph = build_graph(part, opts.nb)
        factors = compute_block_factors(spec, locs, part, graph)
        w = simulate_block_nngp(factors, part, graph, seed=opts.seed + 1).values
    else:
        raise DataError(f"n={opts.n} exceeds dense cap {opts.cap}; "
                        "pass --approx to simulate through the block field")
    q = beta.size - 1
    covs = rng.standard_normal((opts.n, q)) if q > 0 else np.empty((opts.n, 0))
    X = np.hstack([np.ones((opts.n, 1)), covs])
    y = X @ beta + w + np.sqrt(opts.tau2) * rng.standard_normal(opts.n)
    names = [f"x{j+1}" for j in range(q)]
    y_out = y.copy()
    hold_y = []
    if opts.holdout > 0:
        if opts.holdout >= opts.n:
            raise DataError("holdout must be smaller than n")
        hold_idx = rng.choice(opts.n, size=opts.holdout, replace=False)
        hold_idx.sort()
        hold_y = y[hold_idx].tolist()
        y_out[hold_idx] = np.nan
    dataio.write_dataset_csv(os.path.join(out, "dataset.csv"),
                             coords, covs, y_out, names)
    dataio.write_json(os.path.join(out, "truth.json"), {
        "beta": beta.tolist(), "sigma2": opts.sigma2, "phi": spec.phi,
        "tau2": opts.tau2, "kernel": opts.kernel, "seed": opts.seed,
        "n": opts.n, "holdout_y": hold_y})
    print(f"wrote {out}/dataset.csv ({opts.n} rows, {opts.holdout} held out)")
    return 0


_MCMC_KEYS = [
    ("n_iter", int, 5000), ("burn_in", int, 1000), ("chains", int, 3),
    ("thin", int, 1), ("seed", int, 0), ("workers", int, 1),
    ("sampler", str, "collapsed"),
]


def _load_model(opts):
    ds = dataio.load_csv(opts.data)
    part = _build_partition(opts, ds.locs)
    graph = build_graph(part, opts.nb)
    model = ModelSpec(locs=ds.locs, X=ds.design(), y=ds.y, kind=opts.kernel,
                      priors=_priors(opts), partition=part, graph=graph)
    return ds, model


def cmd_fit(args):
    keys = [("data", str, None), *_BLOCKING_KEYS, *_PRIOR_KEYS, *_MCMC_KEYS,
            ("out", str, "fit")]
    opts = _merged(args, keys)
    if not opts.data:
        raise DataError("need --data")
    out = _out_dir(opts)
    ds, model = _load_model(opts)
    config = McmcConfig(n_iter=opts.n_iter, burn_in=opts.burn_in,
                        n_chains=opts.chains, thin=opts.thin, seed=opts.seed,
                        workers=opts.workers)
    run = run_collapsed_mcmc if opts.sampler == "collapsed" else run_full_mcmc
    if opts.sampler not in ("collapsed", "full"):
        raise DataError(f"unknown sampler '{opts.sampler}' (full|collapsed)")
    t0 = time.perf_counter()
    samples = run(model, config)
    elapsed = time.perf_counter() - t0
    dataio.write_draws_csv(os.path.join(out, "draws.csv"), samples)
    dataio.write_blocks_csv(os.path.join(out, "blocks.csv"), model.partition)
    dataio.write_graph_csv(os.path.join(out, "graph.csv"), model.graph)
    summary = {"params": posterior_summary(samples),
               "metrics": metrics(samples, model),
               "accept_rate": samples.accept_rate.tolist(),
               "elapsed_sec": elapsed,
               "n": model.n, "M": model.partition.M, "nb": model.graph.nb,
               "sampler": opts.sampler}
    dataio.write_json(os.path.join(out, "summary.json"), summary)
    echo = {k: getattr(opts, k) for k, _, _ in
            [("data", str, None), *_BLOCKING_KEYS, *_PRIOR_KEYS, *_MCMC_KEYS]}
    dataio.write_config_file(os.path.join(out, "config_used.txt"), echo)
    means = {k: round(v["mean"], 4) for k, v in summary["params"].items()}
    print(f"fit done in {elapsed:.1f}s; posterior means {means}")
    return 0


def cmd_predict(args):
    keys = [("data", str, None), ("draws", str, None), ("truth", str, None),
            *_BLOCKING_KEYS, *_PRIOR_KEYS,
            ("seed", int, 0), ("max_w_draws", int, 1000), ("out", str, "pred")]
    opts = _merged(args, keys)
    if not opts.data or not opts.draws:
        raise DataError("need --data and --draws")
    out = _out_dir(opts)
    ds, model = _load_model(opts)
    if ds.pred_coords.shape[0] == 0:
        raise DataError("no prediction rows (empty response) in the dataset")
    beta, theta = dataio.read_draws_csv(opts.draws)
    rng = np.random.default_rng(opts.seed)
    acc = recover_field_draws(model, theta.reshape(-1, 3),
                              beta.reshape(-1, beta.shape[2]), rng,
                              max_w_draws=opts.max_w_draws)
    pred = predict_y(ds.pred_coords, ds.pred_design(), opts.kernel, model.locs,
                     model.partition, np.array(acc.w_draws),
                     np.array(acc.w_beta), np.array(acc.w_theta))
    dataio.write_predictions_csv(os.path.join(out, "predictions.csv"),
                                 ds.pred_coords, pred)
    summary = {"n_sites": int(ds.pred_coords.shape[0]),
               "n_outside": int(pred.outside.sum()),
               "w_draws_used": len(acc.w_draws)}
    if opts.truth:
        truth = dataio.read_json(opts.truth)
        hold = np.asarray(truth.get("holdout_y", []), dtype=float)
        if hold.size == pred.mean.size:
            summary["rmsp"] = float(np.sqrt(np.mean((pred.mean - hold) ** 2)))
    dataio.write_json(os.path.join(out, "predict_summary.json"), summary)
    print(f"wrote {out}/predictions.csv ({summary['n_sites']} sites)")
    return 0


def _diag_setup(opts):
    ds = dataio.load_csv(opts.data)
    return ds.locs, _spec_from(opts)


def cmd_kld(args):
    keys = [("data", str, None), ("m_list", str, "16,25,36,64"),
            ("nb_list", str, "2,4"), ("blocking", str, "regular"),
            ("kernel", str, "exponential"), ("sigma2", float, 1.0),
            ("phi", float, 0.0), ("range", float, 0.0),
            ("cap", int, 10000), ("out", str, "diag")]
    opts = _merged(args, keys)
    if not opts.data:
        raise DataError("need --data")
    out = _out_dir(opts)
    locs, spec = _diag_setup(opts)
    rows = []
    for m in (int(v) for v in opts.m_list.split(",")):
        for nb in (int(v) for v in opts.nb_list.split(",")):
            o2 = argparse.Namespace(blocking=opts.blocking, rows=0, cols=0,
                                    m=m, nb=nb, kernel=opts.kernel)
            part = _build_partition(o2, locs)
            graph = build_graph(part, nb)
            factors = compute_block_factors(spec, locs, part, graph)
            kld = kld_vs_full_gp(factors, spec, locs, part, graph, cap=opts.cap)
            rows.append((part.M, nb, kld))
    dataio.write_kld_csv(os.path.join(out, "kld.csv"), rows)
    print(f"wrote {out}/kld.csv ({len(rows)} rows)")
    return 0


def cmd_corrcurve(args):
    keys = [("data", str, None), *_BLOCKING_KEYS,
            ("sigma2", float, 1.0), ("phi", float, 0.0), ("range", float, 0.0),
            ("bins", int, 25), ("cap", int, 10000), ("seed", int, 0),
            ("out", str, "diag")]
    opts = _merged(args, keys)
    if not opts.data:
        raise DataError("need --data")
    out = _out_dir(opts)
    locs, spec = _diag_setup(opts)
    part = _build_partition(opts, locs)
    graph = build_graph(part, opts.nb)
    curve = empirical_correlation_curve(spec, locs, part, graph,
                                        bins=opts.bins, seed=opts.seed,
                                        cap=opts.cap)
    dataio.write_corrcurve_csv(os.path.join(out, "corrcurve.csv"), curve)
    print(f"wrote {out}/corrcurve.csv ({curve.shape[0]} rows)")
    return 0


def cmd_pattern(args):
    keys = [("data", str, None), *_BLOCKING_KEYS,
            ("sigma2", float, 1.0), ("phi", float, 0.0), ("range", float, 0.0),
            ("out", str, "diag")]
    opts = _merged(args, keys)
    if not opts.data:
        raise DataError("need --data")
    out = _out_dir(opts)
    locs, spec = _diag_setup(opts)
    part = _build_partition(opts, locs)
    graph = build_graph(part, opts.nb)
    factors = compute_block_factors(spec, locs, part, graph)
    precision = assemble_precision(factors, part, graph)
    dataio.write_pattern_csv(os.path.join(out, "pattern.csv"), precision)
    frac = precision.nnz / precision.n ** 2
    print(f"wrote {out}/pattern.csv ({precision.nnz} non-zeros, "
          f"density {frac:.4f})")
    return 0


def _add_common(sub, flags):
    for flag, typ in flags:
        if typ is bool:
            sub.add_argument(f"--{flag.replace('_', '-')}",
                             action="store_const", const=True, default=None)
        else:
            sub.add_argument(f"--{flag.replace('_', '-')}", dest=flag,
                             type=typ, default=None)


def build_parser():
    ap = argparse.ArgumentParser(prog="blocknngp",
                                 description="block nearest-neighbor GP tools")
    sp = ap.add_subparsers(dest="command", required=True)
    common = [("config", str), ("out", str)]
    sim = sp.add_parser("simulate", help="draw a synthetic dataset")
    _add_common(sim, common + [("n", int), ("seed", int), ("sigma2", float),
                               ("phi", float), ("range", float), ("tau2", float),
                               ("beta", str), ("kernel", str), ("holdout", int),
                               ("cap", int), ("approx", bool), ("m", int),
                               ("nb", int)])
    sim.set_defaults(func=cmd_simulate)
    blocking = [("blocking", str), ("rows", int), ("cols", int), ("m", int),
                ("nb", int), ("kernel", str)]
    priors = [("phi_min", float), ("phi_max", float), ("sigma2_a", float),
              ("sigma2_b", float), ("tau2_a", float), ("tau2_b", float)]
    fit = sp.add_parser("fit", help="run MCMC on a dataset")
    _add_common(fit, common + [("data", str)] + blocking + priors +
                [("n_iter", int), ("burn_in", int), ("chains", int),
                 ("thin", int), ("seed", int), ("workers", int),
                 ("sampler", str)])
    fit.set_defaults(func=cmd_fit)
    pred = sp.add_parser("predict", help="predict at rows lacking a response")
    _add_common(pred, common + [("data", str), ("draws", str), ("truth", str)]
                + blocking + priors + [("seed", int), ("max_w_draws", int)])
    pred.set_defaults(func=cmd_predict)
    kld = sp.add_parser("kld", help="approximation KL divergence sweep")
    _add_common(kld, common + [("data", str), ("m_list", str), ("nb_list", str),
                               ("blocking", str), ("kernel", str),
                               ("sigma2", float), ("phi", float),
                               ("range", float), ("cap", int)])
    kld.set_defaults(func=cmd_kld)
    cc = sp.add_parser("corrcurve", help="implied correlation by distance")
    _add_common(cc, common + [("data", str)] + blocking +
                [("sigma2", float), ("phi", float), ("range", float),
                 ("bins", int), ("cap", int), ("seed", int)])
    cc.set_defaults(func=cmd_corrcurve)
    pat = sp.add_parser("pattern", help="precision sparsity pattern")
    _add_common(pat, common + [("data", str)] + blocking +
                [("sigma2", float), ("phi", float), ("range", float)])
    pat.set_defaults(func=cmd_pattern)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

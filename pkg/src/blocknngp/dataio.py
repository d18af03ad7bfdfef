"""CSV and config-file plumbing.

Dataset CSV: header x,y,<covariates...>,response; one row per location;
an empty response marks a prediction-only row. All floats are written
with 17 significant digits so a round trip is lossless.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .geometry import LocationSet


class DataError(ValueError):
    pass


def _fmt(v) -> str:
    return f"{float(v):.17g}"


@dataclass
class Dataset:
    """Training rows plus optional prediction-only rows from one CSV."""

    locs: LocationSet
    covariates: np.ndarray        # (n, q)
    y: np.ndarray                 # (n,)
    pred_coords: np.ndarray       # (h, 2)
    pred_covariates: np.ndarray   # (h, q)
    covariate_names: list

    @property
    def n(self) -> int:
        return self.locs.n

    def design(self) -> np.ndarray:
        """Training design matrix with a leading intercept column."""
        return np.hstack([np.ones((self.n, 1)), self.covariates])

    def pred_design(self) -> np.ndarray:
        h = self.pred_coords.shape[0]
        return np.hstack([np.ones((h, 1)), self.pred_covariates])


def load_csv(path) -> Dataset:
    """Read a dataset CSV, splitting rows into training and prediction."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("no data rows") from None
        header = [h.strip() for h in header]
        for req in ("x", "y", "response"):
            if req not in header:
                raise DataError(f"missing required column '{req}'")
        xi, yi, ri = header.index("x"), header.index("y"), header.index("response")
        cov_idx = [i for i in range(len(header)) if i not in (xi, yi, ri)]
        names = [header[i] for i in cov_idx]
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"line {lineno}: expected {len(header)} fields, "
                                f"got {len(rec)}")
            def num(i, what):
                s = rec[i].strip()
                try:
                    return float(s)
                except ValueError:
                    raise DataError(
                        f"line {lineno}: malformed {what} value '{s}'") from None
            cx, cy = num(xi, "x"), num(yi, "y")
            covs = [num(i, header[i]) for i in cov_idx]
            rs = rec[ri].strip()
            resp = float("nan") if rs == "" else num(ri, "response")
            rows.append((lineno, cx, cy, covs, resp))
    if not rows:
        raise DataError("no data rows")
    train = [r for r in rows if np.isfinite(r[4])]
    pred = [r for r in rows if not np.isfinite(r[4])]
    if not train:
        raise DataError("no rows with a response value")
    coords = np.array([(r[1], r[2]) for r in train])
    seen = {}
    for r in train:
        key = (r[1], r[2])
        if key in seen:
            raise DataError(f"duplicate location at lines {seen[key]} and {r[0]}")
        seen[key] = r[0]
    locs = LocationSet(coords)
    q = len(names)
    covariates = np.array([r[3] for r in train]).reshape(len(train), q)
    y = np.array([r[4] for r in train])
    pred_coords = (np.array([(r[1], r[2]) for r in pred])
                   if pred else np.empty((0, 2)))
    pred_covs = (np.array([r[3] for r in pred]).reshape(len(pred), q)
                 if pred else np.empty((0, q)))
    return Dataset(locs=locs, covariates=covariates, y=y,
                   pred_coords=pred_coords, pred_covariates=pred_covs,
                   covariate_names=names)


def write_dataset_csv(path, coords, covariates, y, covariate_names):
    """Write a dataset CSV; NaN responses become empty fields."""
    coords = np.asarray(coords, dtype=float)
    covariates = np.asarray(covariates, dtype=float)
    y = np.asarray(y, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", *covariate_names, "response"])
        for i in range(coords.shape[0]):
            resp = "" if not np.isfinite(y[i]) else _fmt(y[i])
            w.writerow([_fmt(coords[i, 0]), _fmt(coords[i, 1]),
                        *[_fmt(v) for v in covariates[i]], resp])


def write_draws_csv(path, samples):
    """Retained draws as (iter, chain, beta_*, sigma2, phi, tau2) rows."""
    p = samples.beta.shape[2]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "chain", *[f"beta_{j}" for j in range(p)],
                    "sigma2", "phi", "tau2"])
        for c in range(samples.beta.shape[0]):
            for t in range(samples.beta.shape[1]):
                w.writerow([t, c, *[_fmt(v) for v in samples.beta[c, t]],
                            *[_fmt(v) for v in samples.theta[c, t]]])


def read_draws_csv(path):
    """Inverse of write_draws_csv: (beta (C,T,p), theta (C,T,3))."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        p = sum(1 for h in header if h.startswith("beta_"))
        rows = [(int(r[0]), int(r[1]), [float(v) for v in r[2:]])
                for r in reader if r]
    if not rows:
        raise DataError("no draws")
    chains = sorted({r[1] for r in rows})
    iters = sorted({r[0] for r in rows})
    beta = np.empty((len(chains), len(iters), p))
    theta = np.empty((len(chains), len(iters), 3))
    for it, c, vals in rows:
        beta[chains.index(c), iters.index(it)] = vals[:p]
        theta[chains.index(c), iters.index(it)] = vals[p:p + 3]
    return beta, theta


def write_predictions_csv(path, coords, pred):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "pred_mean", "pred_var", "w_mean", "flag"])
        for i in range(coords.shape[0]):
            w.writerow([_fmt(coords[i, 0]), _fmt(coords[i, 1]),
                        _fmt(pred.mean[i]), _fmt(pred.var[i]),
                        _fmt(pred.w_mean[i]), int(pred.outside[i])])


def write_kld_csv(path, rows):
    """rows of (M, nb, kld)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["M", "nb", "kld", "sqrt_kld"])
        for m, nb, kld in rows:
            w.writerow([m, nb, _fmt(kld), _fmt(np.sqrt(max(kld, 0.0)))])


def write_corrcurve_csv(path, curve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dist", "true_corr", "approx_corr"])
        for d, tc, ac in curve:
            w.writerow([_fmt(d), _fmt(tc), _fmt(ac)])


def write_pattern_csv(path, precision):
    """Structural non-zeros of Q, row-major."""
    coo = precision.mat.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col"])
        for i in order:
            w.writerow([int(coo.row[i]), int(coo.col[i])])


def write_blocks_csv(path, part):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["location", "block"])
        for i, b in enumerate(part.block_of):
            w.writerow([i, int(b)])


def write_graph_csv(path, graph):
    from .blockgraph import graph_edges
    edges = graph_edges(graph)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block", "neighbor"])
        for a, b in edges:
            w.writerow([int(a), int(b)])


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def parse_config_file(path) -> dict:
    """Flat key=value lines; '#' starts a comment; later keys win."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"config line {lineno}: expected key=value")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def write_config_file(path, cfg: dict):
    with open(path, "w") as fh:
        for k in sorted(cfg):
            fh.write(f"{k} = {cfg[k]}\n")

"""Field simulation and approximation diagnostics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .blockgraph import BlockGraph
from .covariance import CovarianceSpec, cov, cov_matrix
from .factors import BlockFactors, FactorStructure, assemble_precision, log_det_ctilde
from .geometry import BlockPartition, LocationSet, locate_block
from .sparse import NotPositiveDefiniteError, SparsePrecision

DENSE_CAP = 10_000


@dataclass(frozen=True)
class GaussianFieldSample:
    """A zero-mean field draw with its provenance."""

    values: np.ndarray
    seed: int
    method: str  # "full_gp" | "block_nngp"


def _dense_cov(spec, locs) -> np.ndarray:
    d = cdist(locs.coords, locs.coords)
    return cov(spec, d)


def _dense_chol(spec, locs) -> np.ndarray:
    try:
        return np.linalg.cholesky(_dense_cov(spec, locs))
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(0, "dense covariance") from None


def simulate_full_gp(spec: CovarianceSpec, locs: LocationSet, seed: int,
                     cap: int = DENSE_CAP) -> GaussianFieldSample:
    """Exact draw via the dense covariance Cholesky. Refuses n > cap."""
    if locs.n > cap:
        raise ValueError(f"n={locs.n} exceeds dense cap {cap}")
    rng = np.random.default_rng(seed)
    w = _dense_chol(spec, locs) @ rng.standard_normal(locs.n)
    return GaussianFieldSample(values=w, seed=seed, method="full_gp")


def simulate_block_nngp(factors: BlockFactors, part: BlockPartition,
                        graph: BlockGraph, seed: int,
                        size: int | None = None) -> GaussianFieldSample:
    """Sequential draw through the block conditionals.

    Blocks are visited in conditioning order; each block draws
    w_bk = B_k w_N(bk) + chol(F_k) z. With size given, values has shape
    (size, n) of independent replicates sharing the block loop.
    """
    from .blockgraph import conditioning_indices

    rng = np.random.default_rng(seed)
    n = part.n
    reps = 1 if size is None else size
    w = np.zeros((reps, n))
    for k in range(part.M):
        idx_b = part.block_members[k]
        idx_n = conditioning_indices(graph, part, k)
        if size is None:
            z = rng.standard_normal(idx_b.size)
        else:
            z = rng.standard_normal((reps, idx_b.size))
        mean = w[:, idx_n] @ factors.b[k].T if idx_n.size else 0.0
        w[:, idx_b] = mean + z @ factors.f_chol[k].T
    vals = w[0] if size is None else w
    return GaussianFieldSample(values=vals, seed=seed, method="block_nngp")


def log_density(w: np.ndarray, factors: BlockFactors,
                precision: SparsePrecision) -> float:
    """log N(w; 0, Q^{-1}) using log det Q = -sum_k log det F_k."""
    w = np.asarray(w, dtype=float)
    n = precision.n
    if w.shape != (n,):
        raise ValueError(f"w has shape {w.shape}, expected ({n},)")
    logdet_q = -log_det_ctilde(factors)
    return -0.5 * (n * np.log(2.0 * np.pi) - logdet_q + precision.quad(w))


def kld_vs_full_gp(factors: BlockFactors, spec: CovarianceSpec, locs: LocationSet,
                   part: BlockPartition, graph: BlockGraph,
                   precision: SparsePrecision | None = None,
                   cap: int = DENSE_CAP) -> float:
    """KL( N(0, C) || N(0, Q^{-1}) ) of the approximation against the full GP.

    0.5 [ trace(QC) - n - log det C - log det Q ]; the trace needs C only
    at the sparsity pattern of Q.
    """
    n = locs.n
    if n > cap:
        raise ValueError(f"n={n} exceeds dense cap {cap}")
    if precision is None:
        precision = assemble_precision(factors, part, graph)
    c = _dense_cov(spec, locs)
    try:
        lc = np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(0, "dense covariance") from None
    logdet_c = float(2.0 * np.log(np.diag(lc)).sum())
    logdet_q = -log_det_ctilde(factors)
    coo = precision.mat.tocoo()
    trace = float(np.sum(coo.data * c[coo.row, coo.col]))
    return 0.5 * (trace - n - logdet_c - logdet_q)


def _site_regression(spec, locs, part, graph, xy):
    """Regression of a non-member site on its block's observed members.

    Returns (member indices, coefficients, conditional variance, flag).
    """
    block, outside = locate_block(part, locs, xy)
    idx = part.block_members[block]
    c_nn = cov_matrix(spec, idx, idx, locs)
    c_un = cov(spec, cdist(np.asarray(xy, dtype=float)[None, :], locs.coords[idx]))[0]
    sol = np.linalg.solve(c_nn, c_un)
    var = float(spec.sigma2 - c_un @ sol)
    return idx, sol, max(var, 0.0), outside


def implied_cross_covariance(spec: CovarianceSpec, locs: LocationSet,
                             part: BlockPartition, graph: BlockGraph,
                             v1, v2,
                             factors: BlockFactors | None = None,
                             precision: SparsePrecision | None = None) -> float:
    """Covariance between two sites under the approximate process.

    Sites are member indices (int) or coordinate pairs for new sites. The
    three cases: both members read Q^{-1}; a new site regresses onto its
    block through B; two new sites add the conditional variance when they
    coincide.
    """
    if factors is None:
        factors = FactorStructure(locs, part, graph, cache_distances=False)\
            .factors(spec)
    if precision is None:
        precision = assemble_precision(factors, part, graph)
    chol = precision.chol()
    n = locs.n

    def unit(j):
        e = np.zeros(n)
        e[j] = 1.0
        return e

    in1 = isinstance(v1, (int, np.integer))
    in2 = isinstance(v2, (int, np.integer))
    if in1 and in2:
        return float(chol.solve(unit(int(v2)))[int(v1)])
    if in1 != in2:
        j = int(v1) if in1 else int(v2)
        xy = v2 if in1 else v1
        idx, b_u, _, _ = _site_regression(spec, locs, part, graph, xy)
        col = chol.solve(unit(j))
        return float(b_u @ col[idx])
    idx1, b1, var1, _ = _site_regression(spec, locs, part, graph, v1)
    idx2, b2, _, _ = _site_regression(spec, locs, part, graph, v2)
    rhs = np.zeros((n, idx2.size))
    rhs[idx2, np.arange(idx2.size)] = 1.0
    ct = chol.solve(rhs)[idx1]
    val = float(b1 @ ct @ b2)
    if np.array_equal(np.asarray(v1, dtype=float), np.asarray(v2, dtype=float)):
        val += var1
    return val


def empirical_correlation_curve(spec: CovarianceSpec, locs: LocationSet,
                                part: BlockPartition, graph: BlockGraph,
                                bins: int = 25,
                                factors: BlockFactors | None = None,
                                precision: SparsePrecision | None = None,
                                max_pairs: int = 200_000, seed: int = 0,
                                cap: int = DENSE_CAP) -> np.ndarray:
    """Distance-binned implied correlations next to the true kernel curve.

    Returns rows (bin center, true correlation at center, mean implied
    correlation of pairs in the bin); the leading row is the zero-distance
    normalization (0, 1, 1). Empty bins are dropped.
    """
    n = locs.n
    if n > cap:
        raise ValueError(f"n={n} exceeds dense cap {cap}")
    if factors is None:
        factors = FactorStructure(locs, part, graph, cache_distances=False)\
            .factors(spec)
    if precision is None:
        precision = assemble_precision(factors, part, graph)
    ct = precision.chol().solve(np.eye(n))
    sd = np.sqrt(np.diag(ct))
    corr = ct / np.outer(sd, sd)
    iu, ju = np.triu_indices(n, k=1)
    if iu.size > max_pairs:
        keep = np.random.default_rng(seed).choice(iu.size, size=max_pairs,
                                                  replace=False)
        iu, ju = iu[keep], ju[keep]
    d = np.sqrt(np.sum((locs.coords[iu] - locs.coords[ju]) ** 2, axis=1))
    rho = corr[iu, ju]
    dmax = float(d.max())
    edges = np.linspace(0.0, dmax, bins + 1)
    which = np.minimum(np.searchsorted(edges, d, side="right") - 1, bins - 1)
    rows = [(0.0, 1.0, 1.0)]
    for b in range(bins):
        m = which == b
        if not m.any():
            continue
        center = 0.5 * (edges[b] + edges[b + 1])
        rows.append((center, float(cov(spec, center) / spec.sigma2),
                     float(rho[m].mean())))
    return np.array(rows)

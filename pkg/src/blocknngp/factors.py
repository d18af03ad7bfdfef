"""Per-block conditional factors and sparse precision assembly.

Each block k regresses on the members of its past-neighbor blocks:

    B_k = C[bk, N(bk)] C[N(bk), N(bk)]^{-1}
    F_k = C[bk, bk] - B_k C[N(bk), bk]

and the joint density of the conditional product has precision

    Q = sum_k G_k^T F_k^{-1} G_k,   G_k = [I, -B_k] on columns (bk, N(bk)),

which is sparse because each G_k touches only a block and its neighbors.
The unit-diagonal structure of the stacked G rows gives
log det Q = -sum_k log det F_k for free.

Blocks factor independently, so the per-block work runs on a thread pool
(the heavy ops are LAPACK/ufunc calls that release the GIL). Results are
merged in block order, so output bits do not depend on the worker count;
BLAS pools are pinned to one thread during assembly for the same reason.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.spatial.distance import cdist
from threadpoolctl import threadpool_limits

from .blockgraph import BlockGraph, conditioning_indices
from .covariance import CovarianceSpec, cov
from .geometry import BlockPartition, LocationSet
from .sparse import NotPositiveDefiniteError, SparsePrecision


@dataclass
class BlockFactors:
    """Conditional regression coefficients and residual covariances."""

    b: list          # block k -> (n_k, N_k) coefficients onto neighbor members
    f: list          # block k -> (n_k, n_k) conditional covariance
    f_chol: list     # lower Cholesky of f
    f_logdet: np.ndarray  # (M,) log det of each f

    @property
    def M(self) -> int:
        return len(self.b)


def log_det_ctilde(factors: BlockFactors) -> float:
    """log determinant of the approximate covariance (= -log det Q)."""
    return float(np.sum(factors.f_logdet))


def _factor_one(d_bb, d_bn, d_nn, spec, k):
    c_bb = cov(spec, d_bb)
    if d_nn.shape[0] == 0:
        b = np.zeros((d_bb.shape[0], 0))
        f = c_bb
    else:
        c_nn = cov(spec, d_nn)
        c_bn = cov(spec, d_bn)
        try:
            cn = cho_factor(c_nn, lower=True)
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError(k, "neighbor covariance") from None
        b = cho_solve(cn, c_bn.T).T
        f = c_bb - b @ c_bn.T
        f = 0.5 * (f + f.T)
    try:
        fc = np.linalg.cholesky(f)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(k, "conditional covariance") from None
    return b, f, fc, float(2.0 * np.log(np.diag(fc)).sum())


def _assemble_one(b, f_chol, nk):
    """Dense contribution H_k = G^T F^{-1} G with G = [I, -B]."""
    g = np.hstack([np.eye(nk), -b])
    w = solve_triangular(f_chol, g, lower=True)
    h = w.T @ w
    return 0.5 * (h + h.T)


class FactorStructure:
    """Index layout shared by repeated factor evaluations.

    Caches block/neighbor index vectors, the pairwise distances every
    kernel evaluation needs, and the triplet coordinates of the assembled
    precision, so an MCMC sweep pays only kernel values and Cholesky work
    per new covariance parameter.
    """

    def __init__(self, locs: LocationSet, part: BlockPartition, graph: BlockGraph,
                 cache_distances: bool = True):
        if graph.M != part.M:
            raise ValueError("graph and partition disagree on block count")
        coords = locs.coords
        self.n = locs.n
        self.part = part
        self.graph = graph
        self.block_idx = [part.block_members[k] for k in range(part.M)]
        self.nbr_idx = [conditioning_indices(graph, part, k) for k in range(part.M)]
        self._coords = coords
        self._dists = None
        if cache_distances:
            self._dists = [self._distances(k) for k in range(part.M)]
        rows, cols = [], []
        for k in range(part.M):
            u = np.concatenate([self.block_idx[k], self.nbr_idx[k]])
            rows.append(np.repeat(u, u.size))
            cols.append(np.tile(u, u.size))
        self._rows = np.concatenate(rows)
        self._cols = np.concatenate(cols)

    def _distances(self, k):
        if self._dists is not None:
            return self._dists[k]
        pb = self._coords[self.block_idx[k]]
        pn = self._coords[self.nbr_idx[k]]
        return cdist(pb, pb), cdist(pb, pn), cdist(pn, pn)

    def factors(self, spec: CovarianceSpec, workers: int = 1) -> BlockFactors:
        M = self.part.M

        def work(k):
            d_bb, d_bn, d_nn = self._distances(k)
            return _factor_one(d_bb, d_bn, d_nn, spec, k)

        out = _run_blocks(work, M, workers)
        b, f, fc, ld = zip(*out)
        return BlockFactors(b=list(b), f=list(f), f_chol=list(fc),
                            f_logdet=np.array(ld))

    def precision(self, factors: BlockFactors, workers: int = 1) -> SparsePrecision:
        def work(k):
            return _assemble_one(factors.b[k], factors.f_chol[k],
                                 self.block_idx[k].size).ravel()

        vals = _run_blocks(work, factors.M, workers)
        coo = sp.coo_matrix((np.concatenate(vals), (self._rows, self._cols)),
                            shape=(self.n, self.n))
        return SparsePrecision(_symmetrized_csr(coo))


def _symmetrized_csr(coo) -> sp.csr_matrix:
    """Duplicate-summed CSR forced to exact bitwise symmetry.

    The per-block contributions are symmetric, but scipy's duplicate
    summation can order the addends of (i, j) and (j, i) differently;
    averaging with the transpose restores q_ij == q_ji to the bit.
    """
    m = coo.tocsr()
    out = ((m + m.T) * 0.5).tocsr()
    out.sort_indices()
    return out


def _run_blocks(work, M, workers):
    """Run a per-block function, results in block order regardless of workers."""
    if workers <= 1:
        with threadpool_limits(limits=1):
            return [work(k) for k in range(M)]
    with threadpool_limits(limits=1):
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(work, range(M)))


def compute_block_factors(spec: CovarianceSpec, locs: LocationSet,
                          part: BlockPartition, graph: BlockGraph,
                          workers: int = 1) -> BlockFactors:
    """One-shot factor computation (no distance caching)."""
    return FactorStructure(locs, part, graph,
                           cache_distances=False).factors(spec, workers)


def assemble_precision(factors: BlockFactors, part: BlockPartition,
                       graph: BlockGraph, workers: int = 1) -> SparsePrecision:
    """Assemble Q from factors; needs only index structure, not coordinates."""
    rows, cols, vals = [], [], []

    def work(k):
        return _assemble_one(factors.b[k], factors.f_chol[k],
                             part.block_members[k].size).ravel()

    out = _run_blocks(work, factors.M, workers)
    n = part.n
    for k in range(factors.M):
        u = np.concatenate([part.block_members[k],
                            conditioning_indices(graph, part, k)])
        rows.append(np.repeat(u, u.size))
        cols.append(np.tile(u, u.size))
        vals.append(out[k])
    coo = sp.coo_matrix((np.concatenate(vals),
                         (np.concatenate(rows), np.concatenate(cols))),
                        shape=(n, n))
    return SparsePrecision(_symmetrized_csr(coo))


def quadratic_form(Q: SparsePrecision, w: np.ndarray) -> float:
    """w^T Q w through the sparse matvec."""
    return Q.quad(w)

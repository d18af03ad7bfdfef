"""Sparse symmetric positive-definite solves via a permuted banded Cholesky.

The precision matrices assembled from block factors are block-banded once
rows are ordered sensibly, so a reverse Cuthill-McKee permutation followed
by a banded Cholesky (LAPACK pbtrf) covers factorization, solves, log
determinant, and sampling. The envelope of the permuted matrix contains
all Cholesky fill, so the banded factor is exact.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve_banded, solve_banded
from scipy.linalg.lapack import dpbtrf
from scipy.sparse.csgraph import reverse_cuthill_mckee

# refuse band storage beyond ~1.6 GB rather than thrash
_MAX_BAND_ENTRIES = 200_000_000


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Factorization hit a non-positive pivot."""

    def __init__(self, pivot: int, context: str = "matrix"):
        self.pivot = pivot
        super().__init__(f"{context} not positive definite (pivot {pivot})")


class BandedCholesky:
    """Lower-triangular banded Cholesky of a permuted sparse SPD matrix.

    Holds A[p,:][:,p] = L L^T with p a reverse Cuthill-McKee ordering;
    solve/sample results are returned in the original index order.
    """

    def __init__(self, mat: sp.spmatrix, perm: np.ndarray | None = None):
        csr = sp.csr_matrix(mat)
        n = csr.shape[0]
        if csr.shape[0] != csr.shape[1]:
            raise ValueError("matrix must be square")
        if perm is None:
            perm = np.asarray(reverse_cuthill_mckee(csr, symmetric_mode=True))
        self.n = n
        self.perm = perm
        ap = csr[perm, :][:, perm].tocoo()
        keep = ap.row >= ap.col
        r, c, v = ap.row[keep], ap.col[keep], ap.data[keep]
        bw = int((r - c).max()) if r.size else 0
        if (bw + 1) * n > _MAX_BAND_ENTRIES:
            raise MemoryError(
                f"band storage too large (bandwidth {bw}, n {n})")
        band = np.zeros((bw + 1, n))
        band[r - c, c] = v
        factor, info = dpbtrf(band, lower=1)
        if info > 0:
            raise NotPositiveDefiniteError(int(perm[info - 1]))
        if info < 0:
            raise np.linalg.LinAlgError(f"banded factorization failed (arg {-info})")
        self.bw = bw
        self._lower = factor
        # L^T in general banded storage, for sampling through the factor
        ut = np.zeros((bw + 1, n))
        for k in range(bw + 1):
            ut[bw - k, k:] = factor[k, :n - k]
        self._upper = ut
        self.logdet = float(2.0 * np.log(factor[0]).sum())

    def solve(self, b: np.ndarray) -> np.ndarray:
        """x with A x = b; b may be (n,) or (n, k)."""
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError("rhs has wrong length")
        xp = cho_solve_banded((self._lower, True), b[self.perm])
        x = np.empty_like(xp)
        x[self.perm] = xp
        return x

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Draw from N(0, A^{-1}) by solving L^T x = z."""
        shape = (self.n,) if size is None else (self.n, size)
        z = rng.standard_normal(shape)
        xp = solve_banded((0, self.bw), self._upper, z)
        x = np.empty_like(xp)
        x[self.perm] = xp
        return x if size is None else x.T


class SparsePrecision:
    """Symmetric sparse precision with a cached Cholesky handle."""

    def __init__(self, mat: sp.csr_matrix):
        if mat.shape[0] != mat.shape[1]:
            raise ValueError("precision must be square")
        self.mat = mat
        self._chol: BandedCholesky | None = None

    @property
    def n(self) -> int:
        return self.mat.shape[0]

    @property
    def nnz(self) -> int:
        return self.mat.nnz

    def chol(self) -> BandedCholesky:
        if self._chol is None:
            self._chol = BandedCholesky(self.mat)
        return self._chol

    @property
    def logdet(self) -> float:
        return self.chol().logdet

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self.chol().solve(b)

    def matvec(self, w: np.ndarray) -> np.ndarray:
        return self.mat @ w

    def quad(self, w: np.ndarray) -> float:
        """w^T Q w."""
        w = np.asarray(w, dtype=float)
        if w.shape != (self.n,):
            raise ValueError(f"vector has shape {w.shape}, expected ({self.n},)")
        return float(w @ (self.mat @ w))


def sparse_cholesky(Q: SparsePrecision) -> BandedCholesky:
    """Factorization handle for a sparse precision (cached on Q)."""
    return Q.chol()

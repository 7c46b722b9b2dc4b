"""Dense linear-algebra kernels used by the DMD fit.

Thin contracts over LAPACK (through numpy): a truncated SVD with a fixed
numerical-rank cutoff, a dense eigendecomposition with a deterministic
eigenvector normalization, and an SVD-based least-squares solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, IngestionDefectError, NumericalError

#: Singular values at or below ``RANK_CUTOFF * sigma_1`` count as zero.
RANK_CUTOFF = 1e-12

EIG_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class SvdFactors:
    """Rank-truncated SVD ``x ~= u @ diag(sigma) @ v.T``.

    ``u`` is n x r, ``v`` is m x r. ``effective_rank`` counts the leading
    singular values above the cutoff; trailing ones may be (numerically) zero.
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    effective_rank: int

    @property
    def rank(self) -> int:
        return self.sigma.shape[0]

    def truncate(self, r: int) -> "SvdFactors":
        r = min(r, self.rank)
        return SvdFactors(
            self.u[:, :r], self.sigma[:r], self.v[:, :r], min(self.effective_rank, r)
        )


def _check_finite(a, what):
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(a))
        raise IngestionDefectError(
            f"{what} has {len(bad)} non-finite entries (first at index {tuple(bad[0])})"
        )


def effective_rank(sigma, cutoff=RANK_CUTOFF) -> int:
    sigma = np.asarray(sigma)
    if sigma.size == 0 or sigma[0] <= 0:
        return 0
    return int(np.count_nonzero(sigma > cutoff * sigma[0]))


def reduced_svd(x, max_rank: int | None = None) -> SvdFactors:
    """Top ``max_rank`` singular triplets of a real matrix.

    Singular vectors get a sign convention (largest-magnitude entry of each
    column of ``u`` is positive) so repeated calls agree exactly.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or min(x.shape) < 1:
        raise ArgumentError(f"expected a non-empty 2-D matrix, got shape {x.shape}")
    _check_finite(x, "SVD input")
    full = min(x.shape)
    if max_rank is None:
        max_rank = full
    if not 1 <= max_rank <= full:
        raise ArgumentError(f"max_rank must lie in [1, {full}], got {max_rank}")

    u, s, vt = np.linalg.svd(x, full_matrices=False)
    u, s, v = u[:, :max_rank], s[:max_rank], vt[:max_rank].T

    pivot = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[pivot, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    u = u * signs
    v = v * signs
    return SvdFactors(u, s, v, effective_rank(s))


def _normalize_columns(w):
    w = w / np.linalg.norm(w, axis=0)
    # rotate the first largest-magnitude entry of each column onto the positive real axis
    idx = np.argmax(np.abs(w), axis=0)
    lead = w[idx, np.arange(w.shape[1])]
    return w * (np.abs(lead) / lead)


def eig_dense(a):
    """Eigenvalues and unit-norm eigenvectors of a small dense real matrix.

    Returns ``(values, vectors)`` with ``a @ vectors ~= vectors * values``.
    Conjugate eigenvalue pairs of a real input come back exactly conjugate,
    as do their eigenvectors.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise ArgumentError(f"eig_dense needs a non-empty square matrix, got {a.shape}")
    _check_finite(a, "eigenproblem input")
    try:
        values, vectors = np.linalg.eig(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition did not converge: {exc}") from exc

    values = values.astype(complex) + 0.0  # folds -0.0 imaginary parts to +0.0
    vectors = _normalize_columns(vectors.astype(complex))

    scale = np.max(np.abs(a))
    residual = np.max(np.abs(a @ vectors - vectors * values)) if a.size else 0.0
    if residual > EIG_RESIDUAL_TOL * max(scale, np.finfo(float).tiny):
        raise NumericalError(
            f"eigendecomposition residual {residual:.3e} exceeds "
            f"{EIG_RESIDUAL_TOL:g} * max|a| = {EIG_RESIDUAL_TOL * scale:.3e}"
        )
    return values, vectors


def least_squares(a, y):
    """Minimum-norm least-squares solution of ``a @ b ~= y``.

    Uses the SVD pseudoinverse with the same relative cutoff as
    :func:`reduced_svd`.
    """
    a = np.asarray(a, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or y.ndim != 1:
        raise ArgumentError("least_squares expects a matrix and a vector")
    if a.shape[0] != y.shape[0]:
        raise ArgumentError(f"row mismatch: a has {a.shape[0]} rows, y has {y.shape[0]}")
    if a.shape[0] < a.shape[1]:
        raise ArgumentError(f"a must have rows >= cols, got {a.shape}")
    _check_finite(a, "least-squares matrix")
    _check_finite(y, "least-squares right-hand side")

    u, s, vh = np.linalg.svd(a, full_matrices=False)
    keep = effective_rank(s)
    coeff = (u[:, :keep].conj().T @ y) / s[:keep]
    return vh[:keep].conj().T @ coeff

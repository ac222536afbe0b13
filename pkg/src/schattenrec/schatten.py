"""Schatten (quasi)norms, spectral truncation and block decompositions.

All operations are pure functions on square float64 matrices.  Each call
computes at most one SVD of its input and caches nothing globally.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

# singular values below RANK_CUTOFF * sigma_max count as exact zeros for rank
RANK_CUTOFF = 1e-12


def as_matrix(x):
    """Validate and return a square matrix with finite float64 entries."""
    X = np.asarray(x, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("matrix entries must be finite")
    return X


@dataclass(frozen=True)
class SvdFactors:
    """Full SVD, X = u @ diag(sigma) @ v.T with sigma nonincreasing."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def n(self):
        return self.sigma.shape[0]

    def compose(self):
        return (self.u * self.sigma) @ self.v.T


def svd(X):
    """Full singular value decomposition as an SvdFactors triple."""
    X = as_matrix(X)
    u, s, vh = np.linalg.svd(X)
    return SvdFactors(u=u, sigma=s, v=vh.T)


def singular_values(X):
    return np.linalg.svd(as_matrix(X), compute_uv=False)


def numerical_rank(sigma):
    """Rank with values below RANK_CUTOFF * sigma_max treated as zero."""
    sigma = np.asarray(sigma)
    if sigma.size == 0 or sigma[0] <= 0.0:
        return 0
    return int(np.count_nonzero(sigma > RANK_CUTOFF * sigma[0]))


def _check_p(p):
    if not (p > 0):
        raise ValidationError(f"p must be positive, got {p}")


def norm_from_sigma(sigma, p):
    """(sum_i sigma_i^p)^(1/p); p = inf returns the largest value.

    Values below RANK_CUTOFF * sigma_max are numerical zeros and are dropped;
    for p < 1 they would otherwise inject noise amplified to eps^p.
    """
    _check_p(p)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.isinf(p):
        return float(sigma[0]) if sigma.size else 0.0
    if not sigma.size:
        return 0.0
    smax = sigma.max()
    if smax == 0.0:
        return 0.0
    scaled = sigma / smax
    scaled = scaled[scaled > RANK_CUTOFF]
    return float(smax * np.sum(scaled**p) ** (1.0 / p))


def schatten_norm(X, p):
    """Schatten p-(quasi)norm: the l_p norm of the singular values."""
    return norm_from_sigma(singular_values(X), p)


def weak_norm_from_sigma(sigma, p):
    _check_p(p)
    sigma = np.sort(np.asarray(sigma, dtype=np.float64))[::-1]
    if not sigma.size or sigma[0] == 0.0:
        return 0.0
    sigma = np.where(sigma > RANK_CUTOFF * sigma[0], sigma, 0.0)
    k = np.arange(1, sigma.size + 1)
    return float(np.max(k ** (1.0 / p) * sigma))


def weak_schatten_norm(X, p):
    """Weak Schatten norm: max_k k^(1/p) * sigma*_k over the sorted spectrum."""
    return weak_norm_from_sigma(singular_values(X), p)


def spectral_truncate(X, s):
    """Best rank-s approximation: keep the s largest singular triples."""
    f = svd(X)
    if not (0 <= s <= f.n):
        raise ValidationError(f"truncation rank s={s} out of range [0, {f.n}]")
    sigma = f.sigma.copy()
    sigma[s:] = 0.0
    return (f.u * sigma) @ f.v.T


def best_rank_error(X, s, p):
    """Distance from X to the rank-s matrices in the Schatten p-(quasi)norm."""
    _check_p(p)
    sigma = singular_values(X)
    if not (0 <= s <= sigma.size):
        raise ValidationError(f"rank s={s} out of range [0, {sigma.size}]")
    return norm_from_sigma(sigma[s:], p)


@dataclass(frozen=True)
class BlockSplit:
    """Z = head + tail in the singular frame of a reference matrix.

    In that frame the head occupies the first s rows and columns (rank at
    most 2s), and the tail is supported on the trailing (n-s) x (n-s) block.
    """

    head: np.ndarray
    tail: np.ndarray
    s: int


def block_split(Z, frame, s):
    """Split Z against the SVD frame (u, v) of a reference matrix.

    Rotating by the frame, the leading s x s block together with the two
    off-diagonal strips form the head; the trailing block forms the tail.
    """
    Z = as_matrix(Z)
    n = frame.n
    if Z.shape[0] != n:
        raise ValidationError("Z and reference frame have different sizes")
    if not (1 <= s < n):
        raise ValidationError(f"split rank s={s} out of range [1, {n - 1}]")
    M = frame.u.T @ Z @ frame.v
    M_head = M.copy()
    M_head[s:, s:] = 0.0
    M_tail = np.zeros_like(M)
    M_tail[s:, s:] = M[s:, s:]
    head = frame.u @ M_head @ frame.v.T
    tail = frame.u @ M_tail @ frame.v.T
    return BlockSplit(head=head, tail=tail, s=s)


@dataclass(frozen=True)
class TailBlocks:
    """Tail split into matrices of rank <= t with disjoint singular supports."""

    blocks: tuple
    t: int


def tail_blocks(tail, frame, s, t):
    """Group the tail's singular values into consecutive chunks of size t.

    Block 1 carries the t largest singular values of the rotated trailing
    block, block 2 the next t, and so on; each chunk is rotated back into
    the original coordinates.  Supports are disjoint by construction, so
    p-th power norms add exactly across blocks.
    """
    tail = as_matrix(tail)
    n = frame.n
    if tail.shape[0] != n:
        raise ValidationError("tail and reference frame have different sizes")
    if t < 1:
        raise ValidationError(f"block size t={t} must be >= 1")
    if not (1 <= s < n):
        raise ValidationError(f"split rank s={s} out of range [1, {n - 1}]")
    U2 = frame.u[:, s:]
    V2 = frame.v[:, s:]
    M22 = U2.T @ tail @ V2
    P, lam, Qh = np.linalg.svd(M22)
    blocks = []
    for start in range(0, lam.size, t):
        chunk = lam[start : start + t]
        if not np.any(chunk > 0.0):
            break
        piece = (P[:, start : start + t] * chunk) @ Qh[start : start + t, :]
        blocks.append(U2 @ piece @ V2.T)
    return TailBlocks(blocks=tuple(blocks), t=t)

"""Measurement operators A : (n x n matrices) -> R^m and restricted-isometry probing.

Two ensembles: dense Gaussian (entries i.i.d. N(0, 1/m)) and entry-sampling
masks (matrix-completion style).  Probing brackets the extremal constants
alpha_s, beta_s of A on the rank-s manifold by Monte Carlo over factored
draws plus alternating Rayleigh-quotient refinement; the bracket is one-sided
by nature and the results carry that metadata.
"""

import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from . import matio
from .errors import MemoryGuardError, ValidationError
from .rng import spawn_rng

DEFAULT_MEMORY_GUARD_MB = 1024.0

#: conservative measurement budget factor: m >= RIP_BUDGET_FACTOR * s * n is the
#: regime where Gaussian draws reliably act as near-isometries on rank-s matrices
RIP_BUDGET_FACTOR = 6.0

SIDEDNESS_NOTE = (
    "alpha_hat upper-estimates the true minimum and beta_hat lower-estimates "
    "the true maximum; sampling plus local refinement cannot certify extrema"
)


def check_memory_guard(n_floats, guard_mb=DEFAULT_MEMORY_GUARD_MB):
    needed_mb = 8.0 * float(n_floats) / 2**20
    if needed_mb > guard_mb:
        raise MemoryGuardError(needed_mb, guard_mb)


@dataclass(frozen=True)
class MeasurementOperator:
    """Linear map from n x n matrices to R^m.

    kind "gaussian-dense" stores the m x n^2 sensing array (row i is the
    vectorized i-th sensing matrix); kind "entry-mask" stores m distinct
    (row, col) pairs and a scale, measuring scale * X[i, j].
    """

    kind: str
    n: int
    m: int
    seed: int | None = None
    scale: float = 1.0
    indices: tuple | None = None
    payload: np.ndarray | None = None

    def apply(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape != (self.n, self.n):
            raise ValidationError(f"operator expects {self.n}x{self.n}, got {X.shape}")
        if self.kind == "gaussian-dense":
            return self.payload @ X.ravel(order="C")
        rows, cols = self._index_arrays()
        return self.scale * X[rows, cols]

    def adjoint(self, y):
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.m,):
            raise ValidationError(f"operator adjoint expects length {self.m}, got {y.shape}")
        if self.kind == "gaussian-dense":
            return (self.payload.T @ y).reshape(self.n, self.n)
        out = np.zeros((self.n, self.n))
        rows, cols = self._index_arrays()
        np.add.at(out, (rows, cols), self.scale * y)
        return out

    def dense_matrix(self, guard_mb=DEFAULT_MEMORY_GUARD_MB):
        """m x n^2 matrix of the operator in vectorized coordinates."""
        check_memory_guard(self.m * self.n**2, guard_mb)
        if self.kind == "gaussian-dense":
            return self.payload
        A = np.zeros((self.m, self.n**2))
        rows, cols = self._index_arrays()
        A[np.arange(self.m), rows * self.n + cols] = self.scale
        return A

    def _index_arrays(self):
        idx = np.asarray(self.indices, dtype=np.intp)
        return idx[:, 0], idx[:, 1]


def gaussian_operator(n, m, seed, guard_mb=DEFAULT_MEMORY_GUARD_MB):
    """Dense ensemble with i.i.d. N(0, 1/m) entries, reproducible from the seed.

    m may exceed n^2 (overdetermined measurements are harmless); masks cannot.
    """
    if m < 1:
        raise ValidationError(f"m={m} must be >= 1")
    check_memory_guard(m * n**2, guard_mb)
    rng = spawn_rng(seed, "gaussian-operator")
    payload = rng.normal(0.0, 1.0 / math.sqrt(m), size=(m, n * n))
    return MeasurementOperator(kind="gaussian-dense", n=n, m=m, seed=int(seed), payload=payload)


def entry_mask_operator(n, indices, scale=1.0):
    """Sampling operator returning scale * X[i, j] for each listed entry."""
    indices = tuple((int(i), int(j)) for i, j in indices)
    if not (1 <= len(indices) <= n * n):
        raise ValidationError(f"need between 1 and {n * n} indices, got {len(indices)}")
    if len(set(indices)) != len(indices):
        raise ValidationError("mask indices must be distinct")
    for i, j in indices:
        if not (0 <= i < n and 0 <= j < n):
            raise ValidationError(f"mask index {(i, j)} out of range for n={n}")
    return MeasurementOperator(
        kind="entry-mask", n=n, m=len(indices), scale=float(scale), indices=indices
    )


def full_vectorization_operator(n, scale=1.0):
    """Mask over every entry; an exact isometry when scale = 1."""
    return entry_mask_operator(n, [(i, j) for i in range(n) for j in range(n)], scale)


# ---------------------------------------------------------------------------
# restricted extremal constants


@dataclass(frozen=True)
class RestrictedConstants:
    """Empirical bracket of the extremal constants of A on rank-s matrices.

    gamma_hat = beta_hat^2 / alpha_hat^2 and delta_hat its isometry-defect
    form; both are lower estimates of the true values.  degenerate flags an
    alpha estimate of zero (the ratio is then undefined).
    """

    s: int
    alpha_hat: float
    beta_hat: float
    gamma_hat: float
    delta_hat: float
    sidedness: str
    trials: int
    refine_iters: int
    degenerate: bool = False


def gamma_from_delta(delta):
    if not (0.0 <= delta < 1.0):
        raise ValidationError(f"delta must be in [0, 1), got {delta}")
    return (1.0 + delta) / (1.0 - delta)


def delta_from_gamma(gamma):
    if not (gamma >= 1.0):
        raise ValidationError(f"gamma must be >= 1, got {gamma}")
    return (gamma - 1.0) / (gamma + 1.0)


def _ratio(A, G, H):
    """||A(G H^T)|| / ||G H^T||_F, or 0 for a zero product."""
    Z = G @ H.T
    nz = np.linalg.norm(Z)
    if nz == 0.0:
        return 0.0
    return float(np.linalg.norm(A.apply(Z)) / nz)


def _rayleigh_step(tensor, F_fixed, side, extremum):
    """Extreme generalized eigenvector of the quadratic ratio in one factor.

    With the other factor fixed, ||A(G H^T)||^2 / ||G H^T||_F^2 is a
    generalized Rayleigh quotient in the free factor; its extremum is an
    eigenvector of an (n*s) x (n*s) pencil.
    """
    m = tensor.shape[0]
    if side == "left":
        rows = np.einsum("mij,jl->mil", tensor, F_fixed)  # row k = A_k @ H
    else:
        rows = np.einsum("mij,il->mjl", tensor, F_fixed)  # row k = A_k^T @ G
    n, s = rows.shape[1], rows.shape[2]
    Mrows = rows.reshape(m, n * s)
    quad = Mrows.T @ Mrows
    gram = F_fixed.T @ F_fixed
    B = np.kron(np.eye(n), gram)
    B = B + (1e-12 * max(np.trace(B) / B.shape[0], 1e-300)) * np.eye(B.shape[0])
    w, V = scipy.linalg.eigh(quad, B)
    col = 0 if extremum == "min" else -1
    vec = V[:, col].reshape(n, s)
    nv = np.linalg.norm(vec)
    return vec / nv if nv > 0 else vec


def _refine(A, tensor, G0, H0, extremum, iters):
    G, H = G0.copy(), H0.copy()
    for _ in range(iters):
        G = _rayleigh_step(tensor, H, "left", extremum)
        H = _rayleigh_step(tensor, G, "right", extremum)
    return _ratio(A, G, H)


def estimate_restricted_constants(A, s, trials, refine_iters, seed, guard_mb=DEFAULT_MEMORY_GUARD_MB):
    """Bracket min/max of ||A(Z)|| over unit-Frobenius rank-s matrices.

    Each trial draws Z = G H^T with Gaussian factors and refines both the
    running minimum and maximum by alternating Rayleigh-quotient steps in G
    and H.  Every draw is refined independently, so estimates are monotone
    as trials grow under nested seeds.  Deterministic given the seed.
    """
    if not (1 <= s <= A.n):
        raise ValidationError(f"s={s} out of range [1, {A.n}]")
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    n = A.n
    tensor = A.dense_matrix(guard_mb).reshape(A.m, n, n)
    alpha = math.inf
    beta = 0.0
    for i in range(trials):
        rng = spawn_rng(seed, "rip-trial", i)
        G = rng.standard_normal((n, s))
        H = rng.standard_normal((n, s))
        raw = _ratio(A, G, H)
        lo = hi = raw
        if refine_iters > 0:
            lo = min(raw, _refine(A, tensor, G, H, "min", refine_iters))
            hi = max(raw, _refine(A, tensor, G, H, "max", refine_iters))
        alpha = min(alpha, lo)
        beta = max(beta, hi)
    degenerate = alpha <= 1e-14 * max(beta, 1.0)
    if degenerate:
        gamma = math.nan
        delta = math.nan
    else:
        gamma = max(beta**2 / alpha**2, 1.0)
        delta = delta_from_gamma(gamma)
    return RestrictedConstants(
        s=s,
        alpha_hat=float(alpha),
        beta_hat=float(beta),
        gamma_hat=float(gamma),
        delta_hat=float(delta),
        sidedness=SIDEDNESS_NOTE,
        trials=int(trials),
        refine_iters=int(refine_iters),
        degenerate=bool(degenerate),
    )


# ---------------------------------------------------------------------------
# serialization: JSON header plus optional SMAT payload


def save_operator(A, path, include_payload=False):
    doc = {"kind": A.kind, "n": A.n, "m": A.m, "seed": A.seed}
    if A.kind == "entry-mask":
        doc["scale"] = A.scale
        doc["indices"] = [list(ij) for ij in A.indices]
    elif include_payload:
        payload_file = os.fspath(path) + ".smat"
        matio.save_matrix_smat(payload_file, A.payload)
        doc["payload_file"] = os.path.basename(payload_file)
    matio.atomic_write_text(path, json.dumps(doc, indent=2))


def load_operator(path, guard_mb=DEFAULT_MEMORY_GUARD_MB):
    with open(path) as f:
        doc = json.load(f)
    kind = doc.get("kind")
    if kind == "entry-mask":
        return entry_mask_operator(doc["n"], doc["indices"], doc.get("scale", 1.0))
    if kind != "gaussian-dense":
        raise ValidationError(f"{path}: unknown operator kind {kind!r}")
    if "payload_file" in doc:
        payload_path = os.path.join(os.path.dirname(os.path.abspath(path)), doc["payload_file"])
        payload = matio.load_matrix_smat(payload_path)
        if payload.shape != (doc["m"], doc["n"] ** 2):
            raise ValidationError(f"{path}: payload shape {payload.shape} mismatches header")
        return MeasurementOperator(
            kind="gaussian-dense", n=doc["n"], m=doc["m"], seed=doc.get("seed"), payload=payload
        )
    if doc.get("seed") is None:
        raise ValidationError(f"{path}: gaussian operator needs a seed or a payload file")
    return gaussian_operator(doc["n"], doc["m"], doc["seed"], guard_mb)

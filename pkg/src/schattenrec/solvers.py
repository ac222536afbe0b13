"""Reconstruction maps: Schatten norm minimization under measurement constraints.

recover_nuclear solves the convex p = 1 problem by alternating splitting with
singular-value soft-thresholding; recover_schatten_p handles 0 < p < 1 by
iteratively reweighted least squares on a smoothed objective and returns a
local minimizer.  oracle_recover_small is a brute-force reference for tiny
problems, used to validate the main solvers.

Both main solvers normalize y to unit length internally and rescale the
result, so solutions are exactly homogeneous in y.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import NumericalError, ValidationError
from .measurements import DEFAULT_MEMORY_GUARD_MB
from .rng import spawn_rng
from .schatten import norm_from_sigma, schatten_norm


def _default_epsilon_schedule(start=1.0, decay=0.5, floor=1e-9):
    vals = []
    v = start
    while v > floor:
        vals.append(v)
        v *= decay
    vals.append(floor)
    return tuple(vals)


DEFAULT_EPSILON_SCHEDULE = _default_epsilon_schedule()


@dataclass
class SolveOptions:
    max_iters: int = 5000
    tol_residual: float = 1e-8
    tol_change: float = 1e-9
    penalty: float = 1.0
    epsilon_schedule: tuple = DEFAULT_EPSILON_SCHEDULE
    warm_start: np.ndarray | None = None
    trace: bool = False
    memory_guard_mb: float = DEFAULT_MEMORY_GUARD_MB

    def validate(self):
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if self.tol_residual <= 0 or self.tol_change <= 0 or self.penalty <= 0:
            raise ValidationError("tolerances and penalty must be positive")
        sched = tuple(self.epsilon_schedule)
        if not sched or any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValidationError("epsilon_schedule must be strictly decreasing")
        if sched[-1] < 1e-10:
            raise ValidationError("epsilon_schedule floor must be >= 1e-10")
        return self


@dataclass
class SolveResult:
    minimizer: np.ndarray
    objective: float
    residual: float
    iterations: int
    converged: bool
    status_note: str
    trace: list = field(default_factory=list)


class ConstraintGeometry:
    """Projections onto {Z : A(Z) = y} and {Z : ||A(Z) - y|| <= eta}.

    Works in vectorized coordinates from the eigendecomposition of the
    m x m Gram matrix of the operator, so rank-deficient operators fall
    back to least-squares projections.
    """

    def __init__(self, Amat, y):
        self.Amat = Amat
        self.y = np.asarray(y, dtype=np.float64)
        K = Amat @ Amat.T
        self.evals, self.evecs = np.linalg.eigh(K)
        cut = max(self.evals[-1], 0.0) * 1e-13
        self.mask = self.evals > cut
        self.inv_evals = np.where(self.mask, 1.0 / np.where(self.mask, self.evals, 1.0), 0.0)

    def project_equality(self, v):
        d = self.Amat @ v - self.y
        c = self.evecs @ (self.inv_evals * (self.evecs.T @ d))
        return v - self.Amat.T @ c

    def project_ball(self, v, eta):
        if eta <= 0.0:
            return self.project_equality(v)
        d = self.Amat @ v - self.y
        if np.linalg.norm(d) <= eta:
            return v
        dhat = self.evecs.T @ d
        null_mass = float(np.sum(dhat[~self.mask] ** 2))
        if null_mass >= eta**2:
            # ball unreachable along the operator range; return closest point
            return self.project_equality(v)

        def excess(tau):
            return float(np.sum(dhat**2 / (1.0 + tau * self.evals) ** 2)) - eta**2

        hi = 1.0
        while excess(hi) > 0.0:
            hi *= 10.0
            if hi > 1e18:
                return self.project_equality(v)
        tau = scipy.optimize.brentq(excess, 0.0, hi, xtol=1e-15, rtol=1e-14)
        c = self.evecs @ (tau * dhat / (1.0 + tau * self.evals))
        return v - self.Amat.T @ c


def svt(M, threshold):
    """Singular value soft-thresholding: shrink each sigma_i by threshold."""
    u, s, vh = np.linalg.svd(M, full_matrices=False)
    s = np.maximum(s - threshold, 0.0)
    return (u * s) @ vh


def _zero_result(n, note):
    return SolveResult(
        minimizer=np.zeros((n, n)),
        objective=0.0,
        residual=0.0,
        iterations=0,
        converged=True,
        status_note=note,
    )


def recover_nuclear(A, y, theta=0.0, beta_2s=1.0, opts=None):
    """Minimize the nuclear norm subject to A(Z) = y, or to a residual ball
    ||A(Z) - y|| <= beta_2s * theta when theta > 0.

    Alternating splitting: the proximal step soft-thresholds the singular
    values, the constraint step projects onto the feasible set; the penalty
    is rebalanced when primal and dual residuals drift apart.
    """
    opts = (opts or SolveOptions()).validate()
    y = np.asarray(y, dtype=np.float64)
    if theta < 0:
        raise ValidationError("theta must be >= 0")
    if beta_2s < 0:
        raise ValidationError("beta_2s must be >= 0")
    n = A.n
    ynorm = float(np.linalg.norm(y))
    if ynorm == 0.0:
        return _zero_result(n, "zero measurements; zero matrix is optimal")
    yn = y / ynorm
    eta = beta_2s * theta / ynorm
    geom = ConstraintGeometry(A.dense_matrix(opts.memory_guard_mb), yn)

    if opts.warm_start is not None:
        w = opts.warm_start.ravel(order="C") / ynorm
    else:
        w = geom.project_ball(np.zeros(n * n), eta)
    u = np.zeros(n * n)
    rho = opts.penalty
    trace = []
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        Z = svt((w - u).reshape(n, n), 1.0 / rho).ravel(order="C")
        w_prev = w
        w = geom.project_ball(Z + u, eta)
        u = u + Z - w
        primal = np.linalg.norm(Z - w)
        dual = rho * np.linalg.norm(w - w_prev)
        scale = max(1.0, float(np.linalg.norm(w)))
        if opts.trace:
            obj = norm_from_sigma(np.linalg.svd(w.reshape(n, n), compute_uv=False), 1.0)
            trace.append((it, obj * ynorm, float(np.linalg.norm(geom.Amat @ w - yn)) * ynorm))
        if primal <= opts.tol_change * scale and dual <= opts.tol_change * scale:
            converged = True
            break
        # residual balancing keeps the splitting well conditioned
        if primal > 10.0 * dual:
            rho *= 2.0
            u /= 2.0
        elif dual > 10.0 * primal:
            rho /= 2.0
            u *= 2.0

    W = w.reshape(n, n) * ynorm
    residual = float(np.linalg.norm(A.apply(W) - y))
    feasible = residual <= max(opts.tol_residual * max(1.0, ynorm), beta_2s * theta * (1 + 1e-9))
    note = "global minimizer (convex)" if converged and feasible else (
        f"did not converge within {opts.max_iters} iterations"
        if not converged
        else f"constraint violated: residual {residual:.3e}"
    )
    return SolveResult(
        minimizer=W,
        objective=schatten_norm(W, 1.0),
        residual=residual,
        iterations=it,
        converged=bool(converged and feasible),
        status_note=note,
        trace=trace,
    )


def _weighted_feasible_step(Aten, Amat, yn, Z, eps, p, eta):
    """One reweighted least-squares step.

    Minimizes the quadratic surrogate of sum_i (sigma_i^2 + eps^2)^(p/2)
    over the feasible set; the surrogate weight is built from the SVD of
    the current iterate.
    """
    m, n = Amat.shape[0], Z.shape[0]
    _, sig, Vh = np.linalg.svd(Z)
    winv = (sig**2 + eps**2) ** (1.0 - p / 2.0)
    Hinv = (Vh.T * winv) @ Vh
    Mrows = (Aten @ Hinv).reshape(m, n * n)
    G = Mrows @ Amat.T
    G = 0.5 * (G + G.T)
    if eta > 0.0:
        evals, evecs = np.linalg.eigh(G)
        yhat = evecs.T @ yn
        if float(np.linalg.norm(yn)) <= eta:
            return np.zeros((n, n))

        def excess(tau):
            return float(np.sum(yhat**2 / (1.0 + tau * evals) ** 2)) - eta**2

        hi = 1.0
        while excess(hi) > 0.0:
            hi *= 10.0
            if hi > 1e18:
                break
        tau = scipy.optimize.brentq(excess, 0.0, hi, xtol=1e-15, rtol=1e-14)
        wvec = evecs @ (tau * yhat / (1.0 + tau * evals))
    else:
        jitter = max(np.trace(G) / m, 1e-300)
        for k in range(8):
            try:
                cho = scipy.linalg.cho_factor(G + (10.0**k) * 1e-14 * jitter * np.eye(m))
                wvec = scipy.linalg.cho_solve(cho, yn)
                break
            except np.linalg.LinAlgError:
                continue
        else:
            wvec = np.linalg.lstsq(G, yn, rcond=None)[0]
    return (Mrows.T @ wvec).reshape(n, n)


def recover_schatten_p(A, y, p, theta=0.0, beta_2s=1.0, opts=None):
    """Schatten p-quasi-norm minimization for 0 < p < 1 via IRLS.

    Smoothing parameter follows opts.epsilon_schedule (one reweighted solve
    per stage, then iterate at the floor).  Warm-started from the nuclear
    solution unless opts.warm_start is given.  The best feasible iterate by
    true objective is returned; the result is a local minimizer.
    """
    if not (0.0 < p < 1.0):
        raise ValidationError(f"p must be in (0, 1), got {p}")
    opts = (opts or SolveOptions()).validate()
    y = np.asarray(y, dtype=np.float64)
    n = A.n
    ynorm = float(np.linalg.norm(y))
    if ynorm == 0.0:
        return _zero_result(n, "zero measurements; zero matrix is optimal")
    yn = y / ynorm
    eta = beta_2s * theta / ynorm

    if opts.warm_start is not None:
        Z = opts.warm_start / ynorm
        warm_iters = 0
    else:
        warm = recover_nuclear(A, y, theta=theta, beta_2s=beta_2s, opts=replace(opts, trace=False))
        Z = warm.minimizer / ynorm
        warm_iters = warm.iterations

    Amat = A.dense_matrix(opts.memory_guard_mb)
    Aten = Amat.reshape(A.m, n, n)
    feas_tol = opts.tol_residual + eta * (1 + 1e-9)

    def feasible(M):
        return float(np.linalg.norm(Amat @ M.ravel(order="C") - yn)) <= feas_tol

    best_Z = Z
    best_obj = schatten_norm(Z, p) if feasible(Z) else math.inf
    schedule = tuple(opts.epsilon_schedule)
    trace = []
    converged = False
    it = 0
    stage = 0
    while it < opts.max_iters:
        eps = schedule[min(stage, len(schedule) - 1)]
        at_floor = stage >= len(schedule) - 1
        # iterate the reweighted solve to stagnation before shrinking eps
        stage_tol = opts.tol_change if at_floor else max(opts.tol_change, 1e-3 * eps)
        for _ in range(50):
            it += 1
            Z_new = _weighted_feasible_step(Aten, Amat, yn, Z, eps, p, eta)
            change = float(np.linalg.norm(Z_new - Z)) / max(1.0, float(np.linalg.norm(Z)))
            obj = schatten_norm(Z_new, p)
            if obj < best_obj and feasible(Z_new):
                best_obj = obj
                best_Z = Z_new
            if opts.trace:
                trace.append(
                    (it, obj * ynorm, float(np.linalg.norm(Amat @ Z_new.ravel() - yn)) * ynorm)
                )
            Z = Z_new
            if change <= stage_tol or it >= opts.max_iters:
                break
        if at_floor and change <= opts.tol_change:
            converged = True
            break
        stage += 1

    W = best_Z * ynorm
    residual = float(np.linalg.norm(A.apply(W) - y))
    note = "local minimizer (IRLS)" if converged else (
        f"local, did not stagnate within {opts.max_iters} iterations"
    )
    return SolveResult(
        minimizer=W,
        objective=schatten_norm(W, p),
        residual=residual,
        iterations=it + warm_iters,
        converged=converged,
        status_note=note,
        trace=trace,
    )


def oracle_recover_small(A, y, p, grid_density=15, seed=0):
    """Brute-force minimizer of the Schatten p-(quasi)norm over {A(Z) = y}.

    Parametrizes the feasible affine set by an orthonormal kernel basis and
    scans a dense grid over the kernel coordinates (random multistart when
    the kernel dimension exceeds 3), then polishes the best candidates with
    a derivative-free local search.  Only intended for n <= 3 validation.
    """
    if A.n > 3:
        raise ValidationError("oracle_recover_small is restricted to n <= 3")
    if not (0 < p <= 1):
        raise ValidationError(f"p must be in (0, 1], got {p}")
    y = np.asarray(y, dtype=np.float64)
    n = A.n
    Amat = A.dense_matrix()
    zp, *_ = np.linalg.lstsq(Amat, y, rcond=None)
    if np.linalg.norm(Amat @ zp - y) > 1e-8 * max(1.0, float(np.linalg.norm(y))):
        raise ValidationError("measurement vector is infeasible for this operator")
    B = scipy.linalg.null_space(Amat)
    k = B.shape[1]
    if k == 0:
        return zp.reshape(n, n)

    def objective(c):
        M = (zp + B @ c).reshape(n, n)
        return norm_from_sigma(np.linalg.svd(M, compute_uv=False), p)

    radius = 2.0 * float(np.linalg.norm(zp)) + 1.0
    if k <= 3:
        axes = [np.linspace(-radius, radius, grid_density)] * k
        mesh = np.meshgrid(*axes, indexing="ij")
        cands = np.stack([ax.ravel() for ax in mesh], axis=1)
    else:
        rng = spawn_rng(seed, "oracle-multistart")
        cands = rng.uniform(-radius, radius, size=(4096, k))
    cands = np.vstack([cands, np.zeros((1, k))])
    mats = (zp[None, :] + cands @ B.T).reshape(-1, n, n)
    sig = np.linalg.svd(mats, compute_uv=False)
    if np.isinf(p):
        objs = sig[:, 0]
    else:
        objs = np.sum(sig**p, axis=1) ** (1.0 / p)
    order = np.argsort(objs)[: max(8, min(16, len(objs)))]

    best_c, best_val = None, math.inf
    for idx in order[:8]:
        res = scipy.optimize.minimize(
            objective,
            cands[idx],
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000, "maxfev": 8000},
        )
        if res.fun < best_val:
            best_val = res.fun
            best_c = res.x
    return (zp + B @ best_c).reshape(n, n)

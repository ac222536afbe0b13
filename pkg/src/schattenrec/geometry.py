"""Kernel geometry and width experiments.

Null-space sampling and adversarial refinement probe the recovery-limiting
geometry of a measurement operator; the width experiments estimate worst-case
reconstruction error over spectral balls and fit its scaling law in the
number of measurements.  Empirical suprema over balls are lower estimates of
the true widths (sampling cannot certify a supremum), so scaling fits rather
than absolute constants are the meaningful output.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ValidationError
from .measurements import DEFAULT_MEMORY_GUARD_MB, check_memory_guard, gaussian_operator
from .rng import haar_orthogonal, spawn_rng
from .schatten import best_rank_error, norm_from_sigma, schatten_norm, weak_norm_from_sigma
from .solvers import SolveOptions, recover_nuclear, recover_schatten_p

#: measurement budget per degree of freedom used to pick the working rank in
#: width experiments (rank s satisfies m/(2cN) < s <= m/(cN)); calibrated from
#: the phase-diagram transition so the smallest grid cells m ~ 2N still
#: exercise the recovery branch
DEFAULT_WIDTH_RIP_CONSTANT = 2.0

ADVERSARIAL_STEPS = 50


@dataclass(frozen=True)
class KernelBasis:
    """Orthonormal (trace inner product) basis of ker(A), stacked (dim, n, n)."""

    dim: int
    basis: np.ndarray

    def sample(self, rng):
        coeffs = rng.standard_normal(self.dim)
        return np.tensordot(coeffs, self.basis, axes=(0, 0))

    def combine(self, coeffs):
        return np.tensordot(coeffs, self.basis, axes=(0, 0))


def kernel_basis(A, guard_mb=DEFAULT_MEMORY_GUARD_MB):
    """Orthonormal kernel basis from an orthogonal factorization of A."""
    Amat = A.dense_matrix(guard_mb)
    check_memory_guard(A.n**4, guard_mb)
    ns = scipy.linalg.null_space(Amat)
    dim = ns.shape[1]
    return KernelBasis(dim=dim, basis=ns.T.reshape(dim, A.n, A.n).copy())


def _ratio_s2_s1(X):
    sig = np.linalg.svd(X, compute_uv=False)
    s1 = sig.sum()
    if s1 == 0.0:
        return 0.0
    return float(np.sqrt(np.sum(sig**2)) / s1)


def mwp_constant(A, trials, refine_iters=ADVERSARIAL_STEPS, seed=0):
    """Smallest empirical constant c with ||X||_S2 <= c sqrt(m/N) ||X||_S1 on ker(A).

    Monte Carlo over kernel directions plus projected gradient ascent of the
    norm ratio on the kernel sphere.  A lower estimate of the best constant;
    nondecreasing in trials under nested seeds (each draw is refined
    independently).  Returns 0 for a trivial kernel.
    """
    kb = kernel_basis(A)
    if kb.dim == 0:
        return 0.0
    scale = math.sqrt(A.n / A.m)
    best = 0.0
    for i in range(trials):
        rng = spawn_rng(seed, "mwp-trial", i)
        c = rng.standard_normal(kb.dim)
        c /= np.linalg.norm(c)
        best = max(best, scale * _ratio_s2_s1(kb.combine(c)))
        step = 0.2
        for _ in range(refine_iters):
            X = kb.combine(c)
            u, sig, vh = np.linalg.svd(X)
            s1, s2 = sig.sum(), math.sqrt(float(np.sum(sig**2)))
            if s1 == 0.0:
                break
            # gradient of log(||X||_S2 / ||X||_S1)
            gX = X / s2**2 - (u @ vh) / s1
            g = np.tensordot(kb.basis, gX, axes=([1, 2], [0, 1]))
            c_new = c + step * g
            nrm = np.linalg.norm(c_new)
            if nrm == 0.0:
                break
            c_new /= nrm
            val = scale * _ratio_s2_s1(kb.combine(c_new))
            if val > scale * s2 / s1:
                c = c_new
                best = max(best, val)
            else:
                step *= 0.5
    return best


def nsp_margin(V, s, p):
    """Tail-minus-head margin of the null-space inequality, on unit ||V||_S2.

    Positive means ||V - V_[2s]||_p^p exceeds ||V_[2s]||_p^p, the sufficient
    condition for exact rank-s recovery along this direction.
    """
    sig = np.linalg.svd(V, compute_uv=False)
    nrm = math.sqrt(float(np.sum(sig**2)))
    if nrm == 0.0:
        raise ValidationError("nsp margin undefined for the zero matrix")
    sig = sig / nrm
    head = float(np.sum(sig[: 2 * s] ** p))
    tail = float(np.sum(sig[2 * s :] ** p))
    return tail - head


@dataclass(frozen=True)
class NspReport:
    pass_fraction: float
    worst_margin: float
    trials: int
    s: int
    p: float


def nsp_check(A, s, p, trials, seed=0):
    """Sample the null-space inequality at order 2s over ker(A).

    pass_fraction comes from the raw samples; worst_margin additionally
    refines the worst few samples by projected gradient descent of the
    margin on the kernel sphere.
    """
    if not (0 < p <= 1):
        raise ValidationError(f"p must be in (0, 1], got {p}")
    kb = kernel_basis(A)
    if kb.dim == 0:
        raise ValidationError("operator kernel is trivial; nothing to check")
    if not (1 <= 2 * s <= A.n):
        raise ValidationError(f"need 1 <= 2s <= {A.n}, got s={s}")
    margins = []
    coeffs = []
    for i in range(trials):
        rng = spawn_rng(seed, "nsp-trial", i)
        c = rng.standard_normal(kb.dim)
        c /= np.linalg.norm(c)
        margins.append(nsp_margin(kb.combine(c), s, p))
        coeffs.append(c)
    margins = np.asarray(margins)
    pass_fraction = float(np.mean(margins > 0.0))
    worst = float(margins.min())
    for idx in np.argsort(margins)[:3]:
        worst = min(worst, _descend_margin(kb, coeffs[idx], s, p))
    return NspReport(
        pass_fraction=pass_fraction, worst_margin=worst, trials=trials, s=s, p=float(p)
    )


def _descend_margin(kb, c0, s, p, steps=ADVERSARIAL_STEPS):
    c = c0.copy()
    best = nsp_margin(kb.combine(c), s, p)
    step = 0.2
    for _ in range(steps):
        V = kb.combine(c)
        u, sig, vh = np.linalg.svd(V)
        nrm = math.sqrt(float(np.sum(sig**2)))
        sigN = sig / nrm
        floor = max(sigN[0] * 1e-8, 1e-12)
        weights = p * np.maximum(sigN, floor) ** (p - 1.0)
        signs = np.ones_like(sigN)
        signs[: 2 * s] = -1.0
        gV = (u * (weights * signs)) @ vh
        g = np.tensordot(kb.basis, gV, axes=([1, 2], [0, 1]))
        c_new = c - step * g
        nn = np.linalg.norm(c_new)
        if nn == 0.0:
            break
        c_new /= nn
        val = nsp_margin(kb.combine(c_new), s, p)
        if val < best:
            c, best = c_new, val
        else:
            step *= 0.5
    return best


# ---------------------------------------------------------------------------
# widths


@dataclass(frozen=True)
class WidthEstimate:
    """Empirical sup of reconstruction error over a spectral ball.

    theory_value is min(1, N/m)^(1/p - 1/q); the estimate is a lower bound
    of the true sup, so the ratio column tracks constants only loosely.
    """

    n: int
    m: int
    p: float
    q: float
    r: float
    s: int
    trials: int
    estimate: float
    theory_value: float
    ratio: float
    seed: int
    branch: str
    samples: tuple = ()


def _ball_profile(n, p, kind, weak):
    k = np.arange(1, n + 1, dtype=np.float64)
    if kind == "decay":
        sig = k ** (-1.0 / p)
        # unit weak norm as-is; otherwise normalize onto the S_p sphere
        return sig if weak else sig / np.sum(sig**p) ** (1.0 / p)
    j = min(int(kind.split("-")[1]), n)
    sig = np.zeros(n)
    sig[:j] = j ** (-1.0 / p)
    return sig


def _profile_kinds(n, weak):
    # decay spectra are the extremal weak-ball directions; the strong ball
    # additionally gets spike and flat profiles
    if weak:
        return ["decay"]
    kinds = ["decay", "flat-1"]
    j = 2
    while j <= n:
        kinds.append(f"flat-{j}")
        j *= 2
    return kinds


def _ball_norm(sig, p, weak):
    if weak:
        return weak_norm_from_sigma(sig, p)
    return norm_from_sigma(sig, p)


def _ascend_kernel_ratio(kb, c0, p, q, steps=150):
    """Maximize ||V||_q / ||V||_p over the kernel sphere (strong ball only)."""
    c = c0 / np.linalg.norm(c0)

    def ratio(cv):
        sig = np.linalg.svd(kb.combine(cv), compute_uv=False)
        denom = norm_from_sigma(sig, p)
        return norm_from_sigma(sig, q) / denom if denom > 0 else 0.0

    best_c, best = c, ratio(c)
    step = 0.3
    for _ in range(steps):
        u, sig, vh = np.linalg.svd(kb.combine(c))
        nq = norm_from_sigma(sig, q)
        npp = norm_from_sigma(sig, p)
        if nq == 0.0 or npp == 0.0:
            break
        floor = max(sig[0] * 1e-9, 1e-300)
        gq = (u * (sig ** (q - 1.0))) @ vh / nq**q
        gp = (u * (np.maximum(sig, floor) ** (p - 1.0))) @ vh / npp**p
        g = np.tensordot(kb.basis, gq - gp, axes=([1, 2], [0, 1]))
        c_new = c + step * g
        nn = np.linalg.norm(c_new)
        if nn == 0.0:
            break
        c_new /= nn
        val = ratio(c_new)
        if val > ratio(c):
            c = c_new
            if val > best:
                best_c, best = c_new, val
            step *= 1.2
        else:
            step *= 0.5
            if step < 1e-12:
                break
    return best_c


def width_rank_selection(n, m, rip_constant):
    """Working rank from the measurement budget: m/(2cN) < s <= m/(cN), or 0
    when m is below the recovery regime (the zero-map branch)."""
    if m < rip_constant * n:
        return 0
    return max(1, int(math.floor(m / (rip_constant * n))))


def width_upper_bound(
    N,
    m,
    p,
    q,
    trials,
    seed=0,
    rip_constant=DEFAULT_WIDTH_RIP_CONSTANT,
    opts=None,
    guard_mb=DEFAULT_MEMORY_GUARD_MB,
):
    """Empirical width: worst recovery error over sampled ball elements.

    Samples unit-ball extremal directions under random rotations and records
    the largest S_q error of the r-norm reconstruction, r = min(1, q).  For
    the weak ball (p < 1) the samples are k^(-1/p)-decay spectra; the strong
    ball additionally gets spike and flat spectra plus kernel sections of
    the drawn operator (random and adversarially ascended), the classical
    extremal directions for nuclear-ball widths.  Kernel sections measure to
    zero, so their reconstruction is the zero matrix and their error their
    own S_q norm.  Below the recovery regime (m < rip_constant * N) the
    measurement map is the zero map and the estimate is the largest sampled
    S_q norm.
    """
    if not (0 < p <= 1) or not (p < q <= 2):
        raise ValidationError(f"need 0 < p <= 1 and p < q <= 2, got p={p}, q={q}")
    if not (1 <= m <= N * N):
        raise ValidationError(f"m={m} out of range [1, {N * N}]")
    weak = p < 1.0
    r = min(1.0, q)
    s = width_rank_selection(N, m, rip_constant)
    kinds = _profile_kinds(N, weak)
    opts = opts or SolveOptions(tol_change=1e-8, max_iters=3000)

    samples = []
    estimate = 0.0
    if s == 0:
        for i in range(trials):
            rng = spawn_rng(seed, "width-sample", N, m, i)
            sig = _ball_profile(N, p, kinds[i % len(kinds)], weak)
            err_q = norm_from_sigma(sig, q)
            estimate = max(estimate, err_q)
            samples.append(
                {"profile": kinds[i % len(kinds)], "err_q": err_q, "err_r": norm_from_sigma(sig, r)}
            )
        branch = "zero-map"
    else:
        A = gaussian_operator(
            N, m, seed=spawn_rng(seed, "width-op", N, m).integers(2**63), guard_mb=guard_mb
        )
        for i in range(trials):
            rng = spawn_rng(seed, "width-sample", N, m, i)
            sig = _ball_profile(N, p, kinds[i % len(kinds)], weak)
            X = (haar_orthogonal(rng, N) * sig) @ haar_orthogonal(rng, N).T
            y = A.apply(X)
            if r == 1.0:
                res = recover_nuclear(A, y, opts=opts)
            else:
                res = recover_schatten_p(A, y, p=r, opts=opts)
            D = X - res.minimizer
            err_q = schatten_norm(D, q)
            estimate = max(estimate, err_q)
            samples.append(
                {
                    "profile": kinds[i % len(kinds)],
                    "err_q": err_q,
                    "err_r": schatten_norm(D, r),
                    "converged": res.converged,
                }
            )
        if not weak and m < N * N:
            kb = kernel_basis(A, guard_mb)
            coeffs = []
            for i in range(max(16, trials // 2)):
                rng = spawn_rng(seed, "width-kernel", N, m, i)
                coeffs.append(rng.standard_normal(kb.dim))
            for i in range(4):
                rng = spawn_rng(seed, "width-kernel-adv", N, m, i)
                coeffs.append(_ascend_kernel_ratio(kb, rng.standard_normal(kb.dim), p, q))
            for c in coeffs:
                sig = np.linalg.svd(kb.combine(c), compute_uv=False)
                bn = _ball_norm(sig, p, weak)
                if bn == 0.0:
                    continue
                err_q = norm_from_sigma(sig, q) / bn
                err_r = norm_from_sigma(sig, r) / bn
                estimate = max(estimate, err_q)
                samples.append({"profile": "kernel", "err_q": err_q, "err_r": err_r})
        branch = "recovery"
    theory = min(1.0, N / m) ** (1.0 / p - 1.0 / q)
    return WidthEstimate(
        n=N,
        m=m,
        p=float(p),
        q=float(q),
        r=r,
        s=s,
        trials=trials,
        estimate=float(estimate),
        theory_value=float(theory),
        ratio=float(estimate / theory),
        seed=int(seed),
        branch=branch,
        samples=tuple(samples),
    )


def fit_width_exponents(estimates):
    """Log-log slope of estimate vs m per (N, p, q) group.

    The scaling law is asymptotic on N < m < N^2 and only its recovery
    branch has any m-dependence (the zero-map branch is bounded by an
    m-independent constant), so zero-map cells and boundary cells (m <= N,
    where the theory saturates, and m = N^2, where recovery is exact and the
    width degenerates to zero) are excluded from the fit.  Groups with fewer
    than two usable m values produce no fit.
    """
    groups = {}
    for w in estimates:
        groups.setdefault((w.n, w.p, w.q), []).append(w)
    fits = {}
    for key, rows in groups.items():
        usable = [
            w
            for w in rows
            if w.branch == "recovery" and w.n < w.m < w.n**2 and w.estimate > 0.0
        ]
        ms = sorted({w.m for w in usable})
        if len(ms) < 2:
            continue
        x = np.log([w.m for w in usable])
        y = np.log([w.estimate for w in usable])
        fits[key] = float(np.polyfit(x, y, 1)[0])
    return fits


def width_scaling_experiment(
    grid,
    trials,
    seed=0,
    rip_constant=DEFAULT_WIDTH_RIP_CONSTANT,
    opts=None,
    guard_mb=DEFAULT_MEMORY_GUARD_MB,
):
    """Run width_upper_bound over a (N, m, p, q) grid and fit the exponents."""
    if not grid:
        raise ValidationError("grid must be nonempty")
    estimates = [
        width_upper_bound(N, m, p, q, trials, seed, rip_constant, opts, guard_mb)
        for (N, m, p, q) in grid
    ]
    return estimates, fit_width_exponents(estimates)


def compressive_width_bracket(d_m, p):
    """Bracket of optimal-scheme reconstruction errors: [d_m, 2^(1/p) d_m]."""
    if d_m < 0:
        raise ValidationError("width must be >= 0")
    if not (0 < p <= 1):
        raise ValidationError(f"p must be in (0, 1], got {p}")
    return (float(d_m), float(2.0 ** (1.0 / p) * d_m))


# ---------------------------------------------------------------------------
# compressed-sensing property constants


@dataclass(frozen=True)
class CsPropertyReport:
    """Empirical constants of the strong/weak recovery properties plus the
    kernel norm-ratio constant, for side-by-side comparison."""

    c_strong: float
    c_weak: float
    c_kernel: float
    s: int
    s_scaled: float
    rows: tuple
    flagged: int


def mscsp_mwcsp_check(A, s, trials, seed=0, opts=None, exactness_tol=1e-6):
    """Empirical smallest constants of the strong and weak recovery bounds.

    Samples planted low-rank matrices with graded tails, reconstructs by
    nuclear norm minimization and measures err_S2 * sqrt(s) relative to the
    rank-s approximation error (strong) and to the full S_1 norm (weak).
    Exactly-low-rank samples contribute zero to the strong constant when the
    solver reproduces them to tolerance; solver failures are flagged rather
    than dropped.
    """
    if not (1 <= s <= A.n):
        raise ValidationError(f"s={s} out of range [1, {A.n}]")
    n = A.n
    opts = opts or SolveOptions(tol_change=1e-8, max_iters=3000)
    tail_scales = (0.0, 0.05, 0.2, 0.5)
    rows = []
    flagged = 0
    c_strong = 0.0
    c_weak = 0.0
    for i in range(trials):
        rng = spawn_rng(seed, "cs-prop-trial", i)
        rank = 1 + i % s
        G = rng.standard_normal((n, rank))
        H = rng.standard_normal((n, rank))
        low = G @ H.T
        low /= schatten_norm(low, 2.0)
        tau = tail_scales[i % len(tail_scales)]
        X = low + tau * rng.standard_normal((n, n)) / n
        y = A.apply(X)
        res = recover_nuclear(A, y, opts=opts)
        err = schatten_norm(X - res.minimizer, 2.0)
        rho = best_rank_error(X, s, 1.0)
        s1 = schatten_norm(X, 1.0)
        if not res.converged:
            flagged += 1
            rows.append({"tau": tau, "converged": False, "err_s2": err})
            continue
        if rho > 1e-9 * max(s1, 1.0):
            strong = err * math.sqrt(s) / rho
        else:
            strong = 0.0 if err <= exactness_tol * max(s1, 1.0) else math.inf
        weak = err * math.sqrt(s) / s1 if s1 > 0 else 0.0
        c_strong = max(c_strong, strong)
        c_weak = max(c_weak, weak)
        rows.append(
            {
                "tau": tau,
                "converged": True,
                "err_s2": err,
                "rho_s_1": rho,
                "norm_s1": s1,
                "strong": strong,
                "weak": weak,
            }
        )
    c_kernel = mwp_constant(A, trials=max(8, trials // 4), seed=seed)
    return CsPropertyReport(
        c_strong=float(c_strong),
        c_weak=float(c_weak),
        c_kernel=float(c_kernel),
        s=s,
        s_scaled=s * n / A.m,
        rows=tuple(rows),
        flagged=flagged,
    )

"""Seeded experiment orchestration with reproducible records.

Every experiment expands a master seed into per-(cell, trial) streams, so
records are bit-stable under reruns and independent of worker scheduling.
Rows are plain dicts ready for CSV; RunRecord carries the config snapshot,
a content hash of it, and library metadata.
"""

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .errors import ValidationError
from .geometry import (
    DEFAULT_WIDTH_RIP_CONSTANT,
    fit_width_exponents,
    width_upper_bound,
)
from .matio import atomic_write_text
from .measurements import DEFAULT_MEMORY_GUARD_MB, gaussian_operator
from .rng import spawn_rng
from .schatten import schatten_norm
from .solvers import SolveOptions, recover_nuclear, recover_schatten_p

DEFAULT_SUCCESS_THRESHOLD = 1e-3


def config_hash(cfg_dict):
    blob = json.dumps(cfg_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass
class RunRecord:
    config: dict
    content_hash: str
    rows: list
    summary: dict
    wall_clock: float
    version: str = __version__


def _finish_record(cfg_dict, rows, summary, t0):
    return RunRecord(
        config=cfg_dict,
        content_hash=config_hash(cfg_dict),
        rows=rows,
        summary=summary,
        wall_clock=time.time() - t0,
    )


def _run_tasks(tasks, threads):
    if threads <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda t: t(), tasks))


# ---------------------------------------------------------------------------
# phase diagram


@dataclass(frozen=True)
class PhaseDiagramConfig:
    n: int
    s_values: tuple
    m_values: tuple
    trials: int = 20
    seed: int = 0
    p: float = 1.0
    success_threshold: float = DEFAULT_SUCCESS_THRESHOLD
    threads: int = 1
    memory_guard_mb: float = DEFAULT_MEMORY_GUARD_MB
    max_iters: int = 3000

    def validate(self):
        if self.n < 2:
            raise ValidationError("n: must be >= 2")
        if not self.s_values or any(not (1 <= s <= self.n) for s in self.s_values):
            raise ValidationError(f"s_values: every rank must be in [1, {self.n}]")
        if not self.m_values or any(not (1 <= m <= self.n**2) for m in self.m_values):
            raise ValidationError(f"m_values: every m must be in [1, {self.n ** 2}]")
        if self.trials < 1:
            raise ValidationError("trials: must be >= 1")
        if not (0 < self.p <= 1):
            raise ValidationError("p: must be in (0, 1]")
        if self.success_threshold <= 0:
            raise ValidationError("success_threshold: must be positive")
        if self.threads < 1:
            raise ValidationError("threads: must be >= 1")
        return self


def _phase_cell_trial(cfg, s, m, trial):
    rng = spawn_rng(cfg.seed, "phase-trial", s, m, trial)
    op_seed = int(rng.integers(2**63))
    A = gaussian_operator(cfg.n, m, seed=op_seed, guard_mb=cfg.memory_guard_mb)
    G = rng.standard_normal((cfg.n, s))
    H = rng.standard_normal((cfg.n, s))
    X0 = G @ H.T
    X0 /= schatten_norm(X0, 2.0)
    y = A.apply(X0)
    opts = SolveOptions(max_iters=cfg.max_iters, memory_guard_mb=cfg.memory_guard_mb)
    if cfg.p == 1.0:
        res = recover_nuclear(A, y, opts=opts)
    else:
        res = recover_schatten_p(A, y, cfg.p, opts=opts)
    rel_err = schatten_norm(X0 - res.minimizer, 2.0)
    return {
        "s": s,
        "m": m,
        "trial": trial,
        "seed": op_seed,
        "rel_err": float(rel_err),
        "converged": bool(res.converged),
        "success": bool(res.converged and rel_err <= cfg.success_threshold),
    }


def run_phase_diagram(cfg):
    """Per-trial recovery outcomes over the (rank, measurements) grid.

    Raw data: no monotone smoothing; failed solves are flagged rows, not
    dropped.  The summary carries per-cell success probabilities and the
    interpolated 50% transition midpoint per rank.
    """
    cfg.validate()
    t0 = time.time()
    tasks = [
        (lambda s=s, m=m, t=t: _phase_cell_trial(cfg, s, m, t))
        for s in cfg.s_values
        for m in cfg.m_values
        for t in range(cfg.trials)
    ]
    rows = _run_tasks(tasks, cfg.threads)
    rows.sort(key=lambda r: (r["s"], r["m"], r["trial"]))
    probs = cell_success_probabilities(rows)
    midpoints = {s: transition_midpoint(probs, s) for s in cfg.s_values}
    summary = {
        "cell_success": {f"{s},{m}": v for (s, m), v in sorted(probs.items())},
        "m50": {str(s): midpoints[s] for s in cfg.s_values},
    }
    return _finish_record(asdict(cfg), rows, summary, t0)


def cell_success_probabilities(rows):
    counts = {}
    for r in rows:
        key = (r["s"], r["m"])
        tot, suc = counts.get(key, (0, 0))
        counts[key] = (tot + 1, suc + (1 if r["success"] else 0))
    return {k: s / t for k, (t, s) in counts.items()}


def transition_midpoint(probs, s):
    """First upward crossing of success probability 0.5, linearly interpolated."""
    pts = sorted((m, p) for (ss, m), p in probs.items() if ss == s)
    if not pts:
        return None
    prev_m, prev_p = None, None
    for m, p in pts:
        if p >= 0.5:
            if prev_m is None or prev_p >= 0.5:
                return float(m)
            frac = (0.5 - prev_p) / (p - prev_p)
            return float(prev_m + frac * (m - prev_m))
        prev_m, prev_p = m, p
    return None


# ---------------------------------------------------------------------------
# width sweep


@dataclass(frozen=True)
class WidthSweepConfig:
    n: int
    m_values: tuple
    p: float = 1.0
    q: float = 2.0
    trials: int = 20
    seed: int = 0
    rip_constant: float = DEFAULT_WIDTH_RIP_CONSTANT
    threads: int = 1
    memory_guard_mb: float = DEFAULT_MEMORY_GUARD_MB

    def validate(self):
        if self.n < 2:
            raise ValidationError("n: must be >= 2")
        if not self.m_values or any(not (1 <= m <= self.n**2) for m in self.m_values):
            raise ValidationError(f"m_values: every m must be in [1, {self.n ** 2}]")
        if not (0 < self.p <= 1):
            raise ValidationError("p: must be in (0, 1]")
        if not (self.p < self.q <= 2):
            raise ValidationError("q: must satisfy p < q <= 2")
        if self.trials < 1:
            raise ValidationError("trials: must be >= 1")
        return self


def run_width_sweep(cfg):
    cfg.validate()
    t0 = time.time()
    tasks = [
        (
            lambda m=m: width_upper_bound(
                cfg.n,
                m,
                cfg.p,
                cfg.q,
                cfg.trials,
                seed=cfg.seed,
                rip_constant=cfg.rip_constant,
                guard_mb=cfg.memory_guard_mb,
            )
        )
        for m in cfg.m_values
    ]
    estimates = _run_tasks(tasks, cfg.threads)
    estimates.sort(key=lambda w: w.m)
    fits = fit_width_exponents(estimates)
    rows = [
        {
            "N": w.n,
            "m": w.m,
            "p": w.p,
            "q": w.q,
            "r": w.r,
            "s": w.s,
            "trials": w.trials,
            "estimate": w.estimate,
            "theory": w.theory_value,
            "ratio": w.ratio,
            "seed": w.seed,
        }
        for w in estimates
    ]
    summary = {
        "fitted_exponent": {f"{n},{p},{q}": v for (n, p, q), v in fits.items()},
        "theory_exponent": -(1.0 / cfg.p - 1.0 / cfg.q),
    }
    return _finish_record(asdict(cfg), rows, summary, t0)


# ---------------------------------------------------------------------------
# output

PHASE_COLUMNS = ("s", "m", "trial", "seed", "rel_err", "converged", "success")
WIDTH_COLUMNS = ("N", "m", "p", "q", "r", "s", "trials", "estimate", "theory", "ratio", "seed")


def rows_to_csv(rows, columns):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: _csv_cell(r.get(k)) for k in columns})
    return buf.getvalue()


def _csv_cell(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def write_record(record, out_path, fmt, columns):
    """Write rows as CSV (with a JSON metadata sidecar) or the whole record as JSON."""
    if fmt == "csv":
        atomic_write_text(out_path, rows_to_csv(record.rows, columns))
        meta = {
            "config": record.config,
            "content_hash": record.content_hash,
            "summary": record.summary,
            "wall_clock": record.wall_clock,
            "version": record.version,
        }
        atomic_write_text(str(out_path) + ".meta.json", json.dumps(meta, indent=2, sort_keys=True))
    elif fmt == "json":
        atomic_write_text(out_path, json.dumps(asdict(record), indent=2, sort_keys=True))
    else:
        raise ValidationError(f"format: unknown output format {fmt!r}")


# ---------------------------------------------------------------------------
# selftest


def selftest():
    """Fast closed-form checks of every module; returns (name, passed) pairs."""
    from . import geometry, measurements, schatten, solvers, stability

    checks = []

    def check(name, fn):
        try:
            ok = bool(fn())
        except Exception:
            ok = False
        checks.append((name, ok))

    sq3 = math.sqrt(3)
    check("schatten-norm-identity", lambda: abs(schatten.schatten_norm(np.eye(3), 2.0) - sq3) < 1e-12)
    check("schatten-norm-diag", lambda: abs(schatten.schatten_norm(np.diag([3.0, 4.0]), 1.0) - 7) < 1e-12)
    check(
        "weak-norm-diag",
        lambda: abs(schatten.weak_schatten_norm(np.diag([4.0, 1.0]), 1.0) - 4) < 1e-12,
    )
    check(
        "weak-norm-flat",
        lambda: abs(schatten.weak_schatten_norm(np.eye(3), 0.5) - 9) < 1e-12,
    )
    check(
        "truncate-diag",
        lambda: np.allclose(
            schatten.spectral_truncate(np.diag([3.0, 2.0, 1.0]), 1), np.diag([3.0, 0.0, 0.0])
        ),
    )
    check(
        "best-rank-error",
        lambda: abs(schatten.best_rank_error(np.diag([3.0, 2.0, 1.0]), 1, 1.0) - 3) < 1e-12,
    )

    def _split():
        frame = schatten.svd(np.diag([5.0, 4.0, 3.0]))
        bs = schatten.block_split(np.eye(3), frame, 2)
        return np.allclose(bs.head, np.diag([1.0, 1.0, 0.0])) and np.allclose(
            bs.tail, np.diag([0.0, 0.0, 1.0])
        )

    check("block-split-diagonal", _split)

    def _gauss_det():
        a = measurements.gaussian_operator(4, 8, seed=7)
        b = measurements.gaussian_operator(4, 8, seed=7)
        return a.payload.shape == (8, 16) and np.array_equal(a.payload, b.payload)

    check("gaussian-deterministic", _gauss_det)

    def _mask():
        A = measurements.entry_mask_operator(3, [(0, 0)])
        return np.allclose(A.apply(np.diag([1.0, 2.0, 3.0])), [1.0])

    check("mask-single-entry", _mask)

    def _adjoint():
        rng = spawn_rng(0, "selftest-adjoint")
        A = measurements.gaussian_operator(3, 5, seed=3)
        X = rng.standard_normal((3, 3))
        y = rng.standard_normal(5)
        return abs(A.apply(X) @ y - np.sum(X * A.adjoint(y))) < 1e-10

    check("adjoint-identity", _adjoint)

    check(
        "gamma-delta-roundtrip",
        lambda: abs(measurements.gamma_from_delta(1.0 / 3.0) - 2.0) < 1e-12,
    )

    def _rip_isometry():
        A = measurements.full_vectorization_operator(3)
        rc = measurements.estimate_restricted_constants(A, 2, trials=4, refine_iters=2, seed=0)
        return abs(rc.alpha_hat - 1) < 1e-8 and abs(rc.beta_hat - 1) < 1e-8

    check("full-vectorization-isometry", _rip_isometry)

    def _zero_solves():
        A = measurements.gaussian_operator(3, 4, seed=1)
        r1 = solvers.recover_nuclear(A, np.zeros(4))
        r2 = solvers.recover_schatten_p(A, np.zeros(4), 0.5)
        return np.allclose(r1.minimizer, 0) and np.allclose(r2.minimizer, 0)

    check("zero-measurements-zero-solution", _zero_solves)

    check(
        "threshold-p1",
        lambda: abs(stability.exact_recovery_threshold(1.0, 1, 1) - (4 * math.sqrt(2) - 3)) < 1e-12,
    )
    check(
        "constants-perfect-isometry",
        lambda: stability.stability_constants(1.0, 1.0, 1, 1).mu == 0.0,
    )
    check("bracket", lambda: geometry.compressive_width_bracket(0.5, 1.0) == (0.5, 1.0))

    def _trivial_kernel():
        return geometry.kernel_basis(measurements.full_vectorization_operator(3)).dim == 0

    check("full-vectorization-trivial-kernel", _trivial_kernel)

    return checks

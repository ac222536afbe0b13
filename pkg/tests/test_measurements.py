import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schattenrec.errors import MemoryGuardError, ValidationError
from schattenrec.measurements import (
    delta_from_gamma,
    entry_mask_operator,
    estimate_restricted_constants,
    full_vectorization_operator,
    gamma_from_delta,
    gaussian_operator,
    load_operator,
    save_operator,
)
from schattenrec.rng import spawn_rng

from oracles import naive_apply, rank1_extremes_grid


class TestGaussianOperator:
    def test_deterministic(self):
        a = gaussian_operator(4, 8, seed=7)
        b = gaussian_operator(4, 8, seed=7)
        assert np.array_equal(a.payload, b.payload)

    def test_payload_shape(self):
        assert gaussian_operator(2, 5, seed=0).payload.shape == (5, 4)

    def test_entry_statistics(self):
        n, m = 10, 400
        A = gaussian_operator(n, m, seed=1)
        entries = A.payload.ravel()
        assert abs(entries.mean()) <= 3.0 / math.sqrt(400 * m * entries.size / (m * n * n))
        assert abs(entries.var() * m - 1.0) <= 0.1

    def test_overdetermined_allowed(self):
        assert gaussian_operator(3, 10, seed=0).payload.shape == (10, 9)

    def test_m_out_of_range(self):
        with pytest.raises(ValidationError):
            gaussian_operator(3, 0, seed=0)

    def test_memory_guard(self):
        with pytest.raises(MemoryGuardError):
            gaussian_operator(64, 20000, seed=0, guard_mb=1.0)


class TestEntryMask:
    def test_full_vectorization(self):
        A = full_vectorization_operator(2)
        X = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.allclose(A.apply(X), X.ravel())

    def test_single_entry(self):
        A = entry_mask_operator(3, [(0, 0)])
        assert np.allclose(A.apply(np.diag([1.0, 2.0, 3.0])), [1.0])

    def test_adjoint_places_entries(self):
        A = entry_mask_operator(3, [(1, 2)])
        out = A.adjoint(np.array([1.0]))
        expect = np.zeros((3, 3))
        expect[1, 2] = 1.0
        assert np.array_equal(out, expect)

    def test_duplicate_indices_rejected(self):
        with pytest.raises(ValidationError):
            entry_mask_operator(2, [(0, 0), (0, 0)])

    def test_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            entry_mask_operator(2, [(0, 2)])


class TestApplyAdjoint:
    def test_zero_maps_to_zero(self):
        A = gaussian_operator(4, 6, seed=2)
        assert np.allclose(A.apply(np.zeros((4, 4))), 0.0)
        assert np.allclose(A.adjoint(np.zeros(6)), 0.0)

    def test_linearity(self):
        rng = spawn_rng(0, "linearity")
        A = gaussian_operator(5, 9, seed=3)
        for _ in range(10):
            X, Y = rng.standard_normal((2, 5, 5))
            lhs = A.apply(X + Y)
            rhs = A.apply(X) + A.apply(Y)
            assert np.allclose(lhs, rhs, atol=1e-10)

    def test_matches_naive_loop(self):
        rng = spawn_rng(1, "naive")
        A = gaussian_operator(3, 5, seed=4)
        X = rng.standard_normal((3, 3))
        assert np.allclose(A.apply(X), naive_apply(A, X), atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_adjoint_identity(self, draw):
        rng = spawn_rng(draw, "adjoint-prop")
        kind = draw % 2
        if kind == 0:
            A = gaussian_operator(4, 7, seed=draw)
        else:
            pairs = [(int(i), int(j)) for i, j in rng.integers(0, 4, size=(16, 2))]
            pairs = list(dict.fromkeys(pairs))[:5]
            A = entry_mask_operator(4, pairs, scale=1.5)
        X = rng.standard_normal((4, 4))
        y = rng.standard_normal(A.m)
        lhs = float(A.apply(X) @ y)
        rhs = float(np.sum(X * A.adjoint(y)))
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)

    def test_dim_mismatch(self):
        A = gaussian_operator(4, 7, seed=0)
        with pytest.raises(ValidationError):
            A.apply(np.zeros((3, 3)))
        with pytest.raises(ValidationError):
            A.adjoint(np.zeros(6))


class TestRestrictedConstants:
    def test_full_vectorization_is_isometry(self):
        A = full_vectorization_operator(3)
        for s in (1, 2, 3):
            rc = estimate_restricted_constants(A, s, trials=5, refine_iters=3, seed=0)
            assert rc.alpha_hat == pytest.approx(1.0, abs=1e-8)
            assert rc.beta_hat == pytest.approx(1.0, abs=1e-8)
            assert rc.gamma_hat == pytest.approx(1.0, abs=1e-8)
            assert rc.delta_hat == pytest.approx(0.0, abs=1e-8)

    def test_zero_map_degenerate(self):
        A = full_vectorization_operator(3, scale=0.0)
        rc = estimate_restricted_constants(A, 1, trials=5, refine_iters=2, seed=0)
        assert rc.degenerate
        assert rc.alpha_hat == 0.0 and rc.beta_hat == 0.0
        assert math.isnan(rc.gamma_hat)

    def test_grid_oracle_rank1(self):
        # dense grid over the rank-1 sphere: u on a 1-degree grid, v exact
        A = gaussian_operator(3, 9, seed=11)
        alpha_true, beta_true = rank1_extremes_grid(A, step_deg=1.0)
        rc = estimate_restricted_constants(A, 1, trials=100, refine_iters=10, seed=5)
        # grid values carry O(step^2) resolution error, so compare two-sided
        assert rc.alpha_hat == pytest.approx(alpha_true, abs=1e-3)
        assert rc.beta_hat == pytest.approx(beta_true, abs=1e-3)

    def test_monotone_in_trials(self):
        A = gaussian_operator(4, 10, seed=9)
        prev_alpha, prev_beta = math.inf, 0.0
        for trials in (5, 10, 20, 40):
            rc = estimate_restricted_constants(A, 2, trials=trials, refine_iters=2, seed=3)
            assert rc.alpha_hat <= prev_alpha + 1e-15
            assert rc.beta_hat >= prev_beta - 1e-15
            prev_alpha, prev_beta = rc.alpha_hat, rc.beta_hat

    def test_gamma_consistency(self):
        A = gaussian_operator(4, 12, seed=10)
        rc = estimate_restricted_constants(A, 1, trials=30, refine_iters=3, seed=1)
        assert rc.alpha_hat <= rc.beta_hat
        assert rc.gamma_hat == pytest.approx(rc.beta_hat**2 / rc.alpha_hat**2, rel=1e-12)
        assert rc.delta_hat == pytest.approx(delta_from_gamma(rc.gamma_hat), rel=1e-12)

    def test_gaussian_ensemble_sanity(self):
        # m = 6*s*n is comfortably above the transition; the Monte-Carlo
        # (refinement-free) delta estimate at order 2s is loose and one-sided
        # and should be small for most draws.  Local refinement instead digs
        # out the manifold extremes, where desk-scale delta is close to 1,
        # so it is deliberately off here.
        n, s = 8, 1
        deltas = []
        for seed in range(20):
            A = gaussian_operator(n, 6 * s * n, seed=1000 + seed)
            rc = estimate_restricted_constants(A, 2 * s, trials=20, refine_iters=0, seed=seed)
            deltas.append(rc.delta_hat)
        assert np.median(deltas) < 0.8

    def test_s_out_of_range(self):
        A = gaussian_operator(3, 5, seed=0)
        with pytest.raises(ValidationError):
            estimate_restricted_constants(A, 4, trials=1, refine_iters=0, seed=0)


class TestGammaDelta:
    def test_zero_delta(self):
        assert gamma_from_delta(0.0) == 1.0

    def test_one_third(self):
        assert gamma_from_delta(1.0 / 3.0) == pytest.approx(2.0, rel=1e-14)

    def test_threshold_value(self):
        delta = 2.0 * (3.0 - math.sqrt(2.0)) / 7.0
        assert gamma_from_delta(delta) == pytest.approx(4.0 * math.sqrt(2.0) - 3.0, rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.0, 0.999))
    def test_round_trip(self, delta):
        assert delta_from_gamma(gamma_from_delta(delta)) == pytest.approx(delta, abs=1e-12)

    def test_rejects_bad_values(self):
        with pytest.raises(ValidationError):
            gamma_from_delta(1.0)
        with pytest.raises(ValidationError):
            delta_from_gamma(0.5)


class TestSerialization:
    def test_gaussian_roundtrip_from_seed(self, tmp_path):
        A = gaussian_operator(4, 6, seed=21)
        path = tmp_path / "op.json"
        save_operator(A, path)
        B = load_operator(path)
        assert np.array_equal(A.payload, B.payload)

    def test_gaussian_roundtrip_with_payload(self, tmp_path):
        A = gaussian_operator(3, 5, seed=22)
        path = tmp_path / "op.json"
        save_operator(A, path, include_payload=True)
        doc = json.loads(path.read_text())
        assert "payload_file" in doc
        B = load_operator(path)
        assert np.array_equal(A.payload, B.payload)

    def test_mask_roundtrip(self, tmp_path):
        A = entry_mask_operator(3, [(0, 1), (2, 2)], scale=0.5)
        path = tmp_path / "mask.json"
        save_operator(A, path)
        B = load_operator(path)
        assert B.kind == "entry-mask" and B.indices == A.indices and B.scale == 0.5

    def test_unknown_kind_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"kind": "mystery", "n": 2, "m": 2}))
        with pytest.raises(ValidationError):
            load_operator(path)

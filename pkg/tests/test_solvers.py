import numpy as np
import pytest

from schattenrec.errors import ValidationError
from schattenrec.measurements import (
    entry_mask_operator,
    full_vectorization_operator,
    gaussian_operator,
)
from schattenrec.rng import spawn_rng
from schattenrec.schatten import schatten_norm
from schattenrec.solvers import (
    SolveOptions,
    oracle_recover_small,
    recover_nuclear,
    recover_schatten_p,
)
from schattenrec.geometry import kernel_basis

from oracles import projected_subgradient_nuclear


def planted_rank1(seed, n):
    rng = spawn_rng(seed, "planted")
    X = np.outer(rng.standard_normal(n), rng.standard_normal(n))
    return X / schatten_norm(X, 2.0)


class TestNuclear:
    def test_zero_measurements(self):
        A = gaussian_operator(4, 6, seed=0)
        res = recover_nuclear(A, np.zeros(6))
        assert np.array_equal(res.minimizer, np.zeros((4, 4)))
        assert res.converged

    def test_planted_rank1_recovery(self):
        hits = 0
        for i in range(20):
            A = gaussian_operator(8, 48, seed=100 + i)
            X0 = planted_rank1(i, 8)
            res = recover_nuclear(A, A.apply(X0))
            rel = schatten_norm(res.minimizer - X0, 2.0)
            hits += res.converged and rel <= 1e-4
        assert hits >= 19

    def test_matches_subgradient_oracle(self):
        for i in range(5):
            A = gaussian_operator(3, 7, seed=200 + i)
            y = spawn_rng(300 + i, "y").standard_normal(7)
            res = recover_nuclear(A, y)
            oracle_obj, _ = projected_subgradient_nuclear(A.dense_matrix(), y, iters=40000)
            assert res.converged
            assert res.objective == pytest.approx(oracle_obj, rel=1e-4)

    def test_feasibility(self):
        A = gaussian_operator(5, 12, seed=9)
        y = spawn_rng(9, "feas").standard_normal(12)
        res = recover_nuclear(A, y)
        assert res.residual <= 1e-8 * max(1.0, np.linalg.norm(y))

    def test_theta_ball_mode(self):
        A = gaussian_operator(5, 15, seed=10)
        X0 = planted_rank1(10, 5)
        y = A.apply(X0)
        theta, beta = 0.05, 1.0
        res = recover_nuclear(A, y, theta=theta, beta_2s=beta)
        assert res.converged
        assert res.residual <= beta * theta + 1e-8
        # the relaxed solution can only have smaller objective
        exact = recover_nuclear(A, y)
        assert res.objective <= exact.objective + 1e-6

    def test_scaling_equivariance(self):
        A = gaussian_operator(4, 9, seed=11)
        y = spawn_rng(11, "scale").standard_normal(9)
        base = recover_nuclear(A, y)
        for c in (3.7, -2.0, 0.01):
            scaled = recover_nuclear(A, c * y)
            assert np.allclose(scaled.minimizer, c * base.minimizer, atol=1e-8)

    def test_minimality_against_kernel_perturbations(self):
        A = gaussian_operator(4, 10, seed=12)
        y = spawn_rng(12, "minimality").standard_normal(10)
        res = recover_nuclear(A, y)
        kb = kernel_basis(A)
        rng = spawn_rng(13, "directions")
        obj = res.objective
        for _ in range(100):
            K = kb.sample(rng)
            K *= 1e-3 / np.linalg.norm(K)
            assert schatten_norm(res.minimizer + K, 1.0) >= obj - 1e-6

    def test_objective_never_below_feasible_reference(self):
        # the minimizer's objective cannot exceed any feasible point's norm
        A = gaussian_operator(5, 10, seed=14)
        X0 = planted_rank1(14, 5)
        res = recover_nuclear(A, A.apply(X0))
        assert res.objective <= schatten_norm(X0, 1.0) + 1e-6

    def test_nonconvergence_is_flagged(self):
        A = gaussian_operator(6, 20, seed=15)
        y = spawn_rng(15, "hard").standard_normal(20)
        res = recover_nuclear(A, y, opts=SolveOptions(max_iters=3))
        assert not res.converged
        assert "did not converge" in res.status_note

    def test_rejects_negative_theta(self):
        A = gaussian_operator(3, 5, seed=0)
        with pytest.raises(ValidationError):
            recover_nuclear(A, np.zeros(5), theta=-1.0)

    def test_trace(self):
        A = gaussian_operator(3, 6, seed=16)
        y = spawn_rng(16, "trace").standard_normal(6)
        res = recover_nuclear(A, y, opts=SolveOptions(trace=True))
        assert len(res.trace) == res.iterations
        iters, objs, resids = zip(*res.trace)
        assert iters[0] == 1 and iters[-1] == res.iterations


class TestSchattenP:
    def test_zero_measurements(self):
        A = gaussian_operator(4, 6, seed=0)
        res = recover_schatten_p(A, np.zeros(6), 0.5)
        assert np.array_equal(res.minimizer, np.zeros((4, 4)))

    def test_rejects_p_out_of_range(self):
        A = gaussian_operator(3, 5, seed=0)
        with pytest.raises(ValidationError):
            recover_schatten_p(A, np.zeros(5), 1.0)
        with pytest.raises(ValidationError):
            recover_schatten_p(A, np.zeros(5), 0.0)

    def test_planted_rank1_fewer_measurements(self):
        hits = 0
        for i in range(20):
            A = gaussian_operator(8, 40, seed=400 + i)
            X0 = planted_rank1(1000 + i, 8)
            res = recover_schatten_p(A, A.apply(X0), 0.5)
            rel = schatten_norm(res.minimizer - X0, 2.0)
            hits += rel <= 1e-3
        assert hits >= 18

    def test_beats_nuclear_below_transition(self):
        # directional check: p < 1 recovers where p = 1 fails
        wins_p, wins_nuc = 0, 0
        for i in range(10):
            A = gaussian_operator(8, 26, seed=500 + i)
            X0 = planted_rank1(2000 + i, 8)
            y = A.apply(X0)
            rel_p = schatten_norm(recover_schatten_p(A, y, 0.5).minimizer - X0, 2.0)
            rel_n = schatten_norm(recover_nuclear(A, y).minimizer - X0, 2.0)
            wins_p += rel_p <= 1e-3
            wins_nuc += rel_n <= 1e-3
        assert wins_p > wins_nuc

    def test_descent_from_warm_start(self):
        for i in range(8):
            A = gaussian_operator(6, 18, seed=600 + i)
            y = spawn_rng(600 + i, "irls").standard_normal(18)
            warm = recover_nuclear(A, y)
            res = recover_schatten_p(A, y, 0.5)
            assert res.objective <= schatten_norm(warm.minimizer, 0.5) + 1e-8

    def test_status_reports_local(self):
        A = gaussian_operator(5, 15, seed=17)
        res = recover_schatten_p(A, A.apply(planted_rank1(17, 5)), 0.5)
        assert "local" in res.status_note

    def test_feasibility(self):
        A = gaussian_operator(5, 12, seed=18)
        y = spawn_rng(18, "irlsfeas").standard_normal(12)
        res = recover_schatten_p(A, y, 0.5)
        assert res.residual <= 1e-7 * max(1.0, np.linalg.norm(y))


class TestOracleSmall:
    def test_full_measurements_unique_solution(self):
        A = full_vectorization_operator(2)
        X0 = np.array([[1.0, 2.0], [3.0, 4.0]])
        for p in (0.5, 1.0):
            Z = oracle_recover_small(A, A.apply(X0), p)
            assert np.allclose(Z, X0, atol=1e-10)

    def test_agrees_with_nuclear_n2(self):
        for i in range(5):
            A = gaussian_operator(2, 3, seed=700 + i)
            y = spawn_rng(700 + i, "oracle").standard_normal(3)
            Z = oracle_recover_small(A, y, 1.0, grid_density=31)
            res = recover_nuclear(A, y)
            assert schatten_norm(Z, 1.0) == pytest.approx(res.objective, abs=1e-4)

    def test_global_bound_for_irls_n2(self):
        for i in range(5):
            A = gaussian_operator(2, 3, seed=800 + i)
            y = spawn_rng(800 + i, "oracle2").standard_normal(3)
            Z = oracle_recover_small(A, y, 0.5, grid_density=31)
            res = recover_schatten_p(A, y, 0.5)
            assert schatten_norm(Z, 0.5) <= res.objective + 1e-4

    def test_feasibility_of_oracle_point(self):
        A = gaussian_operator(3, 7, seed=900)
        y = spawn_rng(900, "oracle3").standard_normal(7)
        Z = oracle_recover_small(A, y, 1.0)
        assert np.linalg.norm(A.apply(Z) - y) <= 1e-7

    def test_rejects_large_n(self):
        A = gaussian_operator(4, 8, seed=0)
        with pytest.raises(ValidationError):
            oracle_recover_small(A, np.zeros(8), 1.0)

    def test_infeasible_y(self):
        A = entry_mask_operator(2, [(0, 0)], scale=0.0)
        with pytest.raises(ValidationError):
            oracle_recover_small(A, np.array([1.0]), 1.0)

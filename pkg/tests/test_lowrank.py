import numpy as np
import pytest

from nufi.grid import AxisSpec
from nufi.lowrank import (Factorization, MatvecOracle, TruncationPolicy,
                          dense_oracle, eval_factored_batch, eval_factored_point,
                          interp_dense_batch, rsvd, svd_by_policy, truncate_svd)


def planted_matrix(m, n, sigmas, seed=0):
    rng = np.random.default_rng(seed)
    q1, _ = np.linalg.qr(rng.standard_normal((m, len(sigmas))))
    q2, _ = np.linalg.qr(rng.standard_normal((n, len(sigmas))))
    return (q1 * sigmas) @ q2.T


class TestTruncateSvd:
    def test_diag_tail_error(self):
        a = np.diag([3.0, 2.0, 1.0])
        f = truncate_svd(a, 2)
        assert np.linalg.norm(a - f.reconstruct()) == pytest.approx(1.0, rel=1e-12)

    def test_exact_rank_one(self):
        rng = np.random.default_rng(0)
        a = np.outer(rng.standard_normal(20), rng.standard_normal(15))
        f = truncate_svd(a, 1)
        assert np.abs(a - f.reconstruct()).max() < 1e-12

    def test_random_matrix_matches_tail(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((50, 40))
        f = truncate_svd(a, 10)
        s = np.linalg.svd(a, compute_uv=False)
        tail = np.sqrt((s[10:] ** 2).sum())
        assert np.linalg.norm(a - f.reconstruct()) == pytest.approx(tail, abs=1e-10)

    def test_invalid_rank(self):
        with pytest.raises(ValueError):
            truncate_svd(np.eye(4), 5)

    def test_factor_invariants(self):
        rng = np.random.default_rng(2)
        f = truncate_svd(rng.standard_normal((30, 20)), 7)
        s = f.singular_values
        assert np.all(np.diff(s) <= 0) and np.all(s > 0)
        gram = f.col_factor.T @ f.col_factor
        assert np.abs(gram - np.eye(7)).max() < 1e-10


class TestRsvd:
    def test_exact_rank_capture(self):
        a = planted_matrix(60, 50, np.array([5.0, 2.0, 1.0]))
        f = rsvd(dense_oracle(a), TruncationPolicy(max_rank=3, rel_tol=0.0, oversampling=5), seed=1)
        assert np.abs(a - f.reconstruct()).max() < 1e-10

    def test_relative_cutoff_rank(self):
        sig = 10.0 ** -np.arange(8.0)  # 1, 1e-1, ..., 1e-7
        a = planted_matrix(40, 40, sig, seed=3)
        f = rsvd(dense_oracle(a), TruncationPolicy(max_rank=8, rel_tol=1e-3, oversampling=5), seed=0)
        assert f.rank == 4  # sigma_j >= 1e-3 * sigma_1

    def test_planted_spectrum_quality(self):
        sig = 2.0 ** -np.arange(1.0, 201.0)
        a = planted_matrix(200, 200, sig, seed=5)
        tail = np.sqrt((sig[10:] ** 2).sum())
        policy = TruncationPolicy(max_rank=10, rel_tol=0.0, oversampling=5)
        for seed in range(5):
            f = rsvd(dense_oracle(a), policy, seed=seed)
            err = np.linalg.norm(a - f.reconstruct())
            assert err <= 10.0 * tail

    def test_seed_determinism_bitwise(self):
        a = planted_matrix(30, 25, np.array([4.0, 1.0, 0.25]), seed=2)
        p = TruncationPolicy(max_rank=3, rel_tol=0.0, oversampling=4)
        f1 = rsvd(dense_oracle(a), p, seed=42)
        f2 = rsvd(dense_oracle(a), p, seed=42)
        assert np.array_equal(f1.row_factor, f2.row_factor)
        assert np.array_equal(f1.col_factor, f2.col_factor)
        assert np.array_equal(f1.singular_values, f2.singular_values)

    def test_precondition(self):
        a = np.eye(6)
        with pytest.raises(ValueError):
            rsvd(dense_oracle(a), TruncationPolicy(max_rank=4, oversampling=5), seed=0)

    def test_adjoint_check_catches_broken_oracle(self):
        a = planted_matrix(20, 20, np.array([1.0, 0.5]), seed=4)
        bad = MatvecOracle(20, 20, lambda w: a @ w, lambda y: (a + 0.1).T @ y)
        with pytest.raises(RuntimeError):
            rsvd(bad, TruncationPolicy(max_rank=2, oversampling=3), seed=0, check_adjoint=True)

    def test_oracle_adjoint_property(self):
        a = planted_matrix(25, 35, np.array([2.0, 1.0, 0.3]), seed=6)
        assert dense_oracle(a).adjoint_error(seed=3, probes=5) < 1e-10

    def test_sketch_orthonormality(self):
        # qr of the sketch gives orthonormal columns; surfaced via col_factor
        rng = np.random.default_rng(9)
        a = rng.standard_normal((40, 30))
        f = rsvd(dense_oracle(a), TruncationPolicy(max_rank=6, rel_tol=0.0, oversampling=6), seed=0)
        gram = f.col_factor.T @ f.col_factor
        assert np.abs(gram - np.eye(f.rank)).max() < 1e-10

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            TruncationPolicy(max_rank=0)
        with pytest.raises(ValueError):
            TruncationPolicy(max_rank=3, rel_tol=1.5)
        with pytest.raises(ValueError):
            TruncationPolicy(max_rank=3, oversampling=0)


X_AX = AxisSpec(0.0, 2.0 * np.pi, 24, "periodic")
V_AX = AxisSpec(-3.0, 3.0, 20, "bounded")


def random_factorization(rank, seed=0, nx=24, nv=20):
    rng = np.random.default_rng(seed)
    a = planted_matrix(nx, nv, np.linspace(2.0, 0.5, rank), seed=seed)
    return truncate_svd(a, rank), a


class TestFactoredEvaluation:
    def test_rank_one_constant(self):
        ones_r = np.ones((X_AX.count, 1))
        ones_c = np.ones((V_AX.count, 1))
        f = Factorization(ones_r, ones_c, np.array([1.0]))
        for xq, vq in [(0.1, -2.0), (5.0, 2.9), (3.3, 0.0)]:
            assert eval_factored_point(f, xq, vq, (X_AX,), (V_AX,)) == pytest.approx(1.0, rel=1e-14)

    def test_node_queries_reproduce_matrix(self):
        f, a = random_factorization(5, seed=7)
        recon = f.reconstruct()
        xi, vi = 11, 13
        val = eval_factored_point(f, X_AX.nodes()[xi], V_AX.nodes()[vi], (X_AX,), (V_AX,))
        assert val == pytest.approx(recon[xi, vi], rel=1e-12)

    def test_off_node_matches_dense_interpolation(self):
        f, _ = random_factorization(5, seed=8)
        dense = f.reconstruct()
        rng = np.random.default_rng(3)
        xq = rng.uniform(0, 2 * np.pi, 200)
        vq = rng.uniform(-3, 3, 200)
        fac = eval_factored_batch(f, (xq,), (vq,), (X_AX,), (V_AX,))
        ref = interp_dense_batch(dense, (xq,), (vq,), (X_AX,), (V_AX,))
        assert np.abs(fac - ref).max() < 1e-12

    def test_2d2v_matricized_evaluation(self):
        ax = AxisSpec(0.0, 1.0, 6, "periodic")
        ay = AxisSpec(0.0, 1.0, 5, "periodic")
        au = AxisSpec(-1.0, 1.0, 4)
        aw = AxisSpec(-1.0, 1.0, 7)
        rng = np.random.default_rng(4)
        a = rng.standard_normal((6 * 5, 4 * 7))
        f = truncate_svd(a, 10)
        dense = f.reconstruct().reshape(6, 5, 4, 7)
        xq = rng.uniform(0, 1, 50)
        yq = rng.uniform(0, 1, 50)
        uq = rng.uniform(-1, 1, 50)
        wq = rng.uniform(-1, 1, 50)
        got = eval_factored_batch(f, (xq, yq), (uq, wq), (ax, ay), (au, aw))
        # oracle: direct quadrilinear interpolation of the 4D tensor
        from scipy.interpolate import RegularGridInterpolator
        pads = np.pad(dense, ((0, 1), (0, 1), (0, 0), (0, 0)), mode="wrap")
        itp = RegularGridInterpolator(
            (np.linspace(0, 1, 7), np.linspace(0, 1, 6), au.nodes(), aw.nodes()), pads)
        ref = itp(np.stack([xq, yq, uq, wq], axis=1))
        assert np.abs(got - ref).max() < 1e-12

    def test_svd_by_policy_applies_both_limits(self):
        sig = np.array([1.0, 0.5, 1e-5, 1e-9])
        a = planted_matrix(12, 12, sig, seed=9)
        f = svd_by_policy(a, TruncationPolicy(max_rank=3, rel_tol=1e-3))
        assert f.rank == 2

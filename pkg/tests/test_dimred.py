"""Projection math: PCA, perplexity search, gradient descent layout, axes."""

import math

import numpy as np
import pytest

from csn.dimred import (
    TsneParams,
    ZeroVarianceError,
    axis_projection,
    import_projection,
    joint_probabilities,
    kl_divergence,
    kl_gradient,
    low_dim_affinities,
    pairwise_sq_dists,
    pca,
    perplexity_calibration,
    tsne,
)
from csn.model import write_f32
from oracles import charpoly_eig_3x3


def two_clusters(n_per=10, sep=100.0, spread=1.0, seed=1):
    rng = np.random.Generator(np.random.PCG64(seed))
    a = rng.normal(0.0, spread, size=(n_per, 4))
    b = rng.normal(0.0, spread, size=(n_per, 4))
    b[:, 0] += sep
    return np.vstack([a, b])


class TestPca:
    def test_collinear_data(self):
        X = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        res = pca(X, k=2)
        d = 1.0 / math.sqrt(2.0)
        assert np.allclose(res.components[0], [d, d], atol=1e-12)
        assert res.explained_variance[1] == pytest.approx(0.0, abs=1e-12)

    def test_reconstruction_with_all_components(self):
        rng = np.random.Generator(np.random.PCG64(2))
        X = rng.normal(size=(8, 3))
        Xc = X - X.mean(axis=0)
        res = pca(Xc, k=3)
        back = res.coords @ res.components
        assert np.allclose(back, Xc, atol=1e-6)

    def test_matches_charpoly_oracle(self):
        rng = np.random.Generator(np.random.PCG64(3))
        for _ in range(20):
            X = rng.normal(size=(6, 3))
            res = pca(X, k=3)
            Xc = X - X.mean(axis=0)
            cov = (Xc.T @ Xc) / (X.shape[0] - 1)
            want_vals, want_vecs = charpoly_eig_3x3(cov)
            assert np.allclose(res.explained_variance, want_vals, atol=1e-8)
            assert np.allclose(res.components, want_vecs, atol=1e-7)

    def test_sign_convention(self):
        rng = np.random.Generator(np.random.PCG64(4))
        X = rng.normal(size=(20, 5))
        res = pca(X, k=4)
        for row in res.components:
            assert row[np.argmax(np.abs(row))] > 0

    def test_orthonormal_and_descending(self):
        rng = np.random.Generator(np.random.PCG64(5))
        X = rng.normal(size=(30, 6)) * [1, 2, 3, 4, 5, 6]
        res = pca(X, k=6)
        gram = res.components @ res.components.T
        assert np.allclose(gram, np.eye(6), atol=1e-8)
        ev = res.explained_variance
        assert all(ev[i] >= ev[i + 1] - 1e-12 for i in range(5))

    def test_variance_sum(self):
        rng = np.random.Generator(np.random.PCG64(6))
        X = rng.normal(size=(25, 4))
        res = pca(X, k=4)
        Xc = X - X.mean(axis=0)
        total = float((Xc**2).sum()) / (X.shape[0] - 1)
        assert res.explained_variance.sum() == pytest.approx(total, abs=1e-6)

    def test_gram_trick_when_d_exceeds_n(self):
        rng = np.random.Generator(np.random.PCG64(7))
        X = rng.normal(size=(5, 12))
        res = pca(X, k=3)
        # projections must match covariance-path results computed densely
        Xc = X - X.mean(axis=0)
        cov = (Xc.T @ Xc) / 4
        vals, vecs = np.linalg.eigh(cov)
        order = np.argsort(vals)[::-1][:3]
        assert np.allclose(res.explained_variance, vals[order], atol=1e-8)
        gram = res.components @ res.components.T
        assert np.allclose(gram, np.eye(3), atol=1e-8)

    def test_zero_variance(self):
        with pytest.raises(ZeroVarianceError, match="zero variance"):
            pca(np.ones((5, 3)), k=2)

    def test_bad_k(self):
        with pytest.raises(ValueError):
            pca(np.random.default_rng(0).normal(size=(4, 3)), k=1)
        with pytest.raises(ValueError):
            pca(np.random.default_rng(0).normal(size=(4, 3)), k=4)


class TestCalibration:
    def test_equidistant_target_four_not_clamped(self):
        res = perplexity_calibration(np.full(4, 2.0), 4.0)
        assert not res.clamped
        assert np.allclose(res.p, 0.25)

    def test_equidistant_target_thirty_clamped(self):
        res = perplexity_calibration(np.full(4, 2.0), 30.0)
        assert res.clamped

    def test_two_cluster_entropy_within_tolerance(self):
        X = two_clusters(n_per=25, sep=50.0, seed=8)
        sq = pairwise_sq_dists(X)
        for i in range(X.shape[0]):
            row = np.delete(sq[i], i)
            res = perplexity_calibration(row, 5.0)
            assert not res.clamped
            # recompute entropy from the returned sigma, independently
            w = np.exp(-row / (2.0 * res.sigma**2))
            p = w / w.sum()
            ent = -np.sum(p[p > 0] * np.log(p[p > 0]))
            assert 2.0 ** (ent / math.log(2.0)) == pytest.approx(5.0, abs=1e-4)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            perplexity_calibration(np.array([]), 2.0)


class TestTsneInternals:
    def test_p_and_q_sum_to_one(self):
        X = two_clusters(5, seed=9)
        P, _, _ = joint_probabilities(X, perplexity=4.0)
        assert abs(P.sum() - 1.0) < 1e-8
        assert np.allclose(P, P.T)
        rng = np.random.Generator(np.random.PCG64(10))
        Y = rng.normal(size=(10, 2))
        Q, _ = low_dim_affinities(Y)
        assert abs(Q.sum() - 1.0) < 1e-8

    def test_gradient_matches_finite_differences(self):
        rng = np.random.Generator(np.random.PCG64(11))
        X = rng.normal(size=(10, 4))
        P, _, _ = joint_probabilities(X, perplexity=5.0)
        Y = rng.normal(size=(10, 2))
        grad = kl_gradient(P, Y)
        h = 1e-5
        fd = np.zeros_like(Y)
        for i in range(10):
            for j in range(2):
                Yp, Ym = Y.copy(), Y.copy()
                Yp[i, j] += h
                Ym[i, j] -= h
                fd[i, j] = (kl_divergence(P, Yp) - kl_divergence(P, Ym)) / (2 * h)
        scale = np.abs(fd).max()
        assert np.abs(grad - fd).max() / scale < 1e-4

    def test_pairwise_sq_dists(self):
        X = np.array([[0.0, 0.0], [3.0, 4.0]])
        d = pairwise_sq_dists(X)
        assert d[0, 1] == pytest.approx(25.0)
        assert d[0, 0] == 0.0 and d[1, 1] == 0.0


class TestTsne:
    def test_kl_decreases(self):
        X = two_clusters(n_per=20, sep=10.0, seed=12)
        res = tsne(X, TsneParams(perplexity=10, iterations=400, seed=0))
        assert res.kl_final < res.kl_initial
        assert res.kl_trace[-1] == pytest.approx(res.kl_final, rel=1e-6)

    def test_deterministic(self):
        X = two_clusters(n_per=6, sep=20.0, seed=13)
        p = TsneParams(perplexity=4, iterations=300, seed=42)
        a = tsne(X, p)
        b = tsne(X, p)
        assert np.array_equal(a.coords, b.coords)
        assert a.kl_final == b.kl_final

    def test_seed_changes_layout(self):
        X = two_clusters(n_per=6, sep=20.0, seed=13)
        a = tsne(X, TsneParams(perplexity=4, iterations=150, seed=1))
        b = tsne(X, TsneParams(perplexity=4, iterations=150, seed=2))
        assert not np.array_equal(a.coords, b.coords)

    def test_separates_well_spaced_clusters(self):
        X = two_clusters(n_per=10, sep=100.0, spread=1.0, seed=1)
        res = tsne(X, TsneParams(perplexity=5, iterations=1000, seed=0))
        Y = res.coords
        labels = np.array([0] * 10 + [1] * 10)
        d = np.sqrt(pairwise_sq_dists(Y))
        same = labels[:, None] == labels[None, :]
        np.fill_diagonal(same, False)
        intra = d[same].max()
        inter = d[labels[:, None] != labels[None, :]].min()
        assert intra < inter

    def test_zero_variance(self):
        with pytest.raises(ZeroVarianceError):
            tsne(np.ones((6, 3)), TsneParams(perplexity=3))

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            tsne(np.random.default_rng(0).normal(size=(3, 2)), TsneParams(perplexity=2))

    def test_perplexity_must_be_below_n(self):
        with pytest.raises(ValueError):
            tsne(np.random.default_rng(0).normal(size=(6, 2)), TsneParams(perplexity=6))


class TestAxisProjection:
    def test_pass_through_pairs(self):
        res = axis_projection([1900.0, 1950.0, 2000.0], [0.0, 1.0, 2.0])
        # x spans the wider range, so it hits the full [-1, 1]
        assert res.coords[:, 0].tolist() == [-1.0, 0.0, 1.0]
        assert res.missing_x == () and res.missing_y == ()

    def test_diagonal(self):
        res = axis_projection([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert np.allclose(res.coords[:, 0], res.coords[:, 1])

    def test_missing_lands_at_domain_min_and_flagged(self):
        res = axis_projection([1900.0, math.nan, 2000.0], [0.0, 1.0, 2.0])
        assert res.missing_x == (1,)
        assert res.coords[1, 0] == -1.0

    def test_all_missing_column(self):
        with pytest.raises(ValueError, match="numeric"):
            axis_projection([math.nan, math.nan], [1.0, 2.0])


class TestImportProjection:
    def test_csv_round_trip(self, tmp_path):
        coords = np.array([[0.1, 0.2], [-0.5, 0.9], [1.0, -1.0]], dtype=np.float32)
        path = tmp_path / "p.csv"
        path.write_text("\n".join(f"{x},{y}" for x, y in coords) + "\n")
        out = import_projection(path, expected_n=3)
        # import normalizes; normalizing already-normalized data is identity
        from csn.model import normalize_projection

        assert np.array_equal(out, normalize_projection(coords))

    def test_three_column_preserves_z(self, tmp_path):
        path = tmp_path / "p3.csv"
        path.write_text("0,0,0.75\n2,1,0.25\n")
        out = import_projection(path, expected_n=2)
        assert out.shape == (2, 3)
        assert out[:, 2].tolist() == [0.75, 0.25]

    def test_raw_f32(self, tmp_path):
        coords = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
        path = tmp_path / "p.bin"
        write_f32(path, coords)
        out = import_projection(path, expected_n=2, dims=2)
        assert out.shape == (2, 2)

    def test_row_count_mismatch(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("0,0\n1,1\n")
        with pytest.raises(ValueError, match="rows"):
            import_projection(path, expected_n=5)

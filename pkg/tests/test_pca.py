import numpy as np
import pytest

from datadesign.errors import ModelError
from datadesign.pca import fit_pca, project


class TestFitPca:
    def test_collinear_points_give_diagonal_direction(self):
        data = np.array([[-1, -1], [0, 0], [1, 1]], dtype=float)
        model = fit_pca(data, 1)
        assert model.components[0] == pytest.approx([1 / np.sqrt(2), 1 / np.sqrt(2)])

    def test_full_rank_round_trip(self):
        rng = np.random.default_rng(0)
        data = rng.normal(size=(40, 6))
        model = fit_pca(data, 6)
        projected = project(model, data)
        reconstructed = projected @ model.components + model.mean
        assert np.max(np.abs(reconstructed - data)) < 1e-6

    def test_rank3_variance_matches_covariance_eigenvalues(self):
        rng = np.random.default_rng(1)
        basis = rng.normal(size=(3, 10))
        data = rng.normal(size=(200, 3)) @ basis
        model = fit_pca(data, 3)
        # oracle: eigen-decomposition of the sample covariance, computed directly
        cov = np.cov(data, rowvar=False)
        eigs = np.sort(np.linalg.eigvalsh(cov))[::-1][:3]
        assert model.explained_variance == pytest.approx(eigs, abs=1e-6)
        assert model.explained_variance.sum() == pytest.approx(np.trace(cov), abs=1e-6)

    def test_orthonormal_components(self):
        rng = np.random.default_rng(2)
        model = fit_pca(rng.normal(size=(50, 8)), 5)
        gram = model.components @ model.components.T
        assert np.max(np.abs(gram - np.eye(5))) < 1e-8

    def test_explained_variance_non_increasing(self):
        rng = np.random.default_rng(3)
        model = fit_pca(rng.normal(size=(60, 7)), 6)
        assert np.all(np.diff(model.explained_variance) <= 1e-12)

    def test_d_out_of_range(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ModelError, match="bad-dimension"):
            fit_pca(rng.normal(size=(5, 3)), 5)
        with pytest.raises(ModelError, match="bad-dimension"):
            fit_pca(rng.normal(size=(5, 3)), 0)

    def test_identical_rows_rejected(self):
        with pytest.raises(ModelError, match="zero-variance"):
            fit_pca(np.ones((10, 4)), 2)

    def test_sign_convention_is_deterministic(self):
        rng = np.random.default_rng(5)
        data = rng.normal(size=(30, 4))
        a = fit_pca(data, 3)
        b = fit_pca(-data + 7.0, 3)  # flipped data: components may flip, convention refixes sign
        for row_a, row_b in zip(a.components, b.components):
            assert row_a[np.argmax(np.abs(row_a))] > 0
            assert row_b[np.argmax(np.abs(row_b))] > 0


class TestProject:
    def test_mean_projects_to_zero(self):
        rng = np.random.default_rng(6)
        data = rng.normal(size=(20, 3))
        model = fit_pca(data, 2)
        assert project(model, model.mean) == pytest.approx(np.zeros((1, 2)), abs=1e-12)

    def test_collinear_dot_product(self):
        model = fit_pca(np.array([[-1.0, -1.0], [0, 0], [1, 1]]), 1)
        assert project(model, np.array([1.0, 1.0]))[0, 0] == pytest.approx(np.sqrt(2))

    def test_dimension_mismatch(self):
        model = fit_pca(np.random.default_rng(7).normal(size=(10, 4)), 2)
        with pytest.raises(ModelError, match="dimension-mismatch"):
            project(model, np.ones((3, 5)))

    def test_translation_invariance(self):
        rng = np.random.default_rng(8)
        data = rng.normal(size=(25, 5))
        model = fit_pca(data, 3)
        shifted_model = fit_pca(data + 13.5, 3)
        assert np.max(np.abs(project(model, data) - project(shifted_model, data + 13.5))) < 1e-9

import numpy as np
import pytest

from oracle_impl import det3_cofactor, eigenvalues_cubic_oracle
from evergreen_eval.eigen import symmetric_eigenvalues
from evergreen_eval.errors import ValidationError
from evergreen_eval.uncertainty import SimilarityGraph, normalized_laplacian


class TestJacobiSolver:
    def test_identity(self):
        assert symmetric_eigenvalues(np.eye(3)) == [1.0, 1.0, 1.0]

    def test_textbook_two_by_two(self):
        ev = symmetric_eigenvalues([[0.0, 1.0], [1.0, 0.0]])
        assert ev[0] == pytest.approx(-1.0, abs=1e-12)
        assert ev[1] == pytest.approx(1.0, abs=1e-12)

    def test_one_by_one(self):
        assert symmetric_eigenvalues([[4.2]]) == [4.2]

    def test_non_symmetric_rejected(self):
        with pytest.raises(ValidationError):
            symmetric_eigenvalues([[0.0, 1.0], [0.5, 0.0]])

    def test_random_3x3_against_cubic_oracle(self):
        rng = np.random.default_rng(123)
        for _ in range(200):
            a = rng.normal(size=(3, 3))
            a = 0.5 * (a + a.T)
            mine = symmetric_eigenvalues(a)
            oracle = eigenvalues_cubic_oracle(a)
            assert np.allclose(mine, oracle, atol=1e-8)
            assert sum(mine) == pytest.approx(float(np.trace(a)), abs=1e-9)
            assert np.prod(mine) == pytest.approx(det3_cofactor(a), abs=1e-6)

    def test_larger_matrices_match_lapack(self):
        rng = np.random.default_rng(5)
        for n in (4, 6, 9):
            a = rng.normal(size=(n, n))
            a = 0.5 * (a + a.T)
            mine = symmetric_eigenvalues(a)
            assert np.allclose(mine, np.linalg.eigvalsh(a), atol=1e-8)


class TestLaplacianSpectrum:
    def test_spectrum_in_unit_band_and_zero_bottom(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            m = rng.integers(2, 7)
            w = rng.uniform(0.05, 1.0, size=(m, m))
            w = 0.5 * (w + w.T)
            np.fill_diagonal(w, 1.0)
            graph = SimilarityGraph(tuple(tuple(row) for row in w), "provided")
            ev = symmetric_eigenvalues(normalized_laplacian(graph))
            assert ev[0] == pytest.approx(0.0, abs=1e-9)
            assert -1e-9 <= ev[0] and ev[-1] <= 2.0 + 1e-9

    def test_regular_graph_constant_degree_eigenvector(self):
        # ring of equal weights: degrees identical, lambda_min = 0 exactly
        m = 5
        w = np.full((m, m), 0.3)
        np.fill_diagonal(w, 1.0)
        graph = SimilarityGraph(tuple(tuple(row) for row in w), "provided")
        lap = normalized_laplacian(graph)
        const = np.ones(m) / np.sqrt(m)
        assert np.allclose(lap @ (np.sqrt(w.sum(axis=1)) * const), 0.0, atol=1e-12)

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracle_impl import (
    auroc_pairwise_oracle,
    prr_enumeration_oracle,
    rejection_curve_enumeration_oracle,
)
from evergreen_eval.errors import (
    PreconditionError,
    UndefinedMetricError,
    ValidationError,
)
from evergreen_eval.evalmetrics import (
    auprc,
    auroc,
    mcfadden_pseudo_r2,
    point_biserial,
    prr,
    rejection_curve,
    spearman,
)


class TestAuroc:
    def test_perfect_separation(self):
        assert auroc([1, 2, 3, 4], [0, 0, 1, 1]) == 1.0

    def test_all_ties(self):
        assert auroc([5, 5, 5, 5], [0, 0, 1, 1]) == 0.5

    def test_pairwise_fixture(self):
        assert auroc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75

    def test_single_class_undefined(self):
        with pytest.raises(UndefinedMetricError):
            auroc([0.1, 0.2], [1, 1])

    def test_random_instances_match_pairwise_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(300):
            n = int(rng.integers(2, 50))
            scores = rng.choice([0.1, 0.5, 0.5, 0.9, 1.3], size=n)
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                continue
            assert auroc(scores, labels) == pytest.approx(
                auroc_pairwise_oracle(scores, labels), abs=1e-12
            )

    def test_exhaustive_small_instances(self):
        """N <= 6 exhaustively over a 3-value score alphabet; N in {7, 8}
        covered by a seeded random slice of the same space (the full sweep
        at those sizes costs minutes for no extra tie structure)."""
        alphabet = (0.0, 0.5, 1.0)
        for n in range(2, 7):
            for scores in itertools.product(alphabet, repeat=n):
                for labels in itertools.product((0, 1), repeat=n):
                    if min(labels) == max(labels):
                        continue
                    assert auroc(scores, labels) == auroc_pairwise_oracle(scores, labels)
        rng = np.random.default_rng(88)
        for _ in range(5000):
            n = int(rng.integers(7, 9))
            scores = rng.choice(alphabet, size=n)
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                continue
            assert auroc(scores, labels) == auroc_pairwise_oracle(scores, labels)

    @given(
        st.lists(st.floats(min_value=-10, max_value=10), min_size=4, max_size=30),
    )
    @settings(max_examples=100, deadline=None)
    def test_invariant_under_monotone_transform(self, scores):
        # coarse grid so the transform stays injective in float64
        scores = [round(s, 3) for s in scores]
        labels = [i % 2 for i in range(len(scores))]
        transformed = [math.exp(0.5 * s) + 3 for s in scores]
        assert auroc(scores, labels) == pytest.approx(auroc(transformed, labels), abs=1e-12)

    def test_negation_complement_without_ties(self):
        rng = np.random.default_rng(3)
        scores = rng.permutation(20).astype(float)
        labels = rng.integers(0, 2, size=20)
        labels[0], labels[1] = 0, 1
        a = auroc(scores, labels)
        b = auroc(-scores, labels)
        assert a + b == pytest.approx(1.0, abs=1e-12)


class TestAuprc:
    def test_perfect_ranking(self):
        assert auprc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_single_positive_ranked_last(self):
        n = 7
        scores = list(range(n, 0, -1))
        labels = [0] * (n - 1) + [1]
        assert auprc(scores, labels) == pytest.approx(1 / n, abs=1e-12)

    def test_four_point_hand_ranking(self):
        assert auprc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(5 / 6, abs=1e-12)

    def test_no_positives_undefined(self):
        with pytest.raises(UndefinedMetricError):
            auprc([0.5, 0.6], [0, 0])


class TestRejectionCurve:
    def test_oracle_ordering_reaches_one(self):
        quality = [0, 1, 1, 0, 1]
        uncertainty = [1 - q for q in quality]
        curve = rejection_curve(uncertainty, quality)
        values = list(curve.quality)
        assert values == sorted(values)  # non-decreasing
        assert values[2] == 1.0  # both errors rejected

    def test_constant_uncertainty_flat_curve(self):
        curve = rejection_curve([3.3] * 4, [1, 0, 1, 0])
        assert all(v == pytest.approx(0.5, abs=1e-12) for v in curve.quality)

    def test_empty_rejected(self):
        with pytest.raises(PreconditionError):
            rejection_curve([], [])

    def test_four_point_enumeration(self):
        uncertainty = [0.9, 0.1, 0.5, 0.5]
        quality = [0.0, 1.0, 1.0, 0.0]
        curve = rejection_curve(uncertainty, quality)
        expected = rejection_curve_enumeration_oracle(uncertainty, quality)
        assert np.allclose(curve.quality, expected, atol=1e-12)

    def test_exhaustive_enumeration_small(self):
        alphabet = (0.0, 1.0, 2.0)
        rng = np.random.default_rng(23)
        for n in range(1, 6):
            for _ in range(40):
                uncertainty = rng.choice(alphabet, size=n).tolist()
                quality = rng.integers(0, 2, size=n).astype(float).tolist()
                curve = rejection_curve(uncertainty, quality)
                expected = rejection_curve_enumeration_oracle(uncertainty, quality)
                assert np.allclose(curve.quality, expected, atol=1e-12)

    def test_stable_policy_available(self):
        curve = rejection_curve([1.0, 1.0], [1.0, 0.0], tie_policy="stable")
        assert curve.quality == (0.5, 0.0, 0.0)


class TestPrr:
    def test_oracle_is_one(self):
        quality = [1, 0, 1, 0, 1, 1]
        assert prr([1 - q for q in quality], quality) == pytest.approx(1.0, abs=1e-12)

    def test_constant_uncertainty_is_zero(self):
        assert prr([2.0] * 6, [1, 0, 1, 0, 1, 0]) == pytest.approx(0.0, abs=1e-12)

    def test_balanced_anticalibrated_is_minus_one(self):
        quality = [1, 0, 1, 0]
        assert prr(quality, quality) == pytest.approx(-1.0, abs=1e-12)

    def test_constant_quality_undefined(self):
        with pytest.raises(UndefinedMetricError):
            prr([0.1, 0.2], [1, 1])

    def test_exhaustive_enumeration_small(self):
        alphabet = (0.0, 0.5, 1.0)
        for n in range(2, 7):
            for uncertainty in itertools.product(alphabet, repeat=n):
                for ones in range(1, n):
                    quality = [1.0] * ones + [0.0] * (n - ones)
                    assert prr(list(uncertainty), quality) == pytest.approx(
                        prr_enumeration_oracle(list(uncertainty), quality), abs=1e-10
                    )

    @given(st.lists(st.floats(min_value=-4, max_value=4), min_size=3, max_size=20))
    @settings(max_examples=80, deadline=None)
    def test_invariant_under_monotone_transform(self, uncertainty):
        # coarse grid so the transform stays injective in float64
        uncertainty = [round(u, 3) for u in uncertainty]
        quality = [i % 2 for i in range(len(uncertainty))]
        transformed = [math.tanh(u) * 2 + 5 for u in uncertainty]
        assert prr(uncertainty, quality) == pytest.approx(
            prr(transformed, quality), abs=1e-9
        )


class TestPointBiserial:
    def test_identical_is_one(self):
        r, p = point_biserial([0, 1, 0, 1], [0.0, 1.0, 0.0, 1.0])
        assert r == 1.0 and p == 0.0

    def test_independent_large_n(self):
        rng = np.random.default_rng(11)
        y = rng.integers(0, 2, size=5000)
        x = rng.normal(size=5000)
        r, p = point_biserial(y, x)
        assert abs(r) < 0.05

    def test_hand_four_point(self):
        r, p = point_biserial([0, 0, 1, 1], [1.0, 2.0, 3.0, 4.0])
        assert r == pytest.approx(2 / math.sqrt(5), abs=1e-9)
        assert 0.0 < p < 1.0

    def test_constant_continuous_undefined(self):
        with pytest.raises(UndefinedMetricError):
            point_biserial([0, 1], [2.0, 2.0])

    def test_pvalue_matches_scipy(self):
        from scipy import stats

        rng = np.random.default_rng(2)
        for _ in range(20):
            n = int(rng.integers(5, 60))
            y = rng.integers(0, 2, size=n)
            if y.min() == y.max():
                continue
            x = rng.normal(size=n) + 0.4 * y
            r, p = point_biserial(y, x)
            ref = stats.pearsonr(y, x)
            assert r == pytest.approx(ref.statistic, abs=1e-10)
            assert p == pytest.approx(ref.pvalue, abs=1e-8)


class TestSpearman:
    def test_monotone_relation(self):
        y = [0, 0, 0, 1, 1, 1]
        x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        rho, p = spearman(y, x)
        assert rho > 0.8

    def test_matches_scipy(self):
        from scipy import stats

        rng = np.random.default_rng(8)
        y = rng.integers(0, 2, size=40)
        y[0], y[1] = 0, 1
        x = rng.normal(size=40) + y
        rho, _ = spearman(y, x)
        assert rho == pytest.approx(stats.spearmanr(y, x).statistic, abs=1e-10)


class TestMcFadden:
    def test_independent_noise_small(self):
        rng = np.random.default_rng(0)
        r2 = mcfadden_pseudo_r2(rng.normal(size=1000), rng.integers(0, 2, size=1000))
        assert 0.0 <= r2 < 0.01

    def test_predictive_gaussians(self):
        rng = np.random.default_rng(1)
        x = np.concatenate([rng.normal(-2, 1, 400), rng.normal(2, 1, 400)])
        y = np.array([0] * 400 + [1] * 400)
        assert 0.3 < mcfadden_pseudo_r2(x, y) < 1.0

    def test_four_point_closed_form_zero(self):
        # balanced group means coincide -> slope 0 is the MLE -> R^2 = 0
        assert mcfadden_pseudo_r2([1.0, 2.0, 3.0, 4.0], [0, 1, 1, 0]) == pytest.approx(
            0.0, abs=1e-9
        )

    def test_separable_flag_and_cap(self):
        r2, flags = mcfadden_pseudo_r2([-1, 1, -1, 1], [0, 1, 0, 1], return_flags=True)
        assert flags["separable"] is True
        assert abs(flags["slope"]) <= 30.0
        assert r2 > 0.99

    def test_matches_newton_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(15):
            n = int(rng.integers(10, 80))
            x = rng.normal(size=n)
            y = (rng.random(n) < 1 / (1 + np.exp(-(0.3 + 0.8 * x)))).astype(int)
            if y.min() == y.max():
                continue
            xs = (x - x.mean()) / x.std()
            if xs[y == 0].max() < xs[y == 1].min() or xs[y == 1].max() < xs[y == 0].min():
                continue  # oracle diverges on separable draws
            mine = mcfadden_pseudo_r2(x, y)
            theirs = _newton_r2(x, y)
            assert mine == pytest.approx(theirs, abs=1e-8)

    def test_nonnegative_always(self):
        rng = np.random.default_rng(33)
        for _ in range(30):
            n = int(rng.integers(4, 50))
            x = rng.normal(size=n)
            y = rng.integers(0, 2, size=n)
            if y.min() == y.max() or x.min() == x.max():
                continue
            assert mcfadden_pseudo_r2(x, y) >= 0.0


def _newton_r2(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xs = (x - x.mean()) / x.std()
    design = np.column_stack([np.ones(len(xs)), xs])
    w = np.zeros(2)
    for _ in range(500):
        z = design @ w
        p = 1.0 / (1.0 + np.exp(-z))
        grad = design.T @ (p - y)
        hess = design.T @ (design * (p * (1 - p))[:, None]) + 1e-12 * np.eye(2)
        step = np.linalg.solve(hess, grad)
        w -= step
        if np.abs(step).max() < 1e-14:
            break
    z = design @ w
    ll = float(np.sum(y * z - np.logaddexp(0.0, z)))
    n1 = y.sum()
    n = len(y)
    p0 = n1 / n
    ll0 = n1 * math.log(p0) + (n - n1) * math.log(1 - p0)
    return 1.0 - ll / ll0

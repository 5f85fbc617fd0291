import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from talkgrade.corpus import NUM_CATEGORIES
from talkgrade.debias import (
    DebiasError,
    correlation_report,
    median_binarize,
    pearson,
    scale_ratings,
    scaled_matrix,
)

from conftest import make_talk, random_counts

counts_strategy = st.lists(
    st.integers(min_value=0, max_value=5000), min_size=NUM_CATEGORIES, max_size=NUM_CATEGORIES
).filter(lambda c: sum(c) > 0)


class TestScaleRatings:
    def test_uniform_counts(self):
        out = scale_ratings([3] * NUM_CATEGORIES)
        np.testing.assert_allclose(out, np.full(NUM_CATEGORIES, 1.0 / 14.0), rtol=0, atol=0)

    def test_single_category_mass(self):
        out = scale_ratings([5] + [0] * 13)
        np.testing.assert_array_equal(out, [1.0] + [0.0] * 13)

    def test_all_zero_rejected(self):
        with pytest.raises(DebiasError, match="no ratings"):
            scale_ratings([0] * NUM_CATEGORIES)

    @settings(max_examples=100, deadline=None)
    @given(counts_strategy, st.integers(min_value=1, max_value=100))
    def test_integer_scale_invariance_exact(self, counts, k):
        base = scale_ratings(counts)
        scaled = scale_ratings([k * c for c in counts])
        np.testing.assert_array_equal(base, scaled)

    @settings(max_examples=100, deadline=None)
    @given(counts_strategy)
    def test_sums_to_one(self, counts):
        assert abs(scale_ratings(counts).sum() - 1.0) <= 1e-9


class TestMedianBinarize:
    def test_odd_column_strict_threshold(self):
        column = np.array([[0.1], [0.2], [0.3]])
        labels, thresholds = median_binarize(column, [0, 1, 2])
        assert thresholds[0] == pytest.approx(0.2)
        np.testing.assert_array_equal(labels[:, 0], [0, 0, 1])

    def test_constant_column_all_zero(self):
        column = np.full((5, 2), 0.4)
        labels, _ = median_binarize(column, range(5))
        assert labels.sum() == 0

    def test_at_most_half_ones_at_odd_length(self):
        rng = np.random.default_rng(0)
        matrix = rng.random((101, NUM_CATEGORIES))
        labels, _ = median_binarize(matrix, range(101))
        # independent tally: count entries strictly above the sorted middle
        for j in range(NUM_CATEGORIES):
            col = sorted(matrix[:, j])
            middle = col[50]
            expected = sum(1 for v in matrix[:, j] if v > middle)
            assert labels[:, j].sum() == expected
            assert labels[:, j].sum() <= 50

    def test_thresholds_fit_on_training_rows_only(self):
        values = np.zeros((4, NUM_CATEGORIES))
        values[:, 0] = [0.1, 0.2, 0.3, 100.0]
        labels, thresholds = median_binarize(values, [0, 1, 2])
        assert thresholds[0] == pytest.approx(0.2)
        assert labels[3, 0] == 1  # held-out row judged against the training median

    def test_even_length_median_is_mean_of_central_pair(self):
        values = np.zeros((4, NUM_CATEGORIES))
        values[:, 0] = [1.0, 2.0, 4.0, 8.0]
        _, thresholds = median_binarize(values, [0, 1, 2, 3])
        assert thresholds[0] == pytest.approx(3.0)

    def test_label_invariance_under_per_talk_scaling(self):
        rng = np.random.default_rng(1)
        counts = rng.integers(1, 50, size=(30, NUM_CATEGORIES))
        talks = [make_talk(talk_id=str(i), counts=c.tolist()) for i, c in enumerate(counts)]
        scaled = scaled_matrix(talks)
        boosted = [
            make_talk(talk_id=str(i), counts=(c * rng.integers(1, 9)).tolist())
            for i, c in enumerate(counts)
        ]
        scaled_boosted = scaled_matrix(boosted)
        fit = range(20)
        labels_a, _ = median_binarize(scaled, fit)
        labels_b, _ = median_binarize(scaled_boosted, fit)
        np.testing.assert_array_equal(labels_a, labels_b)


class TestPearson:
    def test_perfect_correlation(self):
        x = [1.0, 2.0, 5.0, 9.0]
        assert pearson(x, x) == pytest.approx(1.0)

    def test_perfect_anticorrelation(self):
        x = np.array([1.0, 2.0, 5.0, 9.0])
        assert pearson(x, -x) == pytest.approx(-1.0)

    def test_hand_computed_value(self):
        # direct evaluation of the closed form: cov / (sd_x * sd_y)
        x = [1.0, 2.0, 3.0, 4.0]
        y = [1.0, 3.0, 2.0, 5.0]
        mx, my = 2.5, 2.75
        cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
        sx = math.sqrt(sum((a - mx) ** 2 for a in x))
        sy = math.sqrt(sum((b - my) ** 2 for b in y))
        expected = cov / (sx * sy)
        assert expected == pytest.approx(5.5 / math.sqrt(5.0 * 8.75))
        assert pearson(x, y) == pytest.approx(expected, abs=1e-12)

    def test_degenerate_series_rejected(self):
        with pytest.raises(DebiasError, match="degenerate series"):
            pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_length_mismatch_rejected(self):
        with pytest.raises(DebiasError, match="shapes differ"):
            pearson([1.0, 2.0], [1.0, 2.0, 3.0])

    def test_too_short_rejected(self):
        with pytest.raises(DebiasError, match="at least 2"):
            pearson([1.0], [2.0])


def synthetic_biased_talks(n=200, seed=17):
    """Counts proportional to views times a stable per-category fraction."""
    rng = np.random.default_rng(seed)
    base = rng.dirichlet(np.full(NUM_CATEGORIES, 3.0))
    talks = []
    for i in range(n):
        f = np.clip(base + rng.normal(0, 0.01, NUM_CATEGORIES), 1e-4, None)
        f = f / f.sum()
        views = float(rng.lognormal(10.0, 1.0))
        counts = [max(0, int(round(fi * views * 0.1))) for fi in f]
        if sum(counts) == 0:
            counts[0] = 1
        talks.append(
            make_talk(
                talk_id=f"s{i}",
                counts=counts,
                views=int(views),
                age_days=int(rng.integers(100, 3000)),
            )
        )
    return talks


class TestCorrelationReport:
    def test_scaling_collapses_view_correlation(self):
        report = correlation_report(synthetic_biased_talks())
        raw_mean = float(np.mean(np.abs(report.raw_views)))
        scaled_mean = float(np.mean(np.abs(report.scaled_views)))
        assert raw_mean > 0.5
        assert scaled_mean < 0.15
        assert scaled_mean < raw_mean / 3

    def test_smoke_on_near_duplicates(self):
        rng = np.random.default_rng(2)
        talks = []
        for i in range(10):
            counts = (np.array([5] * NUM_CATEGORIES) + rng.integers(0, 3, NUM_CATEGORIES)).tolist()
            talks.append(
                make_talk(talk_id=str(i), counts=counts, views=1000 + i, age_days=300 + 2 * i)
            )
        report = correlation_report(talks)
        assert report.raw_views.shape == (NUM_CATEGORIES,)

    def test_constant_views_surfaces_degenerate_series(self):
        talks = [
            make_talk(talk_id=str(i), counts=random_counts(np.random.default_rng(i)), views=777)
            for i in range(5)
        ]
        with pytest.raises(DebiasError, match="vs views: degenerate series"):
            correlation_report(talks)

    def test_columns_in_range_and_averages_are_means(self):
        report = correlation_report(synthetic_biased_talks(n=60, seed=4))
        for name in report._COLUMNS:
            column = getattr(report, name)
            assert np.all(column >= -1.0) and np.all(column <= 1.0)
            assert report.averages()[name] == pytest.approx(float(np.mean(column)))

    def test_text_and_csv_render(self):
        report = correlation_report(synthetic_biased_talks(n=40, seed=5))
        text = report.to_text()
        csv = report.to_csv()
        assert "Beautiful" in text and "average" in text
        assert csv.splitlines()[0] == "category,raw_views,scaled_views,raw_age,scaled_age"
        assert len(csv.splitlines()) == NUM_CATEGORIES + 2

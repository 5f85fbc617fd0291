import numpy as np
import pytest

from talkgrade.corpus import NUM_CATEGORIES, RATING_CATEGORIES
from talkgrade.evaluation import (
    CategoryCounts,
    EvalError,
    MetricsRow,
    MetricsTable,
    confusion,
    metrics,
    parse_metrics_csv,
    report,
    report_csv,
    table_csv,
)


def random_pair(seed=0, n=10):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2, (n, NUM_CATEGORIES)), rng.integers(0, 2, (n, NUM_CATEGORIES))


class TestConfusion:
    def test_perfect_predictions(self):
        preds, _ = random_pair(1)
        for c in confusion(preds, preds):
            assert c.fp == 0 and c.fn == 0

    def test_complement_predictions(self):
        preds, _ = random_pair(2)
        for c in confusion(1 - preds, preds):
            assert c.tp == 0 and c.tn == 0

    def test_matches_brute_force_tally(self):
        preds, labels = random_pair(3)
        counts = confusion(preds, labels)
        for j in range(NUM_CATEGORIES):
            tp = fp = tn = fn = 0
            for i in range(preds.shape[0]):
                p, l = preds[i, j], labels[i, j]
                if p == 1 and l == 1:
                    tp += 1
                elif p == 1 and l == 0:
                    fp += 1
                elif p == 0 and l == 0:
                    tn += 1
                else:
                    fn += 1
            assert counts[j] == CategoryCounts(tp=tp, fp=fp, tn=tn, fn=fn)
            assert counts[j].total == preds.shape[0]

    def test_reordering_rows_together_is_invariant(self):
        preds, labels = random_pair(4)
        perm = np.random.default_rng(4).permutation(preds.shape[0])
        assert confusion(preds, labels) == confusion(preds[perm], labels[perm])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(EvalError, match="shape mismatch"):
            confusion(np.zeros((3, 14)), np.zeros((4, 14)))

    def test_non_binary_rejected(self):
        bad = np.full((2, NUM_CATEGORIES), 2)
        with pytest.raises(EvalError, match="binary"):
            confusion(bad, np.zeros((2, NUM_CATEGORIES)))


class TestMetrics:
    def test_perfect_classifier(self):
        counts = [CategoryCounts(tp=5, fp=0, tn=5, fn=0)] * NUM_CATEGORIES
        table = metrics(counts)
        for row in table.rows:
            assert row == MetricsRow(1.0, 1.0, 1.0, 1.0, False)

    def test_half_precision_closed_form(self):
        counts = [CategoryCounts(tp=5, fp=5, tn=0, fn=0)] * NUM_CATEGORIES
        row = metrics(counts).rows[0]
        assert row.precision == pytest.approx(0.5)
        assert row.recall == pytest.approx(1.0)
        assert row.f_score == pytest.approx(2.0 / 3.0)
        assert row.accuracy == pytest.approx(0.5)

    def test_zero_denominator_flags_degenerate(self):
        counts = [CategoryCounts(tp=0, fp=0, tn=10, fn=0)] * NUM_CATEGORIES
        table = metrics(counts)
        assert table.rows[0].precision == 0.0
        assert table.rows[0].degenerate
        assert table.average().degenerate

    def test_macro_average_recomputed_as_column_means(self):
        rng = np.random.default_rng(9)
        counts = [
            CategoryCounts(*(int(v) for v in rng.integers(1, 20, 4)))
            for _ in range(NUM_CATEGORIES)
        ]
        table = metrics(counts)
        avg = table.average()
        assert avg.precision == pytest.approx(np.mean([r.precision for r in table.rows]))
        assert avg.f_score == pytest.approx(np.mean([r.f_score for r in table.rows]))

    def test_f_between_min_and_max_of_p_and_r(self):
        rng = np.random.default_rng(10)
        counts = [
            CategoryCounts(*(int(v) for v in rng.integers(1, 30, 4)))
            for _ in range(NUM_CATEGORIES)
        ]
        for row in metrics(counts).rows:
            assert min(row.precision, row.recall) <= row.f_score <= max(row.precision, row.recall)

    def test_wrong_row_count_rejected(self):
        with pytest.raises(EvalError, match="count rows"):
            metrics([CategoryCounts(1, 1, 1, 1)])


def uniform_table(value: float, recall_overrides=None) -> MetricsTable:
    rows = []
    for i in range(NUM_CATEGORIES):
        recall = value
        if recall_overrides and RATING_CATEGORIES[i] in recall_overrides:
            recall = recall_overrides[RATING_CATEGORIES[i]]
        rows.append(MetricsRow(value, recall, value, value))
    return MetricsTable(categories=RATING_CATEGORIES, rows=tuple(rows))


class TestReport:
    def test_five_models_in_canonical_order(self):
        tables = {
            "lasso": uniform_table(0.69),
            "svm": uniform_table(0.69),
            "dep-tree-unscaled": uniform_table(0.67),
            "word-seq": uniform_table(0.76),
            "dep-tree": uniform_table(0.77),
        }
        text = report(tables)
        lines = text.splitlines()
        names = [ln.split("  ")[0].strip() for ln in lines[3:8]]
        assert names == ["Word Seq", "Dep. Tree", "Dep. Tree (Unscaled)", "LinearSVM", "LASSO"]

    def test_renders_externally_supplied_operating_point(self):
        # report-format fixture: headline numbers arrive from outside and
        # must surface verbatim in both table sections
        table = uniform_table(0.77, recall_overrides={"Beautiful": 0.91, "Obnoxious": 0.64})
        text = report({"dep-tree": table})
        assert "Dep. Tree" in text
        assert "0.91" in text and "0.64" in text
        assert "Beautiful" in text and "Obnoxious" in text

    def test_single_table_report(self):
        text = report({"svm": uniform_table(0.5)})
        assert "LinearSVM" in text
        assert "Per-category recall" in text

    def test_csv_layout_and_roundtrip(self):
        tables = {"word-seq": uniform_table(0.76), "svm": uniform_table(0.69)}
        csv = report_csv(tables)
        lines = csv.splitlines()
        assert lines[0] == "model,category,precision,recall,f_score,accuracy"
        assert len(lines) == 1 + 2 * (NUM_CATEGORIES + 1)
        parsed = parse_metrics_csv(csv)
        assert set(parsed) == {"word-seq", "svm"}
        assert parsed["word-seq"].rows[0].recall == pytest.approx(0.76)

    def test_golden_report_layout(self):
        table = uniform_table(0.5)
        got = table_csv("svm", table).splitlines()
        assert got[1] == "svm,Beautiful,0.500000,0.500000,0.500000,0.500000"
        assert got[-1] == "svm,average,0.500000,0.500000,0.500000,0.500000"

    def test_empty_report_rejected(self):
        with pytest.raises(EvalError, match="no metrics"):
            report({})

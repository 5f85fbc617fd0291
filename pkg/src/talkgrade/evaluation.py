"""Per-category confusion counts, metrics, and the combined model report."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import RATING_CATEGORIES
from .errors import TalkgradeError

MODEL_ORDER = ("word-seq", "dep-tree", "dep-tree-unscaled", "svm", "lasso")
MODEL_DISPLAY = {
    "word-seq": "Word Seq",
    "dep-tree": "Dep. Tree",
    "dep-tree-unscaled": "Dep. Tree (Unscaled)",
    "svm": "LinearSVM",
    "lasso": "LASSO",
}


class EvalError(TalkgradeError):
    pass


@dataclass(frozen=True)
class CategoryCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(preds, labels) -> list[CategoryCounts]:
    """Per-category confusion counts with label 1 as the positive class."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape or preds.ndim != 2:
        raise EvalError(f"shape mismatch: preds {preds.shape} vs labels {labels.shape}")
    for name, arr in (("preds", preds), ("labels", labels)):
        if not np.all(np.isin(arr, (0, 1))):
            raise EvalError(f"{name} must be binary")
    counts = []
    for j in range(preds.shape[1]):
        p = preds[:, j] == 1
        l = labels[:, j] == 1
        counts.append(
            CategoryCounts(
                tp=int(np.sum(p & l)),
                fp=int(np.sum(p & ~l)),
                tn=int(np.sum(~p & ~l)),
                fn=int(np.sum(~p & l)),
            )
        )
    return counts


@dataclass(frozen=True)
class MetricsRow:
    precision: float
    recall: float
    f_score: float
    accuracy: float
    degenerate: bool = False  # some denominator was zero; values forced to 0.0


def _row(c: CategoryCounts) -> MetricsRow:
    degenerate = False
    if c.tp + c.fp > 0:
        precision = c.tp / (c.tp + c.fp)
    else:
        precision, degenerate = 0.0, True
    if c.tp + c.fn > 0:
        recall = c.tp / (c.tp + c.fn)
    else:
        recall, degenerate = 0.0, True
    if precision + recall > 0:
        f_score = 2 * precision * recall / (precision + recall)
    else:
        f_score, degenerate = 0.0, True
    if c.total > 0:
        accuracy = (c.tp + c.tn) / c.total
    else:
        accuracy, degenerate = 0.0, True
    return MetricsRow(precision, recall, f_score, accuracy, degenerate)


@dataclass
class MetricsTable:
    categories: tuple[str, ...]
    rows: tuple[MetricsRow, ...]

    def average(self) -> MetricsRow:
        """Macro average: the plain mean of each metric over the categories."""
        return MetricsRow(
            precision=float(np.mean([r.precision for r in self.rows])),
            recall=float(np.mean([r.recall for r in self.rows])),
            f_score=float(np.mean([r.f_score for r in self.rows])),
            accuracy=float(np.mean([r.accuracy for r in self.rows])),
            degenerate=any(r.degenerate for r in self.rows),
        )


def metrics(counts, categories=RATING_CATEGORIES) -> MetricsTable:
    """Precision, recall, F-score, and accuracy per category.

    A zero denominator yields 0.0 and flags the row as degenerate rather
    than failing the whole evaluation.
    """
    counts = list(counts)
    if len(counts) != len(categories):
        raise EvalError(f"got {len(counts)} count rows for {len(categories)} categories")
    return MetricsTable(categories=tuple(categories), rows=tuple(_row(c) for c in counts))


def _ordered(tables: dict) -> list:
    known = [k for k in MODEL_ORDER if k in tables]
    extra = sorted(k for k in tables if k not in MODEL_ORDER)
    return known + extra


def report(tables: dict[str, MetricsTable]) -> str:
    """Aligned text: an average-metrics table plus a per-category recall table."""
    if not tables:
        raise EvalError("no metrics tables to report")
    order = _ordered(tables)
    lines = ["Average metrics over rating categories", ""]
    lines.append(f"{'model':<22}{'f_score':>9}{'precision':>11}{'recall':>8}{'accuracy':>10}")
    for kind in order:
        avg = tables[kind].average()
        name = MODEL_DISPLAY.get(kind, kind)
        flag = "*" if avg.degenerate else ""
        lines.append(
            f"{name:<22}{avg.f_score:>9.2f}{avg.precision:>11.2f}"
            f"{avg.recall:>8.2f}{avg.accuracy:>10.2f}{flag}"
        )
    lines.append("")
    lines.append("Per-category recall")
    lines.append("")
    header = f"{'category':<14}" + "".join(
        f"{MODEL_DISPLAY.get(kind, kind):>22}" for kind in order
    )
    lines.append(header)
    categories = tables[order[0]].categories
    for i, cat in enumerate(categories):
        row = f"{cat:<14}"
        for kind in order:
            r = tables[kind].rows[i]
            row += f"{r.recall:>22.2f}"
        lines.append(row)
    avg_row = f"{'average':<14}"
    for kind in order:
        avg_row += f"{tables[kind].average().recall:>22.2f}"
    lines.append(avg_row)
    return "\n".join(lines) + "\n"


def report_csv(tables: dict[str, MetricsTable]) -> str:
    """CSV rows: model,category,precision,recall,f_score,accuracy."""
    if not tables:
        raise EvalError("no metrics tables to report")
    lines = ["model,category,precision,recall,f_score,accuracy"]
    for kind in _ordered(tables):
        table = tables[kind]
        for cat, r in zip(table.categories, table.rows):
            lines.append(
                f"{kind},{cat},{r.precision:.6f},{r.recall:.6f},{r.f_score:.6f},{r.accuracy:.6f}"
            )
        avg = table.average()
        lines.append(
            f"{kind},average,{avg.precision:.6f},{avg.recall:.6f},{avg.f_score:.6f},{avg.accuracy:.6f}"
        )
    return "\n".join(lines) + "\n"


def table_csv(kind: str, table: MetricsTable) -> str:
    return report_csv({kind: table})


def parse_metrics_csv(text: str) -> dict[str, MetricsTable]:
    """Rebuild tables from report_csv output (degenerate flags are not stored)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "model,category,precision,recall,f_score,accuracy":
        raise EvalError("unrecognized metrics CSV header")
    rows: dict[str, list[tuple[str, MetricsRow]]] = {}
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 6:
            raise EvalError(f"bad metrics CSV row: {ln}")
        kind, cat = parts[0], parts[1]
        if cat == "average":
            continue
        p, r, f, a = (float(v) for v in parts[2:])
        rows.setdefault(kind, []).append((cat, MetricsRow(p, r, f, a)))
    return {
        kind: MetricsTable(
            categories=tuple(c for c, _ in pairs), rows=tuple(r for _, r in pairs)
        )
        for kind, pairs in rows.items()
    }

"""Rating-count debiasing and the correlation audit.

Raw per-category rating counts grow with a talk's popularity: more viewers
means more of every rating, regardless of content. Dividing each count by
the talk's total count cancels that shared popularity factor exactly, and
with it the influence of anything that only drives popularity (age on the
site, publicity, speaker reputation). Thresholding the scaled values at
per-category training-set medians then yields near-balanced binary labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import NUM_CATEGORIES, RATING_CATEGORIES, Talk
from .errors import TalkgradeError


class DebiasError(TalkgradeError):
    pass


def scale_ratings(counts) -> np.ndarray:
    """Counts divided by their sum.

    Exactly invariant to scaling all counts by a common positive integer:
    the shared factor cancels in the quotient, so k*c and c produce
    bit-identical output.
    """
    arr = np.asarray(counts, dtype=np.float64)
    if arr.shape != (NUM_CATEGORIES,):
        raise DebiasError(f"expected {NUM_CATEGORIES} rating counts, got shape {arr.shape}")
    if np.any(arr < 0):
        raise DebiasError("negative rating count")
    total = float(arr.sum())
    if total == 0:
        raise DebiasError("no ratings")
    return arr / total


def raw_matrix(talks: list[Talk]) -> np.ndarray:
    return np.array([t.rating_counts for t in talks], dtype=np.float64)


def scaled_matrix(talks: list[Talk]) -> np.ndarray:
    return np.array([scale_ratings(t.rating_counts) for t in talks])


def median_binarize(values: np.ndarray, fit_indices) -> tuple[np.ndarray, np.ndarray]:
    """Binarize each column at its median over the fit rows only.

    Returns (labels, thresholds) where labels[i, j] = 1 iff
    values[i, j] is strictly greater than the column-j median of the fit
    rows. Thresholds are returned so held-out data reuses the fit medians.
    Ties go to class 0; an even-length fit uses the mean of the two
    central values.
    """
    values = np.asarray(values, dtype=np.float64)
    fit_indices = np.asarray(fit_indices, dtype=np.intp)
    if fit_indices.size == 0:
        raise DebiasError("fit_indices must be non-empty")
    thresholds = np.median(values[fit_indices], axis=0)
    labels = (values > thresholds).astype(np.int64)
    return labels, thresholds


def pearson(x, y) -> float:
    """Pearson product-moment correlation of two equal-length series."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise DebiasError(f"series shapes differ: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise DebiasError("need at least 2 points")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt(np.sum(xc * xc)))
    sy = float(np.sqrt(np.sum(yc * yc)))
    if sx == 0.0 or sy == 0.0:
        raise DebiasError("degenerate series")
    r = float(np.sum(xc * yc) / (sx * sy))
    return min(1.0, max(-1.0, r))


@dataclass
class CorrelationReport:
    """Per-category correlations of raw and scaled ratings with views and age."""

    categories: tuple[str, ...]
    raw_views: np.ndarray
    scaled_views: np.ndarray
    raw_age: np.ndarray
    scaled_age: np.ndarray

    _COLUMNS = ("raw_views", "scaled_views", "raw_age", "scaled_age")

    def averages(self) -> dict[str, float]:
        return {name: float(np.mean(getattr(self, name))) for name in self._COLUMNS}

    def to_text(self) -> str:
        lines = [
            f"{'category':<14}{'raw~views':>11}{'scaled~views':>14}{'raw~age':>9}{'scaled~age':>12}"
        ]
        columns = [getattr(self, name) for name in self._COLUMNS]
        for i, cat in enumerate(self.categories):
            lines.append(
                f"{cat:<14}{columns[0][i]:>11.3f}{columns[1][i]:>14.3f}"
                f"{columns[2][i]:>9.3f}{columns[3][i]:>12.3f}"
            )
        avg = self.averages()
        lines.append(
            f"{'average':<14}{avg['raw_views']:>11.3f}{avg['scaled_views']:>14.3f}"
            f"{avg['raw_age']:>9.3f}{avg['scaled_age']:>12.3f}"
        )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["category,raw_views,scaled_views,raw_age,scaled_age"]
        columns = [getattr(self, name) for name in self._COLUMNS]
        for i, cat in enumerate(self.categories):
            lines.append(cat + "," + ",".join(f"{col[i]:.6f}" for col in columns))
        avg = self.averages()
        lines.append("average," + ",".join(f"{avg[name]:.6f}" for name in self._COLUMNS))
        return "\n".join(lines) + "\n"


def correlation_report(talks: list[Talk]) -> CorrelationReport:
    """Correlate every category's raw and scaled ratings against views and age."""
    if len(talks) < 2:
        raise DebiasError("need at least 2 talks")
    raw = raw_matrix(talks)
    scaled = scaled_matrix(talks)
    views = np.array([t.total_views for t in talks], dtype=np.float64)
    age = np.array([t.age_days for t in talks], dtype=np.float64)
    columns = {name: np.zeros(NUM_CATEGORIES) for name in CorrelationReport._COLUMNS}
    specs = [
        ("raw_views", raw, views, "views"),
        ("scaled_views", scaled, views, "views"),
        ("raw_age", raw, age, "age"),
        ("scaled_age", scaled, age, "age"),
    ]
    for name, matrix, series, series_name in specs:
        for i, cat in enumerate(RATING_CATEGORIES):
            try:
                columns[name][i] = pearson(matrix[:, i], series)
            except DebiasError as exc:
                raise DebiasError(f"{cat} vs {series_name}: {exc}") from exc
    return CorrelationReport(categories=RATING_CATEGORIES, **columns)

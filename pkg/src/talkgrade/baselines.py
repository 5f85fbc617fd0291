"""Lexicon-count features with linear SVM and L1-logistic per-category classifiers.

Each rating category gets its own independent binary classifier over a
single shared feature vector: for every lexicon category, the fraction of
transcript tokens matching any of its patterns. Patterns are literal tokens
or prefixes written with a trailing '*'.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .corpus import Talk
from .errors import TalkgradeError


class BaselineError(TalkgradeError):
    pass


class Lexicon:
    """Ordered word categories, each holding literal and prefix patterns."""

    def __init__(self, entries: dict[str, list[str]]):
        if not entries:
            raise BaselineError("lexicon has no categories")
        self.categories = tuple(entries)
        self.patterns: dict[str, tuple[str, ...]] = {}
        self._literals: dict[str, frozenset[str]] = {}
        self._prefixes: dict[str, tuple[str, ...]] = {}
        for category, patterns in entries.items():
            patterns = [p.lower() for p in patterns]
            if not patterns:
                raise BaselineError(f"lexicon category '{category}' has no patterns")
            literals = []
            prefixes = []
            for p in patterns:
                if "*" in p[:-1] or p == "*":
                    raise BaselineError(f"bad pattern '{p}' in category '{category}'")
                if p.endswith("*"):
                    prefixes.append(p[:-1])
                else:
                    literals.append(p)
            self.patterns[category] = tuple(patterns)
            self._literals[category] = frozenset(literals)
            self._prefixes[category] = tuple(prefixes)

    def __len__(self) -> int:
        return len(self.categories)

    def matches(self, category: str, token: str) -> bool:
        return token in self._literals[category] or any(
            token.startswith(p) for p in self._prefixes[category]
        )

    @classmethod
    def parse(cls, text: str) -> "Lexicon":
        """Parse 'category: word1 word2 word3*' lines; '#' starts a comment."""
        entries: dict[str, list[str]] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            category, sep, patterns = stripped.partition(":")
            category = category.strip()
            if not sep or not category:
                raise BaselineError(f"lexicon line {lineno}: expected 'category: patterns'")
            if category in entries:
                raise BaselineError(f"lexicon line {lineno}: duplicate category '{category}'")
            entries[category] = patterns.split()
        return cls(entries)

    @classmethod
    def load(cls, path) -> "Lexicon":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())


def extract_features(talk: Talk, lexicon: Lexicon) -> np.ndarray:
    """Per-category fraction of tokens matching any pattern of the category.

    A token may count toward several categories; every value lies in [0, 1]
    and is invariant to repeating the transcript.
    """
    tokens = talk.tokens()
    if not tokens:
        raise BaselineError(f"talk '{talk.id}' has no tokens")
    values = np.zeros(len(lexicon.categories))
    for j, category in enumerate(lexicon.categories):
        values[j] = sum(1 for tok in tokens if lexicon.matches(category, tok))
    return values / len(tokens)


def extract_matrix(talks, lexicon: Lexicon) -> np.ndarray:
    return np.array([extract_features(t, lexicon) for t in talks])


@dataclass
class LinearModel:
    w: np.ndarray
    b: float
    kind: str  # "svm" decides with w'x - b, "lasso" with w'x + b
    objective: float

    def decision(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        score = float(x @ self.w)
        return score - self.b if self.kind == "svm" else score + self.b

    def predict(self, x) -> int:
        return 1 if self.decision(x) >= 0 else 0


def predict_linear(w, b: float, x, kind: str = "svm") -> int:
    """Binary decision: 1 iff w'x - b >= 0 (svm) or w'x + b >= 0 (lasso)."""
    return LinearModel(np.asarray(w, dtype=np.float64), b, kind, objective=np.nan).predict(x)


def _check_training_inputs(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise BaselineError(f"bad training shapes: X {X.shape}, y {y.shape}")
    if X.shape[0] < 2:
        raise BaselineError("need at least 2 training points")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise BaselineError("labels must be +1 or -1")
    if len(np.unique(y)) < 2:
        raise BaselineError("single-class input")
    return X, y


def to_signed(labels) -> np.ndarray:
    """Map {0, 1} labels to {-1, +1}."""
    labels = np.asarray(labels)
    return (2 * labels - 1).astype(np.float64)


def svm_objective(w, b: float, X, y, C: float) -> float:
    margins = y * (X @ w - b)
    return float(0.5 * w @ w + C * np.sum(np.maximum(0.0, 1.0 - margins)))


def train_svm(X, y, C: float, iters: int = 5000) -> LinearModel:
    """Subgradient descent on the hinge form of the margin objective.

    Minimizes 0.5 ||w||^2 + C sum_i max(0, 1 - y_i (w'x_i - b)) with the
    1/t step size suited to the strongly convex regularizer, returning the
    best iterate by objective value.
    """
    X, y = _check_training_inputs(X, y)
    if C < 0:
        raise BaselineError("C must be non-negative")
    w = np.zeros(X.shape[1])
    b = 0.0
    best = (svm_objective(w, b, X, y, C), w.copy(), b)
    for t in range(iters):
        margins = y * (X @ w - b)
        viol = margins < 1.0
        gw = w - C * (X[viol].T @ y[viol])
        gb = C * float(np.sum(y[viol]))
        lr = 1.0 / (t + 1.0)
        w -= lr * gw
        b -= lr * gb
        obj = svm_objective(w, b, X, y, C)
        if obj < best[0]:
            best = (obj, w.copy(), b)
    return LinearModel(w=best[1], b=best[2], kind="svm", objective=best[0])


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))


def lasso_objective(w, b: float, X, y, C: float) -> float:
    z = X @ w + b
    return float(np.sum(np.abs(w)) + C * np.sum(np.logaddexp(0.0, -y * z)))


def train_lasso(X, y, C: float, iters: int = 5000) -> LinearModel:
    """Proximal gradient on the L1-regularized logistic objective.

    Minimizes ||w||_1 + C sum_i log(1 + exp(-y_i (w'x_i + b))): a gradient
    step on the smooth log-loss, then soft-thresholding on w (b stays
    unpenalized). Step size is 1/L for the smooth part's curvature bound,
    and the best iterate by objective is returned. As C -> 0 the threshold
    drives every weight to exactly zero.
    """
    X, y = _check_training_inputs(X, y)
    if C < 0:
        raise BaselineError("C must be non-negative")
    if C == 0.0:
        return LinearModel(w=np.zeros(X.shape[1]), b=0.0, kind="lasso", objective=0.0)
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    lipschitz = 0.25 * C * float(np.linalg.eigvalsh(Xa.T @ Xa)[-1])
    step = 1.0 / max(lipschitz, 1e-12)
    w = np.zeros(X.shape[1])
    b = 0.0
    best = (lasso_objective(w, b, X, y, C), w.copy(), b)
    for _ in range(iters):
        z = X @ w + b
        s = _stable_sigmoid(-y * z)
        gw = -C * (X.T @ (y * s))
        gb = -C * float(np.sum(y * s))
        w = _soft_threshold(w - step * gw, step)
        b = b - step * gb
        obj = lasso_objective(w, b, X, y, C)
        if obj < best[0]:
            best = (obj, w.copy(), b)
    return LinearModel(w=best[1], b=best[2], kind="lasso", objective=best[0])


def _soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def thread_cap(default: int = 4) -> int:
    """Parallelism limit from TALKGRADE_THREADS, else a small default."""
    value = os.environ.get("TALKGRADE_THREADS")
    if value is None:
        return max(1, min(default, os.cpu_count() or 1))
    try:
        cap = int(value)
    except ValueError as exc:
        raise BaselineError(f"TALKGRADE_THREADS must be an integer, got '{value}'") from exc
    if cap < 1:
        raise BaselineError("TALKGRADE_THREADS must be at least 1")
    return cap


def train_per_category(X, labels, kind: str, C: float, iters: int = 5000) -> list[LinearModel]:
    """One independent classifier per label column, trained in parallel.

    Results come back in column order regardless of scheduling, so output
    is deterministic.
    """
    labels = np.asarray(labels)
    trainer = {"svm": train_svm, "lasso": train_lasso}.get(kind)
    if trainer is None:
        raise BaselineError(f"unknown baseline kind '{kind}'")
    columns = [to_signed(labels[:, j]) for j in range(labels.shape[1])]
    with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
        return list(pool.map(lambda y: trainer(X, y, C, iters=iters), columns))


def predict_matrix(models: list[LinearModel], X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.array([[m.predict(x) for m in models] for x in X], dtype=np.int64)


def select_c(kind: str, X_train, y_train, X_dev, y_dev, grid=(0.01, 0.1, 1.0, 10.0), iters: int = 5000):
    """Pick C from a grid by development accuracy; ties prefer the smaller C."""
    trainer = {"svm": train_svm, "lasso": train_lasso}[kind]
    best = None
    for C in grid:
        model = trainer(X_train, y_train, C, iters=iters)
        acc = float(np.mean([model.predict(x) == (1 if label > 0 else 0)
                             for x, label in zip(X_dev, y_dev)]))
        if best is None or acc > best[0]:
            best = (acc, C, model)
    return best[2], best[1]

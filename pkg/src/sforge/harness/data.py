"""Classification data for the logistic-regression experiment.

Real data is read from LIBSVM sparse text or a dense CSV whose last column
is the label.  A synthetic generator with known weights stands in when no
file is supplied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from sforge.targets import LogisticPosterior

TRAIN_FRACTION = 0.7
_NEGATIVE_CODES = (-1.0, 0.0, 2.0)


class DataError(ValueError):
    pass


@dataclass
class Split:
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray


def split_data(features, labels, seed: int = 0, train_fraction: float = TRAIN_FRACTION) -> Split:
    """Seeded shuffle, first ``floor(train_fraction * n)`` rows for training."""
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    n = X.shape[0]
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(math.floor(train_fraction * n))
    tr, te = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    return Split(X[tr], y[tr], X[te], y[te], tr, te)


def map_labels(raw) -> np.ndarray:
    """Map class codes to +-1: label ``1`` is positive, one of -1/0/2 is negative."""
    raw = np.asarray(raw, dtype=float)
    values = set(np.unique(raw).tolist())
    bad = sorted(values - {1.0, *_NEGATIVE_CODES})
    if bad:
        raise DataError(f"unknown label values {bad}")
    negatives = values & set(_NEGATIVE_CODES)
    if len(negatives) > 1:
        raise DataError(f"ambiguous negative class: saw labels {sorted(values)}")
    return np.where(raw == 1.0, 1.0, -1.0)


def _parse_libsvm(lines, dim: int | None):
    rows, labels, errors = [], [], []
    max_index = 0
    for lineno, line in lines:
        parts = line.split()
        try:
            label = float(parts[0])
            feats = {}
            for tok in parts[1:]:
                if tok.startswith("#"):
                    break
                key, val = tok.split(":", 1)
                idx = int(key)
                if idx < 1:
                    raise ValueError("feature indices start at 1")
                feats[idx - 1] = float(val)
        except (ValueError, IndexError) as exc:
            errors.append(f"line {lineno}: {exc}")
            continue
        if feats:
            max_index = max(max_index, max(feats) + 1)
        rows.append(feats)
        labels.append(label)
    if errors:
        raise DataError("malformed rows:\n" + "\n".join(errors[:20]))
    D = dim if dim is not None else max_index
    if max_index > D:
        raise DataError(f"feature index {max_index} exceeds declared dimension {D}")
    X = np.zeros((len(rows), D))
    for i, feats in enumerate(rows):
        for j, v in feats.items():
            X[i, j] = v
    return X, np.array(labels)


def _parse_csv(lines):
    rows, errors = [], []
    width = None
    for k, (lineno, line) in enumerate(lines):
        cells = [c.strip() for c in line.split(",")]
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            if k == 0:
                continue  # header
            errors.append(f"line {lineno}: non-numeric value")
            continue
        if width is None:
            width = len(vals)
        if len(vals) != width or width < 2:
            errors.append(f"line {lineno}: expected {width} columns, got {len(vals)}")
            continue
        if not all(math.isfinite(v) for v in vals):
            errors.append(f"line {lineno}: non-finite value")
            continue
        rows.append(vals)
    if errors:
        raise DataError("malformed rows:\n" + "\n".join(errors[:20]))
    if not rows:
        raise DataError("no data rows")
    A = np.array(rows)
    return A[:, :-1], A[:, -1]


def read_dataset(path, dim: int | None = None):
    """Features and +-1 labels from a LIBSVM or CSV file (format auto-detected)."""
    text = Path(path).read_text()
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty file")
    libsvm = any(":" in ln for _, ln in lines[:50])
    X, raw = _parse_libsvm(lines, dim) if libsvm else _parse_csv(lines)
    if not np.all(np.isfinite(X)):
        raise DataError(f"{path}: non-finite feature values")
    return X, map_labels(raw)


def load_covertype(path, seed: int = 0, dim: int | None = None) -> Split:
    """Read a classification file and split it 70/30 with a seeded shuffle."""
    X, y = read_dataset(path, dim)
    return split_data(X, y, seed)


@dataclass
class SynthDataset:
    features: np.ndarray
    labels: np.ndarray
    w_star: np.ndarray
    seed: int

    def bayes_accuracy(self, n_fresh: int = 100_000) -> float:
        """Accuracy of the true model's decision rule, by Monte Carlo on fresh draws."""
        rng = np.random.default_rng([self.seed, 1])
        A = rng.standard_normal((n_fresh, self.w_star.size))
        p = expit(A @ self.w_star)
        return float(np.mean(np.maximum(p, 1.0 - p)))


def synth_logistic(n: int, dim: int, seed: int = 0, w_star=None) -> SynthDataset:
    """Standard-normal features and labels drawn from a logistic model.

    ``w_star`` defaults to a standard-normal draw from the same seed.
    """
    if n < 1 or dim < 1:
        raise ValueError("n and dim must be positive")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(dim) if w_star is None else np.asarray(w_star, dtype=float)
    if w.shape != (dim,):
        raise ValueError("w_star has the wrong length")
    A = rng.standard_normal((n, dim))
    y = np.where(rng.random(n) < expit(A @ w), 1.0, -1.0)
    return SynthDataset(A, y, w, seed)


def fit_map(post: LogisticPosterior, tol: float = 1e-8, max_iter: int = 1_000_000) -> np.ndarray:
    """MAP weights by plain gradient ascent with the global step ``1/L``.

    ``L`` bounds the Hessian norm (``|A|^2/4 + 1/prior_var``), which makes
    the ascent monotone for this strictly concave objective.
    """
    A = post.features
    L = np.linalg.norm(A, 2) ** 2 / 4.0 + 1.0 / post.prior_var
    w = np.zeros(post.dim)
    for _ in range(max_iter):
        g = post.score(w)
        if np.linalg.norm(g) < tol:
            return w
        w = w + g / L
    raise RuntimeError(f"MAP ascent did not reach gradient norm {tol} in {max_iter} steps")


def accuracy(weights, features, labels) -> float:
    """Test accuracy of the linear rule ``sign(Aw)`` (ties count as +1)."""
    pred = np.where(np.asarray(features) @ np.asarray(weights) >= 0, 1.0, -1.0)
    return float(np.mean(pred == np.asarray(labels)))


def predictive_accuracy(particles, features, labels) -> float:
    """Accuracy of the particle-averaged predictive probability."""
    p = expit(np.asarray(features) @ np.asarray(particles).T).mean(axis=1)
    pred = np.where(p >= 0.5, 1.0, -1.0)
    return float(np.mean(pred == np.asarray(labels)))

"""Cross-validation and metrics: ROC-AUC, AUPRC, accuracy/F1, curve export.

ROC-AUC is the tie-aware rank statistic (the probability a random positive
outscores a random negative, ties counted half), not a trapezoid over
thresholds; AUPRC is average precision with step interpolation over distinct
thresholds. Curve points are still exported for plotting.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .boost import gbdt_fit, gbdt_leaf_encode
from .errors import DataError, NumericError
from .svm import smo_train, svm_decision
from .util import derive_seed, sigmoid

log = logging.getLogger(__name__)


@dataclass
class FoldPlan:
    n_folds: int
    seed: int
    fold_index: np.ndarray  # (n,) int, fold of each sample

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_index == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_index != fold)


def stratified_kfold(labels, n_folds: int = 5, seed: int = 0) -> FoldPlan:
    """Shuffle each class and deal round-robin, so per-fold class counts
    differ from perfect proportionality by at most one sample."""
    y = np.asarray(labels)
    if n_folds < 2:
        raise ValueError("n_folds must be >= 2")
    rng = np.random.default_rng(seed)
    fold_index = np.empty(len(y), dtype=np.int64)
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if idx.size < n_folds:
            raise DataError(
                f"class {cls} has {idx.size} samples, fewer than {n_folds} folds"
            )
        rng.shuffle(idx)
        fold_index[idx] = np.arange(idx.size) % n_folds
    return FoldPlan(n_folds, seed, fold_index)


def _check_binary(labels) -> np.ndarray:
    y = np.asarray(labels)
    y = np.where(y == 1, 1, 0)
    return y


def roc_auc(scores, labels) -> float:
    """Tie-aware rank statistic: mean over positive-negative pairs of
    [score_pos > score_neg] + 0.5 * [tie]."""
    s = np.asarray(scores, dtype=np.float64)
    y = _check_binary(labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise NumericError("roc_auc needs both classes present")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # average 1-based rank
        i = j + 1
    pos_rank_sum = float(ranks[y == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pr_auc(scores, labels) -> float:
    """Average precision: sum of (R_k - R_{k-1}) * P_k over distinct
    descending-score thresholds."""
    s = np.asarray(scores, dtype=np.float64)
    y = _check_binary(labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise NumericError("pr_auc needs at least one positive")
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    ap = 0.0
    prev_recall = 0.0
    tp = 0
    seen = 0
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s_sorted[j + 1] == s_sorted[i]:
            j += 1
        tp += int(y_sorted[i : j + 1].sum())
        seen += j - i + 1
        precision = tp / seen
        recall = tp / n_pos
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return ap


@dataclass
class ThresholdMetrics:
    accuracy: float
    f1: float
    f1_defined: bool = True


def threshold_metrics(scores, labels, threshold: float = 0.5) -> ThresholdMetrics:
    """Confusion-matrix accuracy and F1 at a probability threshold."""
    s = np.asarray(scores, dtype=np.float64)
    y = _check_binary(labels)
    if len(s) == 0:
        raise ValueError("empty score list")
    pred = (s >= threshold).astype(int)
    accuracy = float((pred == y).mean())
    tp = int(((pred == 1) & (y == 1)).sum())
    fp = int(((pred == 1) & (y == 0)).sum())
    fn = int(((pred == 0) & (y == 1)).sum())
    if tp + fp == 0 or tp + fn == 0:
        return ThresholdMetrics(accuracy, 0.0, f1_defined=False)
    f1 = 2.0 * tp / (2.0 * tp + fp + fn)
    return ThresholdMetrics(accuracy, f1, f1_defined=True)


def roc_points(scores, labels) -> list[tuple[float, float]]:
    """(FAR, TAR) at each distinct threshold, descending, with (0,0)/(1,1) ends."""
    s = np.asarray(scores, dtype=np.float64)
    y = _check_binary(labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    order = np.argsort(-s, kind="mergesort")
    y_sorted = y[order]
    s_sorted = s[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s_sorted[j + 1] == s_sorted[i]:
            j += 1
        tp += int(y_sorted[i : j + 1].sum())
        fp += (j - i + 1) - int(y_sorted[i : j + 1].sum())
        points.append((fp / n_neg if n_neg else 0.0, tp / n_pos if n_pos else 0.0))
        i = j + 1
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    return points


def pr_points(scores, labels) -> list[tuple[float, float]]:
    """(recall, precision) at each distinct threshold, descending scores."""
    s = np.asarray(scores, dtype=np.float64)
    y = _check_binary(labels)
    n_pos = int(y.sum())
    order = np.argsort(-s, kind="mergesort")
    y_sorted = y[order]
    s_sorted = s[order]
    points = []
    tp = 0
    seen = 0
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s_sorted[j + 1] == s_sorted[i]:
            j += 1
        tp += int(y_sorted[i : j + 1].sum())
        seen += j - i + 1
        points.append((tp / n_pos if n_pos else 0.0, tp / seen))
        i = j + 1
    return points


@dataclass
class MetricsReport:
    mode: str
    n_folds: int
    seed: int
    svm_c: float
    svm_gamma: float | str  # a number, or the literal "1/d"
    folds: list[dict] = field(default_factory=list)
    mean: dict = field(default_factory=dict)
    roc_curve: list[tuple[float, float]] = field(default_factory=list)
    pr_curve: list[tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n_folds": self.n_folds,
            "seed": self.seed,
            "svm_c": self.svm_c,
            "svm_gamma": self.svm_gamma,
            "folds": self.folds,
            "mean": self.mean,
            "roc_curve": [list(p) for p in self.roc_curve],
            "pr_curve": [list(p) for p in self.pr_curve],
        }


def run_cv(prepared, config) -> MetricsReport:
    """Stratified k-fold evaluation of the boosted-trees + SVM pipeline.

    Each fold fits the tree ensemble on its training pairs, encodes train and
    test through the fitted leaves, trains the SVM on the training encodings,
    and scores the test pairs; pooled test scores feed the exported curves.
    In strict-folds mode the interaction-profile similarities are recomputed
    per fold from training-fold positives only.
    """
    labels = prepared.labels
    seed = config.seed
    plan = stratified_kfold(labels, config.n_folds, derive_seed(seed, "cv-folds"))
    n = len(labels)
    pooled = np.zeros(n)
    report = MetricsReport(
        mode=config.mode,
        n_folds=config.n_folds,
        seed=seed,
        svm_c=config.resolved_c,
        svm_gamma=config.resolved_gamma,
    )

    for f in range(config.n_folds):
        test_idx = plan.test_indices(f)
        train_idx = plan.train_indices(f)
        assert not set(test_idx.tolist()) & set(train_idx.tolist())

        if config.mode == "strict-folds":
            features = prepared.strict_fold_features(test_idx)
        else:
            features = prepared.features
        X_train, y_train = features[train_idx], labels[train_idx]
        X_test, y_test = features[test_idx], labels[test_idx]

        ens = gbdt_fit(
            X_train,
            y_train,
            n_trees=config.n_trees,
            learning_rate=config.learning_rate,
            max_depth=config.max_depth,
            min_samples_leaf=config.min_samples_leaf,
            seed=derive_seed(seed, f"gbdt-fold{f}"),
        )
        enc_train = gbdt_leaf_encode(ens, X_train)
        enc_test = gbdt_leaf_encode(ens, X_test)
        model = smo_train(
            enc_train,
            y_train,
            C=config.resolved_c,
            gamma=config.resolve_gamma(enc_train.shape[1]),
            tol=config.svm_tol,
            max_passes=config.svm_max_passes,
            seed=derive_seed(seed, f"svm-fold{f}"),
        )
        scores = svm_decision(model, enc_test)
        pooled[test_idx] = scores
        probs = sigmoid(scores)
        tm = threshold_metrics(probs, y_test)
        report.folds.append(
            {
                "fold": f,
                "n_train": int(len(train_idx)),
                "n_test": int(len(test_idx)),
                "roc_auc": roc_auc(scores, y_test),
                "auprc": pr_auc(scores, y_test),
                "accuracy": tm.accuracy,
                "f1": tm.f1,
                "f1_defined": tm.f1_defined,
                "mse": float(np.mean((probs - y_test) ** 2)),
                "svm_converged": model.converged,
            }
        )
        log.info(
            "fold %d: roc_auc=%.4f auprc=%.4f acc=%.4f f1=%.4f",
            f,
            report.folds[-1]["roc_auc"],
            report.folds[-1]["auprc"],
            tm.accuracy,
            tm.f1,
        )

    for key in ("roc_auc", "auprc", "accuracy", "f1", "mse"):
        report.mean[key] = float(np.mean([fd[key] for fd in report.folds]))
    report.roc_curve = roc_points(pooled, labels)
    report.pr_curve = pr_points(pooled, labels)
    return report

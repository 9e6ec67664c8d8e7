"""Soft-margin SVM with an RBF kernel, trained by sequential minimal
optimization on the boosted-tree leaf encodings.

The SMO variant is the simplified two-index scheme: scan for a KKT-violating
first index, pick the second by the largest error gap |E_i - E_j|, and fall
back to seeded-random sweeps over the remaining candidates when that step
stalls. The kernel matrix is cached densely, and the error cache is rebuilt
at the start of every full sweep so convergence checks never act on drift.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .util import atomic_write_text

log = logging.getLogger(__name__)

SERIAL_VERSION = "svm-v1"


def rbf_kernel(x, y, gamma: float) -> float:
    """exp(-gamma * ||x - y||^2)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    d = x - y
    return float(np.exp(-gamma * np.dot(d, d)))


def rbf_cross(X, Y, gamma: float) -> np.ndarray:
    """Kernel block K[i, j] = exp(-gamma * ||X_i - Y_j||^2)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    d2 = (
        np.sum(X**2, axis=1)[:, None]
        - 2.0 * X @ Y.T
        + np.sum(Y**2, axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)


def rbf_gram(X, gamma: float) -> np.ndarray:
    """Symmetric kernel matrix with an exact unit diagonal."""
    K = rbf_cross(X, X, gamma)
    K = np.triu(K) + np.triu(K, 1).T
    np.fill_diagonal(K, 1.0)
    return K


@dataclass
class ParamGrid:
    c_values: list[float]
    gamma_values: list[float]

    def __post_init__(self):
        if not self.c_values or not self.gamma_values:
            raise ValueError("parameter grid must be nonempty")
        if any(c <= 0 for c in self.c_values) or any(g <= 0 for g in self.gamma_values):
            raise ValueError("grid values must be positive")

    @classmethod
    def default(cls, encoding_dim: int) -> "ParamGrid":
        return cls(
            c_values=[0.1, 1.0, 10.0, 100.0],
            gamma_values=[1.0 / encoding_dim, 0.01, 0.1, 1.0],
        )


@dataclass
class SvmModel:
    support_vectors: np.ndarray  # (n_sv, d)
    alphas: np.ndarray  # (n_sv,)
    labels: np.ndarray  # (n_sv,), values in {-1, +1}
    bias: float
    gamma: float
    C: float
    converged: bool = True
    n_sweeps: int = 0
    dual_objective: float = 0.0


def _as_pm1(y) -> np.ndarray:
    y = np.asarray(y)
    vals = set(np.unique(y).tolist())
    if vals <= {0, 1}:
        y = np.where(y == 1, 1.0, -1.0)
    elif vals <= {-1, 1}:
        y = y.astype(np.float64)
    else:
        raise ValueError(f"labels must be 0/1 or -1/+1, got {sorted(vals)}")
    if len(np.unique(y)) < 2:
        raise NumericError("degenerate training set: need both classes present")
    return y


def dual_objective(alphas, y, K) -> float:
    """W(a) = sum a_i - 1/2 sum_ij a_i a_j y_i y_j K_ij."""
    ay = alphas * y
    return float(alphas.sum() - 0.5 * ay @ K @ ay)


def _optimal_bias(alphas, y, g, C) -> float:
    """Bias satisfying the KKT system for the current duals.

    ``g`` is the decision value without bias. Free support vectors pin b
    exactly (averaged); otherwise any b inside the interval implied by the
    bound points works and the midpoint is taken. The last pair's local
    update can land outside that interval when every alpha is at a bound,
    which would fake KKT violations at an optimal dual point.
    """
    v = y - g
    edge = 1e-9 * max(1.0, C)  # alphas within dust of a bound count as bound
    at_zero = alphas <= edge
    at_c = alphas >= C - edge
    free = ~at_zero & ~at_c
    if free.any():
        return float(v[free].mean())
    lower = (at_zero & (y > 0)) | (at_c & (y < 0))
    upper = (at_zero & (y < 0)) | (at_c & (y > 0))
    if lower.any() and upper.any():
        return float((v[lower].max() + v[upper].min()) / 2.0)
    if lower.any():
        return float(v[lower].max())
    if upper.any():
        return float(v[upper].min())
    return 0.0


def smo_train(
    X,
    y,
    C: float = 10.0,
    gamma: float = 0.1,
    tol: float = 1e-3,
    max_passes: int = 100,
    seed: int = 0,
) -> SvmModel:
    """Fit the dual soft-margin problem by pairwise coordinate ascent.

    Converged means one full sweep found no KKT violation beyond ``tol``.
    If ``max_passes`` sweeps run out first, the best-objective iterate seen
    is returned with ``converged=False``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = _as_pm1(y)
    n = len(y)
    K = rbf_gram(X, gamma)
    rng = np.random.default_rng(seed)

    alphas = np.zeros(n)
    b = 0.0
    E = -y.copy()  # f(x) - y with f == 0 initially
    eps = 1e-10

    best = (-np.inf, alphas.copy(), b)

    def take_step(i1: int, i2: int) -> bool:
        nonlocal b, E
        if i1 == i2:
            return False
        a1, a2 = alphas[i1], alphas[i2]
        y1, y2, s = y[i1], y[i2], y[i1] * y[i2]
        E1, E2 = E[i1], E[i2]
        if s > 0:
            L, H = max(0.0, a1 + a2 - C), min(C, a1 + a2)
        else:
            L, H = max(0.0, a2 - a1), min(C, C + a2 - a1)
        if L >= H:
            return False
        k11, k12, k22 = K[i1, i1], K[i1, i2], K[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2_new = a2 + y2 * (E1 - E2) / eta
            a2_new = min(max(a2_new, L), H)
        else:
            # Flat direction: evaluate the pair objective at both ends.
            f1 = y1 * (E1 + b) - a1 * k11 - s * a2 * k12
            f2 = y2 * (E2 + b) - s * a1 * k12 - a2 * k22
            L1 = a1 + s * (a2 - L)
            H1 = a1 + s * (a2 - H)
            obj_L = L1 * f1 + L * f2 + 0.5 * L1**2 * k11 + 0.5 * L**2 * k22 + s * L * L1 * k12
            obj_H = H1 * f1 + H * f2 + 0.5 * H1**2 * k11 + 0.5 * H**2 * k22 + s * H * H1 * k12
            if obj_L < obj_H - eps:
                a2_new = L
            elif obj_L > obj_H + eps:
                a2_new = H
            else:
                return False
        if abs(a2_new - a2) < eps * (a2_new + a2 + eps):
            return False
        # Snap bound-rounding dust so bound/free classification stays exact;
        # the partner update below keeps sum(alpha*y) invariant.
        snap = 1e-12 * max(1.0, C)
        if a2_new < snap:
            a2_new = 0.0
        elif a2_new > C - snap:
            a2_new = C
        a1_new = a1 + s * (a2 - a2_new)
        if a1_new < snap:
            a1_new = 0.0
        elif a1_new > C - snap:
            a1_new = C
        d1, d2 = a1_new - a1, a2_new - a2

        b1 = b - E1 - y1 * d1 * k11 - y2 * d2 * k12
        b2 = b - E2 - y1 * d1 * k12 - y2 * d2 * k22
        if 0.0 < a1_new < C:
            b_new = b1
        elif 0.0 < a2_new < C:
            b_new = b2
        else:
            b_new = (b1 + b2) / 2.0
        E += y1 * d1 * K[i1] + y2 * d2 * K[i2] + (b_new - b)
        alphas[i1], alphas[i2] = a1_new, a2_new
        b = b_new
        return True

    def examine(i2: int) -> bool:
        r2 = E[i2] * y[i2]
        if not ((r2 < -tol and alphas[i2] < C) or (r2 > tol and alphas[i2] > 0)):
            return False
        non_bound = np.flatnonzero((alphas > 0) & (alphas < C))
        if non_bound.size > 1:
            i1 = int(non_bound[np.argmax(np.abs(E[non_bound] - E[i2]))])
            if take_step(i1, i2):
                return True
        for pool in (non_bound, np.arange(n)):
            if pool.size == 0:
                continue
            start = int(rng.integers(pool.size))
            for offset in range(pool.size):
                if take_step(int(pool[(start + offset) % pool.size]), i2):
                    return True
        return False

    converged = False
    sweeps = 0
    while sweeps < max_passes:
        sweeps += 1
        # Rebuild the error cache from scratch with the KKT-optimal bias for
        # the current duals, so convergence is never judged on drift or on a
        # stale pairwise bias.
        g = (alphas * y) @ K
        b = _optimal_bias(alphas, y, g, C)
        E = g + b - y
        changed = sum(examine(i) for i in range(n))
        if changed == 0:
            converged = True
            break
        obj = dual_objective(alphas, y, K)
        if obj > best[0]:
            best = (obj, alphas.copy(), b)
        # Polish the non-bound set until quiescent before the next full sweep;
        # each successful step strictly raises the dual, so this terminates.
        for _ in range(10 * n):
            non_bound = np.flatnonzero((alphas > 0) & (alphas < C))
            if not sum(examine(int(i)) for i in non_bound):
                break

    final_obj = dual_objective(alphas, y, K)
    if not converged:
        if best[0] > final_obj:
            _, alphas, _b = best
            final_obj = best[0]
        b = _optimal_bias(alphas, y, (alphas * y) @ K, C)
        log.warning("SMO did not converge within %d sweeps (n=%d)", max_passes, n)

    keep = alphas > 0
    return SvmModel(
        support_vectors=X[keep].copy(),
        alphas=alphas[keep].copy(),
        labels=y[keep].copy(),
        bias=float(b),
        gamma=gamma,
        C=C,
        converged=converged,
        n_sweeps=sweeps,
        dual_objective=final_obj,
    )


def svm_decision(model: SvmModel, X) -> np.ndarray:
    """Raw margin f(x) = sum_i alpha_i y_i K(sv_i, x) + b; sign is the label,
    the value itself is the ranking confidence."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if len(model.alphas) == 0:
        return np.full(X.shape[0], model.bias)
    K = rbf_cross(model.support_vectors, X, model.gamma)
    return (model.alphas * model.labels) @ K + model.bias


def grid_search(
    X,
    y,
    grid: ParamGrid,
    n_folds: int = 5,
    seed: int = 0,
    tol: float = 1e-3,
    max_passes: int = 100,
):
    """Pick (C, gamma) by mean fold ROC-AUC of the decision values.

    Ties fall to the smaller C, then the smaller gamma. Folds whose training
    or test part ends up single-class are skipped with a warning; a cell with
    every fold skipped is an error.
    """
    from .evaluation import roc_auc, stratified_kfold

    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y01 = np.asarray(y)
    y01 = np.where(y01 == 1, 1, 0)
    counts = np.bincount(y01, minlength=2)
    if counts.min() >= n_folds:
        fold_index = stratified_kfold(y01, n_folds, seed).fold_index
    else:
        rng = np.random.default_rng(seed)
        fold_index = rng.permutation(len(y01)) % n_folds

    results: dict[tuple[float, float], list[float]] = {}
    best = None
    for C in grid.c_values:
        for gamma in grid.gamma_values:
            scores = []
            for f in range(n_folds):
                test = fold_index == f
                train = ~test
                if len(np.unique(y01[train])) < 2 or len(np.unique(y01[test])) < 2:
                    log.warning(
                        "grid_search: fold %d skipped (single class) at C=%g gamma=%g",
                        f, C, gamma,
                    )
                    continue
                model = smo_train(
                    X[train], y01[train], C=C, gamma=gamma,
                    tol=tol, max_passes=max_passes, seed=seed,
                )
                scores.append(roc_auc(svm_decision(model, X[test]), y01[test]))
            if not scores:
                raise NumericError(
                    f"grid_search: every fold skipped at C={C} gamma={gamma}"
                )
            results[(C, gamma)] = scores
            mean = float(np.mean(scores))
            key = (-mean, C, gamma)
            if best is None or key < best[0]:
                best = (key, C, gamma)
    return best[1], best[2], results


def save_svm(model: SvmModel, path: str) -> None:
    doc = {
        "version": SERIAL_VERSION,
        "C": model.C,
        "gamma": model.gamma,
        "bias": model.bias,
        "converged": model.converged,
        "supports": [
            {"alpha": float(a), "label": int(l), "vector": v.tolist()}
            for a, l, v in zip(model.alphas, model.labels, model.support_vectors)
        ],
    }
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_svm(path: str) -> SvmModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != SERIAL_VERSION:
        raise ValueError(f"unsupported model version: {doc.get('version')}")
    supports = doc["supports"]
    d = len(supports[0]["vector"]) if supports else 0
    return SvmModel(
        support_vectors=np.array([s["vector"] for s in supports], dtype=np.float64).reshape(len(supports), d),
        alphas=np.array([s["alpha"] for s in supports], dtype=np.float64),
        labels=np.array([s["label"] for s in supports], dtype=np.float64),
        bias=doc["bias"],
        gamma=doc["gamma"],
        C=doc["C"],
        converged=doc.get("converged", True),
    )

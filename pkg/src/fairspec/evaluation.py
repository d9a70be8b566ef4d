"""Per-class clean/robust accuracy and train/test agreement statistics.

Worst-class numbers are reported both as accuracy and as error so tables
and bound comparisons never disagree by a stray 1 - x.
"""

from __future__ import annotations

import numpy as np
from scipy import stats as scipy_stats

from .attack import AttackConfig, adversarial_set
from .data import Dataset, require_all_classes
from .network import FeedForwardNet, forward_batch


def per_class_accuracy(net: FeedForwardNet, ds: Dataset) -> np.ndarray:
    """accuracy_j = #{argmax = y = j} / m_j, smallest-index tie-break."""
    stats = require_all_classes(ds)
    logits, _ = forward_batch(net, ds.features)
    preds = logits.argmax(axis=1)
    correct = np.zeros(ds.d_y)
    np.add.at(correct, ds.labels[preds == ds.labels], 1.0)
    return correct / np.asarray(stats.counts, dtype=np.float64)


def robust_per_class(
    net: FeedForwardNet, ds: Dataset, attack_cfg: AttackConfig, threads: int = 1
) -> np.ndarray:
    """Per-class accuracy on the PGD adversarial version of the dataset."""
    return per_class_accuracy(net, adversarial_set(net, ds, attack_cfg, threads=threads))


def kendall_tau(a, b) -> float:
    """Tie-adjusted Kendall rank correlation (tau-b) in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("inputs must be equal-length vectors")
    if a.shape[0] < 2:
        raise ValueError("need at least two entries")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise ValueError("kendall tau undefined for an all-constant vector")
    tau = scipy_stats.kendalltau(a, b, variant="b").statistic
    if np.isnan(tau):
        raise ValueError("kendall tau undefined for these inputs")
    return float(tau)


def covariance(a, b) -> float:
    """Sample covariance with the n-1 denominator."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("inputs must be equal-length vectors")
    if a.shape[0] < 2:
        raise ValueError("need at least two entries")
    return float(((a - a.mean()) * (b - b.mean())).sum() / (a.shape[0] - 1))


def per_class_csv_lines(clean: np.ndarray, robust: np.ndarray) -> list[str]:
    """Per-class table: class, clean_acc, robust_acc."""
    lines = ["class,clean_acc,robust_acc"]
    for j, (c, r) in enumerate(zip(clean, robust)):
        lines.append(f"{j},{repr(float(c))},{repr(float(r))}")
    return lines


def summary_csv_lines(
    clean: np.ndarray,
    robust: np.ndarray,
    kendall_train_test: float | None = None,
    cov_train_test: float | None = None,
) -> list[str]:
    """Summary row with averages, worst-class accuracy and error, and
    train/test per-class agreement when both splits were evaluated."""
    cols = [
        "avg_clean",
        "worst_clean",
        "avg_robust",
        "worst_robust",
        "worst_clean_error",
        "worst_robust_error",
        "kendall_train_test",
        "cov_train_test",
    ]
    row = [
        repr(float(clean.mean())),
        repr(float(clean.min())),
        repr(float(robust.mean())),
        repr(float(robust.min())),
        repr(float(1.0 - clean.min())),
        repr(float(1.0 - robust.min())),
        "" if kendall_train_test is None else repr(float(kendall_train_test)),
        "" if cov_train_test is None else repr(float(cov_train_test)),
    ]
    return [",".join(cols), ",".join(row)]

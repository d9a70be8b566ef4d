"""Confusion matrices, the spectral regularizer, and adversarial training.

The confusion matrix convention is the error form: entry (i, j) is the
fraction of class-j samples attributed to class i, diagonal zero, so the
max column sum is the worst-class error. The margin variant counts a
class-j sample against its strongest rival i whenever the true logit
beats that rival by less than gamma.

The regularizer replaces each binary error cell with the per-cell average
of margin-shifted cross-entropy (the surrogate matrix) and descends
sum_{i!=j} d||C||_2/dC_ij * dL_ij/dw, with the sign of dC/dL taken as the
constant +1. Training supports two refresh modes for the spectral factor:
hybrid (once per epoch over the full training set, cached) and minibatch
(recomputed per batch), plus an option to reuse the previous epoch's
adversarial examples for the epoch-level matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import rng, tensor
from .attack import (
    AttackConfig,
    adversarial_set,
    cross_entropy,
    cross_entropy_grad,
    pgd_batch,
)
from .data import Dataset, batch_plan, require_all_classes
from .network import FeedForwardNet, GradBundle, backward_batch, forward_batch

log = logging.getLogger("fairspec.fairness")

MODES = ("hybrid", "minibatch")


@dataclass(frozen=True)
class ConfusionMatrix:
    """d_y x d_y error matrix: zero diagonal, entries in [0, 1], column j
    summing to the class-j error rate."""

    m: np.ndarray

    def __post_init__(self):
        a = tensor.check_matrix(self.m)
        d = a.shape[0]
        if a.shape != (d, d):
            raise ValueError(f"confusion matrix must be square, got {a.shape}")
        if np.abs(np.diag(a)).max() != 0.0:
            raise ValueError("confusion matrix diagonal must be exactly zero")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("confusion entries must lie in [0, 1]")
        if a.sum(axis=0).max() > 1.0 + 1e-12:
            raise ValueError("confusion column sums must not exceed 1")
        a = a.copy()
        a.flags.writeable = False
        object.__setattr__(self, "m", a)

    @property
    def d_y(self) -> int:
        return self.m.shape[0]


@dataclass(frozen=True)
class SurrogateMatrix:
    """Differentiable stand-in for the margin confusion matrix.

    values[i, j] is the average margin-shifted cross-entropy over the
    member samples of cell (i, j); membership[i][j] lists those sample
    indices (each sample belongs to at most one cell).
    """

    values: np.ndarray
    membership: tuple[tuple[tuple[int, ...], ...], ...]


@dataclass(frozen=True)
class RegConfig:
    alpha: float = 0.3
    gamma: float = 0.0
    mode: str = "hybrid"
    stale_adversarial: bool = False

    def __post_init__(self):
        if self.alpha < 0.0:
            raise ValueError("alpha must be nonnegative")
        if self.gamma < 0.0:
            raise ValueError("gamma must be nonnegative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 128
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_drops: tuple[tuple[int, float], ...] = ((100, 0.1), (150, 0.1))
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        object.__setattr__(
            self, "lr_drops", tuple((int(e), float(f)) for e, f in self.lr_drops)
        )


def finetune_defaults(seed: int = 0) -> TrainConfig:
    """Fine-tuning schedule: 2 epochs at lr 0.01 with no drops."""
    return TrainConfig(epochs=2, batch_size=128, lr=0.01, momentum=0.9,
                       weight_decay=5e-4, lr_drops=(), seed=seed)


def _predictions(net: FeedForwardNet, feats: np.ndarray) -> np.ndarray:
    logits, _ = forward_batch(net, feats)
    return logits.argmax(axis=1)


def confusion_hard(net: FeedForwardNet, ds: Dataset) -> ConfusionMatrix:
    """Empirical error confusion matrix from argmax predictions.

    Ties resolve to the smallest index. Every class must be present.
    """
    stats = require_all_classes(ds)
    preds = _predictions(net, ds.features)
    c = np.zeros((ds.d_y, ds.d_y))
    np.add.at(c, (preds, ds.labels), 1.0)
    np.fill_diagonal(c, 0.0)
    c /= np.asarray(stats.counts, dtype=np.float64)[None, :]
    return ConfusionMatrix(m=c)


def confusion_margin(net: FeedForwardNet, ds: Dataset, gamma: float) -> ConfusionMatrix:
    """Margin confusion matrix: a class-j sample lands in cell (i, j) when
    its strongest rival is i and the true logit leads it by at most gamma."""
    if gamma < 0.0:
        raise ValueError("gamma must be nonnegative")
    stats = require_all_classes(ds)
    logits, _ = forward_batch(net, ds.features)
    rival = _strongest_rival(logits, ds.labels)
    rows = np.arange(ds.m)
    within = logits[rows, ds.labels] <= gamma + logits[rows, rival]
    c = np.zeros((ds.d_y, ds.d_y))
    np.add.at(c, (rival[within], ds.labels[within]), 1.0)
    np.fill_diagonal(c, 0.0)
    c /= np.asarray(stats.counts, dtype=np.float64)[None, :]
    return ConfusionMatrix(m=c)


def _strongest_rival(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """argmax over classes excluding each sample's own label (smallest index wins)."""
    masked = logits.copy()
    masked[np.arange(logits.shape[0]), labels] = -np.inf
    return masked.argmax(axis=1)


def worst_class_error(c: ConfusionMatrix) -> float:
    """Maximum column sum: the worst class's error rate."""
    return tensor.l1_matrix_norm(c.m)


def _shifted_ce(logits: np.ndarray, labels: np.ndarray, gamma: float) -> np.ndarray:
    """Cross-entropy of logits with gamma added to every non-true class."""
    shifted = logits + gamma
    rows = np.arange(logits.shape[0])
    shifted[rows, labels] = logits[rows, labels]
    return cross_entropy(shifted, labels)


def _shifted_ce_grad(logits: np.ndarray, labels: np.ndarray, gamma: float) -> np.ndarray:
    shifted = logits + gamma
    rows = np.arange(logits.shape[0])
    shifted[rows, labels] = logits[rows, labels]
    return cross_entropy_grad(shifted, labels)


def surrogate_matrix(net: FeedForwardNet, adv_ds: Dataset, gamma: float) -> SurrogateMatrix:
    """Cell (i, j) averages the margin-shifted cross-entropy of its member
    samples over m_j; membership is recorded for gradient replay."""
    if gamma < 0.0:
        raise ValueError("gamma must be nonnegative")
    stats = require_all_classes(adv_ds)
    logits, _ = forward_batch(net, adv_ds.features)
    rival = _strongest_rival(logits, adv_ds.labels)
    rows = np.arange(adv_ds.m)
    within = logits[rows, adv_ds.labels] <= gamma + logits[rows, rival]
    ces = _shifted_ce(logits, adv_ds.labels, gamma)

    d_y = adv_ds.d_y
    values = np.zeros((d_y, d_y))
    members: list[list[list[int]]] = [[[] for _ in range(d_y)] for _ in range(d_y)]
    for q in np.nonzero(within)[0]:
        i, j = int(rival[q]), int(adv_ds.labels[q])
        values[i, j] += ces[q]
        members[i][j].append(int(q))
    values /= np.asarray(stats.counts, dtype=np.float64)[None, :]
    np.fill_diagonal(values, 0.0)
    membership = tuple(tuple(tuple(cell) for cell in row) for row in members)
    return SurrogateMatrix(values=values, membership=membership)


def psi_grad(
    net: FeedForwardNet,
    adv_ds: Dataset,
    gamma: float,
    spec_grad: np.ndarray,
    class_counts: np.ndarray | None = None,
) -> GradBundle:
    """Weight gradient of the spectral regularizer.

    Each member sample of cell (i, j) contributes its margin-shifted
    cross-entropy gradient scaled by spec_grad[i, j] / m_j; the sign of
    dC/dL is the constant +1 approximation. m_j defaults to the class
    counts of `adv_ds`; the training loop passes the full training-set
    counts so that summing batch contributions over an epoch reproduces
    the full-set gradient.
    """
    spec_grad = tensor.check_matrix(spec_grad)
    logits, trace = forward_batch(net, adv_ds.features)
    rival = _strongest_rival(logits, adv_ds.labels)
    rows = np.arange(adv_ds.m)
    within = logits[rows, adv_ds.labels] <= gamma + logits[rows, rival]

    if class_counts is None:
        # m_j only ever divides samples of class j, so absent classes are fine
        class_counts = np.bincount(adv_ds.labels, minlength=adv_ds.d_y)
    counts = np.asarray(class_counts, dtype=np.float64)
    weights = np.zeros(adv_ds.m)
    sel = np.nonzero(within)[0]
    weights[sel] = spec_grad[rival[sel], adv_ds.labels[sel]] / counts[adv_ds.labels[sel]]

    grad_logits = _shifted_ce_grad(logits, adv_ds.labels, gamma) * weights[:, None]
    weight_grads, input_grads = backward_batch(net, trace, grad_logits)
    # the per-weight sum realizes sum_q w_q * dCE_q/dW; input grads are
    # per-sample and have no single-vector meaning here, so report zeros
    del input_grads
    return GradBundle(
        weight_grads=weight_grads, input_grad=np.zeros(net.input_dim)
    )


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_ce: float
    reg_value: float
    spec_norm_conf: float
    clean_acc: np.ndarray
    robust_acc: np.ndarray
    test_clean_acc: np.ndarray | None = None
    test_robust_acc: np.ndarray | None = None

    @property
    def worst_clean(self) -> float:
        return float(self.clean_acc.min())

    @property
    def worst_robust(self) -> float:
        return float(self.robust_acc.min())


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    skipped_refreshes: int = 0


def _epoch_attack_cfg(cfg: AttackConfig, seed: int) -> AttackConfig:
    return AttackConfig(
        norm=cfg.norm,
        epsilon=cfg.epsilon,
        step_size=cfg.step_size,
        iters=cfg.iters,
        random_start=cfg.random_start,
        seed=seed,
        clamp=cfg.clamp,
    )


def _spec_grad_or_none(c: ConfusionMatrix) -> np.ndarray | None:
    try:
        return tensor.spectral_grad(c.m)
    except tensor.DegenerateSpectrumError as err:
        log.info("regularizer refresh skipped: %s", err)
        return None


def _accuracy_per_class(preds: np.ndarray, labels: np.ndarray, counts: np.ndarray) -> np.ndarray:
    d_y = counts.shape[0]
    correct = np.zeros(d_y)
    np.add.at(correct, labels[preds == labels], 1.0)
    return correct / counts


def train(
    net: FeedForwardNet,
    ds: Dataset,
    attack_cfg: AttackConfig,
    reg_cfg: RegConfig,
    train_cfg: TrainConfig,
    eval_ds: Dataset | None = None,
    threads: int = 1,
) -> tuple[FeedForwardNet, TrainHistory]:
    """Adversarial training with the confusional spectral regularizer.

    Per minibatch: attack the batch, descend cross-entropy plus alpha
    times the regularizer gradient with SGD momentum, weight decay, and
    the lr-drop schedule. History records, per epoch, the mean adversarial
    training loss, the surrogate regularizer value, the spectral norm of
    the margin confusion matrix over a fresh full-set adversarial pass,
    and per-class clean/robust accuracies.
    """
    stats = require_all_classes(ds)
    counts = np.asarray(stats.counts, dtype=np.float64)
    weights = [w.copy() for w in net.layers]
    velocity = [np.zeros_like(w) for w in weights]
    lr = train_cfg.lr
    history = TrainHistory()
    alpha, gamma = reg_cfg.alpha, reg_cfg.gamma
    stale_set: Dataset | None = None

    current = FeedForwardNet(layers=tuple(weights), seed=net.seed)
    for epoch in range(train_cfg.epochs):
        for drop_epoch, factor in train_cfg.lr_drops:
            if epoch == drop_epoch:
                lr *= factor

        spec_grad_cached: np.ndarray | None = None
        if alpha > 0.0 and reg_cfg.mode == "hybrid":
            if reg_cfg.stale_adversarial and stale_set is not None:
                refresh_set = stale_set
            else:
                refresh_set = adversarial_set(
                    current,
                    ds,
                    _epoch_attack_cfg(attack_cfg, rng.derive(attack_cfg.seed, rng.REFRESH, epoch)),
                    threads=threads,
                )
            conf = confusion_margin(current, refresh_set, gamma)
            spec_grad_cached = _spec_grad_or_none(conf)
            if spec_grad_cached is None:
                history.skipped_refreshes += 1

        plan = batch_plan(ds.m, train_cfg.batch_size, train_cfg.seed, epoch)
        ce_sum = 0.0
        ce_count = 0
        for batch_idx in plan.batches():
            feats = ds.features[batch_idx]
            labels = ds.labels[batch_idx]
            seeds = [
                rng.derive(attack_cfg.seed, rng.ATTACK, epoch, int(q)) for q in batch_idx
            ]
            adv_feats = pgd_batch(current, feats, labels, attack_cfg, sample_seeds=seeds)

            logits, trace = forward_batch(current, adv_feats)
            losses = cross_entropy(logits, labels)
            ce_sum += float(losses.sum())
            ce_count += labels.shape[0]
            grad_logits = cross_entropy_grad(logits, labels) / labels.shape[0]
            weight_grads, _ = backward_batch(current, trace, grad_logits)
            weight_grads = list(weight_grads)

            if alpha > 0.0:
                adv_batch = Dataset(features=adv_feats, labels=labels, d_y=ds.d_y)
                spec_grad_batch = spec_grad_cached
                if reg_cfg.mode == "minibatch":
                    batch_classes = np.bincount(labels, minlength=ds.d_y)
                    if (batch_classes == 0).any():
                        spec_grad_batch = None
                        log.info(
                            "minibatch refresh skipped at epoch %d: batch missing a class",
                            epoch,
                        )
                        history.skipped_refreshes += 1
                    else:
                        conf_b = confusion_margin(current, adv_batch, gamma)
                        spec_grad_batch = _spec_grad_or_none(conf_b)
                        if spec_grad_batch is None:
                            history.skipped_refreshes += 1
                if spec_grad_batch is not None:
                    psi = psi_grad(
                        current, adv_batch, gamma, spec_grad_batch, class_counts=counts
                    )
                    for idx in range(len(weight_grads)):
                        weight_grads[idx] = weight_grads[idx] + alpha * psi.weight_grads[idx]

            for idx in range(len(weights)):
                g = weight_grads[idx] + train_cfg.weight_decay * weights[idx]
                velocity[idx] = train_cfg.momentum * velocity[idx] + g
                weights[idx] = weights[idx] - lr * velocity[idx]
            current = FeedForwardNet(layers=tuple(weights), seed=net.seed)

        # end-of-epoch metrics over a fresh full-set adversarial pass
        metric_set = adversarial_set(
            current,
            ds,
            _epoch_attack_cfg(attack_cfg, rng.derive(attack_cfg.seed, rng.METRICS, epoch)),
            threads=threads,
        )
        conf_m = confusion_margin(current, metric_set, gamma)
        try:
            spec_norm_conf = tensor.spectral_norm(conf_m.m)
        except tensor.PowerIterationError as err:
            # near-degenerate spectrum: the stalled estimate is still good
            # to ~the residual, plenty for a reported metric
            spec_norm_conf = err.sigma
        g_m = _spec_grad_or_none(conf_m)
        if g_m is not None:
            reg_value = float((g_m * surrogate_matrix(current, metric_set, gamma).values).sum())
        else:
            reg_value = float("nan")
        clean_preds = _predictions(current, ds.features)
        robust_preds = _predictions(current, metric_set.features)
        record = EpochRecord(
            epoch=epoch,
            lr=lr,
            train_ce=ce_sum / max(ce_count, 1),
            reg_value=reg_value,
            spec_norm_conf=spec_norm_conf,
            clean_acc=_accuracy_per_class(clean_preds, ds.labels, counts),
            robust_acc=_accuracy_per_class(robust_preds, ds.labels, counts),
        )
        if eval_ds is not None:
            eval_counts = np.asarray(require_all_classes(eval_ds).counts, dtype=np.float64)
            eval_adv = adversarial_set(
                current,
                eval_ds,
                _epoch_attack_cfg(attack_cfg, rng.derive(attack_cfg.seed, rng.METRICS, epoch, 1)),
                threads=threads,
            )
            record.test_clean_acc = _accuracy_per_class(
                _predictions(current, eval_ds.features), eval_ds.labels, eval_counts
            )
            record.test_robust_acc = _accuracy_per_class(
                _predictions(current, eval_adv.features), eval_ds.labels, eval_counts
            )
        history.records.append(record)
        if reg_cfg.stale_adversarial:
            stale_set = metric_set

    return current, history


def finetune(
    net: FeedForwardNet,
    ds: Dataset,
    attack_cfg: AttackConfig,
    reg_cfg: RegConfig,
    ft_cfg: TrainConfig | None = None,
    eval_ds: Dataset | None = None,
    threads: int = 1,
) -> tuple[FeedForwardNet, TrainHistory]:
    """Short fine-tuning pass over a pretrained network (2 epochs, lr 0.01)."""
    if ft_cfg is None:
        ft_cfg = finetune_defaults()
    return train(net, ds, attack_cfg, reg_cfg, ft_cfg, eval_ds=eval_ds, threads=threads)


def history_csv_lines(history: TrainHistory, d_y: int) -> list[str]:
    """History as CSV lines: epoch, losses, confusion spectral norm, and
    per-class clean/robust accuracy with worst-class summaries."""
    cols = ["epoch", "lr", "train_ce", "reg_value", "spec_norm_conf"]
    cols += [f"clean_acc_{j}" for j in range(d_y)]
    cols += [f"robust_acc_{j}" for j in range(d_y)]
    cols += ["avg_clean", "worst_clean", "avg_robust", "worst_robust"]
    has_test = any(r.test_clean_acc is not None for r in history.records)
    if has_test:
        cols += [f"test_clean_acc_{j}" for j in range(d_y)]
        cols += [f"test_robust_acc_{j}" for j in range(d_y)]
        cols += ["test_avg_clean", "test_worst_clean", "test_avg_robust", "test_worst_robust"]
    lines = [",".join(cols)]
    for r in history.records:
        row = [
            str(r.epoch),
            repr(r.lr),
            repr(r.train_ce),
            repr(r.reg_value),
            repr(r.spec_norm_conf),
        ]
        row += [repr(float(v)) for v in r.clean_acc]
        row += [repr(float(v)) for v in r.robust_acc]
        row += [
            repr(float(r.clean_acc.mean())),
            repr(r.worst_clean),
            repr(float(r.robust_acc.mean())),
            repr(r.worst_robust),
        ]
        if has_test:
            row += [repr(float(v)) for v in r.test_clean_acc]
            row += [repr(float(v)) for v in r.test_robust_acc]
            row += [
                repr(float(r.test_clean_acc.mean())),
                repr(float(r.test_clean_acc.min())),
                repr(float(r.test_robust_acc.mean())),
                repr(float(r.test_robust_acc.min())),
            ]
        lines.append(",".join(row))
    return lines

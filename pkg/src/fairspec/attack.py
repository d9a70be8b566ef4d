"""White-box first-order adversaries: FGSM and PGD in l-inf and l2.

The attack loss is cross-entropy on softmax logits. PGD tracks the
best-loss iterate over all feasible points it visits, so with random
start disabled the returned point never has lower loss than the input.
Per-sample derived seeds make adversarial sets independent of batch
composition and of any parallel scheduling.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from .data import Dataset
from .network import FeedForwardNet, forward_batch, input_gradients

log = logging.getLogger("fairspec.attack")

NORMS = ("linf", "l2")

# fixed chunk size for adversarial_set; independent of thread count so
# results do not depend on scheduling
_CHUNK = 256


@dataclass(frozen=True)
class AttackConfig:
    norm: str = "linf"
    epsilon: float = 8.0 / 255.0
    step_size: float = 2.0 / 255.0
    iters: int = 20
    random_start: bool = False
    seed: int = 0
    clamp: tuple[float, float] | None = None

    def __post_init__(self):
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be nonnegative")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.step_size <= 0.0:
            raise ValueError("step_size must be positive")
        if self.clamp is not None:
            lo, hi = self.clamp
            if not lo < hi:
                raise ValueError("clamp must be (lo, hi) with lo < hi")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-sample -log softmax(logits)[y], computed via log-sum-exp."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    zmax = logits.max(axis=1)
    lse = zmax + np.log(np.exp(logits - zmax[:, None]).sum(axis=1))
    return lse - logits[np.arange(logits.shape[0]), labels]


def cross_entropy_grad(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient of per-sample cross-entropy w.r.t. the logits: p - onehot."""
    p = softmax(np.atleast_2d(np.asarray(logits, dtype=np.float64)))
    rows = np.arange(p.shape[0])
    g = p.copy()
    g[rows, np.atleast_1d(labels)] -= 1.0
    return g


def _ce_and_input_grads(
    net: FeedForwardNet, xs: np.ndarray, ys: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    logits, trace = forward_batch(net, xs)
    losses = cross_entropy(logits, ys)
    grads = input_gradients(net, trace, cross_entropy_grad(logits, ys))
    return losses, grads


def _apply_clamp(xs: np.ndarray, clamp: tuple[float, float] | None) -> np.ndarray:
    if clamp is None:
        return xs
    return np.clip(xs, clamp[0], clamp[1])


def _project(deltas: np.ndarray, norm: str, epsilon: float) -> np.ndarray:
    if norm == "linf":
        return np.clip(deltas, -epsilon, epsilon)
    norms = np.sqrt((deltas * deltas).sum(axis=1))
    scale = np.ones_like(norms)
    over = norms > epsilon
    scale[over] = epsilon / norms[over]
    return deltas * scale[:, None]


def _start_noise(cfg: AttackConfig, dim: int, sample_seed: int) -> np.ndarray:
    g = rng.generator(sample_seed)
    if cfg.norm == "linf":
        return g.uniform(-cfg.epsilon, cfg.epsilon, size=dim)
    # uniform in the l2 ball: direction times radius with the d-th root law
    direction = g.normal(0.0, 1.0, size=dim)
    nrm = np.linalg.norm(direction)
    if nrm == 0.0:
        return np.zeros(dim)
    radius = cfg.epsilon * g.uniform(0.0, 1.0) ** (1.0 / dim)
    return direction / nrm * radius


def pgd_batch(
    net: FeedForwardNet,
    xs: np.ndarray,
    ys: np.ndarray,
    cfg: AttackConfig,
    sample_seeds: np.ndarray | list[int] | None = None,
) -> np.ndarray:
    """PGD over a batch of samples; rows of `xs` are attacked independently.

    `sample_seeds` supplies one random-start seed per row; defaults to
    seeds derived from cfg.seed and the row index.
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.int64)
    m, dim = xs.shape
    if cfg.epsilon == 0.0:
        return xs.copy()

    if cfg.random_start:
        if sample_seeds is None:
            sample_seeds = [rng.derive(cfg.seed, rng.ATTACK, q) for q in range(m)]
        noise = np.empty_like(xs)
        for row, s in enumerate(sample_seeds):
            noise[row] = _start_noise(cfg, dim, int(s))
        cur = _apply_clamp(xs + _project(noise, cfg.norm, cfg.epsilon), cfg.clamp)
    else:
        cur = xs.copy()

    best_x = cur.copy()
    best_loss = np.full(m, -np.inf)

    zero_grad_rows = 0
    for _ in range(cfg.iters):
        losses, grads = _ce_and_input_grads(net, cur, ys)
        improved = losses > best_loss
        best_loss[improved] = losses[improved]
        best_x[improved] = cur[improved]

        if cfg.norm == "linf":
            step = cfg.step_size * np.sign(grads)
        else:
            norms = np.sqrt((grads * grads).sum(axis=1))
            zero = norms == 0.0
            zero_grad_rows += int(zero.sum())
            norms[zero] = 1.0
            step = cfg.step_size * grads / norms[:, None]
        deltas = _project((cur + step) - xs, cfg.norm, cfg.epsilon)
        cur = _apply_clamp(xs + deltas, cfg.clamp)
        if cfg.norm == "linf":
            assert np.abs(cur - xs).max() <= cfg.epsilon + 1e-12
        else:
            assert np.sqrt(((cur - xs) ** 2).sum(axis=1)).max() <= cfg.epsilon + 1e-12

    final_losses = cross_entropy(forward_batch(net, cur)[0], ys)
    improved = final_losses > best_loss
    best_loss[improved] = final_losses[improved]
    best_x[improved] = cur[improved]
    if zero_grad_rows:
        log.debug("pgd: %d zero-gradient row evaluations left samples in place", zero_grad_rows)
    return best_x


def pgd(net: FeedForwardNet, x: np.ndarray, y: int, cfg: AttackConfig) -> np.ndarray:
    """PGD on a single sample; see pgd_batch."""
    x = np.asarray(x, dtype=np.float64)
    out = pgd_batch(net, x[None, :], np.array([y]), cfg)
    return out[0]


def fgsm(
    net: FeedForwardNet,
    x: np.ndarray,
    y: int,
    epsilon: float,
    norm: str = "linf",
    clamp: tuple[float, float] | None = None,
) -> np.ndarray:
    """Single-step gradient attack.

    l-inf: x + epsilon * sign(grad); l2: x + epsilon * grad / ||grad||.
    A zero gradient in l2 mode returns x unchanged and logs the event.
    """
    if norm not in NORMS:
        raise ValueError(f"norm must be one of {NORMS}, got {norm!r}")
    if epsilon < 0.0:
        raise ValueError("epsilon must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    if epsilon == 0.0:
        return x.copy()
    _, grads = _ce_and_input_grads(net, x[None, :], np.array([y]))
    g = grads[0]
    if norm == "linf":
        step = epsilon * np.sign(g)
    else:
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            log.warning("fgsm: zero gradient in l2 mode, sample left unchanged")
            return x.copy()
        step = epsilon * g / gn
    return _apply_clamp(x + step, clamp)


def _attack_chunk(net, feats, labels, cfg, seeds):
    return pgd_batch(net, feats, labels, cfg, sample_seeds=seeds)


def adversarial_set(
    net: FeedForwardNet, ds: Dataset, cfg: AttackConfig, threads: int = 1
) -> Dataset:
    """PGD applied to every sample, labels preserved.

    Each sample's random start derives from (cfg.seed, its index), so the
    output is identical no matter how work is chunked or scheduled.
    """
    if cfg.epsilon == 0.0:
        return Dataset(features=ds.features.copy(), labels=ds.labels.copy(), d_y=ds.d_y)
    seeds = [rng.derive(cfg.seed, rng.ATTACK, q) for q in range(ds.m)]
    chunks = [(s, min(s + _CHUNK, ds.m)) for s in range(0, ds.m, _CHUNK)]
    jobs = [(ds.features[a:b], ds.labels[a:b], seeds[a:b]) for a, b in chunks]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(
                pool.map(lambda j: _attack_chunk(net, j[0], j[1], cfg, j[2]), jobs)
            )
    else:
        results = [_attack_chunk(net, f, l, cfg, s) for f, l, s in jobs]
    adv = np.vstack(results)
    return Dataset(features=adv, labels=ds.labels.copy(), d_y=ds.d_y)

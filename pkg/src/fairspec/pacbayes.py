"""Computable forms of the worst-class robust generalization theory.

phi / phi_robust are the weight-norm complexity functionals; bound_value
assembles the full worst-class bound with the big-O constant fixed to 1,
so the complexity term is a scale for comparisons, not a certificate.
sigma_star gives the largest admissible Gaussian weight-noise scale for a
target margin; check_perturbation_bound verifies the output-change bound
that underlies it; sharpness_variance estimates flatness by sampling
weight noise; nu_study measures the l1-to-spectral norm ratio of random
confusion-shaped matrices.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import rng, tensor
from .attack import AttackConfig, adversarial_set
from .data import ClassStats, Dataset
from .network import FeedForwardNet, forward_batch, weight_norm_stats

COMPLEXITY_NOTE = "big-O constant fixed to 1: scale for comparisons, not a certificate"

NU_GENERATORS = ("uniform", "colscaled", "dirichlet")
DEFAULT_NU_GENERATOR = "uniform"
NU_HISTOGRAM_BINS = 50


class InfeasibleBoundError(ValueError):
    """The bound requires m_min > 8 d_y; smaller datasets cannot be scored."""


@dataclass(frozen=True)
class BoundReport:
    """All terms of the worst-class bound plus the inputs that produced them."""

    spectral_term: float
    phi_prime: float
    complexity_term: float
    total: float
    conf_spec: float
    nu: float
    d_y: int
    m_min: int
    gamma: float
    delta: float
    epsilon: float
    input_radius: float
    n: int
    h: int
    note: str = COMPLEXITY_NOTE

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


@dataclass(frozen=True)
class SharpnessReport:
    """Largest weight-noise variance keeping the accuracy drop in budget."""

    sigma2_star: float | None
    grid: tuple[float, ...]
    worst_drops: tuple[float, ...]
    n_samples: int
    drop_threshold: float
    accuracy: str
    baseline_accuracy: float
    seed: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


@dataclass(frozen=True)
class NuReport:
    """Distribution summary of nu = ||C||_1 / ||C||_2 over random matrices."""

    trials: int
    d_y: int
    mean_nu: float
    max_nu: float
    min_nu: float
    histogram_counts: tuple[int, ...]
    histogram_edges: tuple[float, ...]
    generator: str
    seed: int
    skipped_zero: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    def histogram_csv_lines(self) -> list[str]:
        lines = ["bin_left,bin_right,count"]
        for k, count in enumerate(self.histogram_counts):
            lines.append(
                f"{repr(self.histogram_edges[k])},{repr(self.histogram_edges[k + 1])},{count}"
            )
        return lines


@dataclass(frozen=True)
class PerturbationReport:
    """Outcome of Monte Carlo checks of the output-change bound."""

    trials: int
    samples: int
    sigma: float
    max_ratio: float
    violations: int
    bound_values: tuple[float, ...]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def phi(net: FeedForwardNet, input_radius: float) -> float:
    """B^2 n^2 h ln(nh) * prod_l ||W_l||_2^2 * sum_l ||W_l||_F^2/||W_l||_2^2."""
    if net.h < 2:
        raise ValueError("phi needs h >= 2 so that ln(nh) > 0")
    stats = weight_norm_stats(net)
    n, h = net.n, net.h
    return (
        input_radius**2
        * n**2
        * h
        * math.log(n * h)
        * stats.spec_product**2
        * stats.fro_spec_ratio_sum
    )


def phi_robust(net: FeedForwardNet, input_radius: float, epsilon: float) -> float:
    """phi with the input radius enlarged by the attack radius epsilon."""
    if epsilon < 0.0:
        raise ValueError("epsilon must be nonnegative")
    return phi(net, input_radius + epsilon)


def bound_value(
    conf_spec: float,
    net: FeedForwardNet,
    stats: ClassStats,
    gamma: float,
    delta: float,
    epsilon: float,
    nu: float | None = None,
) -> BoundReport:
    """Worst-class robust error bound.

    total = nu * conf_spec
          + sqrt( nu^2 d_y / ((m_min - 8 d_y) gamma^2)
                  * (phi_robust + ln(n m_min / delta)) )

    nu defaults to its worst case sqrt(d_y); pass the empirical mean from
    nu_study for a tighter, study-informed report.
    """
    d_y = net.d_y
    if gamma <= 0.0:
        raise ZeroDivisionError("bound requires gamma > 0")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if stats.m_min <= 8 * d_y:
        raise InfeasibleBoundError(
            f"m_min = {stats.m_min} must exceed 8 d_y = {8 * d_y}"
        )
    if nu is None:
        nu = math.sqrt(d_y)
    if not 1.0 <= nu <= math.sqrt(d_y) + 1e-9:
        raise ValueError(f"nu must lie in [1, sqrt(d_y)], got {nu}")
    if conf_spec < 0.0:
        raise ValueError("conf_spec must be nonnegative")

    pp = phi_robust(net, stats.input_radius, epsilon)
    spectral_term = nu * conf_spec
    complexity_term = math.sqrt(
        nu**2 * d_y / ((stats.m_min - 8 * d_y) * gamma**2)
        * (pp + math.log(net.n * stats.m_min / delta))
    )
    return BoundReport(
        spectral_term=spectral_term,
        phi_prime=pp,
        complexity_term=complexity_term,
        total=spectral_term + complexity_term,
        conf_spec=conf_spec,
        nu=nu,
        d_y=d_y,
        m_min=stats.m_min,
        gamma=gamma,
        delta=delta,
        epsilon=epsilon,
        input_radius=stats.input_radius,
        n=net.n,
        h=net.h,
    )


def sigma_star(net: FeedForwardNet, gamma: float, input_radius: float) -> float:
    """Largest admissible weight-noise scale for margin gamma:

    gamma / (114 n B sqrt(h ln(4 n h)) * prod_l ||W_l||_2^((n-1)/n))
    """
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    if input_radius <= 0.0:
        raise ValueError("input radius must be positive")
    stats = weight_norm_stats(net)
    if stats.spec_product <= 0.0:
        raise ValueError("all layers need positive spectral norm")
    n, h = net.n, net.h
    prod_term = stats.spec_product ** ((n - 1) / n)
    return gamma / (114.0 * n * input_radius * math.sqrt(h * math.log(4 * n * h)) * prod_term)


def check_perturbation_bound(
    net: FeedForwardNet,
    xs: np.ndarray,
    sigma: float,
    seed: int,
    trials: int,
) -> PerturbationReport:
    """Monte Carlo check of the output-change bound.

    Per trial, Gaussian layer noise U_l is drawn and scaled down where
    needed so ||U_l||_2 <= ||W_l||_2 / n; the measured output change on
    every sample must stay below
    e * B * prod_l ||W_l||_2 * sum_l ||U_l||_2 / ||W_l||_2.
    Violations beyond 1e-9 slack are counted, not raised.
    """
    if sigma < 0.0:
        raise ValueError("sigma must be nonnegative")
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != net.input_dim:
        raise ValueError(f"xs must be (k, {net.input_dim})")
    stats = weight_norm_stats(net)
    radius = float(np.sqrt((xs * xs).sum(axis=1)).max())
    base_logits, _ = forward_batch(net, xs)

    max_ratio = 0.0
    violations = 0
    bounds = []
    for t in range(trials):
        layers = []
        noise_norms = []
        for idx, w in enumerate(net.layers):
            g = rng.generator(seed, rng.PERTURB, t, idx)
            u = g.normal(0.0, sigma, size=w.shape) if sigma > 0.0 else np.zeros_like(w)
            s_u = _sigma_upper(u) if sigma > 0.0 else 0.0
            cap = stats.spectral[idx] / net.n
            if s_u > cap:
                u = u * (cap / s_u)
                s_u = cap
            layers.append(w + u)
            noise_norms.append(s_u)
        perturbed = FeedForwardNet(layers=tuple(layers), seed=net.seed)
        pert_logits, _ = forward_batch(perturbed, xs)
        change = float(np.sqrt(((pert_logits - base_logits) ** 2).sum(axis=1)).max())
        bound = (
            math.e
            * radius
            * stats.spec_product
            * sum(nn / s for nn, s in zip(noise_norms, stats.spectral))
        )
        bounds.append(bound)
        if change > bound + 1e-9:
            violations += 1
        if bound > 0.0:
            max_ratio = max(max_ratio, change / bound)
    return PerturbationReport(
        trials=trials,
        samples=xs.shape[0],
        sigma=sigma,
        max_ratio=max_ratio,
        violations=violations,
        bound_values=tuple(bounds),
    )


def _sigma_upper(m: np.ndarray) -> float:
    """Spectral norm of a noise draw, padded to an upper estimate.

    Gaussian matrices occasionally stall power iteration inside a
    near-degenerate top cluster; the carried estimate is then accurate to
    the residual, so estimate + residual keeps the layer-budget cap and
    the analytic bound on the safe side.
    """
    try:
        s = tensor.spectral_norm(m)
        return s * (1.0 + 1e-9)
    except tensor.PowerIterationError as err:
        return err.sigma + err.residual


def _overall_accuracy(net: FeedForwardNet, ds: Dataset) -> float:
    logits, _ = forward_batch(net, ds.features)
    return float((logits.argmax(axis=1) == ds.labels).mean())


def _overall_robust_accuracy(
    net: FeedForwardNet, ds: Dataset, attack_cfg: AttackConfig, threads: int
) -> float:
    adv = adversarial_set(net, ds, attack_cfg, threads=threads)
    return _overall_accuracy(net, adv)


def default_sharpness_grid() -> tuple[float, ...]:
    return tuple(round(0.01 * k, 2) for k in range(1, 101))


def sharpness_variance(
    net: FeedForwardNet,
    ds: Dataset,
    grid: tuple[float, ...] | list[float] | None = None,
    n_samples: int = 50,
    drop_threshold: float = 0.05,
    seed: int = 0,
    accuracy: str = "robust",
    attack_cfg: AttackConfig | None = None,
    threads: int = 1,
) -> SharpnessReport:
    """Largest sigma^2 in the grid whose sampled weight perturbations all
    keep the training-accuracy drop within the threshold.

    Accuracy flavor defaults to robust (PGD) training accuracy; pass
    accuracy="clean" to skip the attack. Per-(grid point, sample) seeds
    make the scan deterministic and threshold queries nested.
    """
    if grid is None:
        grid = default_sharpness_grid()
    grid = tuple(float(g) for g in grid)
    if not grid:
        raise ValueError("grid must be nonempty")
    if sorted(grid) != list(grid):
        raise ValueError("grid must be sorted ascending")
    if accuracy not in ("robust", "clean"):
        raise ValueError("accuracy must be 'robust' or 'clean'")
    if accuracy == "robust" and attack_cfg is None:
        raise ValueError("robust accuracy needs an attack config")

    def measure(candidate: FeedForwardNet) -> float:
        # attack noise stays tied to attack_cfg.seed so the baseline and
        # every perturbed net face identical attack randomness
        if accuracy == "clean":
            return _overall_accuracy(candidate, ds)
        return _overall_robust_accuracy(candidate, ds, attack_cfg, threads)

    baseline = measure(net)
    worst_drops = []
    sigma2_star: float | None = None
    for g_idx, sigma2 in enumerate(grid):
        sigma = math.sqrt(sigma2)
        worst = 0.0
        passed = True
        for s_idx in range(n_samples):
            perturbed_layers = []
            for l_idx, w in enumerate(net.layers):
                g = rng.generator(seed, rng.SHARPNESS, g_idx, s_idx, l_idx)
                perturbed_layers.append(w + g.normal(0.0, sigma, size=w.shape))
            candidate = FeedForwardNet(layers=tuple(perturbed_layers), seed=net.seed)
            drop = baseline - measure(candidate)
            worst = max(worst, drop)
            if drop > drop_threshold:
                passed = False
                break
        worst_drops.append(worst)
        if passed:
            sigma2_star = sigma2
    return SharpnessReport(
        sigma2_star=sigma2_star,
        grid=grid,
        worst_drops=tuple(worst_drops),
        n_samples=n_samples,
        drop_threshold=drop_threshold,
        accuracy=accuracy,
        baseline_accuracy=baseline,
        seed=seed,
    )


def _nu_matrix(generator: str, g: np.random.Generator, d_y: int) -> np.ndarray:
    c = g.uniform(0.0, 1.0, size=(d_y, d_y))
    np.fill_diagonal(c, 0.0)
    if generator == "uniform":
        return c
    colsum = c.sum(axis=0)
    colsum[colsum == 0.0] = 1.0
    if generator == "dirichlet":
        return c / colsum[None, :]
    if generator == "colscaled":
        rates = g.uniform(0.0, 1.0, size=d_y)
        return c / colsum[None, :] * rates[None, :]
    raise ValueError(f"unknown generator {generator!r}; choose from {NU_GENERATORS}")


def nu_study(
    d_y: int,
    trials: int,
    seed: int,
    dist_spec: str = DEFAULT_NU_GENERATOR,
) -> NuReport:
    """Monte Carlo distribution of nu = ||C||_1 / ||C||_2.

    Per-trial derived seeds; all-zero draws are skipped and counted. Every
    nu is checked against the 1/sqrt(d_y) .. sqrt(d_y) envelope. The
    spectral norm uses a direct SVD here: the study is a measurement
    harness over 1e5+ matrices, and the power-iteration kernel has its own
    oracle tests.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if dist_spec not in NU_GENERATORS:
        raise ValueError(f"unknown generator {dist_spec!r}; choose from {NU_GENERATORS}")
    sqrt_dy = math.sqrt(d_y)
    nus = np.empty(trials)
    kept = 0
    skipped = 0
    for t in range(trials):
        g = rng.generator(seed, rng.NU_STUDY, t)
        c = _nu_matrix(dist_spec, g, d_y)
        if not c.any():
            skipped += 1
            continue
        sigma = float(np.linalg.svd(c, compute_uv=False)[0])
        nu = float(np.abs(c).sum(axis=0).max()) / sigma
        if not (1.0 / sqrt_dy - 1e-9 <= nu <= sqrt_dy + 1e-9):
            raise AssertionError(f"nu = {nu} escaped [1/sqrt(d_y), sqrt(d_y)]")
        nus[kept] = nu
        kept += 1
    nus = nus[:kept]
    if kept == 0:
        raise ValueError("all generated matrices were zero")
    counts, edges = np.histogram(nus, bins=NU_HISTOGRAM_BINS, range=(0.0, sqrt_dy))
    return NuReport(
        trials=kept,
        d_y=d_y,
        mean_nu=float(nus.mean()),
        max_nu=float(nus.max()),
        min_nu=float(nus.min()),
        histogram_counts=tuple(int(v) for v in counts),
        histogram_edges=tuple(float(v) for v in edges),
        generator=dist_spec,
        seed=seed,
        skipped_zero=skipped,
    )

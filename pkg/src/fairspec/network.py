"""Bias-free n-layer ReLU feedforward networks.

Provides the forward pass, exact reverse-mode gradients for weights and
inputs, the classification margin, per-layer weight-norm statistics,
geometric-mean rebalancing, Gaussian weight perturbation, He-style
initialization, and a binary checkpoint format.

Networks are immutable once built (weight arrays are marked read-only);
training code works on mutable copies of the layer list. Single-sample
`forward`/`backward` operate on vectors; the `*_batch` variants carry
whole sample matrices and are what the attack and training loops use.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import rng, tensor

CHECKPOINT_MAGIC = "fairspec-net-v1"


@dataclass(frozen=True)
class FeedForwardNet:
    """Ordered bias-free weight matrices W_1..W_n; layer l maps dim_{l-1} -> dim_l."""

    layers: tuple[np.ndarray, ...]
    seed: int | None = None

    def __post_init__(self):
        if len(self.layers) == 0:
            raise ValueError("network needs at least one layer")
        checked = []
        prev_out = None
        for idx, w in enumerate(self.layers):
            a = tensor.check_matrix(w).copy()
            if prev_out is not None and a.shape[1] != prev_out:
                raise ValueError(
                    f"layer {idx} has input dim {a.shape[1]} but previous layer outputs {prev_out}"
                )
            prev_out = a.shape[0]
            a.flags.writeable = False
            checked.append(a)
        object.__setattr__(self, "layers", tuple(checked))

    @property
    def n(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].shape[1]

    @property
    def d_y(self) -> int:
        return self.layers[-1].shape[0]

    @property
    def h(self) -> int:
        """Maximum layer width (number of units in the widest layer)."""
        return max(w.shape[0] for w in self.layers)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim,) + tuple(w.shape[0] for w in self.layers)


@dataclass(frozen=True)
class ForwardTrace:
    """Pre-activations z_l = W_l a_{l-1} for every layer plus the input."""

    input: np.ndarray
    pre_activations: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class BatchTrace:
    """Batched ForwardTrace: rows are samples."""

    input: np.ndarray
    pre_activations: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class GradBundle:
    """Per-layer weight gradients plus the gradient w.r.t. the input."""

    weight_grads: tuple[np.ndarray, ...]
    input_grad: np.ndarray


@dataclass(frozen=True)
class WeightStats:
    """Per-layer spectral/Frobenius norms and the derived products.

    beta is the geometric mean of the spectral norms; spec_product is
    their product; fro_spec_ratio_sum is sum_l ||W_l||_F^2 / ||W_l||_2^2.
    """

    spectral: tuple[float, ...]
    frobenius: tuple[float, ...]
    spec_product: float
    fro_spec_ratio_sum: float
    beta: float


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def relu_grad(z: np.ndarray) -> np.ndarray:
    # derivative at exactly 0 is defined as 0
    return (z > 0.0).astype(np.float64)


def forward(net: FeedForwardNet, x: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
    """Evaluate W_n relu(W_{n-1} ... relu(W_1 x)) on a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.input_dim:
        raise ValueError(f"expected input vector of dim {net.input_dim}, got shape {x.shape}")
    pre = []
    a = x
    for idx, w in enumerate(net.layers):
        z = w @ a
        pre.append(z)
        a = relu(z) if idx < net.n - 1 else z
    return a, ForwardTrace(input=x, pre_activations=tuple(pre))


def forward_batch(net: FeedForwardNet, xs: np.ndarray) -> tuple[np.ndarray, BatchTrace]:
    """Batched forward pass; `xs` has one sample per row."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != net.input_dim:
        raise ValueError(f"expected samples of dim {net.input_dim}, got shape {xs.shape}")
    pre = []
    a = xs
    for idx, w in enumerate(net.layers):
        z = a @ w.T
        pre.append(z)
        a = relu(z) if idx < net.n - 1 else z
    return a, BatchTrace(input=xs, pre_activations=tuple(pre))


def backward(net: FeedForwardNet, trace: ForwardTrace, grad_logits: np.ndarray) -> GradBundle:
    """Gradients of grad_logits^T logits w.r.t. every W_l and the input."""
    grad_logits = np.asarray(grad_logits, dtype=np.float64)
    if grad_logits.shape != (net.d_y,):
        raise ValueError(f"grad_logits must have shape ({net.d_y},), got {grad_logits.shape}")
    pre = trace.pre_activations
    if len(pre) != net.n:
        raise ValueError("trace does not match network depth")
    # activations feeding each layer
    acts = [trace.input]
    for z in pre[:-1]:
        acts.append(relu(z))
    weight_grads: list[np.ndarray] = [None] * net.n  # type: ignore[list-item]
    delta = grad_logits
    for idx in range(net.n - 1, -1, -1):
        weight_grads[idx] = np.outer(delta, acts[idx])
        delta = net.layers[idx].T @ delta
        if idx > 0:
            delta = delta * relu_grad(pre[idx - 1])
    return GradBundle(weight_grads=tuple(weight_grads), input_grad=delta)


def backward_batch(
    net: FeedForwardNet, trace: BatchTrace, grad_logits: np.ndarray
) -> tuple[tuple[np.ndarray, ...], np.ndarray]:
    """Batched reverse pass.

    Returns (weight gradients summed over the batch, per-sample input
    gradients). Rows of `grad_logits` may carry per-sample weights so the
    sum realizes any weighted combination.
    """
    grad_logits = np.asarray(grad_logits, dtype=np.float64)
    m = trace.input.shape[0]
    if grad_logits.shape != (m, net.d_y):
        raise ValueError(f"grad_logits must have shape {(m, net.d_y)}, got {grad_logits.shape}")
    pre = trace.pre_activations
    acts = [trace.input]
    for z in pre[:-1]:
        acts.append(relu(z))
    weight_grads: list[np.ndarray] = [None] * net.n  # type: ignore[list-item]
    delta = grad_logits
    for idx in range(net.n - 1, -1, -1):
        weight_grads[idx] = delta.T @ acts[idx]
        delta = delta @ net.layers[idx]
        if idx > 0:
            delta = delta * relu_grad(pre[idx - 1])
    return tuple(weight_grads), delta


def input_gradients(net: FeedForwardNet, trace: BatchTrace, grad_logits: np.ndarray) -> np.ndarray:
    """Per-sample input gradients only; skips the weight-gradient products."""
    grad_logits = np.asarray(grad_logits, dtype=np.float64)
    pre = trace.pre_activations
    delta = grad_logits
    for idx in range(net.n - 1, -1, -1):
        delta = delta @ net.layers[idx]
        if idx > 0:
            delta = delta * relu_grad(pre[idx - 1])
    return delta


def margin(logits: np.ndarray, y: int) -> float:
    """logits[y] minus the best competing logit; 0 on an exact tie."""
    logits = np.asarray(logits, dtype=np.float64)
    d_y = logits.shape[0]
    if d_y < 2:
        raise ValueError("margin needs at least two classes")
    if not 0 <= y < d_y:
        raise ValueError(f"label {y} out of range [0, {d_y})")
    rival = np.delete(logits, y).max()
    return float(logits[y] - rival)


def weight_norm_stats(net: FeedForwardNet) -> WeightStats:
    spectral = tuple(tensor.spectral_norm(w) for w in net.layers)
    frobenius = tuple(tensor.frobenius_norm(w) for w in net.layers)
    spec_product = 1.0
    for s in spectral:
        spec_product *= s
    ratio_sum = 0.0
    for s, f in zip(spectral, frobenius):
        if s == 0.0:
            raise ValueError("layer with zero spectral norm has no Frobenius/spectral ratio")
        ratio_sum += (f * f) / (s * s)
    beta = spec_product ** (1.0 / net.n)
    return WeightStats(
        spectral=spectral,
        frobenius=frobenius,
        spec_product=spec_product,
        fro_spec_ratio_sum=ratio_sum,
        beta=beta,
    )


def rebalance(net: FeedForwardNet) -> FeedForwardNet:
    """Rescale every layer to the geometric-mean spectral norm beta.

    ReLU positive homogeneity keeps the network function unchanged; the
    product of spectral norms is preserved.
    """
    stats = weight_norm_stats(net)
    for idx, s in enumerate(stats.spectral):
        if s == 0.0:
            raise ValueError(f"layer {idx} has zero spectral norm; cannot rebalance")
    new_layers = tuple((stats.beta / s) * w for w, s in zip(net.layers, stats.spectral))
    return FeedForwardNet(layers=new_layers, seed=net.seed)


def perturb(
    net: FeedForwardNet, sigma: float, seed: int
) -> tuple[FeedForwardNet, tuple[float, ...]]:
    """Add i.i.d. N(0, sigma^2) noise to every weight.

    Deterministic given `seed`; per-layer streams are derived so noise in
    one layer is independent of the shapes of the others. Returns the
    perturbed network and the spectral norm of each layer's noise matrix.
    """
    if sigma < 0.0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0.0:
        return net, tuple(0.0 for _ in net.layers)
    new_layers = []
    noise_norms = []
    for idx, w in enumerate(net.layers):
        g = rng.generator(seed, rng.PERTURB, idx)
        u = g.normal(0.0, sigma, size=w.shape)
        new_layers.append(w + u)
        try:
            noise_norms.append(tensor.spectral_norm(u))
        except tensor.PowerIterationError as err:
            # stalled in a near-degenerate cluster; pad by the residual so
            # downstream bound checks stay on the safe side
            noise_norms.append(err.sigma + err.residual)
    return FeedForwardNet(layers=tuple(new_layers), seed=net.seed), tuple(noise_norms)


def he_init(dims: tuple[int, ...] | list[int], seed: int) -> FeedForwardNet:
    """He-scaled Gaussian initialization: std sqrt(2 / fan_in) per layer."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2:
        raise ValueError("need at least input and output dims")
    layers = []
    for idx in range(len(dims) - 1):
        fan_in, fan_out = dims[idx], dims[idx + 1]
        g = rng.generator(seed, rng.INIT, idx)
        layers.append(g.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
    return FeedForwardNet(layers=tuple(layers), seed=seed)


def save_checkpoint(net: FeedForwardNet, path) -> None:
    """Write a checkpoint: one JSON header line, then per-layer little-endian
    float64 blocks in layer order, each row-major."""
    header = {
        "format": CHECKPOINT_MAGIC,
        "dims": list(net.dims),
        "n": net.n,
        "h": net.h,
        "d_y": net.d_y,
        "seed": net.seed,
    }
    blob = b"".join(np.ascontiguousarray(w, dtype="<f8").tobytes() for w in net.layers)
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        f.write(b"\n")
        f.write(blob)


def load_checkpoint(path) -> FeedForwardNet:
    with open(path, "rb") as f:
        raw = f.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ValueError("checkpoint missing header line")
    header = json.loads(raw[:nl].decode("utf-8"))
    if header.get("format") != CHECKPOINT_MAGIC:
        raise ValueError(f"unrecognized checkpoint format {header.get('format')!r}")
    dims = [int(d) for d in header["dims"]]
    blob = raw[nl + 1 :]
    layers = []
    offset = 0
    for idx in range(len(dims) - 1):
        rows, cols = dims[idx + 1], dims[idx]
        nbytes = rows * cols * 8
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise ValueError("checkpoint truncated")
        layers.append(np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(rows, cols))
        offset += nbytes
    if offset != len(blob):
        raise ValueError("checkpoint has trailing bytes")
    seed = header["seed"]
    return FeedForwardNet(layers=tuple(layers), seed=None if seed is None else int(seed))

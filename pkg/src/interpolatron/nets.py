"""Small multilayer perceptron with hand-derived backpropagation.

Parameters live in one flat vector so the optimizers can treat training
as a generic problem.  The objective is mean cross-entropy over the
batch plus a weight-decay penalty lambda * ||params||^2 (so its gradient
contributes 2 * lambda * params).  Hidden layers use the rectifier with
derivative 0 at exactly 0; the output is a max-subtracted softmax.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import KEY_PARAM_INIT, Problem, batch_indices, substream_seed
from .problems import BlobsDataset

__all__ = [
    "MlpArchitecture",
    "mlp_loss",
    "mlp_gradient",
    "finite_difference_gradient",
    "MlpBlobsProblem",
]


@dataclass(frozen=True)
class MlpArchitecture:
    """Layer widths (input, hidden..., output) and the weight-decay
    coefficient.  Parameter layout: for each layer, the weight matrix in
    row-major order followed by the bias vector."""

    layer_widths: tuple
    weight_decay: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 2:
            raise ValueError("need at least input and output widths")
        if any(w <= 0 for w in self.layer_widths):
            raise ValueError("layer widths must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be nonnegative")

    @property
    def param_count(self) -> int:
        ws = self.layer_widths
        return sum(a * b + b for a, b in zip(ws, ws[1:]))

    def unpack(self, params: np.ndarray):
        """Split the flat parameter vector into (W, b) pairs."""
        if params.shape[0] != self.param_count:
            raise ValueError(
                f"expected {self.param_count} parameters, got {params.shape[0]}"
            )
        layers = []
        pos = 0
        ws = self.layer_widths
        for a, b in zip(ws, ws[1:]):
            W = params[pos:pos + a * b].reshape(a, b)
            pos += a * b
            bias = params[pos:pos + b]
            pos += b
            layers.append((W, bias))
        return layers

    def init_params(self, seed: int) -> np.ndarray:
        """Variance-scaled normal weights (variance 2 / fan-in), zero
        biases, drawn from a dedicated seeded stream."""
        rng = np.random.default_rng(substream_seed(seed, KEY_PARAM_INIT))
        chunks = []
        ws = self.layer_widths
        for a, b in zip(ws, ws[1:]):
            chunks.append(rng.standard_normal(a * b) * np.sqrt(2.0 / a))
            chunks.append(np.zeros(b))
        return np.concatenate(chunks)


def _forward(arch: MlpArchitecture, params: np.ndarray, x: np.ndarray):
    """Forward pass; returns per-layer activations (inputs first) and the
    stable log-softmax of the outputs."""
    layers = arch.unpack(params)
    acts = [x]
    h = x
    for li, (W, b) in enumerate(layers):
        z = h @ W + b
        if li < len(layers) - 1:
            h = np.maximum(z, 0.0)
        else:
            h = z
        acts.append(h)
    logits = acts[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return acts, shifted - log_norm


def mlp_loss(arch: MlpArchitecture, params: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy over the batch plus weight decay."""
    _, log_probs = _forward(arch, params, np.atleast_2d(x))
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    ce = -float(np.mean(log_probs[np.arange(y.size), y]))
    return ce + arch.weight_decay * float(params @ params)


def mlp_gradient(arch: MlpArchitecture, params: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact gradient of ``mlp_loss`` by backpropagation."""
    x = np.atleast_2d(x)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    n = x.shape[0]
    layers = arch.unpack(params)
    acts, log_probs = _forward(arch, params, x)

    # dL/dlogits of mean cross-entropy: (softmax - one-hot) / n
    delta = np.exp(log_probs)
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads = [None] * len(layers)
    for li in range(len(layers) - 1, -1, -1):
        W, _ = layers[li]
        h_in = acts[li]
        gW = h_in.T @ delta
        gb = delta.sum(axis=0)
        grads[li] = (gW, gb)
        if li > 0:
            delta = delta @ W.T
            delta[acts[li] <= 0.0] = 0.0  # rectifier derivative, 0 at 0

    flat = np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])
    return flat + 2.0 * arch.weight_decay * params


def finite_difference_gradient(lossfn, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient oracle: (f(x + h e_i) - f(x - h e_i)) / 2h."""
    if not step > 0:
        raise ValueError("step must be positive")
    g = np.zeros_like(x, dtype=np.float64)
    for i in range(x.shape[0]):
        e = np.zeros_like(g)
        e[i] = step
        g[i] = (lossfn(x + e) - lossfn(x - e)) / (2.0 * step)
    return g


class MlpBlobsProblem(Problem):
    """Training an MLP classifier on a blobs dataset, exposed through the
    generic problem interface (flat parameter vector, seeded batches)."""

    def __init__(self, arch: MlpArchitecture, dataset: BlobsDataset):
        if arch.layer_widths[0] != dataset.features:
            raise ValueError("input width must match dataset features")
        if arch.layer_widths[-1] != dataset.classes:
            raise ValueError("output width must match dataset classes")
        self.arch = arch
        self.dataset = dataset

    @property
    def dim(self) -> int:
        return self.arch.param_count

    @property
    def dataset_size(self) -> int:
        return self.dataset.n

    def loss(self, x: np.ndarray) -> float:
        return mlp_loss(self.arch, x, self.dataset.points, self.dataset.labels)

    def full_gradient(self, x: np.ndarray) -> np.ndarray:
        return mlp_gradient(self.arch, x, self.dataset.points, self.dataset.labels)

    def stochastic_gradient(self, x: np.ndarray, batch_seed: int, batch_size: int) -> np.ndarray:
        idx = batch_indices(batch_seed, self.dataset.n, batch_size)
        return mlp_gradient(self.arch, x, self.dataset.points[idx], self.dataset.labels[idx])

    def batch_loss(self, x: np.ndarray, indices: np.ndarray) -> float:
        return mlp_loss(self.arch, x, self.dataset.points[indices], self.dataset.labels[indices])

    def initial_params(self, seed: int) -> np.ndarray:
        return self.arch.init_params(seed)

"""Shared numeric types: vectors, mixing coefficients, history windows,
step schedules, and the optimization-problem interface.

All arithmetic is 64-bit floating point.  Every type here is immutable
after construction and safe to share across threads; randomness only
enters through explicit integer seeds.
"""

from __future__ import annotations

import enum
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

__all__ = [
    "as_vector",
    "MixingMode",
    "MixingCoefficients",
    "linear_combination",
    "HistoryWindow",
    "StepSchedule",
    "Problem",
    "batch_indices",
    "substream_seed",
]

#: sub-stream keys carved out of the per-run seed space; optimizer steps
#: use keys 1..T, so reserved keys sit outside that range.
KEY_EVAL_BATCH = 0
KEY_HISTORY_INIT = 1 << 47
KEY_PARAM_INIT = (1 << 47) + 1

_ALPHA_SUM_TOL = 1e-12


def substream_seed(seed: int, key: int) -> int:
    """Combine a run seed and a sub-stream key into one RNG seed.

    Injective for ``key < 2**48``, so per-step batch streams (key = step
    index) never collide with the reserved streams above.
    """
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    return (seed << 48) + key


def as_vector(values) -> np.ndarray:
    """Validate and return a dense 1-D float64 vector.

    Rejects empty input and any non-finite entry.  The returned array is
    a fresh copy marked read-only; treat all vectors as immutable values.
    """
    v = np.array(values, dtype=np.float64, copy=True)
    if v.ndim != 1:
        v = v.reshape(-1)
    if v.size == 0:
        raise ValueError("vector must have positive dimension")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    v.flags.writeable = False
    return v


class MixingMode(enum.Enum):
    """Constraint set for mixing coefficients.

    INTERPOLATION requires every weight in [0, 1]; AFFINE only requires
    the weights to sum to one (signs free).
    """

    INTERPOLATION = "interpolation"
    AFFINE = "affine"


@dataclass(frozen=True)
class MixingCoefficients:
    """Weights over a k-step history window.

    Invariants: k >= 1, the weights sum to one (within 1e-12), and in
    INTERPOLATION mode every weight lies in [0, 1].
    """

    alphas: tuple
    mode: MixingMode = MixingMode.INTERPOLATION

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        object.__setattr__(self, "alphas", alphas)
        if len(alphas) < 1:
            raise ValueError("mixing coefficients need k >= 1 weights")
        total = math.fsum(alphas)
        if abs(total - 1.0) > _ALPHA_SUM_TOL:
            raise ValueError(f"alphas must sum to 1 (got {total!r})")
        if self.mode is MixingMode.INTERPOLATION:
            for i, a in enumerate(alphas):
                if not (0.0 <= a <= 1.0):
                    raise ValueError(
                        f"interpolation weight alphas[{i}]={a!r} outside [0, 1]"
                    )

    @property
    def k(self) -> int:
        return len(self.alphas)


def linear_combination(coeffs: MixingCoefficients, vectors) -> np.ndarray:
    """Return sum_i alpha_i * v_i componentwise.

    The accumulation order is fixed (index 0 first) so degenerate weight
    patterns like (1,) and (1, 0) reproduce their single-vector result
    bitwise, which the optimizer-reduction tests rely on.
    """
    vectors = list(vectors)
    if len(vectors) != coeffs.k:
        raise ValueError(
            f"expected {coeffs.k} vectors, got {len(vectors)}"
        )
    dim = vectors[0].shape[0]
    for v in vectors[1:]:
        if v.shape[0] != dim:
            raise ValueError("vectors must share one dimension")
    acc = coeffs.alphas[0] * vectors[0]
    for a, v in zip(coeffs.alphas[1:], vectors[1:]):
        acc = acc + a * v
    return acc


@dataclass(frozen=True)
class HistoryWindow:
    """The last k iterates and last k gradients, newest first.

    ``push`` evicts the oldest pair; ``with_latest_gradient`` shifts a
    freshly evaluated gradient in front of the stored ones, which is how
    the run loop assembles the window consumed by an update (the newest
    stored gradient always lags one iterate behind between steps).
    """

    iterates: tuple
    gradients: tuple

    def __post_init__(self):
        object.__setattr__(self, "iterates", tuple(self.iterates))
        object.__setattr__(self, "gradients", tuple(self.gradients))
        if len(self.iterates) < 1:
            raise ValueError("history window needs k >= 1 entries")
        if len(self.iterates) != len(self.gradients):
            raise ValueError(
                f"iterates ({len(self.iterates)}) and gradients "
                f"({len(self.gradients)}) must have equal length"
            )
        dim = self.iterates[0].shape[0]
        for v in self.iterates + self.gradients:
            if v.shape[0] != dim:
                raise ValueError("window entries must share one dimension")

    @property
    def k(self) -> int:
        return len(self.iterates)

    @property
    def dim(self) -> int:
        return self.iterates[0].shape[0]

    def push(self, iterate: np.ndarray, gradient: np.ndarray) -> "HistoryWindow":
        return HistoryWindow(
            (iterate,) + self.iterates[:-1],
            (gradient,) + self.gradients[:-1],
        )

    def with_latest_gradient(self, gradient: np.ndarray) -> "HistoryWindow":
        return HistoryWindow(self.iterates, (gradient,) + self.gradients[:-1])


@dataclass(frozen=True)
class StepSchedule:
    """Step-decay learning-rate schedule.

    The value at a given epoch is ``beta0 * factor**m`` where m counts
    the decay epochs that are <= the epoch.
    """

    beta0: float
    decay_epochs: tuple = ()
    factor: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "decay_epochs", tuple(int(e) for e in self.decay_epochs))
        if not self.beta0 > 0:
            raise ValueError(f"beta0 must be positive, got {self.beta0!r}")
        if not (0.0 < self.factor < 1.0):
            raise ValueError(f"factor must lie in (0, 1), got {self.factor!r}")
        for e in self.decay_epochs:
            if e <= 0:
                raise ValueError("decay epochs must be positive")
        if any(b <= a for a, b in zip(self.decay_epochs, self.decay_epochs[1:])):
            raise ValueError("decay epochs must be strictly increasing")

    def value(self, epoch: int) -> float:
        if epoch < 0:
            raise ValueError("epoch must be nonnegative")
        m = sum(1 for e in self.decay_epochs if e <= epoch)
        return self.beta0 * self.factor**m

    def with_beta0(self, beta0: float) -> "StepSchedule":
        return StepSchedule(beta0, self.decay_epochs, self.factor)


def batch_indices(batch_seed: int, n: int, batch_size: int) -> np.ndarray:
    """Deterministic mini-batch index draw, without replacement.

    ``batch_size == n`` returns 0..n-1 in natural order so that a
    full-data "stochastic" gradient is bitwise equal to the full
    gradient (a permuted summation order would break that).
    """
    if not (1 <= batch_size <= n):
        raise ValueError(f"batch_size must lie in [1, {n}], got {batch_size}")
    if batch_size == n:
        return np.arange(n)
    rng = np.random.default_rng(batch_seed)
    return rng.choice(n, size=batch_size, replace=False)


class Problem(ABC):
    """A differentiable objective with a seeded stochastic gradient.

    Implementations must be stateless with respect to evaluation: the
    same (x, batch_seed, batch_size) always yields the identical
    gradient, and batch_size equal to the dataset size reproduces the
    full gradient exactly.  ``dataset_size`` is None for analytic
    objectives, whose stochastic gradient is simply the full gradient.
    """

    @property
    @abstractmethod
    def dim(self) -> int: ...

    @property
    def dataset_size(self):
        return None

    @abstractmethod
    def loss(self, x: np.ndarray) -> float: ...

    @abstractmethod
    def full_gradient(self, x: np.ndarray) -> np.ndarray: ...

    def stochastic_gradient(self, x: np.ndarray, batch_seed: int, batch_size: int) -> np.ndarray:
        # analytic default: no data, so every batch is the full objective
        return self.full_gradient(x)

    def batch_loss(self, x: np.ndarray, indices: np.ndarray) -> float:
        return self.loss(x)

"""Update rules and the generic seeded run loop.

The k-step interpolation update forms a convex combination of the last k
iterates and the last k stochastic gradients:

    x_new = sum_i alpha_i x_i  -  beta * sum_i alpha_i g_i

Baselines: plain SGD, the heavy ball (two-point extrapolation), its
gradient-extrapolating variant, and bias-corrected Adam.  The adaptive
variants recompute the mixing weights from the gradient window each step.

Degenerate settings reduce bitwise to SGD (k = 1, weights (1, 0, ...),
or extrapolation coefficient tau = 0); the combination arithmetic is
ordered so those reductions are exact, and the run loop draws every
batch from a counter-based stream keyed on (seed, step), so two runs of
the same spec are bit-for-bit identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import anderson as _anderson
from .core import (
    KEY_EVAL_BATCH,
    KEY_HISTORY_INIT,
    HistoryWindow,
    MixingCoefficients,
    MixingMode,
    Problem,
    StepSchedule,
    linear_combination,
    substream_seed,
)

__all__ = [
    "sgd_step",
    "momentum_step",
    "nesterov_step",
    "AdamState",
    "adam_step",
    "interpolatron_step",
    "init_history",
    "OptimizerSpec",
    "TraceRow",
    "RunResult",
    "run_optimizer",
    "KINDS",
]

KINDS = (
    "sgd",
    "momentum",
    "nesterov",
    "adam",
    "interpolatron",
    "anderson",
    "projected_anderson",
)

DIVERGENCE_LOSS = 1e12
EVAL_BATCH_SIZE = 128


def sgd_step(x: np.ndarray, g: np.ndarray, beta: float) -> np.ndarray:
    return x - beta * g


def momentum_step(
    x_t: np.ndarray, x_prev: np.ndarray, g_t: np.ndarray, tau: float, beta: float
) -> np.ndarray:
    """Heavy-ball update (1 + tau) x_t - tau x_prev - beta g_t."""
    return (1.0 + tau) * x_t - tau * x_prev - beta * g_t


def nesterov_step(
    x_t: np.ndarray,
    x_prev: np.ndarray,
    g_t: np.ndarray,
    g_prev: np.ndarray,
    tau: float,
    beta: float,
) -> np.ndarray:
    """Heavy-ball update with the gradient extrapolated the same way:
    (1 + tau) x_t - tau x_prev - beta [(1 + tau) g_t - tau g_prev]."""
    return (1.0 + tau) * x_t - tau * x_prev - beta * (
        (1.0 + tau) * g_t - tau * g_prev
    )


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray

    @staticmethod
    def zeros(dim: int) -> "AdamState":
        return AdamState(np.zeros(dim), np.zeros(dim))


def adam_step(
    state: AdamState,
    x: np.ndarray,
    g: np.ndarray,
    beta: float,
    betas: tuple = (0.9, 0.999),
    eps: float = 1e-8,
    t: int = 1,
):
    """Bias-corrected adaptive-moment update; returns (x_new, state)."""
    if t < 1:
        raise ValueError("step index t starts at 1")
    b1, b2 = betas
    m = b1 * state.m + (1.0 - b1) * g
    v = b2 * state.v + (1.0 - b2) * g * g
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    x_new = x - beta * m_hat / (np.sqrt(v_hat) + eps)
    return x_new, AdamState(m, v)


def interpolatron_step(
    history: HistoryWindow, alphas: MixingCoefficients, beta: float
) -> np.ndarray:
    """Convex-combination update over a window whose newest gradient was
    evaluated at the newest iterate."""
    if alphas.mode is not MixingMode.INTERPOLATION:
        raise ValueError("interpolation update requires interpolation-mode weights")
    if alphas.k != history.k:
        raise ValueError(
            f"weights have k={alphas.k} but history has k={history.k}"
        )
    combined_x = linear_combination(alphas, history.iterates)
    combined_g = linear_combination(alphas, history.gradients)
    return combined_x - beta * combined_g


def init_history(
    x0: np.ndarray,
    k: int,
    strategy: str = "replicate_zero",
    stddev: float = 0.01,
    seed: int = 0,
) -> HistoryWindow:
    """Build the pre-run history window of k iterates and k gradients.

    ``replicate_zero`` fills every iterate slot with x0 and every
    gradient slot with zero, which makes the degenerate reductions to
    SGD exact.  ``truncated_normal`` keeps the newest iterate at x0 and
    fills the older iterates and all gradients with seeded normal draws
    clipped by rejection to +/- 2 stddev.
    """
    if k < 1:
        raise ValueError("history length k must be >= 1")
    if strategy == "replicate_zero":
        zero = np.zeros_like(x0)
        return HistoryWindow((x0,) * k, (zero,) * k)
    if strategy == "truncated_normal":
        rng = np.random.default_rng(substream_seed(seed, KEY_HISTORY_INIT))

        def draw():
            out = np.empty(x0.shape[0])
            for i in range(out.size):
                val = rng.standard_normal() * stddev
                while abs(val) > 2.0 * stddev:
                    val = rng.standard_normal() * stddev
                out[i] = val
            return out

        iterates = (x0,) + tuple(draw() for _ in range(k - 1))
        gradients = tuple(draw() for _ in range(k))
        return HistoryWindow(iterates, gradients)
    raise ValueError(f"unknown history init strategy {strategy!r}")


@dataclass(frozen=True)
class OptimizerSpec:
    """Everything that defines one update rule.

    ``k`` is the history length (1 for sgd/momentum/nesterov/adam),
    ``alphas`` is required for the interpolation kind and must match k,
    ``tau`` in [0, 1) applies to momentum and nesterov, and the adaptive
    kinds take the Gram ridge.  History initialization defaults to
    replicate-zero; truncated-normal is available behind ``history_init``.
    """

    kind: str
    k: int = 1
    alphas: MixingCoefficients | None = None
    tau: float = 0.0
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    ridge: float = _anderson.DEFAULT_RIDGE
    history_init: str = "replicate_zero"
    init_stddev: float = 0.01

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.k < 1:
            raise ValueError("history length k must be >= 1")
        if self.kind in ("sgd", "momentum", "nesterov", "adam") and self.k != 1:
            raise ValueError(f"kind {self.kind!r} uses k = 1")
        if self.kind == "interpolatron":
            if self.alphas is None:
                raise ValueError("interpolatron requires mixing weights")
            if self.alphas.k != self.k:
                raise ValueError(
                    f"alphas have k={self.alphas.k} but spec has k={self.k}"
                )
            if self.alphas.mode is not MixingMode.INTERPOLATION:
                raise ValueError("interpolatron weights must be interpolation mode")
        elif self.alphas is not None:
            raise ValueError(f"kind {self.kind!r} does not take fixed weights")
        if self.kind in ("momentum", "nesterov") and not (0.0 <= self.tau < 1.0):
            raise ValueError(f"tau must lie in [0, 1), got {self.tau!r}")
        if self.kind == "anderson" and self.k < 2:
            raise ValueError("adaptive mixing needs k >= 2")
        if self.kind == "projected_anderson" and self.k != 2:
            raise ValueError("projected mixing is defined only for k = 2")
        if self.kind == "adam":
            b1, b2 = self.adam_betas
            if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
                raise ValueError("adam betas must lie in [0, 1)")
            if not self.adam_eps > 0:
                raise ValueError("adam eps must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")
        if self.history_init not in ("replicate_zero", "truncated_normal"):
            raise ValueError(f"unknown history init {self.history_init!r}")


@dataclass(frozen=True)
class TraceRow:
    """One optimization step's record."""

    step: int
    epoch: int
    beta: float
    loss: float
    grad_norm: float
    alpha: tuple | None = None


@dataclass(frozen=True)
class RunResult:
    trace: tuple
    final_iterate: np.ndarray
    seed: int
    diverged_at: int | None = None
    iterates: tuple | None = None
    gradients: tuple | None = None

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None


def _steps_per_epoch(problem: Problem, batch_size: int | None) -> int:
    n = problem.dataset_size
    if n is None or batch_size is None:
        return 1
    return math.ceil(n / batch_size)


def run_optimizer(
    problem: Problem,
    spec: OptimizerSpec,
    schedule: StepSchedule,
    steps: int,
    batch_size: int | None = None,
    seed: int = 0,
    x0: np.ndarray | None = None,
    record_iterates: bool = False,
    record_gradients: bool = False,
) -> RunResult:
    """Run ``steps`` updates of the given rule from x0.

    Each step t draws its batch from the stream keyed on (seed, t),
    evaluates the stochastic gradient at the newest iterate, applies the
    update at the schedule's rate for the step's epoch, and records the
    loss on a fixed evaluation batch drawn once per run.  The run stops
    early (with ``diverged_at`` set to the step index) as soon as the
    loss is non-finite, exceeds 1e12 in magnitude, or any iterate entry
    is non-finite.
    """
    if steps < 1:
        raise ValueError("need at least one step")
    n = problem.dataset_size
    if n is not None:
        if batch_size is None:
            batch_size = n
        if not (1 <= batch_size <= n):
            raise ValueError(f"batch_size must lie in [1, {n}]")
    if x0 is None:
        if hasattr(problem, "initial_params"):
            x0 = problem.initial_params(seed)
        else:
            raise ValueError("problem has no default start; pass x0")

    eval_indices = None
    if n is not None:
        rng = np.random.default_rng(substream_seed(seed, KEY_EVAL_BATCH))
        eval_indices = rng.choice(n, size=min(EVAL_BATCH_SIZE, n), replace=False)

    def eval_loss(x):
        if eval_indices is None:
            return problem.loss(x)
        return problem.batch_loss(x, eval_indices)

    per_epoch = _steps_per_epoch(problem, batch_size)
    window = init_history(
        x0, spec.k, strategy=spec.history_init, stddev=spec.init_stddev, seed=seed
    )
    x = x0
    x_prev = x0
    g_prev = np.zeros_like(x0)
    adam = AdamState.zeros(x0.shape[0])

    trace = []
    iterates = []
    gradients = []
    diverged_at = None

    for t in range(1, steps + 1):
        epoch = (t - 1) // per_epoch
        beta = schedule.value(epoch)
        if n is None:
            g = problem.stochastic_gradient(x, substream_seed(seed, t), 0)
        else:
            g = problem.stochastic_gradient(x, substream_seed(seed, t), batch_size)

        alpha_used = None
        if spec.kind == "sgd":
            x_new = sgd_step(x, g, beta)
        elif spec.kind == "momentum":
            x_new = momentum_step(x, x_prev, g, spec.tau, beta)
        elif spec.kind == "nesterov":
            x_new = nesterov_step(x, x_prev, g, g_prev, spec.tau, beta)
        elif spec.kind == "adam":
            x_new, adam = adam_step(
                adam, x, g, beta, spec.adam_betas, spec.adam_eps, t
            )
        elif spec.kind == "interpolatron":
            step_window = window.with_latest_gradient(g)
            x_new = interpolatron_step(step_window, spec.alphas, beta)
        else:  # anderson / projected_anderson
            step_window = window.with_latest_gradient(g)
            x_new, coeffs, _fallback = _anderson.anderson_step(
                step_window,
                beta,
                ridge=spec.ridge,
                projected=(spec.kind == "projected_anderson"),
            )
            alpha_used = coeffs.alphas

        window = window.push(x_new, g)
        x_prev, x = x, x_new
        g_prev = g

        loss = eval_loss(x)
        row = TraceRow(
            step=t,
            epoch=epoch,
            beta=beta,
            loss=loss,
            grad_norm=float(np.linalg.norm(g)),
            alpha=alpha_used,
        )
        trace.append(row)
        if record_iterates:
            iterates.append(x)
        if record_gradients:
            gradients.append(g)

        if (
            not np.isfinite(loss)
            or abs(loss) > DIVERGENCE_LOSS
            or not np.all(np.isfinite(x))
        ):
            diverged_at = t
            break

    return RunResult(
        trace=tuple(trace),
        final_iterate=x,
        seed=seed,
        diverged_at=diverged_at,
        iterates=tuple(iterates) if record_iterates else None,
        gradients=tuple(gradients) if record_gradients else None,
    )

"""Data-driven mixing weights: pick the affine combination of the last k
stochastic gradients with the smallest norm.

The minimizer over {alpha : sum alpha = 1} solves the k x k Gram system
M w = 1 followed by normalization alpha = w / sum(w), where
M[i, j] = <g_i, g_j>.  A trace-scaled ridge keeps the solve bounded when
gradients are nearly parallel, and a pivot-magnitude check falls back to
uniform weights when even the ridged system is degenerate.  For k = 2
there is also a closed-form variant projected onto [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import HistoryWindow, MixingCoefficients, MixingMode, linear_combination

__all__ = [
    "GradientBlock",
    "gram_matrix",
    "anderson_mixing",
    "projected_mixing_k2",
    "anderson_step",
    "DEFAULT_RIDGE",
]

DEFAULT_RIDGE = 1e-10

# degenerate-difference threshold for the projected k=2 variant
_DEGENERATE_SQ = 1e-24


@dataclass(frozen=True)
class GradientBlock:
    """The last k gradients, newest first, sharing one dimension."""

    gradients: tuple

    def __post_init__(self):
        object.__setattr__(self, "gradients", tuple(self.gradients))
        if len(self.gradients) < 1:
            raise ValueError("gradient block needs k >= 1 entries")
        dim = self.gradients[0].shape[0]
        for g in self.gradients[1:]:
            if g.shape[0] != dim:
                raise ValueError("gradients must share one dimension")

    @property
    def k(self) -> int:
        return len(self.gradients)


def gram_matrix(block: GradientBlock) -> np.ndarray:
    """k x k matrix of pairwise gradient inner products (symmetric PSD)."""
    G = np.stack(block.gradients)
    M = G @ G.T
    return 0.5 * (M + M.T)


def _solve_with_pivoting(M: np.ndarray, rhs: np.ndarray, pivot_floor: float):
    """Gaussian elimination with partial pivoting on a k x k system.

    Returns None when any pivot magnitude drops below ``pivot_floor``,
    signalling a degenerate system to the caller.
    """
    k = M.shape[0]
    A = np.hstack([M.astype(np.float64, copy=True), rhs.reshape(-1, 1)])
    for col in range(k):
        p = col + int(np.argmax(np.abs(A[col:, col])))
        if abs(A[p, col]) < pivot_floor:
            return None
        if p != col:
            A[[col, p]] = A[[p, col]]
        for r in range(col + 1, k):
            f = A[r, col] / A[col, col]
            A[r, col:] -= f * A[col, col:]
    x = np.zeros(k)
    for r in range(k - 1, -1, -1):
        x[r] = (A[r, k] - A[r, r + 1:k] @ x[r + 1:]) / A[r, r]
    return x


def anderson_mixing(block: GradientBlock, ridge: float = DEFAULT_RIDGE):
    """Affine weights minimizing the combined-gradient norm.

    Solves (M + ridge * tr(M)/k * I) w = 1 and normalizes to sum one.
    Scaling the ridge by the Gram trace makes the weights invariant under
    rescaling all gradients.  Returns ``(coeffs, fallback)`` where
    fallback is True when the solve degenerated (pivot below
    1e-14 * tr(M), e.g. all-zero gradients) and uniform weights were
    substituted.
    """
    if ridge < 0:
        raise ValueError(f"ridge must be nonnegative, got {ridge!r}")
    k = block.k
    if k == 1:
        return MixingCoefficients((1.0,), MixingMode.AFFINE), False
    M = gram_matrix(block)
    trace = float(np.trace(M))
    A = M + (ridge * trace / k) * np.eye(k)
    w = _solve_with_pivoting(A, np.ones(k), pivot_floor=1e-14 * max(trace, 1e-300))
    if w is not None:
        total = float(np.sum(w))
        if abs(total) > 1e-300 and np.all(np.isfinite(w / total)):
            return MixingCoefficients(tuple(w / total), MixingMode.AFFINE), False
    uniform = tuple(1.0 / k for _ in range(k))
    return MixingCoefficients(uniform, MixingMode.AFFINE), True


def projected_mixing_k2(g_new: np.ndarray, g_old: np.ndarray) -> MixingCoefficients:
    """Interpolation weights (1 - a, a) for k = 2, with the unconstrained
    norm minimizer a = <g_new, g_new - g_old> / ||g_new - g_old||**2
    clamped to [0, 1].

    The objective ||(1-a) g_new + a g_old||**2 is a parabola in a, so
    clamping the unconstrained minimizer is exact on the box.  When the
    two gradients are (numerically) identical every weight gives the
    same combination; the newest gradient wins: (1, 0).
    """
    if g_new.shape != g_old.shape:
        raise ValueError("gradient dimensions must match")
    diff = g_new - g_old
    denom = float(diff @ diff)
    if denom < _DEGENERATE_SQ:
        return MixingCoefficients((1.0, 0.0), MixingMode.INTERPOLATION)
    a = float(g_new @ diff) / denom
    a = min(1.0, max(0.0, a))
    return MixingCoefficients((1.0 - a, a), MixingMode.INTERPOLATION)


def anderson_step(
    history: HistoryWindow,
    beta: float,
    ridge: float = DEFAULT_RIDGE,
    projected: bool = False,
):
    """One adaptive-mixing update on a history window whose newest
    gradient was evaluated at the newest iterate.

    Returns ``(new_iterate, coeffs, fallback)``; the weights are logged
    per step so a trace can report how often they landed in [0, 1].
    """
    if projected and history.k != 2:
        raise ValueError("projected mixing is defined only for k = 2")
    if projected:
        coeffs = projected_mixing_k2(history.gradients[0], history.gradients[1])
        fallback = False
    else:
        coeffs, fallback = anderson_mixing(GradientBlock(history.gradients), ridge)
    combined_x = linear_combination(coeffs, history.iterates)
    combined_g = linear_combination(coeffs, history.gradients)
    return combined_x - beta * combined_g, coeffs, fallback

"""Test objectives: diagonal strongly convex quadratics, 1-D piecewise
linear landscapes for escape/overshoot dynamics, and a seeded Gaussian
blobs dataset for the miniature training experiments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Problem, as_vector

__all__ = [
    "QuadraticProblem",
    "PiecewiseLinear1D",
    "PiecewiseProblem1D",
    "make_flat_region",
    "make_narrow_well",
    "escape_steps",
    "max_excursion",
    "BlobsDataset",
    "make_blobs",
]


class QuadraticProblem(Problem):
    """f(x) = 1/2 sum_i h_i (x_i - opt_i)^2 with positive diagonal
    Hessian entries h.  min(h) and max(h) are the strong-convexity and
    smoothness constants, which makes the theory certificates exact."""

    def __init__(self, diag_hessian, optimum):
        self.diag_hessian = as_vector(diag_hessian)
        self.optimum = as_vector(optimum)
        if self.diag_hessian.shape != self.optimum.shape:
            raise ValueError("diag_hessian and optimum must share one dimension")
        if not np.all(self.diag_hessian > 0):
            raise ValueError("Hessian entries must be positive")

    @property
    def dim(self) -> int:
        return self.optimum.shape[0]

    @property
    def mu(self) -> float:
        return float(np.min(self.diag_hessian))

    @property
    def eta(self) -> float:
        return float(np.max(self.diag_hessian))

    def loss(self, x: np.ndarray) -> float:
        d = x - self.optimum
        return 0.5 * float(self.diag_hessian @ (d * d))

    def full_gradient(self, x: np.ndarray) -> np.ndarray:
        return self.diag_hessian * (x - self.optimum)


@dataclass(frozen=True)
class PiecewiseLinear1D:
    """Continuous piecewise-linear function on the real line.

    ``slopes`` has one more entry than ``breakpoints`` (slope of each
    interval, leftmost first); the anchor fixes the additive constant.
    The gradient at a breakpoint uses the right interval's slope, a
    deterministic tie-break that matches forward motion in the escape
    scenario.
    """

    breakpoints: tuple
    slopes: tuple
    anchor: tuple = (0.0, 0.0)

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        sl = tuple(float(s) for s in self.slopes)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "slopes", sl)
        object.__setattr__(self, "anchor", (float(self.anchor[0]), float(self.anchor[1])))
        if len(sl) != len(bp) + 1:
            raise ValueError("need exactly one slope per interval")
        if any(b >= c for b, c in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")

    def _interval(self, x: float) -> int:
        # right-interval rule: x == breakpoint belongs to the interval after it
        return int(np.searchsorted(self.breakpoints, x, side="right"))

    def value(self, x: float) -> float:
        # integrate the slope field over the span between the anchor and x,
        # splitting at the breakpoints that fall strictly inside it
        xa, fa = self.anchor
        if x == xa:
            return fa
        lo, hi = (xa, x) if xa < x else (x, xa)
        sign = 1.0 if x > xa else -1.0
        nodes = [lo] + [b for b in self.breakpoints if lo < b < hi] + [hi]
        total = 0.0
        for a, b in zip(nodes, nodes[1:]):
            total += self.slopes[self._interval(a)] * (b - a)
        return fa + sign * total

    def gradient(self, x: float) -> float:
        return self.slopes[self._interval(x)]


class PiecewiseProblem1D(Problem):
    """Problem wrapper around a 1-D piecewise-linear landscape."""

    def __init__(self, fn: PiecewiseLinear1D):
        self.fn = fn

    @property
    def dim(self) -> int:
        return 1

    def loss(self, x: np.ndarray) -> float:
        return self.fn.value(float(x[0]))

    def full_gradient(self, x: np.ndarray) -> np.ndarray:
        return np.array([self.fn.gradient(float(x[0]))])


def make_flat_region(
    flat_width: float, flat_slope: float = 0.1, sheer_slope: float = -15.0
) -> PiecewiseLinear1D:
    """Steep descent, a nearly flat shelf of the given width, then steep
    descent again; anchored at f(0) = 0.  The shelf's slight uphill slope
    traps plain gradient steps near x = 0.
    """
    if not flat_width > 0:
        raise ValueError("flat_width must be positive")
    if not abs(flat_slope) < abs(sheer_slope):
        raise ValueError("flat slope must be shallower than the sheer slope")
    return PiecewiseLinear1D(
        breakpoints=(0.0, flat_width),
        slopes=(sheer_slope, flat_slope, sheer_slope),
        anchor=(0.0, 0.0),
    )


def make_narrow_well(
    well_width: float, well_slope_scale: float = 10.0, outer_slope: float = 0.1
) -> PiecewiseLinear1D:
    """Symmetric V-well of the given half-width and steepness, with
    shallow slopes outside; anchored at the well minimum f(0) = 0.
    A step from inside the well can catapult far into the shallow
    exterior, which is the overshoot scenario."""
    if not (well_width > 0 and well_slope_scale > 0):
        raise ValueError("well parameters must be positive")
    return PiecewiseLinear1D(
        breakpoints=(-well_width, 0.0, well_width),
        slopes=(-outer_slope, -well_slope_scale, well_slope_scale, outer_slope),
        anchor=(0.0, 0.0),
    )


def escape_steps(iterates, region, objective) -> int | None:
    """First step index t (1-based over post-step iterates) at which the
    trajectory has truly escaped: outside ``region = (lo, hi)`` with an
    objective value below the region's right edge.  Returns None when it
    never escapes.  Leftward excursions fail the descent test and do not
    count."""
    lo, hi = float(region[0]), float(region[1])
    f_edge = objective(hi)
    for t, x in enumerate(iterates, start=1):
        x = float(x)
        if (x < lo or x > hi) and objective(x) < f_edge:
            return t
    return None


def max_excursion(iterates, center: float) -> float:
    """Largest distance from the center reached anywhere in the trace."""
    xs = np.asarray([float(x) for x in iterates])
    if xs.size == 0:
        return 0.0
    return float(np.max(np.abs(xs - center)))


@dataclass(frozen=True)
class BlobsDataset:
    """Gaussian-cluster classification data, fully determined by a seed."""

    points: np.ndarray
    labels: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def features(self) -> int:
        return self.points.shape[1]

    @property
    def classes(self) -> int:
        return int(self.labels.max()) + 1


def make_blobs(
    n: int,
    p: int,
    classes: int,
    spread: float,
    seed: int,
    center_scale: float = 3.0,
) -> BlobsDataset:
    """Balanced Gaussian clusters with class centers on scaled coordinate
    axes (center of class c sits at center_scale * (1 + c // p) along
    axis c mod p).  Regenerating with the same seed is bitwise identical.
    """
    if n % classes != 0:
        raise ValueError(f"n={n} must be divisible by classes={classes}")
    if spread < 0:
        raise ValueError("spread must be nonnegative")
    rng = np.random.default_rng(seed)
    per = n // classes
    points = np.empty((n, p))
    labels = np.empty(n, dtype=np.int64)
    for c in range(classes):
        center = np.zeros(p)
        center[c % p] = center_scale * (1 + c // p)
        block = center + spread * rng.standard_normal((per, p))
        points[c * per:(c + 1) * per] = block
        labels[c * per:(c + 1) * per] = c
    points.flags.writeable = False
    labels.flags.writeable = False
    return BlobsDataset(points=points, labels=labels, seed=seed)

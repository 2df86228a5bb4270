"""Executable convergence theory for the k-step interpolation update on
strongly convex quadratics.

On a quadratic with Hessian eigenvalues h, the error recursion of the
interpolation update decouples per eigenmode into an m x m companion
matrix whose top row is (alpha_1 J, ..., alpha_m J) with J = 1 - beta*h.
Its characteristic polynomial is

    p(lambda) = lambda**m - sum_i alpha_i * (1 - beta*h) * lambda**(m-i)

and the largest root modulus over all eigenvalues bounds the asymptotic
linear rate.  ``certify`` packages that bound; ``fit_rate`` extracts the
empirical rate from a trajectory's distance-to-optimum sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MixingCoefficients, MixingMode

__all__ = [
    "contraction_factor",
    "CompanionSpec",
    "companion_matrix",
    "block_companion_matrix",
    "characteristic_coeffs",
    "max_modulus_root",
    "dominance_threshold",
    "RateCertificate",
    "NoCertificateError",
    "RootSolveError",
    "certify",
    "fit_rate",
]


class NoCertificateError(ValueError):
    """Raised when the contraction-factor hypothesis theta < 1 fails."""


class RootSolveError(RuntimeError):
    """Raised when the simultaneous root iteration does not converge."""


def contraction_factor(beta: float, mu: float, eta: float) -> float:
    """One-step gradient-descent contraction factor
    theta = max(|1 - beta*mu|, |1 - beta*eta|) on a quadratic with
    eigenvalues in [mu, eta].  A rate certificate requires theta < 1.
    """
    if not (0 < mu <= eta):
        raise ValueError(f"need 0 < mu <= eta, got mu={mu!r}, eta={eta!r}")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    return max(abs(1.0 - beta * mu), abs(1.0 - beta * eta))


@dataclass(frozen=True)
class CompanionSpec:
    """Inputs of the decoupled error recursion: history length m (from
    the weights), learning rate beta, and the Hessian eigenvalues."""

    alphas: MixingCoefficients
    beta: float
    hessian_eigs: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "hessian_eigs", tuple(float(h) for h in self.hessian_eigs)
        )
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if len(self.hessian_eigs) == 0:
            raise ValueError("need at least one Hessian eigenvalue")
        for h in self.hessian_eigs:
            if not h > 0:
                raise ValueError(f"Hessian eigenvalues must be positive, got {h!r}")

    @property
    def m(self) -> int:
        return self.alphas.k


def companion_matrix(spec: CompanionSpec, eig_index: int) -> np.ndarray:
    """m x m companion matrix of one eigenmode: top row alpha_i * J with
    J = 1 - beta*h, identity on the subdiagonal."""
    m = spec.m
    J = 1.0 - spec.beta * spec.hessian_eigs[eig_index]
    A = np.zeros((m, m))
    A[0, :] = np.array(spec.alphas.alphas) * J
    if m > 1:
        A[np.arange(1, m), np.arange(0, m - 1)] = 1.0
    return A


def block_companion_matrix(spec: CompanionSpec) -> np.ndarray:
    """Full (m*d) x (m*d) stacked recursion matrix for a diagonal Hessian
    with the given eigenvalues.  Provided for completeness; with a
    diagonal Hessian it block-decouples into the per-mode companions.
    """
    m, d = spec.m, len(spec.hessian_eigs)
    J = np.diag(1.0 - spec.beta * np.array(spec.hessian_eigs))
    A = np.zeros((m * d, m * d))
    for i, a in enumerate(spec.alphas.alphas):
        A[:d, i * d:(i + 1) * d] = a * J
    for r in range(1, m):
        A[r * d:(r + 1) * d, (r - 1) * d:r * d] = np.eye(d)
    return A


def characteristic_coeffs(spec: CompanionSpec, eig_index: int) -> np.ndarray:
    """Coefficients (highest degree first) of
    p(lambda) = lambda**m - sum_i alpha_i * J * lambda**(m-i)."""
    J = 1.0 - spec.beta * spec.hessian_eigs[eig_index]
    return np.concatenate(([1.0], -J * np.array(spec.alphas.alphas)))


def _polyval(coeffs: np.ndarray, z):
    acc = np.zeros_like(z) + coeffs[0]
    for c in coeffs[1:]:
        acc = acc * z + c
    return acc


def max_modulus_root(coeffs, max_iter: int = 1000, tol: float = 1e-12) -> float:
    """Largest root modulus of a polynomial (coefficients highest degree
    first), via Aberth's simultaneous iteration.

    All roots are tracked at once from a deterministically perturbed
    initial circle; convergence is declared when no root moves more than
    ``tol``, and the result is verified by the residual bound
    |p(root)| < 1e-8 * max|coeff|.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.ndim != 1 or coeffs.size < 2:
        raise ValueError("need a polynomial of degree >= 1")
    if coeffs[0] == 0.0:
        raise ValueError("leading coefficient must be nonzero")
    monic = coeffs / coeffs[0]
    n = monic.size - 1
    # derivative of the monic polynomial
    deriv = monic[:-1] * np.arange(n, 0, -1)

    radius = 1.0 + np.max(np.abs(monic[1:]))  # Cauchy bound
    rng = np.random.default_rng(0x5EED)
    angles = 2 * np.pi * (np.arange(n) + 0.35) / n + 0.01 * rng.standard_normal(n)
    z = radius * np.exp(1j * angles)

    for _ in range(max_iter):
        p = _polyval(monic, z)
        dp = _polyval(deriv, z) if n > 1 else np.full_like(z, deriv[0])
        ratio = np.where(dp != 0, p / np.where(dp != 0, dp, 1.0), p)
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, np.inf)
        s = np.sum(1.0 / diff, axis=1)
        denom = 1.0 - ratio * s
        w = np.where(np.abs(denom) > 1e-300, ratio / np.where(denom != 0, denom, 1.0), ratio)
        z = z - w
        if np.max(np.abs(w)) < tol:
            break
    else:
        resid = np.max(np.abs(_polyval(monic, z)))
        raise RootSolveError(
            f"root iteration did not converge; residual {resid:.3e}"
        )
    resid = np.max(np.abs(_polyval(coeffs, z)))
    bound = 1e-8 * np.max(np.abs(coeffs))
    if resid > bound:
        raise RootSolveError(
            f"root residual {resid:.3e} exceeds bound {bound:.3e}"
        )
    return float(np.max(np.abs(z)))


def dominance_threshold(rho: float, rhos) -> float:
    """Smallest certified modulus bound xi in (0, 1) beyond which the
    dominant term wins: |rho| z**m > sum_i |rho_i| z**(m-i) for |z| > xi.

    Requires |rho| > sum_i |rho_i|.  The polynomial
    |rho| x**m - sum |rho_i| x**(m-i) has exactly one positive real root
    (single sign change), found here by bisection on [0, 1]; xi is the
    midpoint of that root and 1.
    """
    rhos = [abs(float(r)) for r in rhos]
    rho = abs(float(rho))
    if not rho > sum(rhos):
        raise ValueError(
            f"hypothesis |rho| > sum|rho_i| violated ({rho!r} <= {sum(rhos)!r})"
        )
    # p(x) = rho*x^m - sum rho_i x^(m-i), Horner from the left
    def pval(x):
        acc = rho
        for r in rhos:
            acc = acc * x - r
        return acc

    lo, hi = 0.0, 1.0
    if pval(lo) >= 0.0:  # all rho_i zero: only root is 0
        zeta = 0.0
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if pval(mid) > 0.0:
                hi = mid
            else:
                lo = mid
        zeta = 0.5 * (lo + hi)
    return 0.5 * (zeta + 1.0)


@dataclass(frozen=True)
class RateCertificate:
    """Certified linear rate: distance-to-optimum shrinks like xi**t.

    ``spectral_radius`` is the exact modulus bound from the companion
    polynomials; ``xi`` is its midpoint with 1, which absorbs the norm
    equivalence slack of the stacked recursion.  ``d0`` is a trajectory
    constant; ``certify`` leaves it at 1 and the harness replaces it
    with the intercept fitted from an actual run.
    """

    xi: float
    d0: float
    theta: float
    spectral_radius: float

    def __post_init__(self):
        if not (0 < self.xi < 1):
            raise ValueError("certificate requires xi in (0, 1)")
        if not self.theta < 1:
            raise ValueError("certificate requires theta < 1")
        if not self.spectral_radius <= self.xi:
            raise ValueError("spectral radius must not exceed xi")
        if not self.d0 > 0:
            raise ValueError("d0 must be positive")


def certify(spec: CompanionSpec, mu: float, eta: float) -> RateCertificate:
    """Issue a linear-rate certificate for interpolation weights on a
    quadratic with eigenvalues in [mu, eta].

    Requires theta = max(|1-beta*mu|, |1-beta*eta|) < 1 and weights in
    interpolation mode; under those hypotheses the spectral radius is
    provably below 1, and this function computes it exactly over the
    spec's eigenvalues.
    """
    if spec.alphas.mode is not MixingMode.INTERPOLATION:
        raise ValueError("certificates require interpolation-mode weights")
    for h in spec.hessian_eigs:
        if not (mu - 1e-12 <= h <= eta + 1e-12):
            raise ValueError(f"eigenvalue {h!r} outside [mu, eta]")
    theta = contraction_factor(spec.beta, mu, eta)
    if theta >= 1.0:
        raise NoCertificateError(
            f"theta = {theta!r} >= 1: no certificate"
        )
    radius = max(
        max_modulus_root(characteristic_coeffs(spec, i))
        for i in range(len(spec.hessian_eigs))
    )
    xi = 0.5 * (radius + 1.0)
    return RateCertificate(xi=xi, d0=1.0, theta=theta, spectral_radius=radius)


def fit_rate(distances) -> tuple:
    """Fit ``dist(t) ~ d0 * xi**t`` to a distance-to-optimum sequence.

    Entries below 1e-13 are truncated off the tail (converged-to-noise
    regime); at least 10 positive entries must remain.  A least-squares
    line through log distance over the retained tail half gives
    xi_hat = exp(slope) and d0_hat = exp(intercept at t = 0).
    """
    d = np.asarray(list(distances), dtype=np.float64)
    keep = d.size
    while keep > 0 and d[keep - 1] < 1e-13:
        keep -= 1
    d = d[:keep]
    if keep < 10 or np.count_nonzero(d > 0) < 10:
        raise ValueError(
            f"need >= 10 usable distance entries, have {keep} "
            "(trajectory converged too fast or diverged)"
        )
    t = np.arange(keep)
    half = keep // 2
    ts, ds = t[half:], d[half:]
    mask = ds > 0
    if np.count_nonzero(mask) < 2:
        raise ValueError("retained tail half has no positive entries to fit")
    slope, intercept = np.polyfit(ts[mask], np.log(ds[mask]), 1)
    return float(np.exp(slope)), float(np.exp(intercept))

"""Closed-form recovery predictions for single-spike data.

For data generated from one coarse basis vector e_j, the weighted
l1-regularized problem has the explicit minimizer gamma * e_j inside an
explicit alpha window.  This module evaluates those formulas, the maximum
property behind them, the rescaling post-processing step, and the
two-source collision construction that defeats multi-source recovery.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .fem import TransferOperator
from .operators import ProjectorWeights, _as_matrix


class MaxPropertyTie(RuntimeError):
    """Two indices of |W^-1 P e_j| coincide to within tolerance."""

    def __init__(self, j, candidates, gap):
        super().__init__(
            "argmax of |W^-1 P e_%d| is ambiguous between %s (gap %.2e); "
            "columns are nearly parallel" % (j, candidates, gap))
        self.j = j
        self.candidates = candidates
        self.gap = gap


class AssumptionViolationError(RuntimeError):
    """|tau_ij| >= 1: the non-parallel-columns assumption fails at (i, j)."""


class TheoremViolationError(RuntimeError):
    """A provably-true inequality failed numerically; construction bug."""


@dataclass
class RecoveryPrediction:
    """Prediction for recovering e_j at regularization level alpha.

    ``tau`` stores [W^-1 P e_j]_i / [W^-1 P e_j]_j for every i (1 at i=j).
    ``feasible`` reports the conservative theorem window
    alpha_lower < alpha < alpha_upper.
    """

    j: int
    alpha: float
    gamma: float
    alpha_lower: float
    alpha_upper: float
    tau: np.ndarray
    feasible: bool


def _scaled_column(pw: ProjectorWeights, j: int) -> np.ndarray:
    """W^-1 P e_j as a vector."""
    return pw.column(j) / pw.w


def max_property_argmax(pw: ProjectorWeights, j: int, tie_tol: float = 1e-12) -> int:
    """argmax_i |[W^-1 P e_j]_i|; ties signal near-parallel columns."""
    v = np.abs(_scaled_column(pw, j))
    order = np.argsort(v)
    best = int(order[-1])
    if v.size > 1:
        second = int(order[-2])
        if v[best] - v[second] <= tie_tol:
            raise MaxPropertyTie(j, (best, second), float(v[best] - v[second]))
    return best


def predict_noise_free(pw: ProjectorWeights, j: int, alpha: float) -> RecoveryPrediction:
    """Theorem-level prediction for exact data b = A e_j.

    gamma = 1 - alpha / [W^-1 P e_j]_j, valid on 0 < alpha < [W^-1 P e_j]_j.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    col = _scaled_column(pw, j)
    d_j = float(col[j])
    tau = col / d_j
    gamma = 1.0 - alpha / d_j
    return RecoveryPrediction(
        j=j, alpha=float(alpha), gamma=gamma, alpha_lower=0.0, alpha_upper=d_j,
        tau=tau, feasible=0.0 < alpha < d_j)


def predict_with_noise(pw: ProjectorWeights, noise_image: np.ndarray, j: int,
                       alpha: float) -> RecoveryPrediction:
    """Prediction for noisy data b = A e_j + eta, given A_k^+ eta.

    The spike magnitude follows from the stationarity condition at x = gamma e_j:
    gamma = 1 - (alpha - nu_j) / d_j with nu = W^-1 A_k^+ eta and
    d_j = [W^-1 P e_j]_j, hence the validity window
    alpha_lower < alpha < d_j + nu_j.  The lower bound is the conservative
    decoupled product max (1+|tau|)/(1-|tau|) * max_i |nu_i|.
    """
    noise_image = np.asarray(noise_image, dtype=float)
    if noise_image.shape != (pw.n,):
        raise ValueError("noise image must have length n=%d" % pw.n)
    col = _scaled_column(pw, j)
    d_j = float(col[j])
    tau = col / d_j
    tau_off = np.abs(np.delete(tau, j))
    if np.any(tau_off >= 1.0):
        raise AssumptionViolationError(
            "max |tau_ij| = %.6f >= 1 for j=%d" % (float(tau_off.max()), j))
    nu = noise_image / pw.w
    amplification = float(np.max((1.0 + tau_off) / (1.0 - tau_off)))
    alpha_lower = amplification * float(np.max(np.abs(nu)))
    alpha_upper = d_j + float(nu[j])
    gamma = 1.0 - (alpha - float(nu[j])) / d_j
    return RecoveryPrediction(
        j=j, alpha=float(alpha), gamma=gamma, alpha_lower=alpha_lower,
        alpha_upper=alpha_upper, tau=tau,
        feasible=alpha_lower < alpha < alpha_upper)


def recovery_certificate(pw: ProjectorWeights, noise_image: np.ndarray, j: int,
                         alpha: float) -> float:
    """Exact subgradient margin for gamma*e_j being the unique minimizer.

    Checks the off-support stationarity conditions
    |tau_ij * (alpha - nu_j) + nu_i| < alpha for all i != j and returns the
    smallest slack; a positive value certifies singleton recovery at this
    specific noise realization (sharper than the decoupled alpha_lower).
    """
    col = _scaled_column(pw, j)
    d_j = float(col[j])
    tau = col / d_j
    nu = np.asarray(noise_image, dtype=float) / pw.w
    lhs = np.abs(tau * (alpha - nu[j]) + nu)
    margins = alpha - np.delete(lhs, j)
    return float(np.min(margins))


def rescale_solution(x_alpha: np.ndarray, alpha: float,
                     pw: ProjectorWeights) -> np.ndarray:
    """Undo the known shrinkage: divide by 1 - alpha/[W^-1 P e_j]_j at the peak."""
    x_alpha = np.asarray(x_alpha, dtype=float)
    if not np.any(x_alpha):
        raise ValueError("cannot rescale the zero vector")
    j = int(np.argmax(np.abs(x_alpha)))
    d_j = float(_scaled_column(pw, j)[j])
    denom = 1.0 - alpha / d_j
    if denom <= 0:
        raise ValueError(
            "alpha=%.3e is beyond the validity bound %.3e" % (alpha, d_j))
    return x_alpha / denom


@dataclass
class CollisionReport:
    j: int
    c: float
    cosine: float


def two_source_collision(A: Union[TransferOperator, np.ndarray], m: int, n: int,
                         tol: float = 1e-6) -> Optional[CollisionReport]:
    """Search for A e_m + A e_n = c A e_j (a third column explaining the pair).

    Returns the best-aligned column when its |cosine| reaches 1 - tol, else
    None.  A hit means the pair is provably unrecoverable by weighted basis
    pursuit: the single spike c*e_j has strictly smaller weighted l1 norm.
    """
    if m == n:
        raise ValueError("source indices must differ")
    mat = _as_matrix(A)
    v = mat[:, m] + mat[:, n]
    vnorm = np.linalg.norm(v)
    cols = np.linalg.norm(mat, axis=0)
    if vnorm == 0 or np.any(cols == 0):
        raise ValueError("zero column or cancelling pair")
    cos = np.abs(mat.T @ v) / (cols * vnorm)
    j = int(np.argmax(cos))
    if cos[j] < 1.0 - tol:
        return None
    c = float((mat[:, j] @ v) / (cols[j] ** 2))
    return CollisionReport(j=j, c=c, cosine=float(cos[j]))


@dataclass
class NormGapReport:
    trials: int
    min_gap: float


def verify_weighted_norm_inequality(pw: ProjectorWeights, j: int, trials: int,
                                    rng_seed: int) -> NormGapReport:
    """Sample feasible x = e_j + q, q in the null space, and check that
    ||W e_j||_1 <= ||W x||_1 always (the exact-recovery inequality)."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(rng_seed)
    base = float(pw.w[j])
    min_gap = np.inf
    for _ in range(trials):
        q = rng.standard_normal(pw.n)
        q -= pw.apply(q)
        x = q
        x[j] += 1.0
        gap = float(np.sum(pw.w * np.abs(x))) - base
        min_gap = min(min_gap, gap)
        if gap < -1e-10:
            raise TheoremViolationError(
                "||W x||_1 < ||W e_j||_1 by %.3e for a feasible x" % -gap)
    return NormGapReport(trials=trials, min_gap=min_gap)


def write_predictions_csv(path, predictions) -> None:
    with open(path, "w") as f:
        f.write("j,alpha,gamma,alpha_lower,alpha_upper,feasible\n")
        for p in predictions:
            f.write("%d,%s,%s,%s,%s,%s\n" % (
                p.j, repr(p.alpha), repr(p.gamma), repr(p.alpha_lower),
                repr(p.alpha_upper), p.feasible))

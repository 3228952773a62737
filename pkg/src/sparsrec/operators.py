"""SVD-backed operators: projector onto the visible subspace, diagonal
weights, truncated pseudo-inverses, Tikhonov smoothing and the Morozov
truncation rule.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .fem import TransferOperator


class WeightDegeneracyError(RuntimeError):
    """A weight ||P e_i|| vanished: the standing assumption P e_i != 0 fails."""


def _as_matrix(A) -> np.ndarray:
    if isinstance(A, TransferOperator):
        return A.matrix
    return np.asarray(A, dtype=float)


@dataclass
class SvdFactors:
    """Full SVD of a transfer matrix with a numerical-rank tolerance."""

    matrix: np.ndarray
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray            # columns are right singular vectors
    rank_tol: float

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.sigma > self.rank_tol))


def svd(A: Union[TransferOperator, np.ndarray],
        rank_tol: Optional[float] = None) -> SvdFactors:
    """Full SVD; cached on a TransferOperator input.

    LinAlgError from the backend propagates: a failed decomposition must
    never be silently truncated.
    """
    if isinstance(A, TransferOperator) and getattr(A, "_svd", None) is not None:
        return A._svd
    mat = _as_matrix(A)
    if not np.all(np.isfinite(mat)):
        raise ValueError("matrix contains non-finite entries")
    U, sig, Vt = np.linalg.svd(mat, full_matrices=True)
    if rank_tol is None:
        rank_tol = max(mat.shape) * (sig[0] if sig.size else 0.0) * np.finfo(float).eps
    out = SvdFactors(mat, U, sig, Vt.T, float(rank_tol))
    if isinstance(A, TransferOperator):
        A._svd = out
    return out


@dataclass
class ProjectorWeights:
    """Orthogonal projector P_k onto the span of the leading right singular
    vectors, with weights w_i = ||P_k e_i||_2."""

    k: int
    w: np.ndarray
    rank_tol: float
    _vk: np.ndarray = field(repr=False)
    _dense: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self._vk.shape[0]

    @property
    def P(self) -> np.ndarray:
        """Dense projector matrix; materialized lazily for large n."""
        if self._dense is None:
            self._dense = self._vk @ self._vk.T
        return self._dense

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self._dense is not None:
            return self._dense @ x
        return self._vk @ (self._vk.T @ x)

    def column(self, i: int) -> np.ndarray:
        if self._dense is not None:
            return self._dense[:, i]
        return self._vk @ self._vk[i]


def projector_and_weights(factors: SvdFactors, k: Optional[int] = None) -> ProjectorWeights:
    """P_k = V_k V_k^T and w_i = ||P_k e_i||; k defaults to the numerical rank."""
    rank = factors.rank
    if k is None:
        k = rank
    if not 1 <= k <= rank:
        raise ValueError("k must lie in [1, numerical rank=%d]" % rank)
    vk = factors.V[:, :k]
    w = np.linalg.norm(vk, axis=1)
    if np.any(w <= factors.rank_tol):
        worst = int(np.argmin(w))
        raise WeightDegeneracyError(
            "||P e_%d|| = %.3e is numerically zero" % (worst, w[worst]))
    pw = ProjectorWeights(k=k, w=w, rank_tol=factors.rank_tol, _vk=vk)
    if vk.shape[0] <= 512:
        pw._dense = vk @ vk.T
    return pw


@dataclass
class NonParallelReport:
    ok: bool
    worst_pair: tuple
    worst_cosine: float


def check_nonparallel(A: Union[TransferOperator, np.ndarray],
                      tol: float = 1e-12) -> NonParallelReport:
    """Check that no two columns are parallel (worst pairwise |cosine|).

    Near-parallel columns yield a failing report plus a warning instead of
    an exception: minimizers still exist, only uniqueness is at stake.
    """
    mat = _as_matrix(A)
    norms = np.linalg.norm(mat, axis=0)
    if np.any(norms == 0):
        raise ValueError("column %d is zero" % int(np.argmin(norms)))
    unit = mat / norms
    G = np.abs(unit.T @ unit)
    np.fill_diagonal(G, 0.0)
    i, j = np.unravel_index(int(np.argmax(G)), G.shape)
    worst = float(G[i, j])
    ok = worst <= 1.0 - tol
    report = NonParallelReport(ok, (int(min(i, j)), int(max(i, j))), worst)
    if not ok:
        warnings.warn(
            "columns %s are parallel to within %.1e" % (report.worst_pair, 1 - worst),
            RuntimeWarning, stacklevel=2)
    return report


def pseudo_apply(factors: SvdFactors, k: Optional[int], y: np.ndarray) -> np.ndarray:
    """Apply the (truncated) pseudo-inverse: A_k^+ y = V_k S_k^-1 U_k^T y."""
    if k is None:
        k = factors.rank
    if not 1 <= k <= factors.rank:
        raise ValueError("k must lie in [1, numerical rank=%d]" % factors.rank)
    y = np.asarray(y, dtype=float)
    if y.shape[0] != factors.U.shape[0]:
        raise ValueError("vector length %d does not match m=%d"
                         % (y.shape[0], factors.U.shape[0]))
    return factors.V[:, :k] @ ((factors.U[:, :k].T @ y) / factors.sigma[:k])


def pseudo_inverse_matrix(factors: SvdFactors, k: Optional[int] = None) -> np.ndarray:
    """Dense A_k^+ for repeated application."""
    if k is None:
        k = factors.rank
    if not 1 <= k <= factors.rank:
        raise ValueError("k must lie in [1, numerical rank=%d]" % factors.rank)
    return (factors.V[:, :k] / factors.sigma[:k]) @ factors.U[:, :k].T


def projection_identity_check(factors: SvdFactors, k: int) -> float:
    """Max-norm deviation of A_k^+ A from P_k (zero in exact arithmetic)."""
    if not 1 <= k <= factors.rank:
        raise ValueError("k must lie in [1, numerical rank=%d]" % factors.rank)
    apa = pseudo_inverse_matrix(factors, k) @ factors.matrix
    pk = factors.V[:, :k] @ factors.V[:, :k].T
    return float(np.max(np.abs(apa - pk)))


class TikhonovSmoother:
    """S_beta = V (S^2 + beta I)^-1 V^T A^T, a smooth stand-in for A^+."""

    def __init__(self, factors: SvdFactors, beta: float):
        if not beta > 0:
            raise ValueError("beta must be positive")
        self.factors = factors
        self.beta = float(beta)
        sig = factors.sigma
        self._filt = sig / (sig ** 2 + beta)

    def apply(self, y: np.ndarray) -> np.ndarray:
        r = self._filt.size
        return self.factors.V[:, :r] @ (self._filt * (self.factors.U[:, :r].T @ y))

    @property
    def matrix(self) -> np.ndarray:
        r = self._filt.size
        return (self.factors.V[:, :r] * self._filt) @ self.factors.U[:, :r].T

    def fidelity_matrix(self) -> np.ndarray:
        """S_beta A = V diag(sigma^2/(sigma^2+beta)) V^T, the surrogate fidelity."""
        r = self._filt.size
        gains = self.factors.sigma[:r] * self._filt
        return (self.factors.V[:, :r] * gains) @ self.factors.V[:, :r].T


def tikhonov_smoother(factors: SvdFactors, beta: float) -> TikhonovSmoother:
    return TikhonovSmoother(factors, beta)


def morozov_truncation(factors: SvdFactors, b: np.ndarray, noise_norm: float,
                       threshold_factor: float = 1.05) -> int:
    """Smallest k with ||A_k A_k^+ b - b|| <= threshold_factor * noise_norm.

    Falls back to the numerical rank when no truncation level qualifies;
    k = 0 is never returned.
    """
    if noise_norm < 0:
        raise ValueError("noise_norm must be nonnegative")
    if threshold_factor < 1:
        raise ValueError("threshold_factor must be at least 1")
    b = np.asarray(b, dtype=float)
    rank = factors.rank
    coef = factors.U[:, :rank].T @ b
    # residual^2 after keeping k terms; clip guards cancellation at full rank
    res2 = float(b @ b) - np.cumsum(coef ** 2)
    res = np.sqrt(np.clip(res2, 0.0, None))
    ok = res <= threshold_factor * noise_norm
    if not np.any(ok):
        return rank
    return int(np.argmax(ok)) + 1


def write_weights_csv(path, weights: np.ndarray, centers: np.ndarray) -> None:
    """Per-cell weight table (index, w_i and the cell midpoint)."""
    with open(path, "w") as f:
        f.write("index,w,cell_x,cell_y\n")
        for i, (wv, ctr) in enumerate(zip(weights, centers)):
            f.write("%d,%s,%s,%s\n" % (i, repr(float(wv)),
                                       repr(float(ctr[0])), repr(float(ctr[1]))))


def write_nonparallel_csv(path, report: NonParallelReport) -> None:
    with open(path, "w") as f:
        f.write("ok,worst_i,worst_j,worst_cosine\n")
        f.write("%s,%d,%d,%s\n" % (report.ok, report.worst_pair[0],
                                   report.worst_pair[1], repr(report.worst_cosine)))

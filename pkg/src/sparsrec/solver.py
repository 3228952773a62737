"""Weighted l1-regularized least squares via split-Bregman/ADMM.

Solves min_x 0.5*||B x - c||_2^2 + alpha*||W x||_1 for a dense fidelity
matrix B and positive diagonal weights W.  One iteration alternates a
quadratic solve, a componentwise shrinkage and a Bregman (scaled dual)
update.  The quadratic subproblem is solved through a one-time
eigendecomposition of B^T B, which makes penalty rebalancing free; the
penalty is adapted by residual balancing because a fixed penalty stalls
for small alpha on projector-type fidelity operators.

The iteration loop runs in a compiled extension when available and falls
back to a NumPy implementation otherwise (see ``BACKEND``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

if os.environ.get("SPARSREC_PURE_PYTHON"):
    from . import _fallback as _kernel
    BACKEND = "python"
else:
    try:
        from . import _accel as _kernel
        BACKEND = "compiled"
    except ImportError:
        from . import _fallback as _kernel
        BACKEND = "python"

_MU_LO = 1e-12
_MU_HI = 1e12


def shrink(v, kappa):
    """Soft-thresholding prox of the absolute value: sign(v)*max(|v|-kappa, 0)."""
    if np.any(np.asarray(kappa) < 0):
        raise ValueError("shrink threshold must be nonnegative")
    v = np.asarray(v, dtype=float)
    out = np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)
    return out if out.ndim else float(out)


@dataclass
class WeightedProblem:
    """One instance of min 0.5*||B x - c||^2 + alpha*||W x||_1."""

    B: np.ndarray
    c: np.ndarray
    w: np.ndarray
    alpha: float

    def __post_init__(self):
        self.B = np.asarray(self.B, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        if self.B.ndim != 2:
            raise ValueError("B must be a 2-d array")
        p, n = self.B.shape
        if self.c.shape != (p,):
            raise ValueError("c has length %d, expected %d" % (self.c.size, p))
        if self.w.shape != (n,):
            raise ValueError("w has length %d, expected %d" % (self.w.size, n))
        if np.any(self.w <= 0):
            raise ValueError("all weights must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    def objective(self, x: np.ndarray) -> float:
        res = self.B @ x - self.c
        return 0.5 * float(res @ res) + self.alpha * float(np.sum(self.w * np.abs(x)))

    def kkt_violation(self, x: np.ndarray) -> float:
        """Worst violation of 0 in B^T(Bx - c) + alpha*W*sgn(x) over components."""
        g = self.B.T @ (self.B @ x - self.c)
        on = x != 0
        viol_on = np.abs(g[on] + self.alpha * self.w[on] * np.sign(x[on]))
        viol_off = np.maximum(np.abs(g[~on]) - self.alpha * self.w[~on], 0.0)
        worst = 0.0
        if viol_on.size:
            worst = max(worst, float(viol_on.max()))
        if viol_off.size:
            worst = max(worst, float(viol_off.max()))
        return worst


@dataclass
class SolverConfig:
    """Split-Bregman parameters.

    ``mu`` is the coupling penalty; None selects the mean diagonal of B^T B
    as the starting value.  With ``adapt_penalty`` the penalty is then
    rebalanced (factor 2, both directions) whenever the primal and dual
    residuals drift more than a decade apart.  Tolerances are absolute.
    """

    mu: Optional[float] = None
    max_iters: int = 50_000
    tol_primal: float = 1e-10
    tol_dual: float = 1e-10
    over_relaxation: float = 1.0
    adapt_penalty: bool = True
    trace_path: Optional[str] = None

    def __post_init__(self):
        if self.mu is not None and not self.mu > 0:
            raise ValueError("mu must be positive")
        if not (self.tol_primal > 0 and self.tol_dual > 0):
            raise ValueError("tolerances must be positive")
        if not 1.0 <= self.over_relaxation <= 1.8:
            raise ValueError("over_relaxation must lie in [1, 1.8]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    objective: float
    primal_residual: float
    dual_residual: float
    kkt_violation: float
    converged: bool


@dataclass
class _Factorized:
    """Eigendecomposition of B^T B plus B^T c, reusable across alphas."""

    Q: np.ndarray          # Fortran order, columns are eigenvectors
    lam: np.ndarray        # eigenvalues clipped at zero
    btc: np.ndarray
    mu0: float


def _factorize(problem: WeightedProblem) -> _Factorized:
    btb = problem.B.T @ problem.B
    lam, Q = np.linalg.eigh(btb)
    lam = np.clip(lam, 0.0, None)
    mu0 = float(np.mean(np.diagonal(btb)))
    if mu0 <= 0:
        mu0 = 1.0
    return _Factorized(np.asfortranarray(Q), lam, problem.B.T @ problem.c, mu0)


def _run(problem, config, fac, alpha, z, u):
    mu = config.mu if config.mu is not None else fac.mu0
    if config.trace_path is not None:
        return _run_traced(problem, config, fac, alpha, mu, z, u)
    return _kernel.run_admm(
        fac.Q, fac.lam, fac.btc, problem.w, alpha, mu,
        config.over_relaxation, config.tol_primal, config.tol_dual,
        config.max_iters, config.adapt_penalty, _MU_LO, _MU_HI, z, u)


def _run_traced(problem, config, fac, alpha, mu, z, u):
    # Tracing recomputes the objective each iteration, so it stays on the
    # plain NumPy path regardless of the compiled backend.
    rows = []
    it, r, s, conv = 0, np.inf, np.inf, False
    for it in range(1, config.max_iters + 1):
        rhs = fac.btc + mu * (z - u)
        x = fac.Q @ ((fac.Q.T @ rhs) / (fac.lam + mu))
        xr = config.over_relaxation * x + (1.0 - config.over_relaxation) * z
        v = xr + u
        zp = z.copy()
        z[:] = np.sign(v) * np.maximum(np.abs(v) - (alpha / mu) * problem.w, 0.0)
        u += xr - z
        r = float(np.max(np.abs(x - z)))
        s = mu * float(np.max(np.abs(z - zp)))
        if not (np.isfinite(r) and np.isfinite(s)):
            raise ArithmeticError("split-Bregman iterate became non-finite")
        rows.append((it, problem.objective(z), r, s))
        if r < config.tol_primal and s < config.tol_dual:
            conv = True
            break
        if config.adapt_penalty:
            if r > 10.0 * s and mu < _MU_HI:
                mu *= 2.0
                u /= 2.0
            elif s > 10.0 * r and mu > _MU_LO:
                mu /= 2.0
                u *= 2.0
    with open(config.trace_path, "w") as f:
        f.write("iteration,objective,primal_residual,dual_residual\n")
        for row in rows:
            f.write("%d,%s,%s,%s\n" % (row[0], repr(row[1]), repr(row[2]), repr(row[3])))
    return it, r, s, mu, conv


def _solve_state(problem, config, z, u):
    fac = _factorize(problem)
    it, r, s, _, conv = _run(problem, config, fac, problem.alpha, z, u)
    x = z.copy()
    return SolveResult(
        x=x,
        iterations=it,
        objective=problem.objective(x),
        primal_residual=r,
        dual_residual=s,
        kkt_violation=problem.kkt_violation(x),
        converged=conv,
    )


def solve(problem: WeightedProblem, config: Optional[SolverConfig] = None,
          warm_start: Optional[np.ndarray] = None) -> SolveResult:
    """Solve a :class:`WeightedProblem`.

    The returned iterate is the shrinkage-side variable, so entries outside
    the support are exact zeros.  Non-convergence within ``max_iters`` is
    reported through ``converged`` rather than raised; a non-finite iterate
    raises ArithmeticError.
    """
    if config is None:
        config = SolverConfig()
    n = problem.B.shape[1]
    if warm_start is not None:
        z = np.array(warm_start, dtype=float)
        if z.shape != (n,):
            raise ValueError("warm start has wrong length")
    else:
        z = np.zeros(n)
    u = np.zeros(n)
    return _solve_state(problem, config, z, u)


@dataclass
class BasisPursuitResult:
    x: np.ndarray
    converged: bool
    constraint_residual: float
    final_alpha: float


def solve_basis_pursuit(projector, target: np.ndarray,
                        schedule: Optional[Iterable[float]] = None,
                        alpha_min: float = 1e-8,
                        config: Optional[SolverConfig] = None,
                        constraint_tol: float = 1e-6) -> BasisPursuitResult:
    """Minimize ||W x||_1 subject to P x = target by alpha-continuation.

    ``projector`` provides the pair (P, w); ``target`` must lie in the range
    of P to within 1e-8 relative.  The regularized problem is re-solved on a
    halving alpha schedule with warm starts, and the final iterate is
    checked against the constraint.
    """
    P = projector.P
    w = projector.w
    target = np.asarray(target, dtype=float)
    n = w.size
    tnorm = float(np.linalg.norm(target))
    if tnorm == 0.0:
        return BasisPursuitResult(np.zeros(n), True, 0.0, 0.0)
    if np.linalg.norm(P @ target - target) > 1e-8 * tnorm:
        raise ValueError("target is not in the range of the projector")
    if config is None:
        config = SolverConfig()
    if schedule is None:
        alpha0 = 0.5 * float(np.max(np.abs(target) / w))
        alphas = []
        a = alpha0
        while a > alpha_min:
            alphas.append(a)
            a /= 2.0
    else:
        alphas = sorted((float(a) for a in schedule), reverse=True)
        if not alphas:
            raise ValueError("empty continuation schedule")
    z = np.zeros(n)
    u = np.zeros(n)
    fac = None
    last_alpha = alphas[-1]
    for a in alphas:
        prob = WeightedProblem(P, target, w, a)
        if fac is None:
            fac = _factorize(prob)
        _run(prob, config, fac, a, z, u)
    resid = float(np.linalg.norm(P @ z - target))
    return BasisPursuitResult(z.copy(), resid <= constraint_tol, resid, last_alpha)

"""Pure-NumPy split-Bregman iteration kernel.

Mirrors the compiled kernel in ``_accel.pyx``; selected at import time by
:mod:`sparsrec.solver` when the extension is unavailable.
"""

import numpy as np


def run_admm(Q, lam, btc, w, alpha, mu, relax, tol_primal, tol_dual,
             max_iters, adapt, mu_lo, mu_hi, z, u):
    """Run the shrinkage/quadratic-solve iteration until both residuals pass.

    The quadratic subproblem (BtB + mu I) x = rhs is solved through the
    eigendecomposition BtB = Q diag(lam) Q^T, so penalty updates are free.
    ``z`` and ``u`` are updated in place; ``z`` holds the sparse iterate.

    Returns (iterations, primal_residual, dual_residual, mu, converged).
    """
    r = np.inf
    s = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        rhs = btc + mu * (z - u)
        x = Q @ ((Q.T @ rhs) / (lam + mu))
        if relax != 1.0:
            xr = relax * x + (1.0 - relax) * z
        else:
            xr = x
        v = xr + u
        zp = z.copy()
        kappa = (alpha / mu) * w
        np.sign(v, out=z)
        z *= np.maximum(np.abs(v) - kappa, 0.0)
        u += xr - z
        r = np.max(np.abs(x - z))
        s = mu * np.max(np.abs(z - zp))
        if not np.isfinite(r) or not np.isfinite(s):
            raise ArithmeticError("split-Bregman iterate became non-finite")
        if r < tol_primal and s < tol_dual:
            return it, r, s, mu, True
        if adapt:
            # residual balancing; the scaled dual variable tracks 1/mu
            if r > 10.0 * s and mu < mu_hi:
                mu *= 2.0
                u /= 2.0
            elif s > 10.0 * r and mu > mu_lo:
                mu /= 2.0
                u *= 2.0
    return it, r, s, mu, False

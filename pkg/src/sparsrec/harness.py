"""Experiment runner: sets up the model problems, drives the solver and
emits CSV tables plus paired heatmaps for each figure-level experiment.

Every run returns a :class:`~sparsrec.reporting.RunReport` whose checks
encode the qualitative claims the experiment is supposed to demonstrate;
the CLI turns failed checks into exit code 2.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from . import fem, operators, theory
from .reporting import RunReport, ensure_dir, write_coefficient_heatmap, write_csv
from .solver import SolverConfig, WeightedProblem, solve

SUPPORT_REL_TOL = 1e-6


@dataclass
class ExperimentSpec:
    """Configuration shared by all experiments; unused fields are ignored.

    Default true-source cells: Example 1 uses the interior cell containing
    (0.4, 0.6) and a mid-bottom-edge boundary cell; Example 2 uses the
    near-boundary interior cell at relative position (0.78, 0.78), for
    which the noise-level window of the single-spike theory is nonempty
    and Morozov's rule lands near the reference truncation level.
    """

    name: str = ""
    inverse_nodes: int = 65
    forward_nodes: Optional[int] = None
    source_cells: int = 16
    epsilon: float = 1.0
    true_sources: Optional[Sequence] = None
    alpha: Optional[float] = None
    k: Optional[int] = None
    beta: float = 1e-6
    zeta: float = 1e-4
    noise_levels: Sequence[float] = (0.05, 0.10, 0.15)
    seed: int = 8
    inverse_crime: bool = False
    output_dir: str = "out"
    morozov_threshold: float = 1.05
    cells_1d: int = 31
    inverse_nodes_1d: Optional[int] = None
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        for p in self.noise_levels:
            if not 0 <= p < 1:
                raise ValueError("noise level %r outside [0, 1)" % (p,))
        if self.forward_nodes is not None:
            if (self.forward_nodes - 1) % (self.inverse_nodes - 1) != 0:
                raise ValueError("forward grid must refine the inverse grid")

    def fwd_nodes(self) -> int:
        return self.forward_nodes or 2 * self.inverse_nodes - 1


@dataclass
class NoiseRealization:
    """eta = delta * rho with delta chosen so ||eta|| / ||b|| is exact."""

    rho: np.ndarray
    delta: float
    eta: np.ndarray
    achieved_level: float


def make_noise(b_dagger: np.ndarray, level: float, rho: np.ndarray) -> NoiseRealization:
    if not 0 <= level < 1:
        raise ValueError("noise level outside [0, 1)")
    if level == 0:
        return NoiseRealization(rho, 0.0, np.zeros_like(b_dagger), 0.0)
    delta = level * float(np.linalg.norm(b_dagger)) / float(np.linalg.norm(rho))
    eta = delta * rho
    return NoiseRealization(
        rho, delta, eta,
        float(np.linalg.norm(eta)) / float(np.linalg.norm(b_dagger)))


@dataclass
class Workspace:
    """Assembled grids/operators reused across runs of one configuration."""

    spec: ExperimentSpec
    system: fem.FemSystem
    basis: fem.SourceBasis
    transfer: fem.TransferOperator
    factors: operators.SvdFactors
    fwd_system: fem.FemSystem
    fwd_basis: fem.SourceBasis
    pw_full: operators.ProjectorWeights

    @property
    def A(self) -> np.ndarray:
        return self.transfer.matrix

    @property
    def n(self) -> int:
        return self.basis.n_cells


def build_workspace(spec: ExperimentSpec, dim: int = 2) -> Workspace:
    if dim == 2:
        nodes, cells = spec.inverse_nodes, spec.source_cells
        fwd_nodes = spec.fwd_nodes()
    else:
        cells = spec.cells_1d
        nodes = spec.inverse_nodes_1d or 2 * spec.cells_1d + 1
        fwd_nodes = 4 * spec.cells_1d + 1
    grid = fem.build_grid(dim, nodes)
    system = fem.assemble_fem(grid, spec.epsilon)
    basis = fem.build_source_basis(grid, cells)
    transfer = fem.assemble_transfer(system, basis)
    factors = operators.svd(transfer)
    fwd_grid = fem.build_grid(dim, fwd_nodes)
    fwd_system = fem.assemble_fem(fwd_grid, spec.epsilon)
    fwd_basis = fem.build_source_basis(fwd_grid, cells)
    pw_full = operators.projector_and_weights(factors)
    return Workspace(spec, system, basis, transfer, factors,
                     fwd_system, fwd_basis, pw_full)


def boundary_data(ws: Workspace, coeffs: np.ndarray,
                  inverse_crime: bool = False) -> np.ndarray:
    """Observation vector for a coarse coefficient source."""
    if inverse_crime:
        f = np.asarray((ws.basis.E @ coeffs))
        return fem.generate_boundary_data(f, ws.system)
    f = np.asarray((ws.fwd_basis.E @ coeffs))
    return fem.generate_boundary_data(f, ws.fwd_system, ws.system)


def support_of(x: np.ndarray) -> np.ndarray:
    peak = np.max(np.abs(x))
    if peak == 0:
        return np.array([], dtype=int)
    return np.nonzero(np.abs(x) > SUPPORT_REL_TOL * peak)[0]


def ring_distance(index: int, cells_per_side: int) -> int:
    cy, cx = divmod(index, cells_per_side)
    return int(min(cx, cy, cells_per_side - 1 - cx, cells_per_side - 1 - cy))


def _cell_index(basis: fem.SourceBasis, cell) -> int:
    if isinstance(cell, (tuple, list)):
        return basis.cell_index(int(cell[0]), int(cell[1]) if len(cell) > 1 else 0)
    return int(cell)


def _relative_cell(basis: fem.SourceBasis, fx: float, fy: float) -> int:
    nc = basis.coarse_cells_per_side
    cx = min(int(fx * nc), nc - 1)
    cy = min(int(fy * nc), nc - 1)
    return basis.cell_index(cx, cy) if basis.grid.dim == 2 else cx


# ---------------------------------------------------------------------------
# Example 1: exact recovery of a single source (inverse crime, exact pinv)
# ---------------------------------------------------------------------------

def run_example1(spec: ExperimentSpec, ws: Optional[Workspace] = None) -> RunReport:
    ws = ws or build_workspace(spec)
    out = ensure_dir(os.path.join(spec.output_dir, spec.name or "example1"))
    report = RunReport("example1", seed=None)
    nc = ws.basis.coarse_cells_per_side
    pw = ws.pw_full

    if spec.true_sources:
        cases = [("source%d" % i, _cell_index(ws.basis, c), a)
                 for i, (c, a) in enumerate(spec.true_sources)]
        cases = [(nm, j, spec.alpha or 1e-4) for nm, j, _ in cases]
    else:
        j_int = _relative_cell(ws.basis, 0.4, 0.6)
        j_bnd = ws.basis.cell_index(nc // 2, 0)
        cases = [("interior", j_int, spec.alpha or 1e-4),
                 ("boundary", j_bnd, 1e-3)]

    sweep_rows = {}
    for label, j, alpha in cases:
        e = np.zeros(ws.n)
        e[j] = 1.0
        b = boundary_data(ws, e, inverse_crime=True)
        y = operators.pseudo_apply(ws.factors, None, b)
        res = solve(WeightedProblem(pw.P, y, pw.w, alpha), spec.solver)
        pred = theory.predict_noise_free(pw, j, alpha)
        supp = support_of(res.x)
        peak = float(np.max(np.abs(res.x))) if res.x.any() else 0.0
        off = float(np.max(np.abs(np.delete(res.x, j)))) if ws.n > 1 else 0.0
        report.converged &= res.converged
        report.check("%s support is {j}" % label, supp.tolist() == [j],
                     "support=%s" % supp.tolist())
        report.check("%s peak matches gamma" % label,
                     abs(res.x[j] - pred.gamma) <= 1e-6,
                     "dev=%.2e" % abs(res.x[j] - pred.gamma))
        report.check("%s off-support small" % label, off <= 1e-6 * max(peak, 1e-300))
        report.artifacts += write_coefficient_heatmap(
            os.path.join(out, "true_%s" % label), e, nc, ws.basis.grid.dim,
            "true source (%s)" % label)
        report.artifacts += write_coefficient_heatmap(
            os.path.join(out, "solution_%s" % label), res.x, nc, ws.basis.grid.dim,
            "recovered, alpha=%.1e" % alpha)

        # gamma-vs-alpha curve, warm-started from large to small alpha
        d_j = pred.alpha_upper
        alphas = np.geomspace(1e-4 * d_j, 0.9 * d_j, 10)[::-1]
        rows = []
        warm = None
        worst = 0.0
        for a in alphas:
            p = theory.predict_noise_free(pw, j, a)
            r = solve(WeightedProblem(pw.P, y, pw.w, a), spec.solver, warm_start=warm)
            warm = r.x
            report.converged &= r.converged
            mx = float(np.max(r.x))
            dev = abs(mx - p.gamma)
            if p.feasible:
                worst = max(worst, dev)
            rows.append((a, p.gamma, mx, dev, p.feasible))
        sweep_rows[label] = rows
        write_csv(os.path.join(out, "gamma_curve_%s.csv" % label),
                  ("alpha", "gamma", "solver_max", "deviation", "feasible"), rows)
        report.artifacts.append(os.path.join(out, "gamma_curve_%s.csv" % label))
        report.check("%s gamma curve matches" % label, worst <= 1e-6,
                     "worst dev=%.2e" % worst)
    report.values["sweeps"] = sweep_rows
    return report


# ---------------------------------------------------------------------------
# Example 2: noisy data, truncated SVD surrogate, alpha-bar study + Morozov
# ---------------------------------------------------------------------------

def run_example2(spec: ExperimentSpec, ws: Optional[Workspace] = None) -> RunReport:
    ws = ws or build_workspace(spec)
    out = ensure_dir(os.path.join(spec.output_dir, spec.name or "example2"))
    report = RunReport("example2", seed=spec.seed)
    nc = ws.basis.coarse_cells_per_side
    k = min(spec.k or 7, ws.factors.rank)
    pw = operators.projector_and_weights(ws.factors, k)
    apinv = operators.pseudo_inverse_matrix(ws.factors, k)

    if spec.true_sources:
        j = _cell_index(ws.basis, spec.true_sources[0][0])
    else:
        j = _relative_cell(ws.basis, 0.78, 0.78)
    e = np.zeros(ws.n)
    e[j] = 1.0
    b_dagger = boundary_data(ws, e, inverse_crime=spec.inverse_crime)
    b_crime = ws.A @ e
    rho = np.random.default_rng(spec.seed).standard_normal(b_dagger.size)

    report.artifacts += write_coefficient_heatmap(
        os.path.join(out, "true_source"), e, nc, 2, "true source")

    rows = []
    abar_by_level = {}
    for p in spec.noise_levels:
        noise = make_noise(b_dagger, p, rho)
        b = b_dagger + noise.eta
        # the closed form is exact for the total data mismatch, which also
        # carries the (tiny) inter-grid discretization error
        eta_eff = b - b_crime
        nu_img = apinv @ noise.eta
        nu_img_eff = apinv @ eta_eff
        abar = float(np.max(np.abs(nu_img / pw.w)))
        abar_by_level[p] = abar
        pred_lower = theory.predict_with_noise(pw, nu_img, j, abar).alpha_lower
        y = apinv @ b
        tag = "p%d" % round(100 * p)
        for factor, runname in ((3.0, "3abar"), (0.3, "0.3abar")):
            alpha = factor * abar
            pred = theory.predict_with_noise(pw, nu_img_eff, j, alpha)
            cert = theory.recovery_certificate(pw, nu_img_eff, j, alpha)
            if factor == 3.0 and alpha >= pred.alpha_upper:
                rows.append((p, spec.seed, abar, pred_lower, alpha, runname,
                             0, -1, 0.0, pred.gamma, 0.0, cert, False, True))
                report.check("level %s: 3abar feasible" % tag, False,
                             "alpha=%.3e >= upper=%.3e" % (alpha, pred.alpha_upper))
                continue
            res = solve(WeightedProblem(pw.P, y, pw.w, alpha), spec.solver)
            report.converged &= res.converged
            supp = support_of(res.x)
            peak_cell = int(np.argmax(np.abs(res.x))) if res.x.any() else -1
            peak = float(res.x[peak_cell]) if peak_cell >= 0 else 0.0
            rescaled = np.nan
            if factor == 3.0:
                singleton = supp.tolist() == [j]
                report.check("level %s: singleton support at 3abar" % tag,
                             singleton, "support=%s" % supp.tolist())
                report.check("level %s: peak matches gamma" % tag,
                             abs(peak - pred.gamma) <= 1e-6,
                             "dev=%.2e cert=%.2e" % (abs(peak - pred.gamma), cert))
                if res.x.any():
                    xs = theory.rescale_solution(res.x, alpha, pw)
                    rescaled = float(xs[peak_cell])
                    report.check("level %s: rescaled peak in [0.8, 1.2]" % tag,
                                 0.8 <= rescaled <= 1.2, "rescaled=%.4f" % rescaled)
                    closed = pred.gamma / (1.0 - alpha / float(
                        (pw.column(j) / pw.w)[j]))
                    report.check("level %s: rescaled matches closed form" % tag,
                                 abs(rescaled - closed) <= 1e-6)
                    report.artifacts += write_coefficient_heatmap(
                        os.path.join(out, "rescaled_%s" % tag), xs, nc, 2,
                        "rescaled, %d%% noise" % round(100 * p))
            else:
                report.check("level %s: support contains j at 0.3abar" % tag,
                             j in supp.tolist(), "support=%s" % supp.tolist())
            report.artifacts += write_coefficient_heatmap(
                os.path.join(out, "solution_%s_%s" % (runname, tag)), res.x, nc, 2,
                "alpha=%s*abar, %d%% noise" % (factor, round(100 * p)))
            rows.append((p, spec.seed, abar, pred_lower, alpha, runname,
                         len(supp), peak_cell, peak, pred.gamma, rescaled,
                         cert, bool(cert > 0), False))
    write_csv(os.path.join(out, "summary.csv"),
              ("level", "seed", "abar", "theorem_lower", "alpha", "run",
               "support_size", "peak_cell", "peak", "gamma_pred",
               "rescaled_peak", "certificate", "certified", "skipped"), rows)
    report.artifacts.append(os.path.join(out, "summary.csv"))
    report.values["abar"] = abar_by_level
    report.values["true_cell"] = j

    # Morozov study at 10% noise: discrepancy-selected k next to a sweep
    p_m = 0.10
    noise = make_noise(b_dagger, p_m, rho)
    b = b_dagger + noise.eta
    k_m = operators.morozov_truncation(ws.factors, b, float(np.linalg.norm(noise.eta)),
                                       spec.morozov_threshold)
    report.values["morozov_k"] = k_m
    grid_rows = []
    for kk in (3, 5, 15):
        kk = min(kk, ws.factors.rank)
        pwk = operators.projector_and_weights(ws.factors, kk)
        yk = operators.pseudo_apply(ws.factors, kk, b)
        for alpha in (1e-2, 1e-3, 1e-4):
            res = solve(WeightedProblem(pwk.P, yk, pwk.w, alpha), spec.solver)
            report.converged &= res.converged
            supp = support_of(res.x)
            grid_rows.append((kk, alpha, len(supp),
                              int(np.argmax(np.abs(res.x))) if res.x.any() else -1,
                              float(np.max(np.abs(res.x))) if res.x.any() else 0.0,
                              bool(j in supp.tolist())))
            report.artifacts += write_coefficient_heatmap(
                os.path.join(out, "sweep_k%d_a%g" % (kk, alpha)), res.x, nc, 2,
                "k=%d, alpha=%g" % (kk, alpha))
    write_csv(os.path.join(out, "morozov_sweep.csv"),
              ("k", "alpha", "support_size", "peak_cell", "peak_abs",
               "contains_true"), grid_rows)
    write_csv(os.path.join(out, "morozov.csv"),
              ("noise_level", "threshold_factor", "selected_k"),
              [(p_m, spec.morozov_threshold, k_m)])
    report.artifacts += [os.path.join(out, "morozov_sweep.csv"),
                         os.path.join(out, "morozov.csv")]
    return report


# ---------------------------------------------------------------------------
# Example 3: large circular source outside the coarse space
# ---------------------------------------------------------------------------

def run_example3(spec: ExperimentSpec, ws: Optional[Workspace] = None) -> RunReport:
    ws = ws or build_workspace(spec)
    out = ensure_dir(os.path.join(spec.output_dir, spec.name or "example3"))
    report = RunReport("example3")
    nc = ws.basis.coarse_cells_per_side
    center, radius, amp = (0.5, 0.5), 0.2, 1.0
    if spec.true_sources and isinstance(spec.true_sources, dict):
        center = spec.true_sources.get("center", center)
        radius = spec.true_sources.get("radius", radius)
        amp = spec.true_sources.get("amplitude", amp)

    f = fem.disc_indicator(ws.fwd_system.grid, center, radius, amp)
    b = fem.generate_boundary_data(f, ws.fwd_system, ws.system)

    # coarse-cell averages of the true disc, for the paired "true" heatmap
    true_cells = np.zeros(ws.n)
    centers = ws.basis.cell_centers()
    d2 = (centers[:, 0] - center[0]) ** 2 + (centers[:, 1] - center[1]) ** 2
    true_cells[d2 <= radius ** 2] = amp
    report.artifacts += write_coefficient_heatmap(
        os.path.join(out, "true_disc_cells"), true_cells, nc, 2,
        "true disc (cell midpoints)")

    # (a) classical l2 Tikhonov baseline, solved in closed form via the SVD
    sig = ws.factors.sigma
    fil = sig / (sig ** 2 + 2.0 * spec.zeta)
    x_l2 = ws.factors.V[:, :sig.size] @ (fil * (ws.factors.U.T @ b)[:sig.size])
    peak_cell = int(np.argmax(np.abs(x_l2)))
    report.check("l2 baseline peaks next to the boundary",
                 ring_distance(peak_cell, nc) <= 1,
                 "peak cell ring=%d" % ring_distance(peak_cell, nc))
    report.artifacts += write_coefficient_heatmap(
        os.path.join(out, "baseline_tikhonov"), x_l2, nc, 2,
        "l2 Tikhonov, zeta=%g" % spec.zeta)

    alphas = (1e-2, 1e-4, 1e-6)
    size_rows = []
    k = min(spec.k or 5, ws.factors.rank)
    pwk = operators.projector_and_weights(ws.factors, k)
    yk = operators.pseudo_apply(ws.factors, k, b)
    smoother = operators.tikhonov_smoother(ws.factors, spec.beta)
    B_t = smoother.fidelity_matrix()
    c_t = smoother.apply(b)
    pw_full = ws.pw_full

    sizes_by_route = {"truncated_svd": [], "tikhonov": []}
    for route, B, c, w in (("truncated_svd", pwk.P, yk, pwk.w),
                           ("tikhonov", B_t, c_t, pw_full.w)):
        warm = None
        for alpha in sorted(alphas, reverse=True):
            res = solve(WeightedProblem(B, c, w, alpha), spec.solver, warm_start=warm)
            warm = res.x
            report.converged &= res.converged
            supp = support_of(res.x)
            sizes_by_route[route].append((alpha, len(supp)))
            size_rows.append((route, alpha, len(supp),
                              int(np.argmax(np.abs(res.x))) if res.x.any() else -1))
            report.artifacts += write_coefficient_heatmap(
                os.path.join(out, "solution_%s_a%g" % (route, alpha)), res.x, nc, 2,
                "%s, alpha=%g" % (route, alpha))
            if route == "truncated_svd" and alpha == 1e-2 and res.x.any():
                pc = centers[int(np.argmax(np.abs(res.x)))]
                dist = float(np.hypot(pc[0] - center[0], pc[1] - center[1]))
                report.check("weighted l1 localizes the disc at alpha=1e-2",
                             len(supp) <= 12 and dist <= radius + 2.0 / nc,
                             "support=%d peak at (%.2f, %.2f)" % (len(supp), *pc))
    for route, pairs in sizes_by_route.items():
        ordered = sorted(pairs)  # ascending alpha
        sizes = [s for _, s in ordered]
        report.check("support size non-increasing in alpha (%s)" % route,
                     all(sizes[i] >= sizes[i + 1] for i in range(len(sizes) - 1)),
                     "sizes by ascending alpha: %s" % sizes)
    write_csv(os.path.join(out, "support_sizes.csv"),
              ("route", "alpha", "support_size", "peak_cell"), size_rows)
    report.artifacts.append(os.path.join(out, "support_sizes.csv"))
    return report


# ---------------------------------------------------------------------------
# Example 4: several sources through the Tikhonov-smoothed fidelity
# ---------------------------------------------------------------------------

_EX4_PATTERNS = {
    2: ((0.28, 0.03), (0.72, 0.97)),
    4: ((0.28, 0.03), (0.72, 0.97), (0.03, 0.72), (0.53, 0.53)),
    8: ((0.16, 0.03), (0.53, 0.97), (0.03, 0.34), (0.97, 0.66),
        (0.28, 0.28), (0.72, 0.72), (0.34, 0.66), (0.66, 0.34)),
}


def run_example4(spec: ExperimentSpec, ws: Optional[Workspace] = None) -> RunReport:
    ws = ws or build_workspace(spec)
    out = ensure_dir(os.path.join(spec.output_dir, spec.name or "example4"))
    report = RunReport("example4")
    nc = ws.basis.coarse_cells_per_side
    alpha = spec.alpha or 0.01
    smoother = operators.tikhonov_smoother(ws.factors, spec.beta)
    B = smoother.fidelity_matrix()
    w = ws.pw_full.w
    centers = ws.basis.cell_centers()

    if spec.true_sources:
        patterns = {len(spec.true_sources):
                    [( _cell_index(ws.basis, c), a) for c, a in spec.true_sources]}
    else:
        patterns = {
            N: [(_relative_cell(ws.basis, fx, fy), 1.0) for fx, fy in pat]
            for N, pat in _EX4_PATTERNS.items()}

    hit_rows = []
    for N, srcs in sorted(patterns.items()):
        coeffs = np.zeros(ws.n)
        for q, a in srcs:
            coeffs[q] += a
        b = boundary_data(ws, coeffs, inverse_crime=spec.inverse_crime)
        res = solve(WeightedProblem(B, smoother.apply(b), w, alpha), spec.solver)
        report.converged &= res.converged
        supp = support_of(res.x)
        report.artifacts += write_coefficient_heatmap(
            os.path.join(out, "true_N%d" % N), coeffs, nc, 2, "true sources, N=%d" % N)
        report.artifacts += write_coefficient_heatmap(
            os.path.join(out, "solution_N%d" % N), res.x, nc, 2,
            "recovered, N=%d" % N)
        for q, a in srcs:
            if len(supp):
                d = np.hypot(centers[supp, 0] - centers[q, 0],
                             centers[supp, 1] - centers[q, 1])
                nearest = int(supp[np.argmin(d)])
                dist = float(np.min(d))
            else:
                nearest, dist = -1, np.inf
            hit_rows.append((N, q, a, nearest, dist, float(res.x[q])))
        if N == 2:
            amps = [float(res.x[q]) for q, _ in srcs]
            report.check("N=2: both true cells recovered with amplitude >= 0.5",
                         all(v >= 0.5 for v in amps),
                         "amplitudes=%s" % [round(v, 3) for v in amps])
    write_csv(os.path.join(out, "hits.csv"),
              ("N", "true_cell", "amplitude", "nearest_recovered_cell",
               "distance", "recovered_amplitude"), hit_rows)
    report.artifacts.append(os.path.join(out, "hits.csv"))
    return report


# ---------------------------------------------------------------------------
# Figure 1 (unweighted failure) and Figure 2 (1-d two-source counterexample)
# ---------------------------------------------------------------------------

def run_figure1(spec: ExperimentSpec, ws: Optional[Workspace] = None) -> RunReport:
    ws = ws or build_workspace(spec)
    out = ensure_dir(os.path.join(spec.output_dir, spec.name or "figure1"))
    report = RunReport("figure1")
    nc = ws.basis.coarse_cells_per_side
    alpha = spec.alpha or 1e-4
    if spec.true_sources:
        j = _cell_index(ws.basis, spec.true_sources[0][0])
    else:
        j = _relative_cell(ws.basis, 0.4, 0.6)
    e = np.zeros(ws.n)
    e[j] = 1.0
    b = boundary_data(ws, e, inverse_crime=spec.inverse_crime)
    res = solve(WeightedProblem(ws.A, b, np.ones(ws.n), alpha), spec.solver)
    report.converged &= res.converged
    supp = support_of(res.x)
    rings = [ring_distance(i, nc) for i in supp]
    peak = float(np.max(np.abs(res.x))) if res.x.any() else 0.0
    report.check("support hugs the boundary",
                 len(supp) > 0 and max(rings) <= 1, "rings=%s" % sorted(set(rings)))
    report.check("true interior cell absent",
                 abs(res.x[j]) <= 1e-3 * max(peak, 1e-300),
                 "x_j/peak=%.2e" % (abs(res.x[j]) / max(peak, 1e-300)))
    report.artifacts += write_coefficient_heatmap(
        os.path.join(out, "true_source"), e, nc, 2, "true interior source")
    report.artifacts += write_coefficient_heatmap(
        os.path.join(out, "solution_unweighted"), res.x, nc, 2,
        "unweighted l1, alpha=%g" % alpha)
    return report


def run_figure2(spec: ExperimentSpec, ws: Optional[Workspace] = None) -> RunReport:
    ws = ws or build_workspace(spec, dim=1)
    out = ensure_dir(os.path.join(spec.output_dir, spec.name or "figure2"))
    report = RunReport("figure2")
    nc = ws.basis.coarse_cells_per_side
    alpha = spec.alpha or 1e-3
    center = (nc - 1) // 2
    if spec.true_sources:
        m_cell, n_cell = (_cell_index(ws.basis, c) for c, _ in spec.true_sources[:2])
    else:
        m_cell, n_cell = center - 6, center + 6
    mirrored = (m_cell + n_cell == nc - 1)

    coeffs = np.zeros(ws.n)
    coeffs[m_cell] = 1.0
    coeffs[n_cell] = 1.0
    b = boundary_data(ws, coeffs, inverse_crime=spec.inverse_crime)
    res = solve(WeightedProblem(ws.A, b, ws.pw_full.w, alpha), spec.solver)
    report.converged &= res.converged
    supp = support_of(res.x)
    collision = theory.two_source_collision(ws.transfer, m_cell, n_cell, tol=1e-6)

    if mirrored:
        report.check("recovered support is the center cell",
                     supp.tolist() == [center], "support=%s" % supp.tolist())
        report.check("collision detected at the center",
                     collision is not None and collision.j == center
                     and collision.c > 0 and collision.cosine >= 1 - 1e-8,
                     "collision=%r" % (collision,))
    report.artifacts += write_coefficient_heatmap(
        os.path.join(out, "true_sources"), coeffs, nc, 1, "true mirrored pair")
    report.artifacts += write_coefficient_heatmap(
        os.path.join(out, "solution"), res.x, nc, 1, "weighted l1, alpha=%g" % alpha)
    write_csv(os.path.join(out, "collision.csv"),
              ("m", "n", "found", "j", "c", "cosine"),
              [(m_cell, n_cell, collision is not None,
                collision.j if collision else -1,
                collision.c if collision else 0.0,
                collision.cosine if collision else 0.0)])
    report.artifacts.append(os.path.join(out, "collision.csv"))

    # exploratory asymmetric pair: outcome recorded, nothing asserted
    if mirrored and spec.true_sources is None:
        coeffs2 = np.zeros(ws.n)
        coeffs2[m_cell] = 1.0
        coeffs2[n_cell - 1] = 1.0
        b2 = boundary_data(ws, coeffs2, inverse_crime=spec.inverse_crime)
        res2 = solve(WeightedProblem(ws.A, b2, ws.pw_full.w, alpha), spec.solver)
        supp2 = support_of(res2.x)
        write_csv(os.path.join(out, "asymmetric_pair.csv"),
                  ("m", "n", "support", "values"),
                  [(m_cell, n_cell - 1, " ".join(map(str, supp2.tolist())),
                    " ".join(repr(float(v)) for v in res2.x[supp2]))])
        report.artifacts.append(os.path.join(out, "asymmetric_pair.csv"))
    return report


def run_figure1_and_2(spec: ExperimentSpec) -> Tuple[RunReport, RunReport]:
    return run_figure1(spec), run_figure2(spec)


# ---------------------------------------------------------------------------
# Weights figure
# ---------------------------------------------------------------------------

def emit_weights_figure(spec: ExperimentSpec, ws: Optional[Workspace] = None,
                        ks: Sequence[int] = (7, 70)) -> RunReport:
    ws = ws or build_workspace(spec)
    out = ensure_dir(os.path.join(spec.output_dir, spec.name or "weights"))
    report = RunReport("weights")
    nc = ws.basis.coarse_cells_per_side
    rank = ws.factors.rank
    centers = ws.basis.cell_centers()
    rings = np.array([ring_distance(i, nc) for i in range(ws.n)])

    for k in list(ks) + [rank]:
        k_eff = min(k, rank)
        if k_eff != k:
            report.check("k=%d clamped to rank" % k, True, "rank=%d" % rank)
        pwk = operators.projector_and_weights(ws.factors, k_eff)
        label = "k%d" % k_eff if k_eff != rank else "full"
        path = os.path.join(out, "weights_%s" % label)
        report.artifacts += write_coefficient_heatmap(
            path, pwk.w, nc, ws.basis.grid.dim, "weights, k=%d" % k_eff)
        operators.write_weights_csv(path + "_table.csv", pwk.w, centers)
        report.artifacts.append(path + "_table.csv")
        bmean = float(pwk.w[rings == 0].mean())
        imean = float(pwk.w[rings > 0].mean()) if np.any(rings > 0) else 0.0
        report.check("boundary weights dominate (k=%d)" % k_eff,
                     bmean > imean, "boundary=%.4f interior=%.4f" % (bmean, imean))
    dev = float(np.max(np.abs(
        operators.projector_and_weights(ws.factors, rank).w - ws.pw_full.w)))
    report.check("k=rank weights equal untruncated weights", dev <= 1e-10,
                 "dev=%.2e" % dev)
    nonpar = operators.check_nonparallel(ws.transfer)
    operators.write_nonparallel_csv(os.path.join(out, "nonparallel.csv"), nonpar)
    report.artifacts.append(os.path.join(out, "nonparallel.csv"))
    report.check("no two transfer columns are parallel", nonpar.ok,
                 "worst |cos|=%.12f" % nonpar.worst_cosine)
    return report

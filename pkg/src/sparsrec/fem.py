"""P1 finite elements on structured meshes of the unit interval/square.

Builds the pieces of the boundary-observation transfer matrix
A = M_b^(1/2) (L + eps*M)^(-1) M E restricted to boundary rows, where E
prolongs coarse-cell source coefficients onto the fine nodal grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class AssemblyError(RuntimeError):
    """Raised when element matrices or the transfer factorization fail."""


@dataclass
class Grid:
    """Uniform mesh of [0,1] (dim=1) or [0,1]^2 (dim=2).

    2-d node numbering is row-major (node = iy * k + ix) and every square is
    split into two triangles along the lower-left to upper-right diagonal.
    """

    dim: int
    nodes_per_side: int
    node_coords: np.ndarray
    cells: np.ndarray
    boundary_nodes: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def spacing(self) -> float:
        return 1.0 / (self.nodes_per_side - 1)


def build_grid(dim: int, nodes_per_side: int) -> Grid:
    """Build the uniform grid with ``nodes_per_side`` nodes along each axis."""
    if dim not in (1, 2):
        raise ValueError("dim must be 1 or 2")
    if nodes_per_side < 2:
        raise ValueError("nodes_per_side must be at least 2")
    k = nodes_per_side
    xs = np.linspace(0.0, 1.0, k)
    if dim == 1:
        coords = xs[:, None]
        cells = np.column_stack([np.arange(k - 1), np.arange(1, k)])
        boundary = np.array([0, k - 1])
        return Grid(1, k, coords, cells, boundary)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    coords = np.column_stack([X.ravel(), Y.ravel()])
    ll = (np.arange(k - 1)[None, :] + k * np.arange(k - 1)[:, None]).ravel()
    tris = np.empty((2 * ll.size, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([ll, ll + 1, ll + k + 1])
    tris[1::2] = np.column_stack([ll, ll + k + 1, ll + k])
    onb = (
        (coords[:, 0] == 0.0) | (coords[:, 0] == 1.0)
        | (coords[:, 1] == 0.0) | (coords[:, 1] == 1.0)
    )
    return Grid(2, k, coords, tris, np.nonzero(onb)[0])


@dataclass
class SourceBasis:
    """L2-normalized characteristic functions of a disjoint coarse-cell tiling.

    ``E`` holds the fine-grid nodal interpolants of the scaled indicators:
    nodes strictly inside a cell carry the full value, nodes shared between
    cells carry the average of the indicator over the adjacent fine cells.
    The averaging tie-break keeps E exactly mirror-symmetric, which the 1-d
    two-source construction relies on.
    """

    grid: Grid
    coarse_cells_per_side: int
    E: sp.csr_matrix
    normalization: np.ndarray
    cell_index_map: list

    @property
    def n_cells(self) -> int:
        return self.E.shape[1]

    @property
    def cell_width(self) -> float:
        return 1.0 / self.coarse_cells_per_side

    def cell_centers(self) -> np.ndarray:
        """Midpoints of the coarse cells, shape (n, 2); y = 0 in 1-d."""
        nc = self.coarse_cells_per_side
        H = self.cell_width
        if self.grid.dim == 1:
            xs = (np.arange(nc) + 0.5) * H
            return np.column_stack([xs, np.zeros(nc)])
        cx, cy = np.meshgrid(np.arange(nc), np.arange(nc), indexing="xy")
        return np.column_stack([(cx.ravel() + 0.5) * H, (cy.ravel() + 0.5) * H])

    def cell_index(self, cx: int, cy: int = 0) -> int:
        nc = self.coarse_cells_per_side
        if not (0 <= cx < nc and 0 <= cy < (nc if self.grid.dim == 2 else 1)):
            raise ValueError("coarse cell (%d, %d) outside the tiling" % (cx, cy))
        return cy * nc + cx if self.grid.dim == 2 else cx


def _node_cell_fractions_1d(k: int, nc: int, r: int):
    """For each (node, coarse cell) pair: fraction of adjacent fine cells covered."""
    cols = {}
    nf = k - 1
    for c in range(nc):
        vals = {}
        for ix in range(c * r, (c + 1) * r + 1):
            adj = [jx for jx in (ix - 1, ix) if 0 <= jx < nf]
            inside = sum(1 for jx in adj if c * r <= jx < (c + 1) * r)
            if inside:
                vals[ix] = inside / len(adj)
        cols[c] = vals
    return cols


def build_source_basis(fine_grid: Grid, coarse_cells_per_side: int) -> SourceBasis:
    """Interpolate the scaled coarse-cell indicators onto the fine grid."""
    nc = coarse_cells_per_side
    if nc < 1:
        raise ValueError("coarse_cells_per_side must be positive")
    k = fine_grid.nodes_per_side
    nf = k - 1
    if nf % nc != 0:
        raise ValueError(
            "%d fine cells per side cannot be tiled by %d coarse cells" % (nf, nc))
    r = nf // nc
    H = 1.0 / nc
    frac1d = _node_cell_fractions_1d(k, nc, r)
    rows, cols, vals = [], [], []
    supports = []
    if fine_grid.dim == 1:
        norm = np.full(nc, 1.0 / np.sqrt(H))
        for c in range(nc):
            nodes = sorted(frac1d[c])
            supports.append(np.array(nodes))
            for ix in nodes:
                rows.append(ix)
                cols.append(c)
                vals.append(frac1d[c][ix] * norm[c])
        n = nc
    else:
        n = nc * nc
        norm = np.full(n, 1.0 / H)
        for cy in range(nc):
            for cx in range(nc):
                col = cy * nc + cx
                nodes = []
                for iy, fy in frac1d[cy].items():
                    for ix, fx in frac1d[cx].items():
                        # tensor product of the 1-d coverage fractions
                        rows.append(iy * k + ix)
                        cols.append(col)
                        vals.append(fx * fy * norm[col])
                        nodes.append(iy * k + ix)
                supports.append(np.array(sorted(nodes)))
    E = sp.csr_matrix((vals, (rows, cols)), shape=(fine_grid.n_nodes, n))
    return SourceBasis(fine_grid, nc, E, norm, supports)


def _local_matrices_2d(coords: np.ndarray, tri: np.ndarray):
    p = coords[tri]
    v0 = p[1] - p[0]
    v1 = p[2] - p[0]
    det = v0[0] * v1[1] - v0[1] * v1[0]
    if det <= 0:
        raise AssemblyError("degenerate or inverted triangle in mesh")
    area = det / 2.0
    g = np.array([
        [p[1][1] - p[2][1], p[2][0] - p[1][0]],
        [p[2][1] - p[0][1], p[0][0] - p[2][0]],
        [p[0][1] - p[1][1], p[1][0] - p[0][0]],
    ]) / det
    K = area * (g @ g.T)
    Mloc = area / 12.0 * (np.ones((3, 3)) + np.eye(3))
    return K, Mloc


@dataclass
class FemSystem:
    """Assembled P1 matrices for -div(grad u) + eps*u with Neumann walls."""

    grid: Grid
    L: sp.csr_matrix
    M: sp.csr_matrix
    M_boundary: sp.csr_matrix
    epsilon: float
    sqrt_M_boundary: sp.csr_matrix
    sqrt_boundary_block: np.ndarray = field(repr=False)
    _lu: object = field(default=None, init=False, repr=False, compare=False)

    @property
    def boundary_nodes(self) -> np.ndarray:
        return self.grid.boundary_nodes


def assemble_fem(grid: Grid, epsilon: float) -> FemSystem:
    """Assemble stiffness, mass and boundary-mass matrices on ``grid``.

    All cells are congruent per orientation, so the local matrices are
    computed once per orientation; row sums of the stiffness then cancel
    exactly and L annihilates constants in floating point.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    nn = grid.n_nodes
    if grid.dim == 1:
        h = grid.spacing
        Kl = (1.0 / h) * np.array([[1.0, -1.0], [-1.0, 1.0]])
        Ml = (h / 6.0) * np.array([[2.0, 1.0], [1.0, 2.0]])
        locK = [Kl]
        locM = [Ml]
        which = np.zeros(len(grid.cells), dtype=int)
    else:
        K0, M0 = _local_matrices_2d(grid.node_coords, grid.cells[0])
        K1, M1 = _local_matrices_2d(grid.node_coords, grid.cells[1])
        locK = [K0, K1]
        locM = [M0, M1]
        which = np.arange(len(grid.cells)) % 2

    ncell, nloc = grid.cells.shape
    rows = np.repeat(grid.cells, nloc, axis=1).ravel()
    cols = np.tile(grid.cells, (1, nloc)).ravel()
    vK = np.empty(ncell * nloc * nloc)
    vM = np.empty(ncell * nloc * nloc)
    for o, (Kl, Ml) in enumerate(zip(locK, locM)):
        mask = which == o
        vK.reshape(ncell, -1)[mask] = Kl.ravel()
        vM.reshape(ncell, -1)[mask] = Ml.ravel()
    L = sp.coo_matrix((vK, (rows, cols)), shape=(nn, nn)).tocsr()
    M = sp.coo_matrix((vM, (rows, cols)), shape=(nn, nn)).tocsr()

    if grid.dim == 1:
        # point evaluation at the endpoints: fidelity (u(0)^2 + u(1)^2)/2
        Mb = sp.csr_matrix(
            (np.ones(2), (grid.boundary_nodes, grid.boundary_nodes)), shape=(nn, nn))
    else:
        k = grid.nodes_per_side
        h = grid.spacing
        edges = []
        for ix in range(k - 1):
            edges.append((ix, ix + 1))
            edges.append(((k - 1) * k + ix, (k - 1) * k + ix + 1))
        for iy in range(k - 1):
            edges.append((iy * k, (iy + 1) * k))
            edges.append((iy * k + k - 1, (iy + 1) * k + k - 1))
        loc = (h / 6.0) * np.array([[2.0, 1.0], [1.0, 2.0]])
        er, ec, ev = [], [], []
        for a, b in edges:
            for i, na in enumerate((a, b)):
                for j, nb in enumerate((a, b)):
                    er.append(na)
                    ec.append(nb)
                    ev.append(loc[i, j])
        Mb = sp.coo_matrix((ev, (er, ec)), shape=(nn, nn)).tocsr()

    bidx = grid.boundary_nodes
    block = Mb[np.ix_(bidx, bidx)].toarray()
    lam, Qb = np.linalg.eigh(block)
    lam = np.clip(lam, 0.0, None)
    sq_block = (Qb * np.sqrt(lam)) @ Qb.T
    sq_block = 0.5 * (sq_block + sq_block.T)
    m = bidx.size
    sq_full = sp.coo_matrix(
        (sq_block.ravel(),
         (np.repeat(bidx, m), np.tile(bidx, m))), shape=(nn, nn)).tocsr()
    return FemSystem(grid, L, M, Mb, float(epsilon), sq_full, sq_block)


@dataclass
class TransferOperator:
    """Dense map from coarse source coefficients to weighted boundary values."""

    matrix: np.ndarray
    system: FemSystem
    basis: SourceBasis

    @property
    def shape(self):
        return self.matrix.shape


def _solve_state_equation(system: FemSystem, load: np.ndarray) -> np.ndarray:
    # factor (L + eps*M) once per system and reuse it for every load column
    if system._lu is None:
        K = (system.L + system.epsilon * system.M).tocsc()
        try:
            system._lu = spla.splu(K)
        except RuntimeError as exc:
            raise AssemblyError(
                "factorization of (L + eps*M) failed: %s" % exc) from exc
    return system._lu.solve(load)


def assemble_transfer(system: FemSystem, basis: SourceBasis) -> TransferOperator:
    """Form A column-block-wise with a single factorization of (L + eps*M)."""
    if basis.grid is not system.grid and (
            basis.grid.dim != system.grid.dim
            or basis.grid.nodes_per_side != system.grid.nodes_per_side):
        raise ValueError("source basis and system live on different grids")
    load = np.asarray((system.M @ basis.E).todense())
    X = _solve_state_equation(system, load)
    A = system.sqrt_boundary_block @ X[system.boundary_nodes, :]
    return TransferOperator(np.ascontiguousarray(A), system, basis)


def generate_boundary_data(source_nodal: np.ndarray, forward_system: FemSystem,
                           inverse_system: Optional[FemSystem] = None) -> np.ndarray:
    """Boundary observation vector b for a nodal source on the forward grid.

    Solves (L + eps*M) u = M f on the forward grid and restricts u to the
    inversion grid's boundary nodes (the grids must be nested); passing no
    inverse system keeps everything on one grid, i.e. the inverse crime.
    """
    f = np.asarray(source_nodal, dtype=float)
    if f.shape != (forward_system.grid.n_nodes,):
        raise ValueError("source vector does not match the forward grid")
    u = _solve_state_equation(forward_system, np.asarray(forward_system.M @ f))
    if inverse_system is None:
        inverse_system = forward_system
        ub = u[forward_system.boundary_nodes]
    else:
        kf = forward_system.grid.nodes_per_side
        ki = inverse_system.grid.nodes_per_side
        if forward_system.grid.dim != inverse_system.grid.dim:
            raise ValueError("forward and inverse grids have different dimension")
        if (kf - 1) % (ki - 1) != 0:
            raise ValueError("forward grid is not a refinement of the inverse grid")
        s = (kf - 1) // (ki - 1)
        bidx = inverse_system.grid.boundary_nodes
        if inverse_system.grid.dim == 1:
            fwd = bidx * s
        else:
            iy, ix = np.divmod(bidx, ki)
            fwd = (s * iy) * kf + s * ix
        ub = u[fwd]
    return inverse_system.sqrt_boundary_block @ ub


def disc_indicator(grid: Grid, center, radius: float, amplitude: float = 1.0) -> np.ndarray:
    """Nodal indicator of a closed disc, for sources outside the coarse space."""
    if grid.dim != 2:
        raise ValueError("disc sources require a 2-d grid")
    cx, cy = float(center[0]), float(center[1])
    if not radius > 0:
        raise ValueError("radius must be positive")
    if cx - radius < 0 or cx + radius > 1 or cy - radius < 0 or cy + radius > 1:
        raise ValueError("disc is not contained in the unit square")
    d2 = (grid.node_coords[:, 0] - cx) ** 2 + (grid.node_coords[:, 1] - cy) ** 2
    return amplitude * (d2 <= radius * radius).astype(float)

"""Box grids on [-R, R]^d and the monotone upwind discretization of the controlled generator.

Each row of the assembled matrix at an interior node x is::

    sum_k  a_kk/h^2 (psi[x+h e_k] - 2 psi[x] + psi[x-h e_k])
         + b_k^+/h (psi[x+h e_k] - psi[x]) + b_k^-/h (psi[x-h e_k] - psi[x])
    + r_i(x) psi[x]

with zero Dirichlet data on the box boundary.  Under mixed actions the row
is the probability-weighted average of the rows for the pure action pairs,
so it stays affine in each player's mixture.
"""

from __future__ import annotations

import functools
import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .model import GameModel, MarkovStrategy


class BadGeometry(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Grid:
    dim: int
    R: float
    h: float
    n_cells: int  # cells per axis, 2R/h
    coords: np.ndarray  # (n_nodes, d), lexicographic, axis 0 slowest
    interior: np.ndarray  # bool mask over nodes
    interior_idx: np.ndarray  # node index of each interior unknown
    node_to_interior: np.ndarray  # -1 on boundary nodes
    origin: int  # node index nearest 0
    origin_interior: int
    nbr_plus: np.ndarray  # (d, n_int) interior index of x + h e_k, -1 if boundary
    nbr_minus: np.ndarray

    @property
    def key(self) -> tuple:
        return (self.dim, float(self.R), float(self.h))

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_interior(self) -> int:
        return self.interior_idx.size

    @property
    def interior_coords(self) -> np.ndarray:
        return self.coords[self.interior_idx]

    def axis_index(self, x) -> np.ndarray:
        """Per-axis index of the nearest grid line, shape (..., d)."""
        x = np.asarray(x, dtype=float)
        return np.clip(np.rint((x + self.R) / self.h), 0, self.n_cells).astype(int)

    def node_index(self, ij) -> np.ndarray:
        ij = np.asarray(ij)
        n = self.n_cells + 1
        if self.dim == 1:
            return ij[..., 0]
        return ij[..., 0] * n + ij[..., 1]

    def nearest_node(self, x, interior_only: bool = False) -> np.ndarray:
        """Nearest node index for points x (..., d), clamped to the grid."""
        ij = self.axis_index(x)
        if interior_only:
            ij = np.clip(ij, 1, self.n_cells - 1)
        return self.node_index(ij)


def build_grid(dim: int, R: float, h: float) -> Grid:
    if dim not in (1, 2):
        raise BadGeometry(f"dimension must be 1 or 2, got {dim}")
    if not (R > 0 and h > 0):
        raise BadGeometry("R and h must be positive")
    ratio = 2 * R / h
    n_cells = int(round(ratio))
    if abs(ratio - n_cells) > 1e-9 * max(1.0, ratio):
        raise BadGeometry(f"2R/h = {ratio:g} is not an integer")
    if n_cells < 2:
        raise BadGeometry(f"2R/h = {n_cells} leaves no interior node (need >= 2)")
    return _build_grid(dim, float(R), float(h), n_cells)


@functools.lru_cache(maxsize=32)
def _build_grid(dim: int, R: float, h: float, n_cells: int) -> Grid:
    line = np.linspace(-R, R, n_cells + 1)
    n = n_cells + 1
    if dim == 1:
        ij = np.arange(n)[:, None]
    else:
        ij = np.stack(np.meshgrid(np.arange(n), np.arange(n), indexing="ij"), axis=-1).reshape(-1, 2)
    coords = line[ij]
    interior = np.all((ij > 0) & (ij < n_cells), axis=1)
    interior_idx = np.flatnonzero(interior)
    node_to_interior = np.full(coords.shape[0], -1)
    node_to_interior[interior_idx] = np.arange(interior_idx.size)

    dist = np.sum(coords**2, axis=1)
    origin = int(np.flatnonzero(dist == dist.min())[0])

    strides = [1] if dim == 1 else [n, 1]
    nbr_plus = np.empty((dim, interior_idx.size), dtype=int)
    nbr_minus = np.empty((dim, interior_idx.size), dtype=int)
    for k in range(dim):
        nbr_plus[k] = node_to_interior[interior_idx + strides[k]]
        nbr_minus[k] = node_to_interior[interior_idx - strides[k]]

    for arr in (coords, interior, interior_idx, node_to_interior, nbr_plus, nbr_minus):
        arr.setflags(write=False)
    return Grid(
        dim=dim,
        R=R,
        h=h,
        n_cells=n_cells,
        coords=coords,
        interior=interior,
        interior_idx=interior_idx,
        node_to_interior=node_to_interior,
        origin=origin,
        origin_interior=int(node_to_interior[origin]),
        nbr_plus=nbr_plus,
        nbr_minus=nbr_minus,
    )


@dataclass
class StencilMatrix:
    matrix: sp.csr_matrix
    grid_key: tuple | None = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def min_offdiag(self) -> float:
        off = self.matrix - sp.diags(self.matrix.diagonal())
        return float(off.data.min()) if off.nnz else 0.0

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def to_text(self) -> str:
        """One ``row col value`` line per stored entry, row-major."""
        m = self.matrix.tocsr()
        m.sort_indices()
        buf = io.StringIO()
        for row in range(m.shape[0]):
            for ptr in range(m.indptr[row], m.indptr[row + 1]):
                buf.write(f"{row} {m.indices[ptr]} {float(m.data[ptr])!r}\n")
        return buf.getvalue()


class Discretizer:
    """Precomputed per-action stencil coefficients for one (grid, model) pair."""

    def __init__(self, grid: Grid, model: GameModel):
        if model.dim != grid.dim:
            raise BadGeometry("grid and model dimensions differ")
        self.grid = grid
        self.model = model
        x = grid.interior_coords
        h = grid.h
        self.a = model.diffusion(x)  # (n, d)
        self.drift = (model.drift_table(1, x), model.drift_table(2, x))  # (m_j, n, d)
        self.cost = tuple(tuple(model.cost_table(i, j, x) for j in (1, 2)) for i in (1, 2))
        b = self.drift[0][:, None] + self.drift[1][None, :]  # (m1, m2, n, d)
        diff = self.a / h**2
        self.fwd = diff + np.maximum(b, 0.0) / h
        self.bwd = diff + np.maximum(-b, 0.0) / h

    def _interior(self, s: MarkovStrategy | np.ndarray) -> np.ndarray:
        probs = s.probs if isinstance(s, MarkovStrategy) else np.asarray(s, dtype=float)
        if probs.shape[0] == self.grid.n_nodes:
            probs = probs[self.grid.interior_idx]
        return probs

    def coefficients(self, v1, v2) -> tuple[np.ndarray, np.ndarray]:
        p1, p2 = self._interior(v1), self._interior(v2)
        fwd = np.einsum("nu,nw,uwnk->nk", p1, p2, self.fwd)
        bwd = np.einsum("nu,nw,uwnk->nk", p1, p2, self.bwd)
        return fwd, bwd

    def relaxed_cost(self, i: int, v1, v2) -> np.ndarray:
        p1, p2 = self._interior(v1), self._interior(v2)
        r1, r2 = self.cost[i - 1]
        return np.einsum("nu,un->n", p1, r1) + np.einsum("nw,wn->n", p2, r2)

    def assemble(self, fwd: np.ndarray, bwd: np.ndarray, diag_extra=None) -> StencilMatrix:
        g = self.grid
        n = g.n_interior
        rows, cols, vals = [], [], []
        idx = np.arange(n)
        for k in range(g.dim):
            for nbr, coef in ((g.nbr_minus[k], bwd[:, k]), (g.nbr_plus[k], fwd[:, k])):
                mask = nbr >= 0
                rows.append(idx[mask])
                cols.append(nbr[mask])
                vals.append(coef[mask])
        diag = -(fwd.sum(axis=1) + bwd.sum(axis=1))
        if diag_extra is not None:
            diag = diag + diag_extra
        rows.append(idx)
        cols.append(idx)
        vals.append(diag)
        m = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )
        m.sort_indices()
        return StencilMatrix(m, g.key)

    def matrix(self, i: int | None, v1, v2) -> StencilMatrix:
        """Generator under (v1, v2) plus diag(r_i); ``i=None`` leaves the cost out."""
        fwd, bwd = self.coefficients(v1, v2)
        extra = None if i is None else self.relaxed_cost(i, v1, v2)
        return self.assemble(fwd, bwd, extra)

    def hamiltonian(self, i: int, opponent, psi: np.ndarray) -> np.ndarray:
        """H_i(x, u) = (A^{u, opp} psi)(x) + r_i(x, u, opp(x)) psi(x) for each pure action u.

        Returns shape (m_i, n_interior).
        """
        g = self.grid
        q = self._interior(opponent)
        if i == 1:
            fwd = np.einsum("nw,uwnk->unk", q, self.fwd)
            bwd = np.einsum("nw,uwnk->unk", q, self.bwd)
        else:
            fwd = np.einsum("nu,uwnk->wnk", q, self.fwd)
            bwd = np.einsum("nu,uwnk->wnk", q, self.bwd)
        j = 2 if i == 1 else 1
        own = self.cost[i - 1][i - 1]  # (m_i, n)
        other = np.einsum("nw,wn->n", q, self.cost[i - 1][j - 1])
        psi = np.asarray(psi, dtype=float)
        pad = np.append(psi, 0.0)
        out = (own + other[None, :]) * psi[None, :]
        for k in range(g.dim):
            out += fwd[:, :, k] * (pad[g.nbr_plus[k]] - psi)[None, :]
            out += bwd[:, :, k] * (pad[g.nbr_minus[k]] - psi)[None, :]
        return out


@functools.lru_cache(maxsize=16)
def _cached_discretizer(grid_key: tuple, model: GameModel) -> Discretizer:
    return Discretizer(build_grid(*grid_key), model)


def discretizer(grid: Grid, model: GameModel) -> Discretizer:
    return _cached_discretizer(grid.key, model)


def discretize(
    grid: Grid, model: GameModel, i: int | None, v1: MarkovStrategy, v2: MarkovStrategy
) -> StencilMatrix:
    """Stencil matrix of the generator under (v1, v2) plus diag(r_i) on interior nodes."""
    for s in (v1, v2):
        if isinstance(s, MarkovStrategy) and s.grid_key != grid.key:
            raise BadGeometry("strategy is defined on a different grid")
    return discretizer(grid, model).matrix(i, v1, v2)


def transfer_strategy(s: MarkovStrategy, old: Grid, new: Grid) -> MarkovStrategy:
    """Nearest-node transfer of a strategy to another grid (warm starts)."""
    idx = old.nearest_node(new.coords, interior_only=True)
    probs = s.probs[idx].copy()
    probs[~new.interior] = 0.0
    probs[~new.interior, 0] = 1.0
    return MarkovStrategy(s.player, new.key, probs)

"""Sparse operators of the hybrid dG scheme.

The convection operator B realizes

    b_h(u, uh; w, wh) = -(b u, w')_T + <n b u_up, w - wh>_dT,
    n b u_up = max(nb, 0) u + min(nb, 0) uh,

and the diffusion operator D realizes

    d_h = (u', w')_T - <n u', w - wh>_dT + <n (u - uh), w'>_dT
          + <(alpha / h_T)(u - uh), w - wh>_dT.

Rows index test functions, columns trial functions. Dirichlet data enters only
through the load: boundary vertices are given "ghost" hybrid columns that are
split off into ``GB``/``GD``, and the load is ``-(GB + eps*GD) @ g(t)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .network import NetworkTopology
from .space import DiscreteSpace


def _local_to_global(space: DiscreteSpace):
    """Per element: global column of every local slot, plus ghost column or -1."""
    k = space.k
    n = space.n_elements
    nl = k + 3
    glob = np.empty((n, nl), dtype=np.int64)
    glob[:, : k + 1] = space.bulk_dofs(np.arange(n))
    glob[:, k + 1] = np.where(space.left_hyb >= 0, space.n_bulk + space.left_hyb, -1)
    glob[:, k + 2] = np.where(space.right_hyb >= 0, space.n_bulk + space.right_hyb, -1)
    ghost = np.full((n, nl), -1, dtype=np.int64)
    ghost[:, k + 1] = space.left_ghost
    ghost[:, k + 2] = space.right_ghost
    return glob, ghost


def _scatter(space: DiscreteSpace, blocks: np.ndarray):
    """Sum element blocks into (main, ghost) sparse matrices."""
    glob, ghost = _local_to_global(space)
    rows = np.broadcast_to(glob[:, :, None], blocks.shape)
    cols = np.broadcast_to(glob[:, None, :], blocks.shape)
    gcols = np.broadcast_to(ghost[:, None, :], blocks.shape)
    real = (rows >= 0) & (cols >= 0)
    main = sp.coo_matrix(
        (blocks[real], (rows[real], cols[real])), shape=(space.ndof, space.ndof)
    ).tocsr()
    gmask = (rows >= 0) & (gcols >= 0)
    gmat = sp.coo_matrix(
        (blocks[gmask], (rows[gmask], gcols[gmask])), shape=(space.ndof, space.n_ghost)
    ).tocsr()
    return main, gmat


def _edge_velocity(space: DiscreteSpace) -> np.ndarray:
    vel = np.array([e.velocity for e in space.mesh.topology.edges])
    return vel[space.elem_edge]


def assemble_mass(space: DiscreteSpace) -> sp.csr_matrix:
    diag = np.zeros(space.ndof)
    diag[: space.n_bulk] = 1.0
    return sp.diags(diag, format="csr")


def assemble_convection(space: DiscreteSpace, topology: NetworkTopology | None = None,
                        with_ghost: bool = False):
    del topology  # the space carries its topology
    B, _ = _kernels.local_blocks(space.k, space.elem_h, _edge_velocity(space), 1.0)
    main, ghost = _scatter(space, B)
    return (main, ghost) if with_ghost else main


def assemble_diffusion(space: DiscreteSpace, topology: NetworkTopology | None = None,
                       alpha: float = 1.0, with_ghost: bool = False):
    del topology
    if not alpha > 0:
        raise ValueError("stabilization parameter alpha must be positive")
    _, D = _kernels.local_blocks(space.k, space.elem_h, _edge_velocity(space), alpha)
    main, ghost = _scatter(space, D)
    return (main, ghost) if with_ghost else main


@dataclass(frozen=True)
class DiscreteSystem:
    space: DiscreteSpace
    M: sp.csr_matrix
    B: sp.csr_matrix
    D: sp.csr_matrix
    GB: sp.csr_matrix
    GD: sp.csr_matrix
    alpha: float

    @property
    def topology(self) -> NetworkTopology:
        return self.space.mesh.topology

    def operator(self, eps: float) -> sp.csr_matrix:
        """B + eps*D; at eps = 0 this reproduces B entry for entry."""
        return (self.B + eps * self.D).tocsr()

    def load_matrix(self, eps: float) -> sp.csr_matrix:
        """L with load(t) = L @ g(t), g ordered as ``topology.boundary_vertices``."""
        return (-(self.GB + eps * self.GD)).tocsr()

    def boundary_vector(self, t: float) -> np.ndarray:
        topo = self.topology
        return np.array([topo.boundary[v].value(t, topo.horizon) for v in topo.boundary_vertices],
                        dtype=float)

    def load(self, t: float, eps: float) -> np.ndarray:
        return self.load_matrix(eps) @ self.boundary_vector(t)


def assemble(space: DiscreteSpace, alpha: float = 1.0) -> DiscreteSystem:
    if not alpha > 0:
        raise ValueError("stabilization parameter alpha must be positive")
    Bl, Dl = _kernels.local_blocks(space.k, space.elem_h, _edge_velocity(space), alpha)
    B, GB = _scatter(space, Bl)
    D, GD = _scatter(space, Dl)
    return DiscreteSystem(space, assemble_mass(space), B, D, GB, GD, alpha)


def assemble_load(space: DiscreteSpace, topology: NetworkTopology | None = None,
                  profiles=None, eps: float = 0.0, alpha: float = 1.0, t: float = 0.0):
    """Load vector at time t. ``profiles`` maps boundary vertex -> TimeProfile."""
    topo = space.mesh.topology if topology is None else topology
    profiles = topo.boundary if profiles is None else profiles
    Bl, Dl = _kernels.local_blocks(space.k, space.elem_h, _edge_velocity(space), alpha)
    _, GB = _scatter(space, Bl)
    _, GD = _scatter(space, Dl)
    g = np.array([profiles[v].value(t, topo.horizon) if v in profiles else 0.0
                  for v in topo.boundary_vertices], dtype=float)
    return -(GB @ g) - eps * (GD @ g)


def dump_triplets(A: sp.spmatrix) -> str:
    """Coordinate triplets ``row col value``, one per line, row-major."""
    A = sp.coo_matrix(A)
    order = np.lexsort((A.col, A.row))
    return "".join(f"{A.row[i]} {A.col[i]} {A.data[i]:.17g}\n" for i in order)

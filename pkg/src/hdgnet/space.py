"""Broken polynomial spaces with hybrid point values.

Each element carries an L2-orthonormal Legendre basis, so the bulk mass
matrix is the identity and the L2 norm of a bulk field is the Euclidean
norm of its coefficients. Hybrid unknowns live on interior mesh points and
interior vertices; boundary vertices carry none.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import legendre

from .mesh import LAYER_REGION, NetworkMesh, is_nested


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1]."""
    x, w = legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def legendre_table(k: int, xi) -> tuple[np.ndarray, np.ndarray]:
    """P_j(xi) and P_j'(xi) for j = 0..k, shapes (k+1, len(xi))."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    vals = np.empty((k + 1, xi.size))
    ders = np.empty((k + 1, xi.size))
    for j in range(k + 1):
        c = np.zeros(j + 1)
        c[j] = 1.0
        vals[j] = legendre.legval(xi, c)
        ders[j] = legendre.legval(xi, legendre.legder(c)) if j else 0.0
    return vals, ders


def basis_scale(k: int, h) -> np.ndarray:
    """sqrt((2j+1)/h) per basis index (rows) and element (columns)."""
    j = np.arange(k + 1)[:, None]
    return np.sqrt((2 * j + 1) / np.atleast_1d(np.asarray(h, dtype=float))[None, :])


@dataclass(frozen=True)
class DiscreteSpace:
    """Bulk dofs element by element, then hybrid dofs.

    Hybrid ordering: interior points of each edge in edge order, then the
    interior vertices in vertex order. ``left_hyb``/``right_hyb`` hold the
    hybrid index at each element end or -1; ``left_ghost``/``right_ghost``
    hold the boundary-vertex index (position in ``topology.boundary_vertices``)
    or -1.
    """

    mesh: NetworkMesh
    k: int
    elem_edge: np.ndarray = field(init=False, repr=False)
    elem_a: np.ndarray = field(init=False, repr=False)
    elem_h: np.ndarray = field(init=False, repr=False)
    left_hyb: np.ndarray = field(init=False, repr=False)
    right_hyb: np.ndarray = field(init=False, repr=False)
    left_ghost: np.ndarray = field(init=False, repr=False)
    right_ghost: np.ndarray = field(init=False, repr=False)
    hybrid_points: list = field(init=False, repr=False)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("polynomial order must be >= 1")
        mesh, topo = self.mesh, self.mesh.topology
        n = mesh.n_elements
        edge = np.empty(n, dtype=np.int64)
        a = np.empty(n)
        h = np.empty(n)
        lh = np.full(n, -1, dtype=np.int64)
        rh = np.full(n, -1, dtype=np.int64)
        lg = np.full(n, -1, dtype=np.int64)
        rg = np.full(n, -1, dtype=np.int64)
        points = []
        for i, m in enumerate(mesh.edges):
            off = mesh.offsets[i]
            ne = m.n_elements
            edge[off:off + ne] = i
            a[off:off + ne] = m.points[:-1]
            h[off:off + ne] = m.widths
            first = len(points)
            points.extend((i, float(x)) for x in m.points[1:-1])
            # element j (0 < j) starts at interior point j-1 of this edge
            rh[off:off + ne - 1] = first + np.arange(ne - 1)
            lh[off + 1:off + ne] = first + np.arange(ne - 1)
        vertex_hyb = {}
        for v in topo.interior:
            vertex_hyb[v] = len(points)
            points.append(v)
        bindex = {v: j for j, v in enumerate(topo.boundary_vertices)}
        for i, e in enumerate(topo.edges):
            first, last = mesh.offsets[i], mesh.offsets[i + 1] - 1
            if e.tail in vertex_hyb:
                lh[first] = vertex_hyb[e.tail]
            else:
                lg[first] = bindex[e.tail]
            if e.head in vertex_hyb:
                rh[last] = vertex_hyb[e.head]
            else:
                rg[last] = bindex[e.head]
        for name, val in (("elem_edge", edge), ("elem_a", a), ("elem_h", h),
                          ("left_hyb", lh), ("right_hyb", rh), ("left_ghost", lg),
                          ("right_ghost", rg), ("hybrid_points", points)):
            object.__setattr__(self, name, val)

    # -- sizes --------------------------------------------------------------

    @property
    def n_elements(self) -> int:
        return self.mesh.n_elements

    @property
    def n_local(self) -> int:
        return self.k + 1

    @property
    def n_bulk(self) -> int:
        return self.n_elements * self.n_local

    @property
    def n_hybrid(self) -> int:
        return len(self.hybrid_points)

    @property
    def ndof(self) -> int:
        return self.n_bulk + self.n_hybrid

    @property
    def n_ghost(self) -> int:
        return len(self.mesh.topology.boundary_vertices)

    def bulk_dofs(self, elem) -> np.ndarray:
        return np.asarray(elem)[..., None] * self.n_local + np.arange(self.n_local)

    def hybrid_dof(self, point) -> int:
        """Global dof of a hybrid point given as (edge, x) or an interior vertex id."""
        if isinstance(point, str):
            return self.n_bulk + self.hybrid_points.index(point)
        edge, x = point
        m = self.mesh.edges[edge]
        j = int(np.argmin(np.abs(m.points - x)))
        if not 0 < j < m.n_elements:
            raise KeyError(f"no hybrid dof at {point}")
        return self.n_bulk + self._first_point(edge) + j - 1

    def _first_point(self, edge: int) -> int:
        return sum(m.n_elements - 1 for m in self.mesh.edges[:edge])

    def vertex_dof(self, v: str) -> int:
        return self.n_bulk + self.hybrid_points.index(v)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.ndof)

    def bulk(self, u) -> np.ndarray:
        return np.asarray(u)[..., : self.n_bulk]

    def l2_norm(self, u) -> float:
        return float(np.linalg.norm(self.bulk(u)))

    def nquad(self, elem=None) -> np.ndarray:
        """Gauss points per element: k+2, or k+4 on layer elements."""
        regions = self.mesh.regions()
        q = np.where(regions == LAYER_REGION, self.k + 4, self.k + 2)
        return q if elem is None else q[elem]

    # -- evaluation ---------------------------------------------------------

    def element_eval_matrix(self, elem, xi, derivative: bool = False) -> sp.csr_matrix:
        """Rows evaluate the element polynomials of ``elem`` at reference points ``xi``."""
        elem = np.atleast_1d(np.asarray(elem, dtype=np.int64))
        xi = np.broadcast_to(np.asarray(xi, dtype=float), elem.shape)
        vals, ders = legendre_table(self.k, xi)
        hh = self.elem_h[elem]
        scale = basis_scale(self.k, hh)
        data = (ders * scale * (2.0 / hh)) if derivative else vals * scale
        cols = self.bulk_dofs(elem)
        rows = np.repeat(np.arange(elem.size), self.n_local)
        return sp.csr_matrix((data.T.ravel(), (rows, cols.ravel())),
                             shape=(elem.size, self.ndof))

    def locate(self, edge, x, side: str = "right") -> tuple[np.ndarray, np.ndarray]:
        """Global element index and reference coordinate for points on one edge."""
        m = self.mesh.edges[edge]
        x = np.atleast_1d(np.asarray(x, dtype=float))
        tol = 1e-12 * m.length
        if np.any(x < -tol) or np.any(x > m.length + tol):
            raise ValueError(f"position outside edge {edge} of length {m.length}")
        local = m.locate(x, side)
        elem = self.mesh.offsets[edge] + local
        xi = 2.0 * (x - self.elem_a[elem]) / self.elem_h[elem] - 1.0
        return elem, np.clip(xi, -1.0, 1.0)

    def eval_matrix(self, edge, x, side: str = "right") -> sp.csr_matrix:
        elem, xi = self.locate(edge, x, side)
        return self.element_eval_matrix(elem, xi)

    def evaluate(self, u, edge, x, side: str = "right"):
        """Point values of the bulk field; ``side`` picks the one-sided limit at breakpoints.

        ``side="left"`` is the limit from smaller x (upwind), ``"right"`` from larger x.
        """
        vals = self.eval_matrix(edge, x, side) @ np.asarray(u)
        return vals[0] if np.ndim(x) == 0 else vals

    # -- projections --------------------------------------------------------

    def _element_quadrature(self, elem, nq):
        xg, wg = gauss_legendre(int(nq))
        h = self.elem_h[elem]
        x = self.elem_a[elem] + 0.5 * (xg + 1.0) * h
        return xg, x, 0.5 * wg * h

    def project_piH(self, w, w_left=None) -> np.ndarray:
        """Downwind-matched projection onto the bulk space.

        ``w(edge, x)`` is vectorized in ``x``. On every element the result
        reproduces the left limit of ``w`` at the element's right (outflow)
        end and has the same moments as ``w`` against polynomials of degree
        below k. ``w_left`` supplies left limits if ``w`` jumps at breakpoints.
        Hybrid entries are set to the point values of ``w``.
        """
        w_left = w if w_left is None else w_left
        k = self.k
        u = np.zeros(self.ndof)
        nq = self.nquad()
        for g in range(self.n_elements):
            edge = int(self.elem_edge[g])
            xg, x, wq = self._element_quadrature(g, nq[g])
            fx = np.asarray(w(edge, x), dtype=float)
            if not np.all(np.isfinite(fx)):
                raise FloatingPointError(f"non-finite function values on element {g}")
            vals, _ = legendre_table(k, xg)
            scale = basis_scale(k, self.elem_h[g])[:, 0]
            phi = vals * scale[:, None]
            c = phi[:k] @ (wq * fx)
            xr = self.elem_a[g] + self.elem_h[g]
            wr = float(np.asarray(w_left(edge, np.array([xr])), dtype=float)[0])
            # P_j(1) = 1 so the right-end basis values are the scales
            c_k = (wr - c @ scale[:k]) / scale[k]
            u[g * (k + 1): g * (k + 1) + k] = c
            u[g * (k + 1) + k] = c_k
        u[self.n_bulk:] = self._hybrid_samples(w)
        return u

    def project_l2(self, w) -> np.ndarray:
        """Plain element-wise L2 projection; hybrids set to point values."""
        u = np.zeros(self.ndof)
        nq = self.nquad()
        for g in range(self.n_elements):
            edge = int(self.elem_edge[g])
            xg, x, wq = self._element_quadrature(g, nq[g])
            vals, _ = legendre_table(self.k, xg)
            phi = vals * basis_scale(self.k, self.elem_h[g])
            u[g * self.n_local:(g + 1) * self.n_local] = phi @ (wq * np.asarray(w(edge, x)))
        u[self.n_bulk:] = self._hybrid_samples(w)
        return u

    def _hybrid_samples(self, w) -> np.ndarray:
        topo = self.mesh.topology
        out = np.empty(self.n_hybrid)
        for j, p in enumerate(self.hybrid_points):
            if isinstance(p, str):
                i = topo.edges_out[p][0]
                out[j] = np.asarray(w(i, np.array([0.0])))[0]
            else:
                out[j] = np.asarray(w(p[0], np.array([p[1]])))[0]
        return out

    # -- snapshots ------------------------------------------------------------

    def sample_points(self, per_element: int = 4) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Equispaced points per element, endpoints included, as (elem, xi, x)."""
        xi = np.linspace(-1.0, 1.0, per_element)
        elem = np.repeat(np.arange(self.n_elements), per_element)
        xis = np.tile(xi, self.n_elements)
        x = self.elem_a[elem] + 0.5 * (xis + 1.0) * self.elem_h[elem]
        return elem, xis, x


def transfer_matrix(coarse: DiscreteSpace, fine: DiscreteSpace) -> sp.csr_matrix:
    """Exact embedding of a coarse field into a nested fine space.

    Bulk parts are restricted polynomial by polynomial; fine hybrids on coarse
    breakpoints copy the coarse hybrid, new ones sample the (continuous)
    coarse polynomial inside its element.
    """
    if coarse.k != fine.k:
        raise ValueError("spaces must share the polynomial order")
    if not is_nested(coarse.mesh, fine.mesh):
        raise ValueError("fine mesh is not a refinement of the coarse mesh")
    k = fine.k
    nl = k + 1
    xg, wg = gauss_legendre(nl)
    nf = fine.n_elements
    # parent element of each fine element, located at its midpoint
    parent = np.empty(nf, dtype=np.int64)
    for i in range(len(fine.mesh.edges)):
        sl = slice(fine.mesh.offsets[i], fine.mesh.offsets[i + 1])
        mids = fine.elem_a[sl] + 0.5 * fine.elem_h[sl]
        parent[sl] = coarse.mesh.offsets[i] + coarse.mesh.edges[i].locate(mids)
    # quadrature points on fine elements mapped to parent reference coordinates
    xq = fine.elem_a[:, None] + 0.5 * (xg[None, :] + 1.0) * fine.elem_h[:, None]
    xi_c = 2.0 * (xq - coarse.elem_a[parent][:, None]) / coarse.elem_h[parent][:, None] - 1.0
    vf, _ = legendre_table(k, xg)                       # (nl, nq)
    vc, _ = legendre_table(k, xi_c.ravel())             # (nl, nf*nq)
    vc = vc.reshape(nl, nf, nl)
    sf = basis_scale(k, fine.elem_h)                    # (nl, nf)
    sc = basis_scale(k, coarse.elem_h[parent])
    wq = 0.5 * wg[None, :] * fine.elem_h[:, None]       # (nf, nq)
    # block[f, i, j] = int_f phi^f_i phi^c_j
    block = np.einsum("iq,fi,fq,jfq,fj->fij", vf, sf.T, wq, vc, sc.T)
    rows = fine.bulk_dofs(np.arange(nf))[:, :, None].repeat(nl, axis=2)
    cols = coarse.bulk_dofs(parent)[:, None, :].repeat(nl, axis=1)
    r_list = [rows.ravel()]
    c_list = [cols.ravel()]
    d_list = [block.ravel()]
    # hybrids
    coarse_lookup = {}
    for j, p in enumerate(coarse.hybrid_points):
        key = p if isinstance(p, str) else (p[0], round(p[1] / coarse.mesh.edges[p[0]].length, 10))
        coarse_lookup[key] = j
    for j, p in enumerate(fine.hybrid_points):
        row = fine.n_bulk + j
        if isinstance(p, str):
            r_list.append([row]); c_list.append([coarse.n_bulk + coarse_lookup[p]]); d_list.append([1.0])
            continue
        edge, x = p
        key = (edge, round(x / fine.mesh.edges[edge].length, 10))
        if key in coarse_lookup:
            r_list.append([row]); c_list.append([coarse.n_bulk + coarse_lookup[key]]); d_list.append([1.0])
        else:
            ev = coarse.eval_matrix(edge, x).tocoo()
            r_list.append(np.full(ev.nnz, row)); c_list.append(ev.col); d_list.append(ev.data)
    return sp.csr_matrix(
        (np.concatenate(d_list), (np.concatenate(r_list), np.concatenate(c_list))),
        shape=(fine.ndof, coarse.ndof),
    )


def interpolate_to_refined(u, coarse: DiscreteSpace, fine: DiscreteSpace) -> np.ndarray:
    return transfer_matrix(coarse, fine) @ np.asarray(u)


def comparison_operator(space_a: DiscreteSpace, space_b: DiscreteSpace):
    """Matrices (Ea, Eb) with ||u_a - u_b||_L2 = ||Ea u_a - Eb u_b||_2.

    Works on the common refinement of both meshes, so the meshes need not be
    nested; the quadrature is exact for the polynomial difference.
    """
    topo = space_a.mesh.topology
    nq = max(space_a.k, space_b.k) + 1
    xg, wg = gauss_legendre(nq)
    rows_a, rows_b = [], []
    for i, e in enumerate(topo.edges):
        pts = np.union1d(space_a.mesh.edges[i].points, space_b.mesh.edges[i].points)
        keep = np.concatenate([[True], np.diff(pts) > 1e-12 * e.length])
        pts = pts[keep]
        pts[-1] = e.length
        a, h = pts[:-1], np.diff(pts)
        x = (a[:, None] + 0.5 * (xg[None, :] + 1.0) * h[:, None]).ravel()
        sw = np.sqrt((0.5 * wg[None, :] * h[:, None]).ravel())
        rows_a.append(sp.diags(sw) @ space_a.eval_matrix(i, x))
        rows_b.append(sp.diags(sw) @ space_b.eval_matrix(i, x))
    return sp.vstack(rows_a).tocsr(), sp.vstack(rows_b).tocsr()


def snapshot_csv(space: DiscreteSpace, times, states, per_element: int = 4) -> str:
    """Rows (time, edge_id, x, value) at equispaced points in every element."""
    elem, xi, x = space.sample_points(per_element)
    E = space.element_eval_matrix(elem, xi)
    edge_ids = [space.mesh.topology.edges[i].id for i in space.elem_edge[elem]]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "edge_id", "x", "value"])
    for t, u in zip(times, states):
        vals = E @ u
        ts = format(float(t), ".17g")
        for eid, xx, v in zip(edge_ids, x, vals):
            w.writerow([ts, eid, format(float(xx), ".17g"), format(float(v), ".17g")])
    return buf.getvalue()

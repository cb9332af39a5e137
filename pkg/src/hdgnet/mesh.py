"""Per-edge partitions: quasi-uniform meshes and layer-adapted graded meshes."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .network import NetworkTopology

UNIFORM_REGION = 1
LAYER_REGION = 2

# relative tolerance for treating two breakpoints as identical
_POINT_TOL = 1e-12


@dataclass(frozen=True)
class EdgeMesh:
    points: np.ndarray
    region: np.ndarray
    transition: float | None = None
    shishkin: float | None = None

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.points)

    @property
    def n_elements(self) -> int:
        return len(self.points) - 1

    @property
    def length(self) -> float:
        return float(self.points[-1])

    def locate(self, x, side: str = "right") -> np.ndarray:
        """Element index containing x; at breakpoints pick by ``side``.

        ``side="left"`` returns the element to the left of a breakpoint
        (the one whose right end is x), ``"right"`` the one starting at x.
        """
        x = np.asarray(x, dtype=float)
        if side == "left":
            idx = np.searchsorted(self.points, x, side="left") - 1
        elif side == "right":
            idx = np.searchsorted(self.points, x, side="right") - 1
        else:
            raise ValueError(f"side must be 'left' or 'right', got {side!r}")
        return np.clip(idx, 0, self.n_elements - 1)


@dataclass(frozen=True)
class NetworkMesh:
    topology: NetworkTopology
    edges: tuple[EdgeMesh, ...]
    h: float
    kind: str = "uniform"
    eps: float = 0.0
    k: int = 1
    refinements: int = 0
    offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        counts = [m.n_elements for m in self.edges]
        object.__setattr__(self, "offsets", np.concatenate([[0], np.cumsum(counts)]).astype(int))

    @property
    def n_elements(self) -> int:
        return int(self.offsets[-1])

    @property
    def max_width(self) -> float:
        return max(float(m.widths.max()) for m in self.edges)

    @property
    def min_width(self) -> float:
        return min(float(m.widths.min()) for m in self.edges)

    def interior_points(self) -> list[tuple[int, float]]:
        """The points X_h: breakpoints strictly inside edges, as (edge, x)."""
        return [(i, float(x)) for i, m in enumerate(self.edges) for x in m.points[1:-1]]

    def hybrid_points(self) -> list[tuple[int, float] | str]:
        return self.interior_points() + list(self.topology.interior)

    def widths(self) -> np.ndarray:
        return np.concatenate([m.widths for m in self.edges])

    def regions(self) -> np.ndarray:
        return np.concatenate([m.region for m in self.edges])


def _n_uniform(length: float, h: float) -> int:
    return max(1, math.ceil(length / h - 1e-9))


def _check_h(topology: NetworkTopology, h: float):
    shortest = min(e.length for e in topology.edges)
    if not h > 0:
        raise ValueError(f"mesh width must be positive, got {h}")
    if h > shortest * (1 + 1e-12):
        raise ValueError(f"mesh width {h} exceeds the shortest edge ({shortest})")


def _uniform_edge(length: float, h: float) -> EdgeMesh:
    n = _n_uniform(length, h)
    pts = np.linspace(0.0, length, n + 1)
    return EdgeMesh(pts, np.full(n, UNIFORM_REGION, dtype=np.int8))


def build_uniform(topology: NetworkTopology, h: float) -> NetworkMesh:
    """Split every edge into ceil(l_e / h) equal elements."""
    _check_h(topology, h)
    edges = tuple(_uniform_edge(e.length, h) for e in topology.edges)
    return NetworkMesh(topology, edges, h, kind="uniform")


def transition_point(length: float, velocity: float, eps: float, k: int) -> float:
    """Start of the graded layer region, clamped to the upper half of the edge.

    Returns ``length`` itself when the layer region is empty.
    """
    if eps <= 0:
        return length
    raw = length - (k + 1) / velocity * eps * math.log(1.0 / eps)
    if raw >= length:
        return length
    return max(raw, 0.5 * length)


def shishkin_point(length: float, velocity: float, eps: float, k: int, h: float) -> float:
    return length - (k + 1) / velocity * eps * math.log(1.0 / h)


def _layer_points(length, velocity, eps, h, k, xstar):
    """Breakpoints strictly right of xstar, ordered from the outflow end."""
    pts = [length]
    x = length
    scale = eps * (k + 1)
    while True:
        w = eps * h * math.exp(velocity * (length - x) / scale)
        nx = x - w
        if nx <= xstar:
            break
        pts.append(nx)
        x = nx
    if len(pts) >= 2:
        gap = pts[-1] - xstar
        right = pts[-2] - pts[-1]
        # w is the width the recursion would take next
        if gap < max(0.25 * w, right):
            pts.pop()
    return pts


def _graded_edge(length, velocity, eps, h, k) -> EdgeMesh:
    xstar = transition_point(length, velocity, eps, k)
    xs = shishkin_point(length, velocity, eps, k, h)
    if xstar >= length:
        m = _uniform_edge(length, h)
        return EdgeMesh(m.points, m.region, None, xs)
    uni = np.linspace(0.0, length, _n_uniform(length, h) + 1)
    uni = uni[uni < xstar - _POINT_TOL * length]
    layer = _layer_points(length, velocity, eps, h, k, xstar)[::-1]
    pts = np.concatenate([uni, [xstar], layer])
    region = np.concatenate([
        np.full(len(uni), UNIFORM_REGION, dtype=np.int8),
        np.full(len(layer), LAYER_REGION, dtype=np.int8),
    ])
    return EdgeMesh(pts, region, xstar, xs)


def build_graded(topology: NetworkTopology, eps: float, h: float, k: int) -> NetworkMesh:
    """Layer-adapted mesh: uniform up to the transition point, geometric grading after.

    Layer widths follow ``eps*h*exp(b*(l - x)/(eps*(k+1)))`` from the outflow end
    leftwards, so the outflow element has width ``eps*h``.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    if k < 1:
        raise ValueError("polynomial order must be >= 1")
    if eps == 0.0:
        return build_uniform(topology, h)
    _check_h(topology, h)
    edges = tuple(_graded_edge(e.length, e.velocity, eps, h, k) for e in topology.edges)
    return NetworkMesh(topology, edges, h, kind="graded", eps=eps, k=k)


def refine(mesh: NetworkMesh, times: int = 1) -> NetworkMesh:
    """Bisect every element ``times`` times; regions are inherited."""
    edges = list(mesh.edges)
    for _ in range(times):
        new = []
        for m in edges:
            mid = 0.5 * (m.points[:-1] + m.points[1:])
            pts = np.empty(2 * m.n_elements + 1)
            pts[0::2] = m.points
            pts[1::2] = mid
            new.append(EdgeMesh(pts, np.repeat(m.region, 2), m.transition, m.shishkin))
        edges = new
    return NetworkMesh(mesh.topology, tuple(edges), mesh.h / 2**times, kind=mesh.kind,
                       eps=mesh.eps, k=mesh.k, refinements=mesh.refinements + times)


def is_nested(coarse: NetworkMesh, fine: NetworkMesh) -> bool:
    if len(coarse.edges) != len(fine.edges):
        return False
    for mc, mf in zip(coarse.edges, fine.edges):
        tol = _POINT_TOL * 10 * mc.length
        pos = np.searchsorted(mf.points, mc.points - tol)
        pos = np.clip(pos, 0, len(mf.points) - 1)
        if np.any(np.abs(mf.points[pos] - mc.points) > tol):
            return False
    return True


def mesh_stats(mesh: NetworkMesh, eps: float | None = None, k: int | None = None) -> dict:
    """Element counts and widths; layer elements left of the Shishkin point."""
    eps = mesh.eps if eps is None else eps
    k = mesh.k if k is None else k
    regions = mesh.regions()
    widths = mesh.widths()
    beyond = 0
    shishkin = []
    for e, m in zip(mesh.topology.edges, mesh.edges):
        if eps > 0:
            xs = shishkin_point(e.length, e.velocity, eps, k, mesh.h)
        else:
            xs = e.length
        shishkin.append(xs)
        lay = m.region == LAYER_REGION
        left = m.points[:-1][lay]
        beyond += int(np.count_nonzero(left < xs - _POINT_TOL * e.length))
    return {
        "N": mesh.n_elements,
        "n_uniform": int(np.count_nonzero(regions == UNIFORM_REGION)),
        "n_layer": int(np.count_nonzero(regions == LAYER_REGION)),
        "min_width": float(widths.min()),
        "max_width": float(widths.max()),
        "layer_beyond_shishkin": beyond,
        "shishkin_points": shishkin,
    }


def dump_mesh_csv(mesh: NetworkMesh) -> str:
    """One row per breakpoint; width and region refer to the element ending there."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["edge_id", "index", "x", "width", "region"])
    for e, m in zip(mesh.topology.edges, mesh.edges):
        for i, x in enumerate(m.points):
            if i == 0:
                w.writerow([e.id, 0, format(x, ".17g"), "", ""])
            else:
                name = "layer" if m.region[i - 1] == LAYER_REGION else "uniform"
                w.writerow([e.id, i, format(x, ".17g"), format(x - m.points[i - 1], ".17g"), name])
    return buf.getvalue()

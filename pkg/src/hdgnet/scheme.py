"""End-to-end solves: convection-diffusion on graded meshes, transport on
uniform meshes, and the global branch selector between them."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .assembly import DiscreteSystem, assemble
from .mesh import NetworkMesh, build_graded, build_uniform
from .network import NetworkTopology
from .space import DiscreteSpace
from .timeloop import Trajectory, integrate

TRANSPORT = "transport"
CONVDIFF = "convdiff"
MESH_STRATEGIES = ("uniform", "graded", "adaptive")


@dataclass(frozen=True)
class SolveConfig:
    eps: float
    h: float
    k: int = 2
    alpha: float = 1.0
    tau_ratio: float = 0.5
    t_max: float | None = None
    mesh: str = "graded"
    solver_tol: float = 1e-10

    def __post_init__(self):
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError(f"eps must lie in [0, 1], got {self.eps}")
        if not self.h > 0 or not self.alpha > 0 or not self.tau_ratio > 0:
            raise ValueError("h, alpha and tau_ratio must be positive")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError("polynomial order k must be an integer >= 1")
        if self.t_max is not None and not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.mesh not in MESH_STRATEGIES:
            raise ValueError(f"mesh strategy must be one of {MESH_STRATEGIES}")

    @property
    def tau(self) -> float:
        return self.tau_ratio * self.h

    def horizon(self, topology: NetworkTopology) -> float:
        return topology.horizon if self.t_max is None else self.t_max

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Solution:
    trajectory: Trajectory
    mesh: NetworkMesh
    system: DiscreteSystem
    branch: str
    eps: float

    @property
    def space(self) -> DiscreteSpace:
        return self.system.space


def select_adaptive(eps: float, h: float, k: int) -> str:
    """Transport on a uniform mesh iff eps < h**(2k)."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    return TRANSPORT if eps < h ** (2 * k) else CONVDIFF


def _with_profiles(topology: NetworkTopology, profiles, horizon=None) -> NetworkTopology:
    if profiles is None and horizon in (None, topology.horizon):
        return topology
    return topology.with_boundary(topology.boundary if profiles is None else profiles, horizon)


def build_mesh(config: SolveConfig, topology: NetworkTopology) -> tuple[NetworkMesh, str, float]:
    """Mesh, branch and effective eps for a config."""
    strategy = config.mesh
    if strategy == "adaptive":
        branch = select_adaptive(config.eps, config.h, config.k)
        strategy = "uniform" if branch == TRANSPORT else "graded"
    else:
        branch = TRANSPORT if config.eps == 0 else CONVDIFF
    eps = 0.0 if branch == TRANSPORT else config.eps
    if strategy == "uniform" or eps == 0.0:
        return build_uniform(topology, config.h), branch, eps
    return build_graded(topology, eps, config.h, config.k), branch, eps


def solve_on_mesh(mesh: NetworkMesh, config: SolveConfig, eps: float, branch: str,
                  tau: float | None = None, store_every: int = 1) -> Solution:
    topo = mesh.topology
    system = assemble(DiscreteSpace(mesh, config.k), config.alpha)
    tau = config.tau if tau is None else tau
    traj = integrate(system, eps, tau, config.horizon(topo), store_every=store_every)
    return Solution(traj, mesh, system, branch, eps)


def solve(config: SolveConfig, topology: NetworkTopology, profiles=None) -> Solution:
    topo = _with_profiles(topology, profiles, config.t_max)
    topo.check_compatibility(config.k)
    mesh, branch, eps = build_mesh(config, topo)
    return solve_on_mesh(mesh, config, eps, branch)


def solve_convdiff(config: SolveConfig, topology: NetworkTopology, profiles=None):
    """Convection-diffusion solve; graded mesh unless the config asks for uniform."""
    if not config.eps > 0:
        raise ValueError("solve_convdiff needs eps > 0; use solve_transport for eps = 0")
    cfg = config if config.mesh != "adaptive" else replace(config, mesh="graded")
    sol = solve(cfg, topology, profiles)
    return sol.trajectory, sol.mesh


def solve_transport(config: SolveConfig, topology: NetworkTopology, profiles=None):
    """Pure transport (eps = 0 operators and load) on the uniform mesh."""
    sol = solve(replace(config, eps=0.0, mesh="uniform"), topology, profiles)
    return sol.trajectory, sol.mesh


# -- diagnostics --------------------------------------------------------------

def mixing_residuals(space: DiscreteSpace, u) -> dict[str, float]:
    """uh_v * sum_out b - sum_in b_e u_e(v) at every interior vertex."""
    topo = space.mesh.topology
    out = {}
    for v in topo.interior:
        inflow = 0.0
        for i in topo.edges_in[v]:
            e = topo.edges[i]
            inflow += e.velocity * space.evaluate(u, i, e.length, side="left")
        bout = sum(topo.edges[i].velocity for i in topo.edges_out[v])
        out[v] = float(u[space.vertex_dof(v)] * bout - inflow)
    return out


def mixing_value(space: DiscreteSpace, u, v: str) -> float:
    topo = space.mesh.topology
    num = sum(topo.edges[i].velocity * space.evaluate(u, i, topo.edges[i].length, side="left")
              for i in topo.edges_in[v])
    return float(num / sum(topo.edges[i].velocity for i in topo.edges_out[v]))


def layer_probe(space: DiscreteSpace, u, eps: float, k: int | None = None,
                distance: dict[str, float] | None = None, rel_tol: float = 0.5,
                abs_floor: float = 1e-8) -> dict[str, dict]:
    """Per outflow vertex: u(vertex) - u(vertex - d) with d = 5 eps (k+1) / b.

    A layer is flagged when the drop exceeds ``rel_tol`` times the upstream
    magnitude (and ``abs_floor``). Pass ``distance`` to probe at fixed offsets.
    """
    topo = space.mesh.topology
    k = space.k if k is None else k
    report = {}
    for v in topo.outflow:
        i = topo.edges_in[v][0]
        e = topo.edges[i]
        d = distance[v] if distance is not None else 5.0 * eps * (k + 1) / e.velocity
        d = min(d, e.length)
        at_vertex = float(space.evaluate(u, i, e.length, side="left"))
        upstream = float(space.evaluate(u, i, e.length - d, side="left"))
        diff = at_vertex - upstream
        flagged = abs(diff) > max(rel_tol * abs(upstream), abs_floor)
        report[v] = {"edge": e.id, "distance": d, "vertex_value": at_vertex,
                     "upstream_value": upstream, "difference": diff, "layer": bool(flagged)}
    return report


def probe_distances(topology: NetworkTopology, eps: float, k: int) -> dict[str, float]:
    return {v: 5.0 * eps * (k + 1) / topology.edges[topology.edges_in[v][0]].velocity
            for v in topology.outflow}


def sample_profile(space: DiscreteSpace, u, edge: int, x) -> np.ndarray:
    return np.asarray(space.evaluate(u, edge, np.asarray(x, dtype=float), side="left"))

"""Reference solutions, discrete errors, convergence rates and monitors.

All rates are self-convergence rates: the "exact" solution is a discrete
reference on the computational mesh bisected twice with a quarter time step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .mesh import NetworkMesh, is_nested, mesh_stats, refine
from .network import NetworkTopology
from .scheme import (CONVDIFF, TRANSPORT, Solution, SolveConfig, _with_profiles, build_mesh,
                     solve_on_mesh)
from .space import comparison_operator, transfer_matrix
from .timeloop import Trajectory, n_steps

REF_REFINEMENTS = 2


class NestingError(ValueError):
    pass


def computational_step(config: SolveConfig, topology: NetworkTopology) -> float:
    t_max = config.horizon(topology)
    return t_max / n_steps(t_max, config.tau)


def compute_reference(config: SolveConfig, topology: NetworkTopology, profiles=None,
                      mesh: NetworkMesh | None = None) -> Solution:
    """Solve on the mesh bisected twice with tau/4; states kept at coarse times."""
    topo = _with_profiles(topology, profiles, config.t_max)
    if mesh is None:
        mesh, branch, eps = build_mesh(config, topo)
    else:
        branch = TRANSPORT if config.eps == 0 else CONVDIFF
        eps = config.eps
    factor = 2**REF_REFINEMENTS
    fine = refine(mesh, REF_REFINEMENTS)
    tau = computational_step(config, topo) / factor
    return solve_on_mesh(fine, config, eps, branch, tau=tau, store_every=factor)


def _shared_indices(coarse: Trajectory, ref: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    ia, ib = [], []
    j = 0
    tol = 1e-9 * max(1.0, float(coarse.times[-1]))
    for i, t in enumerate(coarse.times):
        while j < len(ref.times) and ref.times[j] < t - tol:
            j += 1
        if j < len(ref.times) and abs(ref.times[j] - t) <= tol:
            ia.append(i)
            ib.append(j)
    if not ia:
        raise NestingError("trajectories share no time levels")
    return np.array(ia), np.array(ib)


def error_ref(run: Trajectory, ref: Trajectory) -> float:
    """max over shared times of ||u_ref - I_ref u||_L2 on a nested reference."""
    if run.space.k != ref.space.k or not is_nested(run.space.mesh, ref.space.mesh):
        raise NestingError("reference mesh is not a refinement of the computational mesh")
    P = transfer_matrix(run.space, ref.space)
    ia, ib = _shared_indices(run, ref)
    if len(ia) != len(run.times):
        raise NestingError("coarse time grid is not a subgrid of the reference grid")
    nb = ref.space.n_bulk
    diff = ref.states[ib, :nb] - (P @ run.states[ia].T).T[:, :nb]
    return float(np.max(np.linalg.norm(diff, axis=1)))


def error_between(a: Trajectory, b: Trajectory) -> float:
    """max over shared times of ||u_a - u_b||_L2 for arbitrary meshes."""
    Ea, Eb = comparison_operator(a.space, b.space)
    ia, ib = _shared_indices(a, b)
    diff = (Ea @ a.states[ia].T) - (Eb @ b.states[ib].T)
    return float(np.max(np.linalg.norm(diff, axis=0)))


def errors_over_time(a: Trajectory, b: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    Ea, Eb = comparison_operator(a.space, b.space)
    ia, ib = _shared_indices(a, b)
    diff = (Ea @ a.states[ia].T) - (Eb @ b.states[ib].T)
    return a.times[ia], np.linalg.norm(diff, axis=0)


def eoc(errors, hs) -> list[float]:
    """log2(e(h)/e(h/2)) for each adjacent pair of a halving sequence."""
    errors = [float(e) for e in errors]
    hs = [float(h) for h in hs]
    if len(errors) != len(hs):
        raise ValueError("errors and mesh sizes differ in length")
    for h0, h1 in zip(hs, hs[1:]):
        if not math.isclose(h1, h0 / 2, rel_tol=1e-9):
            raise ValueError("mesh sizes must halve from one entry to the next")
    return [math.log2(e0 / e1) for e0, e1 in zip(errors, errors[1:])]


def rate_envelope(h: float, eps: float, k: int) -> float:
    return max(h ** (k + 1), min(math.sqrt(eps), h**k))


@dataclass
class RunRecord:
    branch: str
    k: int
    alpha: float
    eps: float
    h: float
    tau: float
    n_elements: int
    n_layer: int
    error: float
    eoc: float | None = None
    stats: dict = field(default_factory=dict, repr=False)

    def row(self) -> list:
        return [self.branch, self.k, self.alpha, self.eps, self.h, self.tau, self.n_elements,
                self.n_layer, self.error, self.eoc]


REPORT_COLUMNS = ["branch", "k", "alpha", "epsilon", "h", "tau", "N_elements", "N_layer",
                  "error", "eoc"]


def run_with_reference(config: SolveConfig, topology: NetworkTopology, profiles=None,
                       reference: str = "same", keep_solution: bool = False):
    """Solve one config and measure its error.

    ``reference="same"`` compares against the refined solve of the same
    problem. ``"convdiff"`` solves the transport problem on the uniform mesh
    and compares it against the refined convection-diffusion solve at
    ``config.eps`` on the graded mesh, i.e. the error of the transport
    branch as an approximation of the eps > 0 solution. ``"none"`` skips the
    reference and reports a NaN error.

    With ``keep_solution`` the computed :class:`Solution` is returned as well.
    """
    topo = _with_profiles(topology, profiles, config.t_max)
    if reference == "convdiff":
        mesh, branch, eps = build_mesh(replace(config, eps=0.0, mesh="uniform"), topo)
    else:
        mesh, branch, eps = build_mesh(config, topo)
    run = solve_on_mesh(mesh, config, eps, branch)
    if reference == "same":
        ref_cfg = config if branch == CONVDIFF else replace(config, eps=0.0)
        ref = compute_reference(ref_cfg, topo, mesh=mesh)
        err = error_ref(run.trajectory, ref.trajectory)
    elif reference == "convdiff":
        cd = replace(config, mesh="graded")
        ref = compute_reference(cd, topo)
        err = error_between(run.trajectory, ref.trajectory)
    elif reference == "none":
        err = math.nan
    else:
        raise ValueError(f"unknown reference kind {reference!r}")
    st = mesh_stats(mesh, eps, config.k)
    record = RunRecord(branch, config.k, config.alpha, config.eps, config.h,
                       run.trajectory.tau, st["N"], st["n_layer"], err, None, st)
    return (record, run) if keep_solution else record


def sweep(configs: list[SolveConfig], topology: NetworkTopology, reference: str = "same",
          jobs: int = 1) -> list[RunRecord]:
    """Run configs (possibly in parallel) and attach EOCs along halving h."""
    if jobs > 1 and len(configs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_with_reference, c, topology, None, reference)
                       for c in configs]
            records = [f.result() for f in futures]
    else:
        records = [run_with_reference(c, topology, None, reference) for c in configs]
    attach_eoc(records)
    return records


def attach_eoc(records: list[RunRecord]):
    for prev, cur in zip(records, records[1:]):
        same_series = (prev.eps == cur.eps and prev.k == cur.k and prev.alpha == cur.alpha
                       and prev.branch == cur.branch)
        finite = math.isfinite(prev.error) and math.isfinite(cur.error)
        if (same_series and finite and math.isclose(cur.h, prev.h / 2, rel_tol=1e-9)
                and cur.error > 0 and prev.error > 0):
            cur.eoc = math.log2(prev.error / cur.error)


def asymptotic_gap(topology: NetworkTopology, eps_list, config: SolveConfig,
                   profiles=None) -> list[dict]:
    """||u_eps - u_0|| on a fine setup for each eps, with successive ratios."""
    topo = _with_profiles(topology, profiles, config.t_max)
    base = replace(config, eps=0.0, mesh="uniform")
    mesh0, _, _ = build_mesh(base, topo)
    transport = solve_on_mesh(mesh0, base, 0.0, TRANSPORT).trajectory
    rows = []
    for eps in eps_list:
        cfg = replace(config, eps=float(eps), mesh="graded")
        mesh, branch, e = build_mesh(cfg, topo)
        traj = solve_on_mesh(mesh, cfg, e, branch).trajectory
        gap = error_between(traj, transport)
        ratio = rows[-1]["gap"] / gap if rows else None
        rows.append({"eps": float(eps), "gap": gap, "ratio": ratio})
    return rows


def max_principle_monitor(traj: Trajectory, topology: NetworkTopology | None = None,
                          tol: float = 0.05, per_element: int = 5) -> dict:
    """Compare the range of u_h over space-time with the range of the data.

    The data range includes 0 (the initial state). Overshoot is reported
    relative to max |g|; ``flagged`` is set when it exceeds ``tol``.
    """
    space = traj.space
    topo = space.mesh.topology if topology is None else topology
    elem, xi, _ = space.sample_points(per_element)
    E = space.element_eval_matrix(elem, xi)
    vals = E @ traj.states.T
    umin, umax = float(vals.min()), float(vals.max())
    gvals = np.array([[p.value(t, topo.horizon) for p in topo.boundary.values()]
                      for t in traj.times]) if topo.boundary else np.zeros((1, 1))
    gmin, gmax = min(0.0, float(gvals.min())), max(0.0, float(gvals.max()))
    scale = max(abs(gmin), abs(gmax))
    over = max(umax - gmax, gmin - umin, 0.0)
    rel = over / scale if scale > 0 else (0.0 if over == 0 else math.inf)
    return {"u_min": umin, "u_max": umax, "g_min": gmin, "g_max": gmax,
            "overshoot": over, "relative_overshoot": rel, "flagged": rel > tol}


def hybrid_residuals(traj: Trajectory, system, eps: float) -> np.ndarray:
    """max-norm of the hybrid rows of K u - l(t) at every stored time."""
    K = system.operator(eps)
    nb = system.space.n_bulk
    out = []
    for t, u in zip(traj.times, traj.states):
        r = K @ u - system.load(t, eps)
        out.append(np.abs(r[nb:]).max() if r.size > nb else 0.0)
    return np.array(out)


def envelope_constants(records: list[RunRecord]) -> dict[str, list[float]]:
    """error / max(h^(k+1), min(sqrt(eps), h^k)) per record, grouped by branch."""
    out: dict[str, list[float]] = {}
    for r in records:
        out.setdefault(r.branch, []).append(r.error / rate_envelope(r.h, r.eps, r.k))
    return out

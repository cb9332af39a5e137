import math

import numpy as np
import pytest
import scipy.sparse as sp

from hdgnet.analysis import eoc, error_between, hybrid_residuals
from hdgnet.assembly import assemble
from hdgnet.mesh import build_graded, build_uniform
from hdgnet.network import TimeProfile
from hdgnet.space import DiscreteSpace
from hdgnet.timeloop import (RadauStepper, SingularSystemError, integrate, n_steps,
                             radau_tableau, step)


def radau_stability(z):
    """Stability function of 3-stage Radau IIA: the (2, 3) Pade approximant of exp."""
    return (1 + 2 * z / 5 + z**2 / 20) / (1 - 3 * z / 5 + 3 * z**2 / 20 - z**3 / 60)


def test_tableau():
    tab = radau_tableau()
    r6 = math.sqrt(6)
    np.testing.assert_allclose(tab.c, [(4 - r6) / 10, (4 + r6) / 10, 1.0], atol=1e-15)
    np.testing.assert_array_equal(tab.A[-1], tab.b)
    assert tab.stages == 3
    for q in range(1, 6):
        assert np.sum(tab.b * tab.c ** (q - 1)) == pytest.approx(1 / q, abs=1e-13)
    # stage order 3: A c^(q-1) = c^q / q
    for q in range(1, 4):
        np.testing.assert_allclose(tab.A @ tab.c ** (q - 1), tab.c**q / q, atol=1e-13)


@pytest.mark.parametrize("lam", [-1.0, -50.0, -1e3, -1e6, 0.5, -0.3 + 0j])
def test_scalar_stability_function(lam):
    tau = 0.1
    lam = float(np.real(lam))
    st = RadauStepper(np.eye(1), np.array([[-lam]]), lambda t: np.zeros(1), tau)
    u = np.array([1.0])
    for _ in range(3):
        nxt = st.step(u, 0.0)
        assert nxt[0] == pytest.approx(radau_stability(tau * lam) * u[0], rel=1e-12, abs=1e-300)
        u = nxt


def test_scalar_forced_order():
    """u' = -u + t^2 has a known solution; the error decays at order >= 3."""
    exact = lambda t: t**2 - 2 * t + 2 - 2 * math.exp(-t)  # noqa: E731
    errs, taus = [], [0.2, 0.1, 0.05]
    for tau in taus:
        st = RadauStepper(np.eye(1), np.eye(1), lambda t: np.array([t**2]), tau)
        u, t = np.zeros(1), 0.0
        for _ in range(round(1 / tau)):
            u = st.step(u, t)
            t += tau
        errs.append(abs(u[0] - exact(1.0)))
    assert min(eoc(errs, taus)) > 4.5


def test_zero_load_zero_state(single_pipe):
    topo = single_pipe.with_boundary({})
    space = DiscreteSpace(build_uniform(topo, 1 / 4), 2)
    system = assemble(space)
    out = step(system, 1e-2, np.zeros(space.ndof), 0.0, 0.1)
    assert not np.any(out)


def test_zero_data_zero_trajectory(gaslib11):
    topo = gaslib11.with_boundary({v: TimeProfile() for v in gaslib11.boundary_vertices})
    system = assemble(DiscreteSpace(build_uniform(topo, 1 / 4), 1))
    traj = integrate(system, 0.05, 0.5, 2.0)
    assert not np.any(traj.states)


def test_time_grid(single_pipe):
    system = assemble(DiscreteSpace(build_uniform(single_pipe, 1 / 4), 1))
    traj = integrate(system, 1e-2, 0.7, 3.0)
    assert n_steps(3.0, 0.7) == 5
    np.testing.assert_allclose(traj.times, np.linspace(0, 3, 6), atol=1e-15)
    assert traj.times[-1] == 3.0
    assert traj.tau == pytest.approx(0.6)
    sub = integrate(system, 1e-2, 0.25, 3.0, store_every=4)
    np.testing.assert_allclose(sub.times, np.arange(4.0), atol=1e-15)


def test_constant_state_is_fixed_point(fig1):
    c = 2.0
    topo = fig1.with_boundary({v: TimeProfile("monomial-ramp", c, 1, ramp=1e-12)
                               for v in fig1.boundary_vertices})
    space = DiscreteSpace(build_graded(topo, 1e-2, 1 / 4, 2), 2)
    system = assemble(space)
    z = space.project_l2(lambda e, x: np.full_like(x, c))
    for eps in (0.0, 1e-2):
        out = step(system, eps, z, 1.0, 0.1)
        np.testing.assert_allclose(out, z, atol=1e-11)


def test_hybrid_rows_hold_at_grid_times(gaslib11):
    space = DiscreteSpace(build_graded(gaslib11, 0.05, 1 / 4, 2), 2)
    system = assemble(space)
    traj = integrate(system, 0.05, 1 / 8, 2.0)
    res = hybrid_residuals(traj, system, 0.05)
    scale = abs(system.operator(0.05)) @ np.abs(traj.states[-1])
    assert res.max() <= 1e-9 * max(1.0, scale.max())


def test_linearity(fig1):
    mesh = build_uniform(fig1, 1 / 4)
    p1 = {"v1": TimeProfile("monomial-ramp", 1.0, 3), "v2": TimeProfile()}
    p2 = {"v1": TimeProfile(), "v2": TimeProfile("monomial-ramp", -2.0, 4)}
    both = {"v1": p1["v1"], "v2": p2["v2"]}
    trajs = []
    for prof in (p1, p2, both):
        space = DiscreteSpace(type(mesh)(fig1.with_boundary(prof), mesh.edges, mesh.h), 2)
        trajs.append(integrate(assemble(space), 1e-2, 1 / 8, 3.0))
    total = trajs[0].states + trajs[1].states
    np.testing.assert_allclose(trajs[2].states, total, rtol=1e-11,
                               atol=1e-11 * np.abs(total).max())


def test_temporal_order(single_pipe):
    space = DiscreteSpace(build_graded(single_pipe, 1e-2, 1 / 16, 2), 2)
    system = assemble(space)
    taus = [0.2, 0.1, 0.05]
    ref = integrate(system, 1e-2, taus[-1] / 8, 3.0)
    errs = [error_between(integrate(system, 1e-2, t, 3.0), ref) for t in taus]
    assert min(eoc(errs, taus)) >= 2.6


def test_singular_system_reported():
    M = sp.csr_matrix((2, 2))
    K = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(SingularSystemError):
        RadauStepper(M, K, lambda t: np.zeros(2), 0.1)


def test_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        RadauStepper(np.eye(1), np.eye(1), lambda t: np.zeros(1), 0.0)

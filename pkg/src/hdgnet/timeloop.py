"""Three-stage Radau IIA integration of M u' + K u = l(t).

M is singular (zero on hybrid dofs), so this is an index-1 DAE. The coupled
stage system is factorized once per (operator, step size); each step costs
one sparse solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import DiscreteSystem
from .space import DiscreteSpace


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class ButcherTableau:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray

    @property
    def stages(self) -> int:
        return len(self.b)


def radau_tableau() -> ButcherTableau:
    r6 = math.sqrt(6.0)
    A = np.array([
        [(88 - 7 * r6) / 360, (296 - 169 * r6) / 1800, (-2 + 3 * r6) / 225],
        [(296 + 169 * r6) / 1800, (88 + 7 * r6) / 360, (-2 - 3 * r6) / 225],
        [(16 - r6) / 36, (16 + r6) / 36, 1 / 9],
    ])
    c = np.array([(4 - r6) / 10, (4 + r6) / 10, 1.0])
    return ButcherTableau(A, A[-1].copy(), c)


class RadauStepper:
    """Fixed-step Radau IIA for ``M u' + K u = L @ g(t)``.

    ``load`` is either a callable returning the full load vector at t, or a
    pair ``(L, g)`` with a sparse matrix L and a callable g returning the
    (short) boundary vector at t.
    """

    def __init__(self, M, K, load, tau: float, tableau: ButcherTableau | None = None):
        self.tab = radau_tableau() if tableau is None else tableau
        self.M = sp.csr_matrix(M)
        self.K = sp.csr_matrix(K)
        self.tau = float(tau)
        if not self.tau > 0:
            raise ValueError("time step must be positive")
        self.n = self.M.shape[0]
        if isinstance(load, tuple):
            self._L, self._g = sp.csr_matrix(load[0]), load[1]
        else:
            self._L, self._g = None, load
        s = self.tab.stages
        big = sp.kron(sp.identity(s), self.M) + self.tau * sp.kron(sp.csr_matrix(self.tab.A), self.K)
        try:
            self._lu = spla.splu(sp.csc_matrix(big))
        except RuntimeError as exc:
            raise SingularSystemError(
                f"stage system of size {big.shape[0]} is singular: {exc}") from None

    def _loads(self, t: float) -> np.ndarray:
        """Load vectors at the stage times, shape (n, s)."""
        times = t + self.tab.c * self.tau
        if self._L is None:
            return np.column_stack([np.asarray(self._g(ti), dtype=float) for ti in times])
        G = np.column_stack([np.asarray(self._g(ti), dtype=float) for ti in times])
        return self._L @ G

    def stages(self, u: np.ndarray, t: float) -> np.ndarray:
        s = self.tab.stages
        rhs = self.tau * (self._loads(t) @ self.tab.A.T)
        rhs += (self.M @ u)[:, None]
        Z = self._lu.solve(rhs.T.ravel())
        if not np.all(np.isfinite(Z)):
            raise SingularSystemError("non-finite stage values; stage system is ill-posed")
        return Z.reshape(s, self.n)

    def step(self, u: np.ndarray, t: float) -> np.ndarray:
        # stiffly accurate: the update is the last stage
        return self.stages(u, t)[-1]


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    space: DiscreteSpace | None = None
    eps: float = 0.0
    tau: float = 0.0

    def at(self, i: int) -> np.ndarray:
        return self.states[i]

    def evaluate(self, i: int, edge: int, x, side: str = "right"):
        return self.space.evaluate(self.states[i], edge, x, side)


def make_stepper(system: DiscreteSystem, eps: float, tau: float) -> RadauStepper:
    return RadauStepper(system.M, system.operator(eps),
                        (system.load_matrix(eps), system.boundary_vector), tau)


def step(system: DiscreteSystem, eps: float, state, t: float, tau: float) -> np.ndarray:
    """One Radau IIA step from ``state`` at ``t``."""
    return make_stepper(system, eps, tau).step(np.asarray(state, dtype=float), t)


def n_steps(t_max: float, tau: float) -> int:
    return max(1, math.ceil(t_max / tau - 1e-9))


def integrate(system: DiscreteSystem, eps: float, tau: float, t_max: float | None = None,
              store_every: int = 1, stepper: RadauStepper | None = None) -> Trajectory:
    """Integrate from zero initial data with the uniform step t_max / ceil(t_max / tau).

    States are kept at every ``store_every``-th step; t = 0 and t_max are
    always kept.
    """
    t_max = system.topology.horizon if t_max is None else t_max
    n = n_steps(t_max, tau)
    dt = t_max / n
    stepper = make_stepper(system, eps, dt) if stepper is None else stepper
    u = np.zeros(system.space.ndof)
    times = [0.0]
    states = [u.copy()]
    for i in range(n):
        t = i * dt
        u = stepper.step(u, t)
        if (i + 1) % store_every == 0 or i + 1 == n:
            times.append(t_max if i + 1 == n else (i + 1) * dt)
            states.append(u.copy())
    return Trajectory(np.array(times), np.array(states), system.space, eps, dt)

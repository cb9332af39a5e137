"""Directed pipe networks: topology, incidence bookkeeping and boundary data.

Edges are flow-aligned: every edge carries a strictly positive velocity in
its own direction, so the tail is where material enters the pipe and the
head is where it leaves.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np


class NetworkError(ValueError):
    """Raised for malformed or inconsistent network descriptions."""


class FlowConservationError(NetworkError):
    def __init__(self, residuals: dict[str, float]):
        self.residuals = residuals
        listing = ", ".join(f"{v}: {r:+.17g}" for v, r in residuals.items())
        super().__init__(f"flow conservation violated at interior vertices ({listing})")


class CompatibilityWarning(UserWarning):
    """Boundary data is too rough at t = 0 for the requested polynomial order."""


@dataclass(frozen=True)
class TimeProfile:
    """Boundary value g(t) attached to a boundary vertex.

    ``monomial-ramp`` is ``c * (t / ramp)**p`` for ``t <= ramp`` and is held at
    ``c`` afterwards; ``ramp`` defaults to the network horizon.
    """

    kind: str = "zero"
    c: float = 0.0
    p: int = 1
    ramp: float | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "monomial-ramp"):
            raise NetworkError(f"unknown profile kind {self.kind!r}")
        if self.kind == "monomial-ramp":
            if int(self.p) != self.p or self.p < 1:
                raise NetworkError(f"ramp exponent must be an integer >= 1, got {self.p}")
            if self.ramp is not None and not self.ramp > 0:
                raise NetworkError("ramp duration must be positive")

    @property
    def compatibility_order(self) -> float:
        """Number of time derivatives that vanish at t = 0, minus one."""
        if self.kind == "zero" or self.c == 0.0:
            return math.inf
        return self.p - 1

    def value(self, t, horizon: float):
        t = np.asarray(t, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(t)
        ramp = horizon if self.ramp is None else self.ramp
        s = np.clip(t / ramp, 0.0, 1.0)
        return self.c * s**self.p

    def scaled(self, factor: float) -> "TimeProfile":
        if self.kind == "zero":
            return self
        return TimeProfile(self.kind, self.c * factor, self.p, self.ramp)

    def to_dict(self) -> dict:
        if self.kind == "zero":
            return {"kind": "zero"}
        d = {"kind": self.kind, "c": self.c, "p": int(self.p)}
        if self.ramp is not None:
            d["ramp"] = self.ramp
        return d


@dataclass(frozen=True)
class Edge:
    id: str
    tail: str
    head: str
    length: float
    velocity: float


@dataclass
class NetworkTopology:
    """Validated network. Treat as immutable once built.

    Attributes
    ----------
    vertices, edges
        Input order is preserved; all derived indexing follows it.
    boundary
        Profile per boundary vertex (missing entries default to zero).
    interior, inflow, outflow
        The vertex partition V_0, V_in, V_out (lists in vertex order).
    """

    vertices: list[str]
    edges: list[Edge]
    boundary: dict[str, TimeProfile]
    horizon: float
    name: str = "network"
    flow_tol: float = 0.0
    edges_in: dict[str, list[int]] = field(init=False, repr=False)
    edges_out: dict[str, list[int]] = field(init=False, repr=False)
    interior: list[str] = field(init=False)
    inflow: list[str] = field(init=False)
    outflow: list[str] = field(init=False)

    def __post_init__(self):
        self._check_structure()
        self.edges_in = {v: [] for v in self.vertices}
        self.edges_out = {v: [] for v in self.vertices}
        for i, e in enumerate(self.edges):
            self.edges_out[e.tail].append(i)
            self.edges_in[e.head].append(i)
        self.interior, self.inflow, self.outflow = [], [], []
        for v in self.vertices:
            incident = self.incident(v)
            if len(incident) != 1:
                self.interior.append(v)
                continue
            e = self.edges[incident[0]]
            # b-signed classification; b > 0 makes it coincide with n_e(v) > 0
            if e.velocity * self.incidence(incident[0], v) > 0:
                self.outflow.append(v)
            else:
                self.inflow.append(v)
        for v in self.boundary:
            if v in self.interior:
                raise NetworkError(
                    f"boundary data given for vertex {v!r} of degree {len(self.incident(v))}; "
                    "boundary vertices must have degree 1"
                )
        self.boundary = {v: self.boundary.get(v, TimeProfile()) for v in self.boundary_vertices}
        violations = {
            v: r for v, r in self.flow_residuals().items() if abs(r) > self.flow_tol
        }
        if violations:
            raise FlowConservationError(violations)

    def _check_structure(self):
        if not self.vertices:
            raise NetworkError("network has no vertices")
        if len(set(self.vertices)) != len(self.vertices):
            raise NetworkError("duplicate vertex id")
        ids = [e.id for e in self.edges]
        if len(set(ids)) != len(ids):
            raise NetworkError("duplicate edge id")
        if not self.edges:
            raise NetworkError("network has no edges")
        known = set(self.vertices)
        for e in self.edges:
            if e.tail not in known or e.head not in known:
                raise NetworkError(f"edge {e.id!r} references an unknown vertex")
            if e.tail == e.head:
                raise NetworkError(f"edge {e.id!r} is a self-loop")
            if not (e.length > 0 and math.isfinite(e.length)):
                raise NetworkError(f"edge {e.id!r} has nonpositive length {e.length}")
            if not (e.velocity > 0 and math.isfinite(e.velocity)):
                raise NetworkError(
                    f"edge {e.id!r} has nonpositive velocity {e.velocity}; "
                    "orient edges along the flow"
                )
        if not self.horizon > 0:
            raise NetworkError("horizon must be positive")
        # connectivity by union-find
        parent = {v: v for v in self.vertices}

        def find(v):
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        for e in self.edges:
            parent[find(e.tail)] = find(e.head)
        if len({find(v) for v in self.vertices}) != 1:
            raise NetworkError("network graph is disconnected")

    # -- incidence ---------------------------------------------------------

    def incident(self, v: str) -> list[int]:
        return self.edges_out[v] + self.edges_in[v]

    def incidence(self, edge: int, v: str) -> int:
        e = self.edges[edge]
        if v == e.tail:
            return -1
        if v == e.head:
            return 1
        return 0

    def incidence_matrix(self) -> np.ndarray:
        """Vertex-by-edge matrix of n_e(v)."""
        n = np.zeros((len(self.vertices), len(self.edges)), dtype=int)
        index = {v: i for i, v in enumerate(self.vertices)}
        for j, e in enumerate(self.edges):
            n[index[e.tail], j] = -1
            n[index[e.head], j] = 1
        return n

    @property
    def boundary_vertices(self) -> list[str]:
        return [v for v in self.vertices if v not in set(self.interior)]

    def edge_index(self, edge_id: str) -> int:
        for i, e in enumerate(self.edges):
            if e.id == edge_id:
                return i
        raise KeyError(edge_id)

    def flow_residuals(self) -> dict[str, float]:
        """Sum of b_e n_e(v) over incident edges for every interior vertex."""
        out = {}
        for v in self.interior:
            r = 0.0
            for i in self.incident(v):
                r += self.edges[i].velocity * self.incidence(i, v)
            out[v] = r
        return out

    # -- boundary data -----------------------------------------------------

    def boundary_values(self, t: float) -> dict[str, float]:
        return {v: float(p.value(t, self.horizon)) for v, p in self.boundary.items()}

    def max_boundary_abs(self) -> float:
        return max((abs(p.c) for p in self.boundary.values()), default=0.0)

    def compatibility_order(self) -> float:
        return min((p.compatibility_order for p in self.boundary.values()), default=math.inf)

    def check_compatibility(self, k: int) -> float:
        """Warn when the boundary data cannot support the rate for order k."""
        m = self.compatibility_order()
        if m < k:
            warnings.warn(
                f"boundary data vanish only to order {m} at t=0; rates for k={k} "
                "may be reduced",
                CompatibilityWarning,
                stacklevel=2,
            )
        return m

    def with_boundary(self, boundary: dict[str, TimeProfile], horizon: float | None = None):
        return NetworkTopology(
            vertices=list(self.vertices),
            edges=list(self.edges),
            boundary=dict(boundary),
            horizon=self.horizon if horizon is None else horizon,
            name=self.name,
            flow_tol=self.flow_tol,
        )

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "vertices": list(self.vertices),
            "edges": [
                {"id": e.id, "tail": e.tail, "head": e.head, "length": e.length,
                 "velocity": e.velocity}
                for e in self.edges
            ],
            "boundary": {v: p.to_dict() for v, p in self.boundary.items()},
            "horizon": self.horizon,
        }
        if self.flow_tol:
            d["flow_tol"] = self.flow_tol
        return d


def validate_flow_conservation(topology: NetworkTopology, tol: float = 0.0) -> dict[str, float]:
    """Return per-vertex residuals; raise if any exceeds ``tol`` in magnitude."""
    res = topology.flow_residuals()
    bad = {v: r for v, r in res.items() if abs(r) > tol}
    if bad:
        raise FlowConservationError(bad)
    return res


def _profile_from(raw) -> TimeProfile:
    if not isinstance(raw, dict):
        raise NetworkError(f"boundary profile must be a mapping, got {raw!r}")
    kind = raw.get("kind", "zero")
    if kind == "zero":
        return TimeProfile()
    try:
        return TimeProfile(kind, float(raw["c"]), int(raw["p"]),
                           None if raw.get("ramp") is None else float(raw["ramp"]))
    except KeyError as exc:
        raise NetworkError(f"boundary profile missing field {exc}") from None


def network_from_dict(doc: dict) -> NetworkTopology:
    try:
        vertices = [str(v) for v in doc["vertices"]]
        edges = [
            Edge(str(e["id"]), str(e["tail"]), str(e["head"]), float(e["length"]),
                 float(e["velocity"]))
            for e in doc["edges"]
        ]
        horizon = float(doc["horizon"])
    except (KeyError, TypeError, ValueError) as exc:
        raise NetworkError(f"malformed network document: {exc!r}") from None
    boundary = {str(v): _profile_from(p) for v, p in (doc.get("boundary") or {}).items()}
    for v in boundary:
        if v not in vertices:
            raise NetworkError(f"boundary data for unknown vertex {v!r}")
    return NetworkTopology(
        vertices=vertices,
        edges=edges,
        boundary=boundary,
        horizon=horizon,
        name=str(doc.get("name", "network")),
        flow_tol=float(doc.get("flow_tol", 0.0)),
    )


def load_network(text: str) -> NetworkTopology:
    """Parse a JSON network document and validate it."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"could not parse network document: {exc}") from None
    if not isinstance(doc, dict):
        raise NetworkError("network document must be a JSON object")
    return network_from_dict(doc)


def serialize(topology: NetworkTopology) -> str:
    return json.dumps(topology.to_dict(), indent=2)


FIXTURES = ("single_pipe", "fig1", "gaslib11")


def load_fixture(name: str) -> NetworkTopology:
    if name not in FIXTURES:
        raise NetworkError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
    text = resources.files("hdgnet.fixtures").joinpath(f"{name}.json").read_text("utf-8")
    return load_network(text)


def load_network_file(path) -> NetworkTopology:
    return load_network(Path(path).read_text("utf-8"))

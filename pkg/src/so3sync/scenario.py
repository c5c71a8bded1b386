"""Scenario files: the on-disk description of a closed-loop setup.

A scenario is one JSON document (UTF-8, order-insensitive keys) naming
the agents, the tree edges with their weight matrices, the informed
agent with the reference attitude, the scalar gains, and integration
defaults. Attitudes are always entered as axis-angle; the axis is
normalized on load and the angle unit defaults to radians.

Example:

    {
      "name": "pair",
      "gains": {"k_r0": 2.5, "k_r": 2.0, "k_w": 1.5},
      "leader": {"agent": 1,
                 "r0": {"angle": 1.2, "axis": [1, 0, 0]},
                 "a0": [5, 8, 10]},
      "agents": [
        {"id": 1, "inertia": [0.1, 0.3, 0.2],
         "initial_attitude": {"angle": 0.0, "axis": [1, 0, 0]},
         "initial_omega": [0, 0, 0]},
        ...
      ],
      "edges": [{"i": 1, "j": 2, "a": [6, 8, 10]}],
      "integration": {"h": 0.001, "tf": 30.0, "sample_every": 10}
    }

Matrices (inertia, weights) are entered either as 3 diagonal values or
as a full symmetric 3x3 nested list.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from importlib import resources

import numpy as np

from . import topology
from .controller import GainAssignment
from .dynamics import H_MAX, ClosedLoopSystem, InertiaSet, SystemState
from .errors import (
    DuplicateEdge,
    HasCycle,
    NotConnected,
    ParseError,
    ValidationError,
)
from .so3 import AxisAngle

_TOP_KEYS = {
    "name",
    "comment",
    "angle_unit",
    "gains",
    "leader",
    "agents",
    "edges",
    "integration",
}

DEFAULT_H = 1e-3
DEFAULT_TF = 30.0
DEFAULT_SAMPLE_EVERY = 10


@dataclasses.dataclass(frozen=True)
class AgentSpec:
    id: int
    inertia: np.ndarray
    initial_attitude: AxisAngle
    initial_omega: np.ndarray


@dataclasses.dataclass(frozen=True)
class EdgeSpec:
    i: int
    j: int
    a: np.ndarray


@dataclasses.dataclass(frozen=True)
class LeaderSpec:
    agent: int
    r0: AxisAngle
    a0: np.ndarray


@dataclasses.dataclass(frozen=True)
class IntegrationSpec:
    h: float = DEFAULT_H
    tf: float = DEFAULT_TF
    sample_every: int = DEFAULT_SAMPLE_EVERY


@dataclasses.dataclass(frozen=True)
class Scenario:
    """A validated scenario; build() turns it into simulation objects."""

    name: str
    agents: tuple
    edges: tuple
    leader: LeaderSpec
    k_r0: float
    k_r: float
    k_w: float
    integration: IntegrationSpec

    @property
    def n_agents(self):
        return len(self.agents)

    def build(self):
        """Constructs (ClosedLoopSystem, initial SystemState).

        Raises:
            ValidationError: any structural or parameter constraint
                violation, with the constraint name attached.
        """
        n = self.n_agents
        try:
            tree = topology.tree_from_pairs(n, [(e.i, e.j) for e in self.edges])
        except HasCycle as exc:
            raise ValidationError("HasCycle", str(exc)) from exc
        except NotConnected as exc:
            raise ValidationError("NotConnected", str(exc)) from exc
        except DuplicateEdge as exc:
            raise ValidationError("DuplicateEdge", str(exc)) from exc
        except ValueError as exc:
            raise ValidationError("BadEdge", str(exc)) from exc
        by_pair = {frozenset((e.i, e.j)): e.a for e in self.edges}
        a_edges = np.stack(
            [by_pair[frozenset((e.head, e.tail))] for e in tree.edges]
        )
        gains = GainAssignment(
            k_r0=self.k_r0,
            k_r=self.k_r,
            k_w=self.k_w,
            a_leader=self.leader.a0,
            a_edges=a_edges,
        )
        inertia = InertiaSet(np.stack([a.inertia for a in self.agents]))
        system = ClosedLoopSystem(
            tree=tree,
            gains=gains,
            r0=self.leader.r0.matrix(),
            inertia=inertia,
            leader=self.leader.agent,
        )
        initial = SystemState(
            np.stack([a.initial_attitude.matrix() for a in self.agents]),
            np.stack([a.initial_omega for a in self.agents]),
        )
        return system, initial

    def to_dict(self):
        """Plain-dict form, angles in radians; inverse of from_dict."""
        return {
            "name": self.name,
            "angle_unit": "radians",
            "gains": {"k_r0": self.k_r0, "k_r": self.k_r, "k_w": self.k_w},
            "leader": {
                "agent": self.leader.agent,
                "r0": _axis_angle_to_node(self.leader.r0),
                "a0": _matrix_to_node(self.leader.a0),
            },
            "agents": [
                {
                    "id": a.id,
                    "inertia": _matrix_to_node(a.inertia),
                    "initial_attitude": _axis_angle_to_node(a.initial_attitude),
                    "initial_omega": list(a.initial_omega),
                }
                for a in self.agents
            ],
            "edges": [
                {"i": e.i, "j": e.j, "a": _matrix_to_node(e.a)} for e in self.edges
            ],
            "integration": {
                "h": self.integration.h,
                "tf": self.integration.tf,
                "sample_every": self.integration.sample_every,
            },
        }


def _axis_angle_to_node(aa):
    return {"angle": float(aa.angle), "axis": list(aa.axis)}


def _matrix_to_node(m):
    m = np.asarray(m)
    if np.all(m == np.diag(np.diag(m))):
        return list(np.diag(m))
    return [list(row) for row in m]


def _require(node, key, where):
    if key not in node:
        raise ValidationError("MissingKey", f"{where} is missing required key {key!r}")
    return node[key]


def _number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError("BadNumber", f"{where} must be a number, got {value!r}")
    return float(value)


def _vector(node, where):
    if not isinstance(node, list) or len(node) != 3:
        raise ValidationError("BadVector", f"{where} must be a list of 3 numbers")
    return np.array([_number(x, where) for x in node])


def _matrix_from_node(node, where):
    if not isinstance(node, list):
        raise ValidationError(
            "BadMatrix", f"{where} must be 3 diagonal values or a 3x3 nested list"
        )
    if len(node) == 3 and all(isinstance(x, (int, float)) for x in node):
        return np.diag([_number(x, where) for x in node])
    if len(node) == 3 and all(isinstance(row, list) and len(row) == 3 for row in node):
        return np.array([[_number(x, where) for x in row] for row in node])
    raise ValidationError(
        "BadMatrix", f"{where} must be 3 diagonal values or a 3x3 nested list"
    )


def _axis_angle_from_node(node, where, scale):
    if not isinstance(node, dict):
        raise ValidationError("BadAttitude", f"{where} must be an angle/axis map")
    angle = _number(_require(node, "angle", where), f"{where}.angle") * scale
    axis = _vector(_require(node, "axis", where), f"{where}.axis")
    norm = float(np.linalg.norm(axis))
    if norm < 1e-8:
        raise ValidationError("ZeroAxis", f"{where}.axis has near-zero norm {norm:.3e}")
    if abs(norm - 1.0) <= 1e-12:
        norm = 1.0  # keep already-unit axes bit-identical across reloads
    extra = set(node) - {"angle", "axis"}
    if extra:
        raise ValidationError("UnknownKey", f"{where} has unknown keys {sorted(extra)}")
    return AxisAngle(angle, axis / norm)


def scenario_from_dict(doc):
    """Validates a plain dict into a Scenario; see load_scenario."""
    if not isinstance(doc, dict):
        raise ValidationError("BadDocument", "scenario root must be a map")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ValidationError(
            "UnknownKey", f"scenario has unknown top-level keys {sorted(unknown)}"
        )
    unit = doc.get("angle_unit", "radians")
    if unit not in ("radians", "degrees"):
        raise ValidationError(
            "BadAngleUnit", f"angle_unit must be 'radians' or 'degrees', got {unit!r}"
        )
    scale = 1.0 if unit == "radians" else math.pi / 180.0

    gains_node = _require(doc, "gains", "scenario")
    if not isinstance(gains_node, dict):
        raise ValidationError("BadGains", "gains must be a map of k_r0, k_r, k_w")
    k_r0 = _number(_require(gains_node, "k_r0", "gains"), "gains.k_r0")
    k_r = _number(_require(gains_node, "k_r", "gains"), "gains.k_r")
    k_w = _number(_require(gains_node, "k_w", "gains"), "gains.k_w")

    leader_node = _require(doc, "leader", "scenario")
    if isinstance(leader_node, list):
        raise ValidationError(
            "MultipleLeaders", "exactly one informed agent is supported"
        )
    if not isinstance(leader_node, dict):
        raise ValidationError("BadLeader", "leader must be a map")
    leader = LeaderSpec(
        agent=int(_number(leader_node.get("agent", 1), "leader.agent")),
        r0=_axis_angle_from_node(_require(leader_node, "r0", "leader"), "leader.r0", scale),
        a0=_matrix_from_node(_require(leader_node, "a0", "leader"), "leader.a0"),
    )

    agents_node = _require(doc, "agents", "scenario")
    if not isinstance(agents_node, list) or not agents_node:
        raise ValidationError("BadAgents", "agents must be a non-empty list")
    agents = []
    for idx, node in enumerate(agents_node):
        where = f"agents[{idx}]"
        if not isinstance(node, dict):
            raise ValidationError("BadAgent", f"{where} must be a map")
        agents.append(
            AgentSpec(
                id=int(_number(_require(node, "id", where), f"{where}.id")),
                inertia=_matrix_from_node(
                    _require(node, "inertia", where), f"{where}.inertia"
                ),
                initial_attitude=_axis_angle_from_node(
                    _require(node, "initial_attitude", where),
                    f"{where}.initial_attitude",
                    scale,
                ),
                initial_omega=_vector(
                    _require(node, "initial_omega", where), f"{where}.initial_omega"
                ),
            )
        )
    n = len(agents)
    ids = sorted(a.id for a in agents)
    if ids != list(range(1, n + 1)):
        raise ValidationError(
            "BadAgentIds", f"agent ids must be exactly 1..{n}, got {ids}"
        )
    agents.sort(key=lambda a: a.id)
    if not 1 <= leader.agent <= n:
        raise ValidationError(
            "BadLeader", f"leader agent {leader.agent} is not an agent id in 1..{n}"
        )

    edges_node = _require(doc, "edges", "scenario")
    if not isinstance(edges_node, list):
        raise ValidationError("BadEdges", "edges must be a list")
    edges = []
    for idx, node in enumerate(edges_node):
        where = f"edges[{idx}]"
        if not isinstance(node, dict):
            raise ValidationError("BadEdge", f"{where} must be a map")
        edges.append(
            EdgeSpec(
                i=int(_number(_require(node, "i", where), f"{where}.i")),
                j=int(_number(_require(node, "j", where), f"{where}.j")),
                a=_matrix_from_node(_require(node, "a", where), f"{where}.a"),
            )
        )

    integ_node = doc.get("integration", {})
    if not isinstance(integ_node, dict):
        raise ValidationError("BadIntegration", "integration must be a map")
    h = _number(integ_node.get("h", DEFAULT_H), "integration.h")
    tf = _number(integ_node.get("tf", DEFAULT_TF), "integration.tf")
    sample_every = int(
        _number(integ_node.get("sample_every", DEFAULT_SAMPLE_EVERY),
                "integration.sample_every")
    )
    if not 0.0 < h <= H_MAX:
        raise ValidationError(
            "BadIntegration", f"integration.h must be in (0, {H_MAX}], got {h}"
        )
    if tf < 0.0:
        raise ValidationError("BadIntegration", f"integration.tf must be >= 0, got {tf}")
    if sample_every < 1:
        raise ValidationError(
            "BadIntegration",
            f"integration.sample_every must be >= 1, got {sample_every}",
        )

    scenario = Scenario(
        name=str(doc.get("name", "")),
        agents=tuple(agents),
        edges=tuple(edges),
        leader=leader,
        k_r0=k_r0,
        k_r=k_r,
        k_w=k_w,
        integration=IntegrationSpec(h=h, tf=tf, sample_every=sample_every),
    )
    scenario.build()  # surfaces every remaining constraint at load time
    return scenario


def load_scenario(path):
    """Reads and fully validates a scenario file.

    Raises:
        OSError: unreadable path.
        ParseError: not valid JSON (with line/column).
        ValidationError: schema or parameter violation, named constraint.
    """
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from exc
    return scenario_from_dict(doc)


def save_scenario(scenario, path):
    """Writes a scenario as JSON, atomically (temp file + rename)."""
    text = json.dumps(scenario.to_dict(), indent=2)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text + "\n")
    os.replace(tmp, path)


def bundled_scenario_names():
    """Names of the scenarios shipped inside the package."""
    root = resources.files("so3sync").joinpath("scenarios")
    return sorted(
        p.name.removesuffix(".scenario")
        for p in root.iterdir()
        if p.name.endswith(".scenario")
    )


def resolve_scenario_path(name_or_path):
    """Maps a CLI argument to a readable scenario path.

    An existing filesystem path wins; otherwise bare names (with or
    without the .scenario suffix) refer to bundled scenarios.

    Raises:
        FileNotFoundError: neither a file nor a bundled name.
    """
    if os.path.exists(name_or_path):
        return str(name_or_path)
    base = os.path.basename(str(name_or_path)).removesuffix(".scenario")
    candidate = resources.files("so3sync").joinpath("scenarios", f"{base}.scenario")
    if candidate.is_file():
        return str(candidate)
    raise FileNotFoundError(
        f"no scenario file {name_or_path!r} and no bundled scenario named {base!r} "
        f"(bundled: {', '.join(bundled_scenario_names())})"
    )

"""Scenario files: parsing, validation, serialization.

A scenario is a YAML document of nested key-value sections; the exact field
names are frozen in the README.  Parsing keeps everything as plain Python
values so configurations round-trip (load -> serialize -> load is identity);
``build`` turns a validated config into the numeric objects the solvers use.
Validation failures name the offending field and, where the source is
available, its line number.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import yaml

from .algebra import LieAlgebra
from .bvp import AgentBoundary, BoundaryConditions, ShootingSettings
from .dynamics import (BI_INVARIANT, INTEGRATE_ODE, IntegratorSettings,
                       LEFT_INVARIANT, RECOMPUTE)
from .errors import ScenarioParseError, ScenarioValidationError
from .geodesics import GeodesicSettings
from .geometry import Metric
from .potentials import EdgePotentials, Graph, make_potential
from .verification import OracleSettings

_FORMULATIONS = (LEFT_INVARIANT, BI_INVARIANT)
_HJK_POLICIES = (RECOMPUTE, INTEGRATE_ODE)
_FAMILIES = ("zero", "inverse_shifted", "gaussian")
_GRAD_METHODS = ("log", "fd")


@dataclass(frozen=True)
class PotentialConfig:
    family: str = "zero"
    gain: float = 1.0
    shape: float = 1.0
    gradient_method: str = "log"
    per_edge: tuple = ()


@dataclass(frozen=True)
class AgentBoundaryConfig:
    start: tuple      # coordinate/rotation vector, or a row-major matrix
    end: tuple
    velocity_start: tuple
    velocity_end: tuple


@dataclass(frozen=True)
class AgentInitialConfig:
    xi1: tuple
    xi2: tuple


@dataclass(frozen=True)
class ScenarioConfig:
    group_kind: str
    group_dim: int
    metric_matrix: object          # "identity" or tuple of row tuples
    metric_bi_invariant: bool
    formulation: str
    agents: int
    edges: tuple
    potential: PotentialConfig
    interval: tuple
    boundary: tuple                # AgentBoundaryConfig per agent
    initial: Optional[tuple]       # AgentInitialConfig per agent or None
    integrator_step: float
    hjk_policy: str
    shooting: dict
    geodesic: dict
    oracle: dict
    residual_fd_step: float
    output_dir: str
    seed: int


# ---------------------------------------------------------------------------
# line-mark index for diagnostics
# ---------------------------------------------------------------------------


def _mark_index(text: str) -> dict:
    """Map dotted field paths to 1-based line numbers."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    marks = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                sub = f"{path}.{key_node.value}" if path else str(key_node.value)
                marks[sub] = key_node.start_mark.line + 1
                walk(value_node, sub)
        elif isinstance(node, yaml.SequenceNode):
            for i, item in enumerate(node.value):
                sub = f"{path}[{i}]"
                marks[sub] = item.start_mark.line + 1
                walk(item, sub)

    if root is not None:
        walk(root, "")
    return marks


def _as_vector(value, length, path, marks):
    if (not isinstance(value, (list, tuple)) or len(value) != length
            or not all(isinstance(v, (int, float)) for v in value)):
        raise ScenarioValidationError(
            f"expected a list of {length} numbers", field=path,
            line=(marks or {}).get(path))
    return tuple(float(v) for v in value)


def _as_pose(entry, key, kind, dim, path, marks):
    """Read a pose: a coordinate/rotation vector or a row-major matrix key."""
    matrix_key = f"{key}_matrix"
    if matrix_key in entry:
        if kind != "so3":
            raise ScenarioValidationError(
                "matrix poses are only supported on so3",
                field=f"{path}.{matrix_key}", line=(marks or {}).get(path))
        rows = entry[matrix_key]
        if (not isinstance(rows, list) or len(rows) != dim
                or any(not isinstance(r, list) or len(r) != dim for r in rows)):
            raise ScenarioValidationError(
                f"expected a {dim}x{dim} row-major matrix",
                field=f"{path}.{matrix_key}", line=(marks or {}).get(path))
        return tuple(tuple(float(v) for v in r) for r in rows)
    if key not in entry:
        raise ScenarioValidationError(
            f"required field is missing (or use {matrix_key})",
            field=f"{path}.{key}", line=(marks or {}).get(path))
    return _as_vector(entry[key], dim, f"{path}.{key}", marks)


def load_scenario(text: str) -> ScenarioConfig:
    """Parse and validate scenario text into a config of plain values."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        line = None
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            line = mark.line + 1
        raise ScenarioParseError(str(exc.args[0] if exc.args else exc),
                                 line=line) from exc
    if not isinstance(data, dict):
        raise ScenarioParseError("scenario must be a mapping of sections")
    marks = _mark_index(text)

    def fail(msg, path):
        raise ScenarioValidationError(msg, field=path, line=marks.get(path))

    group = data.get("group")
    if not isinstance(group, dict) or "kind" not in group:
        fail("section with a 'kind' field is required", "group")
    kind = group["kind"]
    if kind == "so3":
        dim = 3
    elif kind == "abelian":
        dim = group.get("dim")
        if not isinstance(dim, int) or dim < 1:
            fail("abelian groups need a positive integer 'dim'", "group.dim")
    else:
        fail(f"unknown kind {kind!r} (expected 'so3' or 'abelian')", "group.kind")

    metric = data.get("metric", {}) or {}
    matrix = metric.get("matrix", "identity")
    if matrix != "identity":
        if (not isinstance(matrix, list) or len(matrix) != dim
                or any(not isinstance(r, list) or len(r) != dim for r in matrix)):
            fail(f"matrix must be 'identity' or a {dim}x{dim} row-major array",
                 "metric.matrix")
        matrix = tuple(tuple(float(v) for v in row) for row in matrix)
    bi_invariant = bool(metric.get("bi_invariant", False))

    formulation = data.get("formulation", LEFT_INVARIANT)
    if formulation not in _FORMULATIONS:
        fail(f"must be one of {_FORMULATIONS}", "formulation")
    if formulation == BI_INVARIANT and not bi_invariant:
        fail("bi-invariant formulation requires metric.bi_invariant: true",
             "formulation")

    agents = data.get("agents")
    if not isinstance(agents, int) or agents < 1:
        fail("must be a positive integer", "agents")

    edges = []
    for i, e in enumerate(data.get("edges", []) or []):
        path = f"edges[{i}]"
        if (not isinstance(e, (list, tuple)) or len(e) != 2
                or not all(isinstance(v, int) for v in e)):
            fail("each edge is a pair of 1-based agent indices", path)
        j, k = int(e[0]), int(e[1])
        if j == k:
            fail(f"self-loop edge {{{j},{k}}}", path)
        if not (1 <= j <= agents and 1 <= k <= agents):
            fail(f"edge {{{j},{k}}} references a missing agent", path)
        edges.append((min(j, k), max(j, k)))

    pot_raw = data.get("potential", {}) or {}
    family = pot_raw.get("family", "zero")
    if family not in _FAMILIES:
        fail(f"must be one of {_FAMILIES}", "potential.family")
    gain = float(pot_raw.get("gain", 1.0))
    shape = float(pot_raw.get("shape", 1.0))
    if gain < 0.0:
        fail("must be non-negative", "potential.gain")
    if shape <= 0.0:
        fail("must be positive", "potential.shape")
    grad_method = pot_raw.get("gradient_method", "log")
    if grad_method not in _GRAD_METHODS:
        fail(f"must be one of {_GRAD_METHODS}", "potential.gradient_method")
    per_edge = []
    for i, o in enumerate(pot_raw.get("per_edge", []) or []):
        path = f"potential.per_edge[{i}]"
        if not isinstance(o, dict) or "edge" not in o:
            fail("override needs an 'edge' field", path)
        e = o["edge"]
        if (not isinstance(e, (list, tuple)) or len(e) != 2
                or (min(e), max(e)) not in edges):
            fail("override edge must appear in the edge list", f"{path}.edge")
        fam = o.get("family", family)
        if fam not in _FAMILIES:
            fail(f"must be one of {_FAMILIES}", f"{path}.family")
        per_edge.append((
            (min(e), max(e)), fam,
            float(o.get("gain", gain)), float(o.get("shape", shape)),
        ))

    boundary = data.get("boundary")
    if not isinstance(boundary, dict):
        fail("section is required", "boundary")
    interval = boundary.get("interval", [0.0, 1.0])
    if (not isinstance(interval, (list, tuple)) or len(interval) != 2
            or float(interval[1]) <= float(interval[0])):
        fail("must be [a, b] with b > a", "boundary.interval")
    interval = (float(interval[0]), float(interval[1]))
    agent_bcs = boundary.get("agents")
    if not isinstance(agent_bcs, list) or len(agent_bcs) != agents:
        fail(f"needs exactly {agents} entries", "boundary.agents")
    bcs = []
    for i, a in enumerate(agent_bcs):
        path = f"boundary.agents[{i}]"
        if not isinstance(a, dict):
            fail("must be a mapping", path)
        bcs.append(AgentBoundaryConfig(
            start=_as_pose(a, "start", kind, dim, path, marks),
            end=_as_pose(a, "end", kind, dim, path, marks),
            velocity_start=_as_vector(a.get("velocity_start", [0.0] * dim), dim,
                                      f"{path}.velocity_start", marks),
            velocity_end=_as_vector(a.get("velocity_end", [0.0] * dim), dim,
                                    f"{path}.velocity_end", marks),
        ))

    initial = None
    if "initial" in data and data["initial"]:
        init_agents = data["initial"].get("agents")
        if not isinstance(init_agents, list) or len(init_agents) != agents:
            fail(f"needs exactly {agents} entries", "initial.agents")
        initial = tuple(
            AgentInitialConfig(
                xi1=_as_vector(a.get("xi1", [0.0] * dim), dim,
                               f"initial.agents[{i}].xi1", marks),
                xi2=_as_vector(a.get("xi2", [0.0] * dim), dim,
                               f"initial.agents[{i}].xi2", marks),
            )
            for i, a in enumerate(init_agents)
        )

    integ = data.get("integrator", {}) or {}
    step = float(integ.get("step", 1e-3))
    if step <= 0.0:
        fail("must be positive", "integrator.step")
    hjk_policy = integ.get("hjk_policy", RECOMPUTE)
    if hjk_policy not in _HJK_POLICIES:
        fail(f"must be one of {_HJK_POLICIES}", "integrator.hjk_policy")

    shooting = {
        "tolerance": float((data.get("shooting") or {}).get("tolerance", 1e-9)),
        "max_iterations": int((data.get("shooting") or {}).get("max_iterations", 100)),
        "damping": float((data.get("shooting") or {}).get("damping", 1e-3)),
        "fd_step": float((data.get("shooting") or {}).get("fd_step", 1e-6)),
        "multistart": int((data.get("shooting") or {}).get("multistart", 1)),
        "noise_scale": float((data.get("shooting") or {}).get("noise_scale", 0.5)),
    }
    geodesic = {
        "step": float((data.get("geodesic") or {}).get("step", 1e-3)),
        "tolerance": float((data.get("geodesic") or {}).get("tolerance", 1e-10)),
        "max_iterations": int((data.get("geodesic") or {}).get("max_iterations", 50)),
    }
    oracle = {
        "segments": int((data.get("oracle") or {}).get("segments", 200)),
        "gradient_tolerance": float((data.get("oracle") or {}).get("gradient_tolerance", 1e-4)),
        "max_iterations": int((data.get("oracle") or {}).get("max_iterations", 200)),
        "fd_step": float((data.get("oracle") or {}).get("fd_step", 1e-6)),
        "perturbation": float((data.get("oracle") or {}).get("perturbation", 0.0)),
    }
    residual_fd_step = float((data.get("residual") or {}).get("fd_step", 1e-3))

    config = ScenarioConfig(
        group_kind=kind, group_dim=dim, metric_matrix=matrix,
        metric_bi_invariant=bi_invariant, formulation=formulation,
        agents=agents, edges=tuple(sorted(set(edges))),
        potential=PotentialConfig(family=family, gain=gain, shape=shape,
                                  gradient_method=grad_method,
                                  per_edge=tuple(per_edge)),
        interval=interval, boundary=tuple(bcs), initial=initial,
        integrator_step=step, hjk_policy=hjk_policy,
        shooting=shooting, geodesic=geodesic, oracle=oracle,
        residual_fd_step=residual_fd_step,
        output_dir=str(data.get("output_dir", "out")),
        seed=int(data.get("seed", 0)),
    )
    # The Ad-invariance claim is checked numerically while building.
    build(config)
    return config


def load_scenario_file(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())


def _is_matrix_pose(pose) -> bool:
    return bool(pose) and isinstance(pose[0], tuple)


def _boundary_doc(b: AgentBoundaryConfig) -> dict:
    doc = {}
    for key, pose in (("start", b.start), ("end", b.end)):
        if _is_matrix_pose(pose):
            doc[f"{key}_matrix"] = [list(r) for r in pose]
        else:
            doc[key] = list(pose)
    doc["velocity_start"] = list(b.velocity_start)
    doc["velocity_end"] = list(b.velocity_end)
    return doc


def serialize_scenario(config: ScenarioConfig) -> str:
    """Canonical YAML text; load(serialize(load(x))) == load(x)."""
    doc = {
        "group": ({"kind": config.group_kind} if config.group_kind == "so3"
                  else {"kind": config.group_kind, "dim": config.group_dim}),
        "metric": {
            "matrix": ("identity" if config.metric_matrix == "identity"
                       else [list(r) for r in config.metric_matrix]),
            "bi_invariant": config.metric_bi_invariant,
        },
        "formulation": config.formulation,
        "agents": config.agents,
        "edges": [list(e) for e in config.edges],
        "potential": {
            "family": config.potential.family,
            "gain": config.potential.gain,
            "shape": config.potential.shape,
            "gradient_method": config.potential.gradient_method,
            "per_edge": [
                {"edge": list(e), "family": fam, "gain": g, "shape": s}
                for (e, fam, g, s) in config.potential.per_edge
            ],
        },
        "boundary": {
            "interval": list(config.interval),
            "agents": [_boundary_doc(b) for b in config.boundary],
        },
        "integrator": {"step": config.integrator_step,
                       "hjk_policy": config.hjk_policy},
        "shooting": dict(config.shooting),
        "geodesic": dict(config.geodesic),
        "oracle": dict(config.oracle),
        "residual": {"fd_step": config.residual_fd_step},
        "output_dir": config.output_dir,
        "seed": config.seed,
    }
    if config.initial is not None:
        doc["initial"] = {"agents": [
            {"xi1": list(a.xi1), "xi2": list(a.xi2)} for a in config.initial
        ]}
    return yaml.safe_dump(doc, sort_keys=False)


# ---------------------------------------------------------------------------
# config -> numeric objects
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """A fully built scenario ready to integrate, solve, or verify."""

    config: ScenarioConfig
    metric: Metric
    graph: Graph
    potentials: EdgePotentials
    bc: BoundaryConditions
    integrator: IntegratorSettings
    shooting: ShootingSettings
    geodesic: GeodesicSettings
    oracle: OracleSettings


def build(config: ScenarioConfig) -> Scenario:
    if config.group_kind == "so3":
        algebra = LieAlgebra.so3()
    else:
        algebra = LieAlgebra.abelian(config.group_dim)
    if config.metric_matrix == "identity":
        M = np.eye(config.group_dim)
    else:
        M = np.asarray(config.metric_matrix, dtype=float)
    try:
        metric = Metric(algebra, M, bi_invariant=config.metric_bi_invariant)
    except ValueError as exc:
        raise ScenarioValidationError(str(exc), field="metric") from exc
    graph = Graph(agent_count=config.agents,
                  edges=frozenset((j - 1, k - 1) for j, k in config.edges))
    overrides = {}
    for (e, fam, g, s) in config.potential.per_edge:
        overrides[(e[0] - 1, e[1] - 1)] = make_potential(fam, g, s)
    potentials = EdgePotentials(
        default=make_potential(config.potential.family, config.potential.gain,
                               config.potential.shape),
        overrides=overrides,
    )
    def to_element(pose, where):
        if _is_matrix_pose(pose):
            R = np.asarray(pose, dtype=float)
            if (np.abs(R.T @ R - np.eye(3)).max() > 1e-9
                    or np.linalg.det(R) <= 0.0):
                raise ScenarioValidationError(
                    "matrix is not a rotation (orthonormality within 1e-9, "
                    "positive determinant)", field=where)
            return algebra.project(R)
        if config.group_kind == "so3":
            return algebra.exp(np.asarray(pose, dtype=float))
        return np.asarray(pose, dtype=float)

    agents = []
    for i, b in enumerate(config.boundary):
        agents.append(AgentBoundary(
            g_start=to_element(b.start, f"boundary.agents[{i}].start_matrix"),
            g_end=to_element(b.end, f"boundary.agents[{i}].end_matrix"),
            v_start=np.asarray(b.velocity_start, dtype=float),
            v_end=np.asarray(b.velocity_end, dtype=float),
        ))
    bc = BoundaryConditions(agents=tuple(agents), t_start=config.interval[0],
                            t_end=config.interval[1])
    return Scenario(
        config=config, metric=metric, graph=graph, potentials=potentials,
        bc=bc,
        integrator=IntegratorSettings(step=config.integrator_step,
                                      hjk_policy=config.hjk_policy),
        shooting=ShootingSettings(**config.shooting),
        geodesic=GeodesicSettings(**config.geodesic),
        oracle=OracleSettings(
            gradient_tolerance=config.oracle["gradient_tolerance"],
            max_iterations=config.oracle["max_iterations"],
            fd_step=config.oracle["fd_step"],
        ),
    )

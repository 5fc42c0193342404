"""Dependency-graph task synthesis.

A task is a hidden DAG of functions. Edge ``(u, v)`` means function ``v``
consumes the output of function ``u``; the link is visible to an agent only
through matching ``(type, subtype)`` annotations on the output of ``u`` and
one input of ``v``. Graph construction happens in two stages (core nodes,
then irrelevant nodes) and the graph is then materialized into named
schemas, ground-truth values and the rendered prompt / tool JSON.
"""

from __future__ import annotations

import json
import math
import random
import string
from dataclasses import asdict, dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Iterable

from .errors import ConfigError

MAX_SEED = 2**64 - 1
MIN_VALUE, MAX_VALUE = 100, 999


class NodeKind(str, Enum):
    CORE = "core"
    CONN = "conn_irrelevant"
    DIS = "disc_irrelevant"


@dataclass(frozen=True)
class GenConfig:
    n_core: int
    depth: int
    n_conn: int = 0
    n_dis: int = 0
    extra_free_inputs: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.n_core < self.depth + 1:
            raise ConfigError(
                f"n_core={self.n_core} too small for depth={self.depth} "
                f"(need at least {self.depth + 1})"
            )
        for name in ("n_conn", "n_dis", "extra_free_inputs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if not 0 <= self.seed <= MAX_SEED:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def n_total(self) -> int:
        return self.n_core + self.n_conn + self.n_dis


@dataclass(frozen=True)
class NodeRecord:
    id: int
    kind: NodeKind
    target: bool = False


@dataclass
class DepGraph:
    nodes: list[NodeRecord] = field(default_factory=list)
    edges: list[tuple[int, int]] = field(default_factory=list)

    def add_node(self, kind: NodeKind, target: bool = False) -> int:
        node_id = len(self.nodes)
        self.nodes.append(NodeRecord(node_id, kind, target))
        return node_id

    def copy(self) -> DepGraph:
        return DepGraph(list(self.nodes), list(self.edges))

    def ids(self, kind: NodeKind | None = None) -> list[int]:
        return [n.id for n in self.nodes if kind is None or n.kind == kind]

    def kind(self, node_id: int) -> NodeKind:
        return self.nodes[node_id].kind

    @property
    def target(self) -> int:
        return next(n.id for n in self.nodes if n.target)

    def parents(self, node_id: int) -> list[int]:
        return [u for u, v in self.edges if v == node_id]

    def children(self, node_id: int) -> list[int]:
        return [v for u, v in self.edges if u == node_id]

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes": [{"id": n.id, "kind": n.kind.value, "target": n.target} for n in self.nodes],
            "edges": [list(e) for e in self.edges],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> DepGraph:
        nodes = [NodeRecord(n["id"], NodeKind(n["kind"]), n["target"]) for n in data["nodes"]]
        return cls(nodes, [(u, v) for u, v in data["edges"]])


def build_core_dag(n_core: int, depth: int, rng: random.Random) -> DepGraph:
    """Build the core subgraph: a chain of ``depth + 1`` nodes ending at the
    target, then extra parents attached where they cannot lengthen the
    longest path.

    Every added node gets exactly one outgoing edge, so the core graph is an
    in-tree rooted at the target and each node's distance to the target is
    well defined.
    """
    if depth < 1:
        raise ConfigError(f"depth must be >= 1, got {depth}")
    if n_core < depth + 1:
        raise ConfigError(f"n_core={n_core} too small for depth={depth}")

    graph = DepGraph()
    dist: dict[int, int] = {}
    for i in range(depth + 1):
        node = graph.add_node(NodeKind.CORE, target=(i == depth))
        dist[node] = depth - i
        if i:
            graph.edges.append((node - 1, node))

    for _ in range(n_core - (depth + 1)):
        sites = [n for n, d in dist.items() if d <= depth - 1]
        site = rng.choice(sites)
        node = graph.add_node(NodeKind.CORE)
        graph.edges.append((node, site))
        dist[node] = dist[site] + 1
    return graph


def add_connected_irrelevant(graph: DepGraph, n_conn: int, rng: random.Random) -> DepGraph:
    """Attach ``n_conn`` distractors, each consuming one core node's output."""
    core = graph.ids(NodeKind.CORE)
    if not core:
        raise ConfigError("graph has no core nodes to connect to")
    out = graph.copy()
    for _ in range(n_conn):
        parent = rng.choice(core)
        node = out.add_node(NodeKind.CONN)
        out.edges.append((parent, node))
    return out


def add_disconnected_irrelevant(graph: DepGraph, n_dis: int, rng: random.Random) -> DepGraph:
    """Add ``n_dis`` isolated distractors, then up to ``n_dis // 2`` edges
    among them.

    Edges only run forward in a random ordering of the new nodes, which
    keeps the distractor subgraph acyclic.
    """
    out = graph.copy()
    new = [out.add_node(NodeKind.DIS) for _ in range(n_dis)]
    n_edges = rng.randint(0, n_dis // 2)
    if n_edges:
        order = list(new)
        rng.shuffle(order)
        pairs = [(i, j) for i in range(n_dis) for j in range(i + 1, n_dis)]
        for i, j in rng.sample(pairs, n_edges):
            out.edges.append((order[i], order[j]))
    return out


@dataclass(frozen=True)
class VariableSpec:
    name: str
    vtype: str
    subtype: str
    value: int

    @property
    def annotation(self) -> str:
        return f"({self.vtype} with {self.subtype})"


@dataclass(frozen=True)
class FunctionSchema:
    fname: str
    node: int
    inputs: tuple[VariableSpec, ...]
    output: VariableSpec

    @property
    def params(self) -> list[str]:
        return [v.name for v in self.inputs]

    @property
    def description(self) -> str:
        annotations = [v.annotation for v in self.inputs]
        noun = "variable" if len(annotations) == 1 else "variables"
        return f"Processes {noun} of {', '.join(annotations)} to produce {self.output.annotation}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "fname": self.fname,
            "node": self.node,
            "inputs": [asdict(v) for v in self.inputs],
            "output": asdict(self.output),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> FunctionSchema:
        return cls(
            data["fname"],
            data["node"],
            tuple(VariableSpec(**v) for v in data["inputs"]),
            VariableSpec(**data["output"]),
        )


@dataclass
class TaskInstance:
    config: GenConfig
    graph: DepGraph
    schemas: list[FunctionSchema]
    prompt_vars: list[tuple[str, int]]
    target_var: str
    ground_truth: dict[str, int]

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def n_core(self) -> int:
        return len(self.graph.ids(NodeKind.CORE))

    @cached_property
    def by_name(self) -> dict[str, FunctionSchema]:
        return {s.fname: s for s in self.schemas}

    @cached_property
    def by_node(self) -> dict[int, FunctionSchema]:
        return {s.node: s for s in self.schemas}

    @cached_property
    def variables(self) -> dict[str, VariableSpec]:
        out: dict[str, VariableSpec] = {}
        for s in self.schemas:
            for v in (*s.inputs, s.output):
                out[v.name] = v
        return out

    @cached_property
    def _producer_output(self) -> dict[str, str]:
        return {s.output.subtype: s.output.name for s in self.schemas}

    def function(self, fname: str) -> FunctionSchema | None:
        return self.by_name.get(fname)

    def source_of(self, var_name: str) -> str:
        """Name of the variable whose value ``var_name`` carries.

        Linked parameters resolve to their producer's output; free inputs and
        outputs resolve to themselves.
        """
        var = self.variables[var_name]
        return self._producer_output.get(var.subtype, var_name)

    @property
    def target(self) -> VariableSpec:
        return self.variables[self.target_var]

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": asdict(self.config),
            "graph": self.graph.to_dict(),
            "schemas": [s.to_dict() for s in self.schemas],
            "prompt_vars": [list(p) for p in self.prompt_vars],
            "target_var": self.target_var,
            "ground_truth": dict(self.ground_truth),
            "prompt": render_user_prompt(self),
            "tools": render_tool_schemas(self),
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TaskInstance:
        return cls(
            config=GenConfig(**data["config"]),
            graph=DepGraph.from_dict(data["graph"]),
            schemas=[FunctionSchema.from_dict(s) for s in data["schemas"]],
            prompt_vars=[(name, value) for name, value in data["prompt_vars"]],
            target_var=data["target_var"],
            ground_truth=dict(data["ground_truth"]),
        )


class _NamePool:
    def __init__(self, rng: random.Random, prefix: str = "") -> None:
        self.rng = rng
        self.prefix = prefix
        self.used: set[str] = set()

    def fresh(self) -> str:
        while True:
            length = self.rng.randint(3, 6)
            name = self.prefix + "".join(self.rng.choice(string.ascii_lowercase) for _ in range(length))
            if name not in self.used:
                self.used.add(name)
                return name


def _value(rng: random.Random) -> int:
    return rng.randint(MIN_VALUE, MAX_VALUE)


def materialize_task(graph: DepGraph, config: GenConfig, rng: random.Random) -> TaskInstance:
    """Turn a dependency graph into named schemas, values and prompt inputs."""
    func_names = _NamePool(rng, "func_")
    var_names = _NamePool(rng)
    subtypes = _NamePool(rng, "subtype_")
    type_names = _NamePool(rng, "type_")
    pool = [type_names.fresh() for _ in range(max(3, math.ceil(len(graph.nodes) / 3)))]

    def free_variable() -> VariableSpec:
        return VariableSpec(var_names.fresh(), rng.choice(pool), subtypes.fresh(), _value(rng))

    outputs = {n.id: free_variable() for n in graph.nodes}

    # Presentation order is shuffled so schema position does not leak the graph.
    order = graph.ids()
    rng.shuffle(order)

    schemas: list[FunctionSchema] = []
    prompt_vars: list[tuple[str, int]] = []
    for node in order:
        inputs: list[VariableSpec] = []
        for parent in graph.parents(node):
            src = outputs[parent]
            inputs.append(VariableSpec(var_names.fresh(), src.vtype, src.subtype, src.value))
        n_free = (0 if inputs else 1) + config.extra_free_inputs
        for _ in range(n_free):
            var = free_variable()
            inputs.append(var)
            prompt_vars.append((var.name, var.value))
        rng.shuffle(inputs)
        schemas.append(FunctionSchema(func_names.fresh(), node, tuple(inputs), outputs[node]))

    ground_truth = {v.name: v.value for s in schemas for v in (*s.inputs, s.output)}
    return TaskInstance(
        config=config,
        graph=graph,
        schemas=schemas,
        prompt_vars=prompt_vars,
        target_var=outputs[graph.target].name,
        ground_truth=ground_truth,
    )


def generate_task(config: GenConfig) -> TaskInstance:
    """Full pipeline; the only source of randomness is ``config.seed``."""
    rng = random.Random(config.seed)
    graph = build_core_dag(config.n_core, config.depth, rng)
    graph = add_connected_irrelevant(graph, config.n_conn, rng)
    graph = add_disconnected_irrelevant(graph, config.n_dis, rng)
    return materialize_task(graph, config, rng)


def render_user_prompt(task: TaskInstance) -> str:
    target = task.target
    lines = [
        "Using the tools at your disposal, use functions until you are able to give me "
        f"the correct value of variable {target.name} {target.annotation}.",
        "",
    ]
    lines += [f"Variable {name} = {value}" for name, value in task.prompt_vars]
    lines += ["", "You have all the information you need to get the correct result."]
    return "\n".join(lines)


def tool_schema(schema: FunctionSchema) -> dict[str, Any]:
    return {
        "type": "function",
        "function": {
            "name": schema.fname,
            "description": schema.description,
            "strict": True,
            "parameters": {
                "type": "object",
                "properties": {p: {"type": "integer"} for p in schema.params},
                "required": schema.params,
                "additionalProperties": False,
            },
        },
    }


def render_tool_schemas(task: TaskInstance) -> list[dict[str, Any]]:
    return [tool_schema(s) for s in task.schemas]


def tool_schemas_json(task: TaskInstance) -> str:
    return json.dumps(render_tool_schemas(task))


def kind_counts(graph: DepGraph) -> dict[NodeKind, int]:
    counts = {k: 0 for k in NodeKind}
    for n in graph.nodes:
        counts[n.kind] += 1
    return counts


def free_inputs(task: TaskInstance) -> Iterable[VariableSpec]:
    """Inputs whose subtype no function produces."""
    produced = {s.output.subtype for s in task.schemas}
    for s in task.schemas:
        for v in s.inputs:
            if v.subtype not in produced:
                yield v

"""Agents and the episode driver.

Scripted agents see exactly what a model would see: the rendered prompt, the
tool schemas and the executor's responses. Only :class:`OracleAgent` reads
task internals, and it exists to validate the harness.
"""

from __future__ import annotations

import random
import re
from dataclasses import asdict, dataclass, field
from graphlib import TopologicalSorter
from typing import Any, Iterable

from .errors import AdapterError
from .executor import (
    CallRecord,
    CallRequest,
    CallResponse,
    EpisodeOptions,
    Status,
    execute_turn,
    finalize,
    start_episode,
)
from .taskgen import GenConfig, NodeKind, TaskInstance, render_tool_schemas, render_user_prompt

Results = list[tuple[CallRequest, CallResponse]]

# --- oracle plan ------------------------------------------------------------


@dataclass(frozen=True)
class PlannedCall:
    fname: str
    args: dict[str, int]


@dataclass(frozen=True)
class CallPlan:
    steps: tuple[PlannedCall, ...]

    def __len__(self) -> int:
        return len(self.steps)


def plan_oracle(task: TaskInstance) -> CallPlan:
    """Topological order over core functions with ground-truth arguments."""
    graph = task.graph
    core = set(graph.ids(NodeKind.CORE))
    sorter = TopologicalSorter({n: [] for n in sorted(core)})
    for u, v in graph.edges:
        if u in core and v in core:
            sorter.add(v, u)
    steps = []
    for node in sorter.static_order():
        schema = task.by_node[node]
        steps.append(PlannedCall(schema.fname, {v.name: v.value for v in schema.inputs}))
    return CallPlan(tuple(steps))


# --- agent interface --------------------------------------------------------


@dataclass
class AgentOutput:
    calls: list[CallRequest]
    text: str | None = None
    error: str | None = None


class Agent:
    """One-episode state machine.

    ``act`` receives the results of the previous turn and returns the next
    batch of calls; an output with no calls ends the tool phase and its text
    is the final answer. ``conclude`` is asked for an answer when the call cap
    cuts the episode short.
    """

    name = "agent"

    def begin(self, prompt: str, tools: list[dict[str, Any]]) -> None:
        self.prompt = prompt
        self.tools = tools

    def act(self, results: Results) -> AgentOutput:
        raise NotImplementedError

    def conclude(self, results: Results) -> str:
        return self.act(results).text or ""


class NullAgent(Agent):
    name = "null"

    def act(self, results: Results) -> AgentOutput:
        return AgentOutput([], "I cannot determine the value.")


class OracleAgent(Agent):
    name = "oracle"

    def __init__(self, task: TaskInstance) -> None:
        self.plan = plan_oracle(task)
        self.target_fname = task.by_node[task.graph.target].fname
        self.answer: int | None = None
        self.sent = False

    def act(self, results: Results) -> AgentOutput:
        for req, resp in results:
            if req.fname == self.target_fname and resp.status is Status.OK:
                self.answer = resp.value
        if not self.sent:
            self.sent = True
            return AgentOutput([CallRequest(s.fname, dict(s.args)) for s in self.plan.steps])
        return AgentOutput([], f"The value is {self.answer}")


# --- agent-visible parsing --------------------------------------------------

_ANNOTATION = re.compile(r"\((type_[a-z]+) with (subtype_[a-z]+)\)")
_PROMPT_VAR = re.compile(r"^Variable (\w+) = (-?\d+)$", re.M)
_TARGET = re.compile(r"correct value of variable (\w+) \((type_[a-z]+) with (subtype_[a-z]+)\)")
_SNAPSHOT_KEY = re.compile(r"^(\w+) \((type_[a-z]+) with (subtype_[a-z]+)\)$")


@dataclass
class ToolView:
    """What an agent can infer from the prompt and the tool descriptions."""

    prompt_values: dict[str, int]
    target: tuple[str, str] | None
    params: dict[str, list[tuple[str, tuple[str, str]]]]
    outputs: dict[str, tuple[str, str]]

    @classmethod
    def parse(cls, prompt: str, tools: list[dict[str, Any]]) -> ToolView:
        prompt_values = {m[1]: int(m[2]) for m in _PROMPT_VAR.finditer(prompt)}
        t = _TARGET.search(prompt)
        params: dict[str, list[tuple[str, tuple[str, str]]]] = {}
        outputs: dict[str, tuple[str, str]] = {}
        for tool in tools:
            fn = tool["function"]
            annotations = _ANNOTATION.findall(fn["description"])
            names = list(fn["parameters"]["properties"])
            params[fn["name"]] = list(zip(names, annotations[:-1]))
            outputs[fn["name"]] = annotations[-1]
        return cls(prompt_values, (t[2], t[3]) if t else None, params, outputs)


def _perturb(value: int) -> int:
    return value + 1 if value < 999 else value - 1


class TypeChasingAgent(Agent):
    """Calls every function whose inputs it can currently fill.

    Free inputs are filled by prompt-variable name, linked inputs by the
    latest value seen for their ``(type, subtype)``. Mitigation snapshots, when
    present, replace the agent's memory. Each ``(function, arguments)`` pair
    is tried at most once; the tool phase ends when nothing new is callable.
    """

    name = "greedy"
    stale = False

    def __init__(self, induce_errors: int = 0) -> None:
        self.induce_errors = induce_errors
        self.memory: dict[tuple[str, str], int] = {}
        self.tried: set[tuple[str, tuple]] = set()

    def begin(self, prompt: str, tools: list[dict[str, Any]]) -> None:
        super().begin(prompt, tools)
        self.view = ToolView.parse(prompt, tools)

    def observe(self, results: Results) -> None:
        for req, resp in results:
            if resp.status is not Status.OK:
                continue
            if resp.known_values is not None:
                self.memory = {}
                for key, value in resp.known_values.items():
                    m = _SNAPSHOT_KEY.match(key)
                    if m:
                        self.memory[(m[2], m[3])] = value
                continue
            annotation = self.view.outputs.get(req.fname)
            if annotation is None:
                continue
            if self.stale and annotation in self.memory:
                continue
            self.memory[annotation] = resp.value

    def _args(self, fname: str) -> dict[str, int] | None:
        args = {}
        for pname, annotation in self.view.params[fname]:
            if pname in self.view.prompt_values:
                args[pname] = self.view.prompt_values[pname]
            elif annotation in self.memory:
                args[pname] = self.memory[annotation]
            else:
                return None
        return args

    def answer_text(self) -> str:
        value = self.memory.get(self.view.target) if self.view.target else None
        if value is None:
            return "I could not determine the value."
        return f"The value is {value}"

    def act(self, results: Results) -> AgentOutput:
        self.observe(results)
        calls = []
        for fname in self.view.params:
            args = self._args(fname)
            if args is None:
                continue
            key = (fname, tuple(sorted(args.items())))
            if key in self.tried:
                continue
            if self.induce_errors > 0 and args:
                # Deliberate mistake; the honest call stays untried for later.
                self.induce_errors -= 1
                first = next(iter(args))
                args[first] = _perturb(args[first])
                key = (fname, tuple(sorted(args.items())))
            self.tried.add(key)
            calls.append(CallRequest(fname, args))
        if not calls:
            return AgentOutput([], self.answer_text())
        return AgentOutput(calls)

    def conclude(self, results: Results) -> str:
        self.observe(results)
        return self.answer_text()


class StaleValueAgent(TypeChasingAgent):
    """Type chaser that keeps the first value it sees for each output type.

    Without restated known values it propagates the first (possibly wrong)
    observation forever; a mitigation snapshot overrides its memory.
    """

    name = "stale"
    stale = True

    def __init__(self, induce_errors: int = 1) -> None:
        super().__init__(induce_errors)


class RandomAgent(Agent):
    """One uniformly random well-formed call per turn, forever."""

    name = "random"

    def __init__(self, rng: random.Random) -> None:
        self.rng = rng
        self.last: int | None = None

    def act(self, results: Results) -> AgentOutput:
        for _, resp in results:
            if resp.value is not None:
                self.last = resp.value
        tool = self.rng.choice(self.tools)["function"]
        args = {p: self.rng.randint(100, 999) for p in tool["parameters"]["properties"]}
        return AgentOutput([CallRequest(tool["name"], args)])

    def conclude(self, results: Results) -> str:
        for _, resp in results:
            if resp.value is not None:
                self.last = resp.value
        return f"The value is {self.last}" if self.last is not None else "unknown"


# --- episode driver ---------------------------------------------------------


@dataclass
class EpisodeTrace:
    episode_id: str
    config: GenConfig
    agent: str
    mitigation: bool
    call_cap: int
    success: bool
    calls_made: int
    answer: int | None
    final_text: str
    reason: str
    records: list[CallRecord] = field(default_factory=list)
    infra_error: str | None = None
    cell: dict[str, Any] = field(default_factory=dict)

    def summary(self) -> dict[str, Any]:
        return {
            "episode": self.episode_id,
            "cell": self.cell,
            "config": asdict(self.config),
            "agent": self.agent,
            "mitigation": self.mitigation,
            "call_cap": self.call_cap,
            "success": self.success,
            "calls_made": self.calls_made,
            "answer": self.answer,
            "final_text": self.final_text,
            "reason": self.reason,
            "infra_error": self.infra_error,
        }

    def call_lines(self) -> Iterable[dict[str, Any]]:
        for rec in self.records:
            yield {"episode": self.episode_id, **rec.to_dict()}

    @classmethod
    def from_summary(cls, data: dict[str, Any], records: list[CallRecord]) -> EpisodeTrace:
        return cls(
            episode_id=data["episode"],
            config=GenConfig(**data["config"]),
            agent=data["agent"],
            mitigation=data["mitigation"],
            call_cap=data["call_cap"],
            success=data["success"],
            calls_made=data["calls_made"],
            answer=data["answer"],
            final_text=data["final_text"],
            reason=data["reason"],
            records=records,
            infra_error=data.get("infra_error"),
            cell=data.get("cell") or {},
        )


def run_agent(
    agent: Agent,
    task: TaskInstance,
    opts: EpisodeOptions | None = None,
    episode_id: str = "",
) -> EpisodeTrace:
    """Drive one episode to completion and return its trace.

    Transport failures end the episode as a failure with ``infra_error`` set.
    """
    opts = opts or EpisodeOptions()
    state = start_episode(task, opts)
    text = ""
    infra_error = None
    try:
        agent.begin(render_user_prompt(task), render_tool_schemas(task))
        results: Results = []
        while True:
            out = agent.act(results)
            if not out.calls:
                execute_turn(state, [])
                text = out.text or ""
                break
            responses = execute_turn(state, out.calls)
            results = list(zip(out.calls, responses))
            if any(r.status is Status.CAP_EXCEEDED for r in responses):
                text = agent.conclude(results)
                break
    except AdapterError as exc:
        infra_error = str(exc)

    result = finalize(state, text)
    reason = f"AdapterError: {infra_error}" if infra_error else result.reason
    return EpisodeTrace(
        episode_id=episode_id,
        config=task.config,
        agent=agent.name,
        mitigation=opts.mitigation,
        call_cap=state.call_cap,
        success=result.success and infra_error is None,
        calls_made=result.calls_made,
        answer=result.answer,
        final_text=text,
        reason=reason,
        records=result.records,
        infra_error=infra_error,
    )


# --- factory ----------------------------------------------------------------


@dataclass
class AgentSpec:
    """Named agent plus keyword options (``llm`` options go to the adapter)."""

    kind: str = "oracle"
    options: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def parse(cls, value: str | dict[str, Any] | AgentSpec) -> AgentSpec:
        if isinstance(value, AgentSpec):
            return value
        if isinstance(value, str):
            return cls(value)
        value = dict(value)
        return cls(value.pop("kind"), value)


SCRIPTED = ("oracle", "null", "random", "greedy", "stale")


class AgentFactory:
    """Builds a fresh agent per episode; shares one model client across them."""

    def __init__(self, spec: AgentSpec | str | dict[str, Any]) -> None:
        self.spec = AgentSpec.parse(spec)
        self.client = None
        if self.spec.kind == "llm":
            from .llm import ChatClient, EndpointConfig

            self.client = ChatClient(EndpointConfig(**self.spec.options))
        elif self.spec.kind not in SCRIPTED:
            raise ValueError(f"unknown agent kind {self.spec.kind!r}")

    def __call__(self, task: TaskInstance, seed: int) -> Agent:
        kind, opts = self.spec.kind, self.spec.options
        if kind == "oracle":
            return OracleAgent(task)
        if kind == "null":
            return NullAgent()
        if kind == "random":
            return RandomAgent(random.Random(seed))
        if kind == "greedy":
            return TypeChasingAgent(**opts)
        if kind == "stale":
            return StaleValueAgent(**opts)
        from .llm import LLMAgent

        return LLMAgent(self.client)

    @property
    def deterministic(self) -> bool:
        return self.spec.kind in SCRIPTED

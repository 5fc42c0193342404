"""Deterministic function-execution environment for one episode.

Functions return their ground-truth output only when every argument equals
the ground-truth value of the variable it binds; any other argument set
yields a reproducible wrong three-digit value. Errors never raise: they come
back in-band as a :class:`CallResponse` status and consume call budget.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .classifier import FailureType, classify_call, value_matches
from .errors import ParseFailure
from .taskgen import MAX_VALUE, MIN_VALUE, TaskInstance


class Status(str, Enum):
    OK = "Ok"
    FUNCTION_NOT_FOUND = "FunctionNotFound"
    SCHEMA_VIOLATION = "SchemaViolation"
    CAP_EXCEEDED = "CapExceeded"


@dataclass(frozen=True)
class EpisodeOptions:
    mitigation: bool = False
    call_cap: int | None = None  # None -> 2 * n_core

    def cap_for(self, task: TaskInstance) -> int:
        cap = 2 * task.n_core if self.call_cap is None else self.call_cap
        if cap < 1:
            raise ValueError(f"call_cap must be >= 1, got {cap}")
        return cap


@dataclass(frozen=True)
class KnownValue:
    value: int
    correct: bool


@dataclass
class CallRequest:
    fname: str
    args: dict[str, Any]
    call_id: str | None = None


@dataclass
class CallResponse:
    status: Status
    value: int | None = None
    known_values: dict[str, int] | None = None
    message: str = ""

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        if self.value is not None:
            out["value"] = self.value
        if self.known_values is not None:
            out["known_values"] = dict(self.known_values)
        if self.status is not Status.OK:
            out["error"] = self.message
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass
class CallRecord:
    """One logged call; serialized as a single JSONL line."""

    turn: int
    fname: str
    args: dict[str, Any]
    status: Status
    value: int | None
    classification: FailureType | None
    calls_made: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "turn": self.turn,
            "fname": self.fname,
            "args": self.args,
            "status": self.status.value,
            "value": self.value,
            "classification": self.classification.value if self.classification else None,
            "calls_made": self.calls_made,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> CallRecord:
        label = data.get("classification")
        return cls(
            turn=data["turn"],
            fname=data["fname"],
            args=data["args"],
            status=Status(data["status"]),
            value=data["value"],
            classification=FailureType(label) if label else None,
            calls_made=data["calls_made"],
        )


@dataclass
class EpisodeState:
    task: TaskInstance
    options: EpisodeOptions
    call_cap: int
    known: dict[str, KnownValue] = field(default_factory=dict)
    # Variables whose ground truth has been shown (prompt or a correct call).
    # Unlike ``known`` this never loses entries.
    revealed: set[str] = field(default_factory=set)
    calls_made: int = 0
    turn: int = 0
    finished: bool = False
    log: list[CallRecord] = field(default_factory=list)


@dataclass
class EpisodeResult:
    success: bool
    calls_made: int
    answer: int | None
    reason: str
    records: list[CallRecord]


def start_episode(task: TaskInstance, opts: EpisodeOptions | None = None) -> EpisodeState:
    opts = opts or EpisodeOptions()
    state = EpisodeState(task=task, options=opts, call_cap=opts.cap_for(task))
    for name, value in task.prompt_vars:
        state.known[name] = KnownValue(value, True)
        state.revealed.add(name)
    return state


def wrong_value(seed: int, fname: str, args: dict[str, Any], truth: int) -> int:
    """Stable pseudo-random three-digit value different from ``truth``."""
    key = json.dumps([seed, fname, sorted(args.items())], default=str)
    digest = int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big")
    value = MIN_VALUE + digest % (MAX_VALUE - MIN_VALUE)
    return value + 1 if value >= truth else value


def snapshot(state: EpisodeState) -> dict[str, int]:
    """Known values keyed by ``"name (type with subtype)"``."""
    out = {}
    for name, known in state.known.items():
        var = state.task.variables[name]
        out[f"{name} {var.annotation}"] = known.value
    return out


def execute_call(state: EpisodeState, call: CallRequest) -> CallResponse:
    if state.calls_made >= state.call_cap:
        response = CallResponse(
            Status.CAP_EXCEEDED,
            message=f"Call limit of {state.call_cap} reached; give your final answer.",
        )
        _log(state, call, response, None)
        return response

    task = state.task
    label = classify_call(state.revealed, task, call)
    state.calls_made += 1
    schema = task.function(call.fname)
    if schema is None:
        response = CallResponse(
            Status.FUNCTION_NOT_FOUND, message=f"Function {call.fname} does not exist."
        )
    elif set(call.args) != set(schema.params):
        response = CallResponse(
            Status.SCHEMA_VIOLATION,
            message=f"Function {call.fname} expects arguments {sorted(schema.params)}.",
        )
    else:
        out = schema.output
        correct = all(value_matches(call.args[v.name], v.value) for v in schema.inputs)
        value = out.value if correct else wrong_value(task.seed, call.fname, call.args, out.value)
        state.known[out.name] = KnownValue(value, correct)
        if correct:
            state.revealed.add(out.name)
        response = CallResponse(Status.OK, value=value)
        if state.options.mitigation:
            response.known_values = snapshot(state)
    _log(state, call, response, label)
    return response


def _log(state: EpisodeState, call: CallRequest, response: CallResponse, label) -> None:
    state.log.append(
        CallRecord(
            turn=state.turn,
            fname=call.fname,
            args=dict(call.args),
            status=response.status,
            value=response.value,
            classification=label,
            calls_made=state.calls_made,
        )
    )


def execute_turn(state: EpisodeState, calls: list[CallRequest]) -> list[CallResponse]:
    if state.finished:
        raise RuntimeError("episode already finished")
    if not calls:
        state.finished = True
        return []
    state.turn += 1
    return [execute_call(state, c) for c in calls]


_INT = re.compile(r"-?\d+")


def parse_answer(text: str) -> int:
    """Last integer token in ``text``."""
    found = _INT.findall(text or "")
    if not found:
        raise ParseFailure(f"no integer in final answer: {text!r}")
    return int(found[-1])


def finalize(state: EpisodeState, final_answer_text: str) -> EpisodeResult:
    state.finished = True
    truth = state.task.ground_truth[state.task.target_var]
    try:
        answer = parse_answer(final_answer_text)
    except ParseFailure as exc:
        return EpisodeResult(False, state.calls_made, None, f"ParseFailure: {exc}", state.log)
    success = answer == truth
    return EpisodeResult(success, state.calls_made, answer, "" if success else "WrongAnswer", state.log)

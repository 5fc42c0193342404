"""Failure attribution for erroneous calls.

Four predicates are checked in order and the first failing one names the
failure: name resolution, schema conformance, dataflow availability, value
consistency. A variable counts as *revealed* once its ground truth has been
shown to the agent, either in the prompt or as the output of a correct call;
wrong outputs observed along the way do not reveal anything.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, AbstractSet, Any, Iterable, Protocol

if TYPE_CHECKING:
    from .taskgen import TaskInstance


class FailureType(str, Enum):
    FUNCTION_NOT_FOUND = "FunctionNotFound"
    WRONG_NUMBER_OF_INPUTS = "WrongNumberOfInputs"
    VALUE_NOT_YET_KNOWN = "ValueNotYetKnown"
    INCORRECT_VALUE = "IncorrectValue"


class _Call(Protocol):
    fname: str
    args: dict[str, Any]


def value_matches(supplied: Any, truth: int) -> bool:
    return isinstance(supplied, int) and not isinstance(supplied, bool) and supplied == truth


def classify_call(revealed: AbstractSet[str], task: TaskInstance, call: _Call) -> FailureType | None:
    """Label ``call`` given the set of variables revealed before it ran.

    Returns ``None`` for a fully correct call.
    """
    schema = task.function(call.fname)
    if schema is None:
        return FailureType.FUNCTION_NOT_FOUND
    if set(call.args) != set(schema.params):
        return FailureType.WRONG_NUMBER_OF_INPUTS
    mismatched = [v for v in schema.inputs if not value_matches(call.args[v.name], v.value)]
    if not mismatched:
        return None
    if any(task.source_of(v.name) not in revealed for v in mismatched):
        return FailureType.VALUE_NOT_YET_KNOWN
    return FailureType.INCORRECT_VALUE


def relabel(task: TaskInstance, records: Iterable[Any]) -> list[FailureType | None]:
    """Recompute labels for a persisted call sequence by replaying what it revealed."""
    revealed = {name for name, _ in task.prompt_vars}
    labels: list[FailureType | None] = []
    for rec in records:
        if rec.status == "CapExceeded":
            labels.append(None)
            continue
        label = classify_call(revealed, task, rec)
        labels.append(label)
        if label is None:
            revealed.add(task.by_name[rec.fname].output.name)
    return labels


@dataclass
class FailureBreakdown:
    counts: dict[FailureType, int] = field(default_factory=lambda: {t: 0 for t in FailureType})

    @property
    def total_errors(self) -> int:
        return sum(self.counts.values())

    def percent(self, ftype: FailureType) -> float:
        total = self.total_errors
        return 100.0 * self.counts[ftype] / total if total else 0.0

    @property
    def percentages(self) -> dict[FailureType, float]:
        return {t: self.percent(t) for t in FailureType}

    def to_dict(self) -> dict[str, Any]:
        return {
            "total_errors": self.total_errors,
            "counts": {t.value: self.counts[t] for t in FailureType},
            "percent": {t.value: self.percent(t) for t in FailureType},
        }


def summarize_failures(traces: Iterable[Any]) -> FailureBreakdown:
    """Aggregate labels over every call of every trace.

    A trace is anything with a ``records`` attribute, or a plain iterable of
    call records.
    """
    tally: Counter[FailureType] = Counter()
    for trace in traces:
        for rec in getattr(trace, "records", trace):
            if rec.classification is not None:
                tally[FailureType(rec.classification)] += 1
    breakdown = FailureBreakdown()
    for ftype, n in tally.items():
        breakdown.counts[ftype] = n
    return breakdown

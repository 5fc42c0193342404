import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tooldag.agents import plan_oracle
from tooldag.executor import (
    CallRequest,
    EpisodeOptions,
    KnownValue,
    Status,
    execute_call,
    execute_turn,
    finalize,
    start_episode,
    wrong_value,
)
from tooldag.taskgen import GenConfig, generate_task


def test_start_episode(chain_task):
    state = start_episode(chain_task)
    assert state.known == {"mfmjsy": KnownValue(731, True)}
    assert state.calls_made == 0 and not state.finished
    assert state.call_cap == 4


def test_start_with_five_prompt_vars():
    task = generate_task(GenConfig(6, 1, seed=1))
    assert len(task.prompt_vars) == 5
    assert len(start_episode(task).known) == 5


def test_correct_call(chain_task):
    state = start_episode(chain_task)
    resp = execute_call(state, CallRequest("func_yep", {"mfmjsy": 731}))
    assert resp.status is Status.OK
    assert resp.value == chain_task.ground_truth["aargww"] == 482
    assert state.known["aargww"] == KnownValue(482, True)
    assert resp.to_dict() == {"value": 482}


def test_unknown_function(chain_task):
    state = start_episode(chain_task)
    resp = execute_call(state, CallRequest("func_nope", {"x": 1}))
    assert resp.status is Status.FUNCTION_NOT_FOUND
    assert state.calls_made == 1 and len(state.known) == 1
    assert set(resp.to_dict()) == {"error"}


@pytest.mark.parametrize("args", [{"mfmjsy": 731, "extra": 2}, {}, {"other": 731}])
def test_schema_violation(chain_task, args):
    state = start_episode(chain_task)
    resp = execute_call(state, CallRequest("func_yep", args))
    assert resp.status is Status.SCHEMA_VIOLATION
    assert state.calls_made == 1


def test_wrong_value_repeats(chain_task):
    state = start_episode(chain_task)
    a = execute_call(state, CallRequest("func_yep", {"mfmjsy": 500}))
    b = execute_call(state, CallRequest("func_yep", {"mfmjsy": 500}))
    assert a.value == b.value != 482
    assert 100 <= a.value <= 999
    assert state.known["aargww"] == KnownValue(a.value, False)


def test_non_integer_argument_is_wrong(chain_task):
    state = start_episode(chain_task)
    for bad in ("731", 731.5, True):
        resp = execute_call(state, CallRequest("func_yep", {"mfmjsy": bad}))
        assert resp.status is Status.OK and resp.value != 482


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**64 - 1), st.text(max_size=8), st.dictionaries(st.text(max_size=4), st.integers()), st.integers(100, 999))
def test_wrong_value_contract(seed, fname, args, truth):
    v = wrong_value(seed, fname, args, truth)
    assert 100 <= v <= 999 and v != truth
    assert v == wrong_value(seed, fname, dict(reversed(list(args.items()))), truth)


def test_wrong_values_cover_the_range():
    seen = {wrong_value(1, "f", {"a": i}, 555) for i in range(20000)}
    assert seen == set(range(100, 1000)) - {555}


def test_mitigation_snapshot(chain_task):
    state = start_episode(chain_task, EpisodeOptions(mitigation=True))
    wrong = execute_call(state, CallRequest("func_yep", {"mfmjsy": 700}))
    assert wrong.known_values == {
        "mfmjsy (type_uxe with subtype_muw)": 731,
        f"aargww (type_beo with subtype_dej)": wrong.value,
    }
    right = execute_call(state, CallRequest("func_yep", {"mfmjsy": 731}))
    assert right.known_values["aargww (type_beo with subtype_dej)"] == 482
    payload = json.loads(right.to_json())
    assert payload == {"value": 482, "known_values": right.known_values}


def test_no_snapshot_without_mitigation(chain_task):
    state = start_episode(chain_task)
    assert execute_call(state, CallRequest("func_yep", {"mfmjsy": 731})).known_values is None


def test_turns(chain_task):
    state = start_episode(chain_task)
    responses = execute_turn(state, [CallRequest("func_yep", {"mfmjsy": 731}), CallRequest("func_ayj", {"riivq": 482})])
    assert [r.value for r in responses] == [482, 615]
    assert state.calls_made == 2 and state.turn == 1
    assert execute_turn(state, []) == [] and state.finished
    with pytest.raises(RuntimeError):
        execute_turn(state, [])


def test_cap():
    task = generate_task(GenConfig(10, 3, seed=2))
    state = start_episode(task)
    assert state.call_cap == 20
    fname = task.schemas[0].fname
    args = {p: 100 for p in task.schemas[0].params}
    responses = execute_turn(state, [CallRequest(fname, args)] * 21)
    assert [r.status for r in responses[:20]] == [Status.OK] * 20
    assert responses[20].status is Status.CAP_EXCEEDED
    assert state.calls_made == 20
    assert state.log[-1].classification is None


def test_cap_validation(chain_task):
    with pytest.raises(ValueError):
        start_episode(chain_task, EpisodeOptions(call_cap=0))


class TestFinalize:
    def finished(self, task):
        state = start_episode(task)
        execute_turn(state, [])
        return state

    def test_success(self, chain_task):
        result = finalize(self.finished(chain_task), "The value is 615")
        assert result.success and result.answer == 615

    def test_last_integer_wins(self, chain_task):
        assert finalize(self.finished(chain_task), "aargww=482 so sjyav is 615").success
        assert not finalize(self.finished(chain_task), "615? no, 616").success

    def test_parse_failure(self, chain_task):
        result = finalize(self.finished(chain_task), "cannot determine")
        assert not result.success and result.answer is None
        assert result.reason.startswith("ParseFailure")

    def test_stale_answer_fails(self, chain_task):
        state = start_episode(chain_task)
        stale = execute_call(state, CallRequest("func_yep", {"mfmjsy": 713})).value
        answer = execute_call(state, CallRequest("func_ayj", {"riivq": stale})).value
        result = finalize(state, f"The value is {answer}")
        assert answer != 615 and not result.success and result.reason == "WrongAnswer"


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**64 - 1), st.booleans())
def test_oracle_path_is_all_correct(seed, mitigation):
    task = generate_task(GenConfig(8, 3, n_conn=3, n_dis=3, seed=seed))
    state = start_episode(task, EpisodeOptions(mitigation=mitigation))
    plan = plan_oracle(task)
    responses = execute_turn(state, [CallRequest(s.fname, s.args) for s in plan.steps])
    assert all(k.correct for k in state.known.values())
    assert all(r.classification is None for r in state.log)
    assert state.calls_made == task.n_core
    assert finalize(state, str(responses[-1].value)).success


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 2**32))
def test_random_call_sequences(task_seed, call_seed):
    """Replays are identical; snapshots mirror known state; cap is respected."""
    task = generate_task(GenConfig(5, 2, n_conn=2, n_dis=2, seed=task_seed))
    rng = random.Random(call_seed)
    calls = []
    for _ in range(14):
        schema = rng.choice(task.schemas)
        args = {p: rng.choice([rng.randint(100, 999), task.ground_truth[p]]) for p in schema.params}
        calls.append(CallRequest(schema.fname, args))

    def play():
        state = start_episode(task, EpisodeOptions(mitigation=True))
        out = []
        for c in calls:
            r = execute_call(state, c)
            assert state.calls_made <= state.call_cap
            if r.status is Status.OK:
                labelled = {k.split(" ")[0]: v for k, v in r.known_values.items()}
                assert labelled == {k: kv.value for k, kv in state.known.items()}
            out.append(r.to_json())
        return out

    assert play() == play()

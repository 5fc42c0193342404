import random

import pytest

from tooldag.agents import (
    AgentFactory,
    NullAgent,
    OracleAgent,
    RandomAgent,
    StaleValueAgent,
    ToolView,
    TypeChasingAgent,
    plan_oracle,
    run_agent,
)
from tooldag.executor import EpisodeOptions, Status
from tooldag.taskgen import GenConfig, generate_task, render_tool_schemas, render_user_prompt


def test_plan_on_path():
    task = generate_task(GenConfig(5, 4, seed=0))
    plan = plan_oracle(task)
    assert [task.function(s.fname).node for s in plan.steps] == [0, 1, 2, 3, 4]


def test_plan_on_star():
    task = generate_task(GenConfig(5, 1, seed=0))
    plan = plan_oracle(task)
    assert len(plan) == 5
    assert task.function(plan.steps[-1].fname).node == task.graph.target


def test_oracle_succeeds_with_minimum_calls():
    rng = random.Random(0)
    for seed in range(1000):
        n_core = rng.choice([5, 10, 20])
        cfg = GenConfig(n_core, rng.randint(1, n_core - 1), rng.randint(0, 10), rng.randint(0, 10), seed=seed)
        task = generate_task(cfg)
        assert len(plan_oracle(task)) == n_core
        trace = run_agent(OracleAgent(task), task)
        assert trace.success and trace.calls_made == n_core, cfg


def test_null_agent():
    task = generate_task(GenConfig(5, 2, seed=1))
    trace = run_agent(NullAgent(), task)
    assert not trace.success and trace.calls_made == 0
    assert trace.reason.startswith("ParseFailure")


def test_random_agent_fails_on_chains():
    wins = 0
    for seed in range(100):
        task = generate_task(GenConfig(5, 3, n_conn=3, seed=seed))
        trace = run_agent(RandomAgent(random.Random(seed)), task)
        assert trace.calls_made == 2 * 5
        assert trace.records[-1].status is Status.CAP_EXCEEDED
        wins += trace.success
    assert wins <= 2


def test_tool_view_parses_what_agents_see(chain_task):
    view = ToolView.parse(render_user_prompt(chain_task), render_tool_schemas(chain_task))
    assert view.prompt_values == {"mfmjsy": 731}
    assert view.target == ("type_wdc", "subtype_uqq")
    assert view.params["func_ayj"] == [("riivq", ("type_beo", "subtype_dej"))]
    assert view.outputs["func_yep"] == ("type_beo", "subtype_dej")


@pytest.mark.parametrize("seed", range(50))
def test_type_chaser_solves_tasks_without_distractors(seed):
    task = generate_task(GenConfig(8, 3, seed=seed))
    trace = run_agent(TypeChasingAgent(), task)
    assert trace.success and trace.calls_made == 8


@pytest.mark.parametrize("seed", range(20))
def test_stale_value_agent_needs_mitigation(seed):
    task = generate_task(GenConfig(3, 2, seed=seed))
    off = run_agent(StaleValueAgent(), task, EpisodeOptions(mitigation=False))
    on = run_agent(StaleValueAgent(), task, EpisodeOptions(mitigation=True))
    assert not off.success and on.success
    assert on.calls_made <= on.call_cap


def test_agents_never_see_unrevealed_truth(chain_task):
    """Every value shown to an agent is a prompt value or an executor output."""
    seen = []

    class Spy(TypeChasingAgent):
        def act(self, results):
            for _, resp in results:
                seen.append(resp.to_dict())
            return super().act(results)

    prompt = render_user_prompt(chain_task)
    tools_text = str(render_tool_schemas(chain_task))
    assert "482" not in prompt + tools_text and "615" not in prompt + tools_text
    trace = run_agent(Spy(induce_errors=1), chain_task, EpisodeOptions(mitigation=True))
    produced = {r.value for r in trace.records}
    for payload in seen:
        shown = {payload.get("value"), *payload.get("known_values", {}).values()} - {None}
        assert shown <= produced | {731}


def test_factory():
    task = generate_task(GenConfig(4, 2, seed=0))
    for kind, cls in [("oracle", OracleAgent), ("null", NullAgent), ("random", RandomAgent), ("greedy", TypeChasingAgent), ("stale", StaleValueAgent)]:
        assert isinstance(AgentFactory(kind)(task, 1), cls)
    with pytest.raises(ValueError):
        AgentFactory("bogus")

import pytest

from tooldag.taskgen import (
    DepGraph,
    FunctionSchema,
    GenConfig,
    NodeKind,
    TaskInstance,
    VariableSpec,
)

# Two-function chain using the names from the published linking example.
# Output values 482 and 615 are arbitrary fixture choices.
MFMJSY = VariableSpec("mfmjsy", "type_uxe", "subtype_muw", 731)
AARGWW = VariableSpec("aargww", "type_beo", "subtype_dej", 482)
RIIVQ = VariableSpec("riivq", "type_beo", "subtype_dej", 482)
SJYAV = VariableSpec("sjyav", "type_wdc", "subtype_uqq", 615)


@pytest.fixture
def chain_task() -> TaskInstance:
    graph = DepGraph()
    graph.add_node(NodeKind.CORE)
    graph.add_node(NodeKind.CORE, target=True)
    graph.edges.append((0, 1))
    schemas = [
        FunctionSchema("func_yep", 0, (MFMJSY,), AARGWW),
        FunctionSchema("func_ayj", 1, (RIIVQ,), SJYAV),
    ]
    gt = {v.name: v.value for v in (MFMJSY, AARGWW, RIIVQ, SJYAV)}
    return TaskInstance(GenConfig(2, 1, seed=7), graph, schemas, [("mfmjsy", 731)], "sjyav", gt)

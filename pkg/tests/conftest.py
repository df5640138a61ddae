import pytest

from spinescale.fabric import build_topology
from spinescale.policy import ActionReason, PolicyAction


def remove_action(spine_id: int, cycle: int = 0) -> PolicyAction:
    return PolicyAction(kind="remove_spine", spine_id=spine_id,
                        reason=ActionReason("test", 6.0, 0.0, 0), decision_cycle=cycle)


def add_action(cycle: int = 0) -> PolicyAction:
    return PolicyAction(kind="add_spine", spine_id=None,
                        reason=ActionReason("test", 12.0, 0.0, 0), decision_cycle=cycle)


@pytest.fixture
def topo_3x5():
    return build_topology(3, 5, capacity_bps=10_000_000_000, base_latency_us=3.0,
                          min_spines=2, max_spines=8)

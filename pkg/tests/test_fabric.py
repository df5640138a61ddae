import numpy as np
import pytest

from conftest import add_action, remove_action
from spinescale.config import TrafficConfig
from spinescale.errors import InvalidConfigError, NoCapacityError, NotFoundError, PolicyViolationError
from spinescale.fabric import (DemandMatrix, apply_action, build_topology, ecmp_assign,
                               generate_demands, link_latency_us, simulate_tick)

CAP = 10_000_000_000


def quiet_traffic(**overrides) -> TrafficConfig:
    base = dict(base_bps=1_000_000_000, diurnal_amp_bps=0, diurnal_phase_h=0.0,
                burst_rate_per_hour=0.0, burst_size_bps=0.0, noise_bps=0.0, flows_per_pair=4)
    base.update(overrides)
    return TrafficConfig(**base)


# ---------------------------------------------------------------------------
# build_topology
# ---------------------------------------------------------------------------

def test_build_topology_3x5(topo_3x5):
    assert len(topo_3x5.links) == 15
    assert topo_3x5.active_spine_ids == [0, 1, 2, 3, 4]
    # complete bipartite: every active spine has one link per leaf
    for sid in topo_3x5.active_spine_ids:
        leaves = sorted(lk.leaf_id for lk in topo_3x5.links if lk.spine_id == sid)
        assert leaves == [0, 1, 2]


def test_build_topology_minimal():
    topo = build_topology(1, 1, CAP, 3.0, min_spines=1)
    assert len(topo.links) == 1
    assert topo.links[0].leaf_id == 0 and topo.links[0].spine_id == 0


def test_build_topology_two_leaves():
    topo = build_topology(2, 5, CAP, 3.0)
    assert len(topo.links) == 10
    assert topo.active_spine_ids == [0, 1, 2, 3, 4]


@pytest.mark.parametrize("args", [
    (0, 5, CAP, 3.0),
    (3, 0, CAP, 3.0),
    (3, 5, 0, 3.0),
    (3, 5, CAP, 0.0),
    (3, 5, CAP, -1.0),
])
def test_build_topology_rejects_bad_config(args):
    with pytest.raises(InvalidConfigError):
        build_topology(*args)


# ---------------------------------------------------------------------------
# generate_demands
# ---------------------------------------------------------------------------

def test_constant_traffic_all_entries_equal_base():
    cfg = quiet_traffic(base_bps=5_000_000)
    for t in (0, 7, 100):
        dm = generate_demands(cfg, 3, t, seed=1)
        assert set(dm.entries) == {(i, j) for i in range(3) for j in range(3) if i != j}
        assert all(v == 5_000_000 for v in dm.entries.values())


def test_demands_deterministic():
    cfg = quiet_traffic(burst_rate_per_hour=2.0, burst_size_bps=1e8, noise_bps=1e6)
    a = generate_demands(cfg, 3, 13, seed=42)
    b = generate_demands(cfg, 3, 13, seed=42)
    assert a.entries == b.entries
    c = generate_demands(cfg, 3, 13, seed=43)
    assert a.entries != c.entries


def test_diurnal_exactly_periodic_without_bursts_and_noise():
    cfg = quiet_traffic(diurnal_amp_bps=3_000_000, diurnal_phase_h=5.0)
    for t in range(30):
        d_t = generate_demands(cfg, 2, t, seed=9)
        d_t24 = generate_demands(cfg, 2, t + 24, seed=9)
        assert d_t.entries == d_t24.entries
    # and it actually varies across the day
    day = [generate_demands(cfg, 2, t, seed=9).entries[(0, 1)] for t in range(24)]
    assert len(set(day)) > 1


def test_demands_never_negative():
    cfg = quiet_traffic(base_bps=1_000, diurnal_amp_bps=50_000, noise_bps=10_000)
    for t in range(48):
        dm = generate_demands(cfg, 3, t, seed=3)
        assert all(v >= 0 for v in dm.entries.values())


# ---------------------------------------------------------------------------
# ecmp_assign
# ---------------------------------------------------------------------------

def test_ecmp_single_spine():
    for fid in (0, 1, 17, 9999):
        assert ecmp_assign(fid, [3], seed=0) == 3


def test_ecmp_empty_spine_list():
    with pytest.raises(NoCapacityError):
        ecmp_assign(1, [], seed=0)


@pytest.mark.parametrize("seed", [0, 7, 42])
def test_ecmp_spread_within_5_percent(seed):
    # brute-force count over all 10,000 assignments
    counts = {s: 0 for s in range(5)}
    for fid in range(10_000):
        counts[ecmp_assign(fid, [0, 1, 2, 3, 4], seed)] += 1
    for s, n in counts.items():
        assert abs(n - 2000) <= 100, f"spine {s} got {n} flows (seed {seed})"


def test_ecmp_codomain_after_removal():
    remaining = [0, 1, 2, 3]
    for fid in range(2_000):
        assert ecmp_assign(fid, remaining, seed=5) in remaining


def test_ecmp_deterministic():
    spines = [0, 1, 2, 3, 4]
    a = [ecmp_assign(fid, spines, seed=11) for fid in range(500)]
    b = [ecmp_assign(fid, spines, seed=11) for fid in range(500)]
    assert a == b


# ---------------------------------------------------------------------------
# simulate_tick
# ---------------------------------------------------------------------------

def test_idle_fabric_latency_equals_base(topo_3x5):
    dm = DemandMatrix(t=0, entries={})
    samples = simulate_tick(topo_3x5, dm, seed=0, t=0)
    assert len(samples) == 15
    for s in samples:
        assert s.latency_us == 3.0
        assert s.fabric_bps == 0
        assert s.edge_bps == 0


def test_latency_model_half_utilization():
    # rho = 0.5, k = 1, base 3 us -> latency = 3 * (1 + 0.5/0.5) = 6 us
    topo = build_topology(2, 1, CAP, 3.0, min_spines=1)
    dm = DemandMatrix(t=0, entries={(0, 1): CAP // 2})
    samples = simulate_tick(topo, dm, seed=0, t=0, flows_per_pair=4, queue_factor=1.0)
    by_leaf = {s.link_id % 2: s for s in samples}
    assert by_leaf[0].latency_us == pytest.approx(6.0, abs=1e-9)
    assert by_leaf[1].latency_us == pytest.approx(3.0, abs=1e-9)


def test_load_conservation_single_pair(topo_3x5):
    demand = 123_456_789
    dm = DemandMatrix(t=0, entries={(0, 2): demand})
    samples = simulate_tick(topo_3x5, dm, seed=1, t=0)
    assert sum(s.fabric_bps for s in samples) == demand


def test_load_conservation_full_matrix(topo_3x5):
    cfg = quiet_traffic(base_bps=800_000_000)
    dm = generate_demands(cfg, 3, 0, seed=2)
    samples = simulate_tick(topo_3x5, dm, seed=2, t=0, flows_per_pair=cfg.flows_per_pair)
    assert sum(s.fabric_bps for s in samples) == dm.total_bps()


def test_edge_speed_counts_both_directions():
    topo = build_topology(2, 1, CAP, 3.0, min_spines=1)
    dm = DemandMatrix(t=0, entries={(0, 1): 1000})
    samples = {s.link_id % 2: s for s in simulate_tick(topo, dm, seed=0, t=0)}
    assert samples[0].edge_bps == 1000   # leaf 0 sends
    assert samples[1].edge_bps == 1000   # leaf 1 receives


def test_latency_monotone_in_utilization():
    rhos = np.linspace(0.0, 1.2, 40)
    lats = [link_latency_us(3.0, r, 1.0) for r in rhos]
    assert all(b >= a for a, b in zip(lats, lats[1:]))
    assert lats[0] == 3.0


def test_overload_clamps_instead_of_crashing():
    topo = build_topology(2, 1, 1000, 3.0, min_spines=1)
    dm = DemandMatrix(t=0, entries={(0, 1): 50_000})
    samples = simulate_tick(topo, dm, seed=0, t=0)
    for s in samples:
        assert np.isfinite(s.latency_us)
        assert s.fabric_bps <= 1000


def test_latency_floor_with_noise_off_random_ticks(topo_3x5):
    cfg = quiet_traffic(base_bps=2_000_000_000, diurnal_amp_bps=1_500_000_000,
                        burst_rate_per_hour=1.0, burst_size_bps=5e8)
    for t in range(50):
        dm = generate_demands(cfg, 3, t, seed=7)
        for s in simulate_tick(topo_3x5, dm, seed=7, t=t * 60):
            assert s.latency_us >= 3.0


def test_tick_deterministic_with_noise(topo_3x5):
    cfg = quiet_traffic()
    dm = generate_demands(cfg, 3, 0, seed=4)
    a = simulate_tick(topo_3x5, dm, seed=4, t=5, noise_us=0.05)
    b = simulate_tick(topo_3x5, dm, seed=4, t=5, noise_us=0.05)
    assert a == b
    c = simulate_tick(topo_3x5, dm, seed=4, t=6, noise_us=0.05)
    assert a != c


# ---------------------------------------------------------------------------
# apply_action
# ---------------------------------------------------------------------------

def test_remove_spine_deactivates_links_and_flows(topo_3x5):
    topo = apply_action(topo_3x5, remove_action(4))
    assert topo.active_spine_ids == [0, 1, 2, 3]
    assert all(lk.spine_id != 4 for lk in topo.links)
    dm = DemandMatrix(t=0, entries={(0, 1): 9_999, (2, 0): 5_000})
    samples = simulate_tick(topo, dm, seed=0, t=0)
    assert all(s.spine_id != 4 for s in samples)
    assert sum(s.fabric_bps for s in samples) == 14_999


def test_remove_below_floor_rejected():
    topo = build_topology(2, 2, CAP, 3.0, min_spines=2)
    with pytest.raises(PolicyViolationError):
        apply_action(topo, remove_action(1))


def test_remove_unknown_or_inactive_spine(topo_3x5):
    with pytest.raises(NotFoundError):
        apply_action(topo_3x5, remove_action(17))
    topo = apply_action(topo_3x5, remove_action(3))
    with pytest.raises(NotFoundError):
        apply_action(topo, remove_action(3))


def test_add_then_remove_restores_active_set(topo_3x5):
    removed = apply_action(topo_3x5, remove_action(2))
    added = apply_action(removed, add_action())        # reactivates lowest inactive id
    assert added.active_spine_ids == topo_3x5.active_spine_ids
    assert sorted(lk.id for lk in added.links) == sorted(lk.id for lk in topo_3x5.links)


def test_add_mints_new_spine_when_none_inactive(topo_3x5):
    topo = apply_action(topo_3x5, add_action())
    assert topo.active_spine_ids == [0, 1, 2, 3, 4, 5]
    assert len(topo.links) == 18


def test_add_beyond_max_rejected():
    topo = build_topology(2, 3, CAP, 3.0, min_spines=1, max_spines=3)
    with pytest.raises(PolicyViolationError):
        apply_action(topo, add_action())


def test_random_action_sequences_respect_bounds(topo_3x5):
    rng = np.random.default_rng(0)
    topo = topo_3x5
    for _ in range(200):
        active = topo.active_spine_ids
        if rng.random() < 0.5 and len(active) > topo.min_spines:
            topo = apply_action(topo, remove_action(int(rng.choice(active))))
        elif len(active) < topo.max_spines:
            topo = apply_action(topo, add_action())
        n = len(topo.active_spine_ids)
        assert topo.min_spines <= n <= topo.max_spines
        # complete bipartite over the active set at every step
        assert len(topo.links) == n * topo.n_leaf

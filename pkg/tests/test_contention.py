import random

import pytest

from clustersmith.contention import (
    Flow,
    Objective,
    SimResult,
    SwitchModel,
    events_to_csv,
    optimize_stagger,
    simulate,
    with_offsets,
)

from conftest import time_stepped_sim

SW16 = SwitchModel(upstream_bandwidth=16.0, per_flow_cap=16.0)


def test_single_flow():
    res = simulate([Flow(id="f0", bytes=10e9)], SW16)
    assert res.completions["f0"] == pytest.approx(0.625)
    assert res.makespan == pytest.approx(0.625)
    assert res.peak_concurrency == 1


def test_two_simultaneous_flows_share_fairly():
    flows = [Flow(id="f0", bytes=10e9), Flow(id="f1", bytes=10e9)]
    res = simulate(flows, SW16)
    assert res.completions["f0"] == pytest.approx(1.25)
    assert res.completions["f1"] == pytest.approx(1.25)
    assert res.peak_concurrency == 2


def test_offset_staggering_example():
    flows = [Flow(id="f0", bytes=10e9),
             Flow(id="f1", bytes=10e9, offset=0.625)]
    res = simulate(flows, SW16)
    assert res.completions["f0"] == pytest.approx(0.625)
    assert res.completions["f1"] == pytest.approx(1.25)
    assert res.mean_completion == pytest.approx(0.9375)
    assert res.peak_concurrency == 1


def test_empty_flow_list():
    res = simulate([], SW16)
    assert res == SimResult(completions={}, makespan=0.0, mean_completion=0.0,
                            peak_concurrency=0, cpu_cost=0.0, events=())


def test_per_flow_cap_limits_solo_rate():
    sw = SwitchModel(upstream_bandwidth=16.0, per_flow_cap=4.0)
    res = simulate([Flow(id="f0", bytes=8e9)], sw)
    assert res.completions["f0"] == pytest.approx(2.0)


def test_cpu_cost_counts_events():
    sw = SwitchModel(upstream_bandwidth=16.0, per_flow_cap=16.0,
                     cpu_event_cost=0.5)
    res = simulate([Flow(id="f0", bytes=1e9), Flow(id="f1", bytes=1e9)], sw)
    assert res.cpu_cost == pytest.approx(4 * 0.5)  # 2 starts + 2 finishes


def test_release_delays_start():
    flows = [Flow(id="late", bytes=16e9, release=2.0)]
    res = simulate(flows, SW16)
    assert res.completions["late"] == pytest.approx(3.0)


# ---------------------------------------------------------------------------
# optimizer


def test_greedy_offsets_identical_flows():
    flows = [Flow(id=f"f{i}", bytes=10e9) for i in range(4)]
    offsets = optimize_stagger(flows, SW16)
    assert sorted(offsets.values()) == pytest.approx([0.0, 0.625, 1.25, 1.875])


def test_single_flow_zero_offset():
    assert optimize_stagger([Flow(id="f0", bytes=1e9)], SW16) == {"f0": 0.0}


def test_largest_flow_goes_first():
    flows = [Flow(id="small", bytes=1e9), Flow(id="big", bytes=8e9)]
    offsets = optimize_stagger(flows, SW16)
    assert offsets["big"] == 0.0
    assert offsets["small"] == pytest.approx(0.5)


def test_serialization_preserves_makespan():
    flows = [Flow(id=f"f{i}", bytes=10e9) for i in range(3)]
    naive = simulate(flows, SW16)
    offsets = optimize_stagger(flows, SW16,
                               Objective.MAKESPAN_WITH_CPU_COST)
    staggered = simulate(with_offsets(flows, offsets), SW16)
    assert staggered.makespan == pytest.approx(naive.makespan)
    assert staggered.peak_concurrency == 1


def test_zero_offsets_reproduce_raw_simulation():
    flows = [Flow(id=f"f{i}", bytes=(i + 1) * 1e9) for i in range(3)]
    res1 = simulate(flows, SW16)
    res2 = simulate(with_offsets(flows, {f.id: 0.0 for f in flows}), SW16)
    assert res1 == res2


def test_greedy_optimal_for_identical_flows_tiny_exhaustive():
    """Discretized exhaustive search over offsets on <= 3 identical flows."""
    sw = SwitchModel(upstream_bandwidth=4.0, per_flow_cap=4.0)
    flows = [Flow(id=f"f{i}", bytes=1e9) for i in range(3)]
    greedy = optimize_stagger(flows, sw)
    greedy_mean = simulate(with_offsets(flows, greedy), sw).mean_completion
    grid = [i * 0.0625 for i in range(17)]  # 0 .. 1.0 s
    best = min(
        simulate(with_offsets(flows, {"f0": a, "f1": b, "f2": c}),
                 sw).mean_completion
        for a in grid for b in grid for c in grid
    )
    assert greedy_mean <= best + 1e-9


# ---------------------------------------------------------------------------
# invariants


def _work_integral(events, flows):
    """Integral of allocated bandwidth from the event log."""
    total = 0.0
    for prev, cur in zip(events, events[1:]):
        total += prev.active_flows * prev.per_flow_rate_gbps * 1e9 \
            * (cur.time_s - prev.time_s)
    return total


def test_work_conservation_and_lower_bounds():
    rng = random.Random(3)
    for _ in range(50):
        n = rng.randint(1, 5)
        sw = SwitchModel(upstream_bandwidth=rng.uniform(2, 20),
                         per_flow_cap=rng.uniform(1, 20))
        flows = [Flow(id=f"f{i}", bytes=rng.uniform(1e8, 5e9),
                      release=rng.choice([0.0, rng.uniform(0, 0.5)]),
                      offset=rng.choice([0.0, rng.uniform(0, 0.5)]))
                 for i in range(n)]
        res = simulate(flows, sw)
        total_bytes = sum(f.bytes for f in flows)
        integral = _work_integral(list(res.events), flows)
        assert integral == pytest.approx(total_bytes, rel=1e-9)
        first = min(f.start for f in flows)
        busy = res.makespan - first
        assert busy >= total_bytes / (sw.upstream_bandwidth * 1e9) - 1e-9
        assert busy >= max(f.bytes for f in flows) / (sw.per_flow_cap * 1e9) - 1e-9


@pytest.mark.parametrize("n", range(2, 9))
def test_identical_flow_stagger_ratio(n):
    flows = [Flow(id=f"f{i}", bytes=16e9) for i in range(n)]
    naive = simulate(flows, SW16)
    offsets = optimize_stagger(flows, SW16)
    staggered = simulate(with_offsets(flows, offsets), SW16)
    # exact up to float rounding (1/n rates are not binary-representable)
    assert staggered.makespan == pytest.approx(naive.makespan, rel=1e-12)
    assert staggered.mean_completion == pytest.approx(
        (n + 1) / (2 * n) * naive.mean_completion, rel=1e-12)
    assert naive.peak_concurrency == n
    assert staggered.peak_concurrency == 1


def test_matches_time_stepped_integrator():
    rng = random.Random(17)
    for _ in range(20):
        n = rng.randint(1, 5)
        sw = SwitchModel(upstream_bandwidth=rng.uniform(2, 6),
                         per_flow_cap=rng.uniform(1, 6))
        flows = [Flow(id=f"f{i}", bytes=rng.uniform(5e6, 2e7),
                      release=rng.uniform(0, 0.003),
                      offset=rng.uniform(0, 0.003)) for i in range(n)]
        fluid = simulate(flows, sw)
        stepped, peak = time_stepped_sim(flows, sw)
        for fid, t in stepped.items():
            assert fluid.completions[fid] == pytest.approx(t, rel=1e-3)
        assert fluid.peak_concurrency == peak


def test_event_log_csv():
    res = simulate([Flow(id="f0", bytes=1e9)], SW16)
    text = events_to_csv(res.events)
    lines = text.strip().splitlines()
    assert lines[0] == "time_s,event,flow_id,active_flows,per_flow_rate_GBps"
    assert len(lines) == 3  # start + finish

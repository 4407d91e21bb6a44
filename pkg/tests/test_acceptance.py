"""Acceptance suite: one test per criterion, each at its stated tolerance.

Latency-bearing criteria run against emulated devices with N(0.7 s, 0.07 s)
configuration latency. Run alone with ``pytest -m acceptance``.
"""

import random
import statistics

import pytest

from ocsctl.emulator import LatencyModel
from ocsctl.errors import BlockingOccured
from ocsctl.fpce import Fpce, PathRequest
from ocsctl.scenarios import (TESTBED_ROUTES, atomicity_sweep, bench_events, bench_fig9, bench_fig10, bench_fig11a,
                              bench_fig11b, bench_fig13, bench_overhead, crash_recovery)

from oracles import brute_force_min_hops, build_store, random_network

pytestmark = pytest.mark.acceptance
RUNS = 10


def _mean(rows, **match):
    return statistics.mean(r["seconds"] for r in rows if all(r[k] == v for k, v in match.items()))


@pytest.mark.criterion(1, "path control under 1 s, R1 <= R2 <= R3")
async def test_path_control_under_one_second(detail):
    rows = await bench_fig9(runs=RUNS)
    assert len(rows) == 3 * 2 * RUNS
    assert all(r["ok"] for r in rows)
    worst = max(r["seconds"] for r in rows)
    means = {op: [_mean(rows, route=rt, op=op) for rt in TESTBED_ROUTES] for op in ("establish", "release")}
    detail(f"max {worst:.3f}s; establish means " + "/".join(f"{m:.3f}" for m in means["establish"])
           + "; release means " + "/".join(f"{m:.3f}" for m in means["release"]))
    assert worst < 1.0
    for op, m in means.items():
        assert m[0] <= m[1] <= m[2], (op, m)


@pytest.mark.criterion(2, "rollback under 0.90 s in >= 95% of runs")
async def test_rollback_bound(detail):
    rows = await bench_fig10(runs=RUNS)
    assert len(rows) == 3 * RUNS
    assert all(r["outcome"] == "PathOperFailed" for r in rows)
    assert all(r["healthy_intact"] for r in rows)
    times = [r["rollback_s"] for r in rows]
    within = sum(t is not None and t < 0.90 for t in times) / len(times)
    detail(f"{within:.0%} under 0.90s; max {max(times):.3f}s")
    assert within >= 0.95


@pytest.mark.criterion(3, "signal-detection setup under 2 s")
async def test_detection_setup(detail):
    rows = await bench_fig11a(runs=RUNS)
    assert len(rows) == 3 * RUNS
    assert all(r["outcome"] == "ok" for r in rows), [r for r in rows if r["outcome"] != "ok"]
    worst = max(r["elapsed_s"] for r in rows)
    detail(f"max {worst:.3f}s")
    assert worst < 2.0
    assert all(r["z_dbm"] == 5.9 and r["z_rise_s"] is not None for r in rows)


@pytest.mark.criterion(4, "degradation restoration under 3 s, cross-vendor")
async def test_degradation_restoration(detail):
    rows = await bench_fig11b(runs=RUNS)
    assert len(rows) == 3 * RUNS
    assert all(r["outcome"] == "ok" for r in rows), [r for r in rows if r["outcome"] != "ok"]
    worst = max(r["elapsed_s"] for r in rows)
    detail(f"max {worst:.3f}s")
    assert worst < 3.0
    for r in rows:
        assert r["hops"] == TESTBED_ROUTES[r["to"]]
        assert r["restored"] and r["z_dbm"] == 5.9
        assert any(v != r["alarm_vendor"] for v in r["reconfigured_vendors"])


@pytest.mark.criterion(5, "scalability: 44/92/188 devices under 1 s, monotone mean")
async def test_scalability(detail):
    rows = await bench_fig13(ns=(16, 32, 64), runs=RUNS)
    assert {r["devices"] for r in rows} == {44, 92, 188}
    assert all(r["ok"] for r in rows)
    worst = {n: max(r["seconds"] for r in rows if r["n"] == n) for n in (16, 32, 64)}
    means = {n: _mean(rows, n=n) for n in (16, 32, 64)}
    detail("max " + "/".join(f"{worst[n]:.3f}" for n in worst) + "s; mean "
           + "/".join(f"{means[n]:.3f}" for n in means) + "s")
    assert all(r["seconds"] < 1.0 for r in rows)
    assert means[16] <= means[32] <= means[64]


@pytest.mark.criterion(6, "atomicity over all 32 failure subsets")
async def test_atomicity_exhaustive(detail):
    rows = await atomicity_sweep()
    assert len(rows) == 32
    states = [r["state"] for r in rows]
    detail(f"prior={states.count('prior')} intent={states.count('intent')} other={states.count('other')}")
    assert set(states) <= {"prior", "intent"}
    for r in rows:
        # a path is only established when every switch is up
        assert (r["outcome"] == "ok") == (not r["down"]) == (r["state"] == "intent") == r["in_store"]


@pytest.mark.criterion(7, "translator overhead < 0.30 s and <= 50% of total")
async def test_translator_overhead(detail):
    fast = await bench_overhead(ns=(1, 2, 4, 8), reps=10)
    slow = await bench_overhead(ns=(1, 2, 4, 8), latency=LatencyModel.fixed(0.7), reps=3)
    worst_delta = max(r["delta_s"] for r in fast)
    worst_ratio = max(r["ratio"] for r in slow)
    detail(f"max delta {worst_delta * 1000:.2f}ms; max ratio {worst_ratio:.2%}")
    assert worst_delta < 0.30
    assert worst_ratio <= 0.50


@pytest.mark.criterion(8, "FPCE matches brute force on 200 random topologies")
def test_fpce_oracle(detail):
    rng = random.Random(20240808)
    fpce = Fpce()
    feasible = 0
    for _ in range(200):
        doc, masks = random_network(rng, max_nodes=12, max_strands=30)
        assert len(doc["switches"]) <= 12 and len(doc["links"]) <= 30
        want = brute_force_min_hops(doc, masks)
        view = build_store(doc, masks).topology_view()
        if want is None:
            with pytest.raises(BlockingOccured):
                fpce.compute_path(PathRequest("A", "Z"), view)
        else:
            feasible += 1
            assert len(fpce.compute_path(PathRequest("A", "Z"), view).hops) == want
    detail(f"{feasible} feasible, {200 - feasible} blocked")
    assert 0 < feasible < 200


# point -> (victim persisted, orphans expected at restart)
KILL_EXPECT = {"before_config": (False, False), "after_config": (False, True), "after_persist": (True, False)}


@pytest.mark.criterion(9, "crash recovery at 3 kill points under both policies")
@pytest.mark.parametrize("tamper", [None, "OCS4"], ids=["clean", "tampered"])
@pytest.mark.parametrize("policy", ["RECONFIGURE", "MARK_UNAVAILABLE"])
@pytest.mark.parametrize("point", list(KILL_EXPECT))
async def test_crash_recovery(point, policy, tamper, detail):
    r = await crash_recovery(point, policy, tamper)
    persisted, orphaned = KILL_EXPECT[point]
    assert r["crashed"]
    assert r["victim_in_store"] == persisted
    orphans = sorted((o["ocs"], o["name"], o["rx"], o["tx"]) for o in r["orphans"])
    assert orphans == (sorted(map(tuple, r["victim_conns"])) if orphaned else [])
    if tamper is None:
        keep = "CONSISTENT"
    else:
        keep = "REPAIRED" if policy == "RECONFIGURE" else "QUARANTINED"
    expected = {"keep": keep, **({"victim": "CONSISTENT"} if persisted else {})}
    assert r["verdicts"] == expected
    assert r["marked_unavailable"] == (["OCS4"] if keep == "QUARANTINED" else [])
    assert r["leftover_orphans"] == []
    assert r["missing_healthy"] == []
    assert r["report_file"] and r["usable"]
    detail(f"{point}/{policy}/{tamper or 'clean'}: {r['verdicts']}, {len(orphans)} orphans removed")


@pytest.mark.criterion(10, "100 simultaneous events: all complete, no double booking, no drops")
async def test_event_concurrency(detail):
    r = await bench_events(pairs=100)
    detail(f"{r['completed']}/100 in {r['wall_s']:.2f}s; dropped {r['stats']['dropped']}")
    assert r["completed"] == 100
    assert r["stats"]["received"] == 100 and r["stats"]["dropped"] == 0
    assert r["audit"] == [] and r["device_clashes"] == []
    assert r["store_matches_devices"] and r["paths"] == 100
    assert r["dark_terminals"] == []

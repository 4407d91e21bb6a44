"""Reference topologies and the benchmark scenarios built on them.

Every scenario starts its own emulated fleet, a controller and an NBI server
in the running event loop, drives the controller over the NBI, and returns
one row (a dict) per measured operation.

Latency draws use common random numbers. Before each run every device is
reseeded from (seed, run, position of the device on the route under test),
so routes and sizes that share positions also share draws. Each device still
samples from the configured distribution.
"""

from __future__ import annotations

import asyncio
import contextlib
import random
import statistics
import tempfile
import time
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from .controller import Controller
from .emulator import EmulatorProfile, FaultMode, Fleet, LatencyModel, OcsEmulator
from .errors import NbiError
from .model import InternalConnection
from .nbi import AsyncNbiClient, NbiServer
from .sbi.client import DeviceClient
from .sbi.translator import Translator, VendorSession
from .sbi.vendors import UnifiedEdit, converter_for

TESTBED_LATENCY = LatencyModel.normal(0.7, 0.07)
LAUNCH_DBM = 5.9
DETECT_DBM = -1.0
DEGRADE_DBM = -10.0

TESTBED_ROUTES = {
    "R1": ["OCS1", "OCS3", "OCS5"],
    "R2": ["OCS1", "OCS2", "OCS3", "OCS5"],
    "R3": ["OCS1", "OCS2", "OCS4", "OCS3", "OCS5"],
}
TESTBED_VENDORS = {"OCS1": "A", "OCS2": "B", "OCS3": "C", "OCS4": "A", "OCS5": "B"}
RESTORE_CASES = [("Case1", "R1", "R2"), ("Case2", "R2", "R3"), ("Case3", "R3", "R1")]


def build_topology(edges, attachments, vendors=None, host: str = "127.0.0.1", spare: int = 0) -> dict:
    """Topology document from duplex OCS edges and terminal attachments.

    ``edges`` is a list of ``(u, v)`` pairs, repeated for parallel strands.
    ``attachments`` is a list of ``(terminal, ocs)``. Terminal strands take
    the lowest port numbers on their OCS, so the first terminal on an OCS
    lands on Rx_1/Tx_1. Links are named ``L-<src>-<dst>`` with a ``-k``
    suffix for parallel strands.
    """
    vendors = vendors or {}
    next_port: dict[str, int] = defaultdict(int)
    ocs_ids: list[str] = []
    links: list[dict] = []
    names: dict[str, int] = defaultdict(int)
    term_ports: dict[str, int] = defaultdict(int)

    def port(ocs: str) -> int:
        if ocs not in next_port:
            ocs_ids.append(ocs)
        next_port[ocs] += 1
        return next_port[ocs]

    def link(src, dst, src_port, dst_port):
        names[f"{src}-{dst}"] += 1
        links.append({"src": src, "dst": dst, "src_port": src_port, "dst_port": dst_port,
                      "_base": f"L-{src}-{dst}", "_k": names[f"{src}-{dst}"]})

    for term, ocs in attachments:
        k = port(ocs)
        term_ports[term] += 1
        suffix = "" if term_ports[term] == 1 else str(term_ports[term])
        link(term, ocs, f"tx{suffix}", f"Rx_{k}")
        link(ocs, term, f"Tx_{k}", f"rx{suffix}")
    for u, v in edges:
        i, j = port(u), port(v)
        link(u, v, f"Tx_{i}", f"Rx_{j}")
        link(v, u, f"Tx_{j}", f"Rx_{i}")
    for l in links:
        base, k = l.pop("_base"), l.pop("_k")
        l["id"] = base if names[base[2:]] == 1 else f"{base}-{k}"
    switches = []
    for ocs in sorted(ocs_ids):
        n = next_port[ocs] + spare
        sw = {"id": ocs, "host": host, "port": 830,
              "tx_ports": [f"Tx_{i}" for i in range(1, n + 1)],
              "rx_ports": [f"Rx_{i}" for i in range(1, n + 1)]}
        if ocs in vendors:
            sw["vendor"] = vendors[ocs]
        switches.append(sw)
    terminals = sorted({t for t, _ in attachments})
    return {
        "switches": switches,
        "terminals": [{"id": t, "host": host, "port": 830} for t in terminals],
        "links": [{k: l[k] for k in ("id", "src", "dst", "src_port", "dst_port")} for l in links],
    }


def testbed_topology() -> dict:
    """Five OCSes of three vendors; terminal A on OCS1, Z on OCS5."""
    edges = [("OCS1", "OCS3"), ("OCS3", "OCS5"), ("OCS1", "OCS2"), ("OCS2", "OCS3"),
             ("OCS2", "OCS4"), ("OCS4", "OCS3")]
    return build_topology(edges, [("A", "OCS1"), ("Z", "OCS5")], TESTBED_VENDORS, spare=1)


def scale_topology(n: int) -> dict:
    """Two shared edge OCSes and three disjoint routes of n-2 OCSes: 3n-4 devices."""
    if n < 3:
        raise ValueError("n must be at least 3")
    edges = []
    for r in range(1, 4):
        chain = ["E1"] + [f"R{r}-{i:03d}" for i in range(1, n - 1)] + ["E2"]
        edges += list(zip(chain, chain[1:]))
    return build_topology(edges, [("A", "E1"), ("Z", "E2")])


def scale_route(n: int, r: int = 1) -> list[str]:
    return ["E1"] + [f"R{r}-{i:03d}" for i in range(1, n - 1)] + ["E2"]


def fat_topology(pairs: int = 100, direct: int = 40, via: int = 30) -> dict:
    """``pairs`` terminal pairs across edges E1/E2; core capacity direct + 2*via."""
    attachments = [(f"A{i:03d}", "E1") for i in range(pairs)] + [(f"Z{i:03d}", "E2") for i in range(pairs)]
    edges = [("E1", "E2")] * direct
    for core in ("C1", "C2"):
        edges += [("E1", core)] * via + [(core, "E2")] * via
    return build_topology(edges, attachments)


def crn_seeds(seed, run: int, route: list[str]):
    position = {ocs: i for i, ocs in enumerate(route)}

    def seed_for(ocs: str):
        if ocs in position:
            return f"{seed}:{run}:{position[ocs]}"
        return f"{seed}:{run}:off:{ocs}"

    return seed_for


@dataclass
class Bed:
    fleet: Fleet
    controller: Controller
    server: NbiServer
    client: AsyncNbiClient

    async def call(self, method: str, **params):
        return await self.client.call(method, **params)

    async def timed(self, method: str, **params) -> tuple[float, object]:
        started = time.perf_counter()
        try:
            result = await self.client.call(method, **params)
        except NbiError as exc:
            result = exc
        return time.perf_counter() - started, result


@contextlib.asynccontextmanager
async def bed(topology: dict, latency=None, seed=0, state_dir=None, **controller_kw):
    fleet = Fleet(topology, latency or LatencyModel(), seed=seed)
    await fleet.start()
    controller = server = client = None
    with contextlib.ExitStack() as stack:
        if state_dir is None:
            state_dir = stack.enter_context(tempfile.TemporaryDirectory(prefix="ocsctl-"))
        try:
            controller = Controller(state_dir, fsync=False, **controller_kw)
            await controller.start()
            server = NbiServer(controller)
            await server.start()
            client = await AsyncNbiClient(*server.address, timeout=120.0).connect()
            await client.call("CreateNetwork", topology_file=fleet.topology)
            yield Bed(fleet, controller, server, client)
        finally:
            if client is not None:
                await client.close()
            if server is not None:
                await server.stop()
            if controller is not None:
                await controller.stop()
            await fleet.stop()


# -- path control ------------------------------------------------------------

async def bench_fig9(runs: int = 10, latency: LatencyModel = TESTBED_LATENCY, seed=0) -> list[dict]:
    rows = []
    async with bed(testbed_topology(), latency, seed) as b:
        for route_name, route in TESTBED_ROUTES.items():
            for run in range(runs):
                b.fleet.reseed(crn_seeds(seed, run, route))
                svc = f"{route_name}-{run}"
                dt, res = await b.timed("CreateFiberPath", svc_id=svc, a="A", z="Z", ocs_list=route)
                rows.append({"route": route_name, "run": run, "op": "establish", "seconds": dt,
                             "ok": not isinstance(res, NbiError), "hops": len(route)})
                dt, res = await b.timed("DeleteFiberPath", svc_id=svc)
                rows.append({"route": route_name, "run": run, "op": "release", "seconds": dt,
                             "ok": not isinstance(res, NbiError), "hops": len(route)})
    return rows


async def bench_fig10(runs: int = 10, ms=(1, 2, 3), latency: LatencyModel = TESTBED_LATENCY, seed=0,
                      route_name: str = "R3") -> list[dict]:
    route = TESTBED_ROUTES[route_name]
    rng = random.Random(f"fig10:{seed}")
    rows = []
    async with bed(testbed_topology(), latency, seed) as b:
        for m in ms:
            for run in range(runs):
                down = sorted(rng.sample(route, m))
                b.fleet.reseed(crn_seeds(seed, run, route))
                before = b.fleet.snapshot()
                for ocs in down:
                    await b.fleet.set_fault(ocs, FaultMode.SERVER_DOWN)
                svc = f"rb-{m}-{run}"
                dt, res = await b.timed("CreateFiberPath", svc_id=svc, a="A", z="Z", ocs_list=route)
                report = b.controller.renderer.last_report
                after = b.fleet.snapshot()
                intact = all(after[o] == before[o] for o in route if o not in down)
                await b.fleet.clear_faults()
                for ocs in route:
                    await b.call("UpdateResourceStatus", object_id=ocs, object_type="switch", status="AVAILABLE")
                rows.append({
                    "m": m, "run": run, "down": down, "seconds": dt,
                    "outcome": res.code if isinstance(res, NbiError) else "ok",
                    "failed": list(report.failed) if report else [],
                    "rollback_s": report.rollback_s if report else None,
                    "healthy_intact": intact,
                })
                await _settle_translators(b.fleet)
    return rows


async def _settle_translators(fleet: Fleet, timeout: float = 5.0) -> None:
    """Wait until every translator has its vendor session back."""
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if all(t.vendor.connected for t in fleet.translators.values()):
            return
        await asyncio.sleep(0.02)


# -- events ------------------------------------------------------------------

async def _wait_power(term, port: str, dbm: float, timeout: float) -> float | None:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if term.power.get(port) == dbm:
            return time.monotonic()
        await asyncio.sleep(0.002)
    return None


async def bench_fig11a(runs: int = 10, latency: LatencyModel = TESTBED_LATENCY, seed=0) -> list[dict]:
    rows = []
    async with bed(testbed_topology(), latency, seed) as b:
        await b.call("AddEvent", event_id="Event_A", event_type="signal_detection", ocs="OCS1",
                     port="Rx_1", threshold=DETECT_DBM)
        journal = b.controller.events.journal
        z = b.fleet.terminals["Z"]
        for route_name, route in TESTBED_ROUTES.items():
            act = f"Act_{route_name}"
            await b.call("CreateAction", act_id=act, svc_id="Service_A", a="A", z="Z", ocs_list=route)
            await b.call("CreateEventHandler", event_id="Event_A", act_id=act)
            for run in range(runs):
                b.fleet.reseed(crn_seeds(seed, run, route))
                count = len(journal.records)
                lit_at = time.monotonic()
                b.fleet.set_laser("A", LAUNCH_DBM)
                try:
                    rec = (await journal.wait_for(count + 1, 10.0))[-1]
                except asyncio.TimeoutError:
                    rec = None
                rise = await _wait_power(z, "rx", LAUNCH_DBM, 2.0)
                rows.append({
                    "route": route_name, "run": run,
                    "outcome": rec.outcome if rec else "timeout",
                    "elapsed_s": rec.elapsed_s if rec else None,
                    "z_rise_s": (rise - lit_at) if rise else None,
                    "z_dbm": z.power.get("rx"),
                })
                b.fleet.set_laser("A", None)
                with contextlib.suppress(NbiError):
                    await b.call("DeleteFiberPath", svc_id="Service_A")
            await b.call("DeleteAction", act_id=act, svc_id="Service_A")
    return rows


async def bench_fig11b(runs: int = 10, latency: LatencyModel = TESTBED_LATENCY, seed=0,
                       cases=RESTORE_CASES) -> list[dict]:
    rows = []
    async with bed(testbed_topology(), latency, seed) as b:
        journal = b.controller.events.journal
        store = b.controller.store
        z = b.fleet.terminals["Z"]
        for case, src, dst in cases:
            src_route, dst_route = TESTBED_ROUTES[src], TESTBED_ROUTES[dst]
            svc = f"Service_{case}"
            act = f"Act_{case}"
            event = f"Event_{case}"
            await b.call("CreateAction", act_id=act, svc_id=svc, a="A", z="Z", ocs_list=dst_route)
            for run in range(runs):
                b.fleet.reseed(crn_seeds(seed, run, dst_route))
                await b.call("CreateFiberPath", svc_id=svc, a="A", z="Z", ocs_list=src_route)
                path = store.get_path(svc)
                port = path.per_ocs_configs["OCS3"][0].rx_port
                strand = store.link_into("OCS3", port)
                if run == 0:
                    await b.call("AddEvent", event_id=event, event_type="signal_degradation", ocs="OCS3",
                                 port=port, threshold=DEGRADE_DBM)
                    await b.call("CreateEventHandler", event_id=event, act_id=act)
                b.fleet.set_laser("A", LAUNCH_DBM)
                await _wait_power(z, "rx", LAUNCH_DBM, 2.0)
                count = len(journal.records)
                b.fleet.pull(strand.id)
                try:
                    rec = (await journal.wait_for(count + 1, 15.0))[-1]
                except asyncio.TimeoutError:
                    rec = None
                restored = await _wait_power(z, "rx", LAUNCH_DBM, 2.0)
                new = store.paths.get(svc)
                changed = sorted(set(new.hops) - {"OCS3"}) if new else []
                rows.append({
                    "case": case, "from": src, "to": dst, "run": run,
                    "outcome": rec.outcome if rec else "timeout",
                    "elapsed_s": rec.elapsed_s if rec else None,
                    "hops": list(new.hops) if new else None,
                    "z_dbm": z.power.get("rx"), "restored": restored is not None,
                    "alarm_vendor": b.fleet.vendor_of("OCS3"),
                    "reconfigured_vendors": sorted({b.fleet.vendor_of(o) for o in changed}),
                })
                b.fleet.set_laser("A", None)
                with contextlib.suppress(NbiError):
                    await b.call("DeleteFiberPath", svc_id=svc)
                b.fleet.plug(strand.id)
                await b.call("UpdateResourceStatus", object_id=strand.id, object_type="link", status="AVAILABLE")
            await b.call("DeleteAction", act_id=act, svc_id=svc)
    return rows


# -- scale -------------------------------------------------------------------

async def bench_fig13(ns=(16, 32, 64), runs: int = 10, latency: LatencyModel = TESTBED_LATENCY,
                      seed=0) -> list[dict]:
    rows = []
    for n in ns:
        topo = scale_topology(n)
        route = scale_route(n)
        async with bed(topo, latency, seed) as b:
            for run in range(runs):
                b.fleet.reseed(crn_seeds(seed, run, route))
                svc = f"S{n}-{run}"
                dt, res = await b.timed("CreateFiberPath", svc_id=svc, a="A", z="Z")
                hops = len(res["hops"]) if isinstance(res, dict) else None
                rows.append({"n": n, "devices": len(topo["switches"]), "run": run, "op": "establish",
                             "seconds": dt, "ok": isinstance(res, dict), "hops": hops})
                dt, res = await b.timed("DeleteFiberPath", svc_id=svc)
                rows.append({"n": n, "devices": len(topo["switches"]), "run": run, "op": "release",
                             "seconds": dt, "ok": isinstance(res, dict), "hops": hops})
    return rows


# -- translator overhead -----------------------------------------------------

async def bench_overhead(ns=(1, 2, 4, 8), vendors=("A", "B", "C"), latency: LatencyModel | None = None,
                         reps: int = 10) -> list[dict]:
    """Unified edit through a translator versus the same vendor lines sent directly.

    Each rep creates ``n`` connections and then deletes them; only the
    create is timed. Both paths talk to the same emulator.
    """
    latency = latency or LatencyModel()
    rows = []
    for vendor in vendors:
        tx = [f"Tx_{i}" for i in range(1, 9)]
        rx = [f"Rx_{i}" for i in range(1, 9)]
        emu = OcsEmulator("O", tx, rx, EmulatorProfile(vendor=vendor, latency=latency))
        await emu.start()
        tr = Translator(vendor, "127.0.0.1", emu.port)
        await tr.start()
        client = DeviceClient("O", *tr.address, timeout=30.0)
        conv = converter_for(vendor)
        direct = VendorSession(conv, "127.0.0.1", emu.port, timeout=30.0)
        try:
            await client.hello()
            for n in ns:
                conns = [InternalConnection(f"c{i}", rx[i], tx[i]) for i in range(n)]
                create = {"create": [c.to_dict() for c in conns]}
                delete = {"delete": [c.name for c in conns]}
                unified, raw = [], []
                for _ in range(reps):
                    t0 = time.perf_counter()
                    await client.edit_config(create)
                    unified.append(time.perf_counter() - t0)
                    await client.edit_config(delete)
                    lines = conv.edit_lines(UnifiedEdit.from_payload(create))
                    t0 = time.perf_counter()
                    units = await direct.request(lines)
                    raw.append(time.perf_counter() - t0)
                    assert all(u.ok for u in units), units
                    await direct.request(conv.edit_lines(UnifiedEdit.from_payload(delete)))
                u, d = statistics.mean(unified), statistics.mean(raw)
                rows.append({"vendor": vendor, "n": n, "latency_s": latency.mean, "unified_s": u,
                             "direct_s": d, "delta_s": u - d, "ratio": (u - d) / u if u else 0.0})
        finally:
            await client.close()
            await direct.close()
            await tr.stop()
            await emu.stop()
    return rows


BENCHES = {
    "fig9": bench_fig9,
    "fig10": bench_fig10,
    "fig11a": bench_fig11a,
    "fig11b": bench_fig11b,
    "fig13": bench_fig13,
    "overhead": bench_overhead,
}


# -- concurrent events -------------------------------------------------------

async def bench_events(pairs: int = 100, latency: LatencyModel | None = None, seed=0,
                       timeout: float = 120.0) -> dict:
    """Light every A-terminal at once; each detection event creates its own path."""
    latency = latency or LatencyModel.fixed(0.01)
    topo = fat_topology(pairs)
    async with bed(topo, latency, seed) as b:
        store = b.controller.store
        for i in range(pairs):
            a, z = f"A{i:03d}", f"Z{i:03d}"
            port = store.link_from(a, "tx").dst_port
            await b.call("AddEvent", event_id=f"Ev{i:03d}", event_type="signal_detection", ocs="E1",
                         port=port, threshold=DETECT_DBM)
            await b.call("CreateAction", act_id=f"Act{i:03d}", svc_id=f"S{i:03d}", a=a, z=z)
            await b.call("CreateEventHandler", event_id=f"Ev{i:03d}", act_id=f"Act{i:03d}")
        manager = b.controller.events
        base = dict(manager.stats)
        started = time.monotonic()
        b.fleet.set_lasers({f"A{i:03d}": LAUNCH_DBM for i in range(pairs)})
        records = await manager.journal.wait_for(pairs, timeout)
        wall = time.monotonic() - started
        await manager.idle(timeout)
        dark = [f"Z{i:03d}" for i in range(pairs) if b.fleet.terminals[f"Z{i:03d}"].power.get("rx") != LAUNCH_DBM]
        # device-level double booking: any port used twice on one OCS
        clashes = []
        for ocs, snap in b.fleet.snapshot().items():
            rx = [c[1] for c in snap["connections"]]
            tx = [c[2] for c in snap["connections"]]
            if len(set(rx)) != len(rx) or len(set(tx)) != len(tx):
                clashes.append(ocs)
        on_devices = {(ocs, c[0]) for ocs, snap in b.fleet.snapshot().items() for c in snap["connections"]}
        in_store = {(ocs, c.name) for p in store.paths.values() for ocs, c in p.connections()}
        stats = {k: manager.stats[k] - base[k] for k in manager.stats}
        return {
            "pairs": pairs,
            "completed": sum(r.outcome == "ok" for r in records),
            "outcomes": sorted({r.outcome for r in records}),
            "wall_s": wall,
            "max_elapsed_s": max(r.elapsed_s for r in records),
            "audit": store.audit(),
            "device_clashes": clashes,
            "store_matches_devices": on_devices == in_store,
            "dark_terminals": dark,
            "paths": len(store.paths),
            "stats": stats,
        }


BENCHES["events"] = bench_events


# -- atomicity ---------------------------------------------------------------

async def atomicity_sweep(latency: LatencyModel = TESTBED_LATENCY, seed=0, route_name: str = "R3",
                          subsets=None) -> list[dict]:
    """Create one path per failure subset of the route's switches.

    Each row classifies the global device state after the attempt as
    ``intent`` (every switch carries exactly the path), ``prior`` (identical
    to the snapshot taken before the attempt) or ``other``.
    """
    import itertools

    route = TESTBED_ROUTES[route_name]
    if subsets is None:
        subsets = [c for k in range(len(route) + 1) for c in itertools.combinations(route, k)]
    rows = []
    async with bed(testbed_topology(), latency, seed) as b:
        for run, down in enumerate(subsets):
            b.fleet.reseed(crn_seeds(seed, run, route))
            before = b.fleet.snapshot()
            for ocs in down:
                await b.fleet.set_fault(ocs, FaultMode.SERVER_DOWN)
            svc = f"atom-{run}"
            dt, res = await b.timed("CreateFiberPath", svc_id=svc, a="A", z="Z", ocs_list=route)
            after = b.fleet.snapshot()
            intent = None
            if isinstance(res, dict):
                path = b.controller.store.get_path(svc)
                intent = {ocs: sorted([c.name, c.rx_port, c.tx_port] for c in conns)
                          for ocs, conns in path.per_ocs_configs.items()}
            if after == before:
                state = "prior"
            elif intent is not None and all(
                    sorted(map(list, after[o]["connections"])) ==
                    sorted(before[o]["connections"] + intent.get(o, [])) for o in after):
                state = "intent"
            else:
                state = "other"
            rows.append({"down": list(down), "outcome": res.code if isinstance(res, NbiError) else "ok",
                         "state": state, "seconds": dt, "in_store": b.controller.store.has_svc(svc)})
            await b.fleet.clear_faults()
            for ocs in route:
                await b.call("UpdateResourceStatus", object_id=ocs, object_type="switch", status="AVAILABLE")
            if isinstance(res, dict):
                await b.call("DeleteFiberPath", svc_id=svc)
            await _settle_translators(b.fleet)
    return rows


# -- crash recovery ----------------------------------------------------------

def crash_topology() -> dict:
    """The testbed with a second terminal pair (B on OCS1, Y on OCS5) and a
    doubled OCS3-OCS5 span, so R1 and R3 can be lit at the same time."""
    edges = [("OCS1", "OCS3"), ("OCS3", "OCS5"), ("OCS3", "OCS5"), ("OCS1", "OCS2"), ("OCS2", "OCS3"),
             ("OCS2", "OCS4"), ("OCS4", "OCS3")]
    return build_topology(edges, [("A", "OCS1"), ("B", "OCS1"), ("Z", "OCS5"), ("Y", "OCS5")],
                          TESTBED_VENDORS, spare=1)


def _device_connections(fleet: Fleet) -> set[tuple[str, str, str, str]]:
    return {(ocs, *c) for ocs, snap in fleet.snapshot().items() for c in snap["connections"]}


def _store_connections(store) -> set[tuple[str, str, str, str]]:
    return {(ocs, c.name, c.rx_port, c.tx_port) for p in store.paths.values() for ocs, c in p.connections()}


async def crash_recovery(point: str, policy: str, tamper: str | None = None,
                         latency: LatencyModel | None = None, state_dir=None) -> dict:
    """Crash a controller at ``point`` while it creates path ``victim``, then restart.

    Path ``keep`` (B to Y over R3) exists before the crash. With ``tamper``
    set to a switch id, one of keep's connections on that switch is removed
    behind the controller's back while it is down.
    """
    from .controller import Crash

    latency = latency or LatencyModel.fixed(0.01)
    fleet = Fleet(crash_topology(), latency)
    topo = await fleet.start()
    tmp = None
    if state_dir is None:
        tmp = tempfile.TemporaryDirectory(prefix="ocsctl-crash-")
        state_dir = tmp.name
    try:
        first = Controller(state_dir, policy=policy)
        await first.start()
        await first.create_network(topo)
        await first.create_fiber_path("keep", "B", "Y", ocs_list=TESTBED_ROUTES["R3"])
        victim_conns = None
        first.kill_points = {point}
        crashed = False
        try:
            await first.create_fiber_path("victim", "A", "Z", ocs_list=TESTBED_ROUTES["R1"])
        except Crash:
            crashed = True
        victim = first.store.paths.get("victim") or first.store.pending.get("victim")
        if victim is not None:
            victim_conns = {(o, c.name, c.rx_port, c.tx_port) for o, c in victim.connections()}
        await first.stop()

        if tamper:
            device = fleet.emulators[tamper].device
            keep_names = sorted(n for n in device.connections if n.startswith("keep"))
            device.connections.pop(keep_names[0])
        on_devices_at_restart = _device_connections(fleet)

        second = Controller(state_dir, policy=policy)
        await second.start()
        try:
            report = second.reconcile_report
            store = second.store
            devices = _device_connections(fleet)
            intent = _store_connections(store)
            quarantined = {s for s, v in report.paths.items() if v.value == "QUARANTINED"}
            healthy_intent = {(o, c.name, c.rx_port, c.tx_port) for s, p in store.paths.items()
                              if s not in quarantined for o, c in p.connections()}
            # the restarted controller must still be able to serve requests
            usable = True
            try:
                if store.has_svc("victim"):
                    await second.delete_fiber_path("victim")
                await second.create_fiber_path("victim", "A", "Z", ocs_list=TESTBED_ROUTES["R1"])
                await second.delete_fiber_path("victim")
            except NbiError:
                usable = False
            return {
                "point": point, "policy": policy, "tamper": tamper, "crashed": crashed,
                "victim_conns": sorted(victim_conns or ()),
                "devices_at_restart": sorted(on_devices_at_restart),
                "verdicts": {s: v.value for s, v in report.paths.items()},
                "orphans": report.orphans,
                "unreachable": report.unreachable,
                "marked_unavailable": report.marked_unavailable,
                "leftover_orphans": sorted(devices - intent),
                "missing_healthy": sorted(healthy_intent - devices),
                "victim_in_store": "victim" in report.paths,
                "report_file": (Path(state_dir) / "reconcile-report.json").exists(),
                "usable": usable,
            }
        finally:
            await second.stop()
    finally:
        await fleet.stop()
        if tmp is not None:
            tmp.cleanup()

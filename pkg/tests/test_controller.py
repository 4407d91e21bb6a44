import asyncio

import pytest

from ocsctl.emulator import FaultMode
from ocsctl.errors import AlreadyExist, BlockingOccured, ConnectionFailed, InvalidRange, NotFound, PathOperFailed
from ocsctl.scenarios import TESTBED_ROUTES, bed, testbed_topology as base_topology


@pytest.fixture
async def b():
    async with bed(base_topology()) as it:
        yield it


async def test_create_picks_the_shortest_route_and_lights_it(b):
    res = await b.call("CreateFiberPath", svc_id="s", a="A", z="Z")
    assert res["hops"] == TESTBED_ROUTES["R1"] and res["status"] == "AVAILABLE"
    snap = b.fleet.snapshot()
    assert all(len(snap[o]["connections"]) == 2 for o in TESTBED_ROUTES["R1"])
    assert snap["OCS2"]["connections"] == []
    with pytest.raises(AlreadyExist):
        await b.call("CreateFiberPath", svc_id="s", a="A", z="Z")


async def test_forced_route_and_release(b):
    res = await b.call("CreateFiberPath", svc_id="s", a="A", z="Z", ocs_list=TESTBED_ROUTES["R3"])
    assert res["hops"] == TESTBED_ROUTES["R3"]
    assert await b.call("DeleteFiberPath", svc_id="s") == {"svc_id": "s", "deleted": True}
    assert all(s == {"connections": []} for s in b.fleet.snapshot().values())
    with pytest.raises(NotFound):
        await b.call("DeleteFiberPath", svc_id="s")


async def test_unreachable_switch_fails_atomically(b):
    await b.fleet.set_fault("OCS5", FaultMode.SERVER_DOWN)
    with pytest.raises(PathOperFailed):
        await b.call("CreateFiberPath", svc_id="s", a="A", z="Z")
    assert all(s == {"connections": []} for s in b.fleet.snapshot().values())
    assert b.controller.store.nodes["OCS5"].status.value == "UNAVAILABLE"
    # the egress switch is gone, so nothing else can reach Z
    with pytest.raises(BlockingOccured):
        await b.call("CreateFiberPath", svc_id="s", a="A", z="Z")


async def test_restore_moves_the_path(b):
    await b.call("CreateFiberPath", svc_id="s", a="A", z="Z")
    await b.call("UpdateResourceStatus", object_id="OCS3:Rx_1", object_type="port", status="UNAVAILABLE")
    res = await b.call("RestoreFiberPath", svc_id="s", a="A", z="Z")
    assert res["hops"] == TESTBED_ROUTES["R2"] and res["previous_hops"] == TESTBED_ROUTES["R1"]
    with pytest.raises(NotFound):
        await b.call("RestoreFiberPath", svc_id="s", a="Z", z="A")


async def test_path_availability_marks_every_resource(b):
    await b.call("CreateFiberPath", svc_id="s", a="A", z="Z")
    await b.call("UpdatePathAvailability", svc_id="s", status="UNAVAILABLE")
    store = b.controller.store
    assert all(store.nodes[o].status.value == "UNAVAILABLE" for o in TESTBED_ROUTES["R1"])
    assert all(store.links[l].status.value == "UNAVAILABLE" for l in store.paths["s"].links)


async def test_registration_errors(b):
    with pytest.raises(ConnectionFailed):
        await b.call("AddSwitch", ocs_id="X", conn_info={"host": "127.0.0.1", "port": 1},
                     tx_ports=["Tx_1"], rx_ports=["Rx_1"])
    with pytest.raises(AlreadyExist):
        await b.call("AddTerminal", terminal_id="A", conn_info={"host": "127.0.0.1", "port": 1})
    with pytest.raises(InvalidRange):
        await b.call("AddEvent", event_id="e", event_type="signal_detection", ocs="OCS1", port="Rx_9", threshold=0)
    with pytest.raises(NotFound):
        await b.call("CreateAlarmHandler", svc_id="none", act_id="x")


async def test_detection_event_creates_a_path_without_polling(b):
    await b.call("AddEvent", event_id="e", event_type="signal_detection", ocs="OCS1", port="Rx_1", threshold=-1.0)
    await b.call("CreateAction", act_id="act", svc_id="s", a="A", z="Z")
    await b.call("CreateEventHandler", event_id="e", act_id="act")
    before = b.fleet.total_requests()
    await asyncio.sleep(0.5)
    assert b.fleet.total_requests() == before
    b.fleet.set_laser("A", 5.9)
    rec = (await b.controller.events.journal.wait_for(1, 5.0))[0]
    assert rec.outcome == "ok" and "s" in b.controller.store.paths


async def test_path_alarm_restores_onto_another_route(b):
    await b.call("CreateFiberPath", svc_id="s", a="A", z="Z")
    b.fleet.set_laser("A", 5.9)
    link = b.controller.store.link_into("OCS3", b.controller.store.paths["s"].per_ocs_configs["OCS3"][0].rx_port)
    await b.call("AddEvent", event_id="d", event_type="signal_degradation", ocs="OCS3",
                 port=link.dst_port, threshold=-10.0)
    await b.call("CreateAction", act_id="act", svc_id="s", a="A", z="Z")
    await b.call("CreateAlarmHandler", svc_id="s", act_id="act")
    b.fleet.pull(link.id)
    rec = (await b.controller.events.journal.wait_for(1, 5.0))[0]
    assert rec.outcome == "ok"
    assert link.id not in b.controller.store.paths["s"].links
    assert b.controller.store.links[link.id].status.value == "UNAVAILABLE"

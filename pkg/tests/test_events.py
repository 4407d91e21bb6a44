import asyncio
import json
import time

import pytest

from ocsctl.errors import AlreadyExist, BlockingOccured, NotFound
from ocsctl.events import ActionJournal, EventAlarmManager
from ocsctl.model import ActionSpec, EventSpec, EventType, Notification, NotificationKind

DET, DEG = NotificationKind.SIGNAL_DETECTED, NotificationKind.SIGNAL_DEGRADED


def note(ocs="O1", port="Rx_1", kind=DET, dbm=5.9, ts=None):
    return Notification(ocs, port, kind, dbm, time.time() if ts is None else ts)


class Recorder:
    def __init__(self, delay=0.0, fail=None):
        self.calls = []
        self.delay = delay
        self.fail = fail

    async def __call__(self, action, mode, n):
        self.calls.append((action.act_id, mode, n.port))
        await asyncio.sleep(self.delay)
        if self.fail:
            raise self.fail


@pytest.fixture
async def manager():
    run = Recorder()
    paths = {("O3", "Rx_2"): "svc1"}
    m = EventAlarmManager(run, lambda ocs, port: paths.get((ocs, port)))
    m.run = run
    await m.start()
    yield m
    await m.stop()


def add(m, event_id="E1", etype=EventType.SIGNAL_DETECTION, ocs="O1", port="Rx_1", act="A1", svc="S1"):
    m.add_event(EventSpec(event_id, etype, ocs, port, -1.0))
    if act not in m.actions:
        m.create_action(ActionSpec(act, svc, "A", "Z"))
    m.create_event_handler(event_id, act)


def test_registry_rules():
    m = EventAlarmManager(Recorder(), lambda *a: None)
    m.add_event(EventSpec("E1", EventType.SIGNAL_DETECTION, "O1", "Rx_1", -1.0))
    with pytest.raises(AlreadyExist):
        m.add_event(EventSpec("E1", EventType.SIGNAL_DEGRADATION, "O1", "Rx_2", -1.0))
    with pytest.raises(AlreadyExist):
        m.add_event(EventSpec("E2", EventType.SIGNAL_DETECTION, "O1", "Rx_1", 0.0))
    m.add_event(EventSpec("E3", EventType.SIGNAL_DEGRADATION, "O1", "Rx_1", -10.0))
    with pytest.raises(NotFound):
        m.create_event_handler("E1", "A1")
    m.create_action(ActionSpec("A1", "S1", "A", "Z"))
    with pytest.raises(AlreadyExist):
        m.create_action(ActionSpec("A1", "S2", "A", "Z"))
    with pytest.raises(NotFound):
        m.create_event_handler("nope", "A1")
    m.create_event_handler("E1", "A1")
    with pytest.raises(AlreadyExist):
        m.create_event_handler("E1", "A1")
    m.create_alarm_handler("S9", "A1")
    with pytest.raises(NotFound):
        m.delete_action("A1", "S2")
    assert len(m.delete_action("A1", "S1")) == 2
    assert m.handlers == {}
    with pytest.raises(NotFound):
        m.delete_action("A1", "S1")


async def test_detection_runs_create(manager):
    add(manager)
    manager.ingest(note())
    await manager.journal.wait_for(1, 2.0)
    assert manager.run.calls == [("A1", "create", "Rx_1")]
    rec = manager.journal.records[0]
    assert (rec.trigger, rec.act_id, rec.svc_id, rec.outcome) == ("event:E1", "A1", "S1", "ok")


async def test_degradation_and_path_alarm_run_restore(manager):
    add(manager, "E2", EventType.SIGNAL_DEGRADATION, "O3", "Rx_2", act="A2", svc="svc1")
    manager.create_action(ActionSpec("A3", "svc1", "A", "Z"))
    manager.create_alarm_handler("svc1", "A3")
    manager.ingest(note("O3", "Rx_2", DEG, -20.0))
    await manager.idle(2.0)
    # both handlers want svc1; the second is coalesced into the first
    assert [c[1] for c in manager.run.calls] == ["restore"]
    assert manager.stats["coalesced"] == 1


async def test_unmatched_notifications_are_counted_as_dropped(manager):
    manager.ingest(note("O9"))
    manager.ingest(note(kind=DEG))
    await manager.idle(1.0)
    assert manager.stats == {"received": 2, "dispatched": 0, "dropped": 2, "coalesced": 0}


async def test_alarm_handler_ignores_detection(manager):
    manager.create_action(ActionSpec("A3", "svc1", "A", "Z"))
    manager.create_alarm_handler("svc1", "A3")
    manager.ingest(note("O3", "Rx_2", DET))
    await manager.idle(1.0)
    assert manager.run.calls == []


async def test_storm_on_one_trigger_coalesces():
    run = Recorder(delay=0.1)
    m = EventAlarmManager(run, lambda *a: None)
    await m.start()
    try:
        add(m)
        for _ in range(5):
            m.ingest(note())
        await m.idle(2.0)
        assert len(run.calls) == 1
        assert m.stats["coalesced"] == 4
        m.ingest(note())
        await m.idle(2.0)
        assert len(run.calls) == 2
    finally:
        await m.stop()


async def test_independent_triggers_run_concurrently():
    run = Recorder(delay=0.2)
    m = EventAlarmManager(run, lambda *a: None)
    await m.start()
    try:
        for i in range(20):
            add(m, f"E{i}", port=f"Rx_{i}", act=f"A{i}", svc=f"S{i}")
        t0 = time.monotonic()
        for i in range(20):
            m.ingest(note(port=f"Rx_{i}"))
        await m.journal.wait_for(20, 5.0)
        assert time.monotonic() - t0 < 1.0
    finally:
        await m.stop()


async def test_failed_action_is_journaled_with_its_code(tmp_path):
    journal = ActionJournal(tmp_path / "actions.jsonl")
    m = EventAlarmManager(Recorder(fail=BlockingOccured("no route")), lambda *a: None, journal)
    await m.start()
    try:
        add(m)
        m.ingest(note(ts=time.time() - 0.5))
        rec = (await journal.wait_for(1, 2.0))[0]
        assert rec.outcome == "BlockingOccured"
        assert rec.elapsed_s >= 0.5
        line = json.loads((tmp_path / "actions.jsonl").read_text())
        assert set(line) == {"ts", "trigger", "act_id", "svc_id", "outcome", "elapsed_s"}
    finally:
        await m.stop()


async def test_journal_wait_times_out():
    with pytest.raises(asyncio.TimeoutError):
        await ActionJournal().wait_for(1, 0.05)

import json

import pytest

from ocsctl.controller import REPORT_FILE, STATE_FILE, Controller
from ocsctl.emulator import FaultMode
from ocsctl.errors import PathOperFailed
from ocsctl.persistence import PathLog, PathVerdict, StorageError
from ocsctl.scenarios import bed, testbed_topology as base_topology


def test_replay_gives_latest_body(tmp_path):
    log = PathLog(tmp_path / "s.jsonl", fsync=False)
    log.put("PATH", "p1", {"v": 1})
    log.put("PATH", "p1", {"v": 2})
    log.put("PATH", "p2", {"v": 3})
    log.delete("PATH", "p2")
    log.close()
    again = PathLog(tmp_path / "s.jsonl")
    assert again.live == {("PATH", "p1"): {"v": 2}}
    assert again.seq == 4


def test_torn_last_line_is_skipped(tmp_path):
    path = tmp_path / "s.jsonl"
    log = PathLog(path)
    log.put("EVENT", "e", {"x": 1})
    log.close()
    with path.open("a") as fh:
        fh.write('{"seq": 2, "kind": "EV')
    assert PathLog(path).live == {("EVENT", "e"): {"x": 1}}


def test_compaction_keeps_only_live_records(tmp_path):
    log = PathLog(tmp_path / "s.jsonl", fsync=False, compact_every=5)
    for i in range(4):
        log.put("PATH", "p", {"v": i})
    log.put("ACTION", "a", {"v": 0})  # fifth append triggers compaction
    recs = list(log.records())
    assert [(r["kind"], r["key"], r["body"]) for r in recs] == [("PATH", "p", {"v": 3}), ("ACTION", "a", {"v": 0})]
    log.put("PATH", "q", {"v": 9})
    log.close()
    assert PathLog(tmp_path / "s.jsonl").live[("PATH", "q")] == {"v": 9}


def test_bodies_put_switches_before_links(tmp_path):
    log = PathLog(tmp_path / "s.jsonl", fsync=False)
    log.put("RESOURCE", "a-link", {"type": "link"})
    log.put("RESOURCE", "z-switch", {"type": "switch"})
    log.put("RESOURCE", "m-term", {"type": "terminal"})
    assert [b["type"] for b in log.bodies("RESOURCE")] == ["switch", "terminal", "link"]


def test_bad_records_are_refused(tmp_path):
    log = PathLog(tmp_path / "s.jsonl")
    with pytest.raises(ValueError):
        log.append("NOPE", "put", "k", {})
    with pytest.raises(ValueError):
        log.append("PATH", "upsert", "k", {})


def test_write_failure_raises_storage_error(tmp_path, monkeypatch):
    log = PathLog(tmp_path / "s.jsonl")

    def broken():
        raise OSError("disk full")
    monkeypatch.setattr(log, "_handle", broken)
    with pytest.raises(StorageError):
        log.put("PATH", "p", {})
    assert log.live == {} and log.seq == 0


async def test_storage_failure_reverts_the_devices(tmp_path):
    async with bed(base_topology(), state_dir=tmp_path) as b:
        def refuse(*a, **kw):
            raise StorageError("disk full")
        b.controller.log.append = refuse
        with pytest.raises(PathOperFailed):
            await b.call("CreateFiberPath", svc_id="s", a="A", z="Z")
        assert all(s == {"connections": []} for s in b.fleet.snapshot().values())
        assert not b.controller.store.has_svc("s")


async def test_restart_restores_state_and_reports(tmp_path):
    async with bed(base_topology(), state_dir=tmp_path) as b:
        await b.call("CreateFiberPath", svc_id="s", a="A", z="Z")
        await b.call("AddEvent", event_id="e", event_type="signal_detection", ocs="OCS1", port="Rx_1", threshold=-1)
        await b.call("CreateAction", act_id="act", svc_id="s2", a="A", z="Z")
        await b.call("CreateEventHandler", event_id="e", act_id="act")
        hops = b.controller.store.paths["s"].hops
        await b.controller.stop()
        second = Controller(tmp_path, fsync=False)
        await second.start()
        try:
            assert second.store.paths["s"].hops == hops
            assert second.reconcile_report.paths == {"s": PathVerdict.CONSISTENT}
            assert set(second.events.handlers) == set(b.controller.events.handlers)
            report = json.loads((tmp_path / REPORT_FILE).read_text())
            assert report["paths"] == {"s": "CONSISTENT"} and report["orphans"] == []
        finally:
            await second.stop()


async def test_unreachable_switch_quarantines_its_paths(tmp_path):
    async with bed(base_topology(), state_dir=tmp_path) as b:
        await b.call("CreateFiberPath", svc_id="s", a="A", z="Z", ocs_list=["OCS1", "OCS3", "OCS5"])
        await b.controller.stop()
        await b.fleet.set_fault("OCS3", FaultMode.SERVER_DOWN)
        second = Controller(tmp_path, fsync=False, sbi_timeout=1.0)
        await second.start()
        try:
            report = second.reconcile_report
            assert report.paths == {"s": PathVerdict.QUARANTINED}
            assert report.unreachable == ["OCS3"]
            assert "OCS3" in report.marked_unavailable
            assert second.store.nodes["OCS3"].status.value == "UNAVAILABLE"
        finally:
            await second.stop()
        assert (tmp_path / STATE_FILE).exists()

import asyncio
import json

import pytest

from ocsctl.controller import METHODS, Controller
from ocsctl.errors import NotFound
from ocsctl.nbi import AsyncNbiClient, NbiServer


@pytest.fixture
async def server():
    controller = Controller()
    await controller.start()
    srv = NbiServer(controller)
    await srv.start()
    yield srv
    await srv.stop()
    await controller.stop()


def test_fourteen_methods():
    assert len(METHODS) == 14


@pytest.mark.parametrize("line, rid", [
    (b"not json", None),
    (b"[1, 2]", None),
    (json.dumps({"id": 4, "method": "Frobnicate"}), 4),
    (json.dumps({"id": 5, "method": "DeleteFiberPath", "params": [1]}), 5),
    (json.dumps({"id": 6, "method": "DeleteFiberPath", "params": {}}), 6),
    (json.dumps({"id": 7, "method": "DeleteFiberPath", "params": {"svc_id": "s", "extra": 1}}), 7),
])
async def test_bad_requests_are_invalid_range(server, line, rid):
    reply = await server.handle_line(line)
    assert reply["id"] == rid and reply["error"]["code"] == "InvalidRange"


async def test_internal_errors_become_path_oper_failed(server, monkeypatch):
    async def boom(svc_id):
        raise KeyError("bug")
    monkeypatch.setattr(server.controller, "delete_fiber_path", boom)
    reply = await server.handle_line(json.dumps({"id": 1, "method": "DeleteFiberPath", "params": {"svc_id": "s"}}))
    assert reply["error"]["code"] == "PathOperFailed"


async def test_errors_travel_as_typed_exceptions(server):
    client = await AsyncNbiClient(*server.address).connect()
    try:
        with pytest.raises(NotFound):
            await client.call("DeleteFiberPath", svc_id="nope")
    finally:
        await client.close()


async def test_interleaved_requests_get_their_own_replies(server, monkeypatch):
    async def slow(svc_id):
        await asyncio.sleep(0.2 if svc_id == "slow" else 0.0)
        return {"svc_id": svc_id}
    monkeypatch.setattr(server.controller, "delete_fiber_path", slow)
    clients = [await AsyncNbiClient(*server.address).connect() for _ in range(3)]
    try:
        names = ["slow", "a", "b", "c", "d"]
        calls = [clients[i % 3].call("DeleteFiberPath", svc_id=n) for i, n in enumerate(names)]
        results = await asyncio.gather(*calls)
        assert [r["svc_id"] for r in results] == names
    finally:
        for c in clients:
            await c.close()


async def test_blank_lines_are_ignored(server):
    reader, writer = await asyncio.open_connection(*server.address)
    writer.write(b"\n\n" + json.dumps({"id": 9, "method": "DeleteFiberPath", "params": {"svc_id": "x"}}).encode()
                 + b"\n")
    reply = json.loads(await asyncio.wait_for(reader.readline(), 2.0))
    assert reply["id"] == 9 and reply["error"]["code"] == "NotFound"
    writer.close()

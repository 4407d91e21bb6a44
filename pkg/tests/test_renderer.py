import asyncio

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ocsctl.errors import PathOperFailed, RpcError, SessionClosed
from ocsctl.model import InternalConnection
from ocsctl.renderer import AtomicCommand, OcsCommand, OcsRenderer, Outcome, SanityCheckFailed, sanity_check
from ocsctl.sbi.protocol import DeviceState


class FakeDevice:
    """In-memory stand-in for a DeviceClient."""

    def __init__(self, device_id, fail_edits=0, lie=False, delay=0.0, down=False):
        self.device_id = device_id
        self.table: dict[str, InternalConnection] = {}
        self.fail_edits = fail_edits
        self.lie = lie
        self.delay = delay
        self.down = down
        self.edits = 0

    async def edit_config(self, payload, timeout=None):
        self.edits += 1
        if self.down:
            raise SessionClosed(f"{self.device_id}: down")
        await asyncio.sleep(self.delay)
        if self.fail_edits:
            self.fail_edits -= 1
            raise RpcError("refused")
        if self.lie:
            return
        for name in payload.delete:
            self.table.pop(name)
        for c in payload.create:
            self.table[c.name] = c

    async def get_state(self, timeout=None):
        if self.down:
            raise SessionClosed(f"{self.device_id}: down")
        return DeviceState(list(self.table.values()))


def conn(name, i=1):
    return InternalConnection(name, f"Rx_{i}", f"Tx_{i}")


def command(devices, delete=None):
    delete = delete or {}
    return AtomicCommand.of({o: ((conn(f"{o}-new"),), delete.get(o, ())) for o in devices})


async def test_all_succeed():
    devices = {o: FakeDevice(o) for o in ("a", "b", "c")}
    renderer = OcsRenderer(devices.__getitem__)
    cmd = command(devices)
    report = await renderer.execute_atomic(cmd)
    assert report.failed == () and report.rollback_s is None
    assert all(c.outcome is Outcome.SUCCEEDED for c in cmd.commands)
    assert all(set(d.table) == {f"{o}-new"} for o, d in devices.items())
    with pytest.raises(RuntimeError):
        await renderer.execute_atomic(cmd)


async def test_failure_reverts_only_the_succeeded():
    devices = {"a": FakeDevice("a"), "b": FakeDevice("b", fail_edits=1), "c": FakeDevice("c")}
    marked = []
    renderer = OcsRenderer(devices.__getitem__, marked.append)
    cmd = command(devices)
    with pytest.raises(PathOperFailed) as info:
        await renderer.execute_atomic(cmd)
    assert info.value.failed == ("b",) and info.value.revert_failed == ()
    assert info.value.rollback_s is not None
    assert [c.outcome for c in cmd.commands] == [Outcome.REVERTED, Outcome.FAILED, Outcome.REVERTED]
    assert all(d.table == {} for d in devices.values())
    assert devices["b"].edits == 1  # no revert sent to the failed device
    assert marked == ["b"]


async def test_revert_failure_marks_the_device():
    devices = {"a": FakeDevice("a", fail_edits=0), "b": FakeDevice("b", fail_edits=1)}
    devices["a"].fail_edits = 0
    renderer = OcsRenderer(devices.__getitem__, lambda o: marked.append(o))
    marked = []
    cmd = command(devices)

    orig = devices["a"].edit_config

    async def flaky(payload, timeout=None):
        if payload.delete:
            raise RpcError("revert refused")
        await orig(payload, timeout)

    devices["a"].edit_config = flaky
    with pytest.raises(PathOperFailed) as info:
        await renderer.execute_atomic(cmd)
    assert info.value.revert_failed == ("a",)
    assert sorted(marked) == ["a", "b"]


async def test_lying_device_fails_the_sanity_check():
    devices = {"a": FakeDevice("a"), "b": FakeDevice("b", lie=True)}
    renderer = OcsRenderer(devices.__getitem__)
    cmd = command(devices)
    with pytest.raises(PathOperFailed):
        await renderer.execute_atomic(cmd)
    assert "mismatch" in cmd.commands[1].error
    assert devices["a"].table == {}


async def test_rollback_waits_for_every_command_to_settle():
    # the slow device must finish before reverts start, so its change is undone too
    devices = {"fast": FakeDevice("fast", fail_edits=1), "slow": FakeDevice("slow", delay=0.2)}
    renderer = OcsRenderer(devices.__getitem__)
    with pytest.raises(PathOperFailed):
        await renderer.execute_atomic(command(devices))
    assert devices["slow"].table == {}


async def test_deadline_turns_a_hang_into_failure():
    devices = {"a": FakeDevice("a"), "b": FakeDevice("b", delay=5.0)}
    renderer = OcsRenderer(devices.__getitem__)
    cmd = command(devices)
    cmd.deadline = 0.2
    with pytest.raises(PathOperFailed) as info:
        await renderer.execute_atomic(cmd)
    assert info.value.failed == ("b",)


async def test_delete_revert_recreates_the_connection():
    devices = {"a": FakeDevice("a"), "b": FakeDevice("b", down=True)}
    old = conn("old", 2)
    devices["a"].table["old"] = old
    renderer = OcsRenderer(devices.__getitem__)
    cmd = AtomicCommand.of({"a": ((), (old,)), "b": ((), ())})
    with pytest.raises(PathOperFailed):
        await renderer.execute_atomic(cmd)
    assert devices["a"].table == {"old": old}


def test_command_construction_rules():
    with pytest.raises(ValueError):
        AtomicCommand([OcsCommand.change("a"), OcsCommand.change("a")])
    c = OcsCommand.change("a", create=[conn("n")], delete=[conn("o", 2)])
    assert c.forward.delete == ("o",) and c.revert_payload.create == (conn("o", 2),)
    assert c.revert_payload.delete == ("n",)
    c.outcome = Outcome.FAILED
    with pytest.raises(RuntimeError):
        c._transition(Outcome.REVERTED)


async def test_sanity_check_directly():
    dev = FakeDevice("a")
    dev.table["x"] = conn("x")
    await sanity_check(dev, create=[conn("x")], delete=["y"])
    with pytest.raises(SanityCheckFailed):
        await sanity_check(dev, create=[conn("z")])
    with pytest.raises(SanityCheckFailed):
        await sanity_check(dev, delete=["x"])


@settings(max_examples=64, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=6))
async def test_outcome_is_all_or_nothing(failures):
    devices = {f"o{i}": FakeDevice(f"o{i}", down=f) for i, f in enumerate(failures)}
    for d in devices.values():
        d.table["keep"] = conn("keep", 3)
    before = {o: dict(d.table) for o, d in devices.items()}
    renderer = OcsRenderer(devices.__getitem__)
    try:
        await renderer.execute_atomic(command(devices))
        ok = True
    except PathOperFailed:
        ok = False
    after = {o: dict(d.table) for o, d in devices.items()}
    if ok:
        assert not any(failures)
        assert all(set(t) == {"keep", f"{o}-new"} for o, t in after.items())
    else:
        assert any(failures) and after == before

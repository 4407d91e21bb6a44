import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ocsctl.emulator import PROTOCOLS, OcsDevice, _Conn
from ocsctl.errors import RpcError
from ocsctl.model import InternalConnection, NotificationKind
from ocsctl.sbi.vendors import UnifiedEdit, converter_for

PORTS = 6
TX = [f"Tx_{i}" for i in range(1, PORTS + 1)]
RX = [f"Rx_{i}" for i in range(1, PORTS + 1)]


# frozen translations: what each vendor sees for one create+delete edit
GOLDEN = {
    "A": ["MON Rx_1 ON 1550", "ALARM Rx_1 HI -1", "BEGIN", "XC DEL old", "XC ADD s1-fwd Rx_1 Tx_2", "COMMIT"],
    "B": ['{"op":"monitor","port":"Rx_1","enabled":true,"wavelength":1550}',
          '{"op":"alarm","port":"Rx_1","hi":-1.0}',
          '{"op":"begin"}', '{"op":"disconnect","label":"old"}',
          '{"op":"connect","label":"s1-fwd","in":"Rx_1","out":"Tx_2"}', '{"op":"commit"}'],
    "C": ["SET /monitor/Rx_1 enabled=true wl=1550", "SET /alarm/Rx_1 hi=-1", "POST /tx/begin", "DEL /xc/old",
          "SET /xc/s1-fwd rx=Rx_1 tx=Tx_2", "POST /tx/commit"],
}


@pytest.mark.parametrize("vendor", "ABC")
def test_golden_translation(vendor):
    edit = UnifiedEdit.from_payload({
        "create": [{"name": "s1-fwd", "rx": "Rx_1", "tx": "Tx_2"}],
        "delete": ["old"],
        "monitor": [{"port": "Rx_1", "enabled": True, "wavelength": 1550}],
        "alarm": [{"port": "Rx_1", "high": -1.0}],
    })
    assert converter_for(vendor).edit_lines(edit) == GOLDEN[vendor]


def test_payload_validation():
    with pytest.raises(RpcError):
        UnifiedEdit.from_payload({"bogus": []})
    with pytest.raises(RpcError):
        UnifiedEdit.from_payload({"create": [{"name": "x", "rx": "Rx_1"}]})
    with pytest.raises(RpcError):
        UnifiedEdit.from_payload({"create": [{"name": "a b", "rx": "Rx_1", "tx": "Tx_1"}]})
    with pytest.raises(RpcError):
        UnifiedEdit.from_payload({"alarm": [{"high": 1.0}]})
    with pytest.raises(ValueError):
        converter_for("D")


async def run_lines(vendor, device, lines):
    proto, conv, conn = PROTOCOLS[vendor](device), converter_for(vendor), _Conn()
    units = []
    for line in lines:
        for reply in await proto.handle(line, conn):
            kind, unit = conv.feed(reply)
            if kind == "reply":
                units.append(unit)
    return units


def reference_apply(table: dict, edit: UnifiedEdit) -> dict | None:
    """Expected table after the edit, or None if the device must refuse it."""
    table = dict(table)
    for name in edit.delete:
        if name not in table:
            return None
        del table[name]
    for c in edit.create:
        if c.name in table or any(c.rx_port == rx or c.tx_port == tx for rx, tx in table.values()):
            return None
        table[c.name] = (c.rx_port, c.tx_port)
    return table


names = st.sampled_from(["c0", "c1", "c2", "c3", "svc-9-fwd", "x.y_z"])
conns = st.builds(InternalConnection, names, st.sampled_from(RX), st.sampled_from(TX))


@settings(max_examples=120, deadline=None)
@given(vendor=st.sampled_from("ABC"),
       existing=st.lists(st.tuples(st.sampled_from(RX), st.sampled_from(TX)), max_size=3),
       create=st.lists(conns, max_size=4), delete=st.lists(names, max_size=2, unique=True))
async def test_round_trip_matches_reference(vendor, existing, create, delete):
    device = OcsDevice("O", TX, RX)
    for i, (rx, tx) in enumerate(existing):
        if not any(rx == r or tx == t for r, t in device.connections.values()):
            device.connections[f"c{i}"] = (rx, tx)
    before = dict(device.connections)
    edit = UnifiedEdit(create=create, delete=delete)
    want = reference_apply(before, edit)
    units = await run_lines(vendor, device, converter_for(vendor).edit_lines(edit))
    if want is None:
        assert device.connections == before
        assert not units[-1].ok
    else:
        assert device.connections == want
        assert all(u.ok for u in units)
    # listing through the vendor grammar returns the device table
    conv = converter_for(vendor)
    listed = await run_lines(vendor, device, conv.list_lines())
    parsed = {c.name: (c.rx_port, c.tx_port) for c in conv.parse_list(listed[0])}
    assert parsed == device.connections


@settings(max_examples=60, deadline=None)
@given(vendor=st.sampled_from("ABC"), port=st.sampled_from(RX),
       high=st.one_of(st.none(), st.floats(-60, 20).map(lambda v: round(v, 2))),
       low=st.one_of(st.none(), st.floats(-60, 20).map(lambda v: round(v, 2))),
       wavelength=st.one_of(st.none(), st.sampled_from([1310.0, 1550.12])))
async def test_monitor_and_alarm_round_trip(vendor, port, high, low, wavelength):
    device = OcsDevice("O", TX, RX)
    edit = UnifiedEdit(monitor=[{"port": port, "enabled": True, "wavelength": wavelength}],
                       alarm=[{"port": port, "high": high, "low": low}])
    units = await run_lines(vendor, device, converter_for(vendor).edit_lines(edit))
    assert all(u.ok for u in units)
    assert device.monitors[port] == {"enabled": True, "wavelength": wavelength}
    if high is not None or low is not None:
        assert device.alarms[port] == {"high": high, "low": low}


@pytest.mark.parametrize("vendor", "ABC")
@pytest.mark.parametrize("level, kind", [("hi", NotificationKind.SIGNAL_DETECTED),
                                         ("lo", NotificationKind.SIGNAL_DEGRADED)])
def test_event_lines_parse_back(vendor, level, kind):
    line = PROTOCOLS[vendor](OcsDevice("O", TX, RX)).event_line("Rx_3", level, -12.5)
    assert converter_for(vendor).feed(line) == ("event", ("Rx_3", kind, -12.5))


@pytest.mark.parametrize("vendor", "ABC")
async def test_power_read_round_trip(vendor):
    device = OcsDevice("O", TX, RX)
    conv = converter_for(vendor)
    units = await run_lines(vendor, device, conv.power_lines("Rx_2"))
    assert not units[0].ok  # monitor is off
    device.set_monitor("Rx_2", True)
    device.set_power("Rx_2", 3.25)
    units = await run_lines(vendor, device, conv.power_lines("Rx_2"))
    assert conv.parse_power(units[0]) == 3.25


@pytest.mark.parametrize("vendor", "ABC")
async def test_failed_transaction_applies_nothing(vendor):
    device = OcsDevice("O", TX, RX)
    edit = UnifiedEdit(create=[InternalConnection("a", "Rx_1", "Tx_1"), InternalConnection("b", "Rx_1", "Tx_2")])
    units = await run_lines(vendor, device, converter_for(vendor).edit_lines(edit))
    assert not units[-1].ok
    assert device.connections == {}


@pytest.mark.parametrize("vendor, line", [("A", "FROB"), ("B", "{not json"), ("B", '{"op":"frob"}'),
                                          ("C", "PATCH /xc"), ("A", "COMMIT"), ("C", "POST /tx/commit")])
async def test_garbage_gets_an_error_reply(vendor, line):
    units = await run_lines(vendor, OcsDevice("O", TX, RX), [line])
    assert len(units) == 1 and not units[0].ok

"""Fiber-layer domain types."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import InvalidRange

# representable alarm-threshold range, dBm
THRESHOLD_MIN_DBM = -99.0
THRESHOLD_MAX_DBM = 30.0
# power reported by a port that carries no light
DARK_DBM = -99.0


class ResourceStatus(str, enum.Enum):
    AVAILABLE = "AVAILABLE"
    UNAVAILABLE = "UNAVAILABLE"

    @classmethod
    def parse(cls, value) -> "ResourceStatus":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise InvalidRange(f"unknown status {value!r}") from None


def check_label(value, what: str) -> str:
    if not isinstance(value, str) or not value or any(c.isspace() for c in value):
        raise InvalidRange(f"{what} must be a non-empty string without whitespace, got {value!r}")
    return value


@dataclass(frozen=True)
class ConnInfo:
    host: str
    port: int

    def __post_init__(self):
        if not isinstance(self.host, str) or not self.host:
            raise InvalidRange("conn_info.host must be non-empty")
        if isinstance(self.port, bool) or not isinstance(self.port, int) or not 1 <= self.port <= 65535:
            raise InvalidRange(f"conn_info.port out of range: {self.port!r}")

    @classmethod
    def from_dict(cls, d) -> "ConnInfo":
        if not isinstance(d, dict) or "host" not in d or "port" not in d:
            raise InvalidRange("conn_info needs host and port")
        return cls(d["host"], d["port"])

    def to_dict(self) -> dict:
        return {"host": self.host, "port": self.port}


@dataclass
class OcsNode:
    id: str
    conn: ConnInfo
    tx_ports: frozenset[str]
    rx_ports: frozenset[str]
    status: ResourceStatus = ResourceStatus.AVAILABLE

    def __post_init__(self):
        check_label(self.id, "ocs_id")
        self.tx_ports = frozenset(check_label(p, "port") for p in self.tx_ports)
        self.rx_ports = frozenset(check_label(p, "port") for p in self.rx_ports)
        if not self.tx_ports or not self.rx_ports:
            raise InvalidRange(f"{self.id}: tx_ports and rx_ports must be non-empty")
        both = self.tx_ports & self.rx_ports
        if both:
            raise InvalidRange(f"{self.id}: ports {sorted(both)} are declared both Tx and Rx")

    @property
    def ports(self) -> frozenset[str]:
        return self.tx_ports | self.rx_ports

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "host": self.conn.host,
            "port": self.conn.port,
            "tx_ports": sorted(self.tx_ports),
            "rx_ports": sorted(self.rx_ports),
            "status": self.status.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OcsNode":
        for key in ("tx_ports", "rx_ports"):
            if not isinstance(d.get(key), (list, tuple, set, frozenset)):
                raise InvalidRange(f"{key} must be a list of port labels")
        return cls(
            id=d["id"],
            conn=ConnInfo(d["host"], d["port"]),
            tx_ports=frozenset(d["tx_ports"]),
            rx_ports=frozenset(d["rx_ports"]),
            status=ResourceStatus.parse(d.get("status", "AVAILABLE")),
        )


@dataclass
class Terminal:
    id: str
    conn: ConnInfo
    status: ResourceStatus = ResourceStatus.AVAILABLE

    def __post_init__(self):
        check_label(self.id, "terminal_id")

    def to_dict(self) -> dict:
        return {"id": self.id, "host": self.conn.host, "port": self.conn.port, "status": self.status.value}

    @classmethod
    def from_dict(cls, d: dict) -> "Terminal":
        return cls(d["id"], ConnInfo(d["host"], d["port"]), ResourceStatus.parse(d.get("status", "AVAILABLE")))


@dataclass
class FiberLink:
    """One unidirectional strand, Tx port of ``src`` to Rx port of ``dst``."""

    id: str
    src: str
    dst: str
    src_port: str
    dst_port: str
    status: ResourceStatus = ResourceStatus.AVAILABLE

    def __post_init__(self):
        for value, what in ((self.id, "link_id"), (self.src, "src"), (self.dst, "dst"),
                            (self.src_port, "src_port"), (self.dst_port, "dst_port")):
            check_label(value, what)
        if self.src == self.dst:
            raise InvalidRange(f"link {self.id}: src and dst are both {self.src}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "src": self.src,
            "dst": self.dst,
            "src_port": self.src_port,
            "dst_port": self.dst_port,
            "status": self.status.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FiberLink":
        return cls(d["id"], d["src"], d["dst"], d["src_port"], d["dst_port"],
                   ResourceStatus.parse(d.get("status", "AVAILABLE")))


@dataclass(frozen=True, order=True)
class InternalConnection:
    name: str
    rx_port: str
    tx_port: str

    def to_dict(self) -> dict:
        return {"name": self.name, "rx": self.rx_port, "tx": self.tx_port}

    @classmethod
    def from_dict(cls, d: dict) -> "InternalConnection":
        return cls(d["name"], d["rx"], d["tx"])


@dataclass(frozen=True)
class ConfigPayload:
    """Everything one path operation changes on one OCS."""

    ocs_id: str
    create: tuple[InternalConnection, ...] = ()
    delete: tuple[str, ...] = ()

    def to_wire(self) -> dict:
        body: dict = {}
        if self.create:
            body["create"] = [c.to_dict() for c in self.create]
        if self.delete:
            body["delete"] = list(self.delete)
        return body

    @property
    def empty(self) -> bool:
        return not self.create and not self.delete


@dataclass
class FiberPath:
    svc_id: str
    a: str
    z: str
    hops: tuple[str, ...]
    per_ocs_configs: dict[str, tuple[InternalConnection, ...]]
    links: tuple[str, ...]
    status: ResourceStatus = ResourceStatus.AVAILABLE
    pce_alg: str | None = None
    ocs_list: tuple[str, ...] | None = None

    def connections(self) -> list[tuple[str, InternalConnection]]:
        return [(ocs, c) for ocs in self.hops for c in self.per_ocs_configs[ocs]]

    def summary(self) -> dict:
        return {
            "svc_id": self.svc_id,
            "a": self.a,
            "z": self.z,
            "hops": list(self.hops),
            "links": list(self.links),
            "status": self.status.value,
        }

    def to_dict(self) -> dict:
        d = self.summary()
        d["per_ocs_configs"] = {
            ocs: [c.to_dict() for c in conns] for ocs, conns in sorted(self.per_ocs_configs.items())
        }
        d["pce_alg"] = self.pce_alg
        d["ocs_list"] = list(self.ocs_list) if self.ocs_list is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FiberPath":
        return cls(
            svc_id=d["svc_id"],
            a=d["a"],
            z=d["z"],
            hops=tuple(d["hops"]),
            per_ocs_configs={
                ocs: tuple(InternalConnection.from_dict(c) for c in conns)
                for ocs, conns in d["per_ocs_configs"].items()
            },
            links=tuple(d["links"]),
            status=ResourceStatus.parse(d.get("status", "AVAILABLE")),
            pce_alg=d.get("pce_alg"),
            ocs_list=tuple(d["ocs_list"]) if d.get("ocs_list") is not None else None,
        )


class EventType(str, enum.Enum):
    SIGNAL_DETECTION = "signal_detection"
    SIGNAL_DEGRADATION = "signal_degradation"

    @classmethod
    def parse(cls, value) -> "EventType":
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidRange(f"unknown event_type {value!r}") from None


class NotificationKind(str, enum.Enum):
    SIGNAL_DETECTED = "SIGNAL_DETECTED"
    SIGNAL_DEGRADED = "SIGNAL_DEGRADED"


@dataclass(frozen=True)
class Notification:
    ocs_id: str
    port: str
    kind: NotificationKind
    measured_dbm: float
    timestamp: float


def check_threshold(value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidRange(f"threshold must be a number, got {value!r}")
    if not THRESHOLD_MIN_DBM <= value <= THRESHOLD_MAX_DBM:
        raise InvalidRange(
            f"threshold {value} dBm outside {THRESHOLD_MIN_DBM}..{THRESHOLD_MAX_DBM} dBm"
        )
    return float(value)


@dataclass
class EventSpec:
    event_id: str
    event_type: EventType
    ocs: str
    port: str
    threshold_dbm: float

    @property
    def kind(self) -> NotificationKind:
        if self.event_type is EventType.SIGNAL_DETECTION:
            return NotificationKind.SIGNAL_DETECTED
        return NotificationKind.SIGNAL_DEGRADED

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "event_type": self.event_type.value,
            "ocs": self.ocs,
            "port": self.port,
            "threshold": self.threshold_dbm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EventSpec":
        return cls(d["event_id"], EventType.parse(d["event_type"]), d["ocs"], d["port"], float(d["threshold"]))


@dataclass
class ActionSpec:
    act_id: str
    svc_id: str
    a: str
    z: str
    pce_alg: str | None = None
    ocs_list: tuple[str, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "act_id": self.act_id,
            "svc_id": self.svc_id,
            "a": self.a,
            "z": self.z,
            "pce_alg": self.pce_alg,
            "ocs_list": list(self.ocs_list) if self.ocs_list is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ActionSpec":
        ocs_list = d.get("ocs_list")
        return cls(d["act_id"], d["svc_id"], d["a"], d["z"], d.get("pce_alg"),
                   tuple(ocs_list) if ocs_list is not None else None)


@dataclass(frozen=True)
class HandlerBinding:
    """``kind`` is "event" (target = event_id) or "alarm" (target = svc_id)."""

    kind: str
    target: str
    act_id: str

    @property
    def key(self) -> str:
        return f"{self.kind}:{self.target}:{self.act_id}"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "target": self.target, "act_id": self.act_id}

    @classmethod
    def from_dict(cls, d: dict) -> "HandlerBinding":
        return cls(d["kind"], d["target"], d["act_id"])


@dataclass
class Topology:
    nodes: dict[str, OcsNode] = field(default_factory=dict)
    terminals: dict[str, Terminal] = field(default_factory=dict)
    links: dict[str, FiberLink] = field(default_factory=dict)

"""The controller: every northbound service, wired to the internal modules.

Path creation follows one sequence. Compute and allocate under the store
lock, render on the devices, commit, persist, then answer. A storage
failure after rendering reverts the devices before reporting
PathOperFailed. Kill points let tests stop the sequence as if the process
had died.
"""

from __future__ import annotations

import asyncio
import logging
import time
from pathlib import Path

from .errors import (AlreadyExist, ConnectionFailed, InvalidRange, NbiError, NotFound,
                     PathOperFailed, SbiError)
from .events import ActionJournal, EventAlarmManager
from .fpce import Fpce, PathRequest, path_from_route
from .model import (ActionSpec, ConnInfo, EventSpec, EventType, FiberLink, FiberPath, HandlerBinding,
                    Notification, OcsNode, ResourceStatus, Terminal, check_label, check_threshold)
from .persistence import PathLog, Policy, ReconcileReport, StorageError, reconcile
from .renderer import AtomicCommand, OcsRenderer
from .sbi.client import DEFAULT_TIMEOUT, DeviceClient
from .store import ResourceStore, parse_topology, split_port_id

log = logging.getLogger(__name__)

KILL_POINTS = ("before_config", "after_config", "after_persist")
REPORT_FILE = "reconcile-report.json"
STATE_FILE = "state.jsonl"
JOURNAL_FILE = "actions.jsonl"


class Crash(BaseException):
    """Raised at an armed kill point; nothing after it runs, as in a real crash."""


def _ocs_list(value) -> tuple[str, ...] | None:
    if value is None:
        return None
    if isinstance(value, str) or not isinstance(value, (list, tuple)):
        raise InvalidRange("ocs_list must be a list of OCS ids")
    if not value:
        raise InvalidRange("ocs_list must not be empty")
    return tuple(check_label(v, "ocs_list entry") for v in value)


def _ports(value, what: str) -> frozenset[str]:
    if isinstance(value, str) or not isinstance(value, (list, tuple, set, frozenset)):
        raise InvalidRange(f"{what} must be a list of port labels")
    if len(set(value)) != len(value):
        raise InvalidRange(f"{what} repeats a port")
    return frozenset(value)


class Controller:
    def __init__(self, state_dir: Path | str | None = None,
                 policy: Policy | str = Policy.MARK_UNAVAILABLE,
                 sbi_timeout: float = DEFAULT_TIMEOUT,
                 health_interval: float | None = None,
                 auto_restore_on_hello: bool = False,
                 fsync: bool = True):
        self.state_dir = Path(state_dir) if state_dir else None
        self.policy = Policy(policy)
        self.sbi_timeout = sbi_timeout
        self.health_interval = health_interval
        self.auto_restore_on_hello = auto_restore_on_hello
        self.store = ResourceStore()
        self.fpce = Fpce()
        self.clients: dict[str, DeviceClient] = {}
        self.renderer = OcsRenderer(self.client, self._mark_unavailable, sbi_timeout)
        journal = None
        self.log: PathLog | None = None
        if self.state_dir is not None:
            self.state_dir.mkdir(parents=True, exist_ok=True)
            journal = self.state_dir / JOURNAL_FILE
            self.log = PathLog(self.state_dir / STATE_FILE, fsync=fsync)
        self.events = EventAlarmManager(self._run_action, self.path_for_port, ActionJournal(journal))
        self.kill_points: set[str] = set()
        self.reconcile_report: ReconcileReport | None = None
        self._alarm_ports: dict[tuple[str, str], str] = {}
        self._svc_locks: dict[str, asyncio.Lock] = {}
        self._health_task: asyncio.Task | None = None
        self._health_marked: set[str] = set()
        self.started = False

    # -- lifecycle ----------------------------------------------------------

    async def start(self) -> None:
        if self.log is not None and self.log.live:
            await self._recover()
        await self.events.start()
        if self.health_interval:
            self._health_task = asyncio.get_running_loop().create_task(self._health_loop())
        self.started = True

    async def stop(self) -> None:
        if self._health_task is not None:
            self._health_task.cancel()
            try:
                await self._health_task
            except asyncio.CancelledError:
                pass
            self._health_task = None
        await self.events.stop()
        await asyncio.gather(*(c.close() for c in self.clients.values()))
        self.clients.clear()
        if self.log is not None:
            self.log.close()
        self.started = False

    async def __aenter__(self) -> "Controller":
        await self.start()
        return self

    async def __aexit__(self, *exc) -> None:
        await self.stop()

    async def _recover(self) -> None:
        bodies = self.log.bodies("RESOURCE")
        nodes = [OcsNode.from_dict(b) for b in bodies if b["type"] == "switch"]
        terminals = [Terminal.from_dict(b) for b in bodies if b["type"] == "terminal"]
        links = [FiberLink.from_dict(b) for b in bodies if b["type"] == "link"]
        ports = [(b["ocs"], b["port"], b["status"]) for b in bodies if b["type"] == "port"]
        paths = [FiberPath.from_dict(b) for b in self.log.bodies("PATH")]
        self.store.load(nodes, terminals, links, ports, paths)
        self.events.load(
            [EventSpec.from_dict(b) for b in self.log.bodies("EVENT")],
            [ActionSpec.from_dict(b) for b in self.log.bodies("ACTION")],
            [HandlerBinding.from_dict(b) for b in self.log.bodies("HANDLER")],
        )

        async def attach(device_id: str, conn: ConnInfo):
            client = DeviceClient(device_id, conn.host, conn.port, self.sbi_timeout)
            self.clients[device_id] = client
            try:
                await client.subscribe(self.events.ingest, self._session_lost, keep=True)
            except SbiError as exc:
                log.warning("recovery: %s not reachable yet: %s", device_id, exc)

        await asyncio.gather(*(attach(i, n.conn) for i, n in self.store.nodes.items()),
                             *(attach(i, t.conn) for i, t in self.store.terminals.items()))
        report = await reconcile(self.store, self.client, self.policy, self.sbi_timeout)
        for ocs in report.marked_unavailable:
            self._persist_resource(ocs)
        for svc_id, path in self.store.paths.items():
            self._persist("PATH", svc_id, path.to_dict())
            self._index_path(path)
        self.reconcile_report = report
        report.save(self.state_dir / REPORT_FILE)
        log.info("reconcile: %s", report.to_dict())

    # -- plumbing -----------------------------------------------------------

    def client(self, device_id: str) -> DeviceClient:
        client = self.clients.get(device_id)
        if client is None:
            res = self.store.nodes.get(device_id) or self.store.terminals.get(device_id)
            if res is None:
                raise NotFound(f"{device_id} is not registered")
            client = DeviceClient(device_id, res.conn.host, res.conn.port, self.sbi_timeout)
            self.clients[device_id] = client
        return client

    async def _open_client(self, device_id: str, conn: ConnInfo) -> DeviceClient:
        client = DeviceClient(device_id, conn.host, conn.port, self.sbi_timeout)
        try:
            if not await client.hello():
                raise ConnectionFailed(f"{device_id} at {conn.host}:{conn.port} could not be connected")
            await client.subscribe(self.events.ingest, self._session_lost)
        except (SbiError, ConnectionFailed) as exc:
            await client.close()
            if isinstance(exc, ConnectionFailed):
                raise
            raise ConnectionFailed(f"{device_id} at {conn.host}:{conn.port} could not be connected: {exc}") from None
        return client

    def _session_lost(self, device_id: str) -> None:
        log.warning("session to %s lost", device_id)

    def _kill(self, point: str) -> None:
        if point in self.kill_points:
            raise Crash(point)

    def _persist(self, kind: str, key: str, body: dict | None) -> None:
        if self.log is None:
            return
        if body is None:
            self.log.delete(kind, key)
        else:
            self.log.put(kind, key, body)

    def _persist_resource(self, object_id: str) -> None:
        s = self.store
        if object_id in s.nodes:
            self._persist("RESOURCE", object_id, {"type": "switch", **s.nodes[object_id].to_dict()})
        elif object_id in s.terminals:
            self._persist("RESOURCE", object_id, {"type": "terminal", **s.terminals[object_id].to_dict()})
        elif object_id in s.links:
            self._persist("RESOURCE", object_id, {"type": "link", **s.links[object_id].to_dict()})

    def _persist_port(self, ocs: str, port: str) -> None:
        status = self.store.port_status.get((ocs, port))
        body = None if status is None else {"type": "port", "ocs": ocs, "port": port, "status": status.value}
        self._persist("RESOURCE", f"port:{ocs}:{port}", body)

    def _mark_unavailable(self, ocs_id: str) -> None:
        if ocs_id in self.store.nodes:
            self.store.update_resource_status(ocs_id, "switch", ResourceStatus.UNAVAILABLE)
            try:
                self._persist_resource(ocs_id)
            except StorageError as exc:
                log.error("could not persist status of %s: %s", ocs_id, exc)

    def _svc_lock(self, svc_id: str) -> asyncio.Lock:
        return self._svc_locks.setdefault(svc_id, asyncio.Lock())

    def _index_path(self, path: FiberPath) -> None:
        for link_id in path.links:
            link = self.store.links.get(link_id)
            # only a switch ingress pins a fault to one strand; terminal LOS would
            # win the coalescing slot and restore onto the same broken strand
            if link is not None and link.dst in self.store.nodes:
                self._alarm_ports[(link.dst, link.dst_port)] = path.svc_id

    def _unindex_path(self, path: FiberPath) -> None:
        for key in [k for k, v in self._alarm_ports.items() if v == path.svc_id]:
            del self._alarm_ports[key]

    def path_for_port(self, node: str, port: str) -> str | None:
        return self._alarm_ports.get((node, port))

    # -- resource registration ---------------------------------------------

    async def add_switch(self, ocs_id, conn_info, tx_ports, rx_ports) -> dict:
        node = OcsNode(check_label(ocs_id, "ocs_id"), ConnInfo.from_dict(conn_info),
                       _ports(tx_ports, "tx_ports"), _ports(rx_ports, "rx_ports"))
        if self.store.resource_kind(node.id):
            raise AlreadyExist(f"resource {node.id} already exists")
        client = await self._open_client(node.id, node.conn)
        try:
            self.store.register_switch(node)
        except NbiError:
            await client.close()
            raise
        self.clients[node.id] = client
        self._persist_resource(node.id)
        return {"ocs_id": node.id, "status": node.status.value}

    async def add_terminal(self, terminal_id, conn_info) -> dict:
        term = Terminal(check_label(terminal_id, "terminal_id"), ConnInfo.from_dict(conn_info))
        if self.store.resource_kind(term.id):
            raise AlreadyExist(f"resource {term.id} already exists")
        client = await self._open_client(term.id, term.conn)
        try:
            self.store.register_terminal(term)
        except NbiError:
            await client.close()
            raise
        self.clients[term.id] = client
        self._persist_resource(term.id)
        return {"terminal_id": term.id, "status": term.status.value}

    async def add_link(self, link_id, src, dst, src_port, dst_port) -> dict:
        link = FiberLink(link_id, src, dst, src_port, dst_port)
        self.store.register_link(link)
        self._persist_resource(link.id)
        return {"link_id": link.id, "status": link.status.value}

    async def create_network(self, topology_file) -> dict:
        doc = parse_topology(topology_file)
        self.store.check_network(doc)
        devices = [(n.id, n.conn) for n in doc.switches] + [(t.id, t.conn) for t in doc.terminals]
        opened = await asyncio.gather(*(self._open_client(i, c) for i, c in devices), return_exceptions=True)
        failure = next((r for r in opened if isinstance(r, BaseException)), None)
        clients = [r for r in opened if isinstance(r, DeviceClient)]
        try:
            if failure is not None:
                raise failure
            self.store.create_network(doc)
        except BaseException:
            await asyncio.gather(*(c.close() for c in clients))
            raise
        for client in clients:
            self.clients[client.device_id] = client
        for obj in [*doc.switches, *doc.terminals, *doc.links]:
            self._persist_resource(obj.id)
        return {"switches": len(doc.switches), "terminals": len(doc.terminals), "links": len(doc.links)}

    async def update_resource_status(self, object_id, object_type, status) -> dict:
        status = ResourceStatus.parse(status)
        self.store.update_resource_status(object_id, object_type, status)
        if object_type == "port":
            self._persist_port(*split_port_id(object_id))
        else:
            self._persist_resource(object_id)
        return {"object_id": object_id, "object_type": object_type, "status": status.value}

    # -- fiber paths --------------------------------------------------------

    async def create_fiber_path(self, svc_id, a, z, pce_alg=None, ocs_list=None) -> dict:
        path = await self._create(svc_id, a, z, pce_alg, ocs_list)
        return path.summary()

    async def _create(self, svc_id, a, z, pce_alg=None, ocs_list=None) -> FiberPath:
        check_label(svc_id, "svc_id")
        forced = _ocs_list(ocs_list)
        alg = self.fpce.check_algorithm(pce_alg)
        store = self.store
        with store._lock:
            if store.has_svc(svc_id):
                raise AlreadyExist(f"path {svc_id} already exists")
            route = self.fpce.compute_path(PathRequest(a, z, alg, forced), store.topology_view())
            path = path_from_route(route, svc_id, pce_alg, forced)
            store.allocate_path_resources(path)
        try:
            self._kill("before_config")
            cmd = AtomicCommand.of({ocs: (conns, ()) for ocs, conns in path.per_ocs_configs.items()},
                                   self.sbi_timeout)
            await self.renderer.execute_atomic(cmd)
        except Crash:
            raise
        except BaseException:
            store.release_path_resources(svc_id)
            raise
        self._kill("after_config")
        store.commit_path(svc_id)
        try:
            self._persist("PATH", svc_id, path.to_dict())
        except StorageError as exc:
            undo = AtomicCommand.of({ocs: ((), conns) for ocs, conns in path.per_ocs_configs.items()},
                                    self.sbi_timeout)
            try:
                await self.renderer.execute_atomic(undo)
            finally:
                store.release_path_resources(svc_id)
            raise PathOperFailed(f"path {svc_id} could not be persisted: {exc}") from None
        self._kill("after_persist")
        self._index_path(path)
        return path

    async def _delete(self, svc_id: str) -> FiberPath:
        path = self.store.get_path(svc_id)
        cmd = AtomicCommand.of({ocs: ((), conns) for ocs, conns in path.per_ocs_configs.items()},
                               self.sbi_timeout)
        await self.renderer.execute_atomic(cmd)
        try:
            self._persist("PATH", svc_id, None)
        except StorageError as exc:
            redo = AtomicCommand.of({ocs: (conns, ()) for ocs, conns in path.per_ocs_configs.items()},
                                    self.sbi_timeout)
            await self.renderer.execute_atomic(redo)
            raise PathOperFailed(f"deletion of {svc_id} could not be persisted: {exc}") from None
        self.store.release_path_resources(svc_id)
        self._unindex_path(path)
        return path

    async def delete_fiber_path(self, svc_id) -> dict:
        async with self._svc_lock(svc_id):
            path = await self._delete(svc_id)
        return {"svc_id": path.svc_id, "deleted": True}

    async def restore_fiber_path(self, svc_id, a, z, pce_alg=None, ocs_list=None) -> dict:
        _ocs_list(ocs_list)
        self.fpce.check_algorithm(pce_alg)
        async with self._svc_lock(svc_id):
            old = self.store.get_path(svc_id)
            if (old.a, old.z) != (a, z):
                raise NotFound(f"path {svc_id} does not run between {a} and {z}")
            await self._delete(svc_id)
            # a blocked re-creation leaves the old path deleted
            path = await self._create(svc_id, a, z, pce_alg, ocs_list)
        summary = path.summary()
        summary["previous_hops"] = list(old.hops)
        return summary

    async def update_path_availability(self, svc_id, status) -> dict:
        status = ResourceStatus.parse(status)
        store = self.store
        with store.transaction():
            path = store.get_path(svc_id)
            path.status = status
            for ocs in path.hops:
                store.update_resource_status(ocs, "switch", status)
            for link_id in path.links:
                store.update_resource_status(link_id, "link", status)
            ports = set(store.path_ports(path))
            for ocs, conn in path.connections():
                ports |= {(ocs, conn.rx_port), (ocs, conn.tx_port)}
            for node, port in sorted(ports):
                store.update_resource_status(f"{node}:{port}", "port", status)
        self._persist("PATH", svc_id, path.to_dict())
        for obj in [*path.hops, *path.links]:
            self._persist_resource(obj)
        for node, port in sorted(ports):
            self._persist_port(node, port)
        return {"svc_id": svc_id, "status": status.value}

    # -- events and actions -------------------------------------------------

    async def add_event(self, event_id, event_type, ocs, port, threshold) -> dict:
        check_label(event_id, "event_id")
        etype = EventType.parse(event_type)
        value = check_threshold(threshold)
        store = self.store
        if ocs in store.nodes:
            if port not in store.nodes[ocs].ports:
                raise InvalidRange(f"{ocs} has no port {port}")
        elif ocs in store.terminals:
            if store.link_into(ocs, port) is None and store.link_from(ocs, port) is None:
                raise InvalidRange(f"terminal {ocs} has no port {port}")
        else:
            raise NotFound(f"{ocs} is not registered")
        spec = EventSpec(event_id, etype, ocs, port, value)
        self.events.check_event(spec)
        alarm = {"port": port, "high": value} if etype is EventType.SIGNAL_DETECTION else {"port": port, "low": value}
        try:
            await self.client(ocs).edit_config({"monitor": [{"port": port, "enabled": True}], "alarm": [alarm]})
        except SbiError as exc:
            raise PathOperFailed(f"{ocs} rejected the monitor/alarm setup: {exc}") from None
        self.events.add_event(spec)
        self._persist("EVENT", event_id, spec.to_dict())
        return spec.to_dict()

    async def create_action(self, act_id, svc_id, a, z, pce_alg=None, ocs_list=None) -> dict:
        check_label(act_id, "act_id")
        check_label(svc_id, "svc_id")
        forced = _ocs_list(ocs_list)
        self.fpce.check_algorithm(pce_alg)
        for t in (a, z):
            if t not in self.store.terminals:
                raise NotFound(f"terminal {t} does not exist")
        for ocs in forced or ():
            if ocs not in self.store.nodes:
                raise NotFound(f"OCS {ocs} does not exist")
        spec = ActionSpec(act_id, svc_id, a, z, pce_alg, forced)
        self.events.create_action(spec)
        self._persist("ACTION", act_id, spec.to_dict())
        return spec.to_dict()

    async def delete_action(self, act_id, svc_id) -> dict:
        gone = self.events.delete_action(act_id, svc_id)
        self._persist("ACTION", act_id, None)
        for binding in gone:
            self._persist("HANDLER", binding.key, None)
        return {"act_id": act_id, "deleted": True, "handlers_removed": len(gone)}

    async def create_event_handler(self, event_id, act_id) -> dict:
        binding = self.events.create_event_handler(event_id, act_id)
        self._persist("HANDLER", binding.key, binding.to_dict())
        return binding.to_dict()

    async def create_alarm_handler(self, svc_id, act_id) -> dict:
        if svc_id not in self.store.paths:
            raise NotFound(f"path {svc_id} does not exist")
        binding = self.events.create_alarm_handler(svc_id, act_id)
        self._persist("HANDLER", binding.key, binding.to_dict())
        return binding.to_dict()

    async def _run_action(self, action: ActionSpec, mode: str, n: Notification) -> dict:
        if mode == "create":
            return await self.create_fiber_path(action.svc_id, action.a, action.z, action.pce_alg,
                                                action.ocs_list and list(action.ocs_list))
        # only a switch port pins the failure to one strand; a terminal cannot
        if n.ocs_id in self.store.nodes:
            link = self.store.link_into(n.ocs_id, n.port)
            if link is not None and link.status is ResourceStatus.AVAILABLE:
                await self.update_resource_status(link.id, "link", ResourceStatus.UNAVAILABLE)
        return await self.restore_fiber_path(action.svc_id, action.a, action.z, action.pce_alg,
                                             action.ocs_list and list(action.ocs_list))

    # -- health -------------------------------------------------------------

    async def health_check(self) -> dict[str, bool]:
        ids = sorted(self.store.nodes) + sorted(self.store.terminals)
        verdicts = await asyncio.gather(*(self.client(i).hello(self.sbi_timeout) for i in ids))
        result = dict(zip(ids, verdicts))
        for device_id, up in result.items():
            kind = "switch" if device_id in self.store.nodes else "terminal"
            res = self.store.nodes.get(device_id) or self.store.terminals.get(device_id)
            if not up and res.status is ResourceStatus.AVAILABLE:
                log.warning("health: %s is down", device_id)
                self.store.update_resource_status(device_id, kind, ResourceStatus.UNAVAILABLE)
                self._health_marked.add(device_id)
                self._persist_resource(device_id)
            elif up and device_id in self._health_marked and self.auto_restore_on_hello:
                self.store.update_resource_status(device_id, kind, ResourceStatus.AVAILABLE)
                self._health_marked.discard(device_id)
                self._persist_resource(device_id)
        return result

    async def _health_loop(self) -> None:
        while True:
            await asyncio.sleep(self.health_interval)
            try:
                await self.health_check()
            except Exception:
                log.exception("health check failed")

    # -- introspection ------------------------------------------------------

    def path_elapsed(self) -> float | None:
        report = self.renderer.last_report
        return report.wall_s if report else None

    def clock(self) -> float:
        return time.time()


METHODS: dict[str, str] = {
    "AddSwitch": "add_switch",
    "AddTerminal": "add_terminal",
    "AddLink": "add_link",
    "CreateNetwork": "create_network",
    "UpdateResourceStatus": "update_resource_status",
    "CreateFiberPath": "create_fiber_path",
    "DeleteFiberPath": "delete_fiber_path",
    "RestoreFiberPath": "restore_fiber_path",
    "UpdatePathAvailability": "update_path_availability",
    "AddEvent": "add_event",
    "CreateAction": "create_action",
    "DeleteAction": "delete_action",
    "CreateEventHandler": "create_event_handler",
    "CreateAlarmHandler": "create_alarm_handler",
}

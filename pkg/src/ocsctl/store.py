"""In-memory resource store with port mapping and path-resource allocation.

All mutations go through one re-entrant lock, and ``transaction()`` restores
the prior state if the block raises, so every public mutation is
all-or-nothing.
"""

from __future__ import annotations

import contextlib
import copy
import json
import threading
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import AlreadyExist, BlockingOccured, InvalidRange, NotFound
from .fpce import TopologyView
from .model import ConnInfo, FiberLink, FiberPath, OcsNode, ResourceStatus, Terminal

OBJECT_TYPES = ("switch", "terminal", "link", "port")


@dataclass
class NetworkDocument:
    switches: list[OcsNode]
    terminals: list[Terminal]
    links: list[FiberLink]


def parse_topology(document) -> NetworkDocument:
    """Parse a topology document given as a dict, JSON/YAML text, or a file path."""
    if isinstance(document, Path):
        document = document.read_text()
    if isinstance(document, (str, bytes)):
        try:
            document = yaml.safe_load(document)  # YAML is a superset of JSON
        except yaml.YAMLError as exc:
            raise InvalidRange(f"topology file does not parse: {exc}") from None
    if document is None:
        document = {}
    if not isinstance(document, dict):
        raise InvalidRange("topology file must be a mapping")
    unknown = set(document) - {"switches", "terminals", "links"}
    if unknown:
        raise InvalidRange(f"unknown topology sections: {sorted(unknown)}")
    try:
        switches = [
            OcsNode(s["id"], ConnInfo(s["host"], s["port"]), frozenset(_ports(s, "tx_ports")),
                    frozenset(_ports(s, "rx_ports")))
            for s in document.get("switches") or []
        ]
        terminals = [Terminal(t["id"], ConnInfo(t["host"], t["port"])) for t in document.get("terminals") or []]
        links = [
            FiberLink(l["id"], l["src"], l["dst"], l["src_port"], l["dst_port"])
            for l in document.get("links") or []
        ]
    except (KeyError, TypeError) as exc:
        raise InvalidRange(f"topology element is missing a field: {exc}") from None
    return NetworkDocument(switches, terminals, links)


def _ports(entry: dict, key: str) -> list[str]:
    ports = entry[key]
    if not isinstance(ports, list):
        raise InvalidRange(f"{entry.get('id')}: {key} must be a list")
    return ports


def split_port_id(object_id: str) -> tuple[str, str]:
    ocs, sep, port = object_id.partition(":")
    if not sep or not ocs or not port:
        raise InvalidRange(f"port object ids look like '<ocs>:<port>', got {object_id!r}")
    return ocs, port


class ResourceStore:
    def __init__(self):
        self._lock = threading.RLock()
        self.nodes: dict[str, OcsNode] = {}
        self.terminals: dict[str, Terminal] = {}
        self.links: dict[str, FiberLink] = {}
        self.paths: dict[str, FiberPath] = {}
        # (node, port) -> UNAVAILABLE; absent means AVAILABLE
        self.port_status: dict[tuple[str, str], ResourceStatus] = {}
        # (node, port) -> svc_id holding it
        self.occupied: dict[tuple[str, str], str] = {}
        # svc_ids whose resources are held but whose path is not committed yet
        self.pending: dict[str, FiberPath] = {}
        self._by_src: dict[tuple[str, str], str] = {}
        self._by_dst: dict[tuple[str, str], str] = {}

    # -- transactions -------------------------------------------------------

    _STATE = ("nodes", "terminals", "links", "paths", "port_status", "occupied", "pending", "_by_src", "_by_dst")

    @contextlib.contextmanager
    def transaction(self):
        with self._lock:
            saved = {name: copy.deepcopy(getattr(self, name)) for name in self._STATE}
            try:
                yield self
            except BaseException:
                for name, value in saved.items():
                    setattr(self, name, value)
                raise

    # -- registration -------------------------------------------------------

    def _taken(self, object_id: str) -> bool:
        return object_id in self.nodes or object_id in self.terminals or object_id in self.links

    def register_switch(self, node: OcsNode) -> None:
        with self._lock:
            if self._taken(node.id):
                raise AlreadyExist(f"resource {node.id} already exists")
            node.status = ResourceStatus.AVAILABLE
            self.nodes[node.id] = node

    def register_terminal(self, terminal: Terminal) -> None:
        with self._lock:
            if self._taken(terminal.id):
                raise AlreadyExist(f"resource {terminal.id} already exists")
            terminal.status = ResourceStatus.AVAILABLE
            self.terminals[terminal.id] = terminal

    def register_link(self, link: FiberLink) -> None:
        with self._lock:
            if self._taken(link.id):
                raise AlreadyExist(f"resource {link.id} already exists")
            for end in (link.src, link.dst):
                if end not in self.nodes and end not in self.terminals:
                    raise NotFound(f"link {link.id}: endpoint {end} is not registered")
            src, dst = self.nodes.get(link.src), self.nodes.get(link.dst)
            if src is not None and link.src_port not in src.tx_ports:
                raise InvalidRange(f"link {link.id}: {link.src_port} is not a Tx port of {link.src}")
            if dst is not None and link.dst_port not in dst.rx_ports:
                raise InvalidRange(f"link {link.id}: {link.dst_port} is not an Rx port of {link.dst}")
            src_key, dst_key = (link.src, link.src_port), (link.dst, link.dst_port)
            # a terminal port label keeps a single direction
            if src_key in self._by_dst or dst_key in self._by_src:
                raise InvalidRange(f"link {link.id}: port direction conflicts with an existing strand")
            if src_key in self._by_src:
                raise AlreadyExist(f"{link.src}:{link.src_port} already carries link {self._by_src[src_key]}")
            if dst_key in self._by_dst:
                raise AlreadyExist(f"{link.dst}:{link.dst_port} already carries link {self._by_dst[dst_key]}")
            link.status = ResourceStatus.AVAILABLE
            self.links[link.id] = link
            self._by_src[src_key] = link.id
            self._by_dst[dst_key] = link.id

    def create_network(self, doc: NetworkDocument) -> None:
        with self.transaction():
            for node in doc.switches:
                self.register_switch(node)
            for terminal in doc.terminals:
                self.register_terminal(terminal)
            for link in doc.links:
                self.register_link(link)

    def check_network(self, doc: NetworkDocument) -> None:
        """Raise what ``create_network(doc)`` would raise, without changing anything."""

        class _DryRun(Exception):
            pass

        try:
            with self.transaction():
                self.create_network(copy.deepcopy(doc))
                raise _DryRun
        except _DryRun:
            pass

    def load(self, nodes, terminals, links, ports, paths) -> None:
        """Rebuild from persisted objects, keeping their stored statuses."""
        with self.transaction():
            for node in nodes:
                status = node.status
                self.register_switch(node)
                node.status = status
            for terminal in terminals:
                status = terminal.status
                self.register_terminal(terminal)
                terminal.status = status
            for link in links:
                status = link.status
                self.register_link(link)
                link.status = status
            for ocs, port, status in ports:
                self.update_resource_status(f"{ocs}:{port}", "port", status)
            for path in paths:
                for key in self.path_ports(path):
                    self.occupied[key] = path.svc_id
                self.paths[path.svc_id] = path

    # -- status -------------------------------------------------------------

    def update_resource_status(self, object_id: str, object_type: str, status) -> None:
        status = ResourceStatus.parse(status)
        with self._lock:
            if object_type == "switch":
                self._get(self.nodes, object_id).status = status
            elif object_type == "terminal":
                self._get(self.terminals, object_id).status = status
            elif object_type == "link":
                self._get(self.links, object_id).status = status
            elif object_type == "port":
                ocs, port = split_port_id(object_id)
                if ocs in self.nodes:
                    if port not in self.nodes[ocs].ports:
                        raise NotFound(f"{ocs} has no port {port}")
                elif ocs in self.terminals:
                    if (ocs, port) not in self._by_src and (ocs, port) not in self._by_dst:
                        raise NotFound(f"terminal {ocs} has no port {port}")
                else:
                    raise NotFound(f"resource {ocs} does not exist")
                if status is ResourceStatus.AVAILABLE:
                    self.port_status.pop((ocs, port), None)
                else:
                    self.port_status[(ocs, port)] = status
            else:
                raise InvalidRange(f"object_type must be one of {OBJECT_TYPES}")

    @staticmethod
    def _get(table: dict, key: str):
        try:
            return table[key]
        except KeyError:
            raise NotFound(f"{key} does not exist") from None

    def resource_kind(self, object_id: str) -> str | None:
        if object_id in self.nodes:
            return "switch"
        if object_id in self.terminals:
            return "terminal"
        if object_id in self.links:
            return "link"
        return None

    def link_into(self, node: str, port: str) -> FiberLink | None:
        link_id = self._by_dst.get((node, port))
        return self.links.get(link_id) if link_id else None

    def link_from(self, node: str, port: str) -> FiberLink | None:
        link_id = self._by_src.get((node, port))
        return self.links.get(link_id) if link_id else None

    # -- path resources -----------------------------------------------------

    def path_ports(self, path: FiberPath) -> list[tuple[str, str]]:
        ports = []
        for link_id in path.links:
            link = self.links[link_id]
            ports.append((link.src, link.src_port))
            ports.append((link.dst, link.dst_port))
        return ports

    def has_svc(self, svc_id: str) -> bool:
        return svc_id in self.paths or svc_id in self.pending

    def allocate_path_resources(self, path: FiberPath) -> None:
        with self._lock:
            if self.has_svc(path.svc_id):
                raise AlreadyExist(f"path {path.svc_id} already exists")
            for link_id in path.links:
                link = self.links.get(link_id)
                if link is None:
                    raise NotFound(f"link {link_id} does not exist")
                if link.status is not ResourceStatus.AVAILABLE:
                    raise BlockingOccured(f"link {link_id} is unavailable")
            for key in self.path_ports(path):
                holder = self.occupied.get(key)
                if holder is not None:
                    raise BlockingOccured(f"{key[0]}:{key[1]} is occupied by {holder}")
                if self.port_status.get(key) is ResourceStatus.UNAVAILABLE:
                    raise BlockingOccured(f"{key[0]}:{key[1]} is unavailable")
            for key in self.path_ports(path):
                self.occupied[key] = path.svc_id
            self.pending[path.svc_id] = path

    def commit_path(self, svc_id: str) -> FiberPath:
        with self._lock:
            path = self.pending.pop(svc_id)
            self.paths[svc_id] = path
            return path

    def release_path_resources(self, svc_id: str) -> FiberPath:
        with self._lock:
            path = self.pending.pop(svc_id, None) or self.paths.pop(svc_id, None)
            if path is None:
                raise NotFound(f"path {svc_id} does not exist")
            for key in self.path_ports(path):
                if self.occupied.get(key) == svc_id:
                    del self.occupied[key]
            return path

    def get_path(self, svc_id: str) -> FiberPath:
        with self._lock:
            return self._get(self.paths, svc_id)

    # -- views --------------------------------------------------------------

    def topology_view(self) -> TopologyView:
        with self._lock:
            return TopologyView(
                nodes={k: (frozenset(v.tx_ports | v.rx_ports), v.status) for k, v in self.nodes.items()},
                terminals={k: v.status for k, v in self.terminals.items()},
                links={k: copy.copy(v) for k, v in self.links.items()},
                port_status=dict(self.port_status),
                occupied=dict(self.occupied),
            )

    def dump(self) -> dict:
        """Canonical, order-independent rendering of the whole store."""
        with self._lock:
            return {
                "switches": [self.nodes[k].to_dict() for k in sorted(self.nodes)],
                "terminals": [self.terminals[k].to_dict() for k in sorted(self.terminals)],
                "links": [self.links[k].to_dict() for k in sorted(self.links)],
                "ports": [
                    {"ocs": ocs, "port": port, "status": status.value}
                    for (ocs, port), status in sorted(self.port_status.items())
                ],
                "paths": [self.paths[k].to_dict() for k in sorted(self.paths)],
            }

    def dumps(self) -> str:
        return json.dumps(self.dump(), sort_keys=True, separators=(",", ":"))

    def audit(self) -> list[str]:
        """Return invariant violations; empty when the store is consistent."""
        problems = []
        with self._lock:
            for link in self.links.values():
                for end in (link.src, link.dst):
                    if end not in self.nodes and end not in self.terminals:
                        problems.append(f"link {link.id} refers to unregistered {end}")
            seen: dict[tuple[str, str], str] = {}
            for svc_id, path in list(self.paths.items()) + list(self.pending.items()):
                for ocs, conns in path.per_ocs_configs.items():
                    for conn in conns:
                        for key in ((ocs, conn.rx_port), (ocs, conn.tx_port)):
                            if key in seen and seen[key] != svc_id:
                                problems.append(f"{key} used by {seen[key]} and {svc_id}")
                            seen[key] = svc_id
        return problems

"""Fiber-path computation.

Routes are computed over *duplex adjacencies*: two OCSes are adjacent when a
usable strand runs each way between them. A usable strand is AVAILABLE, has
AVAILABLE endpoints and ports, and none of its ports is held by another path.

Algorithms only choose the OCS sequence. Port binding is shared: for every
adjacency (and terminal attachment) the lexicographically smallest
``(forward link id, reverse link id)`` pair is taken.
"""

from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import AlreadyExist, BlockingOccured, InvalidRange, NotFound
from .model import ConfigPayload, FiberLink, FiberPath, InternalConnection, ResourceStatus

AVAILABLE = ResourceStatus.AVAILABLE


class TopologyView:
    """Read-only snapshot of the store as seen by path computation."""

    def __init__(self, nodes, terminals, links, port_status, occupied):
        # nodes: id -> (ports, status); terminals: id -> status
        self.nodes = nodes
        self.terminals = terminals
        self.links: dict[str, FiberLink] = links
        self.port_status = port_status
        self.occupied = occupied
        self._strands: dict[tuple[str, str], list[FiberLink]] = defaultdict(list)
        for link in sorted(links.values(), key=lambda l: l.id):
            if self.usable(link):
                self._strands[(link.src, link.dst)].append(link)
        self._adjacency: dict[str, set[str]] = defaultdict(set)
        for (u, v) in self._strands:
            if u in nodes and v in nodes and (v, u) in self._strands:
                self._adjacency[u].add(v)

    def _endpoint_ok(self, node: str, port: str) -> bool:
        if node in self.nodes:
            status = self.nodes[node][1]
        elif node in self.terminals:
            status = self.terminals[node]
        else:
            return False
        if status is not AVAILABLE:
            return False
        if self.port_status.get((node, port), AVAILABLE) is not AVAILABLE:
            return False
        return (node, port) not in self.occupied

    def usable(self, link: FiberLink) -> bool:
        return (
            link.status is AVAILABLE
            and self._endpoint_ok(link.src, link.src_port)
            and self._endpoint_ok(link.dst, link.dst_port)
        )

    def is_switch(self, node: str) -> bool:
        return node in self.nodes

    def is_terminal(self, node: str) -> bool:
        return node in self.terminals

    def duplex_pairs(self, u: str, v: str) -> list[tuple[FiberLink, FiberLink]]:
        """Usable (u->v, v->u) strand pairs, smallest first."""
        fwd, rev = self._strands.get((u, v), []), self._strands.get((v, u), [])
        return [(f, r) for f in fwd for r in rev]

    def neighbors(self, ocs: str) -> list[str]:
        return sorted(self._adjacency.get(ocs, ()))

    def attachments(self, terminal: str) -> dict[str, list[tuple[FiberLink, FiberLink]]]:
        """OCS id -> usable (terminal->ocs, ocs->terminal) strand pairs."""
        found = {}
        for (u, v) in list(self._strands):
            if u == terminal and v in self.nodes:
                pairs = self.duplex_pairs(terminal, v)
                if pairs:
                    found[v] = pairs
        return found


@dataclass(frozen=True)
class RouteHop:
    ocs: str
    fwd_rx: str
    fwd_tx: str
    rev_rx: str
    rev_tx: str


@dataclass(frozen=True)
class Route:
    a: str
    z: str
    hops: tuple[RouteHop, ...]
    links: tuple[str, ...]

    @property
    def ocs_ids(self) -> tuple[str, ...]:
        return tuple(h.ocs for h in self.hops)


@dataclass(frozen=True)
class PathRequest:
    a: str
    z: str
    algorithm: str = "dijkstra"
    forced_hops: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.forced_hops is not None and len(self.forced_hops) == 0:
            raise InvalidRange("ocs_list must not be empty")


PathAlgorithm = Callable[[TopologyView, str, str], Sequence[str] | None]


def dijkstra(view: TopologyView, a: str, z: str) -> list[str] | None:
    """Fewest-OCS route; ties go to the lexicographically smallest hop sequence.

    Keys are ``(hop count, hop sequence)``. Two equal-length prefixes ending at
    the same node extend by the same suffixes, so settling each node once on
    that key keeps the overall tie-break exact.
    """
    sinks = set(view.attachments(z))
    heap = [(1, (ocs,)) for ocs in sorted(view.attachments(a))]
    heapq.heapify(heap)
    settled: set[str] = set()
    while heap:
        hops, seq = heapq.heappop(heap)
        node = seq[-1]
        if node in settled:
            continue
        settled.add(node)
        if node in sinks:
            return list(seq)
        for nxt in view.neighbors(node):
            if nxt not in settled:
                heapq.heappush(heap, (hops + 1, seq + (nxt,)))
    return None


def bind_ports(view: TopologyView, a: str, z: str, seq: Sequence[str]) -> Route | None:
    """Choose strands for an OCS sequence, or None if some adjacency is missing."""
    if not seq or len(set(seq)) != len(seq) or any(not view.is_switch(o) for o in seq):
        return None
    first = view.attachments(a).get(seq[0])
    last = view.attachments(z).get(seq[-1])
    if not first or not last:
        return None
    # forward strand into hop i is inbound[i]; reverse strand into hop i is back_in[i]
    inbound = [first[0][0]]
    outbound_rev = [first[0][1]]
    links = [first[0][0].id, first[0][1].id]
    for u, v in zip(seq, seq[1:]):
        pairs = view.duplex_pairs(u, v)
        if not pairs:
            return None
        fwd, rev = pairs[0]
        inbound.append(fwd)
        outbound_rev.append(rev)
        links += [fwd.id, rev.id]
    z_in, z_out = last[0]
    links += [z_in.id, z_out.id]
    hops = []
    for i, ocs in enumerate(seq):
        fwd_out = inbound[i + 1] if i + 1 < len(seq) else z_out
        rev_in = outbound_rev[i + 1] if i + 1 < len(seq) else z_in
        hops.append(RouteHop(
            ocs=ocs,
            fwd_rx=inbound[i].dst_port,
            fwd_tx=fwd_out.src_port,
            rev_rx=rev_in.dst_port,
            rev_tx=outbound_rev[i].src_port,
        ))
    return Route(a, z, tuple(hops), tuple(links))


class Fpce:
    def __init__(self):
        self._algorithms: dict[str, PathAlgorithm] = {"dijkstra": dijkstra}

    @property
    def algorithms(self) -> list[str]:
        return sorted(self._algorithms)

    def register_algorithm(self, name: str, implementation: PathAlgorithm) -> None:
        if name in self._algorithms:
            raise AlreadyExist(f"algorithm {name} already registered")
        self._algorithms[name] = implementation

    def check_algorithm(self, name: str | None) -> str:
        name = name or "dijkstra"
        if name not in self._algorithms:
            raise InvalidRange(f"unknown pce_alg {name!r}")
        return name

    def compute_path(self, req: PathRequest, view: TopologyView) -> Route:
        for t in (req.a, req.z):
            if not view.is_terminal(t):
                raise NotFound(f"terminal {t} does not exist")
        if req.a == req.z:
            raise InvalidRange("a and z must differ")
        if req.forced_hops is not None:
            for ocs in req.forced_hops:
                if not view.is_switch(ocs):
                    raise NotFound(f"OCS {ocs} does not exist")
            if len(set(req.forced_hops)) != len(req.forced_hops):
                raise InvalidRange("ocs_list repeats an OCS")
            seq = req.forced_hops
        else:
            seq = self._algorithms[self.check_algorithm(req.algorithm)](view, req.a, req.z)
            if seq is None:
                raise BlockingOccured(f"no feasible path between {req.a} and {req.z}")
        route = bind_ports(view, req.a, req.z, seq)
        if route is None:
            raise BlockingOccured(f"no feasible path between {req.a} and {req.z} via {list(seq)}")
        return route


def route_connections(route: Route, svc_id: str) -> dict[str, tuple[InternalConnection, ...]]:
    return {
        hop.ocs: (
            InternalConnection(f"{svc_id}-fwd", hop.fwd_rx, hop.fwd_tx),
            InternalConnection(f"{svc_id}-rev", hop.rev_rx, hop.rev_tx),
        )
        for hop in route.hops
    }


def generate_configs(route: Route, svc_id: str) -> list[ConfigPayload]:
    conns = route_connections(route, svc_id)
    return [ConfigPayload(ocs, create=conns[ocs]) for ocs in route.ocs_ids]


def delete_configs(path: FiberPath) -> list[ConfigPayload]:
    return [
        ConfigPayload(ocs, delete=tuple(c.name for c in path.per_ocs_configs[ocs]))
        for ocs in path.hops
    ]


def path_from_route(route: Route, svc_id: str, pce_alg=None, ocs_list=None) -> FiberPath:
    return FiberPath(
        svc_id=svc_id,
        a=route.a,
        z=route.z,
        hops=route.ocs_ids,
        per_ocs_configs=route_connections(route, svc_id),
        links=route.links,
        pce_alg=pce_alg,
        ocs_list=tuple(ocs_list) if ocs_list is not None else None,
    )

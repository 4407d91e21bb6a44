"""Independent reference implementations the tests compare against."""

from __future__ import annotations

import random

from ocsctl.store import ResourceStore, parse_topology


def random_network(rng: random.Random, max_nodes: int = 12, max_strands: int = 30):
    """Random topology document plus availability masks.

    Returns ``(doc, masks)`` where masks is ``{"switch": [...], "link": [...],
    "port": [...], "terminal": [...]}`` naming objects to mark UNAVAILABLE.
    """
    n = rng.randint(1, max_nodes)
    ocs = [f"O{i}" for i in range(n)]
    next_port = {o: 0 for o in ocs}
    term_port = {"A": 0, "Z": 0}
    links = []

    def strand(src, dst):
        sp = dp = None
        if src in next_port:
            next_port[src] += 1
            sp = f"Tx_{next_port[src]}"
        if dst in next_port:
            next_port[dst] += 1
            dp = f"Rx_{next_port[dst]}"
        if sp is None:
            term_port[src] += 1
            sp = f"tx{term_port[src]}"
        if dp is None:
            term_port[dst] += 1
            dp = f"rx{term_port[dst]}"
        k = sum(1 for l in links if l["src"] == src and l["dst"] == dst)
        links.append({"id": f"{src}>{dst}#{k}", "src": src, "dst": dst, "src_port": sp, "dst_port": dp})

    budget = rng.randint(min(max_strands, 2 * n + 4), max_strands)
    # terminal attachments, sometimes one direction only
    for term in ("A", "Z"):
        for _ in range(rng.choice([0, 1, 1, 2, 2, 2, 2, 2])):
            if len(links) >= budget:
                break
            o = rng.choice(ocs)
            strand(term, o)
            if rng.random() < 0.9 and len(links) < budget:
                strand(o, term)
    while len(links) < budget and n > 1:
        u, v = rng.sample(ocs, 2)
        strand(u, v)
        if rng.random() < 0.8 and len(links) < budget:
            strand(v, u)
    doc = {
        "switches": [{"id": o, "host": "127.0.0.1", "port": 1,
                      "tx_ports": [f"Tx_{i}" for i in range(1, next_port[o] + 2)],
                      "rx_ports": [f"Rx_{i}" for i in range(1, next_port[o] + 2)]} for o in ocs],
        "terminals": [{"id": "A", "host": "127.0.0.1", "port": 1}, {"id": "Z", "host": "127.0.0.1", "port": 1}],
        "links": links,
    }
    p = rng.choice([0.0, 0.05, 0.15, 0.3])
    masks = {
        "switch": [o for o in ocs if rng.random() < p / 2],
        "terminal": [],
        "link": [l["id"] for l in links if rng.random() < p],
        "port": [f"{l['dst']}:{l['dst_port']}" for l in links if l["dst"] in next_port and rng.random() < p / 2],
    }
    if rng.random() < 0.03:
        masks["terminal"].append(rng.choice(["A", "Z"]))
    return doc, masks


def build_store(doc: dict, masks: dict) -> ResourceStore:
    store = ResourceStore()
    store.create_network(parse_topology(doc))
    for kind, ids in masks.items():
        for object_id in ids:
            store.update_resource_status(object_id, kind, "UNAVAILABLE")
    return store


def _duplex(doc: dict, masks: dict):
    """Predicate: a usable strand runs each way between u and v."""
    down_nodes = set(masks["switch"]) | set(masks["terminal"])
    down_links = set(masks["link"])
    down_ports = {tuple(p.split(":", 1)) for p in masks["port"]}

    def ok(l):
        return (l["id"] not in down_links and l["src"] not in down_nodes and l["dst"] not in down_nodes
                and (l["src"], l["src_port"]) not in down_ports and (l["dst"], l["dst_port"]) not in down_ports)

    one_way = {(l["src"], l["dst"]) for l in doc["links"] if ok(l)}
    return lambda u, v: (u, v) in one_way and (v, u) in one_way


def brute_force_min_hops(doc: dict, masks: dict, a: str = "A", z: str = "Z") -> int | None:
    """Fewest OCSes on any simple duplex route from a to z, by exhaustive search."""
    switches = {s["id"] for s in doc["switches"]}
    duplex = _duplex(doc, masks)

    starts = [o for o in sorted(switches) if duplex(a, o)]
    ends = {o for o in switches if duplex(z, o)}
    best = None

    def walk(seq, seen):
        nonlocal best
        if best is not None and len(seq) >= best:
            return
        if seq[-1] in ends:
            best = len(seq)
            return
        for nxt in sorted(switches - seen):
            if duplex(seq[-1], nxt):
                seen.add(nxt)
                walk(seq + [nxt], seen)
                seen.discard(nxt)

    for s in starts:
        walk([s], {s})
    return best


def all_simple_routes(doc: dict, masks: dict, a: str = "A", z: str = "Z") -> list[tuple[str, ...]]:
    """Every simple duplex OCS sequence from a to z."""
    switches = {s["id"] for s in doc["switches"]}
    duplex = _duplex(doc, masks)

    out = []

    def walk(seq):
        if duplex(z, seq[-1]):
            out.append(tuple(seq))
        for nxt in sorted(switches - set(seq)):
            if duplex(seq[-1], nxt):
                walk(seq + [nxt])

    for s in sorted(switches):
        if duplex(a, s):
            walk([s])
    return out

"""Durable controller state and restart reconciliation.

The log is an append-only JSON-lines file. Each record is
``{"seq", "kind", "op", "key", "body"}`` with ``op`` either ``put`` or
``del``. Replaying the records in order gives the latest body per
``(kind, key)``. Compaction rewrites the file with only live records.
"""

from __future__ import annotations

import asyncio
import enum
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

from .errors import SbiError
from .model import InternalConnection, ResourceStatus
from .sbi.client import DeviceClient
from .store import ResourceStore

log = logging.getLogger(__name__)

KINDS = ("RESOURCE", "PATH", "EVENT", "ACTION", "HANDLER")


class StorageError(Exception):
    pass


class PathLog:
    def __init__(self, path: Path | str, fsync: bool = True, compact_every: int = 2000):
        self.path = Path(path)
        self.fsync = fsync
        self.compact_every = compact_every
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.live: dict[tuple[str, str], dict] = {}
        self.seq = 0
        self._appended = 0
        self._fh = None
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        with self.path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except ValueError:
                    # a torn final write is the only expected damage
                    log.warning("%s:%d: skipping unreadable record", self.path, lineno)
                    continue
                self._apply(rec)
                self.seq = max(self.seq, rec["seq"])

    def _apply(self, rec: dict) -> None:
        key = (rec["kind"], rec["key"])
        if rec["op"] == "put":
            self.live[key] = rec["body"]
        else:
            self.live.pop(key, None)

    def _handle(self):
        if self._fh is None:
            self._fh = self.path.open("a", encoding="utf-8")
        return self._fh

    def append(self, kind: str, op: str, key: str, body: dict | None = None) -> int:
        if kind not in KINDS or op not in ("put", "del"):
            raise ValueError(f"bad record {kind}/{op}")
        rec = {"seq": self.seq + 1, "kind": kind, "op": op, "key": key, "body": body}
        try:
            fh = self._handle()
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
            fh.flush()
            if self.fsync:
                os.fsync(fh.fileno())
        except OSError as exc:
            raise StorageError(f"cannot persist {kind} {key}: {exc}") from exc
        self.seq += 1
        self._apply(rec)
        self._appended += 1
        if self._appended >= self.compact_every:
            self.compact()
        return self.seq

    def put(self, kind: str, key: str, body: dict) -> int:
        return self.append(kind, "put", key, body)

    def delete(self, kind: str, key: str) -> int:
        return self.append(kind, "del", key)

    def records(self) -> Iterator[dict]:
        with self.path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    yield json.loads(line)

    def compact(self) -> None:
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            seq = 0
            for (kind, key), body in sorted(self.live.items(), key=_record_order):
                seq += 1
                fh.write(json.dumps({"seq": seq, "kind": kind, "op": "put", "key": key, "body": body},
                                    sort_keys=True, separators=(",", ":")) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        self.close()
        os.replace(tmp, self.path)
        self.seq = seq
        self._appended = 0

    def bodies(self, kind: str) -> list[dict]:
        return [body for (k, key), body in sorted(self.live.items(), key=_record_order) if k == kind]

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def _record_order(item):
    (kind, key), body = item
    # switches and terminals before links so replay can check endpoints
    rank = {"switch": 0, "terminal": 1, "link": 2, "port": 3}.get((body or {}).get("type"), 4)
    return KINDS.index(kind), rank, key


# -- reconciliation ----------------------------------------------------------

class Policy(str, enum.Enum):
    RECONFIGURE = "RECONFIGURE"
    MARK_UNAVAILABLE = "MARK_UNAVAILABLE"


class PathVerdict(str, enum.Enum):
    CONSISTENT = "CONSISTENT"
    REPAIRED = "REPAIRED"
    QUARANTINED = "QUARANTINED"


@dataclass
class ReconcileReport:
    policy: Policy
    paths: dict[str, PathVerdict] = field(default_factory=dict)
    orphans: list[dict] = field(default_factory=list)
    unreachable: list[str] = field(default_factory=list)
    marked_unavailable: list[str] = field(default_factory=list)
    elapsed_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "policy": self.policy.value,
            "paths": {k: v.value for k, v in sorted(self.paths.items())},
            "orphans": self.orphans,
            "unreachable": sorted(self.unreachable),
            "marked_unavailable": sorted(self.marked_unavailable),
            "elapsed_s": round(self.elapsed_s, 4),
        }

    def save(self, path: Path) -> None:
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        os.replace(tmp, path)


async def reconcile(store: ResourceStore, client_for: Callable[[str], DeviceClient],
                    policy: Policy | str = Policy.MARK_UNAVAILABLE,
                    timeout: float = 3.0) -> ReconcileReport:
    """Compare persisted path intent with every switch and repair per ``policy``.

    Connections that no persisted path explains are deleted whatever the
    policy. Paths touching an unreachable switch are quarantined.
    """
    policy = Policy(policy)
    started = time.monotonic()
    report = ReconcileReport(policy)
    intent: dict[str, dict[str, InternalConnection]] = {ocs: {} for ocs in store.nodes}
    owner: dict[tuple[str, str], str] = {}
    for svc_id, path in sorted(store.paths.items()):
        for ocs, conn in path.connections():
            intent.setdefault(ocs, {})[conn.name] = conn
            owner[(ocs, conn.name)] = svc_id

    async def read(ocs: str):
        try:
            return ocs, await client_for(ocs).get_state(timeout)
        except SbiError as exc:
            log.warning("reconcile: %s unreachable: %s", ocs, exc)
            return ocs, None

    states = dict(await asyncio.gather(*(read(ocs) for ocs in sorted(store.nodes))))
    broken: dict[str, set[str]] = {}  # svc -> OCSes needing repair
    dead: set[str] = set()
    edits: dict[str, tuple[list, list]] = {}
    for ocs, state in states.items():
        if state is None:
            report.unreachable.append(ocs)
            for (o, _), svc in owner.items():
                if o == ocs:
                    dead.add(svc)
            continue
        actual = {c.name: c for c in state.connections}
        wanted = intent.get(ocs, {})
        deletes, creates = [], []
        for name, conn in sorted(actual.items()):
            if name not in wanted:
                report.orphans.append({"ocs": ocs, **conn.to_dict()})
                deletes.append(name)
            elif wanted[name] != conn:
                # same name, wrong ports: remove and treat as missing
                deletes.append(name)
                broken.setdefault(owner[(ocs, name)], set()).add(ocs)
                creates.append(wanted[name])
        for name, conn in sorted(wanted.items()):
            if name not in actual:
                broken.setdefault(owner[(ocs, name)], set()).add(ocs)
                creates.append(conn)
        edits[ocs] = (creates, deletes)

    async def apply(ocs: str, creates: list, deletes: list) -> tuple[str, bool]:
        if policy is not Policy.RECONFIGURE:
            creates = []
        if not creates and not deletes:
            return ocs, True
        body = {}
        if deletes:
            body["delete"] = deletes
        if creates:
            body["create"] = [c.to_dict() for c in creates]
        try:
            await client_for(ocs).edit_config(body, timeout)
            state = await client_for(ocs).get_state(timeout)
        except SbiError as exc:
            log.warning("reconcile: repair on %s failed: %s", ocs, exc)
            return ocs, False
        have = set(state.connections)
        return ocs, all(c in have for c in creates) and not (set(deletes) - {c.name for c in creates}) & state.names()

    results = dict(await asyncio.gather(*(apply(ocs, *e) for ocs, e in sorted(edits.items()))))
    bad_ocs = {ocs for ocs, ok in results.items() if not ok}

    to_mark = set(report.unreachable) | bad_ocs
    for svc_id in sorted(store.paths):
        need = broken.get(svc_id, set())
        if svc_id in dead:
            verdict = PathVerdict.QUARANTINED
        elif not need:
            verdict = PathVerdict.CONSISTENT
        elif policy is Policy.RECONFIGURE and not need & bad_ocs:
            verdict = PathVerdict.REPAIRED
        else:
            verdict = PathVerdict.QUARANTINED
            to_mark |= need
        report.paths[svc_id] = verdict
        if verdict is PathVerdict.QUARANTINED:
            store.paths[svc_id].status = ResourceStatus.UNAVAILABLE
    for ocs in sorted(to_mark):
        store.update_resource_status(ocs, "switch", ResourceStatus.UNAVAILABLE)
        report.marked_unavailable.append(ocs)
    report.elapsed_s = time.monotonic() - started
    return report

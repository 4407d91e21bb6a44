"""Events, actions and handlers, plus the notification dispatcher.

Notifications from every device session land on one queue. The dispatcher
matches each one against event handlers (by ocs, port and kind) and against
alarm handlers (by the path owning the alarming port), then runs every
matched action as its own task. A detection event establishes the action's
path; a degradation event or a path alarm restores it.

Nothing here polls devices: the only input is the notification stream.
"""

from __future__ import annotations

import asyncio
import json
import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Awaitable, Callable

from .errors import AlreadyExist, NbiError, NotFound
from .model import ActionSpec, EventSpec, HandlerBinding, Notification, NotificationKind

log = logging.getLogger(__name__)

ActionRunner = Callable[[ActionSpec, str, Notification], Awaitable[object]]
PathLookup = Callable[[str, str], "str | None"]


@dataclass
class JournalRecord:
    ts: float
    trigger: str
    act_id: str
    svc_id: str
    outcome: str
    elapsed_s: float


class ActionJournal:
    """Append-only record of every dispatched action."""

    def __init__(self, path: Path | str | None = None):
        self.path = Path(path) if path else None
        self.records: list[JournalRecord] = []
        self._changed = asyncio.Event()

    def append(self, rec: JournalRecord) -> None:
        self.records.append(rec)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(asdict(rec), separators=(",", ":")) + "\n")
        self._changed.set()

    async def wait_for(self, count: int, timeout: float) -> list[JournalRecord]:
        """Wait until at least ``count`` records exist."""
        deadline = time.monotonic() + timeout
        while len(self.records) < count:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise asyncio.TimeoutError(f"journal has {len(self.records)}/{count} records")
            self._changed.clear()
            try:
                await asyncio.wait_for(self._changed.wait(), remaining)
            except asyncio.TimeoutError:
                pass
        return self.records[:count]


class EventAlarmManager:
    def __init__(self, run_action: ActionRunner, path_for_port: PathLookup,
                 journal: ActionJournal | None = None):
        self.run_action = run_action
        self.path_for_port = path_for_port
        self.journal = journal or ActionJournal()
        self.events: dict[str, EventSpec] = {}
        self.actions: dict[str, ActionSpec] = {}
        self.handlers: dict[str, HandlerBinding] = {}
        self._event_index: dict[tuple[str, str, NotificationKind], str] = {}
        self._inflight: set[tuple[str, str]] = set()
        self._tasks: set[asyncio.Task] = set()
        self._queue: asyncio.Queue[Notification] = asyncio.Queue()
        self._loop_task: asyncio.Task | None = None
        self.stats = {"received": 0, "dispatched": 0, "dropped": 0, "coalesced": 0}

    # -- registry -----------------------------------------------------------

    def check_event(self, spec: EventSpec) -> None:
        if spec.event_id in self.events:
            raise AlreadyExist(f"event {spec.event_id} already exists")
        other = self._event_index.get((spec.ocs, spec.port, spec.kind))
        if other is not None:
            raise AlreadyExist(f"event {other} already watches {spec.ocs}:{spec.port} for {spec.event_type.value}")

    def add_event(self, spec: EventSpec) -> None:
        self.check_event(spec)
        self.events[spec.event_id] = spec
        self._event_index[(spec.ocs, spec.port, spec.kind)] = spec.event_id

    def create_action(self, spec: ActionSpec) -> None:
        if spec.act_id in self.actions:
            raise AlreadyExist(f"action {spec.act_id} already exists")
        self.actions[spec.act_id] = spec

    def delete_action(self, act_id: str, svc_id: str) -> list[HandlerBinding]:
        action = self.actions.get(act_id)
        if action is None:
            raise NotFound(f"action {act_id} does not exist")
        if action.svc_id != svc_id:
            raise NotFound(f"action {act_id} is not bound to service {svc_id}")
        del self.actions[act_id]
        gone = [h for h in self.handlers.values() if h.act_id == act_id]
        for h in gone:
            del self.handlers[h.key]
        return gone

    def _bind(self, binding: HandlerBinding) -> None:
        if binding.act_id not in self.actions:
            raise NotFound(f"action {binding.act_id} does not exist")
        if binding.key in self.handlers:
            raise AlreadyExist(f"handler {binding.kind} {binding.target} -> {binding.act_id} already exists")
        self.handlers[binding.key] = binding

    def create_event_handler(self, event_id: str, act_id: str) -> HandlerBinding:
        if event_id not in self.events:
            raise NotFound(f"event {event_id} does not exist")
        binding = HandlerBinding("event", event_id, act_id)
        self._bind(binding)
        return binding

    def create_alarm_handler(self, svc_id: str, act_id: str) -> HandlerBinding:
        binding = HandlerBinding("alarm", svc_id, act_id)
        self._bind(binding)
        return binding

    def load(self, events, actions, handlers) -> None:
        for spec in events:
            self.add_event(spec)
        for spec in actions:
            self.create_action(spec)
        for binding in handlers:
            self.handlers[binding.key] = binding

    # -- dispatch -----------------------------------------------------------

    def ingest(self, n: Notification) -> None:
        """Sink for device sessions; never blocks."""
        self.stats["received"] += 1
        self._queue.put_nowait(n)

    async def start(self) -> None:
        if self._loop_task is None:
            self._loop_task = asyncio.get_running_loop().create_task(self._drain())

    async def stop(self) -> None:
        if self._loop_task is not None:
            self._loop_task.cancel()
            try:
                await self._loop_task
            except asyncio.CancelledError:
                pass
            self._loop_task = None
        for task in list(self._tasks):
            task.cancel()
        if self._tasks:
            await asyncio.gather(*self._tasks, return_exceptions=True)

    async def _drain(self) -> None:
        while True:
            n = await self._queue.get()
            try:
                self.dispatch(n)
            except Exception:
                log.exception("dispatch failed for %s", n)

    def matches(self, n: Notification) -> list[tuple[str, str, HandlerBinding]]:
        """(trigger, mode, binding) for every handler this notification fires."""
        found = []
        event_id = self._event_index.get((n.ocs_id, n.port, n.kind))
        if event_id is not None:
            mode = "create" if n.kind is NotificationKind.SIGNAL_DETECTED else "restore"
            for h in self.handlers.values():
                if h.kind == "event" and h.target == event_id:
                    found.append((f"event:{event_id}", mode, h))
        if n.kind is NotificationKind.SIGNAL_DEGRADED:
            svc_id = self.path_for_port(n.ocs_id, n.port)
            if svc_id is not None:
                for h in self.handlers.values():
                    if h.kind == "alarm" and h.target == svc_id:
                        found.append((f"alarm:{svc_id}", "restore", h))
        return sorted(found, key=lambda f: (f[0], f[2].act_id))

    def dispatch(self, n: Notification) -> int:
        fired = 0
        matched = self.matches(n)
        if not matched:
            self.stats["dropped"] += 1
            log.debug("no handler for %s", n)
            return 0
        for trigger, mode, binding in matched:
            action = self.actions.get(binding.act_id)
            if action is None:
                continue
            keys = {("trigger", trigger), ("svc", action.svc_id)}
            if keys & self._inflight:
                self.stats["coalesced"] += 1
                continue
            self._inflight |= keys
            task = asyncio.get_running_loop().create_task(self._run(trigger, mode, action, n, keys))
            self._tasks.add(task)
            task.add_done_callback(self._tasks.discard)
            fired += 1
        self.stats["dispatched"] += fired
        return fired

    async def _run(self, trigger: str, mode: str, action: ActionSpec, n: Notification, keys) -> None:
        outcome = "ok"
        try:
            await self.run_action(action, mode, n)
        except NbiError as exc:
            outcome = exc.code
            log.info("action %s (%s) failed: %s", action.act_id, trigger, exc)
        except asyncio.CancelledError:
            outcome = "cancelled"
            raise
        except Exception:
            outcome = "error"
            log.exception("action %s crashed", action.act_id)
        finally:
            self._inflight -= keys
            now = time.time()
            self.journal.append(JournalRecord(now, trigger, action.act_id, action.svc_id, outcome,
                                              round(now - n.timestamp, 6)))

    async def idle(self, timeout: float = 30.0) -> None:
        """Wait for the queue to drain and every running action to finish."""
        deadline = time.monotonic() + timeout
        while self._queue.qsize() or self._tasks:
            if time.monotonic() > deadline:
                raise asyncio.TimeoutError("event manager still busy")
            if self._tasks:
                await asyncio.wait(list(self._tasks), timeout=max(0.0, deadline - time.monotonic()))
            else:
                await asyncio.sleep(0.001)

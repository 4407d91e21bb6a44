"""Atomic, concurrent device configuration.

Each OCS payload becomes an ``OcsCommand`` holding the forward payload and
its exact inverse. ``OcsRenderer.execute_atomic`` runs every command at once.
If any command fails, the renderer waits for the rest to settle and then
reverts every command that succeeded, all concurrently. A command only
counts as succeeded once the device state read back matches the intent.
"""

from __future__ import annotations

import asyncio
import enum
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping

from .errors import PathOperFailed, SbiError
from .model import ConfigPayload
from .sbi.client import DEFAULT_TIMEOUT, DeviceClient

log = logging.getLogger(__name__)


class Outcome(str, enum.Enum):
    PENDING = "PENDING"
    SUCCEEDED = "SUCCEEDED"
    FAILED = "FAILED"
    REVERTED = "REVERTED"


class SanityCheckFailed(SbiError):
    pass


async def sanity_check(client: DeviceClient, create=(), delete=(), timeout: float | None = None) -> None:
    """Read the device state back: created connections present, deleted names gone."""
    state = await client.get_state(timeout)
    actual = set(state.connections)
    missing = [c for c in create if c not in actual]
    names = state.names()
    lingering = [n for n in delete if n in names and n not in {c.name for c in create}]
    if missing or lingering:
        raise SanityCheckFailed(
            f"{client.device_id}: state mismatch, missing={[c.name for c in missing]} lingering={lingering}"
        )


@dataclass
class OcsCommand:
    ocs_id: str
    forward: ConfigPayload
    revert_payload: ConfigPayload
    outcome: Outcome = Outcome.PENDING
    error: str | None = None
    elapsed_s: float | None = None

    @classmethod
    def change(cls, ocs_id: str, create=(), delete=()) -> "OcsCommand":
        """Build a command from connections to create and connections to delete.

        Deletions are given as full connections so the revert can recreate them.
        """
        create, delete = tuple(create), tuple(delete)
        forward = ConfigPayload(ocs_id, create=create, delete=tuple(c.name for c in delete))
        inverse = ConfigPayload(ocs_id, create=delete, delete=tuple(c.name for c in create))
        return cls(ocs_id, forward, inverse)

    def _transition(self, new: Outcome) -> None:
        allowed = {
            Outcome.PENDING: {Outcome.SUCCEEDED, Outcome.FAILED},
            Outcome.SUCCEEDED: {Outcome.REVERTED},
        }
        if new not in allowed.get(self.outcome, set()):
            raise RuntimeError(f"{self.ocs_id}: illegal transition {self.outcome.value} -> {new.value}")
        self.outcome = new

    async def _apply(self, client: DeviceClient, payload: ConfigPayload, timeout: float) -> None:
        deadline = time.monotonic() + timeout
        await client.edit_config(payload, timeout)
        deleted = set(payload.delete)
        await sanity_check(client, payload.create, deleted, max(0.05, deadline - time.monotonic()))

    async def execute(self, client: DeviceClient, timeout: float) -> None:
        started = time.monotonic()
        try:
            await asyncio.wait_for(self._apply(client, self.forward, timeout), timeout)
        except (SbiError, asyncio.TimeoutError) as exc:
            self.error = str(exc) or type(exc).__name__
            self._transition(Outcome.FAILED)
            raise
        finally:
            self.elapsed_s = time.monotonic() - started
        self._transition(Outcome.SUCCEEDED)

    async def revert(self, client: DeviceClient, timeout: float) -> None:
        await asyncio.wait_for(self._apply(client, self.revert_payload, timeout), timeout)
        self._transition(Outcome.REVERTED)


@dataclass
class AtomicCommand:
    commands: list[OcsCommand] = field(default_factory=list)
    deadline: float = DEFAULT_TIMEOUT

    def __post_init__(self):
        ids = [c.ocs_id for c in self.commands]
        if len(set(ids)) != len(ids):
            raise ValueError("an atomic command holds at most one command per OCS")
        self._done = False

    @classmethod
    def of(cls, changes: Mapping[str, tuple], deadline: float = DEFAULT_TIMEOUT) -> "AtomicCommand":
        """``changes`` maps ocs_id -> (connections to create, connections to delete)."""
        return cls([OcsCommand.change(ocs, create, delete) for ocs, (create, delete) in changes.items()], deadline)


@dataclass
class RenderReport:
    wall_s: float
    rollback_s: float | None = None
    failed: tuple[str, ...] = ()
    revert_failed: tuple[str, ...] = ()


class OcsRenderer:
    def __init__(self, client_for: Callable[[str], DeviceClient],
                 mark_unavailable: Callable[[str], None] | None = None,
                 timeout: float = DEFAULT_TIMEOUT):
        self.client_for = client_for
        self.mark_unavailable = mark_unavailable or (lambda ocs: None)
        self.timeout = timeout
        self.last_report: RenderReport | None = None

    async def execute_atomic(self, cmd: AtomicCommand) -> RenderReport:
        if cmd._done:
            raise RuntimeError("an atomic command executes only once")
        cmd._done = True
        started = time.monotonic()
        if not cmd.commands:
            self.last_report = RenderReport(0.0)
            return self.last_report
        deadline = cmd.deadline or self.timeout

        async def run(c: OcsCommand):
            await c.execute(self.client_for(c.ocs_id), deadline)

        results = await asyncio.gather(*(run(c) for c in cmd.commands), return_exceptions=True)
        failed = tuple(c.ocs_id for c in cmd.commands if c.outcome is Outcome.FAILED)
        for c, res in zip(cmd.commands, results):
            if isinstance(res, BaseException) and not isinstance(res, (SbiError, asyncio.TimeoutError)):
                raise res
        if not failed:
            self.last_report = RenderReport(time.monotonic() - started)
            return self.last_report

        # every command has settled; undo the ones that took effect
        rollback_started = time.monotonic()
        for ocs in failed:
            self.mark_unavailable(ocs)
        done = [c for c in cmd.commands if c.outcome is Outcome.SUCCEEDED]

        async def undo(c: OcsCommand):
            await c.revert(self.client_for(c.ocs_id), deadline)

        reverts = await asyncio.gather(*(undo(c) for c in done), return_exceptions=True)
        rollback_s = time.monotonic() - rollback_started
        revert_failed = []
        for c, res in zip(done, reverts):
            if isinstance(res, BaseException):
                log.error("revert on %s failed: %s", c.ocs_id, res)
                revert_failed.append(c.ocs_id)
                self.mark_unavailable(c.ocs_id)
        report = RenderReport(time.monotonic() - started, rollback_s, failed, tuple(revert_failed))
        self.last_report = report
        detail = "; ".join(f"{c.ocs_id}: {c.error}" for c in cmd.commands if c.outcome is Outcome.FAILED)
        message = f"configuration failed on {', '.join(failed)} ({detail})"
        if revert_failed:
            message += f"; revert also failed on {', '.join(revert_failed)}"
        raise PathOperFailed(message, failed, tuple(revert_failed), rollback_s)

"""Device-side server for the unified SBI.

A backend supplies ``edit_config(payload)``, ``get()`` and ``hello()``
coroutines; the server owns framing, per-connection ordering and the
notification fan-out to subscribers.
"""

from __future__ import annotations

import asyncio
import logging
import time

from ..errors import RpcError
from .protocol import STREAM_LIMIT, encode, read_json

log = logging.getLogger(__name__)


class UnifiedServer:
    def __init__(self, backend, host: str = "127.0.0.1", port: int = 0):
        self.backend = backend
        self.host = host
        self.port = port
        self._server: asyncio.base_events.Server | None = None
        self._subscribers: set[asyncio.StreamWriter] = set()
        self._writers: set[asyncio.StreamWriter] = set()
        self.requests = 0

    @property
    def address(self) -> tuple[str, int]:
        return self.host, self.port

    async def start(self) -> None:
        self._server = await asyncio.start_server(
            self._handle, self.host, self.port, limit=STREAM_LIMIT, reuse_address=True
        )
        self.port = self._server.sockets[0].getsockname()[1]

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            for writer in list(self._writers):
                writer.close()
            await self._server.wait_closed()
            self._server = None

    def publish(self, port: str, kind: str, dbm: float, ts: float | None = None) -> None:
        frame = encode({"notification": {"port": port, "kind": kind, "dbm": dbm,
                                         "ts": time.time() if ts is None else ts}})
        for writer in list(self._subscribers):
            if writer.is_closing():
                self._subscribers.discard(writer)
            else:
                writer.write(frame)

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        self._writers.add(writer)
        try:
            while True:
                try:
                    frame = await read_json(reader)
                except ValueError:
                    writer.write(encode({"rpc-id": None, "error": {"code": "rpc-error", "message": "malformed frame"}}))
                    continue
                if frame is None:
                    break
                self.requests += 1
                rid = frame.get("rpc-id")
                try:
                    reply = await self._dispatch(frame, writer)
                except RpcError as exc:
                    writer.write(encode({"rpc-id": rid, "error": {"code": "rpc-error", "message": str(exc)}}))
                except Exception as exc:  # backend bug or vendor fault: surface, keep serving
                    log.exception("unified rpc failed")
                    writer.write(encode({"rpc-id": rid, "error": {"code": "rpc-error", "message": repr(exc)}}))
                else:
                    writer.write(encode({"rpc-id": rid, "reply": reply}))
        except (ConnectionError, asyncio.IncompleteReadError, asyncio.LimitOverrunError):
            pass
        finally:
            self._subscribers.discard(writer)
            self._writers.discard(writer)
            writer.close()

    async def _dispatch(self, frame: dict, writer: asyncio.StreamWriter):
        rpc = frame.get("rpc")
        if rpc == "edit-config":
            payload = frame.get("payload") or {}
            if not isinstance(payload, dict):
                raise RpcError("payload must be an object")
            await self.backend.edit_config(payload)
            return "ok"
        if rpc == "get":
            return await self.backend.get()
        if rpc == "subscribe":
            self._subscribers.add(writer)
            return "ok"
        if rpc == "hello":
            await self.backend.hello()
            return "ok"
        raise RpcError(f"unknown rpc {rpc!r}")

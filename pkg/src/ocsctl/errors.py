"""Exception vocabulary.

NBI errors carry one of the six wire codes clients may see. SBI errors are
device-facing and never leave the controller unwrapped.
"""

from __future__ import annotations


class NbiError(Exception):
    code = "NbiError"

    def __init__(self, message: str = ""):
        super().__init__(message)
        self.message = message

    def to_wire(self) -> dict:
        return {"code": self.code, "message": self.message}


class AlreadyExist(NbiError):
    code = "AlreadyExist"


class ConnectionFailed(NbiError):
    code = "ConnectionFailed"


class NotFound(NbiError):
    code = "NotFound"


class InvalidRange(NbiError):
    code = "InvalidRange"


class BlockingOccured(NbiError):
    code = "BlockingOccured"


class PathOperFailed(NbiError):
    """Device-side failure after the renderer finished its rollback.

    ``failed`` lists the OCSes whose execute failed, ``revert_failed`` those
    whose revert failed as well. ``rollback_s`` is the time spent reverting.
    """

    code = "PathOperFailed"

    def __init__(
        self,
        message: str = "",
        failed: tuple[str, ...] = (),
        revert_failed: tuple[str, ...] = (),
        rollback_s: float | None = None,
    ):
        super().__init__(message)
        self.failed = tuple(failed)
        self.revert_failed = tuple(revert_failed)
        self.rollback_s = rollback_s


ERROR_TYPES: dict[str, type[NbiError]] = {
    cls.code: cls
    for cls in (AlreadyExist, ConnectionFailed, NotFound, InvalidRange, BlockingOccured, PathOperFailed)
}


def from_wire(error: dict) -> NbiError:
    cls = ERROR_TYPES.get(error.get("code", ""), PathOperFailed)
    return cls(error.get("message", ""))


class SbiError(Exception):
    """Base for device-facing failures."""


class RpcError(SbiError):
    """The device (or its translator) rejected the request."""


class SbiTimeout(SbiError, TimeoutError):
    pass


class SessionClosed(SbiError):
    """The device session is gone or could not be opened."""

"""Unified south-bound interface: protocol, client, server, vendor translators."""

from .client import DeviceClient
from .protocol import DeviceState, edit_payload

__all__ = ["DeviceClient", "DeviceState", "edit_payload"]

"""Blocking client for the newline-delimited JSON environment protocol.

One handle speaks for one server-side session: connect, reset with a seed,
then step with gains in [-1, 1].  Observations come back as (10, 98) arrays
whose values are bit-identical to the server's in-process environment.
"""

from __future__ import annotations

import json
import socket
from typing import Optional

import numpy as np

OBS_SHAPE = (10, 98)


class ClientError(Exception):
    """Connection-level failure."""


class ProtocolStateError(ClientError):
    """Operation not allowed in the handle's current state."""


class ServerError(ClientError):
    """The server answered with an error message."""


class RemoteEnv:
    """A single environment session over an established connection.

    States: unreset -> active -> closed; a finished episode (terminated or
    truncated) rejects further steps until the next reset.  Handles are not
    thread-safe; open one handle per session.
    """

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._rfile = sock.makefile("rb")
        self.state = "unreset"
        self._episode_done = False

    # -- wire plumbing

    def _send_line(self, data: bytes):
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise ClientError(f"connection lost: {exc}") from exc

    def _read_response(self) -> dict:
        try:
            line = self._rfile.readline()
        except OSError as exc:
            raise ClientError(f"connection lost: {exc}") from exc
        if not line:
            raise ClientError("server closed the connection")
        try:
            message = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ClientError(f"unparseable server response: {exc}") from exc
        return message

    def _call(self, request: dict) -> dict:
        if self.state == "closed":
            raise ProtocolStateError("session is closed")
        self._send_line((json.dumps(request, separators=(",", ":")) + "\n").encode())
        response = self._read_response()
        if "error" in response and response["error"]:
            raise ServerError(response["error"])
        return response

    @staticmethod
    def _to_observation(flat: list) -> np.ndarray:
        obs = np.asarray(flat, dtype=np.float64)
        if obs.size != OBS_SHAPE[0] * OBS_SHAPE[1]:
            raise ClientError(f"expected {OBS_SHAPE[0] * OBS_SHAPE[1]} values, "
                              f"got {obs.size}")
        return obs.reshape(OBS_SHAPE)

    # -- environment interface

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        request = {"cmd": "reset"}
        if seed is not None:
            request["seed"] = int(seed)
        response = self._call(request)
        self.state = "active"
        self._episode_done = False
        return self._to_observation(response["obs"])

    def step(self, action: float) -> tuple[np.ndarray, float, bool, bool, dict]:
        if self.state != "active":
            raise ProtocolStateError("step requires an active session; call reset")
        if self._episode_done:
            raise ProtocolStateError("episode finished; call reset")
        response = self._call({"cmd": "step", "action": float(action)})
        obs = self._to_observation(response["obs"])
        terminated = bool(response["terminal"])
        truncated = bool(response["truncated"])
        self._episode_done = terminated or truncated
        return obs, float(response["reward"]), terminated, truncated, response["info"]

    def configure(self, scenario_ref: str) -> dict:
        response = self._call({"cmd": "configure", "scenario_ref": scenario_ref})
        self.state = "unreset"
        return response.get("info", {})

    def close(self):
        if self.state == "closed":
            return
        try:
            self._call({"cmd": "close"})
        except ClientError:
            pass
        self.state = "closed"
        self._rfile.close()
        self._sock.close()

    def __enter__(self) -> "RemoteEnv":
        return self

    def __exit__(self, *exc):
        self.close()


def connect(address: str | tuple[str, int], timeout: float = 30.0) -> RemoteEnv:
    """Open a session; `address` is (host, port) or \"host:port\"."""
    if isinstance(address, str):
        host, _, port = address.rpartition(":")
        if not host or not port.isdigit():
            raise ClientError(f"bad address {address!r}; expected host:port")
        address = (host, int(port))
    try:
        sock = socket.create_connection(address, timeout=timeout)
    except OSError as exc:
        raise ClientError(f"cannot connect to {address[0]}:{address[1]}: {exc}") from exc
    return RemoteEnv(sock)

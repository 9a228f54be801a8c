"""Line-oriented environment control protocol: one JSON document per line.

Each accepted connection owns an isolated environment session.  Requests
carry a single ``cmd`` (reset | step | configure | close); responses carry
either ``obs``/``reward``/``truncated``/``terminal``/``info`` or ``error``.
Malformed lines produce an error response and the session continues.
"""

from __future__ import annotations

import json
import socketserver
import threading
from typing import Optional

from .env import CongestionControlEnv, EnvConfig, EnvError
from .presets import get_scenario
from .scenario import Scenario, ScenarioError

OBS_LENGTH = 980


class ProtocolError(Exception):
    def __init__(self, message: str, offset: Optional[int] = None):
        super().__init__(message)
        self.offset = offset


def encode(message: dict) -> bytes:
    """One JSON document, newline-terminated, full float round-trip precision."""
    return (json.dumps(message, separators=(",", ":")) + "\n").encode("utf-8")


def decode(line: bytes | str) -> dict:
    if isinstance(line, bytes):
        line = line.decode("utf-8", errors="replace")
    try:
        message = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"decode_error at byte {exc.pos}", offset=exc.pos) from exc
    if not isinstance(message, dict):
        raise ProtocolError("message must be a JSON object")
    return message


class EnvSession:
    """State machine serving one connection: unreset -> active -> closed."""

    def __init__(self, scenario: Scenario, mode: str = "training",
                 env_config: Optional[EnvConfig] = None):
        self.scenario = scenario
        self.mode = mode
        self.env_config = env_config
        self.env: Optional[CongestionControlEnv] = None
        self.closed = False

    def handle(self, request: dict) -> dict:
        cmd = request.get("cmd")
        if cmd == "reset":
            return self._reset(request)
        if cmd == "step":
            return self._step(request)
        if cmd == "configure":
            return self._configure(request)
        if cmd == "close":
            self.closed = True
            return {"info": {"status": "closed"}}
        return {"error": f"unknown_cmd: {cmd!r}"}

    def _configure(self, request: dict) -> dict:
        ref = request.get("scenario_ref")
        if not isinstance(ref, str):
            return {"error": "configure needs scenario_ref"}
        try:
            self.scenario = get_scenario(ref)
        except (ScenarioError, OSError) as exc:
            return {"error": f"bad_scenario: {exc}"}
        self.env = None
        return {"info": {"status": "ok", "scenario": self.scenario.name}}

    def _reset(self, request: dict) -> dict:
        seed = request.get("seed")
        if seed is not None and not isinstance(seed, int):
            return {"error": "seed must be an integer"}
        if self.env is None:
            self.env = CongestionControlEnv(
                self.scenario, self.mode, self.env_config
            )
        try:
            obs = self.env.reset(seed)
        except EnvError as exc:
            return {"error": str(exc)}
        return {
            "obs": obs.ravel().tolist(),
            "reward": 0.0,
            "truncated": False,
            "terminal": False,
            "info": {},
        }

    def _step(self, request: dict) -> dict:
        if self.env is None or not self.env._was_reset:
            return {"error": "not_reset"}
        action = request.get("action")
        if not isinstance(action, (int, float)) or isinstance(action, bool):
            return {"error": "step needs a numeric action"}
        try:
            result = self.env.step(float(action))
        except EnvError as exc:
            return {"error": str(exc)}
        return {
            "obs": result.observation.ravel().tolist(),
            "reward": result.reward,
            "truncated": result.truncated,
            "terminal": result.terminal,
            "info": {
                "cwnd_bytes": result.info["cwnd_bytes"],
                "srtt_ms": result.info["srtt_ms"],
                "retransmissions_window": result.info["retransmissions_window"],
                "sim_time_s": result.info["sim_time_s"],
            },
        }


class _SessionHandler(socketserver.StreamRequestHandler):
    def handle(self):
        server: EnvProtocolServer = self.server.owner
        session = EnvSession(server.scenario, server.mode, server.env_config)
        for raw in self.rfile:
            if not raw.strip():
                continue
            try:
                request = decode(raw)
            except ProtocolError as exc:
                self.wfile.write(encode({"error": str(exc)}))
                continue
            response = session.handle(request)
            self.wfile.write(encode(response))
            if session.closed:
                break


class _ThreadedServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class EnvProtocolServer:
    """Serves one isolated environment per connection over TCP."""

    def __init__(self, scenario: Scenario, host: str = "127.0.0.1", port: int = 0,
                 mode: str = "training", env_config: Optional[EnvConfig] = None):
        self.scenario = scenario
        self.mode = mode
        self.env_config = env_config
        self._server = _ThreadedServer((host, port), _SessionHandler)
        self._server.owner = self
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address

    def start(self):
        self._thread = threading.Thread(
            target=self._server.serve_forever, daemon=True
        )
        self._thread.start()

    def serve_forever(self):
        self._server.serve_forever()

    def shutdown(self):
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "EnvProtocolServer":
        self.start()
        return self

    def __exit__(self, *exc):
        self.shutdown()


def serve(bind_address: tuple[str, int], scenario: Scenario,
          mode: str = "training", env_config: Optional[EnvConfig] = None):
    """Blocking entry point used by the CLI."""
    server = EnvProtocolServer(scenario, bind_address[0], bind_address[1],
                               mode, env_config)
    host, port = server.address
    print(f"listening on {host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()

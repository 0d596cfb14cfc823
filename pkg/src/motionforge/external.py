"""Child-process denoiser plugin.

Protocol: the child prints one handshake line on startup, then answers
one JSON line per request line. All records are single-line JSON.

  handshake (child -> host): {"protocol": "motionforge-denoiser", "version": 1}
  request   (host -> child): {"op": "denoise", "t": 0.5, "sequence": [[...], ...]}
  response  (child -> host): {"sequence": [[...], ...]}  or  {"error": "message"}
"""

from __future__ import annotations

import json
import subprocess
import threading

import numpy as np

from .errors import ContractError

__all__ = ["ExternalProcessDenoiser", "PROTOCOL_NAME", "PROTOCOL_VERSION"]

PROTOCOL_NAME = "motionforge-denoiser"
PROTOCOL_VERSION = 1


class ExternalProcessDenoiser:
    """DenoiserInterface implementation backed by a child process.

    Calls are serialized with a lock; the child sees one request at a
    time. Use as a context manager or call close().
    """

    def __init__(self, command: list[str]):
        self._lock = threading.Lock()
        try:
            self._proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ContractError(f"cannot start denoiser plugin {command!r}: {exc}") from exc
        line = self._proc.stdout.readline()
        try:
            hello = json.loads(line)
        except json.JSONDecodeError as exc:
            self.close()
            raise ContractError(f"denoiser plugin handshake is not JSON: {line!r}") from exc
        if hello.get("protocol") != PROTOCOL_NAME:
            self.close()
            raise ContractError(f"denoiser plugin spoke protocol {hello.get('protocol')!r}")
        if hello.get("version") != PROTOCOL_VERSION:
            self.close()
            raise ContractError(
                f"denoiser plugin protocol version {hello.get('version')!r}, "
                f"host supports {PROTOCOL_VERSION}"
            )

    def __call__(self, noisy: np.ndarray, t: float) -> np.ndarray:
        request = json.dumps(
            {"op": "denoise", "t": float(t), "sequence": np.asarray(noisy).tolist()}
        )
        with self._lock:
            if self._proc.poll() is not None:
                raise ContractError("denoiser plugin exited")
            self._proc.stdin.write(request + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        if not line:
            raise ContractError("denoiser plugin closed its output stream")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ContractError(f"denoiser plugin response is not JSON: {line!r}") from exc
        if "error" in response:
            raise ContractError(f"denoiser plugin error: {response['error']}")
        if "sequence" not in response:
            raise ContractError("denoiser plugin response has no 'sequence'")
        return np.asarray(response["sequence"], dtype=np.float64)

    def close(self) -> None:
        proc = getattr(self, "_proc", None)
        if proc is None:
            return
        if proc.stdin and not proc.stdin.closed:
            proc.stdin.close()
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()

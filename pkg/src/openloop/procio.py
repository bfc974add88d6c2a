"""Newline-delimited JSON client for supervised child processes.

Both the environment sandbox and external trainers speak the same wire
shape: the child prints one handshake line at startup, then answers each
request line with exactly one reply line. The client owns the timeout
and kills the child when it blows through it.
"""
from __future__ import annotations

import json
import queue
import subprocess
import threading
from typing import Optional, Sequence


class ProcessProtocolError(Exception):
    pass


class ProcessTimeout(ProcessProtocolError):
    pass


class ProcessCrashed(ProcessProtocolError):
    pass


class NdjsonProcess:
    """One request in flight at a time; restartable after a kill."""

    def __init__(self, argv: Sequence[str], handshake_timeout_s: float = 20.0):
        self.argv = list(argv)
        self.handshake_timeout_s = handshake_timeout_s
        self._proc: Optional[subprocess.Popen] = None
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()
        self._reader: Optional[threading.Thread] = None
        self.handshake: Optional[dict] = None

    def _pump(self, stream) -> None:
        for line in stream:
            self._lines.put(line)
        self._lines.put(None)

    def start(self) -> dict:
        self.close()
        self._lines = queue.Queue()
        self._proc = subprocess.Popen(
            self.argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        self._reader = threading.Thread(target=self._pump, args=(self._proc.stdout,), daemon=True)
        self._reader.start()
        self.handshake = self._read(self.handshake_timeout_s)
        return self.handshake

    def _ensure_running(self) -> None:
        if self._proc is None or self._proc.poll() is not None:
            self.start()

    def _read(self, timeout_s: float) -> dict:
        try:
            line = self._lines.get(timeout=timeout_s)
        except queue.Empty:
            self.kill()
            raise ProcessTimeout(f"no reply within {timeout_s}s") from None
        if line is None:
            raise ProcessCrashed("child closed its reply stream")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProcessProtocolError(f"non-protocol bytes on reply stream: {line!r}") from exc

    def request(self, payload: dict, timeout_s: float) -> dict:
        self._ensure_running()
        assert self._proc is not None and self._proc.stdin is not None
        try:
            self._proc.stdin.write(json.dumps(payload) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProcessCrashed(f"child rejected request: {exc}") from exc
        return self._read(timeout_s)

    def kill(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()
        self._proc = None

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        self._proc = None

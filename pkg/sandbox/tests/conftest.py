import json
import queue
import subprocess
import sys
import threading
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

# One line per acceptance criterion, printed by the summary hook below.
ACCEPTANCE_RESULTS: list[str] = []


def fixture_code(name: str) -> str:
    return (FIXTURES / f"{name}.py").read_text(encoding="utf-8")


class SandboxClient:
    """Minimal line-oriented client for protocol tests."""

    def __init__(self, *server_args: str):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "envbox.server", *server_args],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        self._lines: "queue.Queue[str | None]" = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self.handshake = json.loads(self.read_line(timeout=20))

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def read_line(self, timeout: float) -> str:
        line = self._lines.get(timeout=timeout)
        if line is None:
            raise RuntimeError("server closed its output stream")
        return line

    def send_raw(self, line: str) -> None:
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()

    def request(self, payload: dict, timeout: float = 30.0) -> dict:
        self.send_raw(json.dumps(payload))
        return json.loads(self.read_line(timeout))

    def alive(self) -> bool:
        return self.proc.poll() is None

    def close(self):
        if self.proc.poll() is None:
            self.proc.stdin.close()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


@pytest.fixture()
def client():
    c = SandboxClient()
    yield c
    c.close()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and report.failed and "test_acceptance" in item.nodeid:
        ACCEPTANCE_RESULTS.append(f"FAIL: {item.name}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)

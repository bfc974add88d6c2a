"""Chat-completion dispatch and reply parsing.

The gateway sends rendered prompt bundles to a backend (a remote chat
endpoint or an ordered script of canned replies) and logs every
request/response pair. Parsers pull the structured fields back out of
free-text replies: the quoted task description, fenced code blocks, and
yes/no verdicts.
"""
from __future__ import annotations

import re
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

from . import events as ev


class PromptKind(str, Enum):
    TASK_GEN = "TaskGen"
    ENV_GEN = "EnvGen"
    ENV_REFLECT = "EnvReflect"
    MOI = "MoI"
    TASK_REFLECT = "TaskReflect"


# Ops counted against the code-generation completion budget.
ENV_FAMILY = (PromptKind.ENV_GEN, PromptKind.ENV_REFLECT)


@dataclass(frozen=True)
class PromptBundle:
    kind: PromptKind
    system_text: str
    user_text: str
    temperature: float
    model_name: str

    def __post_init__(self):
        if not self.system_text or not self.user_text:
            raise ValueError("system and user text must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class FmResponse:
    raw_text: str
    backend_id: str
    latency_s: float
    attempt: int


class FmError(Exception):
    pass


class TransportError(FmError):
    """Retryable transport/HTTP failure."""


class ScriptExhaustedError(FmError):
    pass


class ParseError(FmError):
    pass


class ScriptedBackend:
    """Replays canned replies in order, matched by prompt kind.

    Entries are (kind_matcher, reply) where the matcher is a PromptKind
    value or "*". Each completion consumes the first unconsumed entry
    whose matcher accepts the bundle's kind; running out raises rather
    than looping.
    """

    backend_id = "scripted"

    def __init__(self, entries: list[tuple[str, str]]):
        self.entries = [(str(kind), reply) for kind, reply in entries]
        self._consumed = [False] * len(self.entries)
        self._lock = threading.Lock()

    @classmethod
    def from_dir(cls, script_dir: Path) -> "ScriptedBackend":
        """Load numbered reply files listed by the directory's manifest."""
        import json

        script_dir = Path(script_dir)
        manifest = json.loads((script_dir / "manifest.json").read_text(encoding="utf-8"))
        entries = []
        for item in manifest:
            reply = (script_dir / item["file"]).read_text(encoding="utf-8")
            entries.append((item["kind"], reply))
        return cls(entries)

    def _matches(self, matcher: str, kind: PromptKind) -> bool:
        return matcher == "*" or matcher == kind.value

    def complete(self, bundle: PromptBundle) -> str:
        with self._lock:
            for i, (matcher, reply) in enumerate(self.entries):
                if not self._consumed[i] and self._matches(matcher, bundle.kind):
                    self._consumed[i] = True
                    return reply
        raise ScriptExhaustedError(f"no scripted reply left for kind {bundle.kind.value}")

    def restore(self, consumed_kinds: list[str]) -> None:
        """Re-mark entries consumed by an earlier run, in reply order."""
        with self._lock:
            self._consumed = [False] * len(self.entries)
            for kind in consumed_kinds:
                for i, (matcher, _) in enumerate(self.entries):
                    if not self._consumed[i] and self._matches(matcher, PromptKind(kind)):
                        self._consumed[i] = True
                        break
                else:
                    raise ScriptExhaustedError(
                        f"cannot restore script cursor: no entry for kind {kind}"
                    )

    @property
    def remaining(self) -> int:
        return self._consumed.count(False)


class RemoteChatBackend:
    """HTTP chat-completions client (messages/model/temperature JSON).

    Shareable across threads; at most ``max_in_flight`` requests run
    concurrently.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        timeout_s: float = 120.0,
        transport: Optional[Callable[[dict], dict]] = None,
        max_in_flight: int = 4,
    ):
        self.base_url = base_url
        self.api_key = api_key
        self.timeout_s = timeout_s
        self.backend_id = f"remote:{base_url}"
        self._transport = transport or self._http_transport
        self._gate = threading.Semaphore(max(1, max_in_flight))

    def _http_transport(self, payload: dict) -> dict:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(self.base_url, json=payload, headers=headers, timeout=self.timeout_s)
            resp.raise_for_status()
            return resp.json()
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc

    def complete(self, bundle: PromptBundle) -> str:
        payload = {
            "model": bundle.model_name,
            "temperature": bundle.temperature,
            "messages": [
                {"role": "system", "content": bundle.system_text},
                {"role": "user", "content": bundle.user_text},
            ],
        }
        try:
            with self._gate:
                reply = self._transport(payload)
        except TransportError:
            raise
        except Exception as exc:  # noqa: BLE001 - transport boundary
            raise TransportError(str(exc)) from exc
        try:
            return reply["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed chat reply: {exc}") from exc


class Gateway:
    """Dispatches bundles to a backend with bounded transport retries.

    Each complete() call appends exactly one FmRequest event and one
    FmResponse event (carrying the error text when all attempts fail).
    """

    def __init__(self, backend, log: Optional[ev.EventLog] = None, max_attempts: int = 3,
                 retry_wait_s: float = 0.0):
        self.backend = backend
        self.log = log
        self.max_attempts = max(1, max_attempts)
        self.retry_wait_s = retry_wait_s

    def _emit(self, kind: str, payload: dict) -> None:
        if self.log is not None:
            self.log.emit(kind, payload)

    def complete(self, bundle: PromptBundle, *, iteration: int = 0,
                 context_ids: Optional[list[int]] = None) -> FmResponse:
        request_payload = {
            "iteration": iteration,
            "kind": bundle.kind.value,
            "model": bundle.model_name,
            "temperature": bundle.temperature,
            "system_text": bundle.system_text,
            "user_text": bundle.user_text,
        }
        if context_ids is not None:
            request_payload["context_ids"] = context_ids
        self._emit(ev.FM_REQUEST, request_payload)

        started = time.monotonic()
        attempt = 0
        while True:
            attempt += 1
            try:
                raw_text = self.backend.complete(bundle)
                response = FmResponse(
                    raw_text=raw_text,
                    backend_id=getattr(self.backend, "backend_id", "unknown"),
                    latency_s=time.monotonic() - started,
                    attempt=attempt,
                )
                self._emit(ev.FM_RESPONSE, {
                    "iteration": iteration,
                    "kind": bundle.kind.value,
                    "ok": True,
                    "raw_text": raw_text,
                    "backend_id": response.backend_id,
                    "latency_s": response.latency_s,
                    "attempt": attempt,
                })
                return response
            except TransportError as exc:
                if attempt >= self.max_attempts:
                    self._emit(ev.FM_RESPONSE, {
                        "iteration": iteration,
                        "kind": bundle.kind.value,
                        "ok": False,
                        "error": str(exc),
                        "latency_s": time.monotonic() - started,
                        "attempt": attempt,
                    })
                    raise
                if self.retry_wait_s:
                    time.sleep(self.retry_wait_s * attempt)
            except FmError as exc:
                self._emit(ev.FM_RESPONSE, {
                    "iteration": iteration,
                    "kind": bundle.kind.value,
                    "ok": False,
                    "error": str(exc),
                    "latency_s": time.monotonic() - started,
                    "attempt": attempt,
                })
                raise


TASK_DESC_HEADER = "Next task description"

_FENCE_OPEN = re.compile(r"^[ ]{0,3}(`{3,})([^`\n]*)$")


def parse_task_description(raw: str) -> tuple[str, str]:
    """Split a task-generator reply into (reasoning, task description).

    The description is the text between the first triple-quote after the
    header and the last triple-quote in the reply, so inner quote pairs
    stay part of the description.
    """
    header_at = raw.find(TASK_DESC_HEADER)
    if header_at < 0:
        raise ParseError(f"missing {TASK_DESC_HEADER!r} header")
    reasoning = raw[:header_at].strip()
    after = raw[header_at:]
    open_at = after.find('"""')
    if open_at < 0:
        raise ParseError("no opening triple-quote after the task header")
    close_at = after.rfind('"""')
    if close_at <= open_at:
        raise ParseError("no closing triple-quote after the task header")
    body = after[open_at + 3:close_at]
    task_desc = body.strip("\n").strip()
    if not task_desc:
        raise ParseError("empty task description")
    return reasoning, task_desc


def parse_code_block(raw: str, lang_tag: str = "python") -> str:
    """Body of the first fenced block tagged ``lang_tag``, else the first
    fenced block of any tag; byte-exact."""
    blocks: list[tuple[str, str]] = []
    lines = raw.split("\n")
    i = 0
    while i < len(lines):
        opened = _FENCE_OPEN.match(lines[i])
        if opened:
            fence, info = opened.group(1), opened.group(2).strip()
            body: list[str] = []
            i += 1
            while i < len(lines):
                stripped = lines[i].strip()
                if stripped == "`" * len(stripped) and len(stripped) >= len(fence):
                    break
                body.append(lines[i])
                i += 1
            blocks.append((info, "\n".join(body)))
        i += 1
    if not blocks:
        raise ParseError("no fenced code block in reply")
    for info, body in blocks:
        if info == lang_tag:
            return body
    return blocks[0][1]


_YES_NO = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


def parse_yes_no(raw: str, question_header: str) -> bool:
    """First Yes/No token after the question header."""
    header_at = raw.find(question_header)
    if header_at < 0:
        raise ParseError(f"missing header {question_header!r}")
    match = _YES_NO.search(raw, header_at + len(question_header))
    if not match:
        raise ParseError("no yes/no answer after the header")
    return match.group(1).lower() == "yes"


MOI_QUESTION_HEADER = "Is the new task interesting?"

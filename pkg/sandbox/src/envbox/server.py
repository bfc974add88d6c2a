"""Newline-JSON sandbox server.

Reads one request object per stdin line and writes exactly one reply
line per request, never anything else, so the engine on the other side
can trust the stream. A version handshake goes out first. Every request
runs under a wall-clock alarm, and the process chdirs into a scratch
directory at startup so generated code cannot write elsewhere by
accident.
"""
from __future__ import annotations

import argparse
import base64
import json
import os
import signal
import sys
import tempfile
import traceback

from . import __version__
from . import executor
from .executor import RequestTimeout

PROTOCOL = "envbox/1"

OPS = ("compile", "contract", "rollout", "success_check", "train", "train_stub")


def _alarm_handler(signum, frame):
    raise RequestTimeout()


def handle_request(request: dict, default_steps: int = 10) -> dict:
    if not isinstance(request, dict):
        return {"ok": False, "traceback": "request must be a JSON object"}
    op = request.get("op")
    if op not in OPS:
        return {"ok": False, "traceback": f"unknown op {op!r}"}
    env_code = request.get("env_code")
    if not isinstance(env_code, str) or not env_code:
        return {"ok": False, "traceback": "env_code must be a non-empty string"}

    if op == "compile":
        return executor.op_compile(env_code)
    if op == "contract":
        return executor.op_contract(env_code)
    if op == "rollout":
        max_steps = request.get("max_steps", default_steps)
        rng_seed = request.get("rng_seed", 0)
        if not isinstance(max_steps, int) or max_steps < 0:
            return {"ok": False, "traceback": "max_steps must be a non-negative integer"}
        if not isinstance(rng_seed, int):
            return {"ok": False, "traceback": "rng_seed must be an integer"}
        return executor.op_rollout(env_code, max_steps, rng_seed)
    if op == "success_check":
        blob = request.get("state_blob")
        if not isinstance(blob, str):
            return {"ok": False, "traceback": "state_blob must be a base64 string"}
        try:
            base64.b64decode(blob, validate=True)
        except Exception:
            return {"ok": False, "traceback": "state_blob is not valid base64"}
        return executor.op_success_check(env_code, blob.encode("ascii"))
    # train / train_stub
    budget = request.get("budget_steps", 100)
    rng_seed = request.get("rng_seed", 0)
    if not isinstance(budget, int) or budget <= 0:
        return {"ok": False, "failure_reason": "budget_steps must be a positive integer"}
    if not isinstance(rng_seed, int):
        return {"ok": False, "failure_reason": "rng_seed must be an integer"}
    return executor.op_train_stub(env_code, budget, rng_seed)


def serve(stdin=None, stdout=None, request_timeout_s: float = 30.0) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout

    def reply(obj: dict) -> None:
        stdout.write(json.dumps(obj) + "\n")
        stdout.flush()

    reply({"protocol": PROTOCOL, "version": __version__})
    use_alarm = request_timeout_s > 0 and hasattr(signal, "SIGALRM")
    if use_alarm:
        signal.signal(signal.SIGALRM, _alarm_handler)

    for line in stdin:
        if not line.strip():
            reply({"ok": False, "traceback": "empty request line"})
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            reply({"ok": False, "traceback": f"malformed JSON request: {exc}"})
            continue
        if use_alarm:
            signal.setitimer(signal.ITIMER_REAL, request_timeout_s)
        try:
            result = handle_request(request)
        except RequestTimeout:
            result = {"ok": False,
                      "traceback": f"request timed out after {request_timeout_s}s"}
        except BaseException:
            result = {"ok": False, "traceback": traceback.format_exc()}
        finally:
            if use_alarm:
                signal.setitimer(signal.ITIMER_REAL, 0)
        reply(result)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="envbox",
        description="Sandbox process for validating generated environment code.",
    )
    parser.add_argument("--request-timeout-s", type=float, default=30.0,
                        help="wall-clock cap per request (0 disables)")
    parser.add_argument("--scratch-dir", default=None,
                        help="working directory jail (default: a fresh temp dir)")
    parser.add_argument("--max-memory-mb", type=int, default=0,
                        help="address-space cap for the whole process (0 disables)")
    args = parser.parse_args(argv)

    scratch = args.scratch_dir or tempfile.mkdtemp(prefix="envbox-")
    os.makedirs(scratch, exist_ok=True)
    os.chdir(scratch)

    if args.max_memory_mb > 0:
        import resource

        limit = args.max_memory_mb * 1024 * 1024
        resource.setrlimit(resource.RLIMIT_AS, (limit, limit))

    serve(request_timeout_s=args.request_timeout_s)
    return 0


if __name__ == "__main__":
    sys.exit(main())

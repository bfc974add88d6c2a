"""Acceptance suite for the sandbox: one test per release criterion."""
import json
import random
import time

import pytest

import conftest
from conftest import SandboxClient, fixture_code

from envbox.executor import op_compile, op_contract, op_rollout

FIXTURE_NAMES = ("bridge_crossing", "lava_boat", "stairs_descent", "lever_door")


def report(name: str) -> None:
    conftest.ACCEPTANCE_RESULTS.append(f"PASS: {name}")


class TestSandboxContract:
    def test_fixture_envs_and_failure_modes(self):
        for name in FIXTURE_NAMES:
            code = fixture_code(name)
            assert op_compile(code)["ok"], name
            assert op_contract(code)["ok"], name
            rollout = op_rollout(code, 10, 0)
            assert rollout["ok"], (name, rollout.get("traceback"))

        bridge = op_rollout(fixture_code("bridge_crossing"), 10, 0)
        assert set(bridge["reward_keys"]) == {"survival", "reach_platform_end"}

        gutted = fixture_code("bridge_crossing").rpartition("    def get_success(self):")[0]
        broken_contract = op_contract(gutted)
        assert broken_contract["ok"] is False
        assert "get_success" in broken_contract["traceback"]

        crash = op_rollout(fixture_code("divide_by_zero"), 10, 0)
        assert crash["ok"] is False
        assert "ZeroDivisionError" in crash["traceback"]

        prompts = pytest.importorskip("openloop.prompts")
        bundle = prompts.render_env_reflect(
            fixture_code("divide_by_zero"), crash["traceback"],
            robot_desc="robot", model_name="m",
        )
        assert crash["traceback"] in bundle.user_text

        report("four example envs pass compile+contract+rollout; bridge reward keys "
               "{survival, reach_platform_end}; gutted/crashing envs fail with "
               "verbatim-reusable tracebacks")


class TestProtocolRobustness:
    def test_thousand_fuzzed_lines_and_two_second_timeout(self):
        client = SandboxClient("--request-timeout-s", "2")
        try:
            rng = random.Random(31337)
            fragments = ["{", "}", '"op":', '"compile"', "null,", "[[", "]]",
                         "\\x00", "nonsense", '{"op": []}', '"env_code":',
                         '{"op": "success_check", "env_code": "x", "state_blob": 7}']
            for i in range(1000):
                line = "".join(rng.choice(fragments)
                               for _ in range(rng.randrange(1, 5))).replace("\n", " ")
                client.send_raw(line)
                reply = json.loads(client.read_line(timeout=10))
                assert reply["ok"] is False, (i, line)
            assert client.alive()

            started = time.monotonic()
            reply = client.request(
                {"op": "rollout", "env_code": fixture_code("infinite_loop"),
                 "max_steps": 3, "rng_seed": 0},
                timeout=20,
            )
            elapsed = time.monotonic() - started
            assert reply["ok"] is False
            assert "timed out" in reply["traceback"]
            assert elapsed < 6.0
            assert client.alive()
        finally:
            client.close()
        report("1000 fuzzed requests each got one structured error reply with no "
               f"crash; infinite loop cut off by the 2s request timeout "
               f"({elapsed:.1f}s)")

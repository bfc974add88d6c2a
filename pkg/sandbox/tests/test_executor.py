import base64
import json

import pytest

from envbox.executor import (
    op_compile,
    op_contract,
    op_rollout,
    op_success_check,
    op_train_stub,
)

from conftest import fixture_code

FIXTURE_NAMES = ("bridge_crossing", "lava_boat", "stairs_descent", "lever_door")


class TestCompile:
    @pytest.mark.parametrize("name", FIXTURE_NAMES)
    def test_example_envs_compile(self, name):
        assert op_compile(fixture_code(name)) == {"ok": True}

    def test_undefined_name_at_module_scope(self):
        reply = op_compile("value = undefined_thing + 1\n")
        assert reply["ok"] is False
        assert "NameError" in reply["traceback"]
        assert "undefined_thing" in reply["traceback"]

    def test_syntax_error(self):
        reply = op_compile("def broken(:\n")
        assert reply["ok"] is False
        assert "SyntaxError" in reply["traceback"]


class TestContract:
    @pytest.mark.parametrize("name", FIXTURE_NAMES)
    def test_example_envs_expose_all_five_methods(self, name):
        reply = op_contract(fixture_code(name))
        assert reply["ok"] is True
        assert set(reply["methods_found"]) == {
            "reset", "step", "get_task_rewards", "get_terminated", "get_success",
        }

    def test_removed_get_success_fails(self):
        code = fixture_code("bridge_crossing")
        head, _, _ = code.rpartition("    def get_success(self):")
        reply = op_contract(head)
        assert reply["ok"] is False
        assert "get_success" in reply["traceback"]

    def test_no_env_class_fails(self):
        reply = op_contract("class Other:\n    pass\n")
        assert reply["ok"] is False
        assert "Env" in reply["traceback"]

    def test_env_must_be_a_class(self):
        reply = op_contract("Env = 42\n")
        assert reply["ok"] is False


class TestRollout:
    def test_bridge_ten_steps_reports_expected_reward_keys(self):
        reply = op_rollout(fixture_code("bridge_crossing"), 10, 0)
        assert reply["ok"] is True
        assert set(reply["reward_keys"]) == {"survival", "reach_platform_end"}

    @pytest.mark.parametrize("name", FIXTURE_NAMES)
    def test_example_envs_survive_ten_random_steps(self, name):
        reply = op_rollout(fixture_code(name), 10, 123)
        assert reply["ok"] is True, reply.get("traceback")

    def test_divide_by_zero_fails_with_traceback(self):
        reply = op_rollout(fixture_code("divide_by_zero"), 10, 0)
        assert reply["ok"] is False
        assert "ZeroDivisionError" in reply["traceback"]
        assert "step_count - 3" in reply["traceback"]

    def test_zero_steps_is_ok(self):
        reply = op_rollout(fixture_code("bridge_crossing"), 0, 0)
        assert reply["ok"] is True
        assert reply["reward_keys"] == []

    def test_deterministic_given_seed(self):
        a = op_rollout(fixture_code("lava_boat"), 10, 42)
        b = op_rollout(fixture_code("lava_boat"), 10, 42)
        assert a == b


class TestSuccessCheck:
    def _teleported_blob(self, reply, position):
        state = json.loads(base64.b64decode(reply["final_state_blob"]))
        state["bodies"][str(state["robot_id"])]["position"] = position
        return base64.b64encode(json.dumps(state).encode()).decode()

    def test_robot_on_end_platform_is_success(self):
        code = fixture_code("bridge_crossing")
        trained = op_train_stub(code, 20, 7)
        assert trained["ok"]
        # the end platform is 30 m out; its top sits at z = 0.25
        blob = self._teleported_blob(trained, [30.0, 0.0, 0.75])
        reply = op_success_check(code, blob.encode())
        assert reply == {"ok": True, "success": True}

    def test_fresh_reset_state_is_not_success(self):
        code = fixture_code("bridge_crossing")
        trained = op_train_stub(code, 1, 7)
        reply = op_success_check(code, trained["final_state_blob"].encode())
        assert reply["ok"] is True
        assert reply["success"] is False

    def test_corrupted_blob_fails(self):
        reply = op_success_check(fixture_code("bridge_crossing"), b"@@not-base64@@")
        assert reply["ok"] is False
        assert reply["traceback"]

    def test_restored_attrs_drive_success(self):
        code = fixture_code("lever_door")
        trained = op_train_stub(code, 5, 3)
        blob = self._teleported_blob(trained, [12.0, 0.0, 0.3])
        reply = op_success_check(code, blob.encode())
        assert reply == {"ok": True, "success": True}


class TestTrainStub:
    def test_reply_shape(self):
        reply = op_train_stub(fixture_code("stairs_descent"), 50, 11)
        assert reply["ok"] is True
        assert set(reply) == {"ok", "success", "steps_used", "failure_reason",
                              "policy_artifact", "final_state_blob"}
        assert reply["steps_used"] <= 50
        base64.b64decode(reply["final_state_blob"], validate=True)

    def test_budget_capped(self):
        reply = op_train_stub(fixture_code("stairs_descent"), 2_000_000, 1)
        assert reply["ok"]
        assert reply["steps_used"] <= 1000

    def test_broken_env_reports_failure_reason(self):
        reply = op_train_stub(fixture_code("divide_by_zero"), 50, 1)
        assert reply["ok"] is False
        assert "ZeroDivisionError" in reply["failure_reason"]

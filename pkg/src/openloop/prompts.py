"""Prompt templates and renderers for every completion the loop makes.

Templates are plain ``str.replace`` substitution over named slots such as
{ROBOT_DESC} and {ENV_CODES_LEARNED}. Rendering is pure: the same inputs
always produce byte-identical bundles. Example sections that would be
empty render an explicit "(none)" line, and free text dropped into quoted
or fenced regions is escaped so the surrounding template stays
well-formed.
"""
from __future__ import annotations

from typing import Iterable, Optional, Sequence

from .gateway import PromptBundle, PromptKind

TRACEBACK_TAIL_BYTES = 20_000

TASK_GEN_SYSTEM = """You are an expert in curriculum learning and reinforcement learning. Your goal is to help a robot master a diverse set of interesting tasks in simulation using PyBullet. You will be provided with the list of tasks that the robot has successfully learned, along with their corresponding environment code, and the list of tasks that the robot has attempted but failed to learn, along with their corresponding environment code. Your objective is to decide the next task for the robot, selecting one that will maximize learning effectiveness based on its past successes and failures.

Instructions:
- The next task should be learnable:
    - Not too difficult for the robot to learn given its current skill set.
    - Realistic for the robot based on its description.
    - Possible to complete in simulation in PyBullet.
- The next task should be interesting, i.e., either:
    - Novel compared to the tasks the robot has already learned. You can either add complexity gradually on an existing task or design a radically novel task from scratch.
    - Useful according to humans, making it worth learning.
    - Creative or surprising.
    - Optionally, the task can be fun and engaging to watch.
- Be specific in the task description:
    - State clearly what the task of the robot is.
    - If the task involves objects, be specific about their positions and orientations relative to the robot. Be careful to avoid collisions between objects or with the robot when you decide on the initial positions.
    - If the task involves dynamically moving objects, be specific about their movement.
- You can draw inspiration from real-world tasks or video games. Be creative!
- The task should not take too long to complete.
- The robot can push objects around but lacks the ability to grab, pick up, carry, or stack objects. Don't suggest tasks that involve these skills.
- Don't suggest tasks that require the robot to navigate through a maze.
- Return only the task description, not the environment code.
- Ensure that the designs pose no harm to humans and align with human values and ethics.

Robot description:
{ROBOT_DESC}

Desired format:
Reasoning for what the next task should be:
<reasoning>

Next task description:
\"\"\"
<task description>
\"\"\""""

# Variant with every learnability notion removed; used when the run is
# configured to select tasks on novelty alone.
TASK_GEN_SYSTEM_NO_LEARNABILITY = """You are an expert in reinforcement learning. Your goal is to help a robot master a diverse set of interesting tasks in simulation using PyBullet. You will be provided with the list of tasks that the robot has successfully learned, along with their corresponding environment code, and the list of tasks that the robot has attempted but failed to learn, along with their corresponding environment code. Your objective is to decide the next task for the robot, selecting one that is interesting and novel.

Instructions:
- The next task should be interesting:
    - Novel and creative compared to the tasks the robot has already tried.
    - Useful according to humans.
    - Design rich environments with a large number of diverse objects and terrains, and with a clear task for the robot to execute.
    - The task should be fun or engaging to watch. You can draw inspiration from real-world tasks or video games. Be creative!
- Be specific in the task description:
    - State clearly what the task of the robot is.
    - Define clearly what the success condition is.
    - Define clearly what are the different reward and penalty components.
    - Define clearly what the termination conditions are. If the reward components include a survival reward, ensure the episode only terminates when the agent fails the task.
- The task should not take too long to complete.
- The robot can push objects around but lacks the ability to grab, pick up, carry, or stack objects. Don't suggest tasks that involve these skills.
- Don't suggest tasks that require the robot to navigate through a maze.
- If the task involves navigating a terrain with obstacles, make sure that the robot can not go around the obstacles.
- If the task involves a target zone, make sure that the collision of the target zone is set to False.
- Return only the task description, not the environment code.
- Ensure that the designs pose no harm to humans and align with human values and ethics.

Robot description:
{ROBOT_DESC}

Desired format:
Reasoning for what the next task should be:
<reasoning>

Next task description:
\"\"\"
<task description>
\"\"\""""

# Variant with every notion of interestingness removed; used by the
# gate-free control runs. Must never contain the word "interesting".
TASK_GEN_SYSTEM_NO_INTERESTINGNESS = """You are an expert in curriculum learning and reinforcement learning. Your goal is to help a robot master a diverse set of tasks in simulation using PyBullet. You will be provided with the list of tasks that the robot has successfully learned, along with their corresponding environment code, and the list of tasks that the robot has attempted but failed to learn, along with their corresponding environment code. Your objective is to decide the next task for the robot, selecting one that will maximize learning effectiveness based on its past successes and failures.

Instructions:
- The next task should be learnable:
    - Not too difficult for the robot to learn given its current skill set.
    - Realistic for the robot based on its description.
    - Possible to complete in simulation in PyBullet.
- Be specific in the task description:
    - State clearly what the task of the robot is.
    - If the task involves objects, be specific about their positions and orientations relative to the robot. Be careful to avoid collisions between objects or with the robot when you decide on the initial positions.
    - If the task involves dynamically moving objects, be specific about their movement.
- The task should not take too long to complete.
- The robot can push objects around but lacks the ability to grab, pick up, carry, or stack objects. Don't suggest tasks that involve these skills.
- Don't suggest tasks that require the robot to navigate through a maze.
- Return only the task description, not the environment code.
- Ensure that the designs pose no harm to humans and align with human values and ethics.

Robot description:
{ROBOT_DESC}

Desired format:
Reasoning for what the next task should be:
<reasoning>

Next task description:
\"\"\"
<task description>
\"\"\""""

TASK_GEN_USER = """Environment code examples:
{ENV_CODES_EXAMPLE}

Learned tasks and environment code:
{ENV_CODES_LEARNED}

Failed tasks and environment code:
{ENV_CODES_FAILED}"""

ENV_GEN_SYSTEM = """You are an expert in Python programming and reinforcement learning. Your goal is to implement an environment in PyBullet specifically designed to train a robot for a given task. You will be provided with the task description and with pairs of task description and environment code. Your objective is to write environment code that rigorously aligns with the task description, helping the robot learn the task as effectively as possible.

Instructions:
- Write code without using placeholders.
- Don't change the import statements.
- For each object, always define its size first, and ensure the object's initial position is set relative to the platform it starts on or any other object, as demonstrated in the provided environment code examples. For example, if an object is initialized on the ground, define its position as: [self.platform_position[0], self.platform_position[1], self.platform_position[2] + self.platform_size[2] / 2 + self.object_size[2] / 2].
- Ensure the robot's initial position is set relative to the platform it starts on, as demonstrated in the provided environment code examples. For example, if the robot starts on a platform, its initial position should be set to [self.platform_position[0], self.platform_position[1], self.platform_position[2] + self.platform_size[2] / 2 + self.robot.links["base"].position_init[2]].
- If the task involves navigating a terrain with obstacles, make sure that the robot cannot go around the obstacles.
- Implement the methods `Env.reset()`, `Env.step()`, `Env.get_task_rewards()`, `Env.get_terminated()`, `Env.get_success()`. You can implement additional methods if needed.
- `Env.get_task_rewards()` returns a dictionary with the different reward components to help the robot learn the task. You should implement dense reward components that are easy to optimize and defined in the range -10. to 10.
- `Env.get_terminated()` returns a boolean that indicates whether the episode is terminated.
- `Env.get_success()` returns a boolean that indicates whether the task is successfully completed.

Robot description:
{ROBOT_DESC}

Desired format:
Environment code:
```python
<environment code>
```"""

ENV_GEN_USER = """Pairs of task description and environment code:
{ENV_CODES_EXAMPLE}

Task description:
{TASK_DESC}"""

ENV_REFLECT_SYSTEM = """You are an expert in Python programming and reinforcement learning. Your goal is to implement an environment in PyBullet specifically designed to train a robot for a given task. You will be provided with environment code examples, with an environment code that returns an error when executed and with the specific error that was encountered. Your objective is to reason about the error and provide a new, improved environment code with no error.

Instructions:
- Write code without using placeholders.
- Don't change the import statements.
- For each object, always define its size first, and ensure the object's initial position is set relative to the platform it starts on or any other object, as demonstrated in the provided environment code examples. For example, if an object is initialized on the ground, define its position as: [self.platform_position[0], self.platform_position[1], self.platform_position[2] + self.platform_size[2] / 2 + self.object_size[2] / 2].
- Ensure the robot's initial position is set relative to the platform it starts on, as demonstrated in the provided environment code examples. For example, if the robot starts on a platform, its initial position should be set to [self.platform_position[0], self.platform_position[1], self.platform_position[2] + self.platform_size[2] / 2 + self.robot.links["base"].position_init[2]].
- If the task involves navigating a terrain with obstacles, make sure that the robot cannot go around the obstacles.
- Implement the methods `Env.reset()`, `Env.step()`, `Env.get_task_rewards()`, `Env.get_terminated()`, `Env.get_success()`. You can implement additional methods if needed.
- `Env.get_task_rewards()` returns a dictionary with the different reward components to help the robot learn the task. You should implement dense reward components that are easy to optimize and defined in the range -10. to 10.
- `Env.get_terminated()` returns a boolean that indicates whether the episode is terminated.
- `Env.get_success()` returns a boolean that indicates whether the task is successfully completed.

Robot description:
{ROBOT_DESC}

Desired format:
How to solve the error:
<reasoning>

Environment code:
```python
<environment code>
```"""

ENV_REFLECT_USER = """Environment code examples:
{ENV_CODES_EXAMPLE}

Environment code with error:
{ENV_CODE}

Error:
{ERROR}"""

MOI_SYSTEM = """You are an expert in curriculum learning and reinforcement learning. Your goal is to help a robot master a diverse set of interesting tasks in simulation using PyBullet. You will be provided with a list of old tasks and with a new task. Your objective is to determine whether the new task is interesting or not.

The new task can be considered interesting if one of the following is true, the new task is:
- Novel compared to the old tasks, to build a diverse skill set.
- Creative or surprising.
- Fun or engaging to watch.
- Not too easy for the robot to learn given its current skill set, progressing toward more complex challenges.
- Useful according to humans, making it worth learning.

Robot description:
{ROBOT_DESC}

Desired format:
Reasoning for why the new task is interesting or not:
<reasoning>

Is the new task interesting?:
<Yes/No>"""

MOI_USER = """Old tasks:
{ENV_CODES_EXAMPLE}

New task:
{ENV_CODE}"""

TASK_REFLECT_SYSTEM = """You are an expert in Python programming and reinforcement learning. Your goal is to adjust an environment in PyBullet so that a robot can learn a given task. You will be provided with environment code examples, with the task description, and with an environment code that the robot attempted but failed to learn. Your objective is to modify the environment code to aid in the robot's learning, for example by changing the reward function or by making the physical world less complex, while staying aligned with the task description.

Instructions:
- Write code without using placeholders.
- Don't change the import statements.
- Keep the task recognizably the same; simplify it rather than replacing it.
- Implement the methods `Env.reset()`, `Env.step()`, `Env.get_task_rewards()`, `Env.get_terminated()`, `Env.get_success()`. You can implement additional methods if needed.
- `Env.get_task_rewards()` returns a dictionary with the different reward components to help the robot learn the task. You should implement dense reward components that are easy to optimize and defined in the range -10. to 10.
- `Env.get_terminated()` returns a boolean that indicates whether the episode is terminated.
- `Env.get_success()` returns a boolean that indicates whether the task is successfully completed.

Robot description:
{ROBOT_DESC}

Desired format:
How to make the task learnable:
<reasoning>

Environment code:
```python
<environment code>
```"""

TASK_REFLECT_USER = """Environment code examples:
{ENV_CODES_EXAMPLE}

Task description:
{TASK_DESC}

Environment code the robot failed to learn:
{ENV_CODE}

Learning result:
{ERROR}"""

EMPTY_SECTION = "(none)"


def escape_triple_quotes(text: str) -> str:
    return text.replace('"""', '\\"\\"\\"')


def fence_for(code: str) -> str:
    """Shortest backtick fence longer than any backtick run in the code."""
    longest = 0
    run = 0
    for ch in code:
        run = run + 1 if ch == "`" else 0
        longest = max(longest, run)
    return "`" * max(3, longest + 1)


def format_code_block(code: str, lang_tag: str = "python") -> str:
    fence = fence_for(code)
    return f"{fence}{lang_tag}\n{code.rstrip()}\n{fence}"


def format_task_example(description: str, env_code: str, lang_tag: str = "python") -> str:
    parts = [
        "Task description:",
        '"""',
        escape_triple_quotes(description.rstrip()),
        '"""',
    ]
    if env_code:
        parts += ["", "Environment code:", format_code_block(env_code, lang_tag)]
    return "\n".join(parts)


def format_task_examples(pairs: Iterable[tuple[str, str]], lang_tag: str = "python") -> str:
    rendered = [format_task_example(d, c, lang_tag) for d, c in pairs]
    return "\n\n".join(rendered) if rendered else EMPTY_SECTION


def format_code_examples(codes: Iterable[str], lang_tag: str = "python") -> str:
    rendered = [format_code_block(c, lang_tag) for c in codes]
    return "\n\n".join(rendered) if rendered else EMPTY_SECTION


def _fill(template: str, slots: dict[str, str]) -> str:
    out = template
    for name, value in slots.items():
        out = out.replace("{" + name + "}", value)
    return out


def render_task_gen(
    robot_desc: str,
    learned: Sequence[tuple[str, str]],
    failed: Sequence[tuple[str, str]],
    env_examples: Sequence[str],
    *,
    model_name: str,
    temperature: float = 0.0,
    lang_tag: str = "python",
    no_interestingness: bool = False,
    no_learnability: bool = False,
) -> PromptBundle:
    """Build the next-task prompt from (description, code) example pairs."""
    if no_interestingness:
        system_template = TASK_GEN_SYSTEM_NO_INTERESTINGNESS
    elif no_learnability:
        system_template = TASK_GEN_SYSTEM_NO_LEARNABILITY
    else:
        system_template = TASK_GEN_SYSTEM
    system_text = _fill(system_template, {"ROBOT_DESC": robot_desc})
    user_text = _fill(
        TASK_GEN_USER,
        {
            "ENV_CODES_EXAMPLE": format_code_examples(env_examples, lang_tag),
            "ENV_CODES_LEARNED": format_task_examples(learned, lang_tag),
            "ENV_CODES_FAILED": format_task_examples(failed, lang_tag),
        },
    )
    return PromptBundle(PromptKind.TASK_GEN, system_text, user_text, temperature, model_name)


def render_env_gen(
    task_desc: str,
    examples: Sequence[tuple[str, str]],
    *,
    robot_desc: str,
    model_name: str,
    temperature: float = 0.0,
    lang_tag: str = "python",
    fallback_examples: Optional[Sequence[tuple[str, str]]] = None,
) -> PromptBundle:
    """Build the description-to-code prompt; shipped example environments
    fill in when the caller has none."""
    pairs = list(examples) or list(fallback_examples or ())
    system_text = _fill(ENV_GEN_SYSTEM, {"ROBOT_DESC": robot_desc})
    user_text = _fill(
        ENV_GEN_USER,
        {
            "ENV_CODES_EXAMPLE": format_task_examples(pairs, lang_tag),
            "TASK_DESC": escape_triple_quotes(task_desc.rstrip()),
        },
    )
    return PromptBundle(PromptKind.ENV_GEN, system_text, user_text, temperature, model_name)


def truncate_traceback(traceback_text: str, limit: int = TRACEBACK_TAIL_BYTES) -> str:
    """Keep the last ``limit`` bytes; the tail carries the error site."""
    encoded = traceback_text.encode("utf-8")
    if len(encoded) <= limit:
        return traceback_text
    tail = encoded[-limit:].decode("utf-8", errors="ignore")
    return f"[... truncated to last {limit} bytes ...]\n{tail}"


def render_env_reflect(
    env_code: str,
    error_traceback: str,
    *,
    robot_desc: str,
    model_name: str,
    temperature: float = 0.0,
    lang_tag: str = "python",
    examples: Sequence[tuple[str, str]] = (),
) -> PromptBundle:
    """Build the fix-this-error prompt from failing code and its traceback."""
    if not error_traceback:
        raise ValueError("error_traceback must be non-empty")
    system_text = _fill(ENV_REFLECT_SYSTEM, {"ROBOT_DESC": robot_desc})
    user_text = _fill(
        ENV_REFLECT_USER,
        {
            "ENV_CODES_EXAMPLE": format_task_examples(examples, lang_tag),
            "ENV_CODE": format_code_block(env_code, lang_tag),
            "ERROR": truncate_traceback(error_traceback),
        },
    )
    return PromptBundle(PromptKind.ENV_REFLECT, system_text, user_text, temperature, model_name)


def render_moi(
    old_tasks: Sequence[tuple[str, str]],
    new_task: tuple[str, str],
    *,
    robot_desc: str,
    model_name: str,
    temperature: float = 0.0,
    lang_tag: str = "python",
) -> PromptBundle:
    """Build the is-this-new-task-interesting prompt."""
    system_text = _fill(MOI_SYSTEM, {"ROBOT_DESC": robot_desc})
    user_text = _fill(
        MOI_USER,
        {
            "ENV_CODES_EXAMPLE": format_task_examples(old_tasks, lang_tag),
            "ENV_CODE": format_task_example(new_task[0], new_task[1], lang_tag),
        },
    )
    return PromptBundle(PromptKind.MOI, system_text, user_text, temperature, model_name)


def render_task_reflect(
    task_desc: str,
    env_code: str,
    failure_summary: str,
    *,
    robot_desc: str,
    model_name: str,
    temperature: float = 0.0,
    lang_tag: str = "python",
    examples: Sequence[tuple[str, str]] = (),
) -> PromptBundle:
    """Build the make-this-task-learnable prompt after a failed training run."""
    system_text = _fill(TASK_REFLECT_SYSTEM, {"ROBOT_DESC": robot_desc})
    user_text = _fill(
        TASK_REFLECT_USER,
        {
            "ENV_CODES_EXAMPLE": format_task_examples(examples, lang_tag),
            "TASK_DESC": escape_triple_quotes(task_desc.rstrip()),
            "ENV_CODE": format_code_block(env_code, lang_tag),
            "ERROR": truncate_traceback(failure_summary or "The robot failed to learn the task."),
        },
    )
    return PromptBundle(PromptKind.TASK_REFLECT, system_text, user_text, temperature, model_name)

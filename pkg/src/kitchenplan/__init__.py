"""Multi-robot kitchen task planning with checks, reflection memory and self-improving iterations."""

from .bench import BenchConfig, BenchReport, reflect_success_rate, run_bench
from .loop import EpisodeConfig, EpisodeMetrics, EpisodeTrace, ReflectionDB, run_episode
from .plan import Plan, Subtask, layers, plan_length, validate
from .tasks import TASK_NAMES, canonical_plan, get_task, instantiate_task
from .world import Scenario, WorldState, load_scenario

__all__ = [
    "BenchConfig",
    "BenchReport",
    "EpisodeConfig",
    "EpisodeMetrics",
    "EpisodeTrace",
    "Plan",
    "ReflectionDB",
    "Scenario",
    "Subtask",
    "TASK_NAMES",
    "WorldState",
    "canonical_plan",
    "get_task",
    "instantiate_task",
    "layers",
    "load_scenario",
    "plan_length",
    "reflect_success_rate",
    "run_bench",
    "run_episode",
    "validate",
]

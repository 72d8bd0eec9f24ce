"""Experiment harness: scenario configs, pipelines, suites, CLI, reports.

One JSON scenario drives everything: the closed-set layout, the atomic
measure, the kernel, the constant block, the master seed, and the
quadrature budget. Pipelines re-verify the constructions end to end and
emit one record per check; the CLI wraps the named suites and writes
JSON-lines reports plus CSV summaries for the ladder-shaped ones.
"""

from .scenario import (ParamBlock, Scenario, ScenarioError, build_closed_set,
                       build_kernel, build_measure, load_scenario,
                       parse_scenario, quadrature_config, scenario_rng)
from .scenarios import builtin_names, builtin_scenario
from .reports import canonical_jsonl, write_csv, write_jsonl
from .pipelines import (StoppingSets, check_tb_hypotheses,
                        good_lambda_experiment, stopping_sets_pipeline,
                        worst_subset_variation)
from .suites import SUITE_ORDER, Workspace, run_scenario, run_suites

__all__ = [
    "ParamBlock", "Scenario", "ScenarioError", "StoppingSets",
    "SUITE_ORDER", "Workspace", "build_closed_set", "build_kernel",
    "build_measure", "builtin_names", "builtin_scenario", "canonical_jsonl",
    "check_tb_hypotheses", "good_lambda_experiment", "load_scenario",
    "parse_scenario", "quadrature_config", "run_scenario", "run_suites",
    "scenario_rng", "stopping_sets_pipeline", "worst_subset_variation",
    "write_csv", "write_jsonl",
]

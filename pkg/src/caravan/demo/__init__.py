"""Evacuation-planning demo: surrogate simulator plus objective functions."""

from .city import (
    CityModel,
    DemoError,
    EvacuationPlan,
    default_city,
    evaluate,
    evaluator_template,
    genome_bounds,
    load_city,
    objective_f2,
    objective_f3,
    plan_from_values,
    save_city,
    shelter_loads,
    surrogate_f1,
    values_from_plan,
)
from .virtual import demo_task_fn

__all__ = [
    "CityModel",
    "DemoError",
    "EvacuationPlan",
    "default_city",
    "demo_task_fn",
    "evaluate",
    "evaluator_template",
    "genome_bounds",
    "load_city",
    "objective_f2",
    "objective_f3",
    "plan_from_values",
    "save_city",
    "shelter_loads",
    "surrogate_f1",
    "values_from_plan",
]

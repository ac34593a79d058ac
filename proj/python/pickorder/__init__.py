"""Manipulation-ordering engine: spatial priors, learned scoring and a pick simulator."""

from ._core import (
    DEFAULT_TAU,
    Error,
    compute_flags,
    generate_scene,
    grad_check,
    kendall_tau,
    label_scene,
    levenshtein,
    perturb_pairs,
    plackett_luce_aggregate,
    run_cli,
    run_episode,
    solve_assignment,
    sph_order,
)

__all__ = [
    "DEFAULT_TAU",
    "Error",
    "compute_flags",
    "generate_scene",
    "grad_check",
    "kendall_tau",
    "label_scene",
    "levenshtein",
    "perturb_pairs",
    "plackett_luce_aggregate",
    "run_cli",
    "run_episode",
    "solve_assignment",
    "sph_order",
]

"""Overlapping-cell cache networks: simulator, analytic model, static placement.

Topologies and catalogs are given as the same dicts used in experiment
config files, e.g. ``{"kind": "trefoil", "B": 3, "d": 2}`` and
``{"F": 1000, "s": 0.8, "total_rate": 1.0}``.
"""

from ._core import (
    CapacityError,
    ConfigError,
    ConvergenceError,
    ParameterError,
    exhaustive_optimal,
    greedy,
    model,
    run,
    simulate,
    solve_network,
    solve_trefoil,
    topology,
    zipf,
)

__all__ = [
    "CapacityError",
    "ConfigError",
    "ConvergenceError",
    "ParameterError",
    "exhaustive_optimal",
    "greedy",
    "model",
    "run",
    "simulate",
    "solve_network",
    "solve_trefoil",
    "topology",
    "zipf",
]

"""Cached solves shared across test modules, plus acceptance-result recording."""

from __future__ import annotations

import functools
import math

import numpy as np

from ahvortex import DomainSpec, SolverOptions, builtin_classical, model_from_selector, solve
from ahvortex.geometry import parse_configuration
from ahvortex.oracle import shoot_radial

TORUS_L = math.sqrt(50.0)
RESULTS: dict = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    RESULTS[criterion] = (bool(ok), detail)


def acceptance_lines() -> list:
    return [f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {d}" for k, (ok, d) in sorted(RESULTS.items())]


@functools.lru_cache(maxsize=None)
def torus_solution(text: str, n: int = 256, model: str = "classical", algorithm: str = "newton",
                   lengths=(TORUS_L, TORUS_L), force: bool = False):
    spec = DomainSpec("torus", lengths, (n, n))
    m = model_from_selector(model)
    return solve(spec, parse_configuration(text), m, SolverOptions(algorithm, force=force)), m


@functools.lru_cache(maxsize=None)
def plane_solution(text: str, n: int = 256, box: float = 40.0, model: str = "classical",
                   algorithm: str = "newton"):
    spec = DomainSpec("plane", (box, box), (n, n))
    m = model_from_selector(model)
    return solve(spec, parse_configuration(text), m, SolverOptions(algorithm)), m


@functools.lru_cache(maxsize=None)
def radial_profile(model: str = "classical", multiplicity: int = 1):
    return shoot_radial(model_from_selector(model), multiplicity)


def classical():
    return builtin_classical()


def radius_grid(spec, center=(0.0, 0.0)):
    dx, dy = spec.displacement(center)
    return np.hypot(dx, dy)

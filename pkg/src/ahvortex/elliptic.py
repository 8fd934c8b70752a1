"""Solvers for the governing equation

    lap v = 4 s f(s) - 2 + 4 pi sum delta_q - 4 pi sum delta_p,   s = e^v,

on the flat torus (with the constant-mode constraint fixing ``c``) and on a
truncated plane box with ``v = 0`` on the boundary.

The unknown is always split as ``v = v0 + phi (+ c)`` with ``v0`` from
:mod:`ahvortex.geometry`; the reduced equation ``lap phi = N(v) - R0`` is
source free, where ``N`` is the nonlinearity and ``R0`` the regular part of
``lap v0``. Stopping tests use the L-infinity norm of its residual.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize
from scipy.sparse.linalg import LinearOperator, cg

from . import operators
from .coupling import CouplingModel
from .geometry import (BackgroundField, ConfigError, DomainSpec, GridField,
                       VortexConfiguration, plane_background, torus_background)

logger = logging.getLogger(__name__)

ALGORITHMS = ("newton", "picard", "monotone")


class InfeasibleError(RuntimeError):
    """The constant-mode constraint has no root (empty admissible range)."""


class MonotonicityError(RuntimeError):
    """A monotone iterate left the sub/supersolution bracket."""


@dataclass
class SolverOptions:
    algorithm: str = "newton"
    max_iters: Optional[int] = None
    residual_tol: float = 1e-9
    linear_tol: float = 1e-10
    damping: float = 1.0
    core_scale: float = 1.0
    force: bool = False
    picard_shift: Optional[float] = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.max_iters is None:
            self.max_iters = 60 if self.algorithm == "newton" else 5000
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if not self.residual_tol > 0:
            raise ConfigError("residual_tol must be positive")
        if not 0 < self.damping <= 1:
            raise ConfigError("damping must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm, "max_iters": self.max_iters,
            "residual_tol": self.residual_tol, "linear_tol": self.linear_tol,
            "damping": self.damping, "core_scale": self.core_scale,
            "force": self.force, "picard_shift": self.picard_shift,
        }


@dataclass
class ScalarSolution:
    v_total: GridField
    phi: GridField
    c: float
    iterations: int
    final_residual: float
    converged: bool
    feasibility: str
    config: VortexConfiguration
    background: Optional[BackgroundField] = None
    model_name: str = ""
    algorithm: str = "newton"
    C0: Optional[float] = None
    history: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    bracket: Optional[tuple] = None
    iterates: Optional[list] = None

    @property
    def domain(self) -> DomainSpec:
        return self.v_total.domain

    def metadata(self) -> dict:
        out = {
            "c": self.c, "iterations": self.iterations, "residual": self.final_residual,
            "converged": self.converged, "feasibility": self.feasibility,
            "algorithm": self.algorithm, "model": self.model_name,
        }
        if self.C0 is not None:
            out["C0"] = self.C0
        out.update({k: self.stats[k] for k in sorted(self.stats)})
        if self.notes:
            out["notes"] = list(self.notes)
        return out


# ---------------------------------------------------------------------------
# feasibility on the torus


def bradlow_check(spec: DomainSpec, config: VortexConfiguration) -> str:
    """``feasible`` iff ``|M - N| < |S|/(2 pi)``; ``marginal`` within 1% of
    the bound, ``violated`` otherwise."""
    if spec.kind != "torus":
        raise ConfigError("the Bradlow bound applies to the torus only")
    bound = spec.area / (2 * math.pi)
    d = abs(config.M - config.N)
    if d >= bound:
        return "violated"
    if d > 0.99 * bound:
        return "marginal"
    return "feasible"


def constant_mode_C0(spec: DomainSpec, config: VortexConfiguration) -> float:
    return 2.0 - 4.0 * math.pi * (config.M - config.N) / spec.area


def solve_c_constraint(base, model: CouplingModel, C0: float, tol: float = 1e-12,
                       c_limit: float = 1e3) -> float:
    """Unique ``c`` with ``mean(sf(base + c)) = C0/4``.

    ``base`` is ``v0 + phi`` (GridField or array). The mean over the uniform
    grid is the midpoint quadrature of the integral divided by ``|S|``.
    """
    b = base.values if isinstance(base, GridField) else np.asarray(base, dtype=float)
    target = 0.25 * C0

    def g(c):
        return float(np.mean(model.sf_log(b + c))) - target

    if g(0.0) == 0.0:
        return 0.0
    lo, hi = -1.0, 1.0
    while g(lo) > 0:
        lo *= 2
        if abs(lo) > c_limit:
            raise InfeasibleError(f"no c bracket within |c| <= {c_limit:g} (C0 = {C0:.6g})")
    while g(hi) < 0:
        hi *= 2
        if abs(hi) > c_limit:
            raise InfeasibleError(f"no c bracket within |c| <= {c_limit:g} (C0 = {C0:.6g})")
    c = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(g(c)) > tol:
        # flat g near saturation: finish by bisection on the sign
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if g(mid) < 0:
                lo = mid
            else:
                hi = mid
        c = 0.5 * (lo + hi)
    return float(c)


# ---------------------------------------------------------------------------
# shared machinery


class _Problem:
    """Discrete reduced problem ``lap phi = N(v0 + phi + c) - R0``."""

    def __init__(self, spec: DomainSpec, bg: BackgroundField, nonlin: Callable, dnonlin: Callable):
        self.spec = spec
        self.kind = spec.kind
        self.h = spec.spacing
        self.bg = bg
        self.v0 = bg.v0_diff.values
        self.reg = bg.regular_laplacian
        self.nonlin = nonlin
        self.dnonlin = dnonlin
        self.solver = operators.make_solver(spec.kind, spec.grid, spec.spacing)
        if self.kind == "plane":
            # v = 0 on the boundary means phi = -v0 there
            self.bc = {k: -b for k, b in bg.boundary.items()}
            self.lift = operators.dirichlet_lift(spec.grid, self.h, self.bc)
        else:
            self.bc = None
            self.lift = 0.0

    def lap0(self, u):
        return operators.laplacian(u, self.kind, self.h)

    def residual(self, phi, c=0.0):
        v = self.v0 + phi + c
        return self.lap0(phi) + self.lift - self.nonlin(v) + self.reg

    def newton_step(self, weight, rhs, rtol):
        """Solve ``(-lap0 + diag(weight)) x = rhs`` by preconditioned CG."""
        n = weight.size
        shape = weight.shape
        kappa = max(float(weight.mean()), 1e-8)
        solver = self.solver

        def matvec(x):
            x = x.reshape(shape)
            return (-self.lap0(x) + weight * x).ravel()

        def precond(r):
            return solver.solve(-r.reshape(shape), shift=kappa).ravel()

        A = LinearOperator((n, n), matvec=matvec, dtype=float)
        P = LinearOperator((n, n), matvec=precond, dtype=float)
        x, info = cg(A, rhs.ravel(), rtol=rtol, atol=0.0, M=P, maxiter=2000)
        if info != 0:
            raise RuntimeError(f"linear solve did not converge (cg info={info})")
        return x.reshape(shape)

    def shifted_solve(self, rhs, shift):
        """Solve ``(lap0 - shift) x = rhs``."""
        return self.solver.solve(rhs, shift=shift)


def _model_nonlin(model: CouplingModel):
    return model.rhs, model.drhs


def _taubes_nonlin():
    def nonlin(v):
        return np.expm1(np.minimum(v, 700.0))

    def dnonlin(v):
        return np.exp(np.minimum(v, 700.0))

    return nonlin, dnonlin


def _track(stats, model_or_none, v, weight):
    stats["min_jacobian_weight"] = min(stats.get("min_jacobian_weight", np.inf), float(weight.min()))
    if model_or_none is not None:
        rhs = np.abs(model_or_none.rhs(v)).max()
        stats["max_abs_rhs"] = max(stats.get("max_abs_rhs", 0.0), float(rhs))


def _newton(prob: _Problem, opts: SolverOptions, phi0, model=None, C0=None, c_solver=None):
    """Damped Newton on the reduced equation; returns (phi, c, iters, res, hist, ok, stats)."""
    phi = np.array(phi0, dtype=float)
    stats: dict = {}
    c = c_solver(prob.v0 + phi) if c_solver else 0.0
    R = prob.residual(phi, c)
    res = float(np.abs(R).max())
    hist = [res]
    it = 0
    while res > opts.residual_tol and it < opts.max_iters:
        it += 1
        v = prob.v0 + phi + c
        weight = prob.dnonlin(v)
        _track(stats, model, v, weight)
        rtol = min(1e-3, max(opts.linear_tol, 1e-2 * res / (1.0 + res)))
        delta = prob.newton_step(weight, R, rtol)
        alpha = opts.damping
        while True:
            u = phi + c + alpha * delta
            if c_solver:
                new_phi = u - u.mean()
                new_c = c_solver(prob.v0 + new_phi)
            else:
                new_phi, new_c = u, 0.0
            new_R = prob.residual(new_phi, new_c)
            new_res = float(np.abs(new_R).max())
            if new_res < res or alpha < 1e-4:
                break
            alpha *= 0.5
        phi, c, R, res = new_phi, new_c, new_R, new_res
        hist.append(res)
    v = prob.v0 + phi + c
    weight = prob.dnonlin(v)
    _track(stats, model, v, weight)
    stats["final_min_jacobian_weight"] = float(weight.min())
    return phi, c, it, res, hist, res <= opts.residual_tol, stats


def _picard(prob: _Problem, opts: SolverOptions, phi0, shift, model=None, c_solver=None):
    """Iterate ``(lap - K) psi = N(v0 + phi + c(phi)) - R0 - K phi`` (K = 0 is the plain map)."""
    phi = np.array(phi0, dtype=float)
    stats: dict = {"picard_shift": shift}
    c = c_solver(prob.v0 + phi) if c_solver else 0.0
    R = prob.residual(phi, c)
    res = float(np.abs(R).max())
    hist = [res]
    it = 0
    while res > opts.residual_tol and it < opts.max_iters:
        it += 1
        v = prob.v0 + phi + c
        rhs = prob.nonlin(v) - prob.reg - prob.lift - shift * phi
        phi = prob.shifted_solve(rhs, shift)
        if c_solver:
            phi -= phi.mean()
            c = c_solver(prob.v0 + phi)
        R = prob.residual(phi, c)
        res = float(np.abs(R).max())
        hist.append(res)
        if not np.isfinite(res):
            break
    _track(stats, model, prob.v0 + phi + c, prob.dnonlin(prob.v0 + phi + c))
    return phi, c, it, res, hist, res <= opts.residual_tol, stats


def _thin(hist, keep=200):
    if len(hist) <= keep:
        return [float(x) for x in hist]
    idx = np.unique(np.linspace(0, len(hist) - 1, keep).astype(int))
    return [float(hist[i]) for i in idx]


# ---------------------------------------------------------------------------
# torus


def solve_torus(spec: DomainSpec, config: VortexConfiguration, model: CouplingModel,
                opts: Optional[SolverOptions] = None, initial: Optional[np.ndarray] = None,
                ) -> ScalarSolution:
    """Solve on the flat torus; Newton (default) or the Picard map."""
    opts = opts or SolverOptions()
    if spec.kind != "torus":
        raise ConfigError("solve_torus needs a torus domain")
    if opts.algorithm == "monotone":
        raise ConfigError("the monotone scheme is implemented for the plane only")
    config = config.reduced(spec)
    status = bradlow_check(spec, config)
    C0 = constant_mode_C0(spec, config)
    zero = GridField(spec, np.zeros(spec.grid))
    if status == "violated" and not opts.force:
        bound = spec.area / (2 * math.pi)
        note = (f"|M - N| = {abs(config.M - config.N)} violates the Bradlow bound "
                f"|S|/(2 pi) = {bound:.4g}")
        return ScalarSolution(zero, zero, 0.0, 0, math.inf, False, "bradlow_violated", config,
                              model_name=model.name, algorithm=opts.algorithm, C0=C0, notes=[note])
    notes = []
    if status == "marginal":
        notes.append("|M - N| within 1% of the Bradlow bound; expect ill-conditioning")
        logger.warning(notes[-1])
    bg = torus_background(spec, config)
    prob = _Problem(spec, bg, *_model_nonlin(model))

    def c_solver(base):
        return solve_c_constraint(base, model, C0)

    phi0 = np.zeros(spec.grid) if initial is None else np.asarray(initial, float) - np.mean(initial)
    try:
        if opts.algorithm == "newton":
            phi, c, it, res, hist, ok, stats = _newton(prob, opts, phi0, model, C0, c_solver)
        else:
            shift = model.sF_max if opts.picard_shift is None else float(opts.picard_shift)
            phi, c, it, res, hist, ok, stats = _picard(prob, opts, phi0, shift, model, c_solver)
    except InfeasibleError as exc:
        notes.append(f"c-constraint bracket search failed: {exc}")
        return ScalarSolution(zero, zero, 0.0, 0, math.inf, False, "bradlow_violated", config,
                              bg, model.name, opts.algorithm, C0, notes=notes)
    v = bg.v0_diff.values + phi + c
    feas = "feasible" if ok else "not_converged"
    return ScalarSolution(GridField(spec, v), GridField(spec, phi), c, it, res, ok, feas, config,
                          bg, model.name, opts.algorithm, C0, _thin(hist), notes, stats)


# ---------------------------------------------------------------------------
# plane


def _boundary_ring_max(v):
    return float(max(np.abs(v[0]).max(), np.abs(v[-1]).max(),
                     np.abs(v[:, 0]).max(), np.abs(v[:, -1]).max()))


def _plane_solution(spec, config, bg, phi, it, res, ok, hist, stats, name, algo, notes=()):
    v = bg.v0_diff.values + phi
    stats = dict(stats)
    stats["boundary_ring_max"] = _boundary_ring_max(v)
    return ScalarSolution(GridField(spec, v), GridField(spec, phi), 0.0, it, res, ok,
                          "feasible" if ok else "not_converged", config, bg, name, algo,
                          history=_thin(hist), notes=list(bg.notes) + list(notes), stats=stats)


def solve_plane(spec: DomainSpec, config: VortexConfiguration, model: CouplingModel,
                opts: Optional[SolverOptions] = None, initial: Optional[np.ndarray] = None,
                ) -> ScalarSolution:
    """Solve on the truncated plane box with ``v = 0`` on its boundary."""
    from .coupling import check_plane_conditions

    opts = opts or SolverOptions()
    if spec.kind != "plane":
        raise ConfigError("solve_plane needs a plane domain")
    if opts.algorithm == "monotone":
        return monotone_solve_plane(spec, config, model, opts)
    config = config.reduced(spec)
    notes = []
    if not check_plane_conditions(model, samples=512).passed:
        notes.append(f"model {model.name} fails C1/C2; convergence is not guaranteed")
        logger.warning(notes[-1])
    bg = plane_background(spec, config, opts.core_scale)
    prob = _Problem(spec, bg, *_model_nonlin(model))
    phi0 = np.zeros(spec.grid) if initial is None else np.asarray(initial, float)
    if opts.algorithm == "newton":
        phi, _, it, res, hist, ok, stats = _newton(prob, opts, phi0, model)
    else:
        shift = model.sF_max if opts.picard_shift is None else float(opts.picard_shift)
        phi, _, it, res, hist, ok, stats = _picard(prob, opts, phi0, shift, model)
    return _plane_solution(spec, config, bg, phi, it, res, ok, hist, stats, model.name,
                           opts.algorithm, notes)


def solve_taubes(spec: DomainSpec, points, opts: Optional[SolverOptions] = None) -> ScalarSolution:
    """Solve ``lap v = e^v - 1 + 4 pi sum m delta`` on the plane box, ``v = 0`` on the boundary.

    ``points`` is a sequence of ``(point, multiplicity)``.
    """
    opts = opts or SolverOptions()
    if spec.kind != "plane":
        raise ConfigError("solve_taubes needs a plane domain")
    config = VortexConfiguration(tuple(points), ()).reduced(spec)
    bg = plane_background(spec, config, opts.core_scale)
    prob = _Problem(spec, bg, *_taubes_nonlin())
    newton = SolverOptions("newton", max_iters=max(60, min(opts.max_iters, 200)),
                           residual_tol=opts.residual_tol, linear_tol=opts.linear_tol,
                           damping=opts.damping, core_scale=opts.core_scale)
    phi, _, it, res, hist, ok, stats = _newton(prob, newton, np.zeros(spec.grid))
    return _plane_solution(spec, config, bg, phi, it, res, ok, hist, stats, "taubes", "newton")


def monotone_solve_plane(spec: DomainSpec, config: VortexConfiguration, model: CouplingModel,
                         opts: Optional[SolverOptions] = None, mono_tol: float = 1e-8,
                         keep_iterates: bool = False) -> ScalarSolution:
    """Monotone iteration between the Taubes-built sub- and supersolutions.

    Starts at ``v_- = v2`` (Taubes solution with the vortex points) and
    iterates ``(lap - K) v_{k+1} = N(v_k) - K v_k + sources`` with
    ``K = max sF(v_k) + 1``; every iterate must stay below ``v_+ = -v1``.
    """
    from .coupling import check_plane_conditions

    opts = opts or SolverOptions(algorithm="monotone")
    if spec.kind != "plane":
        raise ConfigError("monotone_solve_plane needs a plane domain")
    config = config.reduced(spec)
    cond = check_plane_conditions(model, samples=512)
    if not cond.passed:
        raise ConfigError(f"model {model.name} fails C1/C2; sub/supersolutions are not available")
    lower = solve_taubes(spec, config.vortices, opts)
    upper_src = solve_taubes(spec, config.antivortices, opts)
    if not (lower.converged and upper_src.converged):
        raise RuntimeError("Taubes sub/supersolution solve did not converge")
    v_minus = lower.v_total.values
    v_plus = -upper_src.v_total.values

    bg = plane_background(spec, config, opts.core_scale)
    prob = _Problem(spec, bg, *_model_nonlin(model))
    phi = v_minus - prob.v0
    v = v_minus.copy()
    R = prob.residual(phi)
    res = float(np.abs(R).max())
    hist = [res]
    min_step, max_excess = np.inf, float((v - v_plus).max())
    iterates = [v.copy()] if keep_iterates else None
    it = 0
    while res > opts.residual_tol and it < opts.max_iters:
        it += 1
        K = float(prob.dnonlin(v).max()) + 1.0
        rhs = prob.nonlin(v) - prob.reg - prob.lift - K * phi
        phi = prob.shifted_solve(rhs, K)
        v_new = prob.v0 + phi
        step = float((v_new - v).min())
        excess = float((v_new - v_plus).max())
        min_step = min(min_step, step)
        max_excess = max(max_excess, excess)
        if excess > mono_tol:
            raise MonotonicityError(
                f"iterate {it} exceeds the supersolution by {excess:.3e}; "
                "C1/C2 may fail or K is too small")
        v = v_new
        if keep_iterates:
            iterates.append(v.copy())
        R = prob.residual(phi)
        res = float(np.abs(R).max())
        hist.append(res)
    stats = {"min_increment": min_step, "max_excess_over_upper": max_excess,
             "min_gap_above_lower": float((v - v_minus).min()),
             "taubes_iterations": [lower.iterations, upper_src.iterations]}
    sol = _plane_solution(spec, config, bg, phi, it, res, res <= opts.residual_tol, hist, stats,
                          model.name, "monotone")
    sol.bracket = (v_minus, v_plus)
    sol.iterates = iterates
    return sol


def solve(spec: DomainSpec, config: VortexConfiguration, model: CouplingModel,
          opts: Optional[SolverOptions] = None, initial=None) -> ScalarSolution:
    if spec.kind == "torus":
        return solve_torus(spec, config, model, opts, initial)
    return solve_plane(spec, config, model, opts, initial)


def residual(sol: ScalarSolution, model: CouplingModel) -> np.ndarray:
    """Reduced-equation residual recomputed from the stored fields."""
    bg = sol.background
    prob = _Problem(sol.domain, bg, *_model_nonlin(model))
    return prob.residual(sol.phi.values, sol.c)

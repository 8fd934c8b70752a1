"""Coupling-function families (f, w, F) in log-variable form.

Every nonlinearity is evaluated at ``t = v = ln|u|^2`` so that ``s = e^t`` is
never formed; near vortex and antivortex cores ``t`` reaches magnitudes of
order ``10^4`` on fine grids.

Conventions used throughout the package:

* ``sf_log(t)  = s f(s)``       (bounded in [0, 1])
* ``sF_log(t)  = s F(s)``       (= d/dt of ``4 s f(s)``, the Newton weight)
* ``w_log(t)   = w(s) = 1 - 2 s f(s)``
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import expit

logger = logging.getLogger(__name__)

ArrayFn = Callable[[np.ndarray], np.ndarray]

#: central-difference step used to synthesize ``sF_log`` for custom models
SYNTH_STEP = 1e-6


def _as_array_fn(fn: Callable) -> ArrayFn:
    def wrapped(t):
        t = np.asarray(t, dtype=float)
        return np.asarray(fn(t), dtype=float) * np.ones_like(t)

    return wrapped


@dataclass(frozen=True)
class CouplingModel:
    """Immutable coupling triple evaluated in the log variable.

    ``w_log`` defaults to ``1 - 2 sf_log``. When ``sF_log`` is omitted it is
    synthesized as ``4 d(sf_log)/dt`` by central differences.
    """

    name: str
    sf_log: ArrayFn
    sF_log: Optional[ArrayFn] = None
    w_log: Optional[ArrayFn] = None
    F_at_one: Optional[float] = None
    spec: str = ""

    def __post_init__(self):
        sf = _as_array_fn(self.sf_log)
        object.__setattr__(self, "sf_log", sf)
        if self.sF_log is None:
            def synth(t, _sf=sf):
                t = np.asarray(t, dtype=float)
                return 4.0 * (_sf(t + SYNTH_STEP) - _sf(t - SYNTH_STEP)) / (2 * SYNTH_STEP)

            object.__setattr__(self, "sF_log", synth)
        else:
            object.__setattr__(self, "sF_log", _as_array_fn(self.sF_log))
        if self.w_log is None:
            object.__setattr__(self, "w_log", lambda t, _sf=sf: 1.0 - 2.0 * _sf(t))
        else:
            object.__setattr__(self, "w_log", _as_array_fn(self.w_log))
        if self.F_at_one is None:
            object.__setattr__(self, "F_at_one", float(self.sF_log(np.array(0.0))))

    # the nonlinearity 4 s f(s) - 2 of the governing equation and its derivative
    def rhs(self, v: np.ndarray) -> np.ndarray:
        # -2 w avoids the cancellation in 4 sf - 2 near the vacuum
        return -2.0 * self.w_log(v)

    def drhs(self, v: np.ndarray) -> np.ndarray:
        return self.sF_log(v)

    @property
    def sF_max(self) -> float:
        """Supremum of ``sF_log`` estimated on a dense sample of t."""
        t = np.linspace(-40.0, 40.0, 16001)
        return float(np.max(self.sF_log(t)))

    @property
    def decay_rate(self) -> float:
        """Exponential decay rate ``sqrt(F(1))`` of the far field."""
        return math.sqrt(self.F_at_one)


def builtin_classical() -> CouplingModel:
    """f(s) = 1/(1+s), w = (1-s)/(1+s), F = 4/(1+s)^2."""
    return CouplingModel(
        name="classical",
        sf_log=expit,
        sF_log=lambda t: 4.0 * expit(t) * expit(-t),
        w_log=lambda t: -np.tanh(0.5 * t),
        F_at_one=1.0,
        spec="classical",
    )


def builtin_m_family(m: int) -> CouplingModel:
    """w = (1-s^m)/(1+s^m), F = 4m s^(m-1)/(1+s^m)^2, s f(s) = s^m/(1+s^m)."""
    if isinstance(m, bool) or int(m) != m or m < 1:
        raise ValueError(f"m-family requires an integer m >= 1, got {m!r}")
    m = int(m)
    return CouplingModel(
        name=f"m:{m}",
        sf_log=lambda t: expit(m * t),
        sF_log=lambda t: 4.0 * m * expit(m * t) * expit(-m * t),
        w_log=lambda t: -np.tanh(0.5 * m * t),
        F_at_one=float(m),
        spec=f"m:{m}",
    )


_EXPR_NAMESPACE = {
    "exp": np.exp, "log": np.log, "log1p": np.log1p, "expm1": np.expm1,
    "tanh": np.tanh, "cosh": np.cosh, "sinh": np.sinh, "sqrt": np.sqrt,
    "abs": np.abs, "where": np.where, "minimum": np.minimum, "maximum": np.maximum,
    "min": np.minimum, "max": np.maximum, "clip": np.clip,
    "expit": expit, "logaddexp": np.logaddexp, "pi": math.pi,
}


def _compile_expr(expr: str) -> ArrayFn:
    code = compile(expr, "<coupling>", "eval")
    for name in code.co_names:
        if name != "t" and name not in _EXPR_NAMESPACE:
            raise ValueError(f"unknown name {name!r} in coupling expression {expr!r}")

    def fn(t):
        with np.errstate(over="ignore", invalid="ignore"):
            return eval(code, {"__builtins__": {}}, {**_EXPR_NAMESPACE, "t": t})

    return fn


def model_from_text(text: str, name: str = "custom") -> CouplingModel:
    """Build a model from ``key = value`` lines.

    Recognized keys: ``name``, ``sf_log`` (expression in ``t``, required),
    ``sF_log`` and ``w_log`` (optional expressions), ``F_at_one`` (number).
    """
    entries: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed coupling line: {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        entries[key] = value
    if "sf_log" not in entries:
        raise ValueError("custom coupling definition needs an 'sf_log' expression")
    return CouplingModel(
        name=entries.get("name", name),
        sf_log=_compile_expr(entries["sf_log"]),
        sF_log=_compile_expr(entries["sF_log"]) if "sF_log" in entries else None,
        w_log=_compile_expr(entries["w_log"]) if "w_log" in entries else None,
        F_at_one=float(entries["F_at_one"]) if "F_at_one" in entries else None,
        spec=f"custom:{name}",
    )


def model_from_selector(selector: str) -> CouplingModel:
    """Resolve ``classical``, ``m:<int>`` or ``custom:<path>``."""
    selector = selector.strip()
    if selector == "classical":
        return builtin_classical()
    if selector.startswith("m:"):
        try:
            m = int(selector[2:])
        except ValueError:
            raise ValueError(f"bad m-family selector {selector!r}") from None
        return builtin_m_family(m)
    if selector.startswith("custom:"):
        path = Path(selector[len("custom:"):])
        model = model_from_text(path.read_text(), name=path.stem)
        return CouplingModel(model.name, model.sf_log, model.sF_log, model.w_log,
                             model.F_at_one, spec=selector)
    raise ValueError(f"unknown coupling selector {selector!r}")


@dataclass
class CouplingValidationReport:
    passed: bool
    violations: list = field(default_factory=list)
    sampled_points: int = 0
    c2_equality: Optional[bool] = None

    def to_dict(self) -> dict:
        out = {
            "passed": self.passed,
            "sampled_points": self.sampled_points,
            "violations": [
                {"condition": c, "t": float(t), "lhs": float(lhs), "rhs": float(rhs)}
                for c, t, lhs, rhs in self.violations
            ],
        }
        if self.c2_equality is not None:
            out["c2_equality"] = self.c2_equality
        return out


def _record(violations, condition, t, lhs, rhs, bad, limit=5):
    # keep a handful of located violations per condition
    idx = np.flatnonzero(bad)
    for k in idx[:limit]:
        violations.append((condition, float(t[k]), float(lhs[k]), float(rhs[k])))


def _lambda_condition_lhs(model: CouplingModel, v: float) -> float:
    val, _ = integrate.quad(lambda s: 2.0 * float(model.sf_log(np.array(s))) - 1.0,
                            0.0, v, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def validate_coupling(model: CouplingModel, t_range=(-40.0, 40.0), samples: int = 4096,
                      limit_tol: float = 1e-6, lam: Optional[float] = None,
                      ) -> CouplingValidationReport:
    """Sample the admissibility conditions on a uniform grid in t = ln s.

    Checks f(1) = 1/2, w(1) = 0, monotonicity and bounds of s f(s), the
    identity w = 1 - 2 s f, non-negativity of s F(s), the Jacobian wiring
    ``sF = 4 d(sf)/dt`` and the limits of s f(s) at the range endpoints.
    ``lam`` enables the optional integral condition with constant ``lam``.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    t_lo, t_hi = map(float, t_range)
    if not (np.isfinite(t_lo) and np.isfinite(t_hi) and t_lo < 0.0 < t_hi):
        raise ValueError("t_range must be finite and contain 0")
    t = np.union1d(np.linspace(t_lo, t_hi, samples), [0.0])
    sf = model.sf_log(t)
    w = model.w_log(t)
    sF = model.sF_log(t)
    violations: list = []

    zero = np.array([0.0])
    sf0 = model.sf_log(zero)
    w0 = model.w_log(zero)
    _record(violations, "sf(0)=1/2", zero, sf0, np.array([0.5]), np.abs(sf0 - 0.5) > 1e-12)
    _record(violations, "w(0)=0", zero, w0, np.array([0.0]), np.abs(w0) > 1e-12)

    steps = np.diff(sf)
    _record(violations, "monotone", t[1:], sf[:-1], sf[1:], steps < -1e-14)
    _record(violations, "sf>=0", t, sf, np.zeros_like(sf), sf < -1e-14)
    _record(violations, "sf<=1", t, sf, np.ones_like(sf), sf > 1 + 1e-14)
    ident = 1.0 - 2.0 * sf
    _record(violations, "w=1-2sf", t, w, ident, np.abs(w - ident) > 1e-12)
    _record(violations, "sF>=0", t, sF, np.zeros_like(sF), sF < -1e-12)

    h = 1e-5
    fd = 4.0 * (model.sf_log(t + h) - model.sf_log(t - h)) / (2 * h)
    _record(violations, "sF=4dsf/dt", t, sF, fd, np.abs(sF - fd) > 1e-6 * np.maximum(1.0, np.abs(fd)))

    ends = np.array([t_lo, t_hi])
    end_sf = model.sf_log(ends)
    _record(violations, "limit sf->0", ends[:1], end_sf[:1], np.zeros(1), end_sf[:1] > limit_tol)
    _record(violations, "limit sf->1", ends[1:], end_sf[1:], np.ones(1), end_sf[1:] < 1 - limit_tol)

    if lam is not None:
        vs = np.linspace(t_lo, t_hi, min(samples, 161))
        lhs = np.array([_lambda_condition_lhs(model, v) for v in vs])
        # ln((cosh v + 1)/2) = 2 ln cosh(v/2), written overflow-free
        rhs = lam * 2.0 * (np.abs(vs) / 2 + np.log1p(np.exp(-np.abs(vs))) - math.log(2.0))
        _record(violations, "lambda", vs, lhs, rhs, lhs < rhs - 1e-9 * np.maximum(1.0, np.abs(rhs)))

    report = CouplingValidationReport(passed=not violations, violations=violations,
                                      sampled_points=int(t.size))
    if not report.passed:
        logger.info("coupling %s failed %d checks", model.name, len(violations))
    return report


def check_plane_conditions(model: CouplingModel, samples: int = 4096,
                           eq_tol: float = 1e-12) -> CouplingValidationReport:
    """Sample the plane conditions on s in (0, 1].

    C1: ``4 s f(s) <= 1 + s``; C2: ``s f(s) + (1/s) f(1/s) >= 1``. The
    ``c2_equality`` flag records whether C2 holds with equality at every sample.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    half = max(samples // 2, 2)
    s = np.union1d(np.geomspace(1e-12, 1.0, half), np.linspace(1e-12, 1.0, half))
    t = np.log(s)
    sf = model.sf_log(t)
    sf_inv = model.sf_log(-t)
    violations: list = []

    lhs1, rhs1 = 4.0 * sf, 1.0 + s
    _record(violations, "C1", t, lhs1, rhs1, lhs1 > rhs1 + 1e-12)
    lhs2 = sf + sf_inv
    _record(violations, "C2", t, lhs2, np.ones_like(lhs2), lhs2 < 1.0 - 1e-12)
    equality = bool(np.all(np.abs(lhs2 - 1.0) <= eq_tol))
    return CouplingValidationReport(passed=not violations, violations=violations,
                                    sampled_points=int(t.size), c2_equality=equality)

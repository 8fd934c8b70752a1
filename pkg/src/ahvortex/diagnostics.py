"""Quantized invariants of a solution: Chern charge, Thom charge (volume and
contour forms), total energy and the far-field decay rate.

Integrals use the midpoint rule on the cell-centred grid. On the truncated
plane, boundary-flux corrections are added explicitly and reported.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from . import operators
from .coupling import CouplingModel
from .elliptic import ScalarSolution, residual as reduced_residual
from .fields import FieldState, assemble_fields, bogomolnyi_residuals
from .geometry import ConfigError, VortexConfiguration
from .oracle import fit_decay

TWO_PI = 2.0 * math.pi
FOUR_PI = 4.0 * math.pi


def _face_normal_derivative(v: np.ndarray, h) -> list:
    """Outward normal derivative of ``v`` on the four faces of the box, using
    the same ghost values (``v = 0`` on the face) as the discrete Laplacian.
    Returns ``(values, face_lengths)`` pairs for left, right, bottom, top."""
    h1, h2 = h
    return [(-2.0 * v[0, :] / h1, h2), (-2.0 * v[-1, :] / h1, h2),
            (-2.0 * v[:, 0] / h2, h1), (-2.0 * v[:, -1] / h2, h1)]


def boundary_flux(fs: FieldState, weight: float = 1.0) -> float:
    """``weight * closed integral of d_n v`` over the plane box boundary (0 on the torus)."""
    spec = fs.domain
    if spec.kind != "plane":
        return 0.0
    v = fs.amplitude_sq_log.values
    return weight * float(sum(dn.sum() * ds for dn, ds in _face_normal_derivative(v, spec.spacing)))


def chern_charge(fs: FieldState, corrected: bool = True) -> float:
    """Integrated vorticity over ``2 pi``; on the plane the truncation flux
    ``1/2 closed integral of d_n v`` is added back when ``corrected``."""
    spec = fs.domain
    total = float(fs.vorticity.values.sum()) * spec.cell_area
    if corrected and spec.kind == "plane":
        sign = 1.0 if fs.branch == "plus" else -1.0
        total += sign * 0.5 * boundary_flux(fs)
    return total / TWO_PI


def thom_charge_volume(fs: FieldState, corrected: bool = True) -> float:
    """Integral of the current curl; on the plane minus the boundary flux of
    ``sf(v) grad v`` (``sf = 1/2`` where ``v = 0``)."""
    spec = fs.domain
    total = float(fs.current_curl.values.sum()) * spec.cell_area
    if corrected and spec.kind == "plane":
        sign = 1.0 if fs.branch == "plus" else -1.0
        total -= sign * 0.5 * boundary_flux(fs)
    return total


def total_energy(fs: FieldState) -> float:
    return float(fs.energy_density.values.sum()) * fs.domain.cell_area


def _sample(arr, spec, xs, ys):
    (o1, o2), (h1, h2) = spec.origin, spec.spacing
    ci = (np.asarray(xs) - o1) / h1 - 0.5
    cj = (np.asarray(ys) - o2) / h2 - 0.5
    mode = "grid-wrap" if spec.kind == "torus" else "nearest"
    return ndimage.map_coordinates(arr, [ci, cj], order=1, mode=mode)


def contour_integral(sol: ScalarSolution, model: CouplingModel, center, radius: float,
                     points: int = 256, grad=None) -> float:
    """``-closed integral of sf(v) d_r v ds`` on one circle (bilinear sampling)."""
    spec = sol.domain
    v = sol.v_total.values
    if grad is None:
        grad = operators.gradient(v, spec.kind, spec.spacing)
    ang = (np.arange(points) + 0.5) * TWO_PI / points
    c, s = np.cos(ang), np.sin(ang)
    xs, ys = center[0] + radius * c, center[1] + radius * s
    vs = _sample(v, spec, xs, ys)
    dr = _sample(grad[0], spec, xs, ys) * c + _sample(grad[1], spec, xs, ys) * s
    return float(-np.sum(model.sf_log(vs) * dr) * radius * TWO_PI / points)


def _distance(spec, a, b) -> float:
    dx, dy = a[0] - b[0], a[1] - b[1]
    if spec.kind == "torus":
        dx -= spec.lengths[0] * round(dx / spec.lengths[0])
        dy -= spec.lengths[1] * round(dy / spec.lengths[1])
    return math.hypot(dx, dy)


def _check_circle(sol: ScalarSolution, center, r_in: float, r_out: float):
    spec = sol.domain
    if r_in < 4 * max(spec.spacing) * (1 - 1e-12):
        raise ConfigError("contour radius must be at least 4 grid cells")
    if spec.kind == "plane":
        (o1, o2), (L1, L2) = spec.origin, spec.lengths
        if (center[0] - r_out < o1 or center[0] + r_out > o1 + L1
                or center[1] - r_out < o2 or center[1] + r_out > o2 + L2):
            raise ConfigError("contour circle leaves the plane box")
    for p, _ in sol.config.reduced(spec).signed_sources():
        dist = _distance(spec, p, center)
        if 1e-9 < dist < 2 * r_out:
            raise ConfigError(f"contour of radius {r_out:.4g} is within two radii of source {p}")


def disc_integral(values: np.ndarray, spec, center, radius: float, n_r: int = 48,
                  n_theta: int = 128) -> float:
    """Polar Gauss-Legendre quadrature of a grid field over a disc (bilinear sampling)."""
    x, wx = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * radius * (x + 1.0)
    wr = 0.5 * radius * wx
    th = (np.arange(n_theta) + 0.5) * TWO_PI / n_theta
    rr, tt = np.meshgrid(r, th, indexing="ij")
    vals = _sample(values, spec, center[0] + rr * np.cos(tt), center[1] + rr * np.sin(tt))
    return float(np.sum(vals * rr * wr[:, None]) * TWO_PI / n_theta)


def thom_charge_contour(sol: ScalarSolution, model: CouplingModel, pole, radius: float,
                        points: int = 256, method: str = "disc",
                        fs: Optional[FieldState] = None, branch: str = "plus") -> float:
    """Thom charge carried by the source at ``pole``, oriented so that a
    multiplicity-``m`` pole gives ``+4 pi m`` and a zero of ``u`` gives 0.

    The circle integral at finite radius ``R`` misses the smooth current
    inside the disc. ``method`` selects how that is handled:

    * ``disc``: add the disc integral of the current curl (exact by Stokes);
    * ``extrapolate``: circles at ``R * (1, 1.25, 1.5, 1.75, 2)`` and a
      quadratic in ``R^2`` evaluated at ``R = 0``;
    * ``raw``: the bare circle integral.

    The minus branch reverses the orientation and hence the sign.
    """
    spec = sol.domain
    sign = 1.0 if branch == "plus" else -1.0
    if method == "raw":
        _check_circle(sol, pole, radius, radius)
        return sign * contour_integral(sol, model, pole, radius, points)
    if method == "disc":
        _check_circle(sol, pole, radius, radius)
        fs = fs or assemble_fields(sol, model, branch)
        # the stored current curl already carries the branch sign
        return (sign * contour_integral(sol, model, pole, radius, points, fs.grad)
                + disc_integral(fs.current_curl.values, spec, pole, radius))
    if method != "extrapolate":
        raise ValueError(f"unknown contour method {method!r}")
    scales = np.array([1.0, 1.25, 1.5, 1.75, 2.0])
    _check_circle(sol, pole, radius, radius * scales[-1])
    grad = operators.gradient(sol.v_total.values, spec.kind, spec.spacing)
    vals = [contour_integral(sol, model, pole, radius * s, points, grad) for s in scales]
    coef = np.polyfit((radius * scales) ** 2, vals, 2)
    return sign * float(coef[-1])


def shell_averages(sol: ScalarSolution, center=None, width: Optional[float] = None):
    """Angular averages of ``|v|`` on annuli about ``center`` (default: source centroid).

    Only shells lying fully inside the box are returned on the plane.
    """
    spec = sol.domain
    config = sol.config.reduced(spec)
    pts = [p for p, _ in config.signed_sources()]
    if center is None:
        if not pts:
            raise ValueError("no sources: the field does not decay from anywhere")
        center = tuple(np.mean(np.array(pts), axis=0))
    dx, dy = spec.displacement(center)
    r = np.hypot(dx, dy)
    h = width or max(spec.spacing)
    if spec.kind == "plane":
        (o1, o2), (L1, L2) = spec.origin, spec.lengths
        r_lim = min(center[0] - o1, o1 + L1 - center[0], center[1] - o2, o2 + L2 - center[1])
    else:
        r_lim = 0.5 * min(spec.lengths)
    idx = np.floor(r / h).astype(int)
    nb = int(r_lim / h)
    v = np.abs(sol.v_total.values)
    sel = idx < nb
    counts = np.bincount(idx[sel], minlength=nb)
    sums = np.bincount(idx[sel], weights=v[sel], minlength=nb)
    rs = np.bincount(idx[sel], weights=r[sel], minlength=nb)
    ok = counts > 0
    return rs[ok] / counts[ok], sums[ok] / counts[ok], counts[ok]


def decay_rate_fit(sol: ScalarSolution, model: CouplingModel, shells_csv=None):
    """Fitted exponential decay rate of ``|v|`` with ``(window, R^2)``."""
    spec = sol.domain
    if spec.kind != "plane":
        raise ConfigError("decay-rate fits need a plane domain")
    if not model.F_at_one > 0:
        raise ConfigError("decay-rate fits need F(1) > 0")
    if not sol.config.signed_sources():
        raise ValueError("no sources: the field does not decay")
    r, vbar, counts = shell_averages(sol)
    if shells_csv is not None:
        write_shells_csv(shells_csv, r, vbar, counts)
    try:
        return fit_decay(r, vbar)
    except ValueError as exc:
        raise ValueError(f"{exc} (box too small for this coupling)") from None


def write_shells_csv(path, r, vbar, counts):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["r", "mean_abs_v", "count"])
        for a, b, c in zip(r, vbar, counts):
            wr.writerow([repr(float(a)), repr(float(b)), int(c)])


@dataclass
class DiagnosticsReport:
    chern_charge: float
    thom_charge_total: float
    thom_charge_per_pole: list
    total_energy: float
    energy_lower_bound_T: float
    decay_rate: Optional[float]
    residual_summary: dict
    feasibility: str
    targets: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    corrections: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _default_contour_radius(sol, pole, others):
    spec = sol.domain
    h = max(spec.spacing)
    r = 8 * h
    near = [d for d in others if d > 1e-9]
    if near:
        r = min(r, min(near) / 4.0)
    return max(r, 4 * h)


def full_report(sol: ScalarSolution, model: CouplingModel, config: Optional[VortexConfiguration] = None,
                fs: Optional[FieldState] = None, quad_tol: float = 0.05, branch: str = "plus",
                shells_csv=None) -> DiagnosticsReport:
    """Assemble all diagnostics; sub-operation failures become flags in a partial report."""
    config = (config or sol.config).reduced(sol.domain)
    M, N = config.M, config.N
    flags = []
    if not sol.converged:
        return DiagnosticsReport(math.nan, math.nan, [], math.nan, TWO_PI * (M + N), None,
                                 {"reduced_linf": sol.final_residual}, sol.feasibility,
                                 flags=["solution did not converge"] + list(sol.notes))
    fs = fs or assemble_fields(sol, model, branch)
    spec = sol.domain
    chern = chern_charge(fs)
    thom = thom_charge_volume(fs)
    energy = total_energy(fs)
    corrections = {}
    if spec.kind == "plane":
        corrections = {"chern_boundary": chern - chern_charge(fs, corrected=False),
                       "thom_boundary": thom - thom_charge_volume(fs, corrected=False),
                       "boundary_ring_max": sol.stats.get("boundary_ring_max")}
    per_pole = []
    sign = 1 if branch == "plus" else -1
    poles = config.antivortices
    all_pts = [p for p, _ in config.signed_sources()]
    for p, m in poles:
        dists = [_distance(spec, q, p) for q in all_pts]
        rad = _default_contour_radius(sol, p, dists)
        try:
            val = thom_charge_contour(sol, model, p, rad, fs=fs, branch=branch)
        except (ConfigError, ValueError) as exc:
            flags.append(f"contour at {p}: {exc}")
            val = None
        per_pole.append({"pole": list(p), "multiplicity": m, "value": val, "target": sign * FOUR_PI * m,
                         "radius": rad})
    decay = None
    if spec.kind == "plane" and (M + N) > 0:
        try:
            decay = decay_rate_fit(sol, model, shells_csv)[0]
        except (ValueError, ConfigError) as exc:
            flags.append(f"decay fit: {exc}")
    R = reduced_residual(sol, model)
    res = {"reduced_linf": float(np.abs(R).max()), "reduced_l2": float(np.sqrt(np.mean(R * R)))}
    res.update({f"bogomolnyi_{k}": v for k, v in bogomolnyi_residuals(sol, model, config).items()})
    T = TWO_PI * sign * (M - N) + thom
    if energy + quad_tol * max(1.0, abs(T)) < abs(T):
        flags.append("energy below the topological lower bound")
    targets = {"chern": sign * (M - N), "thom": sign * FOUR_PI * N, "energy": TWO_PI * (M + N)}
    errors = {"chern": abs(chern - targets["chern"]),
              "thom_rel": abs(thom - targets["thom"]) / max(abs(targets["thom"]), FOUR_PI),
              "energy_rel": abs(energy - targets["energy"]) / max(targets["energy"], TWO_PI)}
    if decay is not None:
        errors["decay_rel"] = abs(decay - model.decay_rate) / model.decay_rate
        targets["decay_rate"] = model.decay_rate
    return DiagnosticsReport(chern, thom, per_pole, energy, T, decay, res,
                             sol.feasibility, targets, errors, corrections, flags + list(sol.notes))

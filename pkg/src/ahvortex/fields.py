"""Gauge-invariant fields reconstructed from a solved ``v = ln|u|^2``.

Everything is assembled from the log-stable composites ``w(v)``, ``sf(v)`` and
``sF(v) |grad v|^2`` so the fields stay finite at zeros and poles of ``u``.
Gradients are centred differences, independent of the spectral solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import operators
from .coupling import CouplingModel
from .elliptic import ScalarSolution
from .geometry import GridField, VortexConfiguration, core_mask

FIELD_NAMES = ("amplitude_sq_log", "vorticity", "current_curl", "kinetic_density",
               "potential_density", "energy_density")


@dataclass
class FieldState:
    amplitude_sq_log: GridField
    vorticity: GridField
    current_curl: GridField
    kinetic_density: GridField
    potential_density: GridField
    energy_density: GridField
    phase_available: bool
    lap_regular: GridField
    grad: tuple
    branch: str = "plus"

    @property
    def domain(self):
        return self.amplitude_sq_log.domain

    def items(self):
        for name in FIELD_NAMES:
            yield name, getattr(self, name)


def regular_laplacian(sol: ScalarSolution) -> np.ndarray:
    """Discrete Laplacian of ``v`` with the point sources removed.

    On the torus the Kronecker masses sit exactly on source nodes, so off
    those nodes this is the plain five-point Laplacian of ``v``. On the plane
    the closed-form background is handled analytically.
    """
    spec = sol.domain
    bg = sol.background
    h = spec.spacing
    if spec.kind == "torus":
        lap = operators.laplacian_periodic(sol.v_total.values, h)
        for ij, m in bg.source_nodes:
            lap[ij] -= 4 * np.pi * m / spec.cell_area
        return lap
    bc = {k: -b for k, b in bg.boundary.items()}
    return operators.laplacian_dirichlet(sol.phi.values, h, bc) + bg.regular_laplacian


def assemble_fields(sol: ScalarSolution, model: CouplingModel, branch: str = "plus") -> FieldState:
    """Vorticity, current curl, kinetic, potential and energy densities of a solution.

    ``branch="minus"`` reverses the orientation (vorticity and current change
    sign); the scalar equation is shared by both branches.
    """
    if not sol.converged:
        raise ValueError("fields need a converged solution")
    if branch not in ("plus", "minus"):
        raise ValueError(f"branch must be plus or minus, got {branch!r}")
    spec = sol.domain
    v = sol.v_total.values
    gx, gy = operators.gradient(v, spec.kind, spec.spacing)
    grad2 = gx * gx + gy * gy
    sf = model.sf_log(v)
    sF = model.sF_log(v)
    w = model.w_log(v)
    lap = regular_laplacian(sol)
    sign = 1.0 if branch == "plus" else -1.0

    vort = sign * w
    kinetic = 0.5 * sF * grad2
    potential = 0.5 * w * w
    # product rule for div(sf grad v) with the delta part removed; sF = 4 d(sf)/dv
    curl = sign * (sf * lap + 0.25 * sF * grad2)
    energy = 0.5 * vort * vort + 0.5 * kinetic + potential

    def g(a):
        return GridField(spec, np.asarray(a, dtype=float))

    return FieldState(g(v), g(vort), g(curl), g(kinetic), g(potential), g(energy),
                      spec.kind == "plane", g(lap), (gx, gy), branch)


def _phase_gradient(spec, config: VortexConfiguration):
    theta = np.zeros(spec.grid)
    t1 = np.zeros(spec.grid)
    t2 = np.zeros(spec.grid)
    for point, m in config.signed_sources():
        dx, dy = spec.displacement(point)
        r2 = np.maximum(dx * dx + dy * dy, 1e-300)
        theta += m * np.arctan2(dy, dx)
        t1 += -m * dy / r2
        t2 += m * dx / r2
    return theta, t1, t2


def reconstruct_gauge_fields_plane(sol: ScalarSolution, config: VortexConfiguration):
    """Return ``(u_real, u_imag, A1, A2)`` in the radial gauge built from the source phases."""
    spec = sol.domain
    if spec.kind != "plane":
        raise ValueError("explicit gauge fields are available on the plane only")
    config = config.reduced(spec)
    v = sol.v_total.values
    theta, t1, t2 = _phase_gradient(spec, config)
    gx, gy = operators.gradient(v, "plane", spec.spacing)
    amp = np.exp(0.5 * v)
    u = amp * np.exp(1j * theta)
    A1 = 0.5 * gy + t1
    A2 = -0.5 * gx + t2
    return (GridField(spec, u.real), GridField(spec, u.imag), GridField(spec, A1), GridField(spec, A2))


def _interior(spec, ring=2):
    mask = np.zeros(spec.grid, dtype=bool)
    mask[ring:-ring, ring:-ring] = True
    return mask


def _centred(a, h, axis):
    out = np.zeros_like(a)
    sl_p = [slice(1, -1)] * 2
    sl_n = [slice(1, -1)] * 2
    sl_c = [slice(1, -1)] * 2
    sl_p[axis] = slice(2, None)
    sl_n[axis] = slice(None, -2)
    other = 1 - axis
    sl_p[other] = sl_n[other] = slice(None)
    sl_c[other] = slice(None)
    out[tuple(sl_c)] = (a[tuple(sl_p)] - a[tuple(sl_n)]) / (2 * h)
    return out


def bogomolnyi_residuals(sol: ScalarSolution, model: CouplingModel, config=None,
                         cells: float = 3.0, radius=None, norm: str = "linf") -> dict:
    """Residuals of the first-order equations on the off-core mask.

    ``norm`` is ``"linf"`` (maximum) or ``"rms"`` (root mean square over the mask).

    ``II`` (all domains): ``|-1/2 lap v - w(v)|``. On the plane also
    ``I``: ``|F12(A) - w(v)|`` and ``D``: ``|(D1 + i D2) u| / |u|`` from the
    explicit gauge fields.
    """
    if norm not in ("linf", "rms"):
        raise ValueError(f"norm must be linf or rms, got {norm!r}")

    def reduce(a, m):
        if not m.any():
            return 0.0
        a = np.abs(a[m])
        return float(a.max() if norm == "linf" else np.sqrt(np.mean(a * a)))

    spec = sol.domain
    config = (config or sol.config).reduced(spec)
    points = [p for p, _ in config.signed_sources()]
    mask = core_mask(spec, points, cells=cells, radius=radius)
    w = model.w_log(sol.v_total.values)
    lap = regular_laplacian(sol)
    out = {"II": reduce(-0.5 * lap - w, mask)}
    if spec.kind != "plane":
        return out
    mask = mask & _interior(spec)
    h1, h2 = spec.spacing
    ur, ui, A1, A2 = (f.values for f in reconstruct_gauge_fields_plane(sol, config))
    F12 = _centred(A2, h1, 0) - _centred(A1, h2, 1)
    out["I"] = reduce(F12 - w, mask)
    u = ur + 1j * ui
    D1 = _centred(u, h1, 0) - 1j * A1 * u
    D2 = _centred(u, h2, 1) - 1j * A2 * u
    rel = np.abs(D1 + 1j * D2) / np.maximum(np.abs(u), 1e-300)
    out["D"] = reduce(rel, mask)
    return out

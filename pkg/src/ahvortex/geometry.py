"""Domains, uniform cell-centred grids, vortex configurations and the
singular background functions that carry the point sources."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import operators

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi


class ConfigError(ValueError):
    """Invalid domain, grid or vortex configuration."""


@dataclass(frozen=True)
class DomainSpec:
    """Flat torus ``[0, L1) x [0, L2)`` or plane box centred at the origin.

    The plane box ``[-L1/2, L1/2] x [-L2/2, L2/2]`` is a truncation of R^2 on
    which ``v = 0`` is imposed at the boundary.
    """

    kind: str
    lengths: tuple
    grid: tuple

    def __post_init__(self):
        if self.kind not in ("torus", "plane"):
            raise ConfigError(f"domain kind must be 'torus' or 'plane', got {self.kind!r}")
        L1, L2 = (float(x) for x in self.lengths)
        try:
            n1, n2 = (int(x) for x in self.grid)
        except (TypeError, ValueError):
            raise ConfigError(f"bad grid {self.grid!r}") from None
        if not (L1 > 0 and L2 > 0 and math.isfinite(L1) and math.isfinite(L2)):
            raise ConfigError(f"side lengths must be positive, got {self.lengths!r}")
        for n in (n1, n2):
            if n < 16 or n % 2:
                raise ConfigError(f"grid sizes must be even and >= 16, got {self.grid!r}")
        object.__setattr__(self, "lengths", (L1, L2))
        object.__setattr__(self, "grid", (n1, n2))

    @property
    def spacing(self) -> tuple:
        return (self.lengths[0] / self.grid[0], self.lengths[1] / self.grid[1])

    @property
    def area(self) -> float:
        return self.lengths[0] * self.lengths[1]

    @property
    def cell_area(self) -> float:
        h1, h2 = self.spacing
        return h1 * h2

    @property
    def origin(self) -> tuple:
        if self.kind == "torus":
            return (0.0, 0.0)
        return (-0.5 * self.lengths[0], -0.5 * self.lengths[1])

    def axes(self) -> tuple:
        (n1, n2), (h1, h2), (o1, o2) = self.grid, self.spacing, self.origin
        return (o1 + (np.arange(n1) + 0.5) * h1, o2 + (np.arange(n2) + 0.5) * h2)

    def mesh(self) -> tuple:
        x, y = self.axes()
        return np.meshgrid(x, y, indexing="ij")

    def contains(self, point) -> bool:
        (o1, o2), (L1, L2) = self.origin, self.lengths
        return o1 <= point[0] <= o1 + L1 and o2 <= point[1] <= o2 + L2

    def displacement(self, point) -> tuple:
        """Node-wise displacement ``x - point`` (minimum image on the torus)."""
        X, Y = self.mesh()
        dx, dy = X - point[0], Y - point[1]
        if self.kind == "torus":
            L1, L2 = self.lengths
            dx -= L1 * np.round(dx / L1)
            dy -= L2 * np.round(dy / L2)
        return dx, dy

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lengths": list(self.lengths), "grid": list(self.grid)}


@dataclass
class GridField:
    """Scalar values on the nodes of ``domain``; ``values[i, j]`` sits at
    ``(x_i, y_j)``."""

    domain: DomainSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != tuple(self.domain.grid):
            raise ConfigError(f"field shape {self.values.shape} does not match grid {self.domain.grid}")

    def to_csv(self, path) -> None:
        d = self.domain
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("n1,n2,L1,L2,kind\n")
            fh.write(f"{d.grid[0]},{d.grid[1]},{d.lengths[0]!r},{d.lengths[1]!r},{d.kind}\n")
            for row in self.values:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "GridField":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        n1, n2, L1, L2, kind = lines[1].split(",")
        dom = DomainSpec(kind, (float(L1), float(L2)), (int(n1), int(n2)))
        vals = np.array([[float(x) for x in line.split(",")] for line in lines[2:]])
        return cls(dom, vals)


def make_grid(spec: DomainSpec) -> GridField:
    return GridField(spec, np.zeros(spec.grid))


@dataclass(frozen=True)
class VortexConfiguration:
    """Vortex (zero) and antivortex (pole) locations with multiplicities."""

    vortices: tuple = ()
    antivortices: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "vortices", self._normalize(self.vortices))
        object.__setattr__(self, "antivortices", self._normalize(self.antivortices))
        zeros = {p for p, _ in self.vortices}
        for p, _ in self.antivortices:
            if p in zeros:
                raise ConfigError(f"point {p} is both a vortex and an antivortex")

    @staticmethod
    def _normalize(items) -> tuple:
        out = []
        for item in items:
            if len(item) == 2 and np.ndim(item[0]) == 1:
                point, mult = item
            elif len(item) == 2:
                point, mult = item, 1
            else:
                raise ConfigError(f"bad vortex entry {item!r}")
            mult = int(mult)
            if mult < 1:
                raise ConfigError(f"multiplicity must be >= 1, got {mult}")
            out.append(((float(point[0]), float(point[1])), mult))
        return tuple(out)

    @property
    def M(self) -> int:
        return sum(m for _, m in self.vortices)

    @property
    def N(self) -> int:
        return sum(m for _, m in self.antivortices)

    def signed_sources(self) -> list:
        """List of ``(point, signed multiplicity)``; vortices positive."""
        return [(p, m) for p, m in self.vortices] + [(p, -m) for p, m in self.antivortices]

    def swapped(self) -> "VortexConfiguration":
        return VortexConfiguration(self.antivortices, self.vortices)

    def reduced(self, spec: DomainSpec) -> "VortexConfiguration":
        """Check membership; on the torus reduce points modulo the periods."""
        def fix(items):
            out = []
            for (x, y), m in items:
                if spec.kind == "torus":
                    x, y = x % spec.lengths[0], y % spec.lengths[1]
                elif not spec.contains((x, y)):
                    raise ConfigError(f"point {(x, y)} lies outside the plane box")
                out.append(((x, y), m))
            return tuple(out)

        return VortexConfiguration(fix(self.vortices), fix(self.antivortices))

    def to_inline(self) -> str:
        """Canonical inline form that parses back to an identical configuration."""
        parts = [f"{k}:{p[0]!r},{p[1]!r},{m}" for k, items in (("v", self.vortices), ("a", self.antivortices))
                 for p, m in items]
        return ";".join(parts)

    def to_dict(self) -> dict:
        return {
            "vortices": [[p[0], p[1], m] for p, m in self.vortices],
            "antivortices": [[p[0], p[1], m] for p, m in self.antivortices],
        }


def parse_configuration(text: str) -> VortexConfiguration:
    """Parse either the inline form ``v:0.3,0.5;a:0.7,0.5[,mult]`` or the
    line form ``v x y [mult]`` / ``a x y [mult]`` (``#`` starts a comment)."""
    vort, anti = [], []
    text = text.strip()
    if not text:
        return VortexConfiguration()
    inline = ":" in text and "\n" not in text
    entries = text.split(";") if inline else text.splitlines()
    for raw in entries:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if inline:
            kind, _, rest = line.partition(":")
            parts = [p for p in rest.split(",") if p.strip()]
        else:
            kind, *parts = line.split()
        kind = kind.strip().lower()
        if kind not in ("v", "a") or len(parts) not in (2, 3):
            raise ConfigError(f"malformed vortex entry {raw!r}")
        try:
            x, y = float(parts[0]), float(parts[1])
            mult = int(parts[2]) if len(parts) == 3 else 1
        except ValueError:
            raise ConfigError(f"malformed vortex entry {raw!r}") from None
        (vort if kind == "v" else anti).append(((x, y), mult))
    return VortexConfiguration(tuple(vort), tuple(anti))


def load_configuration(source: str) -> VortexConfiguration:
    """Read a configuration from a file path or an inline string."""
    path = Path(source)
    if "\n" not in source and len(source) < 4096 and path.is_file():
        return parse_configuration(path.read_text(encoding="utf-8"))
    return parse_configuration(source)


@dataclass
class BackgroundField:
    """Background ``v0' - v0''`` carrying the point sources.

    ``regular_laplacian`` is the Laplacian of ``v0_diff`` with the point
    masses removed: the constant ``-4 pi (M - N)/|S|`` on the torus and the
    smooth residual ``-g`` on the plane. ``boundary`` holds the values of the
    background on the four box edges (plane only).
    """

    v0_diff: GridField
    source_nodes: list
    mean_offset: float
    regular_laplacian: np.ndarray
    boundary: Optional[dict] = None
    notes: list = field(default_factory=list)


def nearest_node(spec: DomainSpec, point) -> tuple:
    (h1, h2), (o1, o2) = spec.spacing, spec.origin
    n1, n2 = spec.grid
    i = int(math.floor((point[0] - o1) / h1))
    j = int(math.floor((point[1] - o2) / h2))
    if spec.kind == "torus":
        return (i % n1, j % n2)
    return (min(max(i, 0), n1 - 1), min(max(j, 0), n2 - 1))


def torus_source_array(spec: DomainSpec, config: VortexConfiguration) -> tuple:
    """Kronecker masses ``4 pi m / cell_area`` at the nearest nodes."""
    src = np.zeros(spec.grid)
    nodes = []
    occupied: dict = {}
    for point, m in config.signed_sources():
        ij = nearest_node(spec, point)
        if ij in occupied and np.sign(occupied[ij]) != np.sign(m):
            raise ConfigError(f"vortex and antivortex share grid node {ij}; refine the grid")
        occupied[ij] = occupied.get(ij, 0) + m
        src[ij] += FOUR_PI * m / spec.cell_area
        nodes.append((ij, m))
    return src, nodes


def torus_background(spec: DomainSpec, config: VortexConfiguration, tol: float = 1e-9) -> BackgroundField:
    """Zero-mean solution of the discrete background equation on the torus."""
    if spec.kind != "torus":
        raise ConfigError("torus_background needs a torus domain")
    config = config.reduced(spec)
    src, nodes = torus_source_array(spec, config)
    offset = -FOUR_PI * (config.M - config.N) / spec.area
    rhs = src + offset
    assert abs(rhs.mean()) <= 1e-9 * max(1.0, np.abs(src).max()), "sources are not mean-free"
    solver = operators.PeriodicSolver(spec.grid, spec.spacing)
    v0 = solver.solve(rhs - rhs.mean())
    resid = np.abs(operators.laplacian_periodic(v0, spec.spacing) - rhs).max()
    if resid > tol * max(1.0, np.abs(rhs).max()):
        raise RuntimeError(f"background Poisson residual {resid:.3e} above tolerance")
    return BackgroundField(GridField(spec, v0), nodes, offset, np.full(spec.grid, offset))


def _log_core(r2: np.ndarray, mu: float, profile: str = "gauss") -> np.ndarray:
    """Unit background ``ln(mu r^2) + smooth``.

    ``gauss``: ``ln(1 - exp(-mu r^2))``, whose regular Laplacian decays like a
    Gaussian. ``rational``: ``ln(r^2 / (1 + mu r^2))``, decaying like ``1/r^2``.
    """
    if profile == "rational":
        return -np.log(mu + 1.0 / r2)
    q = mu * r2
    small = q < math.log(2.0)
    out = np.empty_like(q)
    out[small] = np.log(-np.expm1(-q[small]))
    out[~small] = np.log1p(-np.exp(-q[~small]))
    return out


def _q_plus_expm1(q: np.ndarray) -> np.ndarray:
    # q + expm1(-q) = sum_{k>=2} (-q)^k / k!, summed directly for small q
    out = q + np.expm1(-q)
    small = q < 0.5
    if small.any():
        qs = q[small]
        term = 0.5 * qs * qs
        acc = term.copy()
        for k in range(3, 24):
            term = -term * qs / k
            acc += term
        out[small] = acc
    return out


def _core_source(r2: np.ndarray, mu: float, profile: str = "gauss") -> np.ndarray:
    """``g = -lap`` of the unit background away from its singular point."""
    if profile == "rational":
        return 4.0 * mu / (1.0 + mu * r2) ** 2
    q = np.maximum(mu * r2, 1e-12)
    return 4.0 * mu * np.exp(-q) * _q_plus_expm1(q) / np.expm1(-q) ** 2


def plane_background(spec: DomainSpec, config: VortexConfiguration, core_scale: float = 1.0,
                     profile: str = "gauss") -> BackgroundField:
    """Closed-form plane background ``sum_i m_i b(|x - q_i|)`` (antivortices
    with the opposite sign) and its smooth residual, where ``b`` is the unit
    profile of :func:`_log_core`."""
    if spec.kind != "plane":
        raise ConfigError("plane_background needs a plane domain")
    if core_scale <= 0:
        raise ConfigError("core_scale must be positive")
    config = config.reduced(spec)
    mu = float(core_scale)
    h = min(spec.spacing)
    v0 = np.zeros(spec.grid)
    reg = np.zeros(spec.grid)
    (o1, o2), (L1, L2) = spec.origin, spec.lengths
    x, y = spec.axes()
    edges = {
        "left": (np.full_like(y, o1), y), "right": (np.full_like(y, o1 + L1), y),
        "bottom": (x, np.full_like(x, o2)), "top": (x, np.full_like(x, o2 + L2)),
    }
    boundary = {k: np.zeros_like(ex) for k, (ex, _) in edges.items()}
    notes, nodes = [], []
    for point, m in config.signed_sources():
        dx, dy = spec.displacement(point)
        r2 = dx * dx + dy * dy
        reg -= m * _core_source(np.maximum(r2, 1e-300), mu, profile)
        hit = r2 < (1e-9 * h) ** 2
        if hit.any():
            r2 = np.where(hit, (0.5 * h) ** 2, r2)
            msg = f"source {point} sits on a grid node; using the value at distance h/2 there"
            notes.append(msg)
            logger.warning(msg)
        v0 += m * _log_core(r2, mu, profile)
        for k, (ex, ey) in edges.items():
            er2 = (ex - point[0]) ** 2 + (ey - point[1]) ** 2
            boundary[k] += m * _log_core(np.maximum(er2, 1e-300), mu, profile)
        nodes.append((nearest_node(spec, point), m))
    bmax = max(float(np.abs(b).max()) for b in boundary.values())
    if bmax > 0.1:
        msg = f"background reaches {bmax:.3g} on the box boundary; the domain is too small"
        notes.append(msg)
        logger.warning(msg)
    return BackgroundField(GridField(spec, v0), nodes, 0.0, reg, boundary, notes)


def background(spec: DomainSpec, config: VortexConfiguration, core_scale: float = 1.0) -> BackgroundField:
    if spec.kind == "torus":
        return torus_background(spec, config)
    return plane_background(spec, config, core_scale)


def core_mask(spec: DomainSpec, points: Sequence, cells: float = 3.0, radius: Optional[float] = None) -> np.ndarray:
    """Boolean mask of nodes farther than ``cells`` grid cells (or ``radius``)
    from every point; True means "off-core"."""
    rad = radius if radius is not None else cells * max(spec.spacing)
    mask = np.ones(spec.grid, dtype=bool)
    for p in points:
        dx, dy = spec.displacement(p)
        mask &= dx * dx + dy * dy > rad * rad
    return mask

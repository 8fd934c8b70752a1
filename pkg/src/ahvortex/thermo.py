"""Statistical mechanics of the quantized vortex spectrum.

States are labelled by ``(M, N)`` with energy ``E_B = 2 pi (M (1 - B) + N (1 + B))``
and are admissible when ``|M - N| < |S| / (2 pi)``. Sums are truncated at
``n_max`` and evaluated in log space so large fields do not overflow.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ThermoConfig:
    area: float
    kT: float
    B: float = 0.0
    n_max: int = 200

    def __post_init__(self):
        if not self.area > 0:
            raise ValueError("area must be positive")
        if not self.kT > 0:
            raise ValueError("kT must be positive")
        if int(self.n_max) < 1:
            raise ValueError("n_max must be >= 1")

    @property
    def max_difference(self) -> int:
        """Largest admissible ``|M - N|`` (strict Bradlow bound)."""
        bound = self.area / TWO_PI
        d = math.ceil(bound) - 1
        return max(d, 0)


@dataclass
class ThermoReport:
    Z: float
    log_Z: float
    U: float
    tail_bound: float
    argmin_energy: tuple
    min_energy: float
    at_boundary: bool
    regime: str
    divergent: bool
    admissible_terms: int
    excluded_terms: int
    n_max: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["argmin_energy"] = list(self.argmin_energy)
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = repr(v)
        return d


def classify_field(B: float) -> str:
    if math.isclose(abs(B), 1.0, rel_tol=0.0, abs_tol=1e-12):
        return "critical"
    if abs(B) < 1.0:
        return "subcritical"
    return "supercritical-vortex" if B > 0 else "supercritical-antivortex"


def energy_levels(cfg: ThermoConfig):
    """Grids ``M, N`` over ``[0, n_max]^2``, energies ``E_B`` and the admissibility mask."""
    n = np.arange(int(cfg.n_max) + 1)
    M, N = np.meshgrid(n, n, indexing="ij")
    E = TWO_PI * (M * (1.0 - cfg.B) + N * (1.0 + cfg.B))
    admissible = np.abs(M - N) <= cfg.max_difference
    return M, N, E, admissible


def boltzmann_weights(cfg: ThermoConfig) -> np.ndarray:
    """``exp(-E_B / kT)`` on the truncated lattice, zero for inadmissible pairs."""
    _, _, E, adm = energy_levels(cfg)
    with np.errstate(over="ignore"):
        w = np.exp(-E / cfg.kT)
    return np.where(adm, w, 0.0)


def argmin_scan(cfg: ThermoConfig, reverse: bool = False) -> tuple:
    """Brute-force minimum of ``E_B`` over admissible pairs.

    Ties break towards smaller ``M + N``, then smaller ``M``.
    """
    d = cfg.max_difference
    rng = range(int(cfg.n_max), -1, -1) if reverse else range(int(cfg.n_max) + 1)
    best, best_key = None, None
    for m in rng:
        for n in rng:
            if abs(m - n) > d:
                continue
            key = (TWO_PI * (m * (1.0 - cfg.B) + n * (1.0 + cfg.B)), m + n, m)
            if best_key is None or key < best_key:
                best, best_key = (m, n), key
    return best, best_key[0]


def _envelope_tail(cfg: ThermoConfig) -> float:
    """Bound on the omitted terms ignoring the admissibility constraint."""
    la = TWO_PI * (1.0 - cfg.B) / cfg.kT
    lb = TWO_PI * (1.0 + cfg.B) / cfg.kT
    a, b = math.exp(-la), math.exp(-lb)
    K = int(cfg.n_max) + 1
    # 1/((1-a)(1-b)) minus the in-box part, written without cancellation
    aK, bK = a ** K, b ** K
    return (aK + bK - aK * bK) / ((1.0 - a) * (1.0 - b))


def _constrained_tail(cfg: ThermoConfig, limit: int = 1_000_000) -> float:
    """Exact sum of the admissible terms beyond the truncation box.

    Along a fixed difference ``d = M - N`` the weights form a geometric series
    with ratio ``exp(-4 pi / kT)``. Returns ``inf`` on overflow or when the
    admissible band is wider than ``limit``.
    """
    dmax = cfg.max_difference
    if dmax > limit:
        return math.inf
    K = int(cfg.n_max)
    ln_ratio = -2.0 * TWO_PI / cfg.kT
    d = np.arange(-dmax, dmax + 1)
    # line d holds (M, N) = (k + d, k) for k >= max(0, -d); inside the box k <= min(K, K - d)
    k_first = np.maximum(np.minimum(K, K - d) + 1, np.maximum(0, -d))
    ln_head = -TWO_PI * (d * (1.0 - cfg.B)) / cfg.kT + ln_ratio * k_first
    ln_terms = ln_head - math.log1p(-math.exp(ln_ratio))
    with np.errstate(over="ignore"):
        return float(np.exp(logsumexp(ln_terms)))


def partition_function(cfg: ThermoConfig) -> ThermoReport:
    M, N, E, adm = energy_levels(cfg)
    logw = np.where(adm, -E / cfg.kT, -np.inf)
    log_Z = float(logsumexp(logw))
    p = np.exp(logw - log_Z)
    U = float(np.sum(p * np.where(adm, E, 0.0)))
    with np.errstate(over="ignore"):
        Z = math.exp(log_Z) if log_Z < 709.0 else math.inf
    divergent = min(1.0 - cfg.B, 1.0 + cfg.B) <= 0.0
    tail = _constrained_tail(cfg) if divergent else min(_envelope_tail(cfg), _constrained_tail(cfg))
    (m0, n0), e0 = argmin_scan(cfg)
    K = int(cfg.n_max)
    return ThermoReport(Z, log_Z, U, tail, (m0, n0), e0, m0 == K or n0 == K,
                        classify_field(cfg.B), divergent, int(adm.sum()), int((~adm).sum()), K)


def write_weights_csv(cfg: ThermoConfig, path) -> None:
    M, N, E, adm = energy_levels(cfg)
    logw = np.where(adm, -E / cfg.kT, -np.inf)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["M", "N", "energy", "log_weight", "admissible"])
        for m, n, e, lw, a in zip(M.ravel(), N.ravel(), E.ravel(), logw.ravel(), adm.ravel()):
            wr.writerow([int(m), int(n), repr(float(e)), repr(float(lw)), int(a)])


def closed_form_unconstrained(kT: float, B: float = 0.0) -> Optional[float]:
    """Infinite double geometric sum without the admissibility constraint (|B| < 1)."""
    if abs(B) >= 1.0:
        return None
    a = math.exp(-TWO_PI * (1.0 - B) / kT)
    b = math.exp(-TWO_PI * (1.0 + B) / kT)
    return 1.0 / ((1.0 - a) * (1.0 - b))

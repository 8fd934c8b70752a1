"""Five-point finite-difference operators on cell-centred grids and their
fast inverses (FFT on the torus, DST-II on the Dirichlet box)."""

from __future__ import annotations

import numpy as np
from scipy import fft


def laplacian_periodic(u: np.ndarray, h) -> np.ndarray:
    h1, h2 = h
    return ((np.roll(u, -1, 0) - 2 * u + np.roll(u, 1, 0)) / h1**2
            + (np.roll(u, -1, 1) - 2 * u + np.roll(u, 1, 1)) / h2**2)


def pad_dirichlet(u: np.ndarray, boundary=None) -> np.ndarray:
    """Add one ghost layer so that the face average equals the boundary data.

    ``boundary`` maps ``left/right/bottom/top`` to edge values (zero if None).
    Corner ghosts are never read by the five-point stencil.
    """
    n1, n2 = u.shape
    p = np.zeros((n1 + 2, n2 + 2))
    p[1:-1, 1:-1] = u
    b = boundary or {}
    p[0, 1:-1] = 2 * b.get("left", 0.0) - u[0, :]
    p[-1, 1:-1] = 2 * b.get("right", 0.0) - u[-1, :]
    p[1:-1, 0] = 2 * b.get("bottom", 0.0) - u[:, 0]
    p[1:-1, -1] = 2 * b.get("top", 0.0) - u[:, -1]
    return p


def laplacian_dirichlet(u: np.ndarray, h, boundary=None) -> np.ndarray:
    h1, h2 = h
    p = pad_dirichlet(u, boundary)
    c = p[1:-1, 1:-1]
    return ((p[2:, 1:-1] - 2 * c + p[:-2, 1:-1]) / h1**2
            + (p[1:-1, 2:] - 2 * c + p[1:-1, :-2]) / h2**2)


def dirichlet_lift(shape, h, boundary) -> np.ndarray:
    """Boundary contribution ``B`` with ``lap(u; bc) = lap(u; 0) + B``."""
    return laplacian_dirichlet(np.zeros(shape), h, boundary)


def laplacian(u: np.ndarray, kind: str, h, boundary=None) -> np.ndarray:
    if kind == "torus":
        return laplacian_periodic(u, h)
    return laplacian_dirichlet(u, h, boundary)


def gradient(u: np.ndarray, kind: str, h, boundary=None) -> tuple:
    """Centred differences; periodic wrap on the torus, Dirichlet ghosts on the box."""
    h1, h2 = h
    if kind == "torus":
        return ((np.roll(u, -1, 0) - np.roll(u, 1, 0)) / (2 * h1),
                (np.roll(u, -1, 1) - np.roll(u, 1, 1)) / (2 * h2))
    p = pad_dirichlet(u, boundary)
    return ((p[2:, 1:-1] - p[:-2, 1:-1]) / (2 * h1),
            (p[1:-1, 2:] - p[1:-1, :-2]) / (2 * h2))


class PeriodicSolver:
    """Solve ``(lap - shift) u = f`` with the periodic five-point Laplacian."""

    def __init__(self, shape, h):
        n1, n2 = shape
        h1, h2 = h
        k1 = np.arange(n1)
        k2 = np.arange(n2 // 2 + 1)
        l1 = -(4.0 / h1**2) * np.sin(np.pi * k1 / n1) ** 2
        l2 = -(4.0 / h2**2) * np.sin(np.pi * k2 / n2) ** 2
        self.shape = (n1, n2)
        self.eig = l1[:, None] + l2[None, :]

    def solve(self, f: np.ndarray, shift: float = 0.0) -> np.ndarray:
        fh = fft.rfft2(f)
        denom = self.eig - shift
        if shift == 0.0:
            denom = denom.copy()
            denom[0, 0] = 1.0
            fh[0, 0] = 0.0
        return fft.irfft2(fh / denom, s=self.shape)


class DirichletSolver:
    """Solve ``(lap - shift) u = f`` with homogeneous Dirichlet data on the
    faces of the cell-centred box (DST-II diagonalizes the stencil)."""

    def __init__(self, shape, h):
        n1, n2 = shape
        h1, h2 = h
        k1 = np.arange(1, n1 + 1)
        k2 = np.arange(1, n2 + 1)
        l1 = -(4.0 / h1**2) * np.sin(np.pi * k1 / (2 * n1)) ** 2
        l2 = -(4.0 / h2**2) * np.sin(np.pi * k2 / (2 * n2)) ** 2
        self.shape = (n1, n2)
        self.eig = l1[:, None] + l2[None, :]

    def solve(self, f: np.ndarray, shift: float = 0.0) -> np.ndarray:
        fh = fft.dstn(f, type=2, norm="ortho")
        return fft.idstn(fh / (self.eig - shift), type=2, norm="ortho")


def make_solver(kind: str, shape, h):
    return PeriodicSolver(shape, h) if kind == "torus" else DirichletSolver(shape, h)

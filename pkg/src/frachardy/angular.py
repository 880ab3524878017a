"""Weighted angular eigensolver on the half sphere of the extension space.

For an axisymmetric pole of mass ``lam`` the extension problem separates in
polar coordinates; the angular part is a Sturm-Liouville problem with the
degenerate weight

- ``N >= 2``: ``w(phi) = sin(phi)^{N-1} cos(phi)^{1-2s}`` on ``(0, pi/2)``,
  colatitude measured from the extension axis, with a Robin term of strength
  ``kappa_s * lam`` on the equator ``phi = pi/2`` (the trace sphere);
- ``N = 1``: ``w(phi) = sin(phi)^{1-2s}`` on ``(0, pi)`` with Robin terms at
  both ends (the trace consists of the two half-lines).

Eigenvalues ``mu_1 <= mu_2 <= ...`` are returned relative to the same
normalization as the closed-form dispersion curve: on the curve,
``mu_1(Lambda(alpha)) = alpha^2 - ((N-2s)/2)^2``.

For ``N >= 2`` the enumeration covers the axisymmetric sector; the ground
mode is axisymmetric, so ``mu_1`` is the global first eigenvalue.

Discretization: P1 elements on a mesh graded toward the degenerate ends
(node map ``1 - (1-u)^beta``), Gauss-Legendre quadrature on interior
elements and Gauss-Jacobi rules absorbing the ``dist^{1-2s}`` factor on the
end elements. The generalized eigenproblem is Jacobi-balanced before the
dense LAPACK subset solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh
from scipy.special import roots_jacobi, roots_legendre

from .specfun import FracParams


@dataclass(frozen=True)
class AngularGrid:
    """Mesh parameters: ``m`` elements (>= 64), grading ``beta``, quadrature order."""

    m: int = 2048
    beta: float = 1.5
    quad_order: int = 8

    def __post_init__(self) -> None:
        if self.m < 64:
            raise ValueError(f"AngularGrid: need m >= 64, got {self.m}")
        if self.beta < 1.0:
            raise ValueError(f"AngularGrid: grading beta must be >= 1, got {self.beta}")


@dataclass(frozen=True)
class AngularEigenResult:
    lam: float
    mu_values: np.ndarray
    psi1: np.ndarray
    nodes: np.ndarray
    equator_value: float


def _half_graded(m: int, beta: float) -> np.ndarray:
    u = np.arange(m + 1) / m
    return 0.5 * np.pi * (1.0 - (1.0 - u) ** beta)


def _weight(phi: np.ndarray, N: int, s: float) -> np.ndarray:
    if N == 1:
        return np.sin(phi) ** (1.0 - 2.0 * s)
    return np.sin(phi) ** (N - 1) * np.cos(phi) ** (1.0 - 2.0 * s)


def _elem_quad(a: float, b: float, t: np.ndarray, wts: np.ndarray, scale: float,
               smooth: np.ndarray) -> tuple[float, np.ndarray]:
    """Integrals (int w, 2x2 mass block) on [a, b] from prepared quadrature data.

    ``t`` are the physical quadrature points, ``wts * smooth * scale`` the
    effective weights already containing the Sturm-Liouville weight.
    """
    h = b - a
    eff = wts * smooth * scale
    total = float(np.sum(eff))
    n1 = (b - t) / h
    n2 = (t - a) / h
    mass = np.empty((2, 2))
    mass[0, 0] = np.sum(eff * n1 * n1)
    mass[0, 1] = mass[1, 0] = np.sum(eff * n1 * n2)
    mass[1, 1] = np.sum(eff * n2 * n2)
    return total, mass


def _assemble(p: FracParams, grid: AngularGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[int]]:
    """Stiffness and mass tridiagonals (without the Robin term) plus Robin node ids."""
    N, s = p.N, p.s
    if N == 1:
        half = _half_graded(max(grid.m // 2, 32), grid.beta)
        nodes = np.concatenate([0.5 * np.pi - half[::-1], 0.5 * np.pi + half[1:]])
        robin = [0, nodes.size - 1]
        sing_left, sing_right = True, True
        far_end = np.pi
    else:
        nodes = _half_graded(grid.m, grid.beta)
        robin = [nodes.size - 1]
        sing_left, sing_right = False, True

    nel = nodes.size - 1
    tgl, wgl = roots_legendre(grid.quad_order)
    q = grid.quad_order
    tj_r, wj_r = roots_jacobi(q, 1.0 - 2.0 * s, 0.0)
    tj_l, wj_l = roots_jacobi(q, 0.0, 1.0 - 2.0 * s)

    Ad = np.zeros(nodes.size)
    Ao = np.zeros(nel)
    Md = np.zeros(nodes.size)
    Mo = np.zeros(nel)

    for i in range(nel):
        a, b = nodes[i], nodes[i + 1]
        h = b - a
        if sing_right and i == nel - 1:
            # absorb (end - phi)^{1-2s} into the Jacobi weight; the rest is smooth
            t = b - 0.5 * h * (1.0 - tj_r)
            dist = b - t
            smooth = _weight(t, N, s) / dist ** (1.0 - 2.0 * s)
            wint, mass = _elem_quad(a, b, t, wj_r, (0.5 * h) ** (2.0 - 2.0 * s), smooth)
        elif sing_left and i == 0:
            t = a + 0.5 * h * (1.0 + tj_l)
            dist = t - a
            smooth = _weight(t, N, s) / dist ** (1.0 - 2.0 * s)
            wint, mass = _elem_quad(a, b, t, wj_l, (0.5 * h) ** (2.0 - 2.0 * s), smooth)
        else:
            t = a + 0.5 * h * (1.0 + tgl)
            smooth = _weight(t, N, s)
            wint, mass = _elem_quad(a, b, t, wgl, 0.5 * h, smooth)
        k = wint / h**2
        Ad[i] += k
        Ad[i + 1] += k
        Ao[i] -= k
        Md[i] += mass[0, 0]
        Md[i + 1] += mass[1, 1]
        Mo[i] += mass[0, 1]
    return np.stack([Ad, np.append(Ao, 0.0)]), np.stack([Md, np.append(Mo, 0.0)]), nodes, robin


@lru_cache(maxsize=64)
def _solve_cached(lam: float, N: int, s: float, m: int, beta: float, quad_order: int,
                  count: int) -> AngularEigenResult:
    from .specfun import params as make_params

    p = make_params(N, s)
    grid = AngularGrid(m=m, beta=beta, quad_order=quad_order)
    (Ad, Ao), (Md, Mo), nodes, robin = _assemble(p, grid)
    n = nodes.size
    A = np.diag(Ad) + np.diag(Ao[:-1], 1) + np.diag(Ao[:-1], -1)
    M = np.diag(Md) + np.diag(Mo[:-1], 1) + np.diag(Mo[:-1], -1)
    for j in robin:
        A[j, j] -= p.kappa_s * lam

    # Jacobi balancing keeps the generalized problem well conditioned on
    # strongly graded meshes
    d = 1.0 / np.sqrt(Md)
    Ab = A * d[:, None] * d[None, :]
    Mb = M * d[:, None] * d[None, :]
    vals, vecs = eigh(Ab, Mb, subset_by_index=(0, count - 1))
    psi = d[:, None] * vecs

    psi1 = psi[:, 0]
    norm = float(psi1 @ (M @ psi1))
    psi1 = psi1 / np.sqrt(norm)
    if psi1[np.argmax(np.abs(psi1))] < 0:
        psi1 = -psi1
    eq = float(psi1[robin[-1]])
    return AngularEigenResult(lam=float(lam), mu_values=vals, psi1=psi1, nodes=nodes,
                              equator_value=eq)


def solve(lam: float, p: FracParams, grid: AngularGrid | None = None,
          count: int = 6) -> AngularEigenResult:
    """First ``count`` angular eigenvalues and the ground eigenfunction."""
    grid = grid or AngularGrid()
    if count < 1:
        raise ValueError("solve: count must be at least 1")
    return _solve_cached(float(lam), p.N, float(p.s), grid.m, grid.beta,
                         grid.quad_order, int(count))


def mu_k(lam: float, k: int, p: FracParams, grid: AngularGrid | None = None) -> float:
    """k-th angular eigenvalue (k >= 1) for Robin mass ``lam``."""
    if k < 1:
        raise ValueError(f"mu_k: k must be >= 1, got {k}")
    res = solve(lam, p, grid, count=max(k, 4))
    return float(res.mu_values[k - 1])


def psi1_properties(lam: float, p: FracParams, grid: AngularGrid | None = None) -> dict:
    """Sign, normalization, orthogonality defect, and equator value of the ground mode.

    ``w_norm`` is the weighted L2 norm of psi1 (should be 1), ``ortho_defect``
    the largest weighted inner product between distinct computed modes.
    """
    grid = grid or AngularGrid()
    res = solve(lam, p, grid, count=4)
    # re-assemble M to measure orthogonality of the returned basis
    (Ad, Ao), (Md, Mo), nodes, robin = _assemble(p, grid)
    n = nodes.size
    M = np.diag(Md) + np.diag(Mo[:-1], 1) + np.diag(Mo[:-1], -1)
    A = np.diag(Ad) + np.diag(Ao[:-1], 1) + np.diag(Ao[:-1], -1)
    for j in robin:
        A[j, j] -= p.kappa_s * lam
    d = 1.0 / np.sqrt(Md)
    vals, vecs = eigh(A * d[:, None] * d[None, :], M * d[:, None] * d[None, :],
                      subset_by_index=(0, 3))
    psi = d[:, None] * vecs
    gram = psi.T @ (M @ psi)
    off = gram - np.diag(np.diag(gram))
    return {
        "strictly_positive": bool(np.all(res.psi1 > 0.0)),
        "w_norm": float(np.sqrt(res.psi1 @ (M @ res.psi1))),
        "ortho_defect": float(np.max(np.abs(off / np.sqrt(np.outer(np.diag(gram), np.diag(gram)))))),
        "equator_value": res.equator_value,
    }

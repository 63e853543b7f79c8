"""Shared fixtures and dense reference oracles for the test suite.

The oracles here deliberately avoid the package's vectorized code paths:
element matrices are built one by one from the operator definitions and
scattered with dense loops, so they can certify the compact implementations.
"""
from __future__ import annotations

import numpy as np
import pytest

from buckopt.grid import GridModel, b0_b1, elasticity_matrix, shape_grad


def element_coords(grid: GridModel) -> np.ndarray:
    a, b = grid.elem_size
    return 0.5 * np.array([[-a, -b], [a, -b], [a, b], [-a, b]])


GAUSS_PTS = [
    (-1.0 / np.sqrt(3.0), -1.0 / np.sqrt(3.0)),
    (1.0 / np.sqrt(3.0), -1.0 / np.sqrt(3.0)),
    (1.0 / np.sqrt(3.0), 1.0 / np.sqrt(3.0)),
    (-1.0 / np.sqrt(3.0), 1.0 / np.sqrt(3.0)),
]


def dense_element_G(Xe: np.ndarray, nu: float, ue: np.ndarray) -> np.ndarray:
    """Element stress stiffness by direct quadrature of B1' (I2 x sigma) B1."""
    C = elasticity_matrix(nu)
    G = np.zeros((8, 8))
    for xi, zeta in GAUSS_PTS:
        dn = shape_grad(xi, zeta)
        J = dn @ Xe
        gradN = np.linalg.solve(J, dn)
        B0, B1 = b0_b1(gradN)
        s = C @ B0 @ ue
        T = np.kron(np.eye(2), np.array([[s[0], s[2]], [s[2], s[1]]]))
        G += np.linalg.det(J) * (B1.T @ T @ B1)
    return G


def dense_assemble_K(grid: GridModel, xPhys: np.ndarray, K0: np.ndarray, interp) -> np.ndarray:
    K = np.zeros((grid.nDof, grid.nDof))
    eK = interp.e_k(xPhys)
    for e in range(grid.m):
        dofs = grid.cMat[e]
        K[np.ix_(dofs, dofs)] += eK[e] * K0
    return K


def dense_assemble_G(grid: GridModel, xPhys: np.ndarray, U: np.ndarray, nu: float, interp) -> np.ndarray:
    G = np.zeros((grid.nDof, grid.nDof))
    Xe = element_coords(grid)
    eG = interp.e_g(xPhys)
    for e in range(grid.m):
        dofs = grid.cMat[e]
        G[np.ix_(dofs, dofs)] += eG[e] * dense_element_G(Xe, nu, U[dofs])
    return G


def make_cantilever(nelx: int, nely: int, Lx: float = 2.0) -> GridModel:
    """Left edge clamped, unit downward load at the mid-height of the right edge."""
    node_numbers = np.arange((nelx + 1) * (nely + 1), dtype=np.int64).reshape(
        (nely + 1, nelx + 1), order="F"
    )
    left = node_numbers[:, 0]
    fixed = np.concatenate([2 * left, 2 * left + 1])
    F = np.zeros(2 * (nelx + 1) * (nely + 1))
    tip = node_numbers[nely // 2, -1]
    F[2 * tip + 1] = -1.0
    return GridModel.build(nelx, nely, Lx=Lx, fixed=fixed, F=F)


def make_compressed_strip(nelx: int, nely: int, Lx: float = 2.0) -> GridModel:
    """Left edge clamped, compressive load spread over the whole right edge."""
    node_numbers = np.arange((nelx + 1) * (nely + 1), dtype=np.int64).reshape(
        (nely + 1, nelx + 1), order="F"
    )
    left = node_numbers[:, 0]
    fixed = np.concatenate([2 * left, 2 * left + 1])
    F = np.zeros(2 * (nelx + 1) * (nely + 1))
    right = node_numbers[:, -1]
    F[2 * right] = -1e-3 / nely
    F[2 * right[0]] = -1e-3 / (2 * nely)
    F[2 * right[-1]] = -1e-3 / (2 * nely)
    return GridModel.build(nelx, nely, Lx=Lx, fixed=fixed, F=F)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)

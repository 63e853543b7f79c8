"""Global assembly of the stiffness matrix K and the stress stiffness matrix G.

The element stress stiffness matrix has only 10 independent coefficients out
of 64: entries couple x-dofs to x-dofs and y-dofs to y-dofs with equal
values, and mixed pairs vanish. Those coefficients are linear combinations
of the element stress components, so for the whole grid they are obtained at
once as an (m x 10) array Z accumulated over the Gauss points. Scattering Z
to the 10 lower-triangle x-pair positions and once more to the shifted
y-pair positions, then mirroring, yields the full symmetric G.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .grid import AssemblyIndices, GaussRule, GridModel, b0_b1, elasticity_matrix, shape_grad

__all__ = [
    "Interpolation",
    "GaussKernels",
    "centroid_stress",
    "compute_Z",
    "unit_displacement_z",
    "assemble_K",
    "assemble_G",
    "elem_quadratic_form",
    "DOUBLED_COLS",
    "COEFF_NODE_PAIRS",
]

# Node-index pairs (i, k) of the 10 unique coefficients z_ik, column-wise
# lower triangle of the 4x4 nodal pattern.
COEFF_NODE_PAIRS = np.array(
    [[0, 0], [1, 0], [2, 0], [3, 0], [1, 1], [2, 1], [3, 1], [2, 2], [3, 2], [3, 3]],
    dtype=np.int64,
)

# Columns of Z holding off-diagonal coefficients; they appear twice in the
# quadratic form phi' G0 phi and are doubled where that form is expanded.
DOUBLED_COLS = np.array([1, 2, 3, 5, 6, 8], dtype=np.int64)


@dataclass(frozen=True)
class Interpolation:
    """Power-law material interpolations for stiffness and stress scaling."""

    E0: float = 1.0
    Emin: float = 1e-6
    pK: float = 3.0
    pG: float = 3.0

    def e_k(self, xPhys: np.ndarray) -> np.ndarray:
        return self.Emin + (self.E0 - self.Emin) * xPhys**self.pK

    def de_k(self, xPhys: np.ndarray) -> np.ndarray:
        return self.pK * (self.E0 - self.Emin) * xPhys ** (self.pK - 1.0)

    def e_g(self, xPhys: np.ndarray) -> np.ndarray:
        return self.E0 * xPhys**self.pG

    def de_g(self, xPhys: np.ndarray) -> np.ndarray:
        return self.pG * self.E0 * xPhys ** (self.pG - 1.0)


class GaussKernels:
    """Per-Gauss-point operators precomputed once for the uniform grid.

    For each point g: the stress evaluation operator CB[g] = C B0(g) (3x8),
    the coefficient combination array B[g] (3x10) built from the shape
    gradient products, and the quadrature factor w(g) det(J). The centroid
    operator is kept separately for stress reporting.
    """

    def __init__(self, grid: GridModel, nu: float, rule: GaussRule | None = None):
        self.rule = rule if rule is not None else GaussRule.quad2x2()
        a, b = grid.elem_size
        Xe = 0.5 * np.array([[-a, -b], [a, -b], [a, b], [-a, b]])
        C = elasticity_matrix(nu)
        detJ = a * b / 4.0
        self.CB: list[np.ndarray] = []
        self.B: list[np.ndarray] = []
        self.wdet: list[float] = []
        li, lk = COEFF_NODE_PAIRS[:, 0], COEFF_NODE_PAIRS[:, 1]
        for xi, zeta, w in zip(self.rule.xi, self.rule.zeta, self.rule.w):
            dn = shape_grad(xi, zeta)
            J = dn @ Xe
            gradN = np.linalg.solve(J, dn)
            ga, gb = gradN[0], gradN[1]
            B0, _ = b0_b1(gradN)
            self.CB.append(C @ B0)
            self.B.append(
                np.vstack(
                    [
                        ga[li] * ga[lk],
                        gb[li] * gb[lk],
                        gb[lk] * ga[li] + ga[lk] * gb[li],
                    ]
                )
            )
            self.wdet.append(w * detJ)
        gradN0 = np.linalg.solve(shape_grad(0.0, 0.0) @ Xe, shape_grad(0.0, 0.0))
        B0c, _ = b0_b1(gradN0)
        self.CB_centroid = C @ B0c


def centroid_stress(U: np.ndarray, grid: GridModel, kernels: GaussKernels) -> np.ndarray:
    """Element stresses (sx, sy, txy) at the centroid, unit modulus."""
    return U[grid.cMat] @ kernels.CB_centroid.T


def compute_Z(U: np.ndarray, grid: GridModel, kernels: GaussKernels) -> np.ndarray:
    """Accumulate the (m x 10) stress stiffness coefficient array over the Gauss points."""
    Ue = U[grid.cMat]
    Z = np.zeros((grid.m, 10))
    for CB, B, wdet in zip(kernels.CB, kernels.B, kernels.wdet):
        S = Ue @ CB.T
        Z += wdet * (S @ B)
    return Z


def unit_displacement_z(kernels: GaussKernels) -> np.ndarray:
    """The 10x8 operator whose column i is the Z row of the unit displacement e_i.

    The coefficient array is linear in the element displacement, so this
    operator reproduces any Z row as a matrix-vector product. It does not
    depend on the design field.
    """
    out = np.zeros((10, 8))
    for CB, B, wdet in zip(kernels.CB, kernels.B, kernels.wdet):
        out += wdet * (B.T @ CB)
    return out


def _sym_from_lower(L: sparse.spmatrix) -> sparse.csc_matrix:
    L = L.tocsc()
    return (L + L.T - sparse.diags(L.diagonal())).tocsc()


def assemble_K(
    xPhys: np.ndarray,
    K0: np.ndarray,
    indices: AssemblyIndices,
    interp: Interpolation,
    nDof: int,
) -> sparse.csc_matrix:
    """Assemble the full symmetric stiffness matrix K = sum_e E_K(x_e) K0."""
    # Entries of K0 in the same column-wise lower-triangle order as the index
    # pattern, so triplet k of element e is E_K(x_e) * ke_vec[k].
    si = np.concatenate([np.arange(j, 8) for j in range(8)])
    sii = np.concatenate([np.full(8 - j, j) for j in range(8)])
    ke_vec = K0[si, sii]
    vals = (interp.e_k(xPhys)[:, None] * ke_vec[None, :]).ravel()
    lower = sparse.coo_matrix(
        (vals, (indices.Iar[:, 0], indices.Iar[:, 1])), shape=(nDof, nDof)
    )
    return _sym_from_lower(lower)


def assemble_G(
    Z: np.ndarray,
    xPhys: np.ndarray,
    indices: AssemblyIndices,
    interp: Interpolation,
    nDof: int,
) -> sparse.csc_matrix:
    """Assemble the full symmetric stress stiffness matrix from the coefficient array.

    Each scaled coefficient is scattered twice: at its x-pair position and at
    the y-pair position one dof up in both row and column.
    """
    sG = (interp.e_g(xPhys)[:, None] * Z).ravel()
    r, c = indices.IkG[:, 0], indices.IkG[:, 1]
    lower = sparse.coo_matrix((sG, (r, c)), shape=(nDof, nDof)) + sparse.coo_matrix(
        (sG, (r + 1, c + 1)), shape=(nDof, nDof)
    )
    return _sym_from_lower(lower)


def elem_quadratic_form(
    V: np.ndarray, K0: np.ndarray, cMat: np.ndarray, U: np.ndarray | None = None
) -> np.ndarray:
    """Per-element products v_e' K0 u_e (u = v when U is omitted)."""
    Ve = V[cMat]
    Ue = Ve if U is None else U[cMat]
    return np.einsum("ij,ij->i", Ve @ K0, Ue)

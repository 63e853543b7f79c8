"""Structured-grid discretization for 2D quadrilateral finite elements.

Node numbering is column major, top to bottom: node (row r, col c) on the
(nely+1) x (nelx+1) grid has id c*(nely+1) + r. Each node carries an x and a
y degree of freedom (2*id and 2*id+1). Element local nodes run counter
clockwise from the bottom-left corner, so on a y-up frame the reference
square (-1,1)^2 maps onto the element with a positive Jacobian.

All indices are 0-based and uniform across connectivity, loads, supports and
assembly triplets.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GaussRule",
    "GridModel",
    "AssemblyIndices",
    "shape_grad",
    "physical_grad",
    "b0_b1",
    "elasticity_matrix",
    "element_stiffness",
    "build_indices",
]

# Placement matrix picking the engineering-strain rows (eps_x, eps_y, gamma_xy)
# out of the Kronecker-expanded shape-function gradient.
_L_PLACEMENT = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 1.0, 1.0, 0.0],
    ]
)

# Column-wise enumeration of the 36 lower-triangle positions of an 8x8
# element matrix: pairs (sI[k], sII[k]) = (j..7, j) for j = 0..7.
_SI = np.concatenate([np.arange(j, 8) for j in range(8)]).astype(np.int32)
_SII = np.concatenate([np.full(8 - j, j) for j in range(8)]).astype(np.int32)

# Positions, within the 36-entry enumeration above, of the 10 pairs coupling
# x-dofs only. They carry the unique coefficients of the stress stiffness
# matrix; the matching y-dof pairs sit at (+1, +1).
_IND_M = np.array([0, 2, 4, 6, 15, 17, 19, 26, 28, 33], dtype=np.int32)


def shape_grad(xi: float, zeta: float) -> np.ndarray:
    """Gradient of the four bilinear shape functions in logical coordinates.

    Returns the 2x4 array with rows d/dxi and d/dzeta, local nodes ordered
    counter clockwise from (-1,-1).
    """
    return 0.25 * np.array(
        [
            [zeta - 1.0, 1.0 - zeta, 1.0 + zeta, -1.0 - zeta],
            [xi - 1.0, -1.0 - xi, 1.0 + xi, 1.0 - xi],
        ]
    )


def physical_grad(Xe: np.ndarray, xi: float, zeta: float) -> np.ndarray:
    """(x,y)-gradient of the shape functions: J^{-1} times the logical gradient.

    ``Xe`` holds the 4x2 element node coordinates. Raises ``ValueError`` for a
    degenerate element (vanishing Jacobian determinant).
    """
    dn = shape_grad(xi, zeta)
    J = dn @ Xe
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    scale = max(abs(J).max() ** 2, 1.0)
    if abs(det) < 1e-12 * scale:
        raise ValueError(f"degenerate element: |det J| = {abs(det):.3e}")
    return np.linalg.solve(J, dn)


def b0_b1(gradN: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Strain-displacement operator B0 (3x8) and deformation-gradient operator B1 (4x8)."""
    B0 = _L_PLACEMENT @ np.kron(gradN, np.eye(2))
    B1 = np.vstack(
        [
            np.kron(gradN, np.array([[1.0, 0.0]])),
            np.kron(gradN, np.array([[0.0, 1.0]])),
        ]
    )
    return B0, B1


def elasticity_matrix(nu: float) -> np.ndarray:
    """Non-dimensional plane-stress elasticity matrix (unit Young modulus)."""
    return np.array(
        [
            [1.0, nu, 0.0],
            [nu, 1.0, 0.0],
            [0.0, 0.0, (1.0 - nu) / 2.0],
        ]
    ) / (1.0 - nu**2)


@dataclass(frozen=True)
class GaussRule:
    """Tensor-product quadrature points and weights on the reference square."""

    xi: np.ndarray
    zeta: np.ndarray
    w: np.ndarray

    @classmethod
    def quad2x2(cls) -> "GaussRule":
        g = 1.0 / np.sqrt(3.0)
        xi = np.array([-g, g, g, -g])
        zeta = np.array([-g, -g, g, g])
        return cls(xi=xi, zeta=zeta, w=np.ones(4))


def element_stiffness(a: float, b: float, nu: float) -> np.ndarray:
    """Plane-stress stiffness matrix of a rectangular element, unit modulus and thickness.

    ``a`` and ``b`` are the element half width and half height. Integrated
    with the 2x2 Gauss rule, which is exact for the bilinear element.
    """
    if not (-1.0 < nu < 0.5):
        raise ValueError(f"Poisson ratio {nu} outside (-1, 0.5)")
    if a <= 0.0 or b <= 0.0:
        raise ValueError("element half dimensions must be positive")
    Xe = np.array([[-a, -b], [a, -b], [a, b], [-a, b]])
    C = elasticity_matrix(nu)
    rule = GaussRule.quad2x2()
    detJ = a * b  # constant for the rectangle
    K0 = np.zeros((8, 8))
    for xi, zeta, w in zip(rule.xi, rule.zeta, rule.w):
        B0, _ = b0_b1(physical_grad(Xe, xi, zeta))
        K0 += w * detJ * (B0.T @ C @ B0)
    return 0.5 * (K0 + K0.T)


@dataclass(frozen=True)
class AssemblyIndices:
    """Triplet index vectors for the stiffness and stress stiffness matrices.

    ``iK``/``jK`` hold the raw 36 lower-triangle dof pairs per element in the
    column-wise local pattern; ``Iar`` is their pair-sorted (descending)
    flattening, so every stored triplet satisfies row >= col. ``iG``/``jG``
    are the 10-pair subset at positions ``indM`` used for the stress
    stiffness matrix, with ``IkG`` the sorted counterpart.
    """

    iK: np.ndarray  # (m, 36)
    jK: np.ndarray  # (m, 36)
    Iar: np.ndarray  # (36 m, 2)
    indM: np.ndarray  # (10,)
    iG: np.ndarray  # (m, 10)
    jG: np.ndarray  # (m, 10)
    IkG: np.ndarray  # (10 m, 2)


def build_indices(cMat: np.ndarray) -> AssemblyIndices:
    """Build the duplicate-summing assembly index vectors from the connectivity."""
    cMat = np.asarray(cMat, dtype=np.int32)
    iK = cMat[:, _SI]
    jK = cMat[:, _SII]
    Iar = np.column_stack(
        [np.maximum(iK, jK).ravel(), np.minimum(iK, jK).ravel()]
    )
    iG = iK[:, _IND_M]
    jG = jK[:, _IND_M]
    IkG = np.column_stack(
        [np.maximum(iG, jG).ravel(), np.minimum(iG, jG).ravel()]
    )
    return AssemblyIndices(iK=iK, jK=jK, Iar=Iar, indM=_IND_M.copy(), iG=iG, jG=jG, IkG=IkG)


@dataclass(frozen=True)
class GridModel:
    """Structured rectangular design domain with supports, loads and passive sets."""

    nelx: int
    nely: int
    Lx: float
    node_numbers: np.ndarray  # (nely+1, nelx+1)
    elem_numbers: np.ndarray  # (nely, nelx)
    cMat: np.ndarray  # (m, 8)
    nDof: int
    fixed: np.ndarray
    free: np.ndarray
    F: np.ndarray
    pasS: np.ndarray
    pasV: np.ndarray
    act: np.ndarray

    @property
    def m(self) -> int:
        return self.nelx * self.nely

    @property
    def Ly(self) -> float:
        return self.Lx * self.nely / self.nelx

    @property
    def elem_size(self) -> tuple[float, float]:
        return self.Lx / self.nelx, self.Ly / self.nely

    @classmethod
    def build(
        cls,
        nelx: int,
        nely: int,
        Lx: float = 1.0,
        fixed: np.ndarray | None = None,
        F: np.ndarray | None = None,
        pasS: np.ndarray | None = None,
        pasV: np.ndarray | None = None,
    ) -> "GridModel":
        if nelx < 1 or nely < 1:
            raise ValueError("grid must have at least one element per direction")
        n_nodes = (nelx + 1) * (nely + 1)
        n_dof = 2 * n_nodes
        node_numbers = np.arange(n_nodes, dtype=np.int32).reshape(
            (nely + 1, nelx + 1), order="F"
        )
        elem_numbers = np.arange(nelx * nely, dtype=np.int32).reshape(
            (nely, nelx), order="F"
        )
        # First local dof: x-dof of the bottom-left node of each element.
        c_vec = (2 * (node_numbers[:-1, :-1] + 1)).reshape(-1, order="F")
        offsets = np.array(
            [0, 1, 2 * nely + 2, 2 * nely + 3, 2 * nely, 2 * nely + 1, -2, -1],
            dtype=np.int32,
        )
        cMat = (c_vec[:, None] + offsets[None, :]).astype(np.int32)

        fixed = np.unique(np.asarray(fixed if fixed is not None else [], dtype=np.int64))
        if fixed.size and (fixed.min() < 0 or fixed.max() >= n_dof):
            raise ValueError("fixed dof index out of range")
        free = np.setdiff1d(np.arange(n_dof, dtype=np.int64), fixed)

        if F is None:
            F = np.zeros(n_dof)
        else:
            F = np.asarray(F, dtype=float)
            if F.shape != (n_dof,):
                raise ValueError(f"load vector must have length {n_dof}")

        m = nelx * nely
        pasS = np.unique(np.asarray(pasS if pasS is not None else [], dtype=np.int64))
        pasV = np.unique(np.asarray(pasV if pasV is not None else [], dtype=np.int64))
        for p in (pasS, pasV):
            if p.size and (p.min() < 0 or p.max() >= m):
                raise ValueError("passive element index out of range")
        if np.intersect1d(pasS, pasV).size:
            raise ValueError("passive solid and passive void sets overlap")
        act = np.setdiff1d(np.arange(m, dtype=np.int64), np.union1d(pasS, pasV))

        return cls(
            nelx=nelx,
            nely=nely,
            Lx=float(Lx),
            node_numbers=node_numbers,
            elem_numbers=elem_numbers,
            cMat=cMat,
            nDof=n_dof,
            fixed=fixed,
            free=free,
            F=F,
            pasS=pasS,
            pasV=pasV,
            act=act,
        )

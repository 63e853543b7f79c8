"""Response gradients: compliance, volume, buckling factors, KS aggregation.

The derivative of each load factor reciprocal mu_i with respect to a
physical density combines three element-level contributions: the direct
stress stiffness term, the stiffness term scaled by mu_i, and an adjoint
term accounting for the stress dependence on the displacement field. All
three reuse the compact 10-coefficient representation of the element stress
stiffness matrix, so no element matrices are ever formed.
"""
from __future__ import annotations

import numpy as np

from .assembly import DOUBLED_COLS, GaussKernels, Interpolation, elem_quadratic_form
from .grid import AssemblyIndices, GridModel
from .solvers import BucklingSolution, FactorizedOperator

__all__ = [
    "compliance_and_grad",
    "volume_and_grad",
    "mode_pair_products",
    "adjoint_loads",
    "mu_sensitivities",
    "ks_value",
    "ks_grad",
    "chain_to_design",
]


def compliance_and_grad(
    U: np.ndarray,
    xPhys: np.ndarray,
    grid: GridModel,
    K0: np.ndarray,
    interp: Interpolation,
) -> tuple[float, np.ndarray]:
    """Compliance F'U and its gradient with respect to the physical densities."""
    c = float(grid.F @ U)
    dc = np.zeros(grid.m)
    dc[grid.act] = (
        -interp.de_k(xPhys[grid.act])
        * elem_quadratic_form(U, K0, grid.cMat[grid.act])
    )
    return c, dc


def volume_and_grad(xPhys: np.ndarray, grid: GridModel) -> tuple[float, np.ndarray]:
    """Total volume fraction (mean physical density) and its gradient."""
    f = float(np.mean(xPhys))
    df = np.zeros(grid.m)
    df[grid.act] = 1.0 / grid.m
    return f, df


def mode_pair_products(phi: np.ndarray, indices: AssemblyIndices) -> np.ndarray:
    """Eigenvector pair products matching the 10 coefficient positions, (m x 10).

    Entry (e, i) is phi_r phi_c + phi_{r+1} phi_{c+1} for the dof pair (r, c)
    of coefficient i on element e, which contracts the doubled coefficient
    array to the quadratic form phi' G0 phi.
    """
    m = indices.iG.shape[0]
    a1 = indices.IkG[:, 1].reshape(m, 10)
    a2 = indices.IkG[:, 0].reshape(m, 10)
    return phi[a1] * phi[a2] + phi[a1 + 1] * phi[a2 + 1]


def adjoint_loads(
    P: np.ndarray,
    eG: np.ndarray,
    dZdu: np.ndarray,
    grid: GridModel,
) -> np.ndarray:
    """Global load vector phi' (d G / d u) phi assembled from pair products.

    ``P`` is the (m x 10) pair-product array of one mode, ``eG`` the stress
    interpolation field and ``dZdu`` the constant 10x8 unit-displacement
    coefficient operator.
    """
    dZt = dZdu.copy()
    dZt[DOUBLED_COLS, :] *= 2.0
    local = (eG[:, None] * P) @ dZt  # (m, 8)
    return np.bincount(
        grid.cMat.ravel(), weights=local.ravel(), minlength=grid.nDof
    )


def mu_sensitivities(
    sol: BucklingSolution,
    U: np.ndarray,
    xPhys: np.ndarray,
    Z: np.ndarray,
    dZdu: np.ndarray,
    factor: FactorizedOperator,
    grid: GridModel,
    indices: AssemblyIndices,
    K0: np.ndarray,
    interp: Interpolation,
) -> np.ndarray:
    """Gradients of every mu_i with respect to the physical densities, (nEig x m).

    Assumes K-normalized eigenvectors. The adjoint problems of all modes are
    solved in one blocked call against the stored factor.
    """
    n_eig = sol.n_eig
    m = grid.m
    dEg = interp.de_g(xPhys)
    dEk = interp.de_k(xPhys)
    eG = interp.e_g(xPhys)

    Zt = Z.copy()
    Zt[:, DOUBLED_COLS] *= 2.0

    term1 = np.empty((n_eig, m))
    term2 = np.empty((n_eig, m))
    rhs = np.empty((factor.n, n_eig))
    for i in range(n_eig):
        phi = sol.phi[:, i]
        P = mode_pair_products(phi, indices)
        term1[i] = dEg * np.sum(Zt * P, axis=1)
        term2[i] = dEk * elem_quadratic_form(phi, K0, grid.cMat)
        rhs[:, i] = adjoint_loads(P, eG, dZdu, grid)[grid.free]

    W = factor.solve(rhs)
    Ue = U[grid.cMat]
    mu = sol.mu_raw if sol.mu_raw is not None else sol.mu
    dmu = np.zeros((n_eig, m))
    for i in range(n_eig):
        w_full = np.zeros(grid.nDof)
        w_full[grid.free] = W[:, i]
        term3 = dEk * np.einsum("ij,ij->i", w_full[grid.cMat] @ K0, Ue)
        total = -(term1[i] + mu[i] * term2[i] - term3)
        dmu[i, grid.act] = total[grid.act]
    return dmu


def ks_value(vals: np.ndarray, rho: float) -> float:
    """Smooth KS upper bound of the maximum, overflow safe in shifted form."""
    vals = np.asarray(vals, dtype=float)
    if vals.size == 0:
        raise ValueError("KS aggregation needs at least one value")
    if rho <= 0:
        raise ValueError("KS exponent must be positive")
    vmax = float(vals.max())
    return vmax + float(np.log(np.sum(np.exp(rho * (vals - vmax))))) / rho


def ks_grad(vals: np.ndarray, grads: np.ndarray, rho: float) -> np.ndarray:
    """Gradient of the KS aggregate: convex softmax combination of the member gradients."""
    vals = np.asarray(vals, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if grads.shape[0] != vals.size:
        raise ValueError("one gradient row per aggregated value is required")
    w = np.exp(rho * (vals - vals.max()))
    w /= w.sum()
    return w @ grads


def chain_to_design(dfdx_phys: np.ndarray, dprj: np.ndarray, filt) -> np.ndarray:
    """Chain a gradient from the physical field back to the design variables."""
    return filt.adjoint(dfdx_phys * dprj)

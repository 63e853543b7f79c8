"""Design-variable pipeline: density filter, threshold projection, continuation.

The raw design variables x are smoothed by a hat-kernel neighborhood filter
into xTilde and optionally sharpened by a relaxed Heaviside projection into
the physical field xPhys used by the analysis. Passive solid and void
elements are overwritten after the pipeline, so they stay at 1 and 0 no
matter what the filter produces.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

log = logging.getLogger(__name__)

__all__ = [
    "DensityFilter",
    "project",
    "project_derivs",
    "volume_preserving_eta",
    "ContinuationSchedule",
    "DesignFields",
    "build_fields",
]


class DensityFilter:
    """Linear density filter with hat weights, built as an explicit sparse operator.

    Weights are h(e,i) = max(0, rmin - dist(i, e)) with centroid distances in
    element units. Under Neumann boundary conditions the weighted average is
    normalized by the in-domain weight sum, so uniform fields pass through
    unchanged. Under Dirichlet conditions the cells outside the domain count
    as zero density and the normalizer is the full-stencil kernel sum, which
    pulls boundary densities toward zero.
    """

    def __init__(self, nelx: int, nely: int, rmin: float, bc: str = "N"):
        if rmin <= 0:
            raise ValueError("filter radius must be positive")
        if bc not in ("N", "D"):
            raise ValueError("filter boundary condition must be 'N' or 'D'")
        self.nelx = nelx
        self.nely = nely
        self.rmin = float(rmin)
        self.bc = bc

        m = nelx * nely
        elem_ids = np.arange(m, dtype=np.int64).reshape((nely, nelx), order="F")
        reach = int(np.ceil(rmin)) - 1
        rows, cols, vals = [], [], []
        kernel_sum = 0.0
        for dr in range(-reach, reach + 1):
            for dc in range(-reach, reach + 1):
                w = rmin - np.hypot(dr, dc)
                if w <= 0:
                    continue
                kernel_sum += w
                r0, r1 = max(0, -dr), min(nely, nely - dr)
                c0, c1 = max(0, -dc), min(nelx, nelx - dc)
                if r0 >= r1 or c0 >= c1:
                    continue
                rows.append(elem_ids[r0:r1, c0:c1].ravel())
                cols.append(elem_ids[r0 + dr : r1 + dr, c0 + dc : c1 + dc].ravel())
                vals.append(np.full((r1 - r0) * (c1 - c0), w))
        self._W = sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(m, m),
        )
        if bc == "N":
            self._norm = np.asarray(self._W @ np.ones(m))
        else:
            self._norm = np.full(m, kernel_sum)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (self._W @ x) / self._norm

    def adjoint(self, s: np.ndarray) -> np.ndarray:
        # The kernel matrix is symmetric, so the transpose operator is the
        # same kernel applied to the normalization-weighted field.
        return self._W @ (s / self._norm)


def project(xTilde: np.ndarray, eta: float, beta: float) -> np.ndarray:
    """Relaxed Heaviside projection with threshold eta and sharpness beta.

    Maps 0 to 0 and 1 to 1 for any parameters; beta = 0 degenerates to the
    identity.
    """
    if beta == 0.0:
        return np.asarray(xTilde, dtype=float).copy()
    num = np.tanh(beta * eta) + np.tanh(beta * (xTilde - eta))
    return num / (np.tanh(beta * eta) + np.tanh(beta * (1.0 - eta)))


def project_derivs(
    xTilde: np.ndarray, eta: float, beta: float
) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of the projection with respect to xTilde and to eta."""
    xTilde = np.asarray(xTilde, dtype=float)
    if beta == 0.0:
        return np.ones_like(xTilde), np.zeros_like(xTilde)
    den = np.tanh(beta * eta) + np.tanh(beta * (1.0 - eta))
    th = np.tanh(beta * (xTilde - eta))
    dxt = beta * (1.0 - th**2) / den
    num = np.tanh(beta * eta) + th
    dnum = beta * (1.0 - np.tanh(beta * eta) ** 2) - beta * (1.0 - th**2)
    dden = beta * (1.0 - np.tanh(beta * eta) ** 2) - beta * (
        1.0 - np.tanh(beta * (1.0 - eta)) ** 2
    )
    deta = (dnum * den - num * dden) / den**2
    return dxt, deta


def volume_preserving_eta(
    xTilde: np.ndarray, beta: float, target_mean: float, tol: float = 1e-10
) -> float:
    """Threshold eta such that the projected field keeps the requested mean.

    The projected mean is monotone non-increasing in eta, so a bisection on
    [0, 1] converges unconditionally. If the target falls outside the
    attainable range the nearest endpoint is returned and a warning logged.
    For beta close to zero every eta works and 0.5 is returned by convention.
    """
    if not 0.0 <= target_mean <= 1.0:
        raise ValueError("target mean must lie in [0, 1]")
    if beta <= 1e-9:
        return 0.5
    lo, hi = 0.0, 1.0
    f_lo = float(np.mean(project(xTilde, lo, beta))) - target_mean
    f_hi = float(np.mean(project(xTilde, hi, beta))) - target_mean
    if f_lo <= 0.0:
        if abs(f_lo) > tol:
            log.warning("projection target mean %.6g unreachable, clamping eta to 0", target_mean)
        return 0.0
    if f_hi >= 0.0:
        if abs(f_hi) > tol:
            log.warning("projection target mean %.6g unreachable, clamping eta to 1", target_mean)
        return 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = float(np.mean(project(xTilde, mid, beta))) - target_mean
        if abs(f_mid) <= tol:
            return mid
        if f_mid > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ContinuationSchedule:
    """Stepwise parameter ramp: from loop istart on, add deltaPar every isteps loops, capped at maxPar."""

    istart: int
    maxPar: float
    isteps: int
    deltaPar: float

    def apply(self, value: float, loop: int) -> tuple[float, bool]:
        if loop >= self.istart and (loop - self.istart) % self.isteps == 0:
            new = min(self.maxPar, value + self.deltaPar)
            return new, new != value
        return value, False


@dataclass
class DesignFields:
    """The three density fields of one iteration plus projection bookkeeping."""

    x: np.ndarray
    xTilde: np.ndarray
    xPhys: np.ndarray
    dprj: np.ndarray  # d xPhys / d xTilde
    eta: float


def build_fields(x, filt: DensityFilter, grid, ft: int, eta: float, beta: float) -> DesignFields:
    """Run the x -> xTilde -> xPhys pipeline for the given filtering mode.

    ft = 1 filters only, ft = 2 adds a fixed-threshold projection, ft = 3
    recomputes the threshold each call so the projection preserves the mean
    of the filtered field over the active set.
    """
    if ft not in (1, 2, 3):
        raise ValueError("ft must be 1, 2 or 3")
    xTilde = filt.apply(x)
    if ft == 1:
        xPhys = xTilde.copy()
        dprj = np.ones_like(xTilde)
        eta_used = eta
    else:
        if ft == 3:
            act = grid.act
            target = float(np.mean(xTilde[act]))
            if 0.0 < target < 1.0:
                eta_used = volume_preserving_eta(xTilde[act], beta, target)
            else:
                eta_used = eta  # uniform 0/1 field projects to itself
        else:
            eta_used = eta
        xPhys = project(xTilde, eta_used, beta)
        dprj, _ = project_derivs(xTilde, eta_used, beta)
    xPhys[grid.pasS] = 1.0
    xPhys[grid.pasV] = 0.0
    return DesignFields(x=x, xTilde=xTilde, xPhys=xPhys, dprj=dprj, eta=eta_used)

"""Linear solves through a reusable factorization and the buckling eigensolve.

The stiffness matrix restricted to the free dofs is factorized once per
re-design step. The same factor serves the state solve, the multi-rhs
adjoint solve and every inner iteration of the eigensolver, which works on
the operator v -> K^{-1} G v. That operator is self-adjoint in the K inner
product, so a Lanczos recurrence with K-orthogonal basis vectors applies;
its smallest algebraic Ritz values d give the load factor reciprocals
mu = -d, with buckling load factors lambda = 1/mu.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy import sparse
from scipy.sparse.linalg import splu

log = logging.getLogger(__name__)

__all__ = [
    "NotPositiveDefiniteError",
    "EigenSolveError",
    "FactorizedOperator",
    "BucklingSolution",
    "solve_state",
    "solve_adjoint",
    "buckling_eigs",
    "dense_buckling_eigs",
]

# Number of extra eigenpairs solved beyond the requested count, discarded
# afterwards to keep full accuracy on the ones that are used.
EXTRA_EIGS = 4

DENSE_CUTOFF = 2000


class NotPositiveDefiniteError(RuntimeError):
    def __init__(self, pivot: int):
        super().__init__(f"matrix is not positive definite (pivot {pivot})")
        self.pivot = pivot


class EigenSolveError(RuntimeError):
    def __init__(self, message: str, residuals: np.ndarray):
        super().__init__(message)
        self.residuals = residuals


class FactorizedOperator:
    """Sparse symmetric positive definite matrix with a stored LU factor.

    The handle is immutable after construction and supports repeated solves
    with single or blocked right-hand sides.
    """

    def __init__(self, K_ff: sparse.spmatrix):
        self.K = K_ff.tocsc()
        self.n = self.K.shape[0]
        # Symmetric mode with diagonal pivoting keeps the permutation
        # symmetric, so the U diagonal carries the inertia and a
        # non-positive pivot flags an indefinite matrix.
        self._lu = splu(
            self.K,
            diag_pivot_thresh=0.0,
            permc_spec="MMD_AT_PLUS_A",
            options=dict(SymmetricMode=True),
        )
        pivots = self._lu.U.diagonal()
        bad = np.where(pivots <= 0.0)[0]
        if bad.size:
            raise NotPositiveDefiniteError(int(bad[0]))

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError(f"right-hand side length {b.shape[0]} != {self.n}")
        return self._lu.solve(b)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.K @ v


def factorize(K_ff: sparse.spmatrix) -> FactorizedOperator:
    return FactorizedOperator(K_ff)


def solve_state(factor: FactorizedOperator, F_free: np.ndarray) -> np.ndarray:
    return factor.solve(F_free)


def solve_adjoint(factor: FactorizedOperator, rhs_block: np.ndarray) -> np.ndarray:
    return factor.solve(rhs_block)


@dataclass
class BucklingSolution:
    """Eigenpairs of (G + mu K) phi = 0, most critical first.

    ``mu`` holds the load factor reciprocals sorted descending with
    non-positive entries replaced by zero; ``lam`` their reciprocals (inf
    where mu is zero). ``phi`` holds K-normalized eigenvectors on the full
    dof set, zero at fixed dofs, one column per mode. ``n_positive`` counts
    the modes meaningful under a fixed load direction.
    """

    mu: np.ndarray
    lam: np.ndarray
    phi: np.ndarray
    residuals: np.ndarray
    n_positive: int
    mu_raw: np.ndarray | None = None
    solver: str = "lanczos"
    iterations: int = 0

    @property
    def n_eig(self) -> int:
        return self.mu.size


def _canonical_sign(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def _package_solution(
    theta: np.ndarray,
    Y: np.ndarray,
    n_eig: int,
    factor: FactorizedOperator,
    G_ff: sparse.spmatrix,
    free: np.ndarray | None,
    n_dof: int | None,
    solver: str,
    iterations: int,
) -> BucklingSolution:
    # theta ascending; mu = -theta is descending automatically.
    order = np.argsort(theta)[:n_eig]
    theta = theta[order]
    Y = Y[:, order]
    knorm = np.sqrt(np.einsum("ij,ij->j", Y, factor.matvec(Y)))
    knorm[knorm == 0.0] = 1.0
    Y = _canonical_sign(Y / knorm)
    mu_raw = -theta
    res = np.empty(n_eig)
    for i in range(n_eig):
        gy = G_ff @ Y[:, i]
        ky = factor.matvec(Y[:, i])
        res[i] = np.linalg.norm(gy + mu_raw[i] * ky) / max(np.linalg.norm(ky), 1e-300)
    mu = np.where(mu_raw > 0.0, mu_raw, 0.0)
    n_pos = int(np.count_nonzero(mu > 0.0))
    if n_pos < n_eig:
        log.info("only %d of %d buckling factors are positive", n_pos, n_eig)
    with np.errstate(divide="ignore"):
        lam = np.where(mu > 0.0, 1.0 / np.where(mu > 0.0, mu, 1.0), np.inf)
    if free is not None and n_dof is not None:
        phi = np.zeros((n_dof, n_eig))
        phi[free, :] = Y
    else:
        phi = Y
    return BucklingSolution(
        mu=mu, lam=lam, phi=phi, residuals=res,
        n_positive=n_pos, mu_raw=mu_raw, solver=solver, iterations=iterations,
    )


def dense_buckling_eigs(
    factor: FactorizedOperator,
    G_ff: sparse.spmatrix,
    n_eig: int,
    free: np.ndarray | None = None,
    n_dof: int | None = None,
) -> BucklingSolution:
    """Direct dense solve of the generalized pencil, for small systems and as oracle."""
    Gd = np.asarray(G_ff.todense()) if sparse.issparse(G_ff) else np.asarray(G_ff)
    Kd = np.asarray(factor.K.todense())
    theta, vecs = sla.eigh(Gd, Kd)
    k = min(n_eig, theta.size)
    return _package_solution(
        theta[:k], vecs[:, :k], k, factor, G_ff, free, n_dof, "dense", 0
    )


def buckling_eigs(
    factor: FactorizedOperator,
    G_ff: sparse.spmatrix,
    n_eig: int,
    free: np.ndarray | None = None,
    n_dof: int | None = None,
    tol: float = 1e-10,
    max_iter: int = 600,
    seed: int = 0,
    method: str = "auto",
) -> BucklingSolution:
    """Most critical n_eig buckling eigenpairs for the current K factor and G.

    Solves n_eig + 4 smallest algebraic eigenvalues of v -> K^{-1} G v and
    discards the buffer. ``method`` is "lanczos", "dense" or "auto" (dense
    below a size cutoff). Raises ``EigenSolveError`` when the Lanczos
    iteration does not reach the residual tolerance within ``max_iter``
    steps.
    """
    if n_eig < 1:
        raise ValueError("n_eig must be at least 1")
    n = factor.n
    want = min(n_eig + EXTRA_EIGS, n)
    if method == "dense" or (method == "auto" and n < DENSE_CUTOFF):
        return dense_buckling_eigs(factor, G_ff, min(n_eig, n), free, n_dof)
    if method not in ("auto", "lanczos"):
        raise ValueError(f"unknown eigensolver method '{method}'")
    theta, Y, iters = _lanczos_smallest(factor, G_ff, want, tol, max_iter, seed)
    k = min(n_eig, theta.size)
    return _package_solution(theta, Y, k, factor, G_ff, free, n_dof, "lanczos", iters)


def _lanczos_smallest(
    factor: FactorizedOperator,
    G_ff: sparse.spmatrix,
    k_want: int,
    tol: float,
    max_iter: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Thick-restart Lanczos with full reorthogonalization in the K inner product.

    Returns the k_want smallest Ritz values with their Ritz vectors
    (K-orthonormal columns) and the number of operator applications.
    """
    n = factor.n
    rng = np.random.default_rng(seed)
    max_basis = int(min(n, max(3 * k_want + 40, 100)))
    keep = min(2 * k_want, max_basis - 2)

    V = np.zeros((n, max_basis + 1))
    T = np.zeros((max_basis + 1, max_basis + 1))

    v = rng.standard_normal(n)
    v /= np.sqrt(v @ factor.matvec(v))
    V[:, 0] = v
    j = 0  # current basis size - 1 == index of the newest vector
    nconv_target = k_want
    total_ops = 0
    beta = 0.0

    while total_ops < max_iter:
        # One Lanczos step from the newest vector.
        w = factor.solve(G_ff @ V[:, j])
        total_ops += 1
        # Twice-iterated Gram-Schmidt against the whole basis (K inner product).
        h = np.zeros(j + 1)
        for _ in range(2):
            c = V[:, : j + 1].T @ factor.matvec(w)
            w -= V[:, : j + 1] @ c
            h += c
        T[: j + 1, j] = h
        T[j, : j + 1] = h
        kw = factor.matvec(w)
        beta = float(np.sqrt(max(w @ kw, 0.0)))
        if beta > 1e-14:
            V[:, j + 1] = w / beta
            T[j + 1, j] = beta
            T[j, j + 1] = beta
        else:
            # Invariant subspace: continue with a fresh random direction.
            w = rng.standard_normal(n)
            for _ in range(2):
                w -= V[:, : j + 1] @ (V[:, : j + 1].T @ factor.matvec(w))
            nrm = np.sqrt(max(w @ factor.matvec(w), 0.0))
            if nrm < 1e-14:
                j += 1
                break
            V[:, j + 1] = w / nrm
            T[j + 1, j] = 0.0
            T[j, j + 1] = 0.0
        j += 1

        basis = j  # number of fully processed basis vectors
        if basis >= k_want + 2 or basis >= n:
            theta, S = sla.eigh(T[:basis, :basis])
            res_est = np.abs(beta * S[-1, : min(nconv_target, basis)])
            bound = tol * np.maximum(1.0, np.abs(theta[: min(nconv_target, basis)]))
            if np.all(res_est <= bound) or basis >= n:
                Y = V[:, :basis] @ S[:, :k_want]
                return theta[:k_want], Y, total_ops

        if j >= max_basis:
            # Thick restart: keep the best Ritz vectors plus the residual link.
            theta, S = sla.eigh(T[:j, :j])
            Y = V[:, :j] @ S[:, :keep]
            b = beta * S[-1, :keep]
            V[:, :keep] = Y
            V[:, keep] = V[:, j]
            T.fill(0.0)
            T[:keep, :keep] = np.diag(theta[:keep])
            T[keep, :keep] = b
            T[:keep, keep] = b
            j = keep

    basis = j
    theta, S = sla.eigh(T[:basis, :basis])
    res_est = np.abs(beta * S[-1, : min(k_want, basis)])
    raise EigenSolveError(
        f"Lanczos did not converge in {max_iter} operator applications "
        f"(worst residual estimate {res_est.max():.3e})",
        residuals=res_est,
    )

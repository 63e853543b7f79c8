"""Problem assembly and the sequential-approximation design update.

Four problem forms are supported, written as a letter string whose first
character is the objective and the rest are constraints:

* ``BCV``: maximize the fundamental buckling load factor (minimize the KS
  aggregate of the load factor reciprocals) under compliance and volume
  bounds,
* ``VCB``: minimize volume under compliance and buckling bounds,
* ``CV``:  minimize compliance under a volume bound,
* ``VC``:  minimize volume under a compliance bound.

Multiple constraints are KS-aggregated into one, and each re-design step
solves a convex separable approximation with per-variable moving asymptotes.
The primal update has a closed form in the single dual variable kappa, whose
value follows from a bracketed scalar root solve with two fallback cases
when the constraint is inactive or unreachable within the local expansion.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import design as dsn
from . import sensitivity as sens
from .assembly import GaussKernels, Interpolation, assemble_G, assemble_K, compute_Z, unit_displacement_z
from .design import ContinuationSchedule, DensityFilter
from .grid import GridModel, build_indices, element_stiffness
from .solvers import FactorizedOperator, buckling_eigs, solve_state

log = logging.getLogger(__name__)

__all__ = [
    "ProblemSpec",
    "OcState",
    "Responses",
    "IterationRecord",
    "build_problem",
    "oc_update",
    "OptimizationDriver",
]

VALID_PROBLEMS = ("BCV", "VCB", "CV", "VC")

KAPPA_MAX = 1e6


@dataclass(frozen=True)
class ProblemSpec:
    """Objective/constraint selection with the constraint bounds.

    ``cmax`` bounds the compliance as a multiple of the first-loop value,
    ``vfmax`` bounds the volume fraction and ``lmin`` is the smallest
    admissible buckling load factor.
    """

    letters: str
    cmax: float | None = None
    vfmax: float | None = None
    lmin: float | None = None

    def __post_init__(self):
        if self.letters not in VALID_PROBLEMS:
            raise ValueError(
                f"problem '{self.letters}' not supported; pick one of {VALID_PROBLEMS}"
            )
        need = {"C": "cmax", "V": "vfmax", "B": "lmin"}
        for letter in self.letters[1:]:
            if getattr(self, need[letter]) is None:
                raise ValueError(f"constraint '{letter}' requires {need[letter]}")

    @property
    def objective(self) -> str:
        return self.letters[0]

    @property
    def constraints(self) -> str:
        return self.letters[1:]

    @property
    def has_buckling(self) -> bool:
        return "B" in self.letters


@dataclass
class Responses:
    """All response values and physical-density gradients of one iteration."""

    f: float
    df: np.ndarray
    c: float
    dc: np.ndarray
    c_ref: float
    rho: float
    mu: np.ndarray | None = None
    dmu: np.ndarray | None = None


def build_problem(
    spec: ProblemSpec, r: Responses
) -> tuple[float, np.ndarray, float, np.ndarray, dict]:
    """Objective, aggregated constraint and their physical-density gradients.

    The compliance objective is normalized by its first-loop value so the
    dual variable stays well scaled across mesh sizes. Constraint functions
    are normalized as value/bound - 1; the buckling constraint bounds the KS
    aggregate of the reciprocals from above, which keeps the smallest load
    factor above ``lmin``.
    """
    parts: dict[str, float] = {}

    if spec.objective == "B":
        mu_pos, dmu_pos = _positive_modes(r)
        g0 = sens.ks_value(mu_pos, r.rho)
        dg0 = sens.ks_grad(mu_pos, dmu_pos, r.rho)
        parts["JKS"] = g0
    elif spec.objective == "C":
        g0 = r.c / r.c_ref
        dg0 = r.dc / r.c_ref
    else:
        g0 = r.f
        dg0 = r.df

    vals = []
    grads = []
    for letter in spec.constraints:
        if letter == "V":
            g = r.f / spec.vfmax - 1.0
            dg = r.df / spec.vfmax
            parts["gV"] = g
        elif letter == "C":
            bound = spec.cmax * r.c_ref
            g = r.c / bound - 1.0
            dg = r.dc / bound
            parts["gC"] = g
        else:
            mu_pos, dmu_pos = _positive_modes(r)
            jks = sens.ks_value(mu_pos, r.rho)
            g = spec.lmin * jks - 1.0
            dg = spec.lmin * sens.ks_grad(mu_pos, dmu_pos, r.rho)
            parts["JKS"] = jks
            parts["gL"] = g
        vals.append(g)
        grads.append(dg)

    if len(vals) == 1:
        g1, dg1 = vals[0], grads[0]
    else:
        varr = np.array(vals)
        g1 = sens.ks_value(varr, r.rho)
        dg1 = sens.ks_grad(varr, np.array(grads), r.rho)
    return g0, dg0, g1, dg1, parts


def _positive_modes(r: Responses) -> tuple[np.ndarray, np.ndarray]:
    if r.mu is None or r.dmu is None:
        raise ValueError("buckling responses requested but not computed")
    mask = r.mu > 0.0
    if not mask.any():
        raise ValueError("no positive buckling factors available for aggregation")
    return r.mu[mask], r.dmu[mask]


@dataclass
class OcState:
    """Per-variable asymptotes and iterate history of the design update."""

    asymptotes: np.ndarray | None = None
    x_old: np.ndarray | None = None
    x_old1: np.ndarray | None = None
    restart: bool = False


def oc_update(
    loop: int,
    xT: np.ndarray,
    dg0: np.ndarray,
    g1: float,
    dg1: np.ndarray,
    oc_par: tuple[float, float, float],
    x_old: np.ndarray,
    x_old1: np.ndarray,
    asymptotes: np.ndarray | None,
    beta: float,
    restart: bool = False,
) -> tuple[np.ndarray, np.ndarray, float]:
    """One moving-asymptotes design update on the active variables.

    Returns the new point, the updated asymptotes and the dual variable. The
    asymptote window starts at +-0.5 (xU - xL)/(beta + 1) around the current
    point and afterwards tightens or relaxes depending on the sign of the
    oscillation indicator (xT - x_old)(x_old - x_old1). Adaptive bounds blend
    the asymptotes with the current point and are clipped against the hard
    move window. The dual variable solves the stationarity equation on
    [0, 1e6] by a bracketed root find; an inactive constraint gives kappa=0
    and an unreachable one saturates at the upper bound.
    """
    move, as_tighten, as_relax = oc_par
    for name, arr in (("dg0", dg0), ("dg1", dg1)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite entries in {name}")

    xU = np.minimum(xT + move, 1.0)
    xL = np.maximum(xT - move, 0.0)
    if loop < 2.5 or restart or asymptotes is None:
        half = 0.5 * (xU - xL) / (beta + 1.0)
        asymptotes = np.column_stack([xT - half, xT + half])
    else:
        osc = (xT - x_old) * (x_old - x_old1)
        gm = np.ones_like(xT)
        gm[osc > 0] = as_relax
        gm[osc < 0] = as_tighten
        asymptotes = xT[:, None] + gm[:, None] * np.column_stack(
            [-(x_old - asymptotes[:, 0]), asymptotes[:, 1] - x_old]
        )

    low, upp = asymptotes[:, 0], asymptotes[:, 1]
    xL = np.maximum(0.9 * low + 0.1 * xT, xL)
    xU = np.minimum(0.9 * upp + 0.1 * xT, xU)

    p0_0 = np.where(dg0 > 0.0, dg0, 0.0)
    q0_0 = np.where(dg0 < 0.0, dg0, 0.0)
    p1_0 = np.where(dg1 > 0.0, dg1, 0.0)
    q1_0 = np.where(dg1 < 0.0, dg1, 0.0)
    du2 = (upp - xT) ** 2
    dl2 = (xT - low) ** 2
    p0, q0 = p0_0 * du2, -q0_0 * dl2
    p1, q1 = p1_0 * du2, -q1_0 * dl2

    def primal(kappa: float) -> np.ndarray:
        sp = np.sqrt(p0 + kappa * p1)
        sq = np.sqrt(q0 + kappa * q1)
        den = sp + sq
        with np.errstate(invalid="ignore"):
            raw = np.where(den > 0.0, (sp * low + sq * upp) / np.where(den > 0.0, den, 1.0), xT)
        return np.minimum(xU, np.maximum(xL, raw))

    lin = float((upp - xT) @ p1_0 - (xT - low) @ q1_0)

    def psi(kappa: float) -> float:
        xk = primal(kappa)
        return (
            g1
            - lin
            + float(
                np.sum(
                    p1 / np.maximum(upp - xk, 1e-12)
                    + q1 / np.maximum(xk - low, 1e-12)
                )
            )
        )

    psi0 = psi(0.0)
    psi_up = psi(KAPPA_MAX)
    if psi0 * psi_up < 0.0:
        try:
            kappa = float(brentq(psi, 0.0, KAPPA_MAX, xtol=1e-10, maxiter=200))
        except RuntimeError as err:
            raise RuntimeError(
                f"dual root solve failed on [0, {KAPPA_MAX:g}]: "
                f"psi(0) = {psi0:.6e}, psi(max) = {psi_up:.6e}: {err}"
            ) from err
        x_new = primal(kappa)
    elif psi0 <= 0.0:
        # Constraint inactive within the local expansion.
        kappa = 0.0
        x_new = primal(kappa)
    else:
        # Constraint unreachable within the local expansion.
        kappa = KAPPA_MAX
        x_new = primal(kappa)
    return x_new, asymptotes, kappa


@dataclass
class IterationRecord:
    """One row of the convergence log."""

    loop: int
    f: float
    c: float
    lam: tuple[float, float, float, float]
    j_ks: float
    g1: float
    kappa: float
    change: float
    t_iter: float
    parts: dict = field(default_factory=dict)


class OptimizationDriver:
    """Carries the full re-design loop state and exposes one-step advancement.

    Construction precomputes everything that does not change between
    iterations: assembly indices, the element stiffness matrix, the Gauss
    kernels of the stress stiffness coefficients, the unit-displacement
    operator and the density filter.
    """

    def __init__(
        self,
        grid: GridModel,
        spec: ProblemSpec,
        *,
        rmin: float = 2.0,
        ft: int = 2,
        filter_bc: str = "N",
        eta: float = 0.5,
        beta: float = 2.0,
        penal_k: float = 3.0,
        penal_g: float = 3.0,
        rho: float = 160.0,
        n_eig: int = 12,
        oc_par: tuple[float, float, float] = (0.1, 0.7, 1.2),
        cnt_penal_k: ContinuationSchedule | None = None,
        cnt_penal_g: ContinuationSchedule | None = None,
        cnt_beta: ContinuationSchedule | None = None,
        cnt_rho: ContinuationSchedule | None = None,
        E0: float = 1.0,
        Emin: float = 1e-6,
        nu: float = 0.3,
        x0: np.ndarray | None = None,
        seed: int = 0,
        eig_method: str = "auto",
    ):
        if spec.has_buckling and n_eig < 1:
            raise ValueError("n_eig must be at least 1 when buckling is active")
        self.grid = grid
        self.spec = spec
        self.ft = ft
        self.eta = eta
        self.beta = beta
        self.penal_k = penal_k
        self.penal_g = penal_g
        self.rho = rho
        self.n_eig = n_eig
        self.oc_par = oc_par
        self.cnt_penal_k = cnt_penal_k
        self.cnt_penal_g = cnt_penal_g
        self.cnt_beta = cnt_beta
        self.cnt_rho = cnt_rho
        self.E0 = E0
        self.Emin = Emin
        self.nu = nu
        self.seed = seed
        self.eig_method = eig_method

        self.filter = DensityFilter(grid.nelx, grid.nely, rmin, filter_bc)
        self.indices = build_indices(grid.cMat)
        a, b = grid.elem_size
        self.K0 = element_stiffness(a / 2.0, b / 2.0, nu)
        self.kernels = GaussKernels(grid, nu)
        self.dZdu = unit_displacement_z(self.kernels)

        self.x = self._initial_design(x0)
        self.oc = OcState()
        self.loop = 0
        self.c_ref: float | None = None
        self.factorizations = 0
        self.last_solution = None
        self.last_fields = None
        self.last_U = None

    def _initial_design(self, x0: np.ndarray | None) -> np.ndarray:
        grid = self.grid
        x = np.zeros(grid.m)
        if x0 is not None:
            x0 = np.asarray(x0, dtype=float)
            if x0.shape != (grid.m,):
                raise ValueError(f"initial design must have length {grid.m}")
            x[:] = np.clip(x0, 0.0, 1.0)
        elif self.spec.objective == "V":
            x[grid.act] = 1.0
        else:
            vf = self.spec.vfmax if self.spec.vfmax is not None else 0.5
            share = (vf * grid.m - grid.pasS.size) / max(grid.act.size, 1)
            x[grid.act] = np.clip(share, 0.0, 1.0)
        x[grid.pasS] = 1.0
        x[grid.pasV] = 0.0
        return x

    @property
    def interp(self) -> Interpolation:
        return Interpolation(E0=self.E0, Emin=self.Emin, pK=self.penal_k, pG=self.penal_g)

    def step(self) -> IterationRecord:
        """Advance the re-design loop by one iteration and return its record."""
        t0 = time.perf_counter()
        grid = self.grid
        self.loop += 1
        interp = self.interp

        fields = dsn.build_fields(self.x, self.filter, grid, self.ft, self.eta, self.beta)

        K = assemble_K(fields.xPhys, self.K0, self.indices, interp, grid.nDof)
        factor = FactorizedOperator(K[grid.free][:, grid.free])
        self.factorizations += 1
        U = np.zeros(grid.nDof)
        U[grid.free] = solve_state(factor, grid.F[grid.free])

        c, dc = sens.compliance_and_grad(U, fields.xPhys, grid, self.K0, interp)
        f, df = sens.volume_and_grad(fields.xPhys, grid)
        if self.c_ref is None:
            self.c_ref = c

        mu = dmu = None
        sol = None
        if self.spec.has_buckling:
            Z = compute_Z(U, grid, self.kernels)
            G = assemble_G(Z, fields.xPhys, self.indices, interp, grid.nDof)
            sol = buckling_eigs(
                factor,
                G[grid.free][:, grid.free],
                self.n_eig,
                free=grid.free,
                n_dof=grid.nDof,
                seed=self.seed,
                method=self.eig_method,
            )
            dmu = sens.mu_sensitivities(
                sol, U, fields.xPhys, Z, self.dZdu, factor,
                grid, self.indices, self.K0, interp,
            )
            mu = sol.mu

        r = Responses(f=f, df=df, c=c, dc=dc, c_ref=self.c_ref, rho=self.rho, mu=mu, dmu=dmu)
        g0, dg0, g1, dg1, parts = build_problem(self.spec, r)

        dg0x = sens.chain_to_design(dg0, fields.dprj, self.filter)
        dg1x = sens.chain_to_design(dg1, fields.dprj, self.filter)

        act = grid.act
        xT = self.x[act]
        if self.oc.x_old is None:
            self.oc.x_old = xT.copy()
            self.oc.x_old1 = xT.copy()
        x_new, asym, kappa = oc_update(
            self.loop,
            xT,
            dg0x[act],
            g1,
            dg1x[act],
            self.oc_par,
            self.oc.x_old,
            self.oc.x_old1,
            self.oc.asymptotes,
            self.beta,
            self.oc.restart,
        )
        change = float(np.max(np.abs(x_new - xT))) if xT.size else 0.0
        self.oc.x_old1 = self.oc.x_old
        self.oc.x_old = xT.copy()
        self.oc.asymptotes = asym
        self.oc.restart = False
        self.x[act] = x_new

        changed = []
        for attr, schedule in (
            ("penal_k", self.cnt_penal_k),
            ("penal_g", self.cnt_penal_g),
            ("beta", self.cnt_beta),
            ("rho", self.cnt_rho),
        ):
            if schedule is None:
                continue
            new, did = schedule.apply(getattr(self, attr), self.loop)
            setattr(self, attr, new)
            changed.append(did)
        if any(changed):
            self.oc.restart = True

        lam4 = [np.nan] * 4
        j_ks = np.nan
        if sol is not None:
            for i in range(min(4, sol.lam.size)):
                lam4[i] = float(sol.lam[i])
            j_ks = parts.get("JKS", np.nan)
        self.last_solution = sol
        self.last_fields = fields
        self.last_U = U

        return IterationRecord(
            loop=self.loop,
            f=f,
            c=c,
            lam=tuple(lam4),
            j_ks=float(j_ks),
            g1=float(g1),
            kappa=float(kappa),
            change=change,
            t_iter=time.perf_counter() - t0,
            parts=parts,
        )

    def run(
        self,
        maxit: int,
        callback=None,
        tol_change: float = 1e-6,
    ) -> list[IterationRecord]:
        """Run up to maxit iterations, stopping early once the design settles."""
        records = []
        for _ in range(maxit):
            rec = self.step()
            records.append(rec)
            if callback is not None:
                callback(rec, self)
            if rec.change < tol_change and self.loop > 1:
                log.info("design change below %.1e at loop %d, stopping", tol_change, self.loop)
                break
        return records

"""Timing study of the stress stiffness matrix construction phases.

For each grid size the three phases of building G are timed separately:
evaluating the Gauss-point stresses, combining them into the compact
coefficient array, and scattering into the global sparse matrix. The
stiffness matrix assembly is timed for comparison. Ratios:
r_t1 = (t_sigma + t_Ge) / t_assemble and r_t2 = total G time / K time.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .assembly import GaussKernels, Interpolation, assemble_G, assemble_K
from .grid import GridModel, build_indices, element_stiffness

__all__ = ["BenchmarkRow", "benchmark_sizes", "BENCH_COLUMNS"]

BENCH_COLUMNS = ("n", "t_sigma", "t_Ge", "t_assemble", "t_K", "r_t1", "r_t2")


@dataclass
class BenchmarkRow:
    n: int
    t_sigma: float
    t_Ge: float
    t_assemble: float
    t_K: float

    @property
    def r_t1(self) -> float:
        return (self.t_sigma + self.t_Ge) / self.t_assemble

    @property
    def r_t2(self) -> float:
        return (self.t_sigma + self.t_Ge + self.t_assemble) / self.t_K

    def as_tuple(self) -> tuple:
        return (self.n, self.t_sigma, self.t_Ge, self.t_assemble, self.t_K,
                self.r_t1, self.r_t2)


def _time_phases(grid: GridModel, repeats: int) -> BenchmarkRow:
    rng = np.random.default_rng(1234)
    U = rng.standard_normal(grid.nDof)
    xPhys = rng.uniform(0.2, 1.0, grid.m)
    interp = Interpolation()
    indices = build_indices(grid.cMat)
    a, b = grid.elem_size
    K0 = element_stiffness(a / 2.0, b / 2.0, 0.3)
    kernels = GaussKernels(grid, 0.3)

    t_sigma = t_ge = t_asm = t_k = np.inf
    for _ in range(repeats):
        Ue = U[grid.cMat]

        t0 = time.perf_counter()
        stresses = [Ue @ CB.T for CB in kernels.CB]
        t_sigma = min(t_sigma, time.perf_counter() - t0)

        t0 = time.perf_counter()
        Z = np.zeros((grid.m, 10))
        for S, B, wdet in zip(stresses, kernels.B, kernels.wdet):
            Z += wdet * (S @ B)
        t_ge = min(t_ge, time.perf_counter() - t0)

        t0 = time.perf_counter()
        assemble_G(Z, xPhys, indices, interp, grid.nDof)
        t_asm = min(t_asm, time.perf_counter() - t0)

        t0 = time.perf_counter()
        assemble_K(xPhys, K0, indices, interp, grid.nDof)
        t_k = min(t_k, time.perf_counter() - t0)

    return BenchmarkRow(n=grid.m, t_sigma=t_sigma, t_Ge=t_ge, t_assemble=t_asm, t_K=t_k)


def benchmark_sizes(sizes, repeats: int = 3) -> list[BenchmarkRow]:
    """Run the phase timings on near-square grids of the requested element counts."""
    rows = []
    for n in sizes:
        side = max(2, int(round(np.sqrt(float(n)))))
        grid = GridModel.build(side, side, Lx=1.0)
        rows.append(_time_phases(grid, repeats))
    return rows

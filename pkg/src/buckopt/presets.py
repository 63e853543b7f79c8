"""Built-in example problems: the compressed column and the wall reinforcement.

Both presets reproduce their index arithmetic proportionally at any grid
size that keeps the alignment constraints, so desk-scale runs exercise the
same geometry as the full-size ones.
"""
from __future__ import annotations

import numpy as np

from .grid import GridModel

__all__ = ["preset_compressed_column", "preset_wall"]


def preset_compressed_column(nelx: int, nely: int, Lx: float = 2.0) -> GridModel:
    """Cantilever strut loaded in axial compression over a top band of the free edge.

    The left edge is clamped. A total load of magnitude 1e-3 pointing
    against the x axis is spread over nely/15 elements at the top of the
    right edge, with half weights on the two border nodes so the nodal
    forces sum exactly to the total. A block of elements around the load
    patch is kept solid; scaled from 10 x 20 elements on the 480 x 240 grid.
    """
    if nely % 15 != 0:
        raise ValueError("compressed column preset needs nely divisible by 15")
    q = 1e-3
    band = nely // 15  # elements under the load
    node_numbers = np.arange((nelx + 1) * (nely + 1), dtype=np.int64).reshape(
        (nely + 1, nelx + 1), order="F"
    )

    fixed_nodes = node_numbers[:, 0]
    fixed = np.concatenate([2 * fixed_nodes, 2 * fixed_nodes + 1])

    F = np.zeros(2 * (nelx + 1) * (nely + 1))
    load_nodes = node_numbers[: band + 1, -1]
    F[2 * load_nodes] = -q / band
    F[2 * load_nodes[0]] = -q / (2 * band)
    F[2 * load_nodes[-1]] = -q / (2 * band)

    elem_numbers = np.arange(nelx * nely, dtype=np.int64).reshape((nely, nelx), order="F")
    w = max(1, round(nelx / 48))
    h = max(1, round(nely / 12))
    pasS = elem_numbers[:h, nelx - w :].ravel()

    return GridModel.build(nelx, nely, Lx=Lx, fixed=fixed, F=F, pasS=pasS, pasV=None)


def preset_wall(n: int, Lx: float = 1.0) -> GridModel:
    """Square wall with a doorway opening, solid frames and four support pads.

    The outer boundary and the opening are framed by solid strips of
    thickness n/40 elements. The base is clamped at four pads sitting under
    the outer frame columns and under the two opening-side frames. A total
    load of magnitude 1e-2 pointing in +x is spread uniformly over the left
    edge with half weights at the two corner nodes.
    """
    if n % 40 != 0:
        raise ValueError("wall preset needs the element count divisible by 40")
    t = n // 40
    q = 1e-2
    node_numbers = np.arange((n + 1) * (n + 1), dtype=np.int64).reshape(
        (n + 1, n + 1), order="F"
    )
    elem_numbers = np.arange(n * n, dtype=np.int64).reshape((n, n), order="F")

    c2, c4 = 2 * n // 5, 4 * n // 5
    pad_cols = np.concatenate(
        [
            np.arange(0, t + 1),
            np.arange(c2 - t - 1, c2),
            np.arange(c4, c4 + t + 1),
            np.arange(n - t, n + 1),
        ]
    )
    pad_nodes = node_numbers[-1, pad_cols]
    fixed = np.concatenate([2 * pad_nodes, 2 * pad_nodes + 1])

    F = np.zeros(2 * (n + 1) * (n + 1))
    Ly = Lx
    edge_nodes = node_numbers[:, 0]
    mod_f = q / Ly / (edge_nodes.size - 1)
    F[2 * edge_nodes] = mod_f
    F[2 * edge_nodes[0]] = mod_f / 2.0
    F[2 * edge_nodes[-1]] = mod_f / 2.0

    a1 = elem_numbers[:t, :]
    a2 = elem_numbers[:, np.r_[0:t, n - t : n]]
    a3 = elem_numbers[c2 - 1 :, c2 - 1 : c4]
    a4 = elem_numbers[c2 - t - 1 :, c2 - t - 1 : c2 - 1]
    a5 = elem_numbers[c2 - t - 1 :, c4 : c4 + t]
    a6 = elem_numbers[c2 - t - 1 : c2 - 1, c2 - 1 : c4]
    pasS = np.unique(np.concatenate([a.ravel() for a in (a1, a2, a4, a5, a6)]))
    pasV = a3.ravel()

    return GridModel.build(n, n, Lx=Lx, fixed=fixed, F=F, pasS=pasS, pasV=pasV)

"""Run artifacts: convergence CSV, grayscale images, checkpoint files."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

__all__ = [
    "CSV_COLUMNS",
    "CsvLogger",
    "density_image",
    "save_pgm",
    "save_checkpoint",
    "load_checkpoint",
    "strain_energy_image",
    "principal_stress_image",
]

CSV_COLUMNS = (
    "loop",
    "f",
    "c",
    "lambda1",
    "lambda2",
    "lambda3",
    "lambda4",
    "JKS",
    "g1",
    "kappa",
    "change",
    "t_iter",
)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


class CsvLogger:
    """Writes one convergence row per iteration with a fixed column schema."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8", newline="\n")
        self._fh.write(",".join(CSV_COLUMNS) + "\n")

    def write(self, rec) -> None:
        row = [
            rec.loop,
            rec.f,
            rec.c,
            rec.lam[0],
            rec.lam[1],
            rec.lam[2],
            rec.lam[3],
            rec.j_ks,
            rec.g1,
            rec.kappa,
            rec.change,
            rec.t_iter,
        ]
        self._fh.write(",".join(_fmt(v) for v in row) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def density_image(xPhys: np.ndarray, nelx: int, nely: int) -> np.ndarray:
    """8-bit grayscale raster, one pixel per element, solid material black."""
    img = np.rint(255.0 * (1.0 - xPhys)).clip(0, 255).astype(np.uint8)
    return img.reshape((nely, nelx), order="F")


def save_pgm(path: Path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def strain_energy_image(
    phi: np.ndarray, xPhys: np.ndarray, grid, K0: np.ndarray, interp
) -> np.ndarray:
    """Mode shape rendered through the logarithm of the element strain energy density."""
    pe = phi[grid.cMat]
    energy = interp.e_k(xPhys) * np.einsum("ij,ij->i", pe @ K0, pe)
    loge = np.log10(np.maximum(energy, 1e-300))
    lo, hi = loge.min(), loge.max()
    span = hi - lo if hi > lo else 1.0
    img = np.rint(255.0 * (loge - lo) / span).clip(0, 255).astype(np.uint8)
    return img.reshape((grid.nely, grid.nelx), order="F")


def principal_stress_image(S: np.ndarray, xPhys: np.ndarray, grid, interp) -> np.ndarray:
    """Minimum principal stress map: compression dark, tension light."""
    sx, sy, txy = S[:, 0], S[:, 1], S[:, 2]
    s2 = interp.e_k(xPhys) * (
        0.5 * (sx + sy) - np.sqrt((0.5 * (sx - sy)) ** 2 + txy**2)
    )
    scale = np.abs(s2).max()
    if scale == 0.0:
        scale = 1.0
    img = np.rint(127.5 * (1.0 + s2 / scale)).clip(0, 255).astype(np.uint8)
    return img.reshape((grid.nely, grid.nelx), order="F")


CHECKPOINT_FORMAT = "buckopt-checkpoint-1"


def save_checkpoint(path: Path, grid, x: np.ndarray, loop: int, params: dict) -> None:
    """Self-describing JSON container with the design field at full precision."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "nelx": int(grid.nelx),
        "nely": int(grid.nely),
        "loop": int(loop),
        "params": {k: float(v) for k, v in params.items()},
        # json float serialization round-trips IEEE doubles exactly
        "x": [float(v) for v in x],
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_checkpoint(path: Path) -> dict:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a recognized checkpoint file: {path}")
    payload["x"] = np.asarray(payload["x"], dtype=float)
    return payload

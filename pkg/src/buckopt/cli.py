"""Batch command line driver: run, benchmark and render subcommands.

Configuration comes from an optional TOML file of flat key-value pairs plus
command line overrides. Continuation schedules are written as 4-value arrays
[istart, maxPar, isteps, deltaPar]. Exit codes: 0 on success, 2 for
configuration errors, 3 for solver failures.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, fields as dc_fields
from pathlib import Path

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import output as out
from .assembly import centroid_stress
from .benchmark import BENCH_COLUMNS, benchmark_sizes
from .design import ContinuationSchedule
from .grid import GridModel
from .optimizer import OptimizationDriver, ProblemSpec
from .presets import preset_compressed_column, preset_wall
from .solvers import EigenSolveError, NotPositiveDefiniteError

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


@dataclass
class RunConfig:
    """Public knobs of one optimization run."""

    preset: str = "column"
    nelx: int = 120
    nely: int = 60
    Lx: float = 2.0
    problem: str = "VC"
    cmax: float | None = 2.5
    vfmax: float | None = None
    lmin: float | None = None
    penal_k: float = 3.0
    penal_g: float = 3.0
    rmin: float = 4.0
    ft: int = 2
    ft_bc: str = "N"
    eta: float = 0.5
    beta: float = 2.0
    maxit: int = 100
    oc_move: float = 0.1
    oc_tighten: float = 0.7
    oc_relax: float = 1.2
    n_eig: int = 12
    p_agg: float = 160.0
    cnt_penal_k: tuple | None = None
    cnt_penal_g: tuple | None = None
    cnt_beta: tuple | None = None
    cnt_p_agg: tuple | None = None
    x0: str | None = None
    out_dir: str = "out"
    image_every: int = 50
    seed: int = 0
    eig_method: str = "auto"


def _schedule(raw) -> ContinuationSchedule | None:
    if raw is None:
        return None
    vals = list(raw)
    if len(vals) != 4:
        raise ValueError("a continuation schedule needs 4 values [istart,maxPar,isteps,deltaPar]")
    return ContinuationSchedule(
        istart=int(vals[0]), maxPar=float(vals[1]), isteps=int(vals[2]), deltaPar=float(vals[3])
    )


def load_config(path: str | None, overrides: dict) -> RunConfig:
    cfg = RunConfig()
    known = {f.name for f in dc_fields(RunConfig)}
    if path:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        for key, value in data.items():
            if key not in known:
                raise ValueError(f"unknown config key '{key}'")
            setattr(cfg, key, value)
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg


def build_grid(cfg: RunConfig) -> GridModel:
    if cfg.preset == "column":
        return preset_compressed_column(cfg.nelx, cfg.nely, cfg.Lx)
    if cfg.preset == "wall":
        if cfg.nelx != cfg.nely:
            raise ValueError("wall preset needs a square grid")
        return preset_wall(cfg.nelx, cfg.Lx)
    if cfg.preset == "none":
        raise ValueError("preset 'none' requires a programmatic GridModel")
    raise ValueError(f"unknown preset '{cfg.preset}'")


def make_driver(cfg: RunConfig, grid: GridModel | None = None) -> OptimizationDriver:
    spec = ProblemSpec(cfg.problem, cmax=cfg.cmax, vfmax=cfg.vfmax, lmin=cfg.lmin)
    if grid is None:
        grid = build_grid(cfg)
    x0 = None
    if cfg.x0:
        ck = out.load_checkpoint(Path(cfg.x0))
        if (ck["nelx"], ck["nely"]) != (grid.nelx, grid.nely):
            raise ValueError(
                f"checkpoint grid {ck['nelx']}x{ck['nely']} does not match "
                f"{grid.nelx}x{grid.nely}"
            )
        x0 = ck["x"]
    return OptimizationDriver(
        grid,
        spec,
        rmin=cfg.rmin,
        ft=cfg.ft,
        filter_bc=cfg.ft_bc,
        eta=cfg.eta,
        beta=cfg.beta,
        penal_k=cfg.penal_k,
        penal_g=cfg.penal_g,
        rho=cfg.p_agg,
        n_eig=cfg.n_eig,
        oc_par=(cfg.oc_move, cfg.oc_tighten, cfg.oc_relax),
        cnt_penal_k=_schedule(cfg.cnt_penal_k),
        cnt_penal_g=_schedule(cfg.cnt_penal_g),
        cnt_beta=_schedule(cfg.cnt_beta),
        cnt_rho=_schedule(cfg.cnt_p_agg),
        x0=x0,
        seed=cfg.seed,
        eig_method=cfg.eig_method,
    )


def run_command(cfg: RunConfig) -> int:
    out_dir = Path(os.environ.get("BUCKOPT_OUT", cfg.out_dir))
    out_dir.mkdir(parents=True, exist_ok=True)
    driver = make_driver(cfg)
    grid = driver.grid

    def write_image(tag: str, fields) -> None:
        img = out.density_image(fields.xPhys, grid.nelx, grid.nely)
        out.save_pgm(out_dir / f"design_{tag}.pgm", img)

    with out.CsvLogger(out_dir / "convergence.csv") as csv:
        if cfg.maxit == 0:
            # Initial-state artifacts only.
            from .design import build_fields

            fields = build_fields(driver.x, driver.filter, grid, cfg.ft, cfg.eta, cfg.beta)
            write_image("initial", fields)
            out.save_checkpoint(
                out_dir / "checkpoint.json", grid, driver.x, 0, _param_state(driver)
            )
            return EXIT_OK

        def callback(rec, drv):
            print(
                f"it {rec.loop:4d}  f {rec.f:.4f}  c {rec.c:.4e}  "
                f"l1 {rec.lam[0]:.3f}  g1 {rec.g1: .3e}  ch {rec.change:.3e}"
            )
            csv.write(rec)
            if cfg.image_every > 0 and rec.loop % cfg.image_every == 0:
                write_image(f"it{rec.loop:05d}", drv.last_fields)

        driver.run(cfg.maxit, callback=callback)

    write_image("final", driver.last_fields)
    out.save_checkpoint(
        out_dir / "checkpoint.json", grid, driver.x, driver.loop, _param_state(driver)
    )
    S = centroid_stress(driver.last_U, grid, driver.kernels)
    out.save_pgm(
        out_dir / "stress_final.pgm",
        out.principal_stress_image(S, driver.last_fields.xPhys, grid, driver.interp),
    )
    if driver.spec.has_buckling and driver.last_solution is not None:
        sol = driver.last_solution
        for i in range(min(3, sol.n_eig)):
            img = out.strain_energy_image(
                sol.phi[:, i], driver.last_fields.xPhys, grid, driver.K0, driver.interp
            )
            out.save_pgm(out_dir / f"mode{i + 1}_final.pgm", img)
    return EXIT_OK


def _param_state(driver) -> dict:
    return {
        "eta": driver.eta,
        "beta": driver.beta,
        "penal_k": driver.penal_k,
        "penal_g": driver.penal_g,
        "p_agg": driver.rho,
    }


def benchmark_command(sizes, out_path: str, repeats: int) -> int:
    rows = benchmark_sizes(sizes, repeats=repeats)
    lines = [",".join(BENCH_COLUMNS)]
    for row in rows:
        vals = row.as_tuple()
        lines.append(
            ",".join([str(vals[0])] + [f"{v:.3g}" for v in vals[1:]])
        )
    text = "\n".join(lines) + "\n"
    if out_path == "-":
        sys.stdout.write(text)
    else:
        Path(out_path).write_text(text, encoding="utf-8")
    return EXIT_OK


def render_command(checkpoint: str, out_path: str) -> int:
    ck = out.load_checkpoint(Path(checkpoint))
    img = out.density_image(ck["x"], ck["nelx"], ck["nely"])
    out.save_pgm(Path(out_path), img)
    return EXIT_OK


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--preset", choices=["column", "wall"])
    p.add_argument("--nelx", type=int)
    p.add_argument("--nely", type=int)
    p.add_argument("--Lx", type=float, dest="Lx")
    p.add_argument("--problem", choices=["BCV", "VCB", "CV", "VC"])
    p.add_argument("--cmax", type=float)
    p.add_argument("--vfmax", type=float)
    p.add_argument("--lmin", type=float)
    p.add_argument("--penal-k", type=float, dest="penal_k")
    p.add_argument("--penal-g", type=float, dest="penal_g")
    p.add_argument("--rmin", type=float)
    p.add_argument("--ft", type=int, choices=[1, 2, 3])
    p.add_argument("--ft-bc", choices=["N", "D"], dest="ft_bc")
    p.add_argument("--eta", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--maxit", type=int)
    p.add_argument("--n-eig", type=int, dest="n_eig")
    p.add_argument("--p-agg", type=float, dest="p_agg")
    p.add_argument("--cnt-beta", type=float, nargs=4, dest="cnt_beta",
                   metavar=("ISTART", "MAXPAR", "ISTEPS", "DELTA"))
    p.add_argument("--cnt-penal-k", type=float, nargs=4, dest="cnt_penal_k",
                   metavar=("ISTART", "MAXPAR", "ISTEPS", "DELTA"))
    p.add_argument("--cnt-penal-g", type=float, nargs=4, dest="cnt_penal_g",
                   metavar=("ISTART", "MAXPAR", "ISTEPS", "DELTA"))
    p.add_argument("--cnt-p-agg", type=float, nargs=4, dest="cnt_p_agg",
                   metavar=("ISTART", "MAXPAR", "ISTEPS", "DELTA"))
    p.add_argument("--x0", help="checkpoint file with the initial design")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--image-every", type=int, dest="image_every")
    p.add_argument("--seed", type=int)
    p.add_argument("--eig-method", choices=["auto", "lanczos", "dense"], dest="eig_method")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="buckopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an optimization")
    _add_run_args(p_run)

    p_bench = sub.add_parser("benchmark", help="time the matrix construction phases")
    p_bench.add_argument("--sizes", type=float, nargs="+",
                         default=[1e4, 3.16e4, 1e5, 3.16e5, 1e6])
    p_bench.add_argument("--repeats", type=int, default=3)
    p_bench.add_argument("--out", default="-")

    p_render = sub.add_parser("render", help="render a checkpoint to an image")
    p_render.add_argument("checkpoint")
    p_render.add_argument("--out", default="design.pgm")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "run":
            overrides = {
                k: v for k, v in vars(args).items() if k not in ("command", "config")
            }
            cfg = load_config(args.config, overrides)
            return run_command(cfg)
        if args.command == "benchmark":
            return benchmark_command([int(s) for s in args.sizes], args.out, args.repeats)
        if args.command == "render":
            return render_command(args.checkpoint, args.out)
        return EXIT_CONFIG
    except (ValueError, FileNotFoundError, KeyError) as err:
        log.error("configuration error: %s", err)
        return EXIT_CONFIG
    except (NotPositiveDefiniteError, EigenSolveError, RuntimeError) as err:
        log.error("solver failure: %s", err)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

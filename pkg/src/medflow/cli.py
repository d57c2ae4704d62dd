"""Command-line front end.

``medflow --config run.cfg --out results/`` samples a cloud, evolves the
initial field, writes snapshots, energies, images and verification tables,
and exits with 0 only if every requested verification passed.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io, suites
from .config import (RunConfig, build_kernel, config_hash, parse_config, parse_initial,
                     parse_labels, serialize, with_overrides)
from .domain import Box, Poisson, Torus, UniformIID, sample
from .errors import ConfigError, MedflowError
from .evolution import (MBO, SSL, EvolutionConfig, Evolver, LevelSet, LevelSetField,
                        SSLWeightConfig, YoungAngle)
from .heatflow import GraphField, dirichlet_energy, minimizing_movement, tv_energy
from .kernels import Ball
from .raster import level_overlay, rasterize, sample_grid

__all__ = ["main", "run_pipeline", "run_sweep", "build_domain", "initial_field",
           "EXIT_VERIFY_FAILED"]

log = logging.getLogger("medflow")

EXIT_VERIFY_FAILED = 3


def build_domain(cfg: RunConfig):
    if cfg.domain == "torus":
        return Torus(cfg.d)
    if cfg.domain == "dumbbell":
        return suites.dumbbell_domain()
    bounds = None
    if cfg.bounds is not None:
        b = np.asarray(cfg.bounds).reshape(cfg.d, 2)
        bounds = (b[:, 0], b[:, 1])
    return Box(cfg.d, bounds)


def initial_field(cfg: RunConfig, cloud) -> np.ndarray:
    """Initial values; shapes are encoded so that the tracked set is ``{u >= q}``.

    ``disk``, ``ellipse`` and ``halfspace`` give ``q`` minus a signed
    distance-like function of the shape (centered in the domain),
    ``sine``/``cosine`` give ``sin(2 pi x1)``/``cos(2 pi x1)`` and
    ``split:x0:noise`` is the indicator of ``{x1 < x0}`` with a fraction
    ``noise`` of flipped labels.
    """
    name, par = parse_initial(cfg.initial, cfg.d)
    x = cloud.positions
    center = 0.5 * (cloud.domain.lo + cloud.domain.hi)
    if name == "disk":
        g = np.linalg.norm(x - center, axis=1) - par[0]
    elif name == "ellipse":
        a, b = par
        y = x - center
        g = (np.hypot(y[:, 0] / a, y[:, 1] / b) - 1.0) * min(a, b)
    elif name == "halfspace":
        g = x[:, -1] - par[0]
    elif name == "sine":
        return np.sin(2 * np.pi * x[:, 0])
    elif name == "cosine":
        return np.cos(2 * np.pi * x[:, 0])
    else:
        return suites.dumbbell_initial(cloud, par[0], par[1], seed=cfg.seed)
    return cfg.q - g


def _mode(cfg: RunConfig, cloud):
    if cfg.mode == "mbo":
        return MBO(cfg.q)
    if cfg.mode == "youngangle":
        return YoungAngle(math.radians(cfg.alpha))
    if cfg.mode == "ssl":
        labels = parse_labels(cfg.labels, cfg.d)
        from scipy.spatial import cKDTree
        tree = cKDTree(cloud.positions, boxsize=1.0 if cloud.domain.periodic else None)
        _, idx = tree.query([p for p, _ in labels])
        return SSL(SSLWeightConfig(tuple(int(i) for i in idx), tuple(v for _, v in labels)))
    return LevelSet()


class Manifest:
    """Running record of written files; rewritten after every change."""

    def __init__(self, out: Path, cfg: RunConfig):
        self.path = out / "MANIFEST"
        self.header = [f"config={config_hash(cfg)}", f"seed={cfg.seed}"]
        self.files = []
        self.status = "running"
        self.stage = None
        self.error = None
        self.write()

    def add(self, path: Path):
        self.files.append(path.name)
        self.write()

    def write(self):
        lines = ["# medflow run manifest", *self.header, f"status={self.status}"]
        if self.stage is not None:
            lines.append(f"stage={self.stage}")
        if self.error is not None:
            lines.append(f"error={self.error}")
        lines.append("files:")
        lines.extend(f"  {f}" for f in self.files)
        self.path.write_text("\n".join(lines) + "\n")


def _suite_kwargs(name: str, cfg: RunConfig) -> dict:
    """Scale the reference suites to the configured cloud where it makes sense."""
    N = cfg.N if cfg.N is not None else int(cfg.intensity)
    r, seed = cfg.r, cfg.seed
    if name == "tracking":
        spec = build_kernel(cfg)
        kappa = spec.kappa if 0 < getattr(spec, "kappa", 0) < 1 else 0.9
        return dict(N=N, r=r, kappa=kappa, seed=seed)
    if name == "dirichlet":
        return dict(pairs=((N, r), (4 * N, r / math.sqrt(2.0))), seed=seed)
    if name in ("heat", "young", "classify"):
        return dict(N=N, r=r, seed=seed)
    if name in ("consistency", "oberman", "identities", "medians", "dkw", "tl2",
                "singular"):
        return dict(seed=seed)
    return {}


def _energy_row(fld: LevelSetField, cfg: RunConfig, s: float):
    u = fld.values
    chi = (u >= cfg.q).astype(float)
    dirichlet = dirichlet_energy(GraphField(fld.cloud, u, cfg.r))
    tv = tv_energy(GraphField(fld.cloud, chi, cfg.r), spec=Ball(cfg.r), s=s)
    return (fld.step_count, float(fld.physical_time), dirichlet, tv,
            float(np.sqrt(np.mean(u * u))), float(u.min()), float(u.max()))


def run_pipeline(cfg: RunConfig, out_dir) -> int:
    """Run one configuration and write its artifacts into ``out_dir``.

    Returns the process exit status: 0 on success, ``EXIT_VERIFY_FAILED`` if
    a verification failed, or the exit code of the module error raised. The
    MANIFEST records the stage reached in every case.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    tag = f"config={chash} seed={cfg.seed}"
    (out / "config.txt").write_text(f"# {tag}\n" + serialize(cfg))
    man = Manifest(out, cfg)
    man.add(out / "config.txt")
    try:
        man.stage = "sample"
        domain = build_domain(cfg)
        spec = build_kernel(cfg)
        cell = cfg.cell if cfg.cell is not None else spec.r_outer
        sampler = (UniformIID(cfg.N, cfg.seed) if cfg.N is not None
                   else Poisson(cfg.intensity, cfg.seed))
        t0 = time.perf_counter()
        cloud = sample(domain, sampler, cell)
        log.info("sampled %d points on %s in %.1fs", cloud.n, cfg.domain,
                 time.perf_counter() - t0)
        io.write_cloud(out / "cloud.txt", cloud.positions, cfg.seed,
                       extra_header=f"config={chash}")
        man.add(out / "cloud.txt")

        man.stage = "evolve"
        mode = _mode(cfg, cloud)
        ecfg = EvolutionConfig(spec, cfg.T, mode=mode, h=cfg.h,
                               stop_near_extremum=cfg.stop_near_extremum, level=cfg.q)
        t0 = time.perf_counter()
        ev = Evolver(cloud, ecfg)
        g = LevelSetField(cloud, initial_field(cfg, cloud))
        snaps = ev.run(g, times=cfg.times)
        log.info("%d steps of %s in %.1fs (time unit %.3g)", snaps[-1].step_count,
                 cfg.mode, time.perf_counter() - t0, ev.time_unit)
        s = mode.s if isinstance(mode, YoungAngle) else 0.5
        energy_rows = []
        for k, fld in enumerate(snaps):
            path = out / f"snap_{k:03d}.txt"
            io.write_snapshot(path, cloud.positions, fld.values, fld.physical_time,
                              fld.step_count, cfg.mode, cfg.seed, config=chash)
            man.add(path)
            if cloud.d == 2:
                img = rasterize(cloud, fld.values, cfg.resolution)
                grid = sample_grid(cloud, fld.values, cfg.resolution)
                path = out / f"snap_{k:03d}.pgm"
                io.write_pgm(path, level_overlay(img, grid, cfg.q), comment=tag)
                man.add(path)
            energy_rows.append(_energy_row(fld, cfg, s))
        io.write_csv(out / "energy.csv", io.ENERGY_COLUMNS, energy_rows, comment=tag)
        man.add(out / "energy.csv")
        if snaps[-1].empty_count:
            log.warning("%d empty stencils held their value", snaps[-1].empty_count)

        rows = []
        if cfg.tau is not None:
            man.stage = "heatflow"
            gf = GraphField(cloud, g.values, cfg.r)
            nsteps = int(math.floor(cfg.heat_T / cfg.tau * (1 + 1e-12)))
            _, energies, mono = minimizing_movement(gf, cfg.tau, cfg.heat_T,
                                                    normalization=cfg.normalization)
            io.write_csv(out / "heat.csv", ("step", "time", "energy"),
                         [(n, n * cfg.tau, float(e)) for n, e in zip(range(nsteps + 1), energies)],
                         comment=tag)
            man.add(out / "heat.csv")
            rows.append(suites.VerificationRow("heatflow", "energy monotone",
                                               float(energies[-1]), float(energies[0]), 0.0,
                                               mono))

        if cfg.verify_suites:
            man.stage = "verify"
            for name in cfg.verify_suites:
                t0 = time.perf_counter()
                got = suites.SUITES[name](**_suite_kwargs(name, cfg))
                rows.extend(got)
                log.info("verify %-12s %s (%.1fs)", name,
                         "pass" if all(r.passed for r in got) else "FAIL",
                         time.perf_counter() - t0)
        if rows:
            io.write_csv(out / "verify.csv", io.VERIFY_COLUMNS,
                         [(r.test, r.parameter, r.measured, r.predicted, r.tolerance, r.passed)
                          for r in rows], comment=tag)
            man.add(out / "verify.csv")
        man.stage = None
        failed = [r for r in rows if not r.passed]
        man.status = "verification failed" if failed else "complete"
        man.write()
        for r in failed:
            log.error("verification failed: %s %s measured %.6g predicted %.6g",
                      r.test, r.parameter, r.measured, r.predicted)
        return EXIT_VERIFY_FAILED if failed else 0
    except MedflowError as exc:
        man.status = "failed"
        man.error = f"{type(exc).__name__}: {exc}"
        man.write()
        log.error("%s during %s: %s", type(exc).__name__, man.stage, exc)
        return exc.exit_code


def run_sweep(cfg: RunConfig, out_dir, k: int) -> int:
    """Repeat the run for seeds ``seed .. seed + k - 1`` and aggregate verifications.

    Each run goes to ``seed_<s>/``; ``sweep.csv`` holds the mean and sample
    standard deviation of every verification quantity across seeds.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    status = 0
    table = {}
    for s in range(cfg.seed, cfg.seed + k):
        sub = out / f"seed_{s}"
        code = run_pipeline(replace(cfg, seed=s), sub)
        status = status or code
        vpath = sub / "verify.csv"
        if vpath.exists():
            cols, rows = io.read_csv(vpath)
            for row in rows:
                rec = dict(zip(cols, row))
                key = (rec["test"], rec["parameter"])
                table.setdefault(key, []).append((float(rec["measured"]),
                                                  rec["pass"] == "true"))
    summary = []
    for (test, par), vals in table.items():
        m = np.array([v for v, _ in vals])
        sd = float(m.std(ddof=1)) if m.size > 1 else 0.0
        summary.append((test, par, float(m.mean()), sd, sum(p for _, p in vals), len(vals)))
    io.write_csv(out / "sweep.csv", ("test", "parameter", "mean", "std", "passes", "runs"),
                 summary, comment=f"config={config_hash(cfg)} seeds={cfg.seed}..{cfg.seed + k - 1}")
    return status


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="medflow", description=__doc__.splitlines()[0])
    p.add_argument("--config", required=True, help="run configuration file")
    p.add_argument("--mode", help="override the evolution mode")
    p.add_argument("--seed", type=int, help="override the sampling seed")
    p.add_argument("--threads", type=int, help="cap on worker threads")
    p.add_argument("--out", help="output directory (default: $MEDFLOW_OUT, then the config)")
    p.add_argument("--verify", help="suite name, comma-separated list, 'all' or 'none'")
    p.add_argument("--sweep", type=int, metavar="K",
                   help="repeat over K consecutive seeds and aggregate mean and std")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    overrides = {}
    for key in ("mode", "seed", "verify"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    try:
        cfg = parse_config(args.config, overrides)
        out = args.out or os.environ.get("MEDFLOW_OUT") or cfg.out or "medflow_out"
        cfg = with_overrides(cfg, out=out)
        if args.sweep is not None and args.sweep < 1:
            raise ConfigError("sweep needs at least one seed", key="sweep")
    except MedflowError as exc:
        print(f"medflow: {exc}", file=sys.stderr)
        return exc.exit_code
    level = {0: logging.WARNING, 1: logging.INFO}.get(cfg.verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")
    if args.threads is not None:
        import numba
        numba.set_num_threads(max(1, min(args.threads, numba.config.NUMBA_NUM_THREADS)))
    if args.sweep is not None:
        return run_sweep(cfg, out, args.sweep)
    return run_pipeline(cfg, out)


if __name__ == "__main__":
    sys.exit(main())

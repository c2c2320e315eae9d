"""Command-line batch runner: one job per invocation, staged outputs, manifest.

Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import shutil
import sys
import tempfile
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numba
import numpy as np

from . import config as cfgmod
from .exceptions import ConfigurationError, NumericalStabilityError
from .farfield import KirchhoffDiffraction
from .gridio import read_grid, write_grid, write_log_pgm
from .lattice import build_supercell, punch_hole, reference_circle_area
from .metrics import default_velocities, run_velocity_sweep, sweep_csv, transmission_csv
from .potential import GridSpec, PotentialParams, sample_slice
from .tdse import RunConfig, TransversePropagator, WaveField

log = logging.getLogger("hbnwave")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
MANIFEST = "manifest.json"


@dataclass
class JobSpec:
    """One batch job: ``mode`` applied to ``config_path`` with dotted ``overrides``."""

    mode: str | None
    config_path: str | None
    output_dir: str
    overrides: list = field(default_factory=list)
    threads: int | None = None
    seed: int | None = None


def _package_version():
    try:
        return version("hbnwave")
    except PackageNotFoundError:
        return "unknown"


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _load_user_config(job):
    """User config dict and its directory; a manifest also supplies its mode."""
    if job.config_path is None:
        return {}, None, None
    path = Path(job.config_path)
    user = cfgmod.read_config_file(path)
    mode = None
    try:
        with open(path) as fh:
            raw = json.load(fh)
        if isinstance(raw, dict) and "outputs" in raw:
            mode = raw.get("mode")
    except (OSError, json.JSONDecodeError):
        pass
    return user, path.parent, mode


def resolve_job(job):
    """Validate ``job`` before any compute.

    Returns ``(mode, resolved_config, species_file, species_path)``; raises
    :class:`ConfigurationError` carrying every diagnostic, one per line.
    """
    try:
        user, cdir, manifest_mode = _load_user_config(job)
    except OSError as exc:
        raise ConfigurationError(f"{job.config_path}: cannot read config: {exc.strerror or exc}")
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{job.config_path}: invalid JSON: {exc}")
    mode = job.mode or manifest_mode
    diags = []
    if mode is None:
        diags.append("--mode: required (one of %s)" % ", ".join(cfgmod.MODES))
    elif mode not in cfgmod.MODES:
        diags.append(f"--mode: unknown mode {mode!r}; expected one of {list(cfgmod.MODES)}")
    user = cfgmod.apply_overrides(user, job.overrides)
    more, cfg, species = cfgmod.validate_data(user, cdir)
    diags += more
    if cfg is not None and mode == "farfield":
        src = cfg["farfield"].get("input_field")
        if src is None:
            diags.append("farfield.input_field: required for mode farfield")
        elif not Path(src).is_file():
            diags.append(f"farfield.input_field: no such file {src!r}")
    if job.threads is not None and job.threads < 1:
        diags.append(f"--threads: must be >= 1, got {job.threads}")
    if diags:
        raise ConfigurationError("\n".join(diags))
    species_path = cfgmod.resolve_data_path(cfg["species_file"], cdir).resolve()
    # keep the name when it comes from the data directory so manifests stay portable
    if species_path.parent != cfgmod.default_data_dir().resolve():
        cfg["species_file"] = str(species_path)
    return mode, cfg, species, species_path


def _pristine(cfg, species):
    lat = cfg["lattice"]
    return build_supercell(
        lat["n_cells"], lat["lattice_constant"],
        (species.species["boron"], species.species["nitrogen"]),
    )


def _potential_params(cfg, species):
    p = cfg["potential"]
    return PotentialParams(alpha0=float(species.probe["alpha0"]), cutoff=p["cutoff"],
                           u_max=p["u_max"])


def _propagator(cfg, species, velocity, reference_area):
    g, p, pr = cfg["grid"], cfg["potential"], cfg["propagation"]
    return TransversePropagator(
        velocity=velocity, extent=g["extent"], n_points=g["n_points"],
        z_start=pr["z_start"], z_stop=pr["z_stop"], dt=pr["dt"],
        mass=float(species.probe["mass"]), alpha0=float(species.probe["alpha0"]),
        cutoff=p["cutoff"], u_max=p["u_max"], z_table_step=p["z_table_step"],
        phase_limit=pr["phase_limit"], max_dz_per_step=pr["max_dz_per_step"],
        absorption_dz=pr["absorption_dz"], snapshot_every=pr["snapshot_every"],
        reference_area=reference_area,
    )


def _field_meta(field, velocity, hole, z):
    g = field.grid
    return {"quantity": "wavefunction", "units": "A^-1", "extent_A": g.extent,
            "n_points": g.n_points, "origin_A": list(g.origin), "z_A": z,
            "velocity_km_s": velocity, "hole": hole}


def _farfield(cfg, species, field, velocity, stage, outputs):
    ff = cfg["farfield"]
    est = KirchhoffDiffraction(
        velocity=velocity, mass=float(species.probe["mass"]), distance=ff["distance"],
        window=ff["window"], n_points=ff["n_points"], method=ff["method"],
    )
    pattern = est.fit_transform(field)
    meta = {"quantity": "probability density", "units": "mm^-2",
            "extent_m": pattern.grid.extent, "n_points": pattern.grid.n_points,
            "distance_m": pattern.distance, "wavelength_A": pattern.wavelength,
            "method": ff["method"], "captured_probability": pattern.integral()}
    outputs += write_grid(stage / "pattern.bin", pattern.values, meta)
    if ff["pgm"]:
        outputs.append(write_log_pgm(stage / "pattern.pgm", pattern.values))


def _run_slice_dump(cfg, species, stage):
    hole = species.holes[cfg["hole"]]
    model = punch_hole(_pristine(cfg, species), hole)
    g = cfg["grid"]
    grid = GridSpec(g["extent"], g["n_points"], model.center)
    z = float(cfg["slice"]["z"])
    pot, filt = sample_slice(model, grid, z, _potential_params(cfg, species))
    meta = {"quantity": "potential", "units": "eV", "extent_A": grid.extent,
            "n_points": grid.n_points, "origin_A": list(grid.origin), "z_A": z,
            "hole": hole.name, "n_clamped": int(pot.clamped.sum())}
    return list(write_grid(stage / "potential.bin", pot.values, meta))


def _run_propagate(cfg, species, stage):
    hole = species.holes[cfg["hole"]]
    model = punch_hole(_pristine(cfg, species), hole)
    velocity = cfg["propagation"]["velocity"]
    est = _propagator(cfg, species, velocity, reference_circle_area(hole))
    final = est.fit_transform(model)
    rec = est.record_
    outputs = []
    path = stage / "transmission.csv"
    path.write_text(transmission_csv(rec))
    outputs.append(path)
    outputs += write_grid(stage / "final_field.bin", final.amplitudes,
                          _field_meta(final, velocity, hole.name, float(rec.z[-1])))
    if cfg["farfield"]["enabled"]:
        _farfield(cfg, species, final, velocity, stage, outputs)
    return outputs


def _run_farfield(cfg, species, stage):
    values, meta = read_grid(cfg["farfield"]["input_field"])
    try:
        grid = GridSpec(meta["extent_A"], meta["n_points"], tuple(meta["origin_A"]))
    except KeyError as exc:
        raise ConfigurationError(
            f"farfield.input_field: sidecar lacks {exc.args[0]!r}") from None
    field = WaveField(grid, values)
    velocity = cfg["propagation"]["velocity"]
    outputs = []
    _farfield(cfg, species, field, velocity, stage, outputs)
    return outputs


def _run_sweep(cfg, species, stage, threads):
    sw = cfg["sweep"]
    holes = [species.holes[h] for h in sw["holes"]]
    velocities = sw["velocities"] if sw["velocities"] is not None else default_velocities()
    g, p, pr = cfg["grid"], cfg["potential"], cfg["propagation"]
    template = RunConfig(
        velocity=1.0, grid=GridSpec(g["extent"], g["n_points"]),
        z_start=pr["z_start"], z_stop=pr["z_stop"], dt=pr["dt"],
        mass=float(species.probe["mass"]), snapshot_every=pr["snapshot_every"],
        alpha0=float(species.probe["alpha0"]), cutoff=p["cutoff"], u_max=p["u_max"],
        z_table_step=p["z_table_step"], phase_limit=pr["phase_limit"],
        max_dz_per_step=pr["max_dz_per_step"], absorption_dz=pr["absorption_dz"],
    )
    workers = sw["workers"] if threads is None else min(sw["workers"], threads)
    sweeps = run_velocity_sweep(_pristine(cfg, species), holes, velocities, template,
                                workers=workers)
    for s in sweeps.values():
        for v, msg in sorted(s.diagnostics.items()):
            log.warning("%s @ %g km/s: %s", s.hole, v, msg)
    path = stage / "sweep.csv"
    path.write_text(sweep_csv(sweeps, record_wall_time=sw["record_wall_time"]))
    return [path]


RUNNERS = {
    "slice-dump": lambda cfg, sp, stage, threads: _run_slice_dump(cfg, sp, stage),
    "propagate": lambda cfg, sp, stage, threads: _run_propagate(cfg, sp, stage),
    "farfield": lambda cfg, sp, stage, threads: _run_farfield(cfg, sp, stage),
    "sweep": _run_sweep,
}


def _manifest(status, mode, cfg, species_path, outputs, job, diagnostics=()):
    entries = []
    for p in sorted(outputs, key=lambda q: q.name):
        entries.append({"path": p.name, "sha256": _sha256(p), "bytes": p.stat().st_size})
    man = {
        "status": status,
        "mode": mode,
        "package_version": _package_version(),
        "seed": job.seed,
        "config": cfg,
        "outputs": entries,
        "diagnostics": list(diagnostics),
    }
    if species_path is not None:
        man["species_file_sha256"] = _sha256(species_path)
    return man


def _fail(out, job, status_code, message, mode=None, cfg=None, species_path=None):
    for line in message.splitlines():
        print(f"error: {line}", file=sys.stderr)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / MANIFEST, _manifest("failed", mode, cfg, species_path, [], job,
                                         message.splitlines()))
    return status_code


def _set_threads(n):
    if n is not None:
        numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def run(job):
    """Execute ``job``; returns the exit status.

    Outputs are written to a staging directory next to ``output_dir`` and
    moved in only after the whole pipeline succeeded; on failure
    ``output_dir`` holds only a manifest with ``"status": "failed"``.
    """
    out = Path(job.output_dir)
    if out.exists() and any(out.iterdir()):
        print(f"error: output directory {str(out)!r} is not empty", file=sys.stderr)
        return EXIT_CONFIG
    try:
        mode, cfg, species, species_path = resolve_job(job)
    except ConfigurationError as exc:
        return _fail(out, job, EXIT_CONFIG, str(exc), mode=job.mode)
    _set_threads(job.threads)
    out.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{out.name}.staging-", dir=out.parent))
    try:
        outputs = RUNNERS[mode](cfg, species, stage, job.threads)
        out.mkdir(parents=True, exist_ok=True)
        final = []
        for p in outputs:
            dest = out / p.name
            shutil.move(str(p), dest)
            final.append(dest)
        _dump_json(out / MANIFEST, _manifest("ok", mode, cfg, species_path, final, job))
        return EXIT_OK
    except ConfigurationError as exc:
        code, msg = EXIT_CONFIG, f"configuration: {exc}"
    except NumericalStabilityError as exc:
        code, msg = EXIT_NUMERIC, f"tdse: {exc}"
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        code, msg = EXIT_NUMERIC, f"numerics: {exc}"
    except Exception as exc:  # noqa: BLE001 - reported as a failed manifest
        log.debug("unexpected failure", exc_info=True)
        code, msg = EXIT_ERROR, f"{type(exc).__module__}.{type(exc).__name__}: {exc}"
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    # the job failed after outputs may have been moved in: leave only the manifest
    if out.exists():
        for p in out.iterdir():
            if p.is_file():
                p.unlink()
    return _fail(out, job, code, msg, mode, cfg, species_path)


def build_parser():
    p = argparse.ArgumentParser(
        prog="hbnwave",
        description="Helium matter-wave transmission through holes in hBN monolayers.",
    )
    p.add_argument("--mode", choices=cfgmod.MODES,
                   help="pipeline to run (taken from the manifest when --config is one)")
    p.add_argument("--config", help="JSON config or a previous run's manifest")
    p.add_argument("--out", help="output directory (must be empty or absent)")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config entry by dotted path")
    p.add_argument("--threads", type=int, help="upper bound on worker threads/processes")
    p.add_argument("--seed", type=int,
                   help="reserved; the pipeline is deterministic and ignores it")
    p.add_argument("--validate", action="store_true",
                   help="only validate the config and print every diagnostic")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.validate:
        if args.config is None:
            print("error: --validate needs --config", file=sys.stderr)
            return EXIT_CONFIG
        diags = cfgmod.validate(args.config, args.overrides)
        for d in diags:
            print(d)
        return EXIT_CONFIG if diags else EXIT_OK
    if args.out is None:
        print("error: --out is required", file=sys.stderr)
        return EXIT_CONFIG
    job = JobSpec(mode=args.mode, config_path=args.config, output_dir=args.out,
                  overrides=args.overrides, threads=args.threads, seed=args.seed)
    return run(job)


if __name__ == "__main__":
    sys.exit(main())

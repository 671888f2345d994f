"""Command-line entry points.

A run is described by a flat config file of ``key = value`` lines whose
``mode`` selects the operation; everything numeric is validated against the
module preconditions before dispatch.  Every run writes a ``manifest.json``
(config echo, package versions, seed, wall time) next to its outputs so runs
are reproducible bit for bit.

Exit codes: 0 success, 2 validation error, 3 solver non-convergence,
4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .audit import audit_assumptions
from .calibration import approximate_omega, characteristic, detect_kinks
from .cell import GridSpec, VelocitySampling, load_field, save_field, solve_cell
from .discounted import (
    estimate_hbar_discounted,
    make_discounted_spec,
    save_sweep_csv,
)
from .errors import (
    IntegrationFailureError,
    InvalidInputError,
    NonConvergenceError,
    ResolutionError,
    UnsupportedModelError,
    WeakKamError,
)
from .flow import PhasePoint, integrate_hamiltonian, save_trajectory
from .geometry import Configuration, dist_weak, load_configuration
from .measures import (
    birkhoff_measure,
    check_invariance,
    check_minimizing_report,
    default_observables,
    save_measure,
)
from .models import parse_model_file
from .oracles import oracle_hbar_1d

MODES = ("distweak", "flow", "discounted", "cell", "calibrate", "measure",
         "audit", "oracle-hbar")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NONCONVERGENCE = 3
EXIT_IO = 4


@dataclass
class RunConfig:
    mode: str
    options: dict  # raw key -> string map from the config file
    config_path: Path
    output: Path
    seed: int
    threads: int

    def get(self, key, default=None):
        return self.options.get(key, default)

    def require(self, key) -> str:
        if key not in self.options:
            raise InvalidInputError(f"config is missing required key {key!r}")
        return self.options[key]

    def get_float(self, key, default=None) -> float:
        raw = self.options.get(key)
        if raw is None:
            if default is None:
                raise InvalidInputError(f"config is missing required key {key!r}")
            return float(default)
        try:
            return float(raw)
        except ValueError as exc:
            raise InvalidInputError(f"config key {key!r}: not a number: {raw!r}") from exc

    def get_int(self, key, default=None) -> int:
        raw = self.options.get(key)
        if raw is None:
            if default is None:
                raise InvalidInputError(f"config is missing required key {key!r}")
            return int(default)
        try:
            return int(raw)
        except ValueError as exc:
            raise InvalidInputError(f"config key {key!r}: not an integer: {raw!r}") from exc

    def get_floats(self, key) -> list:
        raw = self.require(key)
        try:
            return [float(t) for t in raw.replace(",", " ").split()]
        except ValueError as exc:
            raise InvalidInputError(f"config key {key!r}: bad number list {raw!r}") from exc

    def model(self):
        return parse_model_file(self.resolve(self.require("model")))

    def resolve(self, rel) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.config_path.parent / p


def parse_config(path, output, seed, threads) -> RunConfig:
    path = Path(path)
    options = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidInputError(f"{path}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            options[key.strip()] = value.strip()
    mode = options.pop("mode", None)
    if mode not in MODES:
        raise InvalidInputError(f"{path}: mode must be one of {MODES}, got {mode!r}")
    if seed is None:
        seed = int(options.get("seed", 0))
    return RunConfig(mode=mode, options=options, config_path=path,
                     output=Path(output), seed=seed, threads=threads)


def _run_distweak(cfg: RunConfig, rng) -> dict:
    a = load_configuration(cfg.resolve(cfg.require("a")))
    b = load_configuration(cfg.resolve(cfg.require("b")))
    value = dist_weak(a, b)
    print(f"dist_weak = {value!r}")
    return {"dist_weak": value}


def _run_flow(cfg: RunConfig, rng) -> dict:
    model = cfg.model()
    m0 = load_configuration(cfg.resolve(cfg.require("start")))
    p0 = load_configuration(cfg.resolve(cfg.require("momentum"))).positions
    traj = integrate_hamiltonian(
        model, PhasePoint(m0, p0), cfg.get_float("t_span"), cfg.get_float("h"),
        scheme=cfg.get("scheme", "verlet"),
    )
    out = cfg.output / "trajectory.csv"
    save_trajectory(out, traj)
    print(f"flow: {len(traj)} samples -> {out}")
    return {"samples": len(traj), "trajectory": str(out)}


def _run_discounted(cfg: RunConfig, rng) -> dict:
    model = cfg.model()
    m0 = load_configuration(cfg.resolve(cfg.require("m0")))
    eps_list = cfg.get_floats("eps_list")
    if any(e <= 0 for e in eps_list):
        raise InvalidInputError("eps_list entries must be positive")
    spec = make_discounted_spec(
        model,
        epsilon=min(eps_list),
        value_tol=cfg.get_float("value_tol", 1e-3),
        h=cfg.get_float("h", 0.05),
        tol_grad=cfg.get_float("tol_grad", 1e-5),
    )
    hbar, table = estimate_hbar_discounted(model, m0, eps_list, spec)
    out = cfg.output / "sweep.csv"
    save_sweep_csv(out, table)
    print(f"hbar = {hbar!r}")
    return {"hbar": hbar, "sweep": str(out)}


def _run_cell(cfg: RunConfig, rng) -> dict:
    model = cfg.model()
    spec = GridSpec(cfg.get_int("n_particles", 1), model.dim, cfg.get_int("grid_nodes"))
    v_count = cfg.get_int("v_count", 41)
    radius = cfg.get("v_radius")
    sampling = VelocitySampling(float(radius), v_count) if radius else None
    field = solve_cell(
        model, spec, cfg.get_float("h"), cfg.get_float("tol", 1e-6),
        cfg.get_int("max_iters", 20000), v_samples=sampling,
    )
    out = cfg.output / "field.csv"
    save_field(out, field)
    print(f"hbar = {field.hbar!r}")
    return {"hbar": field.hbar, "iterations": field.meta.get("iterations"),
            "field": str(out)}


def _random_differentiable_seeds(field, rng, count):
    kinks = detect_kinks(field)
    from .calibration import _forbidden_mask, _near_kink  # shared helpers

    forbidden = _forbidden_mask(field, kinks)
    seeds = []
    guard = 0
    while len(seeds) < count:
        guard += 1
        if guard > 1000 * count:
            raise InvalidInputError("could not sample differentiable seeds")
        pt = rng.uniform(0.0, 1.0, size=field.n_axes)
        if not _near_kink(field, forbidden, pt[None])[0]:
            seeds.append(Configuration(pt.reshape(field.n_particles, field.dim)))
    return seeds


def _run_calibrate(cfg: RunConfig, rng) -> dict:
    model = cfg.model()
    field = load_field(cfg.resolve(cfg.require("field")))
    seeds = _random_differentiable_seeds(field, rng, cfg.get_int("n_seeds", 10))
    t_fwd = cfg.get_float("t_forward", 1.0)
    t_back = cfg.get_float("t_backward", 1.0)
    h = cfg.get_float("h", 1e-3)
    summaries = []
    for i, seed in enumerate(seeds):
        curve = characteristic(model, field, seed, t_fwd, t_back, h)
        out = cfg.output / f"curve_{i:02d}.csv"
        save_trajectory(out, curve.trajectory)
        summaries.append({"curve": str(out), **curve.summary()})
    summary_path = cfg.output / "curves.json"
    with open(summary_path, "w") as fh:
        json.dump(summaries, fh, indent=2)
    worst = max(s["residual_per_unit_time"] for s in summaries)
    print(f"calibrate: {len(seeds)} curves, worst residual/time = {worst!r}")
    return {"curves": len(seeds), "worst_residual_per_unit_time": worst,
            "summary": str(summary_path)}


def _run_measure(cfg: RunConfig, rng) -> dict:
    model = cfg.model()
    field = load_field(cfg.resolve(cfg.require("field")))
    seeds = _random_differentiable_seeds(field, rng, cfg.get_int("n_seeds", 4))
    h = cfg.get_float("h", 2e-3)
    omega = approximate_omega(model, field, seeds, cfg.get_float("t_relax", 5.0), h,
                              speed_tol=cfg.get_float("speed_tol", 0.1))
    slowest = min(omega.points,
                  key=lambda pt: float(np.sum(pt.p * pt.p)))
    mu = birkhoff_measure(model, slowest, cfg.get_float("t_total", 1000.0),
                          h, cfg.get_int("thin", 100))
    obs = default_observables(model.dim)
    inv = check_invariance(model, mu, cfg.get_float("t_test", 1.0), h, obs)
    rep = check_minimizing_report(model, mu, field.hbar, field)
    out = cfg.output / "measure.csv"
    save_measure(out, mu)
    report = {
        "atoms": mu.n_atoms,
        "hbar": field.hbar,
        "expectation_Lc": rep.expectation_Lc,
        "minimizing_gap": rep.gap,
        "telescoping": rep.telescoping,
        "invariance_residuals": inv.residuals,
        "invariance_bound": inv.bound,
        "omega_witness_dist": omega.witness_max_dist,
        "measure": str(out),
    }
    report_path = cfg.output / "measure_report.json"
    with open(report_path, "w") as fh:
        json.dump(report, fh, indent=2)
    print(f"measure: |E[Lc] + hbar| = {rep.gap!r}")
    return report


def _run_audit(cfg: RunConfig, rng) -> dict:
    model = cfg.model()
    report = audit_assumptions(
        model, cfg.get_int("n_probes", 10000), cfg.get_float("radius", 2.0),
        cfg.seed, n_particles=cfg.get_int("n_particles", 4),
    )
    payload = {
        "gamma_lower": report.gamma_lower,
        "K_L_upper": report.K_L_upper,
        "C_upper": report.C_upper,
        "grad_C_upper": report.grad_C_upper,
        "n_probes": report.n_probes,
        "violations": [
            {"assumption": v.assumption, "probe": v.probe, "margin": v.margin}
            for v in report.violations
        ],
    }
    out = cfg.output / "audit.json"
    with open(out, "w") as fh:
        json.dump(payload, fh, indent=2)
    print(f"audit: {len(report.violations)} violations over {report.n_probes} probes")
    return payload


def _run_oracle_hbar(cfg: RunConfig, rng) -> dict:
    model = cfg.model()
    c = cfg.get_float("c", float(model.c[0]) if model.dim == 1 else None)
    value = oracle_hbar_1d(model.external, c)
    print(f"hbar = {value!r}")
    return {"hbar": value, "c": c}


_HANDLERS = {
    "distweak": _run_distweak,
    "flow": _run_flow,
    "discounted": _run_discounted,
    "cell": _run_cell,
    "calibrate": _run_calibrate,
    "measure": _run_measure,
    "audit": _run_audit,
    "oracle-hbar": _run_oracle_hbar,
}


def run(config: RunConfig) -> int:
    """Dispatch a parsed run configuration; returns the process exit code."""
    t0 = time.time()
    try:
        config.output.mkdir(parents=True, exist_ok=True)
        rng = np.random.default_rng(config.seed)
        result = _HANDLERS[config.mode](config, rng)
    except (InvalidInputError, UnsupportedModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NonConvergenceError, IntegrationFailureError, ResolutionError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    manifest = {
        "mode": config.mode,
        "config_file": str(config.config_path),
        "config": dict(config.options),
        "seed": config.seed,
        "threads": config.threads,
        "versions": {
            "weakkam": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "wall_time_s": time.time() - t0,
        "result": result,
    }
    with open(config.output / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="weakkam",
        description="effective Hamiltonians, weak KAM fields, calibrated curves "
                    "and minimizing measures for particle systems on the torus",
    )
    parser.add_argument("--config", required=True, help="run configuration file")
    parser.add_argument("--output", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="RNG seed (overrides the config file)")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads hint, recorded in the manifest")
    args = parser.parse_args(argv)
    try:
        config = parse_config(args.config, args.output, args.seed, args.threads)
    except WeakKamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return run(config)


if __name__ == "__main__":
    sys.exit(main())

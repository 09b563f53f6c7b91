"""Command-line entry point.

    oatcontrol simulate  --preset fig2 --out run/
    oatcontrol optimize  --preset fig3 --threads 4
    oatcontrol sweep-chi --preset fig4
    oatcontrol husimi    --config my.toml

Exit codes: 0 ok, 2 config error, 3 invariant violation, 4 runtime failure.
A single JSON summary line goes to stdout; arrays go to files under --out.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, load_preset
from .dynamics import ControlProfile, ModelParams, Trajectory, evolve_profile
from .export import (
    states_document,
    write_distribution,
    write_husimi,
    write_json,
    write_profile,
    write_trajectory,
)
from .measurement import build_noise_kernel, jx_distribution
from .optimizer import CfiObjective, OptimizerSettings, QfiObjective, multi_start
from .protocols import optimize_oat, run_profile
from .spin import husimi_grid, x_coherent_state

log = logging.getLogger("oatcontrol")

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_RUNTIME = 0, 2, 3, 4


class InvariantViolation(RuntimeError):
    pass


def check_trajectory(traj: Trajectory, tol: float = 1e-8) -> None:
    """Norm conservation and 0 <= F_Q/T^2 <= N^2 at every sample."""
    n = traj.n_particles
    norms = np.linalg.norm(traj.states, axis=1)
    if not np.all(np.abs(norms - 1) < tol):
        raise InvariantViolation(f"state norm drifted to {norms[np.argmax(np.abs(norms - 1))]!r}")
    if not np.all(np.isfinite(traj.fq)) or np.any(traj.fq > n * n * (1 + tol)):
        raise InvariantViolation("F_Q/T^2 outside [0, N^2]")


def _metadata() -> dict:
    return {"created": datetime.now(timezone.utc).isoformat(timespec="seconds"), "version": __version__}


def _ext(cfg: RunConfig) -> str:
    return cfg.output.format


def _noise(cfg: RunConfig, params: ModelParams | None = None):
    if cfg.sigma is None:
        return None
    params = params or cfg.model
    return build_noise_kernel(params.n_particles, cfg.sigma)


def _scheme_profile(cfg: RunConfig, kind: str) -> ControlProfile:
    if kind == "oat":
        return cfg.oat.profile()
    if kind == "tnt":
        return ControlProfile.constant(1.0, cfg.tnt_segments)
    return cfg.profile


def _write_report(cfg: RunConfig, out: Path, report, scheme: str, traj_file: str, extra=None) -> Path:
    doc = {
        "params": {
            "n_particles": cfg.model.n_particles,
            "chi_T": cfg.model.chi_T,
            "omega_T": cfg.model.omega_T,
            "sigma": cfg.sigma,
        },
        "scheme": scheme,
        "fq_final": report.fq_final,
        "fc_final": report.fc_final,
        "phase_offset": report.phase_offset,
        "profile": report.profile.to_dict(),
        "trajectory_ref": traj_file,
        "config": cfg.to_dict(),
    }
    if extra:
        doc.update(extra)
    doc["metadata"] = _metadata()
    return write_json(out / "report.json", doc)


def _emit_trajectory(cfg: RunConfig, out: Path, report, scheme: str, extra=None) -> dict:
    check_trajectory(report.trajectory)
    fmt = _ext(cfg)
    traj_file = f"trajectory.{fmt}"
    write_trajectory(report.trajectory, out / traj_file, fmt)
    if cfg.output.states:
        write_json(out / "states.json", states_document(report.trajectory))
    noise = _noise(cfg)
    if noise is not None:
        dist = jx_distribution(report.trajectory.final_state, report.trajectory.final_deriv, report.phase_offset)
        write_distribution(dist, noise, out / f"distribution.{fmt}", fmt)
    _write_report(cfg, out, report, scheme, traj_file, extra)
    summary = {"fq_final": report.fq_final}
    if report.fc_final is not None:
        summary["fc_final"] = report.fc_final
        summary["phase_offset"] = report.phase_offset
    return summary


def _optimize(cfg: RunConfig, threads: int):
    settings = cfg.optimizer or OptimizerSettings()
    if cfg.scheme == "optimize-cfi":
        objective = CfiObjective(cfg.model, _noise(cfg))
    else:
        objective = QfiObjective(cfg.model)
    return multi_start(objective, settings, n_workers=threads)


# -- subcommands --------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, out: Path, threads: int = 1) -> dict:
    if cfg.scheme not in ("oat", "tnt", "profile"):
        raise ConfigError(f"simulate runs oat, tnt or profile schemes, not {cfg.scheme!r}")
    profile = _scheme_profile(cfg, cfg.scheme)
    report = run_profile(cfg.model, profile, _noise(cfg), cfg.output.n_samples)
    return _emit_trajectory(cfg, out, report, cfg.scheme)


def cmd_optimize(cfg: RunConfig, out: Path, threads: int = 1) -> dict:
    if cfg.scheme not in ("optimize-qfi", "optimize-cfi"):
        raise ConfigError(f"optimize needs scheme optimize-qfi or optimize-cfi, not {cfg.scheme!r}")
    result = _optimize(cfg, threads)
    fmt = _ext(cfg)
    doc = result.to_dict()
    doc["params"] = {"n_particles": cfg.model.n_particles, "chi_T": cfg.model.chi_T, "omega_T": cfg.model.omega_T}
    doc["objective"] = "cfi" if cfg.scheme == "optimize-cfi" else "qfi"
    doc["sigma"] = cfg.sigma
    doc["metadata"] = _metadata()
    write_json(out / "result.json", doc)
    write_profile(result.best_profile, out / f"best_profile.{fmt}", fmt)

    report = run_profile(cfg.model, result.best_profile, _noise(cfg), cfg.output.n_samples)
    summary = _emit_trajectory(cfg, out, report, cfg.scheme)
    summary["best_objective"] = result.best_objective
    if result.phase_offset is not None:
        summary["phase_offset"] = result.phase_offset
    return summary


def cmd_sweep_chi(cfg: RunConfig, out: Path, threads: int = 1) -> dict:
    if cfg.sweep_chi is None:
        raise ConfigError("sweep-chi needs a [sweep-chi] block")
    settings = cfg.optimizer or OptimizerSettings()
    rows = []
    for chi in cfg.sweep_chi:
        params = ModelParams(cfg.model.n_particles, chi, cfg.model.omega_T)
        _, oat = optimize_oat(params, n_samples=2)
        machine = multi_start(QfiObjective(params), settings, n_workers=threads)
        fq_oat, fq_machine = oat.fq_final, machine.best_objective
        rows.append((chi, fq_oat, fq_machine, fq_machine / fq_oat))
        log.info("chi_T=%g: oat %.6g, machine %.6g", chi, fq_oat, fq_machine)
    cols = ("chiT", "fq_oat", "fq_machine", "ratio")
    fmt = _ext(cfg)
    if fmt == "csv":
        from .export import write_csv

        write_csv(out / "sweep.csv", cols, rows)
    else:
        write_json(out / "sweep.json", {"columns": list(cols), "rows": [list(r) for r in rows], "metadata": _metadata()})
    return {"rows": len(rows), "min_ratio": min(r[3] for r in rows)}


def cmd_husimi(cfg: RunConfig, out: Path, threads: int = 1) -> dict:
    if cfg.scheme == "sweep-chi":
        raise ConfigError("husimi cannot run a sweep-chi configuration")
    hus = cfg.husimi or _default_husimi()
    if cfg.scheme in ("optimize-qfi", "optimize-cfi"):
        profile = _optimize(cfg, threads).best_profile
    elif cfg.scheme == "husimi":
        profile = _scheme_profile(cfg, hus.source)
    else:
        profile = _scheme_profile(cfg, cfg.scheme)
    traj = evolve_profile(x_coherent_state(cfg.model.n_particles), cfg.model, profile, times=hus.taus)
    check_trajectory(traj)
    fmt = _ext(cfg)
    files = []
    for i, tau in enumerate(traj.times):
        grid = husimi_grid(traj.state_at(i), hus.n_theta, hus.n_phi)
        name = f"husimi_tau{tau:.3f}.{fmt}"
        write_husimi(grid, out / name, fmt, tau=float(tau))
        files.append(name)
    return {"files": files}


def _default_husimi():
    from .config import HusimiSettings

    return HusimiSettings()


COMMANDS = {
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "sweep-chi": cmd_sweep_chi,
    "husimi": cmd_husimi,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oatcontrol", description="Controlled one-axis-twisting sensor simulations")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", type=Path, help="TOML run configuration")
        src.add_argument("--preset", help="shipped configuration: fig2, fig3, fig4, fig5, ...")
        p.add_argument("--seed", type=int, help="overrides optimizer.rng_seed")
        p.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
        p.add_argument("--threads", type=int, default=1, help="worker processes for restarts")
        p.add_argument("--format", choices=("csv", "json"), help="table format")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)

    try:
        cfg = load_config(args.config) if args.config else load_preset(args.preset)
        cfg = cfg.with_overrides(seed=args.seed, out=args.out, fmt=args.format)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out = Path(cfg.output.dir)
        summary = {"command": args.command, "scheme": cfg.scheme}
        # catch config mismatches before creating the output directory
        if args.command == "simulate" and cfg.scheme not in ("oat", "tnt", "profile"):
            raise ConfigError(f"simulate runs oat, tnt or profile schemes, not {cfg.scheme!r}")
        if args.command == "optimize" and cfg.scheme not in ("optimize-qfi", "optimize-cfi"):
            raise ConfigError(f"optimize needs scheme optimize-qfi or optimize-cfi, not {cfg.scheme!r}")
        if args.command == "sweep-chi" and cfg.scheme != "sweep-chi":
            raise ConfigError(f"sweep-chi needs scheme sweep-chi, not {cfg.scheme!r}")
        out.mkdir(parents=True, exist_ok=True)
        summary.update(COMMANDS[args.command](cfg, out, args.threads))
        summary["out"] = str(out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(summary))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

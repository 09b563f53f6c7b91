"""Flat-file writers: CSV tables and JSON documents."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .dynamics import ControlProfile, Trajectory
from .measurement import MeasurementDistribution, NoiseModel, apply_noise
from .spin import HusimiGrid, moments

TRAJECTORY_COLUMNS = ("tau", "fq_over_T2", "f0", "mean_x", "mean_y", "mean_z")


def _fmt(v) -> str:
    return repr(float(v))


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with Path(path).open() as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(v) for v in row] for row in r]
    return header, np.array(rows).reshape(-1, len(header))


def write_json(path, data) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=False) + "\n")
    return path


def trajectory_table(traj: Trajectory) -> list[tuple]:
    rows = []
    for i, tau in enumerate(traj.times):
        mo = moments(traj.state_at(i))
        rows.append((float(tau), float(traj.fq[i]), float(traj.f0[i]), mo.mean_x, mo.mean_y, mo.mean_z))
    return rows


def write_trajectory(traj: Trajectory, path, fmt: str = "csv") -> Path:
    rows = trajectory_table(traj)
    if fmt == "csv":
        return write_csv(path, TRAJECTORY_COLUMNS, rows)
    cols = {name: [r[i] for r in rows] for i, name in enumerate(TRAJECTORY_COLUMNS)}
    return write_json(path, cols)


def states_document(traj: Trajectory) -> dict:
    """Full state snapshots as lists of (re, im) pairs."""
    def pairs(v):
        return [[float(z.real), float(z.imag)] for z in v]

    return {
        "n_particles": traj.n_particles,
        "tau": traj.times.tolist(),
        "states": [pairs(s) for s in traj.states],
        "deriv_states": [pairs(s) for s in traj.deriv_states],
    }


def profile_table(profile: ControlProfile) -> list[tuple]:
    edges = profile.edges
    return [(k, float(edges[k]), float(edges[k + 1]), float(lam)) for k, lam in enumerate(profile.segments)]


def write_profile(profile: ControlProfile, path, fmt: str = "csv") -> Path:
    rows = profile_table(profile)
    if fmt == "csv":
        return write_csv(path, ("segment_index", "tau_start", "tau_end", "lambda"), rows)
    return write_json(path, profile.to_dict())


def read_profile_csv(path) -> ControlProfile:
    _, data = read_csv(path)
    return ControlProfile(data[:, 3])


def distribution_table(dist: MeasurementDistribution, noise: NoiseModel) -> list[tuple]:
    noisy = apply_noise(dist, noise)
    return [
        (float(m), float(p), float(dp), float(pt), float(dpt))
        for m, p, dp, pt, dpt in zip(dist.m, dist.probs, dist.dprobs, noisy.probs, noisy.dprobs)
    ]


def write_distribution(dist: MeasurementDistribution, noise: NoiseModel, path, fmt: str = "csv") -> Path:
    cols = ("m", "P", "dP", "P_tilde", "dP_tilde")
    rows = distribution_table(dist, noise)
    if fmt == "csv":
        return write_csv(path, cols, rows)
    return write_json(path, {name: [r[i] for r in rows] for i, name in enumerate(cols)})


def write_husimi(grid: HusimiGrid, path, fmt: str = "csv", tau: float | None = None) -> Path:
    if fmt == "csv":
        rows = [
            (float(t), float(p), float(grid.values[i, j]))
            for i, t in enumerate(grid.theta)
            for j, p in enumerate(grid.phi)
        ]
        return write_csv(path, ("theta", "phi", "Q"), rows)
    doc = {
        "n_theta": len(grid.theta),
        "n_phi": len(grid.phi),
        "values": grid.values.tolist(),
        "theta": grid.theta.tolist(),
        "phi": grid.phi.tolist(),
    }
    if tau is not None:
        doc["tau"] = tau
    return write_json(path, doc)

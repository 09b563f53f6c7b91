"""Canonical sensing schemes: delta-pulse OAT, twist-and-turn, arbitrary profiles."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dynamics import ControlProfile, ModelParams, Trajectory, endpoint, evolve_profile
from .measurement import NoiseModel, optimize_phase_offset
from .optimizer import OptimizerSettings, ascend
from .spin import DickeState, x_coherent_state


@dataclass(frozen=True)
class OatScheme:
    """A single Jx pulse of area ``theta0`` at ``tau_prep`` (fraction of T), no other control."""

    tau_prep: float
    theta0: float

    def __post_init__(self):
        if not 0 < self.tau_prep < 1:
            raise ValueError(f"tau_prep must lie in (0, 1), got {self.tau_prep}")

    @property
    def tau_int(self) -> float:
        return 1.0 - self.tau_prep

    def profile(self) -> ControlProfile:
        return ControlProfile([0.0], ((self.tau_prep, self.theta0),))


@dataclass
class SchemeReport:
    trajectory: Trajectory
    fq_final: float
    profile: ControlProfile
    fc_final: float | None = None
    phase_offset: float | None = None

    def to_dict(self) -> dict:
        return {
            "fq_final": self.fq_final,
            "fc_final": self.fc_final,
            "phase_offset": self.phase_offset,
            "profile": self.profile.to_dict(),
        }


class ReferenceLines(NamedTuple):
    snl_fq: float
    heisenberg_f0: float


def reference_lines(params: ModelParams) -> ReferenceLines:
    n = params.n_particles
    return ReferenceLines(float(n), float(n * n))


def run_profile(
    params: ModelParams,
    profile: ControlProfile,
    noise: NoiseModel | None = None,
    n_samples: int = 201,
    initial: DickeState | None = None,
) -> SchemeReport:
    if initial is None:
        initial = x_coherent_state(params.n_particles)
    traj = evolve_profile(initial, params, profile, n_samples)
    report = SchemeReport(traj, float(traj.fq[-1]), profile)
    if noise is not None:
        phi, fc = optimize_phase_offset(traj.final_state, traj.final_deriv, noise)
        report.fc_final, report.phase_offset = fc, phi
    return report


def run_oat(
    params: ModelParams,
    scheme: OatScheme,
    noise: NoiseModel | None = None,
    n_samples: int = 201,
) -> SchemeReport:
    return run_profile(params, scheme.profile(), noise, n_samples)


def run_tnt(
    params: ModelParams,
    noise: NoiseModel | None = None,
    n_segments: int = 20,
    n_samples: int = 201,
) -> SchemeReport:
    """Constant Lambda = 1."""
    return run_profile(params, ControlProfile.constant(1.0, n_segments), noise, n_samples)


def oat_objective(params: ModelParams, tau_prep: float, theta0: float) -> float:
    initial = x_coherent_state(params.n_particles)
    psi, dpsi = endpoint(initial, params, ControlProfile([0.0], ((tau_prep, theta0),)))
    return float(4 * (np.vdot(dpsi, dpsi).real - abs(np.vdot(psi, dpsi)) ** 2))


def oat_grid(n_tau: int = 50, n_theta: int = 50):
    taus = np.arange(1, n_tau + 1) / (n_tau + 1)
    thetas = -np.pi + 2 * np.pi * np.arange(n_theta) / n_theta
    return taus, thetas


def optimize_oat(
    params: ModelParams,
    n_tau: int = 50,
    n_theta: int = 50,
    refine: bool = True,
    n_samples: int = 201,
) -> tuple[OatScheme, SchemeReport]:
    """Maximize F_Q(T) over (tau_prep, theta0): grid scan, then bounded local ascent."""
    taus, thetas = oat_grid(n_tau, n_theta)
    values = np.array([[oat_objective(params, t, th) for th in thetas] for t in taus])
    i, j = np.unravel_index(np.argmax(values), values.shape)
    x = np.array([taus[i], thetas[j]])
    if refine:
        settings = OptimizerSettings(fd_step=1e-6, initial_step=0.01, tol=1e-12, max_iters=200)
        lo = np.array([1e-6, -np.pi])
        hi = np.array([1 - 1e-6, np.pi])
        res = ascend(lambda v: oat_objective(params, v[0], v[1]), x, settings, lo, hi)
        if res.value >= values[i, j]:
            x = res.x
    scheme = OatScheme(float(x[0]), float(x[1]))
    return scheme, run_oat(params, scheme, n_samples=n_samples)


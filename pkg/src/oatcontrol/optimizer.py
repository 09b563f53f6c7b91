"""Multi-start projected gradient ascent over piecewise-constant Lambda profiles."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, NamedTuple

import numpy as np

from .dynamics import ControlProfile, ModelParams, endpoint, parity_sector, segment_generator
from .measurement import NoiseModel, PhaseScan, build_noise_kernel, fisher_at_phase, optimize_phase_offset
from .spin import DickeState, x_coherent_state

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerSettings:
    n_segments: int = 20
    n_restarts: int = 32
    lambda_bound: float = 10.0
    fd_step: float = 1e-4
    initial_step: float = 0.5  # first trial move, max-norm
    backtrack: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 40
    tol: float = 1e-7
    gtol: float = 1e-8
    max_iters: int = 500
    rng_seed: int = 0
    # grid points per segment for the escape scan after convergence; 0 disables
    scan_points: int = 0
    max_scans: int = 5

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("rng_seed", "scan_points"):
                if v < 0:
                    raise ValueError(f"{f.name} must be non-negative")
            elif not v > 0:
                raise ValueError(f"{f.name} must be positive, got {v}")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.scan_points == 1:
            raise ValueError("scan_points must be 0 or at least 2")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "OptimizerSettings":
        return cls(**data)


@dataclass
class RestartRecord:
    index: int
    seed: int
    init: list
    final_objective: float
    iterations: int
    trace: list = field(default_factory=list)


@dataclass
class OptimizationResult:
    best_profile: ControlProfile
    best_objective: float
    restart_records: list
    settings: OptimizerSettings
    phase_offset: float | None = None

    @property
    def best_restart(self) -> RestartRecord:
        return max(self.restart_records, key=lambda r: r.final_objective)

    def to_dict(self) -> dict:
        return {
            "best_profile": self.best_profile.to_dict(),
            "best_objective": self.best_objective,
            "phase_offset": self.phase_offset,
            "settings": self.settings.to_dict(),
            "restart_records": [asdict(r) for r in self.restart_records],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OptimizationResult":
        return cls(
            best_profile=ControlProfile.from_dict(data["best_profile"]),
            best_objective=data["best_objective"],
            restart_records=[RestartRecord(**r) for r in data["restart_records"]],
            settings=OptimizerSettings.from_dict(data["settings"]),
            phase_offset=data.get("phase_offset"),
        )


class AscentResult(NamedTuple):
    x: np.ndarray
    value: float
    iterations: int
    trace: list


# -- objectives ---------------------------------------------------------------


def objective_qfi(params: ModelParams, profile: ControlProfile, initial: DickeState | None = None) -> float:
    """F_Q(T)/T^2 at the end of the profile, starting from the x-polarized CSS."""
    if initial is None:
        initial = x_coherent_state(params.n_particles)
    psi, dpsi = endpoint(initial, params, profile)
    return float(4 * (np.vdot(dpsi, dpsi).real - abs(np.vdot(psi, dpsi)) ** 2))


def objective_cfi(
    params: ModelParams,
    profile: ControlProfile,
    noise: NoiseModel,
    initial: DickeState | None = None,
) -> float:
    """Noisy classical Fisher information / T^2, maximized over the phase offset."""
    if initial is None:
        initial = x_coherent_state(params.n_particles)
    psi, dpsi = endpoint(initial, params, profile)
    return optimize_phase_offset(psi, dpsi, noise)[1]


class SegmentObjective:
    """Callable on a Lambda vector; reuses propagation of unchanged leading segments.

    Finite-difference gradients perturb one segment at a time, so on average
    half of every evaluation is served from the prefix cache.
    """

    def __init__(self, params: ModelParams, initial: DickeState | None = None):
        self.params = params
        self.initial = initial if initial is not None else x_coherent_state(params.n_particles)
        self._sector = parity_sector(self.initial.amplitudes) if params.omega_T == 0 else None
        self._reset()

    def _reset(self):
        self._x = None
        self._states = None

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_x"] = state["_states"] = None
        return state

    def propagate(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        n_seg = x.size
        dt = 1.0 / n_seg
        if self._x is not None and self._x.size == n_seg:
            diff = np.nonzero(self._x != x)[0]
            start = int(diff[0]) if diff.size else n_seg
        else:
            psi0 = self.initial.amplitudes
            self._states = [(psi0, np.zeros_like(psi0))] + [None] * n_seg
            start = 0
        psi, dpsi = self._states[start]
        for k in range(start, n_seg):
            gen = segment_generator(self.params, float(x[k]))
            psi, dpsi = gen.propagate(psi, dpsi, dt, self._sector)
            self._states[k + 1] = (psi, dpsi)
        self._x = x.copy()
        return psi, dpsi

    def __call__(self, x) -> float:
        raise NotImplementedError


class QfiObjective(SegmentObjective):
    def __call__(self, x) -> float:
        psi, dpsi = self.propagate(x)
        return float(4 * (np.vdot(dpsi, dpsi).real - abs(np.vdot(psi, dpsi)) ** 2))


class CfiObjective(SegmentObjective):
    def __init__(
        self,
        params: ModelParams,
        noise: NoiseModel | float,
        initial: DickeState | None = None,
        n_grid: int = 256,
    ):
        super().__init__(params, initial)
        if not isinstance(noise, NoiseModel):
            noise = build_noise_kernel(params.n_particles, float(noise))
        self.noise = noise
        self.n_grid = n_grid

    def _reset(self):
        super()._reset()
        self._best = None

    def __getstate__(self):
        state = super().__getstate__()
        state["_best"] = None
        return state

    def optimum(self, x) -> tuple[float, float]:
        x = np.asarray(x, dtype=float)
        if self._best is not None and np.array_equal(self._best[0], x):
            return self._best[1]
        psi, dpsi = self.propagate(x)
        best = optimize_phase_offset(psi, dpsi, self.noise, n_grid=self.n_grid)
        self._best = (x.copy(), best)
        return best

    def at_phase(self, x, phase_offset: float) -> float:
        psi, dpsi = self.propagate(x)
        return fisher_at_phase(psi, dpsi, phase_offset, self.noise)

    def gradient(self, x, fd_step: float = 1e-4) -> np.ndarray:
        """Central differences with the phase offset held at its optimum for x.

        Since the objective is a maximum over phi, its derivative equals the
        fixed-phi derivative at the optimal phi, so the phase scan runs once
        per gradient instead of twice per segment.
        """
        phi = self.optimum(x)[0]
        return finite_diff_gradient(lambda z: self.at_phase(z, phi), x, fd_step)

    def __call__(self, x) -> float:
        return self.optimum(x)[1]

    def phase_offset(self, x) -> float:
        return self.optimum(x)[0]

    def scan(self, x) -> PhaseScan:
        psi, dpsi = self.propagate(x)
        return PhaseScan(psi, dpsi, self.noise)


# -- ascent -------------------------------------------------------------------


def finite_diff_gradient(objective: Callable, x, fd_step: float = 1e-4) -> np.ndarray:
    """Central differences, one coordinate at a time."""
    x = np.asarray(getattr(x, "segments", x), dtype=float)
    grad = np.empty(x.size)
    for k in range(x.size):
        up = x.copy()
        dn = x.copy()
        up[k] += fd_step
        dn[k] -= fd_step
        grad[k] = (objective(up) - objective(dn)) / (2 * fd_step)
    return grad


def _gradient(objective, x, fd_step):
    if hasattr(objective, "gradient"):
        return objective.gradient(x, fd_step)
    return finite_diff_gradient(objective, x, fd_step)


def ascend(
    objective: Callable,
    init,
    settings: OptimizerSettings = OptimizerSettings(),
    lower=None,
    upper=None,
) -> AscentResult:
    """Projected gradient ascent with Barzilai-Borwein trial steps and Armijo backtracking.

    Trial steps alternate between the long (s.s / s.y) and short (s.y / y.y)
    Barzilai-Borwein lengths, which cuts rejected trials on these landscapes.

    Bounds default to the box |x_k| <= settings.lambda_bound. Every accepted
    step increases the objective.
    """
    x = np.asarray(getattr(init, "segments", init), dtype=float).copy()
    lo = np.full(x.size, -settings.lambda_bound) if lower is None else np.broadcast_to(lower, x.shape)
    hi = np.full(x.size, settings.lambda_bound) if upper is None else np.broadcast_to(upper, x.shape)
    x = np.clip(x, lo, hi)
    f = objective(x)
    trace = [f]
    g = _gradient(objective, x, settings.fd_step)
    alpha = settings.initial_step / max(np.max(np.abs(g)), 1e-300)

    it = 0
    while it < settings.max_iters:
        if np.max(np.abs(np.clip(x + g, lo, hi) - x)) < settings.gtol:
            break
        accepted = False
        for _ in range(settings.max_backtracks):
            x_new = np.clip(x + alpha * g, lo, hi)
            s = x_new - x
            if not np.any(s):
                break
            f_new = objective(x_new)
            if f_new >= f + settings.armijo * (g @ s) and f_new > f:
                accepted = True
                break
            alpha *= settings.backtrack
        if not accepted:
            break
        it += 1
        g_new = _gradient(objective, x_new, settings.fd_step)
        y = g - g_new
        sy = s @ y
        improvement = (f_new - f) / max(abs(f), 1e-12)
        # next trial length; on non-positive curvature grow the old step
        if sy > 0:
            alpha = (s @ s) / sy if it % 2 else sy / (y @ y)
        else:
            alpha *= 2.0
        x, f, g = x_new, f_new, g_new
        trace.append(f)
        if improvement < settings.tol:
            break
    return AscentResult(x, float(f), it, trace)


def restart_inits(settings: OptimizerSettings) -> list[tuple[int, np.ndarray]]:
    """(seed, initial Lambda) per restart; restart 0 is Lambda=1, restart 1 is Lambda=0."""
    seeds = np.random.SeedSequence(settings.rng_seed).generate_state(settings.n_restarts)
    inits = []
    b = settings.lambda_bound
    for i, seed in enumerate(seeds):
        seed = int(seed)
        if i == 0:
            x0 = np.full(settings.n_segments, min(1.0, b))
        elif i == 1:
            x0 = np.zeros(settings.n_segments)
        else:
            x0 = np.random.default_rng(seed).uniform(-b, b, settings.n_segments)
        inits.append((seed, x0))
    return inits


def coordinate_scan(objective: Callable, x, value: float, settings: OptimizerSettings):
    """Best single-segment change over a uniform grid in [-B, B].

    Segments are scanned from last to first so the prefix cache of a
    SegmentObjective serves every evaluation. Returns (x, value), unchanged
    when no grid point improves on ``value``.
    """
    x = np.asarray(x, dtype=float)
    grid = np.linspace(-settings.lambda_bound, settings.lambda_bound, settings.scan_points)
    best_x, best = x, value
    for k in range(x.size - 1, -1, -1):
        for v in grid:
            z = x.copy()
            z[k] = v
            f = objective(z)
            if f > best:
                best_x, best = z, f
    return best_x, best


def ascend_with_scans(objective: Callable, init, settings: OptimizerSettings) -> AscentResult:
    """``ascend``, then up to ``max_scans`` rounds of coordinate scan and re-ascent.

    A round is kept only if the scan improves the converged value by more
    than 1e-4 relative. With ``scan_points == 0`` this is plain ``ascend``.
    """
    res = ascend(objective, init, settings)
    if settings.scan_points == 0:
        return res
    x, value, iters, trace = res.x, res.value, res.iterations, list(res.trace)
    for _ in range(settings.max_scans):
        z, f = coordinate_scan(objective, x, value, settings)
        if not f > value + 1e-4 * abs(value):
            break
        res = ascend(objective, z, settings)
        x, value, iters = res.x, res.value, iters + res.iterations
        trace.extend(res.trace)
    return AscentResult(x, value, iters, trace)


def _run_restart(args):
    objective, settings, index, seed, x0 = args
    res = ascend_with_scans(objective, x0, settings)
    log.info("restart %d: %.6g after %d iterations", index, res.value, res.iterations)
    return RestartRecord(index, seed, x0.tolist(), res.value, res.iterations, res.trace), res.x


def multi_start(
    objective: Callable,
    settings: OptimizerSettings = OptimizerSettings(),
    n_workers: int = 1,
    extra_inits=(),
) -> OptimizationResult:
    """Run ``ascend_with_scans`` from every restart and keep the best.

    ``extra_inits`` are further starting profiles, run after the seeded
    restarts with seed -1. Results do not depend on ``n_workers``: restarts
    are seeded up front and merged in index order.
    """
    starts = restart_inits(settings)
    for x0 in extra_inits:
        x0 = np.asarray(getattr(x0, "segments", x0), dtype=float)
        if x0.shape != (settings.n_segments,):
            raise ValueError(f"starting profile has {x0.size} segments, settings use {settings.n_segments}")
        starts.append((-1, x0))
    jobs = [(objective, settings, i, seed, x0) for i, (seed, x0) in enumerate(starts)]
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            outcomes = list(pool.map(_run_restart, jobs))
    else:
        outcomes = [_run_restart(job) for job in jobs]

    records = [rec for rec, _ in outcomes]
    best = max(range(len(outcomes)), key=lambda i: (records[i].final_objective, -i))
    best_x = outcomes[best][1]
    phase = None
    if hasattr(objective, "phase_offset"):
        phase = float(objective.phase_offset(best_x))
    return OptimizationResult(
        best_profile=ControlProfile(best_x),
        best_objective=records[best].final_objective,
        restart_records=records,
        settings=settings,
        phase_offset=phase,
    )

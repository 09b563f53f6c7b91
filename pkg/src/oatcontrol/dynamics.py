"""Evolution under H = chi Jz^2 + omega Jz + Omega(t) Jx with piecewise-constant control.

Time is measured in units of the total duration T (tau = t/T in [0, 1]), so
only the products chi*T, omega*T and Omega*T appear, and Fisher information
is reported as F/T^2. The control is Omega(t) = -Lambda(t) N chi / 2.

Alongside |psi> we carry |d psi/d omega>, which obeys

    d/dtau |dpsi> = -i H |dpsi> - i Jz |psi>,

and integrate both exactly within each constant segment in the eigenbasis of
the segment Hamiltonian.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .spin import DickeState, build_operators, m_values, rotate_vector


@dataclass(frozen=True)
class ModelParams:
    n_particles: int
    chi_T: float
    omega_T: float = 0.0

    def __post_init__(self):
        if int(self.n_particles) != self.n_particles or self.n_particles < 1:
            raise ValueError(f"n_particles must be a positive integer, got {self.n_particles!r}")
        if self.chi_T < 0:
            raise ValueError(f"chi_T must be >= 0, got {self.chi_T}")
        object.__setattr__(self, "n_particles", int(self.n_particles))
        object.__setattr__(self, "chi_T", float(self.chi_T))
        object.__setattr__(self, "omega_T", float(self.omega_T))

    def rabi_T(self, lambda_value: float) -> float:
        """Omega*T for a given Lambda."""
        return -lambda_value * self.n_particles * self.chi_T / 2


@dataclass(frozen=True)
class ControlProfile:
    """Lambda on equal segments of [0, 1] plus instantaneous Jx pulses.

    A pulse ``(tau_p, theta)`` is Omega(t) = theta * delta(t - tau_p), i.e. the
    unitary exp(-i theta Jx) applied at tau_p.
    """

    segments: np.ndarray
    pulses: tuple = ()

    def __post_init__(self):
        seg = np.array(self.segments, dtype=float).reshape(-1)
        if seg.size < 1:
            raise ValueError("a control profile needs at least one segment")
        if not np.all(np.isfinite(seg)):
            raise ValueError("segment values must be finite")
        seg.flags.writeable = False
        pulses = tuple((float(t), float(a)) for t, a in self.pulses)
        for t, _ in pulses:
            if not 0.0 <= t <= 1.0:
                raise ValueError(f"pulse time {t} outside [0, 1]")
        if any(pulses[i][0] > pulses[i + 1][0] for i in range(len(pulses) - 1)):
            raise ValueError("pulse times must be sorted")
        object.__setattr__(self, "segments", seg)
        object.__setattr__(self, "pulses", pulses)

    @classmethod
    def constant(cls, value: float, n_segments: int = 20, pulses=()) -> "ControlProfile":
        return cls(np.full(n_segments, float(value)), pulses)

    @property
    def n_segments(self) -> int:
        return self.segments.size

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.n_segments + 1) / self.n_segments

    def segment_index(self, tau: float) -> int:
        return min(int(tau * self.n_segments), self.n_segments - 1)

    def lambda_at(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        idx = np.minimum((tau * self.n_segments).astype(int), self.n_segments - 1)
        return self.segments[idx]

    def to_dict(self) -> dict:
        return {
            "segments": self.segments.tolist(),
            "pulses": [list(p) for p in self.pulses],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ControlProfile":
        return cls(data["segments"], tuple(tuple(p) for p in data.get("pulses", ())))

    def __eq__(self, other):
        if not isinstance(other, ControlProfile):
            return NotImplemented
        return np.array_equal(self.segments, other.segments) and self.pulses == other.pulses

    __hash__ = None


@dataclass
class Trajectory:
    n_particles: int
    times: np.ndarray
    states: np.ndarray  # (n_samples, N+1)
    deriv_states: np.ndarray  # (n_samples, N+1), unnormalized
    fq: np.ndarray  # F_Q / T^2
    f0: np.ndarray
    profile: ControlProfile | None = field(default=None, repr=False)

    def state_at(self, i: int) -> DickeState:
        return DickeState(self.n_particles, self.states[i])

    @property
    def final_state(self) -> DickeState:
        return self.state_at(-1)

    @property
    def final_deriv(self) -> np.ndarray:
        return self.deriv_states[-1]

    def index_of(self, tau: float) -> int:
        return int(np.argmin(np.abs(self.times - tau)))


def hamiltonian_bands(params: ModelParams, lambda_value: float):
    """Diagonal and off-diagonal of the (real, tridiagonal) Hamiltonian times T."""
    ops = build_operators(params.n_particles)
    m = ops.m
    diag = params.chi_T * m**2 + params.omega_T * m
    off = params.rabi_T(lambda_value) * ops.ladder
    return diag, off


def hamiltonian_matrix(params: ModelParams, lambda_value: float) -> np.ndarray:
    diag, off = hamiltonian_bands(params, lambda_value)
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


def _eigh_reflective(diag: np.ndarray, off: np.ndarray):
    """Eigensystem of a tridiagonal matrix symmetric under index reversal.

    Splits into even and odd blocks of roughly half size.
    """
    n = diag.size
    p = n // 2
    r2 = np.sqrt(2.0)
    if n % 2:
        even_d = diag[p:]
        even_o = np.concatenate(([r2 * off[p]], off[p + 1:]))
        odd_d = diag[p + 1:]
        odd_o = off[p + 1:]
        hi_e = np.arange(p, n)  # positions p+k, k = 0..p
        hi_o = np.arange(p + 1, n)
    else:
        even_d = diag[p:].copy()
        odd_d = diag[p:].copy()
        even_d[0] += off[p - 1]
        odd_d[0] -= off[p - 1]
        even_o = odd_o = off[p:]
        hi_e = hi_o = np.arange(p, n)
    ev, ue = _eigh_small(even_d, even_o)
    ov, uo = _eigh_small(odd_d, odd_o)

    vecs = np.zeros((n, n))
    ne = ev.size
    lo_e = n - 1 - hi_e
    lo_o = n - 1 - hi_o
    scale_e = np.full(hi_e.size, 1 / r2)
    if n % 2:
        scale_e[0] = 1.0  # centre site is its own mirror image
        vecs[hi_e, :ne] = ue * scale_e[:, None]
        vecs[lo_e[1:], :ne] = ue[1:] / r2
    else:
        vecs[hi_e, :ne] = ue / r2
        vecs[lo_e, :ne] = ue / r2
    vecs[hi_o, ne:] = uo / r2
    vecs[lo_o, ne:] = -uo / r2
    return np.concatenate((ev, ov)), vecs


def _eigh_small(d: np.ndarray, e: np.ndarray):
    if d.size == 1:
        return d.copy(), np.ones((1, 1))
    a = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    return np.linalg.eigh(a)


def _eigensystem(diag: np.ndarray, off: np.ndarray):
    """(energies, vectors, n_even); n_even is None unless the reflective split applied."""
    if diag.size >= 8 and np.array_equal(diag, diag[::-1]) and np.array_equal(off, off[::-1]):
        e, v = _eigh_reflective(diag, off)
        return e, v, (diag.size + 1) // 2
    if diag.size == 1:
        return diag.copy(), np.ones((1, 1)), None
    e, v = eigh_tridiagonal(diag, off)
    return e, v, None


def eigh_tridiag(diag: np.ndarray, off: np.ndarray):
    e, v, _ = _eigensystem(diag, off)
    return e, v


def _source_kernel(e_rows, e_cols, ph_rows, ph_cols, dt):
    """K_jk = (e^{-iE_j dt} - e^{-iE_k dt}) / (i (E_k - E_j)), diagonal limit dt e^{-iE dt}."""
    x = (e_cols[None, :] - e_rows[:, None]) * dt
    small = np.abs(x) < 1e-3
    with np.errstate(divide="ignore", invalid="ignore"):
        kernel = (ph_rows[:, None] - ph_cols[None, :]) / (1j * np.where(small, 1.0, x))
    kernel *= dt
    if small.any():
        # (1 - e^{-ix}) / (ix) by its Taylor series where the difference cancels
        ix = 1j * x[small]
        series = 1 - ix / 2 + ix**2 / 6 - ix**3 / 24 + ix**4 / 120
        rows = np.nonzero(small)[0]
        kernel[small] = ph_rows[rows] * dt * series
    return kernel


class SegmentGenerator:
    """Eigensystem of one constant-Lambda Hamiltonian; propagates (psi, dpsi).

    At omega = 0 the Hamiltonian commutes with the reflection m -> -m and Jz
    anticommutes with it, so Jz only connects even and odd eigenvectors. A
    state of definite parity keeps it, and its omega-derivative lives in the
    opposite sector; ``propagate(..., sector=s)`` uses only the half-size
    blocks in that case.
    """

    _MAX_STEPS = 8

    def __init__(self, params: ModelParams, lambda_value: float):
        diag, off = hamiltonian_bands(params, lambda_value)
        self.energies, vecs, self.n_even = _eigensystem(diag, off)
        m = m_values(params.n_particles)
        ne = self.n_even
        # Jz in the eigenbasis (only the even-odd block when reflective)
        if ne is None:
            self.jz_eig = vecs.T @ (m[:, None] * vecs)
        else:
            self.jz_eig = vecs[:, :ne].T @ (m[:, None] * vecs[:, ne:])
            halves = (vecs[:, :ne], vecs[:, ne:])
            self.sector_vecs = tuple((np.ascontiguousarray(v), np.ascontiguousarray(v.T)) for v in halves)
        self.vecs = vecs
        self.vecs_t = np.ascontiguousarray(vecs.T)
        self._steps: dict[float, tuple] = {}

    def _step(self, dt: float):
        hit = self._steps.get(dt)
        if hit is not None:
            return hit
        e = self.energies
        phases = np.exp(-1j * e * dt)
        ne = self.n_even
        if ne is None:
            entry = (phases, -1j * self.jz_eig * _source_kernel(e, e, phases, phases, dt), None)
        else:
            # the kernel is symmetric, so the odd-even block is the transpose
            block = -1j * self.jz_eig * _source_kernel(e[:ne], e[ne:], phases[:ne], phases[ne:], dt)
            # blocks[s] maps sector-s amplitudes to the opposite sector
            entry = (phases, None, (np.ascontiguousarray(block.T), block))
        if len(self._steps) >= self._MAX_STEPS:
            self._steps.clear()
        self._steps[dt] = entry
        return entry

    def step(self, dt: float):
        """Phases e^{-iE dt} and the matrix mapping psi to the source term of dpsi."""
        phases, source, blocks = self._step(dt)
        if source is None:
            ne = self.n_even
            source = np.zeros((phases.size, phases.size), dtype=complex)
            source[:ne, ne:] = blocks[1]
            source[ne:, :ne] = blocks[0]
        return phases, source

    @staticmethod
    def _rotate(mat: np.ndarray, z: np.ndarray) -> np.ndarray:
        # real matrix on complex data: act on the interleaved (re, im) columns
        z = np.ascontiguousarray(z, dtype=complex)
        out = mat @ z.view(float).reshape(z.shape[0], -1)
        return out.view(complex).reshape((mat.shape[0],) + z.shape[1:])

    def propagate(self, psi: np.ndarray, dpsi: np.ndarray, dt: float, sector: int | None = None):
        """Advance by ``dt``. ``sector`` (0 even, 1 odd) asserts the parity of psi."""
        if dt == 0:
            return psi, dpsi
        if sector is not None and self.n_even is not None and psi.ndim == 1:
            return self._propagate_sector(psi, dpsi, dt, sector)
        phases, source = self.step(dt)
        if psi.ndim > 1:
            a = self._rotate(self.vecs_t, psi)
            b = self._rotate(self.vecs_t, dpsi)
            phases = phases[:, None]
            return self._rotate(self.vecs, phases * a), self._rotate(self.vecs, phases * b + source @ a)
        ab = np.empty((psi.size, 2), dtype=complex)
        ab[:, 0] = psi
        ab[:, 1] = dpsi
        ab = self._rotate(self.vecs_t, ab)
        a = ab[:, 0].copy()
        ab *= phases[:, None]
        ab[:, 1] += source @ a
        out = self._rotate(self.vecs, ab)
        return out[:, 0], out[:, 1]

    def _propagate_sector(self, psi, dpsi, dt, sector):
        phases, _, blocks = self._step(dt)
        ne = self.n_even
        own, other = self.sector_vecs[sector], self.sector_vecs[1 - sector]
        if sector == 0:
            p_own, p_other = phases[:ne], phases[ne:]
        else:
            p_own, p_other = phases[ne:], phases[:ne]
        a = self._rotate(own[1], psi)
        b = p_other * self._rotate(other[1], dpsi) + blocks[sector] @ a
        return self._rotate(own[0], p_own * a), self._rotate(other[0], b)


def parity_sector(psi, dpsi=None, tol: float = 1e-12) -> int | None:
    """0 if psi is even under m -> -m, 1 if odd, None otherwise.

    ``dpsi`` (if given) must have the opposite parity, or be zero.
    """
    psi = np.asarray(psi)
    if psi.ndim != 1:
        return None
    for sector, sign in ((0, 1.0), (1, -1.0)):
        if np.max(np.abs(psi - sign * psi[::-1])) <= tol:
            if dpsi is None or np.max(np.abs(dpsi + sign * dpsi[::-1]), initial=0.0) <= tol:
                return sector
    return None


@lru_cache(maxsize=160)
def segment_generator(params: ModelParams, lambda_value: float) -> SegmentGenerator:
    return SegmentGenerator(params, float(lambda_value))


def evolve_segment(state: DickeState, deriv, params: ModelParams, lambda_value: float, duration: float):
    """Propagate a state and its omega-derivative through one constant segment."""
    if duration < 0:
        raise ValueError("duration must be non-negative")
    deriv = np.asarray(deriv, dtype=complex)
    if duration == 0:
        return state, deriv
    gen = segment_generator(params, float(lambda_value))
    sector = parity_sector(state.amplitudes, deriv) if params.omega_T == 0 else None
    psi, dpsi = gen.propagate(state.amplitudes, deriv, duration, sector)
    return DickeState(state.n_particles, psi), dpsi


def apply_pulse(psi: np.ndarray, dpsi: np.ndarray, angle: float):
    """Instantaneous Hamiltonian pulse exp(-i angle Jx)."""
    return rotate_vector(psi, "x", -angle), rotate_vector(dpsi, "x", -angle)


def qfi_of(state, deriv) -> float:
    """4 (<dpsi|dpsi> - |<psi|dpsi>|^2) for a normalized pure state."""
    psi = np.asarray(getattr(state, "amplitudes", state))
    d = np.asarray(deriv)
    val = 4 * (np.vdot(d, d).real - abs(np.vdot(psi, d)) ** 2)
    return float(max(val, 0.0))


def f0_of(state) -> float:
    psi = np.asarray(getattr(state, "amplitudes", state))
    m = m_values(psi.size - 1)
    p = np.abs(psi) ** 2
    mean = p @ m
    return float(max(4 * (p @ m**2 - mean**2), 0.0))


def _stops(profile: ControlProfile, extra=()) -> np.ndarray:
    pts = [profile.edges, np.array([t for t, _ in profile.pulses]), np.asarray(extra, dtype=float)]
    return np.unique(np.concatenate(pts))


def endpoint(initial: DickeState, params: ModelParams, profile: ControlProfile):
    """(psi(1), dpsi(1)) with no intermediate sampling."""
    psi = initial.amplitudes.copy()
    dpsi = np.zeros_like(psi)
    sector = parity_sector(psi) if params.omega_T == 0 else None
    pulses = list(profile.pulses)
    t = 0.0
    for stop in _stops(profile):
        if stop > t:
            k = profile.segment_index(0.5 * (t + stop))
            gen = segment_generator(params, float(profile.segments[k]))
            psi, dpsi = gen.propagate(psi, dpsi, stop - t, sector)
            t = stop
        while pulses and pulses[0][0] == stop:
            psi, dpsi = apply_pulse(psi, dpsi, pulses.pop(0)[1])
    return psi, dpsi


def sample_times(n_samples: int) -> np.ndarray:
    if n_samples < 2:
        raise ValueError("need at least 2 samples (tau = 0 and tau = 1)")
    return np.arange(n_samples) / (n_samples - 1)


def evolve_profile(
    initial: DickeState,
    params: ModelParams,
    profile: ControlProfile,
    n_samples: int = 201,
    times=None,
) -> Trajectory:
    """Evolve from tau=0 to 1 recording state, derivative, F_Q/T^2 and f0.

    Samples are taken on the uniform grid of ``n_samples`` points unless
    explicit ``times`` in [0, 1] are given. Samples are right-continuous: a
    pulse at a sample time is applied before that sample is recorded.
    """
    if initial.n_particles != params.n_particles:
        raise ValueError("initial state and params disagree on N")
    if times is None:
        times = sample_times(n_samples)
    else:
        times = np.unique(np.asarray(times, dtype=float))
        if times.size == 0 or times[0] < 0 or times[-1] > 1:
            raise ValueError("sample times must lie in [0, 1]")
        n_samples = times.size
    dim = params.n_particles + 1
    states = np.empty((n_samples, dim), dtype=complex)
    derivs = np.empty((n_samples, dim), dtype=complex)

    psi = initial.amplitudes.copy()
    dpsi = np.zeros_like(psi)
    sector = parity_sector(psi) if params.omega_T == 0 else None
    pulses = list(profile.pulses)
    sample_idx = {t: i for i, t in enumerate(times)}
    t = 0.0
    for stop in _stops(profile, times):
        if stop > t:
            k = profile.segment_index(0.5 * (t + stop))
            gen = segment_generator(params, float(profile.segments[k]))
            psi, dpsi = gen.propagate(psi, dpsi, stop - t, sector)
            t = stop
        while pulses and pulses[0][0] == stop:
            psi, dpsi = apply_pulse(psi, dpsi, pulses.pop(0)[1])
        i = sample_idx.get(stop)
        if i is not None:
            states[i] = psi
            derivs[i] = dpsi

    fq = 4 * (
        np.einsum("ij,ij->i", derivs.conj(), derivs).real
        - np.abs(np.einsum("ij,ij->i", states.conj(), derivs)) ** 2
    )
    m = m_values(params.n_particles)
    p = np.abs(states) ** 2
    f0 = 4 * (p @ m**2 - (p @ m) ** 2)
    return Trajectory(
        params.n_particles,
        times,
        states,
        derivs,
        np.maximum(fq, 0.0),
        np.clip(f0, 0.0, None),
        profile,
    )

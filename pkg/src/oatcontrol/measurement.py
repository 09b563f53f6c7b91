"""Jx-basis readout, Gaussian detection noise and classical Fisher information.

Outcome labels: |m_x> = exp(i pi/2 Jy)|m>, so the sensing input state
``x_coherent_state`` is the outcome m = +N/2 with certainty. Under the standard
spin matrices |m_x> is the Jx eigenstate with eigenvalue -m; the relabelling is
a reflection of the outcome axis and changes no Fisher information.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy.optimize import minimize_scalar

from .spin import DickeState, m_values, rotation_matrix

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class MeasurementDistribution:
    probs: np.ndarray
    dprobs: np.ndarray

    @property
    def n_particles(self) -> int:
        return self.probs.size - 1

    @property
    def m(self) -> np.ndarray:
        return m_values(self.n_particles)


@dataclass(frozen=True)
class NoiseModel:
    sigma: float
    kernel: np.ndarray

    @property
    def n_particles(self) -> int:
        return self.kernel.shape[0] - 1


@lru_cache(maxsize=16)
def _readout_matrix(n_particles: int) -> np.ndarray:
    r = rotation_matrix(n_particles, "y", -np.pi / 2)
    r.flags.writeable = False
    return r


def build_noise_kernel(n_particles: int, sigma: float) -> NoiseModel:
    """Gamma[m, m'] = exp(-(m - m')^2 / 2 sigma^2), each column normalized over m."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    m = m_values(n_particles)
    if sigma == 0:
        kernel = np.eye(m.size)
    else:
        # scale before squaring so tiny sigma gives the identity, not 0/0
        with np.errstate(over="ignore"):
            z = (m[:, None] - m[None, :]) / sigma
            kernel = np.exp(-0.5 * z * z)
        kernel /= kernel.sum(axis=0, keepdims=True)
    kernel.flags.writeable = False
    return NoiseModel(float(sigma), kernel)


def jx_distribution(state, deriv, phase_offset: float = 0.0) -> MeasurementDistribution:
    """P_m and dP_m/domega after exp(i phi Jz) and a Jx-basis projection."""
    psi = np.asarray(getattr(state, "amplitudes", state), dtype=complex)
    dpsi = np.asarray(deriv, dtype=complex)
    n = psi.size - 1
    if phase_offset:
        ph = np.exp(1j * phase_offset * m_values(n))
        psi, dpsi = ph * psi, ph * dpsi
    r = _readout_matrix(n)
    amps = r @ psi
    damps = r @ dpsi
    probs = np.abs(amps) ** 2
    dprobs = 2 * (amps.conj() * damps).real
    return MeasurementDistribution(probs, dprobs)


def apply_noise(dist: MeasurementDistribution, noise: NoiseModel) -> MeasurementDistribution:
    if noise.kernel.shape[1] != dist.probs.size:
        raise ValueError(
            f"kernel is {noise.kernel.shape}, distribution has {dist.probs.size} outcomes"
        )
    return MeasurementDistribution(noise.kernel @ dist.probs, noise.kernel @ dist.dprobs)


def _fisher_sum(probs: np.ndarray, dprobs: np.ndarray, floor: float = PROB_FLOOR):
    keep = probs > floor
    safe = np.where(keep, probs, 1.0)
    return np.sum(np.where(keep, dprobs**2 / safe, 0.0), axis=0)


def classical_fisher(dist: MeasurementDistribution, floor: float = PROB_FLOOR) -> float:
    return float(_fisher_sum(dist.probs, dist.dprobs, floor))


def fisher_at_phase(state, deriv, phase_offset: float, noise: NoiseModel | None = None) -> float:
    """F_C of the Jx readout at one fixed phase offset."""
    dist = jx_distribution(state, deriv, phase_offset)
    if noise is not None and noise.sigma > 0:
        dist = apply_noise(dist, noise)
    return classical_fisher(dist)


class PhaseScan:
    """F_C as a function of the pre-measurement phase offset for one endpoint."""

    def __init__(self, state, deriv, noise: NoiseModel | None):
        psi = np.asarray(getattr(state, "amplitudes", state), dtype=complex)
        dpsi = np.asarray(deriv, dtype=complex)
        n = psi.size - 1
        r = _readout_matrix(n)
        self.m = m_values(n)
        self.a = r * psi[None, :]
        self.da = r * dpsi[None, :]
        self.kernel = None if noise is None or noise.sigma == 0 else noise.kernel

    def _fisher(self, amps, damps) -> np.ndarray:
        probs = amps.real**2 + amps.imag**2
        dprobs = 2 * (amps.real * damps.real + amps.imag * damps.imag)
        if self.kernel is not None:
            cols = probs.shape[-1]
            both = self.kernel @ np.concatenate((probs, dprobs), axis=-1)
            probs, dprobs = both[:, :cols], both[:, cols:]
        return _fisher_sum(probs, dprobs)

    def __call__(self, phis) -> np.ndarray:
        phis = np.atleast_1d(np.asarray(phis, dtype=float))
        ph = np.exp(1j * np.outer(self.m, phis))
        return self._fisher(self.a @ ph, self.da @ ph)

    def grid(self, n_grid: int) -> tuple[np.ndarray, np.ndarray]:
        """(phis, F_C) on the cell centres phi_q = -pi + 2 pi (q + 1/2) / n_grid.

        Cell centres avoid phi = 0 and phi = -pi, where symmetric states have
        0/0 outcomes and F_C drops to zero right next to its supremum. The
        amplitudes are trigonometric polynomials in phi with frequencies
        m = m_0 + j, so the grid is one inverse FFT per outcome. The common
        factor exp(i m_0 phi) drops out of P and dP.
        """
        step = 2 * np.pi / n_grid
        phis = -np.pi + step * (np.arange(n_grid) + 0.5)
        dim = self.m.size
        if n_grid < dim:
            return phis, self(phis)
        shift = np.exp(1j * phis[0] * self.m)
        coeffs = np.stack((self.a, self.da)) * shift
        vals = sfft.ifft(coeffs, n=n_grid, axis=-1, norm="forward")
        return phis, self._fisher(vals[0], vals[1])


def optimize_phase_offset(
    state,
    deriv,
    noise: NoiseModel | None = None,
    n_grid: int = 256,
    xtol: float = 1e-6,
):
    """Maximize F_C over phi in [-pi, pi): grid scan, then bounded refinement.

    Returns ``(phi, fc)``.
    """
    scan = PhaseScan(state, deriv, noise)
    grid, values = scan.grid(n_grid)
    i = int(np.argmax(values))
    best_phi, best_fc = float(grid[i]), float(values[i])
    if not best_fc > 0:
        return best_phi, max(best_fc, 0.0)
    step = 2 * np.pi / n_grid
    res = minimize_scalar(
        lambda p: -float(scan(p)[0]),
        bounds=(best_phi - step, best_phi + step),
        method="bounded",
        options={"xatol": xtol},
    )
    if -res.fun > best_fc:
        best_phi, best_fc = float(res.x), float(-res.fun)
    best_phi = (best_phi + np.pi) % (2 * np.pi) - np.pi
    return best_phi, best_fc

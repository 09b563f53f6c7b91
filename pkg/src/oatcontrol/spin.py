"""Collective spin states and operators in the Dicke basis.

N bosons in two modes are described by spin j = N/2. Amplitude index
``k = m + N/2`` runs over ``m = -N/2 ... N/2`` in ascending order, so ``Jz`` is
``diag(m)`` and ``Jx``, ``Jy`` are tridiagonal with the usual ladder elements.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

NORM_TOL = 1e-10


@dataclass(frozen=True)
class CollectiveOperators:
    n_particles: int
    jx: np.ndarray
    jy: np.ndarray
    jz: np.ndarray

    @property
    def m(self) -> np.ndarray:
        return np.diag(self.jz).real

    @property
    def ladder(self) -> np.ndarray:
        """Off-diagonal of Jx (length N); ``<m+1|Jx|m>``."""
        return np.diag(self.jx, -1).real

    def axis(self, name: str) -> np.ndarray:
        try:
            return {"x": self.jx, "y": self.jy, "z": self.jz}[name]
        except KeyError:
            raise ValueError(f"unknown axis {name!r}; expected x, y or z") from None


@dataclass(frozen=True)
class DickeState:
    n_particles: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape != (self.n_particles + 1,):
            raise ValueError(
                f"expected {self.n_particles + 1} amplitudes, got shape {amps.shape}"
            )
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def m(self) -> np.ndarray:
        return m_values(self.n_particles)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "DickeState":
        return DickeState(self.n_particles, self.amplitudes / self.norm())


@dataclass(frozen=True)
class BlochDirection:
    theta: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= np.pi:
            raise ValueError(f"theta={self.theta} outside [0, pi]")
        if not 0.0 <= self.phi < 2 * np.pi:
            raise ValueError(f"phi={self.phi} outside [0, 2pi)")


class Moments(NamedTuple):
    mean_x: float
    mean_y: float
    mean_z: float
    var_x: float
    var_y: float
    var_z: float


def m_values(n_particles: int) -> np.ndarray:
    return np.arange(n_particles + 1) - n_particles / 2


def _check_n(n_particles) -> int:
    if int(n_particles) != n_particles or n_particles < 1:
        raise ValueError(f"n_particles must be a positive integer, got {n_particles!r}")
    return int(n_particles)


@lru_cache(maxsize=32)
def build_operators(n_particles: int) -> CollectiveOperators:
    n = _check_n(n_particles)
    j = n / 2
    m = m_values(n)
    # <m+1|J+|m> = sqrt((j - m)(j + m + 1))
    up = np.sqrt((j - m[:-1]) * (j + m[:-1] + 1))
    jplus = np.diag(up, -1)
    jx = (jplus + jplus.T) / 2
    jy = (jplus - jplus.T) / 2j
    jz = np.diag(m)
    for a in (jx, jy, jz):
        a.flags.writeable = False
    return CollectiveOperators(n, jx, jy, jz)


@lru_cache(maxsize=64)
def _axis_eigh(n_particles: int, axis: str):
    ops = build_operators(n_particles)
    if axis == "z":
        return ops.m.copy(), None
    vals, vecs = np.linalg.eigh(ops.axis(axis))
    vals.flags.writeable = False
    vecs.flags.writeable = False
    return vals, vecs


def rotation_matrix(n_particles: int, axis: str, angle: float) -> np.ndarray:
    """Dense unitary ``exp(i * angle * J_axis)``."""
    vals, vecs = _axis_eigh(_check_n(n_particles), axis)
    phases = np.exp(1j * angle * vals)
    if vecs is None:
        return np.diag(phases)
    return (vecs * phases) @ vecs.conj().T


def rotate_vector(vec: np.ndarray, axis: str, angle: float) -> np.ndarray:
    """Apply ``exp(i * angle * J_axis)`` to a raw amplitude vector (or columns)."""
    n = vec.shape[0] - 1
    if axis not in ("x", "y", "z"):
        raise ValueError(f"unknown axis {axis!r}; expected x, y or z")
    vals, vecs = _axis_eigh(n, axis)
    phases = np.exp(1j * angle * vals)
    if vecs is None:
        return phases.reshape((-1,) + (1,) * (vec.ndim - 1)) * vec
    coeffs = vecs.conj().T @ vec
    return vecs @ (phases.reshape((-1,) + (1,) * (vec.ndim - 1)) * coeffs)


def rotate(state: DickeState, axis: str, angle: float) -> DickeState:
    """Return ``exp(i * angle * J_axis)|state>``.

    Note the sign: a positive angle puts ``+i`` in the exponent. Hamiltonian
    pulses of area theta act as ``rotate(state, "x", -theta)``.
    """
    if angle == 0:
        return state
    return DickeState(state.n_particles, rotate_vector(state.amplitudes, axis, angle))


def jz_eigenstate(n_particles: int, m: float) -> DickeState:
    n = _check_n(n_particles)
    k = m + n / 2
    if k != int(k) or not 0 <= k <= n:
        raise ValueError(f"m={m} is not in {{-N/2, ..., N/2}} for N={n}")
    amps = np.zeros(n + 1, dtype=complex)
    amps[int(k)] = 1.0
    return DickeState(n, amps)


def coherent_state(n_particles: int, theta: float, phi: float) -> DickeState:
    """``exp(i phi Jz) exp(i theta Jy)|N/2>``."""
    top = jz_eigenstate(n_particles, n_particles / 2)
    return rotate(rotate(top, "y", theta), "z", phi)


def x_coherent_state(n_particles: int) -> DickeState:
    """The sensing input ``exp(i pi/2 Jy)|N/2>``, an extremal Jx eigenstate.

    With the standard ladder matrices its mean spin is ``<Jx> = -N/2``.
    """
    return coherent_state(n_particles, np.pi / 2, 0.0)


def expectation(vec: np.ndarray, op: np.ndarray) -> complex:
    return np.vdot(vec, op @ vec)


def moments(state: DickeState, ops: CollectiveOperators | None = None) -> Moments:
    if ops is None:
        ops = build_operators(state.n_particles)
    psi = state.amplitudes
    means, variances = [], []
    for op in (ops.jx, ops.jy, ops.jz):
        v = op @ psi
        mean = np.vdot(psi, v).real
        var = np.vdot(v, v).real - mean**2
        means.append(float(mean))
        variances.append(float(max(var, 0.0)))
    return Moments(*means, *variances)


@lru_cache(maxsize=16)
def _coherent_columns(n_particles: int, thetas: tuple) -> np.ndarray:
    top = np.zeros(n_particles + 1, dtype=complex)
    top[-1] = 1.0
    vals, vecs = _axis_eigh(n_particles, "y")
    coeffs = vecs.conj().T @ top
    phases = np.exp(1j * np.outer(vals, np.asarray(thetas)))
    cols = vecs @ (phases * coeffs[:, None])  # (N+1, n_theta)
    cols.flags.writeable = False
    return cols


def husimi_values(state: DickeState, thetas, phis) -> np.ndarray:
    """Q on the outer-product grid, shape ``(len(thetas), len(phis))``."""
    thetas = tuple(float(t) for t in np.atleast_1d(thetas))
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    cols = _coherent_columns(state.n_particles, thetas)
    m = state.m
    # <alpha(theta, phi)|psi> = sum_m conj(c_m(theta)) e^{-i phi m} psi_m
    weighted = cols.conj().T * state.amplitudes[None, :]
    overlaps = weighted @ np.exp(-1j * np.outer(m, phis))
    return np.clip(np.abs(overlaps) ** 2, 0.0, 1.0)


def husimi_q(state: DickeState, grid: Sequence[BlochDirection]) -> np.ndarray:
    """Q at an arbitrary list of directions."""
    out = np.empty(len(grid))
    for i, d in enumerate(grid):
        out[i] = husimi_values(state, [d.theta], [d.phi])[0, 0]
    return out


@dataclass(frozen=True)
class HusimiGrid:
    theta: np.ndarray
    phi: np.ndarray
    values: np.ndarray  # (n_theta, n_phi)

    def normalization(self, n_particles: int) -> float:
        """(2j+1)/(4 pi) times the integral of Q over the sphere (midpoint rule)."""
        dtheta = np.pi / len(self.theta)
        dphi = 2 * np.pi / len(self.phi)
        integral = np.sum(self.values * np.sin(self.theta)[:, None]) * dtheta * dphi
        return float((n_particles + 1) / (4 * np.pi) * integral)


def husimi_grid(state: DickeState, n_theta: int = 100, n_phi: int = 100) -> HusimiGrid:
    theta = (np.arange(n_theta) + 0.5) * np.pi / n_theta
    phi = np.arange(n_phi) * 2 * np.pi / n_phi
    return HusimiGrid(theta, phi, husimi_values(state, theta, phi))

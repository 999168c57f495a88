"""Gaussian-state engine in shot-noise units.

Quadratures are ordered ``(x1, p1, x2, p2, ...)`` and the vacuum covariance
is the identity, so every variance below is already expressed relative to
shot noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

_OMEGA_1 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def symplectic_form(n_modes: int) -> np.ndarray:
    """Block-diagonal symplectic form with ``[[0, 1], [-1, 0]]`` blocks."""
    return np.kron(np.eye(n_modes), _OMEGA_1)


def rotation(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s], [s, c]])


def _quad_indices(modes: Sequence[int]) -> list[int]:
    return [i for m in modes for i in (2 * m, 2 * m + 1)]


@dataclass
class GaussianState:
    """First and second moments of an ``n_modes`` Gaussian state."""

    n_modes: int
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError(f"n_modes must be positive, got {self.n_modes}")
        self.mean = np.asarray(self.mean, dtype=float).reshape(2 * self.n_modes)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (2 * self.n_modes, 2 * self.n_modes):
            raise ValueError(f"cov has shape {cov.shape}, expected {(2 * self.n_modes,) * 2}")
        self.cov = 0.5 * (cov + cov.T)

    def copy(self) -> "GaussianState":
        return GaussianState(self.n_modes, self.mean.copy(), self.cov.copy())

    def check_mode(self, mode: int) -> None:
        if not 0 <= mode < self.n_modes:
            raise IndexError(f"mode {mode} out of range for {self.n_modes}-mode state")

    def block(self, mode: int) -> np.ndarray:
        """2x2 covariance block of one mode."""
        self.check_mode(mode)
        i = 2 * mode
        return self.cov[i:i + 2, i:i + 2]

    def cross_block(self, mode_1: int, mode_2: int) -> np.ndarray:
        self.check_mode(mode_1)
        self.check_mode(mode_2)
        i, j = 2 * mode_1, 2 * mode_2
        return self.cov[i:i + 2, j:j + 2]

    def reduced(self, modes: Sequence[int]) -> "GaussianState":
        for m in modes:
            self.check_mode(m)
        idx = _quad_indices(modes)
        return GaussianState(len(modes), self.mean[idx], self.cov[np.ix_(idx, idx)])

    def uncertainty_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of ``cov + i*Omega``; all non-negative for a physical state."""
        return np.linalg.eigvalsh(self.cov + 1j * symplectic_form(self.n_modes))

    def is_physical(self, atol: float = 1e-9) -> bool:
        return bool(np.all(self.uncertainty_eigenvalues() >= -atol))

    def photon_excess(self) -> float:
        """``trace(cov) - 2N``; zero for vacuum, conserved by passive optics."""
        return float(np.trace(self.cov) - 2 * self.n_modes)


def vacuum(n_modes: int) -> GaussianState:
    if n_modes < 1:
        raise ValueError(f"n_modes must be positive, got {n_modes}")
    return GaussianState(n_modes, np.zeros(2 * n_modes), np.eye(2 * n_modes))


@dataclass(frozen=True)
class SymplecticOp:
    """A symplectic matrix acting on an ordered subset of modes."""

    matrix: np.ndarray
    target_modes: tuple[int, ...]

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        n = len(self.target_modes)
        if m.shape != (2 * n, 2 * n):
            raise ValueError(f"matrix shape {m.shape} does not match {n} target modes")
        if len(set(self.target_modes)) != n:
            raise ValueError("target modes must be distinct")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "target_modes", tuple(int(t) for t in self.target_modes))

    def symplectic_error(self) -> float:
        """Max-norm of ``S Omega S^T - Omega``."""
        omega = symplectic_form(len(self.target_modes))
        return float(np.max(np.abs(self.matrix @ omega @ self.matrix.T - omega)))

    def apply(self, state: GaussianState) -> GaussianState:
        for m in self.target_modes:
            state.check_mode(m)
        idx = _quad_indices(self.target_modes)
        S = self.matrix
        mean = state.mean.copy()
        mean[idx] = S @ mean[idx]
        cov = state.cov.copy()
        cov[idx, :] = S @ cov[idx, :]
        cov[:, idx] = cov[:, idx] @ S.T
        return GaussianState(state.n_modes, mean, cov)


def squeeze_op(mode: int, r: float, angle: float = 0.0) -> SymplecticOp:
    """Squeezer that reduces the quadrature at ``angle`` by ``exp(-r)`` in amplitude."""
    if r < 0:
        raise ValueError(f"squeezing parameter must be non-negative, got {r}")
    v = np.array([np.cos(angle), np.sin(angle)])
    w = np.array([-np.sin(angle), np.cos(angle)])
    S = np.exp(-r) * np.outer(v, v) + np.exp(r) * np.outer(w, w)
    return SymplecticOp(S, (mode,))


def phase_shift_op(mode: int, phi: float) -> SymplecticOp:
    return SymplecticOp(rotation(phi), (mode,))


def beamsplitter_op(mode_a: int, mode_b: int, sr: float) -> SymplecticOp:
    """Real orthogonal coupler; ``sr`` is the cross-coupled power fraction."""
    if mode_a == mode_b:
        raise ValueError("beamsplitter needs two distinct modes")
    if not 0.0 <= sr <= 1.0:
        raise ValueError(f"splitting ratio must lie in [0, 1], got {sr}")
    t, s = np.sqrt(1.0 - sr), np.sqrt(sr)
    eye = np.eye(2)
    S = np.block([[t * eye, s * eye], [-s * eye, t * eye]])
    return SymplecticOp(S, (mode_a, mode_b))


def squeeze(state: GaussianState, mode: int, r: float, angle: float = 0.0) -> GaussianState:
    return squeeze_op(mode, r, angle).apply(state)


def phase_shift(state: GaussianState, mode: int, phi: float) -> GaussianState:
    """Rotate a mode's quadrature plane so that ``V_new(theta) = V_old(theta - phi)``."""
    return phase_shift_op(mode, phi).apply(state)


def beamsplitter(state: GaussianState, mode_a: int, mode_b: int, sr: float) -> GaussianState:
    return beamsplitter_op(mode_a, mode_b, sr).apply(state)


def loss(state: GaussianState, mode: int, eta: float) -> GaussianState:
    """Pure-loss channel of transmissivity ``eta`` on one mode."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmissivity must lie in [0, 1], got {eta}")
    state.check_mode(mode)
    idx = _quad_indices([mode])
    g = np.sqrt(eta)
    mean = state.mean.copy()
    mean[idx] *= g
    cov = state.cov.copy()
    cov[idx, :] *= g
    cov[:, idx] *= g
    cov[np.ix_(idx, idx)] += (1.0 - eta) * np.eye(2)
    return GaussianState(state.n_modes, mean, cov)


def _direction(theta) -> np.ndarray:
    return np.array([np.cos(theta), np.sin(theta)])


def quadrature_variance(state: GaussianState, mode: int, theta: float) -> float:
    v = _direction(theta)
    return float(v @ state.block(mode) @ v)


def quadrature_mean(state: GaussianState, mode: int, theta: float) -> float:
    state.check_mode(mode)
    return float(_direction(theta) @ state.mean[2 * mode:2 * mode + 2])


def joint_quadrature_variance(state: GaussianState, mode_1: int, mode_2: int,
                              theta_1: float, theta_2: float, sign: int = +1) -> float:
    """Variance of ``(X1(theta_1) + sign * X2(theta_2)) / sqrt(2)``."""
    if mode_1 == mode_2:
        raise ValueError("joint quadrature needs two distinct modes")
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    v1, v2 = _direction(theta_1), _direction(theta_2)
    var1 = v1 @ state.block(mode_1) @ v1
    var2 = v2 @ state.block(mode_2) @ v2
    c12 = v1 @ state.cross_block(mode_1, mode_2) @ v2
    return float(0.5 * (var1 + var2 + 2 * sign * c12))


def sample_quadrature(state: GaussianState, mode: int, theta: float,
                      rng: np.random.Generator, size=None):
    """Homodyne outcome(s) of the quadrature at ``theta``."""
    mu = quadrature_mean(state, mode, theta)
    sd = np.sqrt(max(quadrature_variance(state, mode, theta), 0.0))
    return mu + sd * rng.standard_normal(size)

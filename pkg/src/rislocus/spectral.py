"""Snapshot covariance and pseudo-spectrum estimators (Bartlett, Capon, MUSIC, 2D MUSIC)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arraygeom import ArrayGeometry, CarrierSpec, steering_far
from .pattern import Spectrum, local_maxima


class SingularCovarianceError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class Covariance:
    R: np.ndarray
    snapshots_used: int

    @property
    def m(self) -> int:
        return self.R.shape[0]


@dataclass(frozen=True, eq=False)
class NoiseSubspace:
    U_n: np.ndarray
    K: int


def sample_covariance(snapshots: np.ndarray) -> Covariance:
    """(1/T) X X^H for X of shape (M, T)."""
    x = np.atleast_2d(np.asarray(snapshots))
    if x.shape[1] < 1:
        raise ValueError("need at least one snapshot")
    r = x @ x.conj().T / x.shape[1]
    return Covariance((r + r.conj().T) / 2, x.shape[1])


def hermitian_eig(R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a Hermitian matrix, eigenvalues descending."""
    w, v = np.linalg.eigh((R + R.conj().T) / 2)
    order = np.argsort(w)[::-1]
    return w[order], v[:, order]


def noise_subspace(R: np.ndarray, K: int) -> NoiseSubspace:
    m = R.shape[0]
    if not 1 <= K < m:
        raise ValueError(f"source count K={K} must satisfy 1 <= K < {m}")
    _, v = hermitian_eig(R)
    return NoiseSubspace(v[:, K:], K)


def _as_matrix(R) -> np.ndarray:
    return R.R if isinstance(R, Covariance) else np.asarray(R)


def _check(R: np.ndarray, steering: np.ndarray):
    if steering.ndim != 2 or steering.shape[1] != R.shape[0]:
        raise ValueError(f"steering rows must have length {R.shape[0]}")


def bartlett(R, steering: np.ndarray, grid) -> Spectrum:
    """a^H R a for each steering row."""
    R = _as_matrix(R)
    _check(R, steering)
    vals = np.einsum("gm,mn,gn->g", steering.conj(), R, steering).real
    return Spectrum(np.asarray(grid), np.maximum(vals, 0.0))


def capon(R, steering: np.ndarray, grid, loading: float | None = None) -> Spectrum:
    """1 / (a^H (R + eps I)^-1 a); default eps = 1e-6 trace(R)/M."""
    R = _as_matrix(R)
    _check(R, steering)
    m = R.shape[0]
    eps = 1e-6 * np.trace(R).real / m if loading is None else loading
    Rl = R + eps * np.eye(m)
    if np.linalg.cond(Rl) > 1e12:
        raise SingularCovarianceError("covariance is singular even after diagonal loading")
    Ri = np.linalg.inv(Rl)
    den = np.einsum("gm,mn,gn->g", steering.conj(), Ri, steering).real
    return Spectrum(np.asarray(grid), 1.0 / den)


def _music_values(U_n: np.ndarray, steering: np.ndarray) -> np.ndarray:
    proj = steering.conj() @ U_n
    den = np.sum(np.abs(proj) ** 2, axis=1)
    floor = np.finfo(float).eps * np.sum(np.abs(steering) ** 2, axis=1)
    return 1.0 / np.maximum(den, floor)


def music(R, K: int, steering: np.ndarray, grid) -> Spectrum:
    """1 / (a^H U_n U_n^H a) with U_n the M-K weakest eigenvectors."""
    R = _as_matrix(R)
    _check(R, steering)
    ns = noise_subspace(R, K)
    return Spectrum(np.asarray(grid), _music_values(ns.U_n, steering))


def delay_steering(freqs, delays) -> np.ndarray:
    """b(t)_m = exp(-j 2 pi f_m t); shape (len(delays), len(freqs))."""
    return np.exp(-2j * np.pi * np.outer(np.asarray(delays, dtype=float), np.asarray(freqs, dtype=float)))


def music2d(R, K: int, angle_steering: np.ndarray, angle_grid, freqs, delay_grid) -> Spectrum:
    """Angle-delay MUSIC over the Kronecker steering a(theta) (x) b(t)."""
    R = _as_matrix(R)
    a = np.asarray(angle_steering)
    b = delay_steering(freqs, delay_grid)
    if a.shape[1] * b.shape[1] != R.shape[0]:
        raise ValueError(f"covariance size {R.shape[0]} != {a.shape[1]} x {b.shape[1]}")
    ns = noise_subspace(R, K)
    # row (g, d) of the joint steering is kron(a_g, b_d)
    joint = (a[:, None, :, None] * b[None, :, None, :]).reshape(a.shape[0] * b.shape[0], -1)
    vals = _music_values(ns.U_n, joint).reshape(a.shape[0], b.shape[0])
    return Spectrum((np.asarray(angle_grid, dtype=float), np.asarray(delay_grid, dtype=float)), vals)


def find_peaks(s: Spectrum, count: int = 1, min_separation: float = 0.0) -> list[float]:
    """Largest local maxima, greedily suppressing neighbours within ``min_separation``.

    Ties resolve to the lower index; a flat spectrum yields its first grid point.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    idx = local_maxima(s.values)
    if idx.size == 0:
        idx = np.array([s.peak_index])
    order = idx[np.lexsort((idx, -s.values[idx]))]
    chosen: list[float] = []
    for i in order:
        x = float(s.grid[i])
        if all(abs(x - c) > min_separation for c in chosen):
            chosen.append(x)
            if len(chosen) == count:
                break
    return chosen


def ula_steering(geom: ArrayGeometry, carrier: CarrierSpec, azimuths, elevation: float = 0.0) -> np.ndarray:
    """Steering rows over an azimuth grid, shape (G, M)."""
    return steering_far(geom, carrier, np.asarray(azimuths, dtype=float), elevation)


def front_grid(step: float = np.deg2rad(0.1)) -> np.ndarray:
    """Azimuth grid over the array's front half-plane [-pi/2, pi/2]."""
    n = int(round(np.pi / step))
    return np.linspace(-np.pi / 2, np.pi / 2, n + 1)

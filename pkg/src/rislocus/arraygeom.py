"""Planar array geometry, wave vectors and steering vectors.

Every array lives in the y-z plane of its own local frame, with the first
element at the local origin and elements indexed row-wise. A rigid
transform (origin + rotation) places the array in the world frame.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


def wrap_angle(x):
    """Wrap angles to (-pi, pi]."""
    w = np.pi - np.mod(np.pi - np.asarray(x, dtype=float), 2 * np.pi)
    if np.ndim(w) == 0:
        return float(w)
    return w


def yaw_rotation(yaw: float) -> np.ndarray:
    """Rotation about the world z axis, local -> world."""
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class CarrierSpec:
    f_c: float

    def __post_init__(self):
        if not self.f_c > 0:
            raise ValueError(f"carrier frequency must be positive, got {self.f_c}")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    @property
    def wavenumber(self) -> float:
        return 2 * np.pi / self.wavelength


@dataclass(frozen=True)
class Direction:
    """Azimuth in (-pi, pi], elevation in [-pi/2, pi/2]."""

    azimuth: float
    elevation: float = 0.0

    def __post_init__(self):
        az, el = float(self.azimuth), float(self.elevation)
        el = wrap_angle(el)
        # elevation past the pole flips to the other side of the sphere
        if el > np.pi / 2:
            el, az = np.pi - el, az + np.pi
        elif el < -np.pi / 2:
            el, az = -np.pi - el, az + np.pi
        object.__setattr__(self, "azimuth", wrap_angle(az))
        object.__setattr__(self, "elevation", float(el))

    @classmethod
    def from_degrees(cls, azimuth: float, elevation: float = 0.0) -> "Direction":
        return cls(np.deg2rad(azimuth), np.deg2rad(elevation))

    @classmethod
    def towards(cls, vec) -> "Direction":
        v = np.asarray(vec, dtype=float)
        return cls(np.arctan2(v[1], v[0]), np.arctan2(v[2], np.hypot(v[0], v[1])))

    def unit(self) -> np.ndarray:
        ce = np.cos(self.elevation)
        return np.array([ce * np.cos(self.azimuth), ce * np.sin(self.azimuth), np.sin(self.elevation)])


@dataclass(frozen=True)
class ArrayGeometry:
    n_h: int
    n_v: int = 1
    d_h: float = 0.0
    d_v: float = 0.0
    origin: tuple = (0.0, 0.0, 0.0)
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3), compare=False)

    def __post_init__(self):
        if self.n_h < 1 or self.n_v < 1:
            raise ValueError("element counts must be >= 1")
        if (self.n_h > 1 and not self.d_h > 0) or (self.n_v > 1 and not self.d_v > 0):
            raise ValueError("element pitch must be positive")
        rot = np.asarray(self.rotation, dtype=float)
        if rot.shape != (3, 3) or not np.allclose(rot @ rot.T, np.eye(3), atol=1e-9):
            raise ValueError("rotation must be a 3x3 orthonormal matrix")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))

    @property
    def n(self) -> int:
        return self.n_h * self.n_v

    @classmethod
    def ula(cls, n: int, spacing: float, **kw) -> "ArrayGeometry":
        return cls(n_h=n, n_v=1, d_h=spacing, d_v=spacing, **kw)

    @classmethod
    def ura(cls, n_h: int, n_v: int, spacing: float, **kw) -> "ArrayGeometry":
        return cls(n_h=n_h, n_v=n_v, d_h=spacing, d_v=spacing, **kw)

    @classmethod
    def centered_at(cls, position, n_h, n_v, d_h, d_v, yaw: float = 0.0) -> "ArrayGeometry":
        """Place the array so its element centroid sits at ``position``."""
        rot = yaw_rotation(yaw)
        local_centroid = np.array([0.0, (n_h - 1) * d_h / 2, (n_v - 1) * d_v / 2])
        origin = np.asarray(position, dtype=float) - rot @ local_centroid
        return cls(n_h, n_v, d_h, d_v, origin=tuple(origin), rotation=rot)

    def centroid(self) -> np.ndarray:
        """World-frame centroid of the elements."""
        return world_positions(self).mean(axis=0)

    def to_local(self, p) -> np.ndarray:
        """World point -> local frame."""
        return self.rotation.T @ (np.asarray(p, dtype=float) - np.asarray(self.origin))

    def direction_to(self, p) -> Direction:
        """Direction of world point ``p`` seen from the array centroid, local frame."""
        return Direction.towards(self.rotation.T @ (np.asarray(p, dtype=float) - self.centroid()))

    def to_dict(self) -> dict:
        return {
            "n_h": self.n_h, "n_v": self.n_v, "d_h": self.d_h, "d_v": self.d_v,
            "origin": list(self.origin), "rotation": self.rotation.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArrayGeometry":
        return cls(d["n_h"], d.get("n_v", 1), d.get("d_h", 0.0), d.get("d_v", 0.0),
                   origin=tuple(d.get("origin", (0, 0, 0))),
                   rotation=np.asarray(d.get("rotation", np.eye(3))))


def element_positions(geom: ArrayGeometry) -> np.ndarray:
    """Local-frame positions, shape (N, 3), row-wise indexing."""
    n = np.arange(geom.n)
    i = np.mod(n, geom.n_h)
    j = n // geom.n_h
    return np.stack([np.zeros(geom.n), i * geom.d_h, j * geom.d_v], axis=1)


def world_positions(geom: ArrayGeometry) -> np.ndarray:
    return element_positions(geom) @ geom.rotation.T + np.asarray(geom.origin)


def wave_vector(carrier: CarrierSpec, azimuth, elevation=0.0) -> np.ndarray:
    """Wave vector(s); broadcasts over angle arrays, last axis is xyz."""
    az = np.asarray(azimuth, dtype=float)
    el = np.asarray(elevation, dtype=float)
    ce = np.cos(el)
    k = np.stack(np.broadcast_arrays(ce * np.cos(az), ce * np.sin(az), np.sin(el)), axis=-1)
    return carrier.wavenumber * k


def steering_far(geom: ArrayGeometry, carrier: CarrierSpec, azimuth, elevation=0.0) -> np.ndarray:
    """Far-field response exp(-j k.u_n).

    Scalar angles give an (N,) vector; angle arrays give shape (..., N).
    A ``Direction`` may be passed as ``azimuth``.
    """
    if isinstance(azimuth, Direction):
        azimuth, elevation = azimuth.azimuth, azimuth.elevation
    k = wave_vector(carrier, azimuth, elevation)
    return np.exp(-1j * (k @ element_positions(geom).T))


def steering_near(geom: ArrayGeometry, carrier: CarrierSpec, p, p_ris=None) -> np.ndarray:
    """Spherical-wave response to a source at local-frame point ``p``.

    The reference point defaults to the element centroid. As the range grows
    this tends to exp(+j k.(u_n - p_ris)), i.e. the conjugate of the
    far-field form re-referenced to the centroid.
    """
    u = element_positions(geom)
    p = np.asarray(p, dtype=float)
    p_ris = u.mean(axis=0) if p_ris is None else np.asarray(p_ris, dtype=float)
    dist = np.linalg.norm(p - u, axis=1)
    if np.any(dist == 0.0):
        raise ValueError("source coincides with an array element")
    return np.exp(-1j * carrier.wavenumber * (dist - np.linalg.norm(p - p_ris)))


def position_from_measurements(phi: float, z: float, r: float) -> np.ndarray:
    """Azimuth, height and range -> Cartesian point."""
    if not r > 0 or r < abs(z):
        raise ValueError(f"infeasible range r={r} for height z={z}")
    rho = np.sqrt(r * r - z * z)
    return np.array([rho * np.cos(phi), rho * np.sin(phi), z])


def measurements_from_position(p) -> tuple[float, float, float]:
    x, y, z = (float(v) for v in p)
    return float(np.arctan2(y, x)), z, float(np.sqrt(x * x + y * y + z * z))

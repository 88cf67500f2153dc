"""Positioning and mapping pipeline: codebook beam sweep, ON/OFF direct-path
estimation, LoS reconstruction/cancellation, MUSIC angle estimation and
scatterer triangulation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .arraygeom import (SPEED_OF_LIGHT, ArrayGeometry, CarrierSpec, position_from_measurements,
                        steering_far, wrap_angle)
from .channel import (ChannelMatrix, Scene, SignalBlock, block_length, channel_matrix, complex_noise,
                      freespace_amplitude, pilots, ris_signal, scene_channels, synth_paths, tap_index)
from .pattern import Codebook
from .phasecfg import PhaseConfig
from .spectral import front_grid, music, sample_covariance, ula_steering


class MeasurementError(RuntimeError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"measurement failed at codebook entry {index}: {cause}")
        self.index = index
        self.cause = cause


class MeasurementFn(Protocol):
    def __call__(self, config: PhaseConfig) -> SignalBlock: ...


class SimulatedMeasurement:
    """Measures a scene through its channels; noise comes from one seeded stream.

    Successive calls draw fresh noise, so a run is reproducible given the seed
    and the sequence of configurations.

    The direct and RIS contributions are rounded to a common power-of-two grid
    set by an amplitude bound of the scene, 51 bits below it, so their sum is
    exact. Two sign-opposed configurations therefore average to the direct
    signal bit for bit.
    """

    def __init__(self, scene: Scene, n_pilots: int = 64, sigma2: float = 0.0, seed: int | None = None,
                 polarization: str | None = None):
        self.scene = scene
        self.channels = scene_channels(scene)
        self.n_pilots = n_pilots
        self.sigma2 = sigma2
        self.seed = scene.seed if seed is None else seed
        self.polarization = polarization
        self.x = pilots(scene.tx.geometry.n, n_pilots, self.seed)
        self.length = block_length(self.channels.h1, self.channels.h2, self.channels.hd, n_pilots)
        self._rng = np.random.default_rng([self.seed, 1])
        self.step = _grid_step(self.channels, self.x)
        self._direct = self._snap(self.channels.hd.apply(self.x, self.length))
        self.count = 0

    def _snap(self, v: np.ndarray) -> np.ndarray:
        s = self.step
        return (np.round(v.real / s) + 1j * np.round(v.imag / s)) * s

    def __call__(self, config: PhaseConfig) -> SignalBlock:
        ch = self.channels
        r_ris = ris_signal(ch.h1, ch.h2, config.coefficients(self.polarization), self.x, self.length)
        r = self._snap(r_ris) + self._direct
        if self.sigma2 > 0:
            r = r + complex_noise(r.shape, self.sigma2, self._rng)
        self.count += 1
        return SignalBlock(r, self.n_pilots, self.sigma2)

    def direct_signal(self) -> np.ndarray:
        return self._direct.copy()


def _tap_sum(h: ChannelMatrix) -> np.ndarray:
    out = np.zeros(h.shape)
    for m in h.taps.values():
        out += np.abs(m)
    return out


def _grid_step(ch, x: np.ndarray) -> float:
    """Power of two, 2^-51 of a bound on any received sample magnitude."""
    xm = float(np.max(np.abs(x))) if x.size else 0.0
    bound = xm * (_tap_sum(ch.hd).sum(axis=1).max(initial=0.0)
                  + (_tap_sum(ch.h2) @ _tap_sum(ch.h1).sum(axis=1)).max(initial=0.0))
    if not bound > 0:
        return 1.0
    return float(2.0 ** (np.ceil(np.log2(bound)) - 51))


def beam_sweep(cb: Codebook, measure: MeasurementFn) -> tuple[int, np.ndarray]:
    """Index of the strongest codebook entry (first on ties) and all powers."""
    powers = np.empty(len(cb))
    for k, e in enumerate(cb.entries):
        try:
            powers[k] = measure(e.config).power
        except Exception as exc:  # noqa: BLE001 - re-raised with the entry index
            raise MeasurementError(k, exc) from exc
    return int(np.argmax(powers)), powers


def onoff_direct(measure: MeasurementFn, n_elements: int, layout: str = "unipolar") -> np.ndarray:
    """Direct-path estimate (r1 + r2)/2 from the configs +jI and -jI."""
    n = n_elements * (2 if layout != "unipolar" else 1)
    r1 = measure(PhaseConfig.uniform(n, np.pi / 2, layout=layout)).samples
    r2 = measure(PhaseConfig.uniform(n, -np.pi / 2, layout=layout)).samples
    return (r1 + r2) / 2


def ue_aoa_to_ris_aod(phi_ue: float, ue_yaw: float, ris_yaw: float) -> float:
    """Planar geometry: the RIS->UE bearing is the UE->RIS bearing plus pi."""
    return wrap_angle(phi_ue + ue_yaw + np.pi - ris_yaw)


def ris_aod_to_ue_aoa(phi_ris: float, ue_yaw: float, ris_yaw: float) -> float:
    return wrap_angle(phi_ris + ris_yaw + np.pi - ue_yaw)


def los_channel_estimate(phi_est: float, tau_est: float, rx_geom: ArrayGeometry, ris_geom: ArrayGeometry,
                         carrier: CarrierSpec, ue_yaw: float = 0.0, ris_yaw: float = 0.0) -> np.ndarray:
    """Rank-1 RIS->UE LoS matrix from the UE-frame AoA and the delay.

    The amplitude is the linear free-space factor lambda/(4 pi r); the dB
    loss is only the logarithmic form of the same quantity.
    """
    if not tau_est > 0:
        raise ValueError("delay estimate must be positive")
    r = SPEED_OF_LIGHT * tau_est
    amp = freespace_amplitude(r, carrier.wavelength)
    phase = np.mod(-2 * np.pi * carrier.f_c * tau_est, 2 * np.pi)
    aod = ue_aoa_to_ris_aod(phi_est, ue_yaw, ris_yaw)
    a_ue = steering_far(rx_geom, carrier, phi_est, 0.0)
    a_ris = steering_far(ris_geom, carrier, aod, 0.0)
    return amp * np.exp(1j * phase) * np.outer(a_ue, np.conj(a_ris))


def cancel_los(r_tot: np.ndarray, r_los: np.ndarray, tau_est: float, fs: float) -> np.ndarray:
    """r_tot[n] - r_los[n - floor(tau fs)], samples shifted out of range count as zero."""
    out = np.array(r_tot, dtype=complex, copy=True)
    s = tap_index(tau_est, fs)
    if s < out.shape[1]:
        n = min(out.shape[1] - s, r_los.shape[1])
        out[:, s : s + n] -= r_los[:, :n]
    return out


@dataclass
class SensingSetup:
    """What the receiver side knows: carrier, sampling, pilots, the exact
    AP->RIS LoS channel, the RIS placement and the UE array and orientation."""

    carrier: CarrierSpec
    fs: float
    ris_geom: ArrayGeometry
    rx_geom: ArrayGeometry
    h1_los: ChannelMatrix
    x: np.ndarray
    ue_yaw: float
    ris_yaw: float
    angle_grid: np.ndarray = field(default_factory=front_grid)

    @classmethod
    def from_scene(cls, scene: Scene, x: np.ndarray) -> "SensingSetup":
        los = [p for p in synth_paths(scene, "tx-ris") if p.kind == "los"]
        h1 = channel_matrix(los, scene.tx.geometry, scene.ris.geometry, scene.carrier, scene.fs)
        return cls(scene.carrier, scene.fs, scene.ris.geometry, scene.rx.geometry, h1, x,
                   scene.rx.yaw, scene.ris.yaw)

    @property
    def ris_position(self) -> np.ndarray:
        return self.ris_geom.centroid()

    def music_aoa(self, samples: np.ndarray) -> float:
        """K=1 MUSIC over the UE front half-plane; returns the UE-frame azimuth."""
        R = sample_covariance(samples)
        A = ula_steering(self.rx_geom, self.carrier, self.angle_grid)
        return music(R, 1, A, self.angle_grid).peak

    def los_signal(self, phi_ue: float, tau: float, config: PhaseConfig, length: int) -> np.ndarray:
        """Reconstructed LoS cascade signal, before the floor(tau fs) shift."""
        h2 = los_channel_estimate(phi_ue, tau, self.rx_geom, self.ris_geom, self.carrier,
                                  self.ue_yaw, self.ris_yaw)
        mid = self.h1_los.apply(self.x, length) * config.coefficients()[:, None]
        return h2 @ mid


@dataclass
class LocalizationResult:
    phi_est: float  # RIS-frame azimuth of the UE
    tau_est: float
    r_est: float
    z: float
    position: np.ndarray  # RIS frame
    world_position: np.ndarray
    phi_ue: float  # UE-frame AoA of the LoS path
    sweep_index: int
    sweep_powers: np.ndarray
    phi_sweep: float
    measurements: int = 0


def localize(measure: MeasurementFn, cb: Codebook, setup: SensingSetup, z: float, tau: float,
             snapshots: int | None = None, use_music: bool = True, onoff: bool = True) -> LocalizationResult:
    """Beam sweep, fix the best entry, ON/OFF, MUSIC (K=1), then combine with range and height.

    ``z`` is the UE height relative to the RIS centroid; ``tau`` the RIS->UE
    delay from external ranging.
    """
    count = 0
    idx, powers = beam_sweep(cb, measure)
    count += len(cb)
    phi_sweep = float(cb.entries[idx].target.azimuth)
    if use_music:
        blk = measure(cb.entries[idx].config)
        count += 1
        samples = blk.samples
        if onoff:
            samples = samples - onoff_direct(measure, setup.ris_geom.n)
            count += 2
        if snapshots is not None:
            samples = samples[:, :snapshots]
        phi_ue = setup.music_aoa(samples)
        phi = ue_aoa_to_ris_aod(phi_ue, setup.ue_yaw, setup.ris_yaw)
    else:
        phi = phi_sweep
        phi_ue = ris_aod_to_ue_aoa(phi, setup.ue_yaw, setup.ris_yaw)
    r = SPEED_OF_LIGHT * tau
    local = position_from_measurements(phi, z, r)
    # the RIS local frame has x along the surface normal; rotate into the world
    world = setup.ris_position + setup.ris_geom.rotation @ local
    return LocalizationResult(float(phi), tau, r, z, local, world, float(phi_ue), idx, powers, phi_sweep, count)


def intersect_rays(p1, bearing1: float, p2, bearing2: float, min_sin: float = 1e-3):
    """Planar intersection of two rays; None when near-parallel or behind either origin."""
    p1, p2 = np.asarray(p1, dtype=float)[:2], np.asarray(p2, dtype=float)[:2]
    d1 = np.array([np.cos(bearing1), np.sin(bearing1)])
    d2 = np.array([np.cos(bearing2), np.sin(bearing2)])
    cross = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(cross) < min_sin:
        return None
    diff = p2 - p1
    t1 = (diff[0] * d2[1] - diff[1] * d2[0]) / cross
    t2 = (diff[0] * d1[1] - diff[1] * d1[0]) / cross
    if t1 < 0 or t2 < 0:
        return None
    return p1 + t1 * d1


@dataclass
class ScattererEstimate:
    position: np.ndarray
    entry_index: int
    nlos_azimuth: float  # UE frame
    residual_power: float


@dataclass
class MapResult:
    scatterers: list
    diagnostics: dict

    def strongest(self) -> ScattererEstimate | None:
        if not self.scatterers:
            return None
        return max(self.scatterers, key=lambda s: s.residual_power)


def map_scatterers(measure: MeasurementFn, cb: Codebook, loc: LocalizationResult, setup: SensingSetup,
                   bin_width: float | None = None, front_facing: bool = True) -> MapResult:
    """Sweep every codebook entry with LoS cancellation and triangulate new AoAs."""
    bin_width = cb.resolution if bin_width is None else bin_width
    ue = loc.world_position
    ris = setup.ris_position
    found, skipped = [], []
    count = 0
    for k, e in enumerate(cb.entries):
        r_d = onoff_direct(measure, setup.ris_geom.n)
        blk = measure(e.config)
        count += 3
        r_los = setup.los_signal(loc.phi_ue, loc.tau_est, e.config, blk.samples.shape[1])
        resid = cancel_los(blk.samples - r_d, r_los, loc.tau_est, setup.fs)
        phi_nlos = setup.music_aoa(resid)
        if abs(wrap_angle(phi_nlos - loc.phi_ue)) <= bin_width:
            continue
        ris_bearing = e.target.azimuth + setup.ris_yaw
        ue_bearing = phi_nlos + setup.ue_yaw
        pt = intersect_rays(ris, ris_bearing, ue, ue_bearing)
        if pt is None:
            skipped.append({"entry": k, "reason": "no forward intersection"})
            continue
        p3 = np.array([pt[0], pt[1], ris[2]])
        if front_facing and setup.ris_geom.to_local(p3)[0] <= 0:
            skipped.append({"entry": k, "reason": "behind RIS plane"})
            continue
        found.append(ScattererEstimate(p3, k, float(phi_nlos), float(np.mean(np.abs(resid) ** 2))))
    return MapResult(found, {"measurements": count, "skipped": skipped, "entries": len(cb)})

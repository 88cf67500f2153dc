"""Radiation patterns, maximum-ratio configurations, codebooks and lobe analysis."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .arraygeom import ArrayGeometry, CarrierSpec, Direction, steering_far
from .phasecfg import PhaseConfig, QuantizationGrid, quantize_aligned

DEFAULT_AZIMUTH_GRID = np.linspace(-np.pi / 2, np.pi / 2, 721)


@dataclass(frozen=True)
class SteeringTask:
    incident: Direction
    target: Direction


@dataclass(eq=False)
class Spectrum:
    """Sampled pseudo-power over a 1D grid, or a 2D grid given as a tuple of axes."""

    grid: np.ndarray | tuple
    values: np.ndarray
    peak_index: int | tuple = field(init=False)
    resolution: float | tuple = field(init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        axes = self.grid if isinstance(self.grid, tuple) else (self.grid,)
        axes = tuple(np.asarray(a, dtype=float) for a in axes)
        if any(a.size == 0 for a in axes):
            raise ValueError("empty grid")
        for a in axes:
            if a.size > 1 and np.any(np.diff(a) <= 0):
                raise ValueError("grid must be strictly increasing")
        if self.values.shape != tuple(a.size for a in axes):
            raise ValueError("values do not match grid shape")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("spectrum values must be finite and non-negative")
        steps = tuple(float(a[1] - a[0]) if a.size > 1 else 0.0 for a in axes)
        flat = int(np.argmax(self.values))  # first occurrence on ties
        if len(axes) == 1:
            self.grid, self.peak_index, self.resolution = axes[0], flat, steps[0]
        else:
            self.grid = axes
            self.peak_index = tuple(int(i) for i in np.unravel_index(flat, self.values.shape))
            self.resolution = steps

    @property
    def peak(self):
        if isinstance(self.grid, tuple):
            return tuple(a[i] for a, i in zip(self.grid, self.peak_index))
        return float(self.grid[self.peak_index])

    def db(self) -> np.ndarray:
        """Power in dB, 0 dB at the spectrum maximum."""
        with np.errstate(divide="ignore"):
            return 10 * np.log10(self.values / self.values.max())

    def to_csv(self, path) -> None:
        if isinstance(self.grid, tuple):
            raise ValueError("CSV export is for 1D spectra")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["angle_rad", "power_linear", "power_db_normalized"])
            for a, p, d in zip(self.grid, self.values, self.db()):
                w.writerow([repr(float(a)), repr(float(p)), repr(float(d))])


@dataclass(frozen=True)
class CodebookEntry:
    target: Direction
    config: PhaseConfig


@dataclass(frozen=True)
class Codebook:
    entries: tuple
    incident: Direction
    bits: float

    def __post_init__(self):
        if not self.entries:
            raise ValueError("codebook must not be empty")
        az = np.array([e.target.azimuth for e in self.entries])
        if np.any(np.diff(az) <= 0):
            raise ValueError("codebook targets must be strictly increasing in azimuth")
        layouts = {(e.config.bits, e.config.layout) for e in self.entries}
        if len(layouts) != 1:
            raise ValueError("codebook configs must share bits and layout")

    def __len__(self):
        return len(self.entries)

    @property
    def targets(self) -> np.ndarray:
        return np.array([e.target.azimuth for e in self.entries])

    @property
    def resolution(self) -> float:
        t = self.targets
        return float(np.min(np.diff(t))) if t.size > 1 else 0.0

    def to_dict(self) -> dict:
        return {
            "incident": {"azimuth_rad": self.incident.azimuth, "elevation_rad": self.incident.elevation},
            "bits": "inf" if self.bits == math.inf else int(self.bits),
            "entries": [
                {"target_rad": e.target.azimuth, "target_elevation_rad": e.target.elevation,
                 "config": e.config.to_dict()}
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Codebook":
        inc = d["incident"]
        entries = tuple(
            CodebookEntry(Direction(e["target_rad"], e.get("target_elevation_rad", 0.0)),
                          PhaseConfig.from_dict(e["config"]))
            for e in d["entries"]
        )
        bits = math.inf if d["bits"] == "inf" else int(d["bits"])
        return cls(entries, Direction(inc["azimuth_rad"], inc.get("elevation_rad", 0.0)), bits)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "Codebook":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _cascade_terms(geom, carrier, incident: Direction, azimuth, elevation, conjugate: bool):
    a_in = steering_far(geom, carrier, incident.azimuth, incident.elevation)
    a_ev = steering_far(geom, carrier, azimuth, elevation)
    return a_in * (np.conj(a_ev) if conjugate else a_ev)


def optimal_config(task: SteeringTask, geom: ArrayGeometry, carrier: CarrierSpec,
                   conjugate: bool = True) -> PhaseConfig:
    """Maximum-ratio (co-phasing) configuration for a steering task.

    ``conjugate=True`` co-phases the reflect-form pattern (evaluation steering
    conjugated); ``False`` co-phases the array-factor form used by the
    dual-polarized pattern.
    """
    t = _cascade_terms(geom, carrier, task.incident, task.target.azimuth, task.target.elevation, conjugate)
    return PhaseConfig(np.angle(np.conj(t)))


def pattern_reflect(config: PhaseConfig, incident: Direction, geom: ArrayGeometry,
                    carrier: CarrierSpec, azimuth, elevation=0.0, polarization=None):
    """|w^T (a(incident) * conj(a(eval)))|^2; broadcasts over eval angles."""
    w = config.coefficients(polarization)
    if w.size != geom.n:
        raise ValueError(f"config has {w.size} elements, geometry has {geom.n}")
    t = _cascade_terms(geom, carrier, incident, azimuth, elevation, True)
    return np.abs(t @ w) ** 2


def pattern_dualpol(config_h: PhaseConfig, config_v: PhaseConfig, incident: Direction,
                    geom_h: ArrayGeometry, geom_v: ArrayGeometry, carrier: CarrierSpec,
                    azimuth, elevation=0.0):
    """Sum over polarizations of |w_p^T (a_p(incident) * a_p(eval))|^2."""
    total = 0.0
    for cfg, g in ((config_h, geom_h), (config_v, geom_v)):
        w = cfg.coefficients()
        if w.size != g.n:
            raise ValueError(f"config has {w.size} elements, geometry has {g.n}")
        total = total + np.abs(_cascade_terms(g, carrier, incident, azimuth, elevation, False) @ w) ** 2
    return total


def sweep_pattern(config, incident: Direction, geom, carrier: CarrierSpec,
                  azimuths=None, elevation: float = 0.0) -> Spectrum:
    """Evaluate a pattern over an azimuth grid.

    ``config``/``geom`` may be pairs (H, V), which selects the dual-pol form.
    """
    az = DEFAULT_AZIMUTH_GRID if azimuths is None else np.asarray(azimuths, dtype=float)
    if az.size == 0:
        raise ValueError("empty evaluation grid")
    if isinstance(config, (tuple, list)):
        vals = pattern_dualpol(config[0], config[1], incident, geom[0], geom[1], carrier, az, elevation)
    else:
        vals = pattern_reflect(config, incident, geom, carrier, az, elevation)
    return Spectrum(az, np.broadcast_to(vals, az.shape).copy())


def build_codebook(incident: Direction, targets, geom: ArrayGeometry, carrier: CarrierSpec,
                   grid: QuantizationGrid | None = None, elevation: float = 0.0) -> Codebook:
    grid = grid or QuantizationGrid()
    targets = np.asarray(targets, dtype=float)
    if targets.size == 0:
        raise ValueError("no codebook targets")
    entries = []
    for t in targets:
        tgt = Direction(t, elevation)
        cfg = quantize_aligned(optimal_config(SteeringTask(incident, tgt), geom, carrier), grid)
        entries.append(CodebookEntry(tgt, cfg))
    return Codebook(tuple(entries), incident, grid.bits)


def beamwidth_3db(s: Spectrum) -> float:
    """Half-power width of the main lobe, linearly interpolated between samples."""
    v, x, k = s.values, s.grid, s.peak_index
    half = v[k] / 2

    def edge(step):
        i = k
        while 0 <= i + step < v.size and v[i + step] > half:
            i += step
        j = i + step
        if not 0 <= j < v.size:
            return x[i]
        frac = (v[i] - half) / (v[i] - v[j])
        return x[i] + frac * (x[j] - x[i])

    return float(edge(1) - edge(-1))


def local_maxima(values: np.ndarray) -> np.ndarray:
    """Indices of local maxima; plateaus report their first sample."""
    v = np.asarray(values)
    if v.size == 1:
        return np.array([0])
    left = np.concatenate([[-np.inf], v[:-1]])
    out = []
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and v[j + 1] == v[i]:
            j += 1
        right = v[j + 1] if j + 1 < v.size else -np.inf
        if v[i] > left[i] and v[i] > right:
            out.append(i)
        i = j + 1
    return np.array(out, dtype=int)


@dataclass
class LobeReport:
    main_lobe: tuple  # (azimuth rad, level dB)
    sidelobes: list  # [(azimuth rad, dB below main)]
    grating_lobes: list
    incident: Direction | None = None


def grating_directions(target_azimuth: float, wavelength: float, pitch: float) -> np.ndarray:
    """Azimuths satisfying sin(phi) = sin(target) + m*lambda/d for integer m != 0."""
    s0 = np.sin(target_azimuth)
    ratio = wavelength / pitch
    m_max = int(np.floor(2 / ratio)) + 1
    sols = []
    for m in range(-m_max, m_max + 1):
        if m == 0:
            continue
        s = s0 + m * ratio
        if -1 <= s <= 1:
            a = np.arcsin(s)
            sols.extend([a, np.pi - a if a >= 0 else -np.pi - a])
    return np.array(sols)


def analyze_lobes(s: Spectrum, carrier: CarrierSpec, same_pol_pitch: float,
                  incident: Direction | None, target: Direction) -> LobeReport:
    peaks = local_maxima(s.values)
    main = s.peak_index
    ref = s.values[main]
    with np.errstate(divide="ignore"):
        main_db = 10 * np.log10(ref) if ref > 0 else -np.inf
        side = [(float(s.grid[i]), float(10 * np.log10(ref / s.values[i])) if s.values[i] > 0 else np.inf)
                for i in peaks if i != main]
    g_dirs = grating_directions(target.azimuth, carrier.wavelength, same_pol_pitch)
    tol = abs(s.resolution) * (1 + 1e-9)
    if g_dirs.size and abs(s.grid[main] - target.azimuth) > tol:
        # a replica out-sampled the intended lobe; the lobe at the target is then the replica
        g_dirs = np.append(g_dirs, target.azimuth)
    grating = [sl for sl in side if g_dirs.size and np.min(np.abs(g_dirs - sl[0])) <= tol]
    return LobeReport((float(s.grid[main]), float(main_db)), side, grating, incident)

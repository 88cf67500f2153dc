"""Batch localization and mapping runs over a UE grid, with error tables."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .arraygeom import SPEED_OF_LIGHT
from .channel import Scene
from .pattern import Codebook, build_codebook
from .phasecfg import QuantizationGrid
from .protocol import SensingSetup, SimulatedMeasurement, localize, map_scatterers

METHODS = ("continuous_sweep", "onebit_sweep", "onebit_music")


@dataclass
class ExperimentConfig:
    scene: str = "scenes/indoor.json"
    codebook_start_deg: float = -80.0
    codebook_stop_deg: float = 80.0
    codebook_step_deg: float = 2.0
    n_pilots: int = 64
    sigma2: float = 0.0
    seed: int = 0
    z: float = 0.0
    tau_std: float = 0.0  # 0 means perfect ranging
    ue_x: list = field(default_factory=lambda: [4.0, 4.5, 5.0, 5.5, 6.0])
    ue_y: list = field(default_factory=lambda: [-1.0, -0.5, 0.0, 0.5, 1.0])

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls(**json.load(fh))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2)

    @property
    def targets(self) -> np.ndarray:
        n = int(round((self.codebook_stop_deg - self.codebook_start_deg) / self.codebook_step_deg))
        return np.deg2rad(self.codebook_start_deg + self.codebook_step_deg * np.arange(n + 1))


def scene_codebook(scene: Scene, targets, bits=np.inf) -> Codebook:
    """Codebook for the scene's AP->RIS incidence; 1 bit uses the quadrature grid."""
    inc = scene.ris.geometry.direction_to(scene.tx.position)
    if bits == 1:
        grid = QuantizationGrid.one_bit_quadrature()
    elif np.isinf(bits):
        grid = None
    else:
        grid = QuantizationGrid(int(bits))
    return build_codebook(inc, targets, scene.ris.geometry, scene.carrier, grid=grid)


def ue_positions(cfg: ExperimentConfig, scene: Scene) -> list[np.ndarray]:
    z0 = scene.ris.position[2] + cfg.z
    return [np.array([x, y, z0]) for x in cfg.ue_x for y in cfg.ue_y]


def ranging(scene: Scene, rng: np.random.Generator, tau_std: float) -> float:
    tau = float(np.linalg.norm(scene.rx.position - scene.ris.position) / SPEED_OF_LIGHT)
    if tau_std > 0:
        tau = max(tau + tau_std * rng.standard_normal(), 1e-12)
    return tau


def error_stats(errors) -> dict:
    e = np.asarray(errors, dtype=float)
    return {"peak": float(np.max(e)), "average": float(np.mean(e)), "variance": float(np.var(e))}


def write_error_table(rows: dict, path) -> None:
    """rows maps a method name to its error_stats dict."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "peak", "average", "variance"])
        for name, st in rows.items():
            w.writerow([name, repr(st["peak"]), repr(st["average"]), repr(st["variance"])])


def run_localization(cfg: ExperimentConfig, scene: Scene | None = None) -> dict:
    """AoA error (degrees) per UE for the three sweep/estimator variants."""
    scene = Scene.load(cfg.scene) if scene is None else scene
    cbc = scene_codebook(scene, cfg.targets)
    cb1 = scene_codebook(scene, cfg.targets, bits=1)
    rng = np.random.default_rng([cfg.seed, 2])
    errs = {m: [] for m in METHODS}
    for p in ue_positions(cfg, scene):
        s = scene.with_rx_at(p)
        meas = SimulatedMeasurement(s, cfg.n_pilots, cfg.sigma2, cfg.seed)
        setup = SensingSetup.from_scene(s, meas.x)
        truth = scene.ris.geometry.direction_to(p).azimuth
        tau = ranging(s, rng, cfg.tau_std)
        runs = (localize(meas, cbc, setup, cfg.z, tau, use_music=False),
                localize(meas, cb1, setup, cfg.z, tau, use_music=False),
                localize(meas, cb1, setup, cfg.z, tau))
        for m, r in zip(METHODS, runs):
            errs[m].append(float(np.rad2deg(abs(r.phi_est - truth))))
    return {"errors_deg": errs, "table": {m: error_stats(v) for m, v in errs.items()},
            "bin_deg": cfg.codebook_step_deg, "ue_count": len(errs[METHODS[0]])}


def run_mapping(cfg: ExperimentConfig, scene: Scene | None = None, bits=np.inf) -> dict:
    """Distance (m) from the strongest mapped scatterer to the nearest true scatterer, per UE."""
    scene = Scene.load(cfg.scene) if scene is None else scene
    if not scene.scatterers:
        raise ValueError("mapping needs a scene with at least one scatterer")
    cb = scene_codebook(scene, cfg.targets, bits=bits)
    truth = np.array([s.position for s in scene.scatterers], dtype=float)
    rng = np.random.default_rng([cfg.seed, 3])
    errs, missed, loc_errs = [], 0, []
    for p in ue_positions(cfg, scene):
        s = scene.with_rx_at(p)
        meas = SimulatedMeasurement(s, cfg.n_pilots, cfg.sigma2, cfg.seed)
        setup = SensingSetup.from_scene(s, meas.x)
        loc = localize(meas, cb, setup, cfg.z, ranging(s, rng, cfg.tau_std))
        loc_errs.append(float(np.linalg.norm(loc.world_position - p)))
        best = map_scatterers(meas, cb, loc, setup).strongest()
        if best is None:
            missed += 1
            continue
        errs.append(float(np.min(np.linalg.norm(truth - best.position, axis=1))))
    out = {"errors_m": errs, "missed": missed, "ue_position_errors_m": loc_errs}
    if errs:
        out["table"] = {"scatterer": error_stats(errs)}
        out["std_m"] = float(np.std(errs))
    return out

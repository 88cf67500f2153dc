"""Command-line front end. Every run writes ``manifest.json`` into ``--out-dir``;
failures exit nonzero with a JSON error object on stderr."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .arraygeom import SPEED_OF_LIGHT, ArrayGeometry, CarrierSpec, Direction
from .channel import Scene
from .emulator import (FREQ_START, FREQ_STOP, POLS, ElementModel, EmulatorModel, RemoteRIS,
                       phase_characterization, serve)
from .experiments import ExperimentConfig, run_localization, run_mapping, scene_codebook, write_error_table
from .greedyopt import config_to_bits, greedy_optimize
from .pattern import Codebook, SteeringTask, build_codebook, optimal_config, sweep_pattern
from .phasecfg import QuantizationGrid, quantize_aligned
from .protocol import SensingSetup, SimulatedMeasurement, beam_sweep, localize, map_scatterers

log = logging.getLogger("rislocus")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _bits(s: str) -> float:
    if s in ("inf", "continuous"):
        return np.inf
    b = int(s)
    if b < 1:
        raise argparse.ArgumentTypeError("bits must be >= 1 or 'inf'")
    return b


def resolve_seed(arg) -> int:
    if arg is not None:
        return int(arg)
    env = os.environ.get("RIS_LOCUS_SEED")
    return int(env) if env not in (None, "") else 0


def _file_digest(path) -> str | None:
    if path is None or not Path(path).is_file():
        return None
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir: Path, args: argparse.Namespace, seed: int, outputs: list[str]) -> Path:
    params = {k: (str(v) if isinstance(v, (float, Path)) else v) for k, v in sorted(vars(args).items())
              if k != "func"}
    inputs = {k: _file_digest(getattr(args, k, None)) for k in ("scene", "codebook", "config")}
    blob = json.dumps({"params": params, "inputs": inputs, "seed": seed}, sort_keys=True)
    man = {
        "command": args.command,
        "params": params,
        "inputs_sha256": inputs,
        "config_hash": hashlib.sha256(blob.encode()).hexdigest(),
        "seed": seed,
        "versions": {"rislocus": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "outputs": outputs,
    }
    p = out_dir / "manifest.json"
    p.write_text(json.dumps(man, indent=2))
    return p


def _ris_carrier(args) -> tuple[ArrayGeometry, CarrierSpec]:
    carrier = CarrierSpec(args.fc)
    lam = carrier.wavelength
    return ArrayGeometry(args.n, 1, args.spacing * lam, args.spacing * lam), carrier


def cmd_pattern(args, out: Path, seed: int) -> list[str]:
    geom, carrier = _ris_carrier(args)
    inc, tgt = Direction.from_degrees(args.incident), Direction.from_degrees(args.target)
    cfg = optimal_config(SteeringTask(inc, tgt), geom, carrier)
    if not np.isinf(args.bits):
        grid = QuantizationGrid.one_bit_quadrature() if args.bits == 1 else QuantizationGrid(int(args.bits))
        cfg = quantize_aligned(cfg, grid)
    az = np.deg2rad(np.linspace(-90, 90, args.points))
    s = sweep_pattern(cfg, inc, geom, carrier, az)
    s.to_csv(out / "pattern.csv")
    print(json.dumps({"peak_deg": float(np.rad2deg(s.peak))}))
    return ["pattern.csv"]


def cmd_codebook(args, out: Path, seed: int) -> list[str]:
    targets = np.deg2rad(np.arange(args.start, args.stop + args.step / 2, args.step))
    if args.scene:
        cb = scene_codebook(Scene.load(args.scene), targets, args.bits)
    else:
        geom, carrier = _ris_carrier(args)
        grid = None
        if not np.isinf(args.bits):
            grid = QuantizationGrid.one_bit_quadrature() if args.bits == 1 else QuantizationGrid(int(args.bits))
        cb = build_codebook(Direction.from_degrees(args.incident), targets, geom, carrier, grid=grid)
    cb.save(out / "codebook.json")
    return ["codebook.json"]


def _load_codebook(args, scene: Scene) -> Codebook:
    if args.codebook:
        return Codebook.load(args.codebook)
    targets = np.deg2rad(np.arange(-80, 80.001, 2.0))
    return scene_codebook(scene, targets, args.bits)


def cmd_sweep(args, out: Path, seed: int) -> list[str]:
    if args.remote:
        cb = Codebook.load(args.codebook) if args.codebook else None
        if cb is None:
            raise UsageError("--remote sweep needs --codebook")
        with RemoteRIS.from_address(args.remote) as ris:
            dims = ris.dims
            powers = np.array([ris.power(config_to_bits(e.config, dims), args.pol) for e in cb.entries])
        idx = int(np.argmax(powers))
    else:
        if not args.scene:
            raise UsageError("sweep needs --scene or --remote")
        scene = Scene.load(args.scene)
        cb = _load_codebook(args, scene)
        idx, powers = beam_sweep(cb, SimulatedMeasurement(scene, args.pilots, args.sigma2, seed))
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["entry", "target_deg", "power_linear", "power_db"])
        for k, (e, p) in enumerate(zip(cb.entries, powers)):
            w.writerow([k, repr(float(np.rad2deg(e.target.azimuth))), repr(float(p)),
                        repr(float(10 * np.log10(p))) if p > 0 else "-inf"])
    print(json.dumps({"best_entry": idx, "best_target_deg": float(np.rad2deg(cb.entries[idx].target.azimuth))}))
    return ["sweep.csv"]


def _experiment(args, seed: int) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.scene:
        cfg.scene = args.scene
    cfg.seed = seed
    return cfg


def _tau(scene: Scene, tau_std: float, seed: int) -> float:
    tau = float(np.linalg.norm(scene.rx.position - scene.ris.position) / SPEED_OF_LIGHT)
    if tau_std > 0:
        tau = max(tau + tau_std * np.random.default_rng([seed, 2]).standard_normal(), 1e-12)
    return tau


def cmd_localize(args, out: Path, seed: int) -> list[str]:
    if args.grid:
        res = run_localization(_experiment(args, seed))
        write_error_table(res["table"], out / "localization_errors.csv")
        (out / "localization.json").write_text(json.dumps(res, indent=2))
        print(json.dumps(res["table"]))
        return ["localization.json", "localization_errors.csv"]
    if not args.scene:
        raise UsageError("localize needs --scene (or --grid with --config)")
    scene = Scene.load(args.scene)
    cb = _load_codebook(args, scene)
    meas = SimulatedMeasurement(scene, args.pilots, args.sigma2, seed)
    setup = SensingSetup.from_scene(scene, meas.x)
    z = float(scene.rx.position[2] - scene.ris.position[2]) if args.z is None else args.z
    r = localize(meas, cb, setup, z, _tau(scene, args.tau_std, seed), use_music=not args.no_music)
    res = {"phi_est_deg": float(np.rad2deg(r.phi_est)), "phi_ue_deg": float(np.rad2deg(r.phi_ue)),
           "phi_sweep_deg": float(np.rad2deg(r.phi_sweep)), "tau_est_s": r.tau_est, "r_est_m": r.r_est,
           "z_m": r.z, "position_ris_frame": r.position.tolist(), "world_position": r.world_position.tolist(),
           "true_world_position": scene.rx.position.tolist(), "sweep_index": r.sweep_index,
           "measurements": r.measurements}
    (out / "localization.json").write_text(json.dumps(res, indent=2))
    print(json.dumps({"world_position": res["world_position"], "phi_est_deg": res["phi_est_deg"]}))
    return ["localization.json"]


def cmd_map(args, out: Path, seed: int) -> list[str]:
    if args.grid:
        res = run_mapping(_experiment(args, seed), bits=args.bits)
        if "table" in res:
            write_error_table(res["table"], out / "mapping_errors.csv")
        (out / "mapping.json").write_text(json.dumps(res, indent=2))
        print(json.dumps(res.get("table", {}) | {"missed": res["missed"]}))
        return ["mapping.json"] + (["mapping_errors.csv"] if "table" in res else [])
    if not args.scene:
        raise UsageError("map needs --scene (or --grid with --config)")
    scene = Scene.load(args.scene)
    cb = _load_codebook(args, scene)
    meas = SimulatedMeasurement(scene, args.pilots, args.sigma2, seed)
    setup = SensingSetup.from_scene(scene, meas.x)
    z = float(scene.rx.position[2] - scene.ris.position[2]) if args.z is None else args.z
    loc = localize(meas, cb, setup, z, _tau(scene, args.tau_std, seed))
    mr = map_scatterers(meas, cb, loc, setup)
    with open(out / "scatterers.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["entry", "x", "y", "z", "nlos_azimuth_deg", "residual_power"])
        for s in mr.scatterers:
            w.writerow([s.entry_index, *map(repr, map(float, s.position)),
                        repr(float(np.rad2deg(s.nlos_azimuth))), repr(s.residual_power)])
    best = mr.strongest()
    res = {"ue_world_position": loc.world_position.tolist(),
           "strongest": None if best is None else best.position.tolist(),
           "count": len(mr.scatterers), "diagnostics": mr.diagnostics}
    (out / "mapping.json").write_text(json.dumps(res, indent=2))
    print(json.dumps({"strongest": res["strongest"], "count": res["count"]}))
    return ["scatterers.csv", "mapping.json"]


def _element(args) -> ElementModel:
    return ElementModel(dispersive=args.dispersive, slope_deg_per_mhz=args.slope)


def cmd_greedy(args, out: Path, seed: int) -> list[str]:
    if args.remote:
        with RemoteRIS.from_address(args.remote) as ris:
            phi, trace = greedy_optimize(lambda m: ris.power(m, args.pol), ris.dims, args.iters)
    else:
        if not args.scene:
            raise UsageError("greedy needs --scene or --remote")
        model = EmulatorModel(Scene.load(args.scene), element=_element(args), seed=seed)
        phi, trace = greedy_optimize(lambda m: model.power(m, args.pol), model.dims, args.iters)
    trace.to_csv(out / "trace.csv")
    np.savetxt(out / "config_bits.txt", phi, fmt="%d", delimiter="")
    print(json.dumps({"final_power_db": float(10 * np.log10(trace.final_power)),
                      "probes": len(trace.steps)}))
    return ["trace.csv", "config_bits.txt"]


def cmd_emulate(args, out: Path, seed: int) -> list[str]:
    if not args.scene:
        raise UsageError("emulate needs --scene")
    write_manifest(out, args, seed, [])
    serve(args.host, args.port, Scene.load(args.scene), seed, element=_element(args),
          noise_std=args.noise_std, latency_ms=args.latency_ms, realtime=args.realtime)
    return []


def cmd_characterize(args, out: Path, seed: int) -> list[str]:
    if not args.remote:
        raise UsageError("characterize needs --remote host:port")
    pols = tuple(args.pols)
    with RemoteRIS.from_address(args.remote) as ris:
        table = phase_characterization(ris, pols)
        n = len(next(iter(table.values())))
    freqs = np.linspace(FREQ_START, FREQ_STOP, n)
    with open(out / "phase_difference.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["freq_hz"] + [f"dphi_deg_{p}" for p in pols])
        for i, f in enumerate(freqs):
            w.writerow([repr(float(f))] + [repr(float(table[p][i])) for p in pols])
    print(json.dumps({p: {"min": float(np.min(v)), "max": float(np.max(v))} for p, v in table.items()}))
    return ["phase_difference.csv"]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (falls back to $RIS_LOCUS_SEED, then 0)")
    common.add_argument("--out-dir", type=Path, default=Path("out"))
    common.add_argument("--scene", default=None, help="scene JSON")
    common.add_argument("--codebook", default=None, help="codebook JSON")
    common.add_argument("--bits", type=_bits, default=np.inf, help="phase bits, or 'inf'")
    common.add_argument("--remote", default=None, help="emulator address host:port")
    common.add_argument("-v", "--verbose", action="store_true")

    array = _Parser(add_help=False)
    array.add_argument("--n", type=int, default=32, help="elements of a linear RIS")
    array.add_argument("--spacing", type=float, default=0.5, help="pitch in wavelengths")
    array.add_argument("--fc", type=float, default=3.5e9)
    array.add_argument("--incident", type=float, default=0.0, help="incident azimuth, degrees")

    sim = _Parser(add_help=False)
    sim.add_argument("--pilots", type=int, default=64)
    sim.add_argument("--sigma2", type=float, default=0.0)
    sim.add_argument("--z", type=float, default=None, help="UE height over the RIS (default: from scene)")
    sim.add_argument("--tau-std", type=float, default=0.0, help="ranging noise std, seconds")
    sim.add_argument("--grid", action="store_true", help="run the UE-grid experiment instead")
    sim.add_argument("--config", default=None, help="experiment config JSON for --grid")

    elem = _Parser(add_help=False)
    elem.add_argument("--dispersive", action="store_true")
    elem.add_argument("--slope", type=float, default=0.2, help="state-1 phase slope, deg/MHz")
    elem.add_argument("--pol", choices=POLS, default="HH")

    p = _Parser(prog="rislocus", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("pattern", parents=[common, array], help="pattern sweep to CSV")
    sp.add_argument("--target", type=float, required=True, help="target azimuth, degrees")
    sp.add_argument("--points", type=int, default=721)
    sp.set_defaults(func=cmd_pattern)

    sp = sub.add_parser("codebook", parents=[common, array], help="build a codebook JSON")
    sp.add_argument("--start", type=float, default=-80.0)
    sp.add_argument("--stop", type=float, default=80.0)
    sp.add_argument("--step", type=float, default=2.0)
    sp.set_defaults(func=cmd_codebook)

    sp = sub.add_parser("sweep", parents=[common, sim, elem], help="beam sweep, per-entry power CSV")
    sp.set_defaults(func=cmd_sweep)
    sp = sub.add_parser("localize", parents=[common, sim], help="sweep + ON/OFF + MUSIC localization")
    sp.add_argument("--no-music", action="store_true")
    sp.set_defaults(func=cmd_localize)
    sp = sub.add_parser("map", parents=[common, sim], help="scatterer mapping")
    sp.set_defaults(func=cmd_map)

    sp = sub.add_parser("greedy", parents=[common, elem], help="greedy 1-bit search")
    sp.add_argument("--iters", type=int, default=1)
    sp.set_defaults(func=cmd_greedy)

    sp = sub.add_parser("emulate", parents=[common, elem], help="serve the TCP emulator")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=7001)
    sp.add_argument("--noise-std", type=float, default=0.0)
    sp.add_argument("--latency-ms", type=float, default=10.0)
    sp.add_argument("--realtime", action="store_true", help="actually sleep the update latency")
    sp.set_defaults(func=cmd_emulate)

    sp = sub.add_parser("characterize", parents=[common], help="phase difference vs frequency")
    sp.add_argument("--pols", nargs="+", choices=POLS, default=["HH"])
    sp.set_defaults(func=cmd_characterize)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        seed = resolve_seed(args.seed)
        args.out_dir.mkdir(parents=True, exist_ok=True)
        outputs = args.func(args, args.out_dir, seed)
        write_manifest(args.out_dir, args, seed, outputs)
        return 0
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # noqa: BLE001 - reported as JSON
        code = 2 if isinstance(exc, UsageError) else 1
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return code


if __name__ == "__main__":
    sys.exit(main())

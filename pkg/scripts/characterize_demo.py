"""Phase difference between the all-1 and all-0 states versus frequency, ideal and dispersive elements."""
import argparse
import csv
from pathlib import Path

import numpy as np

from rislocus.channel import Scene
from rislocus.emulator import ElementModel, EmulatorModel, EmulatorServer, EmulatorState, RemoteRIS, phase_characterization

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scene", default=str(ROOT / "scenes" / "anechoic.json"))
    ap.add_argument("--slope", type=float, default=0.2, help="dispersive slope, deg/MHz")
    ap.add_argument("--out-dir", type=Path, default=Path("out/characterize"))
    args = ap.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    scene = Scene.load(args.scene)
    pols = ("HH", "VV", "HV")
    for name, element in (("ideal", ElementModel()),
                          ("dispersive", ElementModel(dispersive=True, slope_deg_per_mhz=args.slope))):
        model = EmulatorModel(scene, element=element)
        srv = EmulatorServer(("127.0.0.1", 0), EmulatorState(model))
        srv.start_background()
        try:
            with RemoteRIS(*srv.server_address[:2]) as cli:
                table = phase_characterization(cli, pols)
        finally:
            srv.shutdown()
            srv.server_close()
        f = model.freqs
        with open(args.out_dir / f"dphi_{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["freq_hz"] + [f"dphi_deg_{p}" for p in pols])
            for i in range(f.size):
                w.writerow([f[i]] + [table[p][i] for p in pols])
        band = np.abs(f - 3.5e9) <= 80e6
        dev = max(np.abs(table[p][band] - 180).max() for p in pols)
        print(f"{name:<11} max |dphi - 180| over 160 MHz: {dev:.3g} deg")


if __name__ == "__main__":
    main()

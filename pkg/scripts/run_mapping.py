"""Scatterer mapping error over the UE grid, for the continuous and 1-bit codebooks."""
import argparse
import json
from pathlib import Path

import numpy as np

from rislocus.experiments import ExperimentConfig, run_mapping, write_error_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="ExperimentConfig JSON")
    ap.add_argument("--out-dir", type=Path, default=Path("out/mapping"))
    ap.add_argument("--bits", nargs="+", default=["inf", "1"], help="codebook resolutions to run")
    args = ap.parse_args()
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    cfg.save(args.out_dir / "config.json")
    rows, summary = {}, {}
    for b in args.bits:
        bits = np.inf if b == "inf" else int(b)
        res = run_mapping(cfg, bits=bits)
        name = f"bits_{b}"
        summary[name] = res
        if res["errors_m"]:
            rows[name] = res["table"]["scatterer"]
            st = rows[name]
            print(f"{name:<10} average {st['average']:.3f} m  peak {st['peak']:.3f} m  "
                  f"std {res['std_m']:.3f} m  missed {res['missed']}")
        else:
            print(f"{name:<10} no scatterer found at any UE")
    write_error_table(rows, args.out_dir / "errors.csv")
    (args.out_dir / "mapping.json").write_text(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()

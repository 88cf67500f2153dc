"""Localization error table over the UE grid (continuous sweep, 1-bit sweep, 1-bit + MUSIC)."""
import argparse
import json
from pathlib import Path

from rislocus.experiments import ExperimentConfig, run_localization, write_error_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="ExperimentConfig JSON")
    ap.add_argument("--out-dir", type=Path, default=Path("out/localization"))
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    args.out_dir.mkdir(parents=True, exist_ok=True)
    cfg.save(args.out_dir / "config.json")
    res = run_localization(cfg)
    write_error_table(res["table"], args.out_dir / "errors.csv")
    (args.out_dir / "errors_per_ue.json").write_text(json.dumps(res["errors_deg"], indent=2))
    print(f"{'method':<18}{'peak':>10}{'average':>10}{'variance':>10}   (degrees, {res['ue_count']} UEs)")
    for name, st in res["table"].items():
        print(f"{name:<18}{st['peak']:>10.3f}{st['average']:>10.3f}{st['variance']:>10.3f}")


if __name__ == "__main__":
    main()

"""Run the cross-validated experiment for several master seeds and compare distilled vs baseline F1.

    python scripts/run_directional.py --config configs/directional.toml --seeds 0 1 2 3 4
"""

import argparse
import json
import logging
import time
from pathlib import Path

from blekd.config import load_config
from blekd.evaluate import write_report
from blekd.experiment import directional_summary, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--config", default="configs/directional.toml")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--out", help="overrides out_dir")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = load_config(args.config)
    out = Path(args.out or cfg.out_dir)
    reports = []
    for seed in args.seeds:
        cfg.seed = seed
        t0 = time.perf_counter()
        report = run_experiment(cfg)
        write_report(report, out / f"seed{seed}")
        reports.append(report)
        logging.info("seed %d done in %.0f s", seed, time.perf_counter() - t0)
    summary = directional_summary(reports)
    (out / "directional.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    print(json.dumps(summary, indent=1, sort_keys=True))


if __name__ == "__main__":
    main()

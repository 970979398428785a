"""Generate the dataset once, then run both experiments for one shipped config.

    python3 scripts/run_benchmark.py cigre out/cigre
    python3 scripts/run_benchmark.py rural out/rural
"""
import argparse
import logging
import os
import sys

from lvsurrogate.cli import dispatch

HERE = os.path.dirname(os.path.abspath(__file__))

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("config", choices=["cigre", "rural"])
    ap.add_argument("out_dir")
    ap.add_argument("--jobs", default="1")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    config = os.path.join(HERE, "..", "configs", f"{args.config}.json")
    dataset = os.path.join(args.out_dir, "dataset.csv")
    os.makedirs(args.out_dir, exist_ok=True)
    steps = [["dataset", "--config", config, "--jobs", args.jobs, "-o", dataset]]
    for exp in ("exp1", "exp2"):
        steps.append([exp, "--config", config, "--dataset", dataset, "--out-dir", args.out_dir])
    for argv in steps:
        code = dispatch(argv)
        if code:
            sys.exit(code)

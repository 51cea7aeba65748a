"""Burgers without source under sinusoidal disturbances (runs the CLI compare verb)."""

import argparse
import sys
from pathlib import Path

from hjisynth.cli import main as cli_main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "test1_nosource.yaml"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(CONFIG))
    ap.add_argument("--out", default="runs/burgers_sinusoids")
    ap.add_argument("--dim", type=int)
    ap.add_argument("--degree", type=int)
    a = ap.parse_args()
    argv = ["compare", "--config", a.config, "--out", a.out]
    if a.dim:
        argv += ["--dim", str(a.dim)]
    if a.degree:
        argv += ["--degree", str(a.degree)]
    code = cli_main(argv)
    print((Path(a.out) / "comparison.csv").read_text() if code == 0 else f"compare exited with code {code}")
    sys.exit(code)


if __name__ == "__main__":
    main()

"""Degenerate Zeldovich equation under the piecewise-constant disturbance w_c."""

import argparse

from _common import compare
from hjisynth import closed_loop as cl
from hjisynth.pde import discretize, zeldovich


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dim", type=int, default=8)
    ap.add_argument("--degree", type=int, default=2)
    ap.add_argument("--gammas", type=float, nargs="+", default=[0.3, 1.0])
    ap.add_argument("--horizon", type=float, default=5.0)
    a = ap.parse_args()
    ds = discretize(zeldovich(), a.dim)
    compare(ds, a.degree, a.gammas, [cl.Scenario("w_c", ds.initial_state(), cl.piecewise_wc())], a.horizon)


if __name__ == "__main__":
    main()

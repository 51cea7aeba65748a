"""Allen-Cahn with a linear (X w) or cubic (X^3 w) disturbance channel, w = 1."""

import argparse

from _common import compare
from hjisynth import closed_loop as cl
from hjisynth.pde import InitialCondition, allen_cahn_cubic, allen_cahn_linear, discretize


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("channel", choices=["linear", "cubic"])
    ap.add_argument("--dim", type=int, default=6)
    ap.add_argument("--degree", type=int, default=2)
    ap.add_argument("--gammas", type=float, nargs="+")
    ap.add_argument("--horizon", type=float, default=10.0)
    a = ap.parse_args()
    w = cl.DisturbanceSignal.constant(1.0)
    if a.channel == "linear":
        ds = discretize(allen_cahn_linear(), a.dim)
        scenarios = [cl.Scenario(f"kappa={k}", ds.initial_state(InitialCondition("bump", k)), w) for k in (0.1, 0.5, 1.0)]
        gammas = a.gammas or [1.63]
    else:
        ds = discretize(allen_cahn_cubic(), a.dim)
        scenarios = [cl.Scenario("w=1", ds.initial_state(), w)]
        gammas = a.gammas or [8.22]
    compare(ds, a.degree, gammas, scenarios, a.horizon)


if __name__ == "__main__":
    main()

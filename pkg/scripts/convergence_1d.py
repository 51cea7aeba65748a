"""1D HJI convergence study against the closed-form value function."""

import argparse

from hjisynth.convergence import convergence_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--degrees", type=int, nargs="+", default=[2, 4, 6, 8, 10])
    ap.add_argument("--epsilon", type=float, default=1e-6)
    a = ap.parse_args()
    print(f"{'degree':>6} {'error_V':>11} {'error_u':>11} {'iters':>6} converged")
    for r in convergence_table(tuple(a.degrees), epsilon=a.epsilon):
        print(f"{r.degree:>6} {r.error_V:11.3e} {r.error_u:11.3e} {r.iterations:>6} {r.converged}")


if __name__ == "__main__":
    main()

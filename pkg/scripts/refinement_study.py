"""Refinement of the tee star: energy, residuals and iterations versus segment count."""
import argparse
import time

import numpy as np

from rodjunction import post, scenarios
from rodjunction.solver import SolverOptions, solve


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--segments", type=int, nargs="+", default=[16, 32, 64, 128, 256])
    ap.add_argument("--g-tol", type=float, default=1e-10)
    ap.add_argument("--scale", type=float, default=1.0, help="load multiplier")
    args = ap.parse_args()
    net = scenarios.tee_star(args.scale)
    print("N,energy,dE,iterations,ode_couple,junction_couple,junction_couple_discrete,max_end_couple,seconds")
    prev = None
    for N in args.segments:
        t0 = time.perf_counter()
        fld, trace = solve(net, SolverOptions(segments=N, g_tol=args.g_tol))
        dt = time.perf_counter() - t0
        rep = post.residuals(fld, net)
        r = rep.residuals
        dE = "" if prev is None else f"{abs(rep.energy - prev):.3e}"
        prev = rep.energy
        print(f"{N},{rep.energy:.12f},{dE},{len(trace.iterations) - 1},{max(r['ode_couple_residual']):.3e},"
              f"{r['junction_couple_residual']:.3e},{r['junction_couple_discrete']:.3e},{max(r['end_couple_norms']):.3e},{dt:.2f}")


if __name__ == "__main__":
    main()

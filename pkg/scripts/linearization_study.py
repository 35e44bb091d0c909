"""Nonlinear versus linearized centerlines of the symmetric star as the loads shrink."""
import argparse

import numpy as np

from rodjunction import post, reference, scenarios
from rodjunction.solver import SolverOptions, solve


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--segments", type=int, default=128)
    ap.add_argument("--oversample", type=int, default=8, help="linear oracle uses segments*oversample")
    ap.add_argument("--eps", type=float, nargs="+", default=[2e-2, 1e-2, 5e-3, 2.5e-3, 1.25e-3])
    ap.add_argument("--g-tol", type=float, default=5e-12)
    args = ap.parse_args()
    star = scenarios.symmetric_star()
    N, K = args.segments, args.oversample
    print("eps,max_deflection,discrepancy,ratio")
    prev = None
    for eps in args.eps:
        net = star.scaled_loads(eps)
        fld, _ = solve(net, SolverOptions(segments=N, g_tol=args.g_tol))
        ys = post.recover_centerline(fld, net)
        lin = reference.solve_linearized(net, N * K)
        err = max(np.abs(y - yl[::K]).max() for y, yl in zip(ys, lin.y))
        defl = max(np.abs(u).max() for u in lin.u)
        ratio = "" if prev is None else f"{prev / err:.3f}"
        prev = err
        print(f"{eps:g},{defl:.4e},{err:.4e},{ratio}")


if __name__ == "__main__":
    main()

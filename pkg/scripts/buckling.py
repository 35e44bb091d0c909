"""Euler strut: Hessian sign change near the critical load and post-buckled energies."""
import argparse

from rodjunction import post, scenarios
from rodjunction.solver import SolverOptions, energy, hessian_min_eig, init_field, solve


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--segments", type=int, default=32, help="per half rod")
    ap.add_argument("--h22", type=float, default=1.0)
    ap.add_argument("--factors", type=float, nargs="+", default=[0.5, 0.9, 0.99, 1.01, 1.1, 1.5, 2.0])
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    Pc = scenarios.euler_critical_load(args.h22, 1.0)
    stiff = (1.0, args.h22, args.h22)
    opts = SolverOptions(segments=args.segments)
    print(f"# P_c = {Pc:.6f}")
    print("P/Pc,lambda_min,E_straight,E_perturbed_solve,midpoint_deflection,termination")
    for f in args.factors:
        net = scenarios.euler_strut(f * Pc, stiffness=stiff)
        straight = init_field(net, opts)
        lam, _ = hessian_min_eig(straight, net, pin_junction=True)
        fld, trace = solve(net, SolverOptions(segments=args.segments, pin_junction=True, init="perturbed",
                                              seed=args.seed, amplitude=0.05, g_tol=1e-9))
        ys = post.recover_centerline(fld, net)
        # deflection of the junction relative to the chord between the two free ends
        a, b = ys[0][-1], ys[1][-1]
        chord = b - a
        rel = ys[0][0] - a
        t = rel @ chord / max(chord @ chord, 1e-300)
        defl = float(((rel - t * chord) ** 2).sum() ** 0.5)
        print(f"{f:g},{lam:.5e},{energy(straight, net):.8f},{energy(fld, net):.8f},{defl:.4e},{trace.reason}")


if __name__ == "__main__":
    main()

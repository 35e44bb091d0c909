"""Mesh convergence of H for the circle and square against classical constants."""
import argparse
import time

import numpy as np

from rodjunction import reference
from rodjunction.xsection import Material, SectionGeometry, compute_H


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lam", type=float, default=0.0)
    ap.add_argument("--mu", type=float, default=1.0)
    ap.add_argument("--edges", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.025])
    args = ap.parse_args()
    mat = Material(args.lam, args.mu)
    cases = [
        ("circle", SectionGeometry.circle(1.0), reference.classical_constants("circle", args.lam, args.mu, radius=1.0)),
        ("square", SectionGeometry.rectangle(1.0, 1.0), reference.classical_constants("rectangle", args.lam, args.mu, a=1.0, b=1.0)),
    ]
    print("section,target_edge,triangles,H11,H22,H33,rel_err_torsion,rel_err_bending,seconds")
    for name, geom, ref in cases:
        for edge in args.edges:
            t0 = time.perf_counter()
            sf = compute_H(geom, mat, edge)
            dt = time.perf_counter() - t0
            H = sf.H
            et = abs(H[0, 0] - ref["torsion"]) / ref["torsion"]
            eb = max(abs(H[1, 1] - ref["bending2"]) / ref["bending2"], abs(H[2, 2] - ref["bending3"]) / ref["bending3"])
            print(f"{name},{edge},{sf.mesh_triangles},{H[0, 0]:.8f},{H[1, 1]:.8f},{H[2, 2]:.8f},{et:.3e},{eb:.3e},{dt:.2f}")


if __name__ == "__main__":
    main()

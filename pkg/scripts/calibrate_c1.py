"""Print the empirical local-energy constants behind the calibrated C1."""
import argparse

from stochheat.ensemble import EnsembleSpec, Problem
from stochheat.lattice import make_grid
from stochheat.sde import constant_coefficients, gaussian_bump
from stochheat.verifiers import (CALIBRATION_RADII, CALIBRATION_WIDTHS, CALIBRATION_WINDOWS,
                                 calibrate_c1, check_caccioppoli)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--factor", type=float, default=2.0)
    args = ap.parse_args()
    grid = make_grid(1, 16.0, 256)
    print("width   r     R     tau1   tau2   ratio")
    for w in CALIBRATION_WIDTHS:
        p = Problem(grid, gaussian_bump(grid, 0.0, w), constant_coefficients(), args.T, 256)
        for r, R in CALIBRATION_RADII:
            for f1, f2 in CALIBRATION_WINDOWS:
                rep = check_caccioppoli(p, EnsembleSpec(1), 0.0, r, R, f1 * args.T, f2 * args.T)
                print(f"{w:<7.2f} {r:<5.2f} {R:<5.2f} {f1 * args.T:<6.3f} {f2 * args.T:<6.3f} {rep.ratio:.6f}")
    print(f"C1 = {calibrate_c1(T=args.T, factor=args.factor):.6f}")


if __name__ == "__main__":
    main()

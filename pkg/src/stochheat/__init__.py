"""Monte Carlo verification harness for quantitative unique continuation and
observability of the stochastic heat equation  d phi = (Lap phi + a phi) dt + b phi dW."""

__version__ = "0.1.0"

from .ensemble import EnsembleSpec, Problem, evaluate_paths, expect, summarize  # noqa: E402
from .lattice import Grid, Mask, ball_mask, cube_mask, cube_tiling, make_grid  # noqa: E402
from .sde import (Coefficients, constant_coefficients, gaussian_bump,  # noqa: E402
                  random_coefficients, solve_forward)
from .weights import WeightParams, weight_field  # noqa: E402

__all__ = [
    "EnsembleSpec", "Problem", "evaluate_paths", "expect", "summarize",
    "Grid", "Mask", "ball_mask", "cube_mask", "cube_tiling", "make_grid",
    "Coefficients", "constant_coefficients", "gaussian_bump", "random_coefficients",
    "solve_forward", "WeightParams", "weight_field",
]

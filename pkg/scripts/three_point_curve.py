#!/usr/bin/env python3
"""Optimal value curve for the canonical three-point instance.

Uniform reference, utility (0, 1, 2).  Writes both branches of the
value curve to CSV and prints the analytic endpoints for comparison.

Usage: python scripts/three_point_curve.py [output.csv]
"""

import csv
import math
import sys

import numpy as np

from infokernel import ExtendedKL, FiniteSpace, Measure, Utility
from infokernel.solver import special_values, value_curve

space = FiniteSpace.of_size(3)
x = Utility(space, np.array([0.0, 1.0, 2.0]))
functional = ExtendedKL(Measure(space, np.full(3, 1 / 3)), mode="simplex")

sv = special_values(x, functional)
print(f"lambda0 = {sv.lambda0:.6f}   lambda_bar = {sv.lambda_bar_upper:.6f} "
      f"(ln 3 = {math.log(3):.6f})")
print(f"upsilon0 = {sv.upsilon0_upper:.6f}   upsilon_bar = {sv.upsilon_bar:.6f}")

grid = np.linspace(0.0, math.log(3), 60)
upper = value_curve(x, functional, grid)
lower = value_curve(x, functional, grid, branch="lower")

out = sys.argv[1] if len(sys.argv) > 1 else "three_point_curve.csv"
with open(out, "w", newline="") as fh:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["lambda", "upper_upsilon", "lower_upsilon", "beta_inverse"])
    for hi, lo in zip(upper.samples, lower.samples):
        writer.writerow([f"{hi.lam:.9g}", f"{hi.upsilon:.9g}",
                         f"{lo.upsilon:.9g}", f"{hi.beta_inverse:.9g}"])
print(f"wrote {len(grid)} budget points to {out}")

#!/usr/bin/env python3
"""Deterministic-vs-randomized gap for the binary agreement channel.

Utility x(a,b) = [a = b], uniform input.  At the budget where the
optimal channel reaches expected utility 0.9 the best feasible
deterministic kernel is still a constant map at 0.5; the gap only
closes once the budget reaches ln 2 and the identity map becomes
feasible.  Sweeps the budget and writes one CSV row per point.

Usage: python scripts/binary_separation.py [output.csv]
"""

import csv
import math
import sys

import numpy as np

from infokernel import FiniteSpace, ProbMeasure
from infokernel.separation import separation_experiment

x = np.array([[1.0, 0.0], [0.0, 1.0]])
input_dist = ProbMeasure(FiniteSpace.of_size(2, "b"), np.array([0.5, 0.5]))

lam_star = math.log(2) - (-0.9 * math.log(0.9) - 0.1 * math.log(0.1))
report = separation_experiment(x, input_dist, lam_star)
print(f"budget {lam_star:.6f} nats:")
print(f"  channel: E = {report.channel.expected_utility:.6f} at "
      f"beta = {report.channel.beta:.6f} (ln 9 = {math.log(9):.6f})")
print(f"  best deterministic: map {report.best_map.images.tolist()}, "
      f"E = {report.best_det_value:.6f}")
print(f"  gap = {report.gap:.6f}")

out = sys.argv[1] if len(sys.argv) > 1 else "binary_separation.csv"
grid = np.linspace(0.02, math.log(2), 30)
with open(out, "w", newline="") as fh:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["lambda", "best_det_E", "channel_E", "gap"])
    for lam in grid:
        rep = separation_experiment(x, input_dist, float(lam), dual_check=False)
        writer.writerow([f"{lam:.9g}", f"{rep.best_det_value:.9g}",
                         f"{rep.channel.expected_utility:.9g}", f"{rep.gap:.9g}"])
print(f"wrote {len(grid)} sweep points to {out}")

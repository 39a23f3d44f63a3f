"""Diffraction map of the single slit at desk scale.

Runs a coarse sweep of impact parameters through the 4.07 lambda_c slit and
prints the exit angle, the local Lyapunov exponent and the fold positions.

    python demos/single_slit_map.py [b] [n_runs] [workers]
"""

import sys

import numpy as np

from pilotwave import stats
from pilotwave.experiment import DESK_GRID, EnsembleSpec, RunConfig, evenly_spaced, run_ensemble
from pilotwave.geometry import default_specs

b = float(sys.argv[1]) if len(sys.argv) > 1 else 16.7
n = int(sys.argv[2]) if len(sys.argv) > 2 else 40
workers = int(sys.argv[3]) if len(sys.argv) > 3 else 1

slit = default_specs()["single"]
spec = EnsembleSpec(f"demo-b{b:g}", RunConfig(b=b, apparatus=slit, grid=DESK_GRID),
                    evenly_spaced(0.5 * slit.slit_width, n))
results = run_ensemble(spec, workers=workers,
                       progress=lambda k, total: print(f"\r{k}/{total}", end="", flush=True))
print()

dmap = stats.diffraction_map(results)
y, ell = stats.lyapunov_local(dmap)
print(f"{'y':>8} {'theta':>10} {'lyapunov':>9}")
for row in zip(y, dmap.theta, ell):
    print("{:8.3f} {:10.5f} {:9.2f}".format(*row))
try:
    peaks, spacing = stats.fold_peaks(dmap, window=(-1.2, 1.2))
    print("folds at", np.round(peaks, 3), f"mean spacing {spacing:.3f} lambda_c")
except stats.StatsError as exc:
    print("fold analysis:", exc)
print("smoothness:", stats.smoothness_classifier(dmap).verdict)

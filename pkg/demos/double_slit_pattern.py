"""Double-slit pattern from a results CSV against the two candidate models.

Produce the CSV with ``pilotwave sweep --preset double --desk-scale --out runs``
and pass its path here.

    python demos/double_slit_pattern.py runs/double-b25.csv
"""

import sys

from pilotwave.cli import analyze, load_results

results, meta, apparatus = load_results(sys.argv[1])
a = analyze(results, apparatus)
print(f"{a.n_good} of {a.n_runs} runs crossed the apparatus")
print(f"lambda_eff = {a.lam_eff:.4f} lambda_c")
print(f"{'theta_lo':>9} {'theta_hi':>9} {'weight':>8} {'Fraunhofer':>10} {'Gaussian':>9}")
e = a.hist.bin_edges
for k in range(a.hist.n_bins):
    print(f"{e[k]:9.4f} {e[k + 1]:9.4f} {a.hist.weights[k]:8.2f} "
          f"{a.fit_fraunhofer.expected[k]:10.2f} {a.fit_gaussian.expected[k]:9.2f}")
for name, rep in (("Fraunhofer", a.fit_fraunhofer), ("Gaussian", a.fit_gaussian)):
    print(f"{name:>10}: chi2_P/nu = {rep.reduced_pearson:.2f}, chi2_Y/nu = {rep.reduced_yates:.2f}, "
          f"nu = {rep.dof}")

"""Free particle: equilibration and the wave it carries.

Launches a particle with p0 = 0.3 in empty space, waits for it to settle,
and compares the wavelength of the field ahead of it with lambda_c/(gamma u).

    python demos/free_particle.py [duration_in_Tc]
"""

import math
import sys

from pilotwave.experiment import pilot_wavelength, run_free_particle
from pilotwave.particle import trailing_drift
from pilotwave.units import T_C

duration = float(sys.argv[1]) if len(sys.argv) > 1 else 700.0
run = run_free_particle(b=16.7, p0=0.3, duration=duration)
t = run.trajectory["t"] / T_C
u = run.u_steady
lam_db = math.sqrt(1 - u * u) / u

print(f"simulated {t[-1]:.0f} T_c")
print(f"launch speed      {0.3 / math.sqrt(1.09):.4f} c")
print(f"steady speed      {u:.4f} c")
print(f"trailing drift    {trailing_drift(run.trajectory, n_periods=50):.1e}")
print(f"lambda_dB         {lam_db:.2f} lambda_c")
print(f"pilot wavelength  {pilot_wavelength(run.line_x, run.line_phi):.2f} lambda_c")

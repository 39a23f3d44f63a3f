"""Classical pilot-wave diffraction: a Klein-Gordon field driving a point particle.

Modules
-------
field       grid, Klein-Gordon stepping, source deposition and sampling
particle    relativistic particle update and steady-state measurement
geometry    slit apparatus potentials
experiment  single runs, outcome classification, ensembles
stats       Fraunhofer models, histograms, chi-square, diffraction-map analysis
cli         command-line entry point
"""

__version__ = "0.1.0"

from .units import LAMBDA_C, T_C, B_MAX  # noqa: E402

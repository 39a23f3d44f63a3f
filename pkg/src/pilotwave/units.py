"""Unit conventions.

Internally everything is in natural units (hbar = m = c = 1), so the Compton
wavelength and period are both 2*pi.  Public configuration files and CSV
outputs quote lengths in Compton wavelengths and times in Compton periods.
"""

import math

LAMBDA_C = 2.0 * math.pi
T_C = 2.0 * math.pi

# Above this coupling the wave-induced inertial-mass correction is no
# longer negligible, so the model equations do not apply.
B_MAX = 25.0


def to_natural(length_in_lambda_c):
    return length_in_lambda_c * LAMBDA_C


def to_lambda_c(length):
    return length / LAMBDA_C

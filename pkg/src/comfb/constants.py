"""Physical constants, CODATA 2018 (h and k_B are exact SI definitions)."""

import math

PLANCK_H = 6.62607015e-34        # J s, exact
HBAR = PLANCK_H / (2.0 * math.pi)
K_B = 1.380649e-23               # J / K, exact
C_LIGHT = 299792458.0            # m / s, exact

"""Independent reference values used across the tests."""

import math

import numpy as np
from scipy.optimize import brentq

# roots of cosh(k) cos(k) = 1, bracketed around (j + 1/2) pi
def clamped_beam_wavenumbers(count: int) -> np.ndarray:
    out = []
    for j in range(1, count + 1):
        c = (j + 0.5) * math.pi
        out.append(brentq(lambda k: math.cos(k) - 1.0 / math.cosh(k), c - 0.5, c + 0.5, xtol=1e-15))
    return np.array(out)


# frozen from the bracketing above; guards against a broken root finder
CLAMPED_BEAM_K = (4.730040744862704, 7.853204624095838, 10.995607838001671,
                  14.137165491257464, 17.278759657399480)

# hinged beam on (0, 1): mu_j = (j pi)^4
def hinged_beam_mus(count: int) -> np.ndarray:
    return (np.arange(1, count + 1) * math.pi) ** 4

# identity metric, d = 2: smallest |t| on the unit sphere where a root of q_k is real
THETA0_IDENTITY = math.sin(math.pi / 8)

# |q_1| + |q_2| >= |q_1 - q_2| = 2 |sigma + i t_sigma|^2 >= 2 t_sigma^2
def char_floor_lower_bound(sigma_floor: float) -> float:
    return 2.0 * sigma_floor**2

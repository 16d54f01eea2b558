"""Closed-form physics of the feedback-modified cavity: effective rates,
drive amplitude, thermal occupations, cooperativity and the loop-delay bound.

All functions are pure. Rates may be passed either in SI (rad/s) or in
mechanical-frequency units; the formulas are homogeneous in the rate unit
except where an SI-only quantity (power, wavelength, temperature, seconds)
enters, which is noted per function.
"""

import math

from .constants import C_LIGHT, HBAR, K_B


def effective_decay(kappa_a: float, r_b: float, theta: float = 0.0) -> float:
    """Cavity decay rate as modified by the feedback loop.

    kappa_fb = kappa_a * (1 - 2 r_b cos(theta)).  The result is negative
    for r_b cos(theta) > 1/2 (net gain); admissibility is the caller's call.
    """
    if kappa_a <= 0.0:
        raise ValueError("kappa_a must be positive")
    if not 0.0 <= r_b < 1.0:
        raise ValueError("r_b must lie in [0, 1)")
    return kappa_a * (1.0 - 2.0 * r_b * math.cos(theta))


def effective_detuning(delta_a: float, kappa_a: float, r_b: float,
                       theta: float = 0.0) -> float:
    """Cavity-laser detuning as modified by the feedback loop.

    delta_fb = delta_a - 2 kappa_a r_b sin(theta); equals delta_a at theta=0.
    """
    if kappa_a <= 0.0:
        raise ValueError("kappa_a must be positive")
    if not 0.0 <= r_b < 1.0:
        raise ValueError("r_b must lie in [0, 1)")
    return delta_a - 2.0 * kappa_a * r_b * math.sin(theta)


def transmission(r_b: float) -> float:
    """Beam-splitter transmission t_b with t_b^2 + r_b^2 = 1."""
    if not 0.0 <= r_b < 1.0:
        raise ValueError("r_b must lie in [0, 1)")
    return math.sqrt(1.0 - r_b * r_b)


def drive_amplitude_from_power(power_w: float, wavelength_m: float,
                               kappa_a_si: float) -> float:

    """Laser drive amplitude E = sqrt(2 kappa_a P_l / (hbar omega_l)), in rad/s.

    SI in, SI out: kappa_a_si in rad/s, power in watts, wavelength in meters.
    Divide by the mechanical frequency (rad/s) for dimensionless units.
    """
    if power_w <= 0.0 or wavelength_m <= 0.0 or kappa_a_si <= 0.0:
        raise ValueError("power, wavelength and kappa_a must be positive")
    omega_l = 2.0 * math.pi * C_LIGHT / wavelength_m
    return math.sqrt(2.0 * kappa_a_si * power_w / (HBAR * omega_l))


def thermal_occupation(omega_si: float, temperature_k: float) -> float:
    """Bose-Einstein mean occupation [exp(hbar w / k_B T) - 1]^-1.

    omega_si in rad/s.  Returns 0 at T = 0.
    """
    if omega_si <= 0.0:
        raise ValueError("omega must be positive")
    if temperature_k < 0.0:
        raise ValueError("temperature must be non-negative")
    if temperature_k == 0.0:
        return 0.0
    return 1.0 / math.expm1(HBAR * omega_si / (K_B * temperature_k))


def effective_cooperativity(g: float, mean_photon_number_avg: float,
                            kappa_fb: float, kappa_b: float) -> float:
    """Cycle-averaged cooperativity 4 g^2 <|alpha|^2>_T / (kappa_fb kappa_b)."""
    if kappa_fb <= 0.0:
        raise ValueError("kappa_fb must be positive (gain regime: undefined)")
    if kappa_b <= 0.0:
        raise ValueError("kappa_b must be positive")
    return 4.0 * g * g * mean_photon_number_avg / (kappa_fb * kappa_b)


def delay_validity(kappa_a_si: float, r_b: float, t_delay_s: float,
                   threshold: float = 0.01) -> tuple[float, bool]:
    """Instantaneous-feedback check: ratio |2 kappa_a r_b t_d| and a pass flag.

    kappa_a_si in rad/s, delay in seconds.  The loop may be treated as
    delay-free when the ratio is far below one (default threshold 0.01).
    """
    if t_delay_s < 0.0:
        raise ValueError("delay must be non-negative")
    ratio = abs(2.0 * kappa_a_si * r_b * t_delay_s)
    return ratio, ratio < threshold

"""Compiled inner loops: joint mean-field + covariance right-hand side and a
Dormand-Prince 5(4) embedded adaptive stepper.

State layout (length 20, float64):
    y[0:4]   Re alpha, Im alpha, Re beta, Im beta
    y[4:20]  covariance matrix V, row-major 4x4

Parameter pack layout (length 19, float64), built by `pack_params` in
dynamics.py:
    0 kappa_fb   1 delta_fb   2 kappa_a   3 kappa_b   4 delta_a
    5 delta_c    6 omega_m    7 g         8 G_c       9 theta_c
    10 G_m      11 theta_m   12 t_b*E    13 r_b      14 theta
    15 d_a      16 d_b       17 omega_b  18 freq43 (omega_b, or omega_m for
                                                     the literal variant)

All kernels are deterministic: compiled without fastmath so results are
bit-reproducible across processes on one machine.
"""

import math

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_DIVERGED = 1
STATUS_STEP_UNDERFLOW = 2
STATUS_MAX_STEPS = 3

# generous ceiling over any physical state of this model (photon amplitudes
# reach ~1e6, covariance entries ~1e8 near instability); beyond it the cell
# is diverging and further integration only burns the step budget
_BLOWUP = 1.0e10


@njit(cache=True)
def mean_field_derivs(t, ar, ai, br, bi, p):
    """Time derivative of (Re a, Im a, Re b, Im b) for the classical means."""
    kfb = p[0]
    dfb = p[1]
    kb = p[3]
    dc = p[5]
    wm = p[6]
    g = p[7]
    Gc = p[8]
    thc = p[9]
    Gm = p[10]
    thm = p[11]
    tbE = p[12]
    wb = p[17]

    phic = dc * t - thc
    cc = math.cos(phic)
    sc = math.sin(phic)
    phim = wm * t - thm
    cm = math.cos(phim)
    sm = math.sin(phim)

    bp = 2.0 * br  # beta + conj(beta)
    dar = -kfb * ar + dfb * ai - g * bp * ai + 2.0 * Gc * (ar * cc - ai * sc) + tbE
    dai = -dfb * ar - kfb * ai + g * bp * ar - 2.0 * Gc * (ar * sc + ai * cc)
    dbr = -kb * br + wb * bi + 2.0 * Gm * (br * cm - bi * sm)
    dbi = -wb * br - kb * bi + g * (ar * ar + ai * ai) - 2.0 * Gm * (br * sm + bi * cm)
    return dar, dai, dbr, dbi


@njit(cache=True)
def fill_drift(t, ar, ai, br, bi, p, A):
    """Write the 4x4 drift matrix of the linearized quadrature dynamics."""
    kfb = p[0]
    dfb = p[1]
    kb = p[3]
    dc = p[5]
    wm = p[6]
    g = p[7]
    Gc = p[8]
    thc = p[9]
    Gm = p[10]
    thm = p[11]
    wb = p[17]
    w43 = p[18]

    phic = dc * t - thc
    Ga = 2.0 * Gc * math.cos(phic)
    za = 2.0 * Gc * math.sin(phic)
    phim = wm * t - thm
    Gmm = 2.0 * Gm * math.cos(phim)
    zm = 2.0 * Gm * math.sin(phim)

    dpr = dfb - 2.0 * g * br  # radiation-pressure-shifted detuning
    Gx = g * ar
    Gy = g * ai

    A[0, 0] = -kfb + Ga
    A[0, 1] = dpr - za
    A[0, 2] = -2.0 * Gy
    A[0, 3] = 0.0
    A[1, 0] = -dpr - za
    A[1, 1] = -kfb - Ga
    A[1, 2] = 2.0 * Gx
    A[1, 3] = 0.0
    A[2, 0] = 0.0
    A[2, 1] = 0.0
    A[2, 2] = -kb + Gmm
    A[2, 3] = wb - zm
    A[3, 0] = 2.0 * Gx
    A[3, 1] = 2.0 * Gy
    A[3, 2] = -w43 - zm
    A[3, 3] = -kb - Gmm


@njit(cache=True)
def rhs(t, y, p, dy, A):
    """Joint RHS: mean field plus dV/dt = A V + V A^T + D."""
    dar, dai, dbr, dbi = mean_field_derivs(t, y[0], y[1], y[2], y[3], p)
    dy[0] = dar
    dy[1] = dai
    dy[2] = dbr
    dy[3] = dbi

    fill_drift(t, y[0], y[1], y[2], y[3], p, A)

    for i in range(4):
        for j in range(4):
            s = 0.0
            for k in range(4):
                s += A[i, k] * y[4 + 4 * k + j] + y[4 + 4 * i + k] * A[j, k]
            dy[4 + 4 * i + j] = s
    dy[4 + 0] += p[15]
    dy[4 + 5] += p[15]
    dy[4 + 10] += p[16]
    dy[4 + 15] += p[16]


@njit(cache=True)
def _symmetrize(y):
    for i in range(4):
        for j in range(i + 1, 4):
            m = 0.5 * (y[4 + 4 * i + j] + y[4 + 4 * j + i])
            y[4 + 4 * i + j] = m
            y[4 + 4 * j + i] = m


@njit(cache=True)
def advance(t, y, p, t_end, h, rtol, atol, max_steps):
    """Integrate y in place from t to t_end with a Dormand-Prince 5(4) pair.

    Returns (t, h, status, steps_taken).  The covariance block is
    symmetrized after every accepted step.
    """
    n = y.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    k5 = np.empty(n)
    k6 = np.empty(n)
    k7 = np.empty(n)
    yt = np.empty(n)
    ynew = np.empty(n)
    A = np.empty((4, 4))

    if t_end <= t:
        return t, h, STATUS_OK, 0

    steps = 0
    while t < t_end:
        if steps >= max_steps:
            return t, h, STATUS_MAX_STEPS, steps
        if h > t_end - t:
            h = t_end - t
        hmin = 1.0e-13 * max(1.0, abs(t))
        if h < hmin:
            return t, h, STATUS_STEP_UNDERFLOW, steps

        rhs(t, y, p, k1, A)
        for i in range(n):
            yt[i] = y[i] + h * (0.2 * k1[i])
        rhs(t + 0.2 * h, yt, p, k2, A)
        for i in range(n):
            yt[i] = y[i] + h * (3.0 / 40.0 * k1[i] + 9.0 / 40.0 * k2[i])
        rhs(t + 0.3 * h, yt, p, k3, A)
        for i in range(n):
            yt[i] = y[i] + h * (44.0 / 45.0 * k1[i] - 56.0 / 15.0 * k2[i]
                                + 32.0 / 9.0 * k3[i])
        rhs(t + 0.8 * h, yt, p, k4, A)
        for i in range(n):
            yt[i] = y[i] + h * (19372.0 / 6561.0 * k1[i]
                                - 25360.0 / 2187.0 * k2[i]
                                + 64448.0 / 6561.0 * k3[i]
                                - 212.0 / 729.0 * k4[i])
        rhs(t + 8.0 / 9.0 * h, yt, p, k5, A)
        for i in range(n):
            yt[i] = y[i] + h * (9017.0 / 3168.0 * k1[i] - 355.0 / 33.0 * k2[i]
                                + 46732.0 / 5247.0 * k3[i] + 49.0 / 176.0 * k4[i]
                                - 5103.0 / 18656.0 * k5[i])
        rhs(t + h, yt, p, k6, A)
        for i in range(n):
            ynew[i] = y[i] + h * (35.0 / 384.0 * k1[i] + 500.0 / 1113.0 * k3[i]
                                  + 125.0 / 192.0 * k4[i] - 2187.0 / 6784.0 * k5[i]
                                  + 11.0 / 84.0 * k6[i])
        rhs(t + h, ynew, p, k7, A)

        # scaled RMS of the 5th-vs-4th order defect
        err = 0.0
        ok = True
        for i in range(n):
            e = h * (71.0 / 57600.0 * k1[i] - 71.0 / 16695.0 * k3[i]
                     + 71.0 / 1920.0 * k4[i] - 17253.0 / 339200.0 * k5[i]
                     + 22.0 / 525.0 * k6[i] - 1.0 / 40.0 * k7[i])
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            q = e / sc
            err += q * q
            if not math.isfinite(ynew[i]):
                ok = False
        if not ok:
            h *= 0.2
            continue
        err = math.sqrt(err / n)

        if err <= 1.0:
            t += h
            for i in range(n):
                y[i] = ynew[i]
            _symmetrize(y)
            steps += 1
            big = 0.0
            for i in range(n):
                if abs(y[i]) > big:
                    big = abs(y[i])
            if big > _BLOWUP:
                return t, h, STATUS_DIVERGED, steps
            if err == 0.0:
                fac = 5.0
            else:
                fac = min(5.0, max(0.2, 0.9 * err ** -0.2))
            h *= fac
        else:
            h *= max(0.2, 0.9 * err ** -0.2)
    return t, h, STATUS_OK, steps


@njit(cache=True)
def advance_sampled(t, y, p, sample_ts, out, h, rtol, atol, max_steps):
    """Advance through each time in sample_ts, storing the state at each.

    Returns (t, h, status, steps).  out must be (len(sample_ts), 20).
    """
    total = 0
    for m in range(sample_ts.shape[0]):
        t, h, status, steps = advance(t, y, p, sample_ts[m], h, rtol, atol,
                                      max_steps - total)
        total += steps
        if status != STATUS_OK:
            return t, h, status, total
        for i in range(y.shape[0]):
            out[m, i] = y[i]
    return t, h, STATUS_OK, total

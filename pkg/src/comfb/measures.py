"""Gaussian correlation and state-quality measures from 4x4 covariance
matrices (vacuum variance 1/2 convention) and their per-period maxima.

Determinants are evaluated by closed-form cofactor expansion so results are
reproducible to the last bit across platforms; see det2/det4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

RADICAND_TOL = 1.0e-12
_LN10 = math.log(10.0)


class UnphysicalStateError(ValueError):
    """Covariance matrix violates the uncertainty principle beyond tolerance."""


class DegenerateValueError(ValueError):
    """A radicand went negative beyond the numerical-noise tolerance."""


def det2(m) -> float:
    return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]


def det4(m) -> float:
    """Cofactor expansion along the first row of a 4x4 matrix."""
    s0 = m[2, 2] * m[3, 3] - m[2, 3] * m[3, 2]
    s1 = m[2, 1] * m[3, 3] - m[2, 3] * m[3, 1]
    s2 = m[2, 1] * m[3, 2] - m[2, 2] * m[3, 1]
    s3 = m[2, 0] * m[3, 3] - m[2, 3] * m[3, 0]
    s4 = m[2, 0] * m[3, 2] - m[2, 2] * m[3, 0]
    s5 = m[2, 0] * m[3, 1] - m[2, 1] * m[3, 0]
    c0 = m[1, 1] * s0 - m[1, 2] * s1 + m[1, 3] * s2
    c1 = m[1, 0] * s0 - m[1, 2] * s3 + m[1, 3] * s4
    c2 = m[1, 0] * s1 - m[1, 1] * s3 + m[1, 3] * s5
    c3 = m[1, 0] * s2 - m[1, 1] * s4 + m[1, 2] * s5
    return (m[0, 0] * c0 - m[0, 1] * c1 + m[0, 2] * c2 - m[0, 3] * c3)


def blocks(V) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(V_a, V_b, V_ab) 2x2 blocks of a 4x4 covariance matrix."""
    V = np.asarray(V, dtype=float)
    return V[:2, :2], V[2:, 2:], V[:2, 2:]


def symplectic_eigenvalues(V) -> np.ndarray:
    """Moduli of the eigenvalues of i * Omega * V (two values, ascending)."""
    V = np.asarray(V, dtype=float)
    omega = np.array([[0.0, 1.0, 0.0, 0.0],
                      [-1.0, 0.0, 0.0, 0.0],
                      [0.0, 0.0, 0.0, 1.0],
                      [0.0, 0.0, -1.0, 0.0]])
    ev = np.linalg.eigvals(1j * omega @ V)
    nu = np.sort(np.abs(ev))
    return nu[[0, 2]]  # each value appears twice; keep one of each


def min_symplectic_eigenvalue(V) -> float:
    return float(symplectic_eigenvalues(V)[0])


def check_physical(V, tol: float = 1.0e-6) -> None:
    if min_symplectic_eigenvalue(V) < 0.5 - tol:
        raise UnphysicalStateError(
            f"min symplectic eigenvalue {min_symplectic_eigenvalue(V):.6g} "
            "< 1/2")


def _clamped_sqrt(x: float, what: str) -> float:
    if x < -RADICAND_TOL:
        raise DegenerateValueError(f"{what} radicand {x:.3e} beyond tolerance")
    return math.sqrt(max(x, 0.0))


def log_negativity(V, *, literal_blocks: bool = False,
                   check: bool = True) -> float:
    """Entanglement of the two-mode state: max[0, -ln 2 eta^-].

    eta^- is the smallest symplectic eigenvalue of the partial transpose,
    from Sigma = det V_a + det V_b - 2 det V_ab and the full-matrix det V.
    literal_blocks swaps det V for det V_ab under the inner radical
    (diagnostic variant; diverges on uncorrelated states).
    """
    V = np.asarray(V, dtype=float)
    if check:
        check_physical(V)
    va, vb, vab = blocks(V)
    sigma = det2(va) + det2(vb) - 2.0 * det2(vab)
    dv = det2(vab) if literal_blocks else det4(V)
    inner = _clamped_sqrt(sigma * sigma - 4.0 * dv, "log_negativity inner")
    eta = _clamped_sqrt(sigma - inner, "log_negativity eta") / math.sqrt(2.0)
    if eta == 0.0:
        raise DegenerateValueError("eta^- collapsed to zero")
    return max(0.0, -math.log(2.0 * eta))


def steering(V, direction: str = "a->b", *, literal_blocks: bool = False,
             check: bool = True) -> float:
    """Gaussian steering max[0, (1/2) ln(det V_steerer / (4 det V))]."""
    V = np.asarray(V, dtype=float)
    if check:
        check_physical(V)
    va, vb, vab = blocks(V)
    if direction in ("a->b", "ab", "a_to_b"):
        num = det2(va)
    elif direction in ("b->a", "ba", "b_to_a"):
        num = det2(vb)
    else:
        raise ValueError(f"unknown steering direction {direction!r}")
    den = 4.0 * (det2(vab) if literal_blocks else det4(V))
    if den <= 0.0:
        raise DegenerateValueError(f"steering denominator {den:.3e} <= 0")
    return max(0.0, 0.5 * math.log(num / den))


def quadrature_squeezing(V_b, which: str = "X") -> float:
    """Squeezing of one phonon quadrature in dB relative to vacuum 1/2."""
    V_b = np.asarray(V_b, dtype=float)
    var = V_b[0, 0] if which.upper() == "X" else V_b[1, 1]
    if var <= 0.0:
        raise ValueError(f"non-positive variance {var!r}")
    return -10.0 * math.log10(var / 0.5)


def optimal_squeezing(V_b) -> float:
    """Squeezing along the best quadrature: -10 log10(2 lambda_min(V_b))."""
    V_b = np.asarray(V_b, dtype=float)
    half_tr = 0.5 * (V_b[0, 0] + V_b[1, 1])
    det = det2(V_b)
    disc = half_tr * half_tr - det
    lam_min = half_tr - math.sqrt(max(disc, 0.0))
    if lam_min <= 0.0 or det <= 0.0:
        raise ValueError("block is not positive definite")
    return -10.0 * math.log10(2.0 * lam_min)


def purity(V_b, tol: float = 1.0e-9) -> float:
    """Single-mode purity 1 / (2 sqrt(det V_b)); 1 on pure states."""
    V_b = np.asarray(V_b, dtype=float)
    det = det2(V_b)
    if det < 0.25 - tol:
        raise UnphysicalStateError(f"det V_b = {det:.9g} < 1/4")
    return min(1.0, 1.0 / (2.0 * math.sqrt(max(det, 0.25))))


def thermal_occupation_of_block(V_b) -> float:
    """Equivalent thermal occupation sqrt(det V_b) - 1/2."""
    return math.sqrt(max(det2(np.asarray(V_b, float)), 0.0)) - 0.5


@dataclass(frozen=True)
class CorrelationRecord:
    """Scalar measures at one time (or their per-period maxima)."""
    t: float
    E_N: float
    G_ab: float
    G_ba: float
    S_b: float
    mu_b: float

    MEASURES = ("E_N", "G_ab", "G_ba", "S_b", "mu_b")


def record_from_cov(t: float, V, *, literal_blocks: bool = False,
                    check: bool = True) -> CorrelationRecord:
    V = np.asarray(V, dtype=float)
    if check:
        check_physical(V)
    vb = V[2:, 2:]
    return CorrelationRecord(
        t=t,
        E_N=log_negativity(V, literal_blocks=literal_blocks, check=False),
        G_ab=steering(V, "a->b", literal_blocks=literal_blocks, check=False),
        G_ba=steering(V, "b->a", literal_blocks=literal_blocks, check=False),
        S_b=optimal_squeezing(vb),
        mu_b=purity(vb),
    )


def _refine_max(values: np.ndarray, times: np.ndarray, tau: float) -> tuple[float, float]:
    """Cyclic discrete max refined by a local quadratic fit."""
    n = len(values)
    k = int(np.argmax(values))
    ym = values[(k - 1) % n]
    y0 = values[k]
    yp = values[(k + 1) % n]
    denom = ym - 2.0 * y0 + yp
    dt = times[1] - times[0]
    if denom >= 0.0 or abs(denom) < 1.0e-300:
        return float(y0), float(times[k])
    shift = 0.5 * (ym - yp) / denom
    shift = min(max(shift, -0.5), 0.5)
    refined = y0 - 0.25 * (ym - yp) * shift
    t_at = times[k] + shift * dt
    if t_at >= times[0] + tau:
        t_at -= tau
    return float(refined), float(t_at)


def periodic_maxima(records: list[CorrelationRecord],
                    tau: float | None = None) -> tuple[CorrelationRecord, dict]:
    """Per-measure maxima over one period with quadratic peak refinement.

    Records must uniformly sample exactly one period (>= 32 points).
    Returns the maxima record (t = 0 placeholder) and an argmax-time map.
    """
    if len(records) < 32:
        raise ValueError("need at least 32 samples spanning one period")
    times = np.array([r.t for r in records])
    dt = times[1] - times[0]
    if tau is None:
        tau = dt * len(records)
    if abs(len(records) * dt - tau) > 1.0e-6 * tau:
        raise ValueError("samples do not span exactly one period")
    out = {}
    argmax = {}
    for name in CorrelationRecord.MEASURES:
        vals = np.array([getattr(r, name) for r in records])
        out[name], argmax[name] = _refine_max(vals, times, tau)
    return CorrelationRecord(t=float(times[0]), **out), argmax


def record_fields() -> tuple[str, ...]:
    return tuple(f.name for f in fields(CorrelationRecord))

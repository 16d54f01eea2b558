"""Time evolution: nonlinear mean field jointly with the covariance (Lyapunov)
equation, limit-cycle detection over the modulation period, instantaneous
stability and the cycle power balance.

The long-time state is tau-periodic with tau set by the commensurate pair
(delta_c, omega_m).  Convergence to the cycle is established by a Poincare
test: the full state one period apart must agree to `poincare_tol` in the
normalized max norm.  The transient is integrated in doubling chunks of
periods so slowly decaying phonon transients cost log-many checks.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _kernels
from .params import SystemParams

TWO_PI = 2.0 * math.pi


class DynamicsError(Exception):
    pass


class UnstableError(DynamicsError):
    """Integration diverged (or step size underflowed while diverging)."""

    def __init__(self, msg, t=float("nan"), growth_rate=float("nan"),
                 max_re_eig=float("nan")):
        super().__init__(msg)
        self.t = t
        self.growth_rate = growth_rate
        self.max_re_eig = max_re_eig


class NotConvergedError(DynamicsError):
    """Poincare residual still above tolerance at the period/wall budget."""

    def __init__(self, msg, residual=float("nan"), periods=0):
        super().__init__(msg)
        self.residual = residual
        self.periods = periods


class QuasiPeriodicError(DynamicsError):
    """omega_m / delta_c is not commensurate within the rationalization tolerance."""

    def __init__(self, msg, ratio=float("nan"), nearest=(0, 1),
                 distance=float("nan")):
        super().__init__(msg)
        self.ratio = ratio
        self.nearest = nearest
        self.distance = distance


@dataclass(frozen=True)
class SolverOptions:
    rtol: float = 1.0e-9
    atol: float = 1.0e-12
    samples_per_period: int = 256
    poincare_tol: float = 1.0e-5
    min_skip_periods: int = 16
    max_periods: int = 500_000
    budget_secs: float = 120.0
    rational_tol: float = 1.0e-9
    max_denominator: int = 64
    literal_phonon_frequency: bool = False
    transient_stride_per_period: int = 8


@dataclass(frozen=True)
class MeanFieldState:
    t: float
    alpha: complex
    beta: complex


@dataclass
class Trajectory:
    times: np.ndarray
    alphas: np.ndarray
    betas: np.ndarray
    covs: np.ndarray | None = None

    def __len__(self):
        return len(self.times)


@dataclass
class LimitCycle:
    tau: float
    times: np.ndarray           # m samples, spacing tau/m, t0 a multiple of tau
    alphas: np.ndarray
    betas: np.ndarray
    covs: np.ndarray            # (m, 4, 4)
    poincare_residual: float
    periods_elapsed: int = 0
    rational: tuple[int, int] | None = None
    snap_distance: float = 0.0


@dataclass
class StabilityReport:
    stable: bool
    max_re_eig: float
    dominant_phonon_re: float


@dataclass
class SettleInfo:
    periods: int
    steps: int
    wall_secs: float
    transient: Trajectory | None = None


def pack_params(params: SystemParams,
                literal_phonon_frequency: bool = False) -> np.ndarray:
    """Flatten SystemParams into the kernel parameter vector."""
    n_b = params.thermal_n_b()
    t_b = params.t_b
    d_a = (params.kappa_a * t_b * t_b
           * (1.0 - 2.0 * params.r_b * math.cos(params.theta)
              + params.r_b * params.r_b)
           * (2.0 * params.N_a + 1.0))
    d_b = params.kappa_b * (2.0 * n_b + 1.0)
    omega_b = 1.0  # internal unit
    freq43 = params.omega_m if literal_phonon_frequency else omega_b
    return np.array([
        params.kappa_fb, params.delta_fb, params.kappa_a, params.kappa_b,
        params.delta_a, params.delta_c, params.omega_m, params.g,
        params.G_c, params.theta_c, params.G_m, params.theta_m,
        t_b * params.E, params.r_b, params.theta, d_a, d_b,
        omega_b, freq43,
    ])


def initial_state(params: SystemParams) -> np.ndarray:
    """alpha = beta = 0; V = diag(1/2, 1/2, N_b + 1/2, N_b + 1/2)."""
    y = np.zeros(20)
    n_b = params.thermal_n_b()
    y[4 + 0] = 0.5
    y[4 + 5] = 0.5
    y[4 + 10] = n_b + 0.5
    y[4 + 15] = n_b + 0.5
    return y


def mean_field_rhs(state: MeanFieldState, params: SystemParams) -> tuple[complex, complex]:
    """d/dt of (<a>, <b>) at the given state."""
    p = pack_params(params)
    dar, dai, dbr, dbi = _kernels.mean_field_derivs(
        state.t, state.alpha.real, state.alpha.imag,
        state.beta.real, state.beta.imag, p)
    return complex(dar, dai), complex(dbr, dbi)


def build_drift_matrix(state: MeanFieldState, params: SystemParams,
                       t: float | None = None,
                       literal_phonon_frequency: bool = False) -> np.ndarray:
    """4x4 drift matrix of the quadrature fluctuations at time t (state.t default)."""
    p = pack_params(params, literal_phonon_frequency)
    A = np.empty((4, 4))
    _kernels.fill_drift(state.t if t is None else t,
                        state.alpha.real, state.alpha.imag,
                        state.beta.real, state.beta.imag, p, A)
    return A


def build_diffusion_matrix(params: SystemParams) -> np.ndarray:
    """Constant diagonal noise matrix diag[d_a, d_a, d_b, d_b]."""
    p = pack_params(params)
    return np.diag([p[15], p[15], p[16], p[16]])


@dataclass(frozen=True)
class PeriodInfo:
    tau: float
    rational: tuple[int, int] | None
    snap_distance: float


def modulation_period(params: SystemParams, rational_tol: float = 1.0e-9,
                      max_denominator: int = 64) -> PeriodInfo:
    """Common period of the OPA/MPA modulation.

    Both pumps active: omega_m / delta_c is rationalized to p/q in lowest
    terms and tau = 2 pi q / delta_c.  A single active pump gives its own
    period; no modulation at all leaves the drift matrix constant and any
    period works (2 pi / omega_b is returned).
    """
    opa = params.G_c > 0.0 and params.delta_c != 0.0
    mpa = params.G_m > 0.0 and params.omega_m != 0.0
    if opa and mpa:
        ratio = params.omega_m / params.delta_c
        frac = Fraction(ratio).limit_denominator(max_denominator)
        dist = abs(float(frac) - ratio)
        if dist > rational_tol * max(1.0, abs(ratio)):
            raise QuasiPeriodicError(
                f"omega_m/delta_c = {ratio!r} is not p/q with q <= "
                f"{max_denominator} within {rational_tol}; nearest {frac}",
                ratio=ratio, nearest=(frac.numerator, frac.denominator),
                distance=dist)
        tau = TWO_PI * frac.denominator / abs(params.delta_c)
        return PeriodInfo(tau, (frac.numerator, frac.denominator), dist)
    if mpa:
        return PeriodInfo(TWO_PI / abs(params.omega_m), None, 0.0)
    if opa:
        return PeriodInfo(TWO_PI / abs(params.delta_c), None, 0.0)
    return PeriodInfo(TWO_PI, None, 0.0)


def _unpack_samples(sample_ts: np.ndarray, out: np.ndarray) -> Trajectory:
    alphas = out[:, 0] + 1j * out[:, 1]
    betas = out[:, 2] + 1j * out[:, 3]
    covs = out[:, 4:].reshape(-1, 4, 4).copy()
    return Trajectory(sample_ts.copy(), alphas, betas, covs)


def integrate(params: SystemParams, t_end: float, *, t0: float = 0.0,
              y0: np.ndarray | None = None, dt_sample: float | None = None,
              options: SolverOptions = SolverOptions()) -> Trajectory:
    """Advance (alpha, beta, V) from t0 to t_end, sampling at a uniform stride.

    The returned trajectory includes the state at t0.  Divergence raises
    UnstableError; the caller treats it as an instability verdict.
    """
    if t_end <= t0:
        raise ValueError("t_end must exceed t0")
    p = pack_params(params, options.literal_phonon_frequency)
    y = initial_state(params) if y0 is None else y0.copy()
    if dt_sample is None:
        dt_sample = modulation_period(params, options.rational_tol,
                                      options.max_denominator).tau / 64.0
    n = max(1, int(round((t_end - t0) / dt_sample)))
    sample_ts = t0 + dt_sample * np.arange(1, n + 1)
    out = np.empty((n, 20))
    t, _, status, _ = _kernels.advance_sampled(
        t0, y, p, sample_ts, out, 1.0e-3, options.rtol, options.atol,
        1_000_000_000)
    if status in (_kernels.STATUS_DIVERGED, _kernels.STATUS_STEP_UNDERFLOW):
        raise UnstableError(f"integration diverged at t = {t:.6g}", t=t)
    if status == _kernels.STATUS_MAX_STEPS:
        raise NotConvergedError("step budget exhausted during integrate()")
    traj = _unpack_samples(np.concatenate(([t0], sample_ts)),
                           np.vstack((_initial_row(params, y0), out)))
    return traj


def _initial_row(params: SystemParams, y0: np.ndarray | None) -> np.ndarray:
    y = initial_state(params) if y0 is None else y0
    return y.reshape(1, -1)


def detect_limit_cycle(traj: Trajectory, params: SystemParams,
                       tol: float = 1.0e-5,
                       options: SolverOptions = SolverOptions()) -> LimitCycle:
    """Check tau-periodicity of a uniformly sampled trajectory.

    The stride must divide the modulation period and the trajectory must
    span at least three periods; the last two periods are compared.
    """
    info = modulation_period(params, options.rational_tol,
                             options.max_denominator)
    dt = traj.times[1] - traj.times[0]
    n = int(round(info.tau / dt))
    if n < 2 or abs(n * dt - info.tau) > 1.0e-6 * info.tau:
        raise ValueError("trajectory stride does not divide the period")
    if len(traj) < 3 * n:
        raise ValueError("trajectory shorter than three periods")
    cols = [traj.alphas.real, traj.alphas.imag, traj.betas.real,
            traj.betas.imag]
    if traj.covs is not None:
        cols.extend(traj.covs.reshape(len(traj), 16).T)
    state = np.column_stack(cols)
    last, prev = state[-n:], state[-2 * n:-n]
    residual = float(np.max(np.abs(last - prev) / (1.0 + np.abs(prev))))
    if residual > tol:
        raise NotConvergedError(
            f"poincare residual {residual:.3e} above tolerance {tol:.1e}",
            residual=residual)
    covs = traj.covs[-n:] if traj.covs is not None else None
    return LimitCycle(info.tau, traj.times[-n:], traj.alphas[-n:],
                      traj.betas[-n:], covs, residual,
                      rational=info.rational, snap_distance=info.snap_distance)


def settle_to_cycle(params: SystemParams,
                    options: SolverOptions = SolverOptions(),
                    record_transient: bool = False,
                    y0: np.ndarray | None = None) -> tuple[LimitCycle, SettleInfo]:
    """Integrate from the reference initial state until the orbit is periodic.

    Chunks of whole periods are skipped (doubling schedule) with a Poincare
    test after each chunk; on success one period is sampled densely.
    Raises UnstableError / NotConvergedError / QuasiPeriodicError.
    """
    info = modulation_period(params, options.rational_tol,
                             options.max_denominator)
    tau = info.tau
    p = pack_params(params, options.literal_phonon_frequency)
    y = initial_state(params) if y0 is None else y0.copy()
    t, h = 0.0, 1.0e-3
    t_start = time.monotonic()
    deadline = t_start + options.budget_secs
    periods = 0
    total_steps = 0
    chunk = max(1, options.min_skip_periods)
    residual = math.inf

    rec_ts: list[np.ndarray] = []
    rec_ys: list[np.ndarray] = []
    if record_transient:
        rec_ts.append(np.array([0.0]))
        rec_ys.append(y.reshape(1, -1).copy())

    prev_logmax = math.log(max(np.max(np.abs(y)), 1.0e-300))
    prev_t = 0.0
    growth = 0.0

    def _fail_unstable(t_now):
        # the kernel never leaks non-finite states: failures report the last
        # accepted (finite) state, so the empirical growth rate is well defined
        rate = growth
        big = float(np.max(np.abs(y))) if np.all(np.isfinite(y)) else math.inf
        if math.isfinite(big) and t_now > prev_t:
            rate = (math.log(max(big, 1e-300)) - prev_logmax) / (t_now - prev_t)
        max_eig = float("nan")
        if math.isfinite(big):
            A = np.empty((4, 4))
            _kernels.fill_drift(t_now, y[0], y[1], y[2], y[3], p, A)
            max_eig = float(np.max(np.linalg.eigvals(A).real))
        raise UnstableError(
            f"integration diverged at t = {t_now:.6g} "
            f"(growth rate ~ {rate:.3g})",
            t=t_now, growth_rate=rate, max_re_eig=max_eig)

    while True:
        target = t + chunk * tau
        max_steps = max(1_000_000, 40_000 * chunk)
        if record_transient:
            stride = tau / options.transient_stride_per_period
            n = int(round((target - t) / stride))
            sample_ts = t + stride * np.arange(1, n + 1)
            out = np.empty((n, 20))
            t, h, status, steps = _kernels.advance_sampled(
                t, y, p, sample_ts, out, h, options.rtol, options.atol,
                max_steps)
            done = n if status == _kernels.STATUS_OK else int(
                np.searchsorted(sample_ts, t, side="right"))
            rec_ts.append(sample_ts[:done])
            rec_ys.append(out[:done].copy())
        else:
            t, h, status, steps = _kernels.advance(
                t, y, p, target, h, options.rtol, options.atol, max_steps)
        total_steps += steps
        if status in (_kernels.STATUS_DIVERGED,
                      _kernels.STATUS_STEP_UNDERFLOW):
            _fail_unstable(t)
        if status == _kernels.STATUS_MAX_STEPS:
            raise NotConvergedError(
                "step budget exhausted before periodicity", residual=residual,
                periods=periods)
        periods += chunk

        logmax = math.log(max(np.max(np.abs(y)), 1.0e-300))
        if t > prev_t:
            growth = (logmax - prev_logmax) / (t - prev_t)
        prev_logmax, prev_t = logmax, t

        # Poincare test over one more period
        y_ref = y.copy()
        t, h, status, steps = _kernels.advance(
            t, y, p, t + tau, h, options.rtol, options.atol, 2_000_000)
        total_steps += steps
        if status in (_kernels.STATUS_DIVERGED,
                      _kernels.STATUS_STEP_UNDERFLOW):
            _fail_unstable(t)
        periods += 1
        residual = float(np.max(np.abs(y - y_ref) / (1.0 + np.abs(y_ref))))
        if residual <= options.poincare_tol:
            break
        if periods >= options.max_periods:
            raise NotConvergedError(
                f"poincare residual {residual:.3e} after {periods} periods",
                residual=residual, periods=periods)
        if time.monotonic() > deadline:
            raise NotConvergedError(
                f"wall budget exhausted (residual {residual:.3e}, "
                f"{periods} periods)", residual=residual, periods=periods)
        chunk = min(chunk * 2, 4096)

    m = options.samples_per_period
    sample_ts = t + tau / m * np.arange(m)
    out = np.empty((m, 20))
    out[0] = y
    t2, h, status, steps = _kernels.advance_sampled(
        t, y, p, sample_ts[1:], out[1:], h, options.rtol, options.atol,
        2_000_000)
    total_steps += steps
    if status != _kernels.STATUS_OK:
        _fail_unstable(t2)

    cyc_traj = _unpack_samples(sample_ts, out)
    cycle = LimitCycle(tau, cyc_traj.times, cyc_traj.alphas, cyc_traj.betas,
                       cyc_traj.covs, residual, periods_elapsed=periods,
                       rational=info.rational, snap_distance=info.snap_distance)
    transient = None
    if record_transient:
        ts = np.concatenate(rec_ts)
        ys = np.vstack(rec_ys)
        transient = Trajectory(ts, ys[:, 0] + 1j * ys[:, 1],
                               ys[:, 2] + 1j * ys[:, 3])
    return cycle, SettleInfo(periods, total_steps,
                             time.monotonic() - t_start, transient)


def stability_check(params: SystemParams, cycle: LimitCycle,
                    min_times: int = 64,
                    literal_phonon_frequency: bool = False) -> StabilityReport:
    """Instantaneous eigenvalues of A(t) sampled over one period.

    Stable means every eigenvalue has a negative real part at every sampled
    time.  dominant_phonon_re is the largest real part among eigenvalues
    whose eigenvectors weigh mostly on the phonon quadratures.
    """
    idx = np.arange(len(cycle.times))
    if len(idx) < min_times:
        raise ValueError(f"cycle must carry at least {min_times} samples")
    p = pack_params(params, literal_phonon_frequency)
    A = np.empty((len(idx), 4, 4))
    for k in idx:
        _kernels.fill_drift(cycle.times[k], cycle.alphas[k].real,
                            cycle.alphas[k].imag, cycle.betas[k].real,
                            cycle.betas[k].imag, p, A[k])
    w, v = np.linalg.eig(A)
    max_re = float(np.max(w.real))
    weights = np.abs(v[:, 2, :]) ** 2 + np.abs(v[:, 3, :]) ** 2  # phonon rows
    norms = np.sum(np.abs(v) ** 2, axis=1)
    frac = weights / norms
    phonon_re = -math.inf
    for k in range(len(idx)):
        sel = frac[k] >= 0.5
        if not np.any(sel):
            sel = frac[k] == np.max(frac[k])
        phonon_re = max(phonon_re, float(np.max(w[k].real[sel])))
    return StabilityReport(max_re < 0.0, max_re, phonon_re)


def power_balance_terms(cycle: LimitCycle, params: SystemParams) -> dict:
    """Cycle-averaged photon-number budget terms of the limit cycle."""
    a = cycle.alphas
    b = cycle.betas
    t = cycle.times
    phic = params.delta_c * t - params.theta_c
    om = 2.0 * np.real(np.conj(a) * (1j * params.g * a * 2.0 * b.real))
    opa = 2.0 * np.real(np.conj(a) * 2.0 * params.G_c * np.conj(a)
                        * np.exp(-1j * phic))
    drv = 2.0 * np.real(np.conj(a) * params.t_b * params.E)
    lhs = 2.0 * params.kappa_fb * np.abs(a) ** 2
    return {
        "lhs": float(np.mean(lhs)),
        "P_om": float(np.mean(om)),
        "P_OPA": float(np.mean(opa)),
        "P_drv": float(np.mean(drv)),
        "mean_photon_number": float(np.mean(np.abs(a) ** 2)),
        "mean_abs_alpha": float(np.mean(np.abs(a))),
    }


def power_balance_residual(cycle: LimitCycle, params: SystemParams) -> float:
    """Relative defect of the cycle-averaged photon-number balance."""
    terms = power_balance_terms(cycle, params)
    lhs = terms["lhs"]
    rhs = terms["P_om"] + terms["P_OPA"] + terms["P_drv"]
    scale = max(abs(lhs), abs(rhs))
    if scale == 0.0:
        return 0.0
    return abs(lhs - rhs) / scale

"""Fixed-step time-domain simulation of coupled Van der Pol inverters.

Each inverter obeys, in physical time,

    dx/dt = omega y
    dy/dt = -omega x + (alpha / C) g(y) - (kappa / C) i

where ``i`` is the current it injects into the Kron-reduced network,
``i = Q y + s(t) + i_load``. The network current is evaluated at every
Runge-Kutta stage from the stage voltages.
"""
from dataclasses import dataclass
import csv
import math

import numpy as np

from .errors import DegenerateRadius, NumericalBlowup, WindowError
from .network import KronNetwork
from .oscillator import DEGENERATE_RADIUS, CartesianState, as_bank, wrap_angle

MIN_STEPS_PER_CYCLE = 200
DEFAULT_STEPS_PER_CYCLE = 1000


@dataclass(frozen=True)
class Scenario:
    """Inputs of one time-domain run.

    ``networks`` is a sequence of ``(t_switch, KronNetwork)`` pairs; the first
    must start at t = 0. A switch takes effect at the first step boundary at or
    after its scheduled time.
    """
    params: tuple
    networks: tuple
    initial: CartesianState
    t_end: float
    dt: float
    record_stride: int = 1

    def __post_init__(self):
        params = tuple(self.params)
        object.__setattr__(self, "params", params)
        bank = as_bank(params)
        omega = bank.omega
        networks = tuple(sorted(((float(t), net) for t, net in self.networks), key=lambda p: p[0]))
        if not networks or networks[0][0] != 0.0:
            raise ValueError("the first network stage must start at t = 0")
        for _, net in networks:
            if not isinstance(net, KronNetwork) or net.n != bank.n:
                raise ValueError(f"every network stage must be a KronNetwork over {bank.n} inverters")
        object.__setattr__(self, "networks", networks)
        x = np.array(self.initial.x, dtype=float).reshape(-1)
        y = np.array(self.initial.y, dtype=float).reshape(-1)
        if x.shape != (bank.n,) or y.shape != (bank.n,):
            raise ValueError("initial state must have one (x, y) pair per inverter")
        object.__setattr__(self, "initial", CartesianState(x, y))
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        period = 2.0 * math.pi / omega
        if self.dt > period / MIN_STEPS_PER_CYCLE * (1 + 1e-12):
            raise ValueError(f"dt must resolve at least {MIN_STEPS_PER_CYCLE} steps per AC cycle")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if int(self.record_stride) < 1:
            raise ValueError("record_stride must be a positive integer")

    @property
    def bank(self):
        return as_bank(self.params)

    @property
    def omega(self):
        return self.bank.omega

    @property
    def period(self):
        return 2.0 * math.pi / self.omega

    @classmethod
    def from_phases(cls, params, networks, theta0=None, amplitude=None, t_end=0.0,
                    steps_per_cycle=DEFAULT_STEPS_PER_CYCLE, record_stride=1):
        """Scenario started on each inverter's open-circuit limit cycle (or ``amplitude``)."""
        params = tuple(params)
        if isinstance(networks, KronNetwork):
            networks = ((0.0, networks),)
        initial = open_circuit_initial(params, theta0, amplitude)
        bank = as_bank(params)
        dt = 2.0 * math.pi / bank.omega / steps_per_cycle
        return cls(params, networks, initial, t_end, dt, record_stride)


def open_circuit_initial(params, theta0=None, amplitude=None):
    bank = as_bank(params)
    theta0 = np.zeros(bank.n) if theta0 is None else np.broadcast_to(np.asarray(theta0, float), (bank.n,))
    r0 = bank.r_oc if amplitude is None else np.broadcast_to(np.asarray(amplitude, float), (bank.n,))
    return CartesianState(r0 * np.sin(theta0), r0 * np.cos(theta0))


@dataclass
class Trace:
    """Sampled trajectory. Per-inverter arrays have shape (samples, N)."""
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    Pbar: np.ndarray
    Qbar: np.ndarray
    omega: float

    @property
    def n(self):
        return self.x.shape[1]

    @property
    def period(self):
        return 2.0 * math.pi / self.omega

    def index_at(self, time):
        """Index of the last sample at or before ``time``."""
        return int(np.searchsorted(self.t, time + 1e-12 * max(1.0, abs(time)), side="right") - 1)

    def mean_amplitude(self, end=None):
        """One-cycle mean of r ending at ``end`` (default: end of trace)."""
        return cycle_average(self.t, self.r, self.period, end)

    def shares(self, time=None):
        """Active-power shares (fractions of the total) from the rolling averages at ``time``."""
        idx = len(self.t) - 1 if time is None else self.index_at(time)
        P = self.Pbar[idx]
        return P / P.sum()

    def to_csv(self, path):
        header = ["t"]
        for j in range(1, self.n + 1):
            header += [f"{name}_{j}" for name in ("x", "y", "r", "theta", "P", "Q", "Pbar", "Qbar")]
        cols = [self.x, self.y, self.r, self.theta, self.P, self.Q, self.Pbar, self.Qbar]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for m, t in enumerate(self.t):
                row = [_fmt(t)]
                for j in range(self.n):
                    row += [_fmt(c[m, j]) for c in cols]
                writer.writerow(row)


def _fmt(value):
    return f"{value:.17e}"


def _network_arrays(net):
    src = net.sources
    return (np.array(net.Q), src.real.copy(), src.imag.copy(), np.array(net.tracking_current),
            np.cos(net.tracking_angle), np.sin(net.tracking_angle), net.has_tracking_loads)


def _current(t, x, y, arrays, omega):
    Q, sr, si, I_load, c_psi, s_psi, tracking = arrays
    wt = omega * t
    i = Q @ y + sr * math.cos(wt) - si * math.sin(wt)
    if tracking:
        r = np.sqrt(x * x + y * y)
        i = i + I_load * (y * c_psi + x * s_psi) / np.maximum(r, DEGENERATE_RADIUS)
    return i


def step(x, y, t, dt, net, params):
    """One classical RK4 step of the coupled oscillators from time ``t``."""
    bank = as_bank(params)
    arrays = _network_arrays(net)
    return _rk4(x, y, t, dt, arrays, bank.omega, bank.alpha / bank.C, bank.beta, bank.kappa / bank.C)


def _rk4(x, y, t, dt, arrays, w, a_c, b, k_c):
    def f(tt, xx, yy):
        i = _current(tt, xx, yy, arrays, w)
        return w * yy, -w * xx + a_c * (yy - b * yy ** 3 / 3.0) - k_c * i

    h2 = 0.5 * dt
    k1x, k1y = f(t, x, y)
    k2x, k2y = f(t + h2, x + h2 * k1x, y + h2 * k1y)
    k3x, k3y = f(t + h2, x + h2 * k2x, y + h2 * k2y)
    k4x, k4y = f(t + dt, x + dt * k3x, y + dt * k3y)
    return (x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
            y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y))


def run(scenario):
    """Integrate ``scenario`` and return the sampled, measured trajectory."""
    bank = scenario.bank
    w = bank.omega
    a_c, b, k_c = bank.alpha / bank.C, bank.beta, bank.kappa / bank.C
    dt = scenario.dt
    n_steps = int(math.floor(scenario.t_end / dt + 1e-9))
    stride = int(scenario.record_stride)
    stages = [(t_sw, _network_arrays(net)) for t_sw, net in scenario.networks]
    switch_steps = [int(math.ceil(t_sw / dt - 1e-9)) for t_sw, _ in stages]

    def arrays_at(m):
        active = stages[0][1]
        for s, (_, arr) in zip(switch_steps, stages):
            if m >= s:
                active = arr
        return active

    x = scenario.initial.x.copy()
    y = scenario.initial.y.copy()
    n = bank.n
    n_rec = n_steps // stride + 1
    t_rec = np.empty(n_rec)
    X = np.empty((n_rec, n))
    Y = np.empty((n_rec, n))
    Iinst = np.empty((n_rec, n))
    # cumulative trapezoidal integrals of P and Q at every step, for rolling averages
    FP = np.empty((n_steps + 1, n))
    FQ = np.empty((n_steps + 1, n))
    FP[0] = FQ[0] = 0.0

    arrays = arrays_at(0)
    i_now = _current(0.0, x, y, arrays, w)
    p_now, q_now = y * i_now, x * i_now
    t_rec[0], X[0], Y[0], Iinst[0] = 0.0, x, y, i_now
    rec = 1
    for m in range(n_steps):
        t = m * dt
        arrays = arrays_at(m)
        with np.errstate(over="ignore", invalid="ignore"):
            x, y = _rk4(x, y, t, dt, arrays, w, a_c, b, k_c)
        t_next = (m + 1) * dt
        if not math.isfinite(float(x.sum() + y.sum())):
            raise NumericalBlowup(f"non-finite state at t = {t_next:.6g} s", time=t_next)
        i_next = _current(t_next, x, y, arrays_at(m + 1), w)
        p_next, q_next = y * i_next, x * i_next
        FP[m + 1] = FP[m] + 0.5 * dt * (p_now + p_next)
        FQ[m + 1] = FQ[m] + 0.5 * dt * (q_now + q_next)
        p_now, q_now = p_next, q_next
        if (m + 1) % stride == 0:
            t_rec[rec], X[rec], Y[rec], Iinst[rec] = t_next, x, y, i_next
            rec += 1

    R = np.hypot(X, Y)
    theta = wrap_angle(np.arctan2(X, Y) - w * t_rec[:, None])
    period = 2.0 * math.pi / w
    step_idx = np.arange(n_rec) * stride
    Pbar = _rolling(FP, step_idx, dt, period)
    Qbar = _rolling(FQ, step_idx, dt, period)
    return Trace(t_rec, X, Y, R, theta, Y * Iinst, X * Iinst, Pbar, Qbar, w)


def _rolling(F, step_idx, dt, period):
    """Trailing one-period averages from cumulative integrals; NaN before one full period."""
    out = np.full((len(step_idx), F.shape[1]), np.nan)
    start = step_idx - period / dt
    ok = start >= -1e-9
    if not np.any(ok):
        return out
    start = np.maximum(start[ok], 0.0)
    lo = np.floor(start + 1e-9).astype(int)
    frac = np.where(start - lo < 1e-9, 0.0, start - lo)[:, None]
    hi = np.minimum(lo + 1, F.shape[0] - 1)
    F0 = (1.0 - frac) * F[lo] + frac * F[hi]
    out[ok] = (F[step_idx[ok]] - F0) / period
    return out


def cycle_average(t, values, period, end=None):
    """Trapezoidal mean of ``values`` over ``[end - period, end]``.

    Window endpoints that fall between samples are linearly interpolated.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    end = t[-1] if end is None else float(end)
    start = end - period
    tol = 1e-9 * max(period, abs(end))
    if start < t[0] - tol or end > t[-1] + tol:
        raise WindowError(f"window [{start:.6g}, {end:.6g}] is not inside the trace [{t[0]:.6g}, {t[-1]:.6g}]")
    start = max(start, t[0])
    end = min(end, t[-1])
    inner = (t > start + tol) & (t < end - tol)
    ts = np.concatenate([[start], t[inner], [end]])
    v_start = _interp(t, values, start)
    v_end = _interp(t, values, end)
    vs = np.concatenate([v_start[None], values[inner], v_end[None]], axis=0)
    dts = np.diff(ts)
    shape = (-1,) + (1,) * (vs.ndim - 1)
    integral = np.sum(0.5 * (vs[1:] + vs[:-1]) * dts.reshape(shape), axis=0)
    return integral / (end - start)


def _interp(t, values, at):
    idx = int(np.clip(np.searchsorted(t, at, side="right") - 1, 0, len(t) - 2))
    t0, t1 = t[idx], t[idx + 1]
    w = (at - t0) / (t1 - t0)
    return (1.0 - w) * values[idx] + w * values[idx + 1]


def extract_polar(t, x, y, omega):
    """Amplitude and wrapped phase offset from Cartesian samples."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.hypot(x, y)
    if np.any(r < DEGENERATE_RADIUS):
        raise DegenerateRadius("trajectory passes through the origin")
    t = np.asarray(t, dtype=float)
    if x.ndim == 2:
        t = t[:, None]
    return r, wrap_angle(np.arctan2(x, y) - omega * t)


def unwrap_phase(theta):
    return np.unwrap(np.asarray(theta, dtype=float), axis=0)

"""Droop control, its correspondence with the averaged oscillator, and gain design rules.

Droop law (resistive network convention):

    dtheta_j/dt = n_j (Q_j - Q*_j)
    r_j         = r*_j - m_j (P_j - P*_j)
"""
from dataclasses import dataclass
import csv
import math

import numpy as np

from .averaged import AveragedState, integrate_averaged, single_inverter_roots, solve_equilibrium
from .errors import NoEquilibriumFound, NumericalBlowup, SingularCorrespondence
from .network import average_power
from .oscillator import as_bank
from .simulator import Scenario, run

SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class DroopConfig:
    n: np.ndarray
    m: np.ndarray
    Q_star: np.ndarray
    P_star: np.ndarray
    r_star: np.ndarray

    def __post_init__(self):
        arrays = [np.atleast_1d(np.array(getattr(self, f), dtype=float))
                  for f in ("n", "m", "Q_star", "P_star", "r_star")]
        size = max(a.size for a in arrays)
        for name, a in zip(("n", "m", "Q_star", "P_star", "r_star"), arrays):
            a = np.broadcast_to(a, (size,)).copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if np.any(self.n <= 0) or np.any(self.m <= 0):
            raise ValueError("droop coefficients n and m must be positive")

    @property
    def size(self):
        return self.n.size

    def to_dict(self):
        return {name: getattr(self, name).tolist() for name in ("n", "m", "Q_star", "P_star", "r_star")}


def droop_rhs(r, theta, P, Q, config):
    """(dtheta/dt, amplitude assignment) of the droop law."""
    dtheta = config.n * (np.asarray(Q, float) - config.Q_star)
    r_new = config.r_star - config.m * (np.asarray(P, float) - config.P_star)
    return dtheta, r_new


def correspondence(params, r_eq, P_eq):
    """Droop coefficients that match the averaged oscillator at (r_eq, P_eq).

    n = kappa / (r_eq**2 C), m = -kappa / (alpha (r_eq - beta r_eq**3 / 2)),
    Q* = 0, P* = P_eq, r* = r_eq.
    """
    r_eq = np.atleast_1d(np.asarray(r_eq, float))
    P_eq = np.broadcast_to(np.atleast_1d(np.asarray(P_eq, float)), r_eq.shape)
    bank = as_bank(params, r_eq.size)
    sens = bank.alpha * (r_eq - bank.beta / 2 * r_eq ** 3)
    if np.any(np.abs(sens) <= SINGULAR_RTOL * bank.alpha * r_eq):
        raise SingularCorrespondence("power-amplitude sensitivity vanishes at r_eq = sqrt(2 / beta)")
    n = bank.kappa / (r_eq ** 2 * bank.C)
    m = -bank.kappa / sens
    return DroopConfig(n, m, np.zeros_like(r_eq), P_eq, r_eq)


def invert_correspondence(config, params):
    """Recover (kappa, r_eq) from the coefficients (n, m) alone.

    Eliminating kappa gives (m alpha beta / 2) r**2 - n C r - m alpha = 0,
    whose positive root is r_eq.
    """
    bank = as_bank(params, config.size)
    a = config.m * bank.alpha * bank.beta / 2
    b = config.n * bank.C
    r_eq = (b + np.sqrt(b * b + 4 * a * config.m * bank.alpha)) / (2 * a)
    kappa = config.n * r_eq ** 2 * bank.C
    return kappa, r_eq


def _positive(values):
    v = np.asarray(values, float)
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise ValueError("design inputs must be positive")
    return v


def _normalize(weights, kappa_max):
    w = _positive(weights)
    if kappa_max <= 0:
        raise ValueError("kappa_max must be positive")
    return kappa_max * w / w.max()


def design_power_sharing(ratings, kappa_max=1.0):
    """Gains with R_j kappa_j equal across inverters, so currents split in proportion to ratings."""
    return _normalize(1.0 / _positive(ratings), kappa_max)


def design_econ_dispatch(costs, r_eq, kappa_max=1.0):
    """Gains with kappa_j / (r_eq_j**2 lambda_j) equal across inverters."""
    costs = np.asarray(costs, float)
    r_eq = np.broadcast_to(np.asarray(r_eq, float), costs.shape)
    return _normalize(costs * r_eq ** 2, kappa_max)


def design_amplitude_sync(P_eq, kappa_max=1.0):
    """Gains with kappa_j P_j equal, so every inverter settles at the same amplitude."""
    return _normalize(1.0 / _positive(P_eq), kappa_max)


def constant_power_factor_load(params, P, power_factor):
    """Tracking-load current amplitude and lag angle drawing ``P`` watts at the high-branch amplitude."""
    if not 0 < power_factor <= 1:
        raise ValueError("power factor must lie in (0, 1]")
    psi = math.acos(power_factor)
    r_high, _ = single_inverter_roots(P, params)
    return 2.0 * P / (r_high * power_factor), psi


def _droop_amplitudes(theta, r_guess, config, net, tol=1e-12, max_iter=50):
    """Solve the algebraic amplitude law r = r* - m (P(r, theta) - P*) by Newton's method."""
    r = r_guess.copy()
    Q = net.Q
    cos_d = np.cos(theta[:, None] - theta[None, :])
    local = net.iota * np.cos(theta - net.gamma) + net.tracking_current * np.cos(net.tracking_angle)
    for _ in range(max_iter):
        flow = (Q * cos_d) @ r
        P = 0.5 * r * (flow + local)
        F = r - config.r_star + config.m * (P - config.P_star)
        J = 0.5 * config.m[:, None] * r[:, None] * Q * cos_d
        J[np.diag_indices(r.size)] += 1 + 0.5 * config.m * (flow + local)
        dr = np.linalg.solve(J, -F)
        r = r + dr
        if np.max(np.abs(dr)) <= tol * np.max(np.abs(r)):
            return r
    raise NoEquilibriumFound("droop amplitude law did not converge")


@dataclass
class DroopTrace:
    t: np.ndarray
    r: np.ndarray
    theta: np.ndarray


def simulate_droop(config, net, theta0, t_end, dt, record_stride=1):
    """Droop closed loop: algebraic amplitudes and RK4 phase integration, theta unwrapped."""
    theta = np.array(theta0, float).reshape(-1) * np.ones(config.size)
    r = config.r_star.copy()
    n_steps = int(math.floor(t_end / dt + 1e-9))
    n_rec = n_steps // record_stride + 1
    T = np.empty(n_rec)
    Rr = np.empty((n_rec, config.size))
    Th = np.empty((n_rec, config.size))

    def f(th, r_guess):
        rr = _droop_amplitudes(th, r_guess, config, net)
        inj = average_power(rr, th, net)
        return droop_rhs(rr, th, inj.P, inj.Q, config)[0], rr

    r = _droop_amplitudes(theta, r, config, net)
    T[0], Rr[0], Th[0] = 0.0, r, theta
    rec = 1
    for s in range(n_steps):
        k1, r = f(theta, r)
        k2, _ = f(theta + 0.5 * dt * k1, r)
        k3, _ = f(theta + 0.5 * dt * k2, r)
        k4, _ = f(theta + dt * k3, r)
        theta = theta + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(theta)):
            raise NumericalBlowup(f"droop phase diverged at t = {(s + 1) * dt:.6g} s", time=(s + 1) * dt)
        if (s + 1) % record_stride == 0:
            r = _droop_amplitudes(theta, r, config, net)
            T[rec], Rr[rec], Th[rec] = (s + 1) * dt, r, theta
            rec += 1
    return DroopTrace(T, Rr, Th)


@dataclass
class Comparison:
    """Droop minus oscillator amplitude and phase over the comparison horizon."""
    mode: str
    eps: float
    horizon: float
    t: np.ndarray
    e_r: np.ndarray
    e_theta: np.ndarray
    config: DroopConfig

    @property
    def sup_e_r(self):
        return float(np.max(np.abs(self.e_r)))

    @property
    def sup_e_theta(self):
        return float(np.max(np.abs(self.e_theta)))

    @property
    def growth_ratio(self):
        """sup |e_theta| over the second half of the horizon divided by the first half."""
        half = self.t <= 0.5 * self.horizon
        first = np.max(np.abs(self.e_theta[half]))
        second = np.max(np.abs(self.e_theta[~half]))
        return float(second / first) if first > 0 else (math.inf if second > 0 else 1.0)

    @property
    def drift_rate(self):
        """Least-squares slope of the largest-magnitude e_theta component (rad/s)."""
        j = int(np.argmax(np.max(np.abs(self.e_theta), axis=0)))
        return float(np.polyfit(self.t, self.e_theta[:, j], 1)[0])

    @property
    def secular(self):
        return self.growth_ratio > 1.5

    def to_csv(self, path):
        n = self.e_r.shape[1]
        header = ["t"] + [f"e_r_{j + 1}" for j in range(n)] + [f"e_theta_{j + 1}" for j in range(n)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for i in range(len(self.t)):
                writer.writerow([f"{v:.17e}" for v in (self.t[i], *self.e_r[i], *self.e_theta[i])])


COMPARISON_MODES = ("voc", "self", "mismatch")


def compare_voc_droop(params, net, mode="voc", n_cycles=50, steps_per_cycle=1000, theta0=None,
                      n_scale=1.5, samples_per_cycle=50):
    """Run the oscillator and its corresponding droop controller from matched initial data.

    ``mode``: "voc" compares the full time-domain oscillator with the matched
    droop loop; "mismatch" does the same with every n multiplied by
    ``n_scale``; "self" runs the averaged oscillator on both sides.
    Errors are sampled ``samples_per_cycle`` times per AC cycle; the slow
    droop and averaged loops are integrated on that grid.
    """
    if mode not in COMPARISON_MODES:
        raise ValueError(f"mode must be one of {COMPARISON_MODES}")
    if steps_per_cycle % samples_per_cycle:
        raise ValueError("samples_per_cycle must divide steps_per_cycle")
    record_stride = steps_per_cycle // samples_per_cycle
    bank = as_bank(params, net.n)
    theta0 = np.zeros(bank.n) if theta0 is None else np.broadcast_to(np.asarray(theta0, float), (bank.n,))
    guess = AveragedState(bank.r_oc * 0.99, theta0)
    eq = solve_equilibrium(net, bank, guess)
    if not eq.high_branch:
        raise NoEquilibriumFound("comparison requires a high-voltage equilibrium")
    config = correspondence(bank, eq.r, eq.P)
    period = 2 * math.pi / bank.omega
    dt = period / steps_per_cycle
    horizon = n_cycles * period
    start = eq.theta if bank.n > 1 else theta0

    if mode == "self":
        coarse = dt * record_stride
        ref = integrate_averaged(AveragedState(eq.r, start), net, bank, horizon, coarse)
        other = integrate_averaged(AveragedState(eq.r, start), net, bank, horizon, coarse)
        e_r, e_theta, t = other.r - ref.r, other.theta - ref.theta, ref.t
    else:
        if mode == "mismatch":
            config = DroopConfig(config.n * n_scale, config.m, config.Q_star, config.P_star, config.r_star)
        scenario = Scenario.from_phases(list(bank.params), net, theta0=start, amplitude=eq.r,
                                        t_end=horizon, steps_per_cycle=steps_per_cycle,
                                        record_stride=record_stride)
        trace = run(scenario)
        theta_voc = np.unwrap(trace.theta, axis=0)
        theta_voc += start - theta_voc[0]
        droop = simulate_droop(config, net, start, horizon, dt * record_stride)
        t = trace.t
        e_r = droop.r - trace.r
        e_theta = droop.theta - theta_voc
    return Comparison(mode, float(bank.eps.max()), horizon, t, e_r, e_theta, config)

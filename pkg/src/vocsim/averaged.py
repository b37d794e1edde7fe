"""Cycle-averaged amplitude/phase dynamics, their potential, and equilibria.

Averaged over one AC cycle, inverter ``j`` evolves as

    dr_j/dt     = (alpha / 2C) (r_j - beta r_j**3 / 4) - kappa_j P_j / (C r_j)
    dtheta_j/dt = kappa_j Q_j / (C r_j**2)

with (P_j, Q_j) the phasor power injections of ``network.average_power``.
"""
from dataclasses import dataclass
import csv
import math

import numpy as np

from .errors import DegenerateRadius, NoEquilibriumFound, NumericalBlowup, OverloadError
from .network import average_power
from .oscillator import DEGENERATE_RADIUS, as_bank, wrap_angle


@dataclass(frozen=True)
class AveragedState:
    r: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r", np.array(self.r, dtype=float).reshape(-1))
        object.__setattr__(self, "theta", np.array(self.theta, dtype=float).reshape(-1))
        if self.r.shape != self.theta.shape:
            raise ValueError("r and theta must have the same length")


@dataclass(frozen=True)
class Equilibrium:
    """Zero of the averaged dynamics (in a frame rotating at ``drift`` rad/s)."""
    r: np.ndarray
    theta: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    branch: tuple
    residual: float
    drift: float = 0.0
    in_omega: bool = None
    iterations: int = 0

    @property
    def state(self):
        return AveragedState(self.r, self.theta)

    @property
    def high_branch(self):
        return all(b == "high" for b in self.branch)


@dataclass
class AveragedTrace:
    t: np.ndarray
    r: np.ndarray
    theta: np.ndarray


def _check_radius(r):
    if np.any(r < DEGENERATE_RADIUS):
        raise DegenerateRadius("averaged dynamics are undefined at zero amplitude")


def averaged_rhs(state, net, params):
    """(dr/dt, dtheta/dt) of the averaged model."""
    bank = as_bank(params, net.n)
    r, theta = state.r, state.theta
    _check_radius(r)
    inj = average_power(r, theta, net)
    dr = bank.alpha / (2 * bank.C) * (r - bank.beta * r ** 3 / 4) - bank.kappa * inj.P / (bank.C * r)
    dtheta = bank.kappa * inj.Q / (bank.C * r ** 2)
    return dr, dtheta


def averaged_jacobian(state, net, params):
    """Analytic 2N x 2N Jacobian of ``averaged_rhs`` ordered (r, theta)."""
    bank = as_bank(params, net.n)
    r, theta = state.r, state.theta
    _check_radius(r)
    n = net.n
    Q = net.Q
    off = Q - np.diag(np.diag(Q))
    d = theta[:, None] - theta[None, :]
    cosd, sind = np.cos(d), np.sin(d)
    src = theta - net.gamma
    iota = net.iota
    I_t, psi = net.tracking_current, net.tracking_angle
    kc = bank.kappa / bank.C

    J = np.zeros((2 * n, 2 * n))
    # amplitude rows
    J_rr = -0.5 * kc[:, None] * off * cosd
    J_rr[np.diag_indices(n)] = (bank.alpha / (2 * bank.C) * (1 - 0.75 * bank.beta * r ** 2)
                                - 0.5 * kc * np.diag(Q))
    J_rt = -0.5 * kc[:, None] * off * r[None, :] * sind
    J_rt[np.diag_indices(n)] = kc * (0.5 * iota * np.sin(src) + 0.5 * (off * sind) @ r)
    # phase rows
    q_sum = iota * np.sin(src) + (off * sind) @ r + I_t * np.sin(psi)
    J_tr = 0.5 * (kc / r)[:, None] * off * sind
    J_tr[np.diag_indices(n)] = -0.5 * kc / r ** 2 * q_sum
    J_tt = -0.5 * (kc / r)[:, None] * off * r[None, :] * cosd
    J_tt[np.diag_indices(n)] = 0.5 * kc / r * (iota * np.cos(src) + (off * cosd) @ r)
    J[:n, :n], J[:n, n:], J[n:, :n], J[n:, n:] = J_rr, J_rt, J_tr, J_tt
    return J


def gradient_metric(params, n=None):
    """Relative weights m_j with dr_j/dt = -m_j dH/dr_j and dtheta_j/dt = -m_j dH/dtheta_j / r_j**2.

    m_j is proportional to kappa_j / C_j and normalized so the largest is 1;
    identical inverters give m_j = 1.
    """
    bank = as_bank(params, n)
    w = bank.kappa / bank.C
    return w / w.max()


def potential(state, net, params):
    """Energy-like function whose weighted gradient generates the averaged dynamics.

    For identical gains it reduces to the plain gradient form, and for a
    single unloaded inverter to (alpha / 4C) (-r**2 + beta r**4 / 8).
    Reactive tracking loads have no potential and are rejected.
    """
    bank = as_bank(params, net.n)
    if np.any(net.tracking_current * np.sin(net.tracking_angle) != 0):
        raise ValueError("reactive tracking loads are not a gradient field")
    r, theta = state.r, state.theta
    w_ref = np.max(bank.kappa / bank.C)
    Q = net.Q
    off = Q - np.diag(np.diag(Q))
    d = theta[:, None] - theta[None, :]
    per_node = (bank.alpha / (4 * bank.kappa) * (-r ** 2 + bank.beta * r ** 4 / 8)
                + 0.5 * net.iota * r * np.cos(theta - net.gamma)
                + 0.25 * np.diag(Q) * r ** 2
                + 0.5 * net.tracking_current * np.cos(net.tracking_angle) * r)
    coupling = 0.25 * np.sum(off * np.cos(d) * np.outer(r, r))
    return float(w_ref * (np.sum(per_node) + coupling))


def lyapunov_rate(state, net, params):
    """dH/dt along the averaged flow, -sum (p_j**2 + r_j**2 q_j**2) / m_j."""
    m = gradient_metric(params, net.n)
    p, q = averaged_rhs(state, net, params)
    return float(-np.sum((p ** 2 + state.r ** 2 * q ** 2) / m))


def integrate_averaged(initial, net, params, t_end, dt, record_stride=1):
    """Fixed-step RK4 trajectory of the averaged model."""
    bank = as_bank(params, net.n)
    r = initial.r.copy()
    th = initial.theta.copy()
    n_steps = int(math.floor(t_end / dt + 1e-9))
    n_rec = n_steps // record_stride + 1
    T = np.empty(n_rec)
    Rr = np.empty((n_rec, bank.n))
    Th = np.empty((n_rec, bank.n))
    T[0], Rr[0], Th[0] = 0.0, r, th
    rec = 1

    def f(rr, tt):
        return averaged_rhs(AveragedState(rr, tt), net, bank)

    for m in range(n_steps):
        k1 = f(r, th)
        k2 = f(r + 0.5 * dt * k1[0], th + 0.5 * dt * k1[1])
        k3 = f(r + 0.5 * dt * k2[0], th + 0.5 * dt * k2[1])
        k4 = f(r + dt * k3[0], th + dt * k3[1])
        r = r + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        th = th + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(th))):
            raise NumericalBlowup(f"non-finite averaged state at t = {(m + 1) * dt:.6g} s", time=(m + 1) * dt)
        if (m + 1) % record_stride == 0:
            T[rec], Rr[rec], Th[rec] = (m + 1) * dt, r, th
            rec += 1
    return AveragedTrace(T, Rr, Th)


def loading_limit(params):
    """Largest kappa * P for which a real amplitude equilibrium exists, alpha / (2 beta)."""
    return params.alpha / (2.0 * params.beta)


def single_inverter_roots(P_eq, params):
    """(r_high, r_low) solving the single-inverter power balance at average power ``P_eq``."""
    if P_eq < 0:
        raise ValueError("average power must be nonnegative")
    load = params.kappa * P_eq
    limit = loading_limit(params)
    if load > limit * (1 + 1e-12):
        raise OverloadError(f"kappa * P = {load:.6g} W exceeds the loading limit {limit:.6g} W")
    a, k = params.alpha, params.k
    disc = math.sqrt(max(a * a - 6.0 * k * load, 0.0))
    return math.sqrt((2 * a + 2 * disc) / (3 * k)), math.sqrt((2 * a - 2 * disc) / (3 * k))


def sensitivity_dP_dr(r_eq, params):
    """kappa dP/dr along the single-inverter equilibrium curve."""
    return params.alpha * (r_eq - params.beta / 2.0 * r_eq ** 3)


def branch_radius(params):
    """Amplitude separating the high- and low-voltage branches (dP/dr = 0), sqrt(2 / beta)."""
    return math.sqrt(2.0 / params.beta)


def _residual_scales(bank):
    return bank.C / bank.alpha, bank.C * bank.r_oc ** 2 / bank.kappa


def solve_equilibrium(net, params, initial_guess=None, tol=1e-10, max_iter=100, max_halvings=30):
    """Damped Newton solve for an equilibrium of the averaged dynamics.

    Without current sources the phases are only defined up to a common
    rotation, so the first phase is pinned to its initial value and a common
    frequency drift is solved for instead (it is zero unless reactive tracking
    loads are present). Residuals are scaled by C/alpha (amplitude) and
    C r_oc**2 / kappa (phase) before comparing against ``tol``.

    Newton steps use the amplitude residual multiplied by r_oc / r, which
    removes the spurious root at zero amplitude without moving the others.
    """
    bank = as_bank(params, net.n)
    n = bank.n
    if initial_guess is None:
        r0, th0 = bank.r_oc.copy(), np.zeros(n)
    else:
        r0, th0 = np.array(initial_guess.r, float), np.array(initial_guess.theta, float)
    if np.any(r0 <= 0):
        raise ValueError("initial guess must have positive radii")
    s_r, s_t = _residual_scales(bank)
    gauge = not net.has_sources

    def unpack(z):
        r = z[:n]
        if gauge:
            th = np.concatenate([[th0[0]], z[n:2 * n - 1]])
            return r, th, z[-1]
        return r, z[n:], 0.0

    def residual(z):
        r, th, drift = unpack(z)
        if np.any(r < DEGENERATE_RADIUS):
            return None
        p, q = averaged_rhs(AveragedState(r, th), net, bank)
        return np.concatenate([s_r * bank.r_oc / r * p, s_t * (q - drift)])

    def reported(z):
        r, th, drift = unpack(z)
        p, q = averaged_rhs(AveragedState(r, th), net, bank)
        return float(np.max(np.abs(np.concatenate([s_r * p, s_t * (q - drift)]))))

    def jacobian(z):
        r, th, _ = unpack(z)
        state = AveragedState(r, th)
        J = averaged_jacobian(state, net, bank)
        p, _ = averaged_rhs(state, net, bank)
        w = s_r * bank.r_oc / r
        J[:n] *= w[:, None]
        J[np.arange(n), np.arange(n)] -= w * p / r
        J[n:] *= s_t[:, None]
        if gauge:
            J = np.delete(J, n, axis=1)
            J = np.column_stack([J, np.concatenate([np.zeros(n), -s_t])])
        return J

    z = np.concatenate([r0, th0[1:], [0.0]]) if gauge else np.concatenate([r0, th0])
    F = residual(z)
    if F is None:
        raise ValueError("initial guess must have positive radii")
    norm = np.max(np.abs(F))
    it = 0
    while max(norm, reported(z)) > tol and it < max_iter:
        it += 1
        try:
            dz = np.linalg.lstsq(jacobian(z), -F, rcond=None)[0]
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        for _ in range(max_halvings + 1):
            z_try = z + lam * dz
            F_try = residual(z_try)
            if F_try is not None and np.max(np.abs(F_try)) < norm:
                break
            lam *= 0.5
        else:
            break
        z, F = z_try, F_try
        norm = np.max(np.abs(F))
    final = max(norm, reported(z))
    if not final <= tol:
        raise NoEquilibriumFound(f"Newton stalled at scaled residual {final:.3e} after {it} iterations")

    r, th, drift = unpack(z)
    th = wrap_angle(th)
    inj = average_power(r, th, net)
    branch = tuple("high" if r[j] > branch_radius(bank.params[j]) else "low" for j in range(n))
    in_omega = _omega_membership(r, net, bank)
    return Equilibrium(r, th, inj.P, inj.Q, branch, reported(z), float(drift), in_omega, it)


def _omega_membership(r, net, bank):
    """Whether r lies in the invariant band [r_low_j, r_oc]; None if that band is not certified."""
    from .stability import check_global_convergence
    cert = check_global_convergence(net, bank)
    if not np.all(cert.satisfied):
        return None
    return bool(np.all(r >= cert.r_low * (1 - 1e-12)) and np.all(r <= cert.r_oc * (1 + 1e-12)))


def equilibrium_rows(eq):
    return [{"inverter": j + 1, "r_eq": eq.r[j], "theta_eq": eq.theta[j],
             "P_eq": eq.P[j], "Q_eq": eq.Q[j], "branch": eq.branch[j]} for j in range(len(eq.r))]


def write_equilibrium_csv(eq, path):
    fields = ["inverter", "r_eq", "theta_eq", "P_eq", "Q_eq", "branch"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in equilibrium_rows(eq):
            writer.writerow([row["inverter"], f"{row['r_eq']:.17e}", f"{row['theta_eq']:.17e}",
                             f"{row['P_eq']:.17e}", f"{row['Q_eq']:.17e}", row["branch"]])

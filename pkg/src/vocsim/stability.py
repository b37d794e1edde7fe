"""Stability certificates: global convergence band, decoupled amplitude and phase Jacobians.

The amplitude Jacobian is K Gamma with K = diag(kappa); the phase Jacobian is
K Theta M with K = diag(kappa / r), M = diag(r). Gamma and Theta are symmetric,
so eigenvalues are taken from the congruent symmetric matrices
K^1/2 Gamma K^1/2 and (KM)^1/2 Theta (KM)^1/2, which share the spectra.
"""
from dataclasses import dataclass, field
import csv
import math

import numpy as np

from .linalg import jacobi_eigh
from .oscillator import as_bank, wrap_angle

ZERO_MODE_RTOL = 1e-9


@dataclass(frozen=True)
class ConvergenceCertificate:
    satisfied: np.ndarray
    r_low: np.ndarray
    r_oc: float
    margin: np.ndarray
    reasons: tuple

    @property
    def all_satisfied(self):
        return bool(np.all(self.satisfied))


@dataclass(frozen=True)
class JacobianReport:
    kind: str
    matrix: np.ndarray
    symmetric_core: np.ndarray
    eigenvalues: np.ndarray
    diagonally_dominant: bool
    spectral_abscissa: float
    stable: bool
    structural_check: dict = field(default_factory=dict)
    zero_mode: bool = False
    null_residual: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    @property
    def structural_ok(self):
        return all(self.structural_check.values())


def _line_sums(net):
    return net.g_line.sum(axis=1)


def check_global_convergence(net, params):
    """Per-inverter test of the global-convergence condition and the lower radius r_low.

    (16/81)(alpha - kappa g_jj)**3 >= k kappa**2 (iota_j + r_oc sum_l g_jl)**2, with
    r_low_j = sqrt(4 (alpha - kappa g_jj) / 9k). Tracking loads, if present,
    enter like a source of their current amplitude.
    """
    bank = as_bank(params, net.n)
    g_jj = np.diag(net.Q)
    r_oc = float(np.max(bank.r_oc))
    b = bank.alpha - bank.kappa * g_jj
    c = bank.kappa * (net.iota + net.tracking_current + r_oc * _line_sums(net))
    margin = 16.0 / 81.0 * b ** 3 - bank.k * c ** 2
    satisfied = (b > 0) & (margin >= 0)
    r_low = np.where(b > 0, np.sqrt(np.maximum(4.0 * b / (9.0 * bank.k), 0.0)), np.nan)
    reasons = []
    for j in range(bank.n):
        if b[j] <= 0:
            reasons.append("ExcessiveShunt")
        elif margin[j] < 0:
            reasons.append("CouplingTooStrong")
        else:
            reasons.append("ok")
    return ConvergenceCertificate(satisfied, r_low, r_oc, margin, tuple(reasons))


def loading_bound(P_eq, params):
    """(admissible, margin) for the loading bound 0 <= kappa P < alpha / (2 beta).

    P = 0 is admissible as the open-circuit limit. Margin is alpha/(2 beta) - kappa P.
    """
    limit = params.alpha / (2.0 * params.beta)
    load = params.kappa * P_eq
    margin = limit - load
    return bool(load >= 0 and margin > 0), float(margin)


def _spectrum(core):
    w, V = jacobi_eigh(core)
    return w, V


def _amplitude_core(eq, net, bank):
    """C-free symmetric part S with J_rr = diag(kappa / C) S."""
    r, th = np.asarray(eq.r, float), np.asarray(eq.theta, float)
    S = 0.5 * net.g_line * np.cos(th[:, None] - th[None, :])
    S[np.diag_indices(net.n)] = (bank.alpha / (2 * bank.kappa) * (1 - 0.75 * bank.beta * r ** 2)
                                 - 0.5 * np.diag(net.Q))
    return S


def _phase_core(eq, net, bank):
    """C-free symmetric part S with J_thth = diag(kappa / (C r)) S diag(r)."""
    r, th = np.asarray(eq.r, float), np.asarray(eq.theta, float)
    S = 0.5 * net.g_line * np.cos(th[:, None] - th[None, :])
    S[np.diag_indices(net.n)] = 0.5 * net.iota * np.cos(th - net.gamma) / r - (S @ r) / r
    return S


def _common_C(bank):
    if np.max(np.abs(bank.C - bank.C[0])) > 1e-12 * bank.C[0]:
        raise ValueError("Gamma and Theta are defined for a common capacitance C")
    return float(bank.C[0])


def gamma_matrix(eq, net, params):
    """Symmetric Gamma of the decoupled amplitude dynamics at ``eq``."""
    bank = as_bank(params, net.n)
    return _amplitude_core(eq, net, bank) / _common_C(bank)


def theta_matrix(eq, net, params):
    """Symmetric Theta of the decoupled phase dynamics at ``eq``.

    The diagonal carries the weights r_l / r_j that make Theta r vanish
    exactly when there are no current sources or tracking loads.
    """
    bank = as_bank(params, net.n)
    return _phase_core(eq, net, bank) / _common_C(bank)


def _is_dominant(M):
    off = np.sum(np.abs(M), axis=1) - np.abs(np.diag(M))
    return bool(np.all(np.diag(M) < 0) and np.all(-np.diag(M) >= off) and np.any(-np.diag(M) > off))


def amplitude_jacobian(eq, net, params):
    bank = as_bank(params, net.n)
    r = np.asarray(eq.r, float)
    S = _amplitude_core(eq, net, bank)
    w_j = bank.kappa / bank.C
    J = w_j[:, None] * S
    core = np.sqrt(w_j)[:, None] * S * np.sqrt(w_j)[None, :]
    w, _ = _spectrum(core)
    cert = check_global_convergence(net, bank)
    with np.errstate(invalid="ignore"):
        band = bool(np.all(r > cert.r_low) and np.all(r <= bank.r_oc * (1 + 1e-12)))
    shunt_clause = bool(np.all(bank.alpha / (2 * bank.kappa) * (1 - 0.75 * bank.beta * r ** 2) - net.g_shunt / 2 < 0))
    abscissa = float(w[-1])
    return JacobianReport(
        kind="amplitude", matrix=J, symmetric_core=core, eigenvalues=w,
        diagonally_dominant=_is_dominant(S), spectral_abscissa=abscissa, stable=abscissa < 0,
        structural_check={"radius_band": band}, diagnostics={"shunt_dominance": shunt_clause})


def phase_jacobian(eq, net, params):
    bank = as_bank(params, net.n)
    r, th = np.asarray(eq.r, float), np.asarray(eq.theta, float)
    S = _phase_core(eq, net, bank)
    w_j = bank.kappa / bank.C
    J = (w_j / r)[:, None] * S * r[None, :]
    core = np.sqrt(w_j)[:, None] * S * np.sqrt(w_j)[None, :]
    w, _ = _spectrum(core)
    scale = max(float(np.max(np.abs(w))), 1e-300)
    d = wrap_angle(th[:, None] - th[None, :])
    coupled = net.g_line > 0
    src = net.iota > 0
    check = {
        "small_angle_differences": bool(np.all(np.abs(d[coupled]) < math.pi / 2)),
        "reactive_sources": bool(np.all(np.abs(wrap_angle(th[src] - net.gamma[src])) > math.pi / 2)),
    }
    # tracking loads turn with their inverter, so only current sources pin the common phase
    zero_mode, null_res = False, float("nan")
    if not net.has_sources:
        null_res = float(np.max(np.abs(J @ np.ones(net.n)))) / scale
        zero_mode = bool(abs(w[-1]) < ZERO_MODE_RTOL * scale and null_res < ZERO_MODE_RTOL)
        rest = w[:-1]
        stable = zero_mode and bool(np.all(rest < -ZERO_MODE_RTOL * scale)) if net.n > 1 else zero_mode
        abscissa = float(w[-2]) if net.n > 1 else 0.0
    else:
        abscissa = float(w[-1])
        stable = abscissa < 0
    return JacobianReport(
        kind="phase", matrix=J, symmetric_core=core, eigenvalues=w,
        diagonally_dominant=_is_dominant(S), spectral_abscissa=abscissa, stable=stable,
        structural_check=check, zero_mode=zero_mode, null_residual=null_res)


def decoupled_amplitude_rhs(r, theta_eq, net, params):
    """Amplitude dynamics with phases frozen at ``theta_eq``."""
    bank = as_bank(params, net.n)
    r = np.asarray(r, float)
    th = np.asarray(theta_eq, float)
    coupling = (net.g_line * np.cos(th[:, None] - th[None, :])) @ r
    return (bank.alpha / (2 * bank.C) * (r - bank.beta / 4 * r ** 3)
            - bank.kappa / (2 * bank.C) * (net.iota * np.cos(th - net.gamma)
                                           + np.diag(net.Q) * r - coupling
                                           + net.tracking_current * np.cos(net.tracking_angle)))


def decoupled_phase_rhs(theta, r_eq, net, params):
    """Phase dynamics with amplitudes frozen at ``r_eq``."""
    bank = as_bank(params, net.n)
    th = np.asarray(theta, float)
    r = np.asarray(r_eq, float)
    coupling = (net.g_line * np.sin(th[:, None] - th[None, :])) @ r
    return bank.kappa / (2 * bank.C * r) * (net.iota * np.sin(th - net.gamma) - coupling
                                            + net.tracking_current * np.sin(net.tracking_angle))


def full_jacobian(eq, net, params):
    """Eigenvalues of the coupled 2N x 2N averaged Jacobian (diagnostic only)."""
    from .averaged import AveragedState, averaged_jacobian
    J = averaged_jacobian(AveragedState(eq.r, eq.theta), net, params)
    w = np.linalg.eigvals(J)
    return J, w[np.argsort(-w.real)]


def search_source_phases(net, params, n_grid=72, initial_guess=None):
    """Rotate every source phase by a common offset until the phase conditions hold.

    Offsets are swept on a uniform grid over [0, 2 pi). Returns
    (offset, rotated network, equilibrium) for the first admissible point, or
    None when no grid point yields an equilibrium meeting the conditions.
    """
    from .averaged import solve_equilibrium
    from .errors import NoEquilibriumFound
    if not net.has_sources:
        raise ValueError("network has no current sources to rotate")
    for delta in np.arange(n_grid) * 2 * math.pi / n_grid:
        trial = net.with_sources(net.sources * np.exp(1j * delta))
        try:
            eq = solve_equilibrium(trial, params, initial_guess)
        except NoEquilibriumFound:
            continue
        if eq.high_branch and phase_jacobian(eq, trial, params).structural_ok:
            return float(delta), trial, eq
    return None


def format_report(cert, amp, phase, eq=None):
    lines = ["[global convergence]"]
    for j in range(len(cert.satisfied)):
        lines.append(f"inverter {j + 1}: satisfied={bool(cert.satisfied[j])} margin={cert.margin[j]:.6e} "
                     f"r_low={cert.r_low[j]:.6f} reason={cert.reasons[j]}")
    lines.append(f"r_oc={cert.r_oc:.6f}")
    if eq is not None:
        lines.append("[equilibrium]")
        for j in range(len(eq.r)):
            lines.append(f"inverter {j + 1}: r={eq.r[j]:.6f} theta={eq.theta[j]:.6e} "
                         f"P={eq.P[j]:.6f} Q={eq.Q[j]:.6f} branch={eq.branch[j]}")
    for rep in (amp, phase):
        if rep is None:
            continue
        lines.append(f"[{rep.kind} jacobian]")
        lines.append(f"spectral_abscissa={rep.spectral_abscissa:.6e} stable={rep.stable} "
                     f"diagonally_dominant={rep.diagonally_dominant}")
        for name, ok in {**rep.structural_check, **rep.diagnostics}.items():
            lines.append(f"{name}={ok}")
        if rep.kind == "phase" and not math.isnan(rep.null_residual):
            lines.append(f"zero_mode={rep.zero_mode} null_residual={rep.null_residual:.3e}")
    return "\n".join(lines) + "\n"


def write_eigenvalue_csv(reports, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["jacobian", "index", "eigenvalue"])
        for rep in reports:
            for i, lam in enumerate(rep.eigenvalues):
                writer.writerow([rep.kind, i + 1, f"{lam:.17e}"])

"""Van der Pol inverter controller: parameters, vector fields and coordinate maps.

The oscillator is a parallel RLC circuit with a cubic current source
``g(v) = v - beta v**3 / 3``. States follow the usual convention
``x = eps * i_L = r sin(phi)``, ``y = v = r cos(phi)``, with instantaneous
phase ``phi = omega t + theta``.
"""
from dataclasses import dataclass, replace
import math

import numpy as np

from .errors import DegenerateRadius, LienardViolation

# Radii below this are treated as the polar-chart singularity.
DEGENERATE_RADIUS = 1e-9


@dataclass(frozen=True)
class OscillatorParams:
    """Physical controller parameters of one inverter.

    Derived quantities are properties, so they always agree with the
    defining formulas.
    """
    R: float
    L: float
    C: float
    sigma: float
    k: float
    kappa: float = 1.0

    @property
    def eps(self):
        return math.sqrt(self.L / self.C)

    @property
    def alpha(self):
        return self.sigma - 1.0 / self.R

    @property
    def beta(self):
        return 3.0 * self.k / self.alpha

    @property
    def omega(self):
        return 1.0 / math.sqrt(self.L * self.C)

    @property
    def r_oc(self):
        """Open-circuit (unloaded limit-cycle) amplitude, sqrt(4 alpha / 3k)."""
        return math.sqrt(4.0 * self.alpha / (3.0 * self.k))

    def with_kappa(self, kappa):
        return replace(self, kappa=float(kappa))

    def with_eps(self, eps):
        """Same L*C product (same nominal frequency) with sqrt(L/C) set to ``eps``."""
        if eps <= 0:
            raise ValueError("eps must be positive")
        root_lc = math.sqrt(self.L * self.C)
        return replace(self, L=eps * root_lc, C=root_lc / eps)


def derive_params(R, L, C, sigma, k, kappa=1.0):
    for name, value in (("R", R), ("L", L), ("C", C), ("sigma", sigma), ("k", k), ("kappa", kappa)):
        if not (value > 0 and math.isfinite(value)):
            raise ValueError(f"{name} must be positive and finite, got {value!r}")
    params = OscillatorParams(float(R), float(L), float(C), float(sigma), float(k), float(kappa))
    if params.alpha <= 0:
        raise LienardViolation(
            f"sigma - 1/R = {params.alpha:.6g} S; damping at the origin must be positive")
    return params


class OscillatorBank:
    """Per-inverter parameters stacked into arrays for vectorized evaluation."""

    def __init__(self, params, n=None):
        if isinstance(params, OscillatorParams):
            if n is None:
                n = 1
            params = [params] * n
        params = list(params)
        if n is not None and len(params) != n:
            raise ValueError(f"expected {n} oscillator parameter sets, got {len(params)}")
        if not params:
            raise ValueError("at least one oscillator is required")
        self.params = tuple(params)
        self.n = len(params)
        self.alpha = np.array([p.alpha for p in params])
        self.beta = np.array([p.beta for p in params])
        self.k = np.array([p.k for p in params])
        self.C = np.array([p.C for p in params])
        self.kappa = np.array([p.kappa for p in params])
        self.eps = np.array([p.eps for p in params])
        self.omega_all = np.array([p.omega for p in params])
        self.r_oc = np.array([p.r_oc for p in params])

    @property
    def omega(self):
        """Common nominal frequency; raises if the inverters are detuned."""
        w = self.omega_all
        if np.max(np.abs(w - w[0])) > 1e-9 * w[0]:
            raise ValueError("all inverters must share the nominal frequency 1/sqrt(LC)")
        return float(w[0])

    def __len__(self):
        return self.n


def as_bank(params, n=None):
    if isinstance(params, OscillatorBank):
        if n is not None and params.n != n:
            raise ValueError(f"expected {n} oscillators, bank has {params.n}")
        return params
    return OscillatorBank(params, n)


def cubic_source(v, beta):
    return v - beta * v ** 3 / 3.0


def wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    theta = np.asarray(theta, dtype=float)
    wrapped = theta - 2.0 * np.pi * np.ceil((theta - np.pi) / (2.0 * np.pi))
    return wrapped if wrapped.ndim else float(wrapped)


@dataclass(frozen=True)
class CartesianState:
    x: object
    y: object


@dataclass(frozen=True)
class PolarState:
    r: object
    theta: object


def cartesian_rhs(state, u, params):
    """Derivative with respect to scaled time tau = omega t."""
    x, y = state.x, state.y
    eps = params.eps
    dx = y
    dy = -x + eps * params.alpha * cubic_source(y, params.beta) + eps * params.kappa * u
    return CartesianState(dx, dy)


def polar_rhs(state, u, t, params):
    """Amplitude and phase-offset derivatives in physical time.

    ``u`` is the input current evaluated at ``t``. The phase offset
    derivative excludes the nominal rotation: d(phi)/dt = omega + d(theta)/dt.
    """
    r = np.asarray(state.r, dtype=float)
    if np.any(r < DEGENERATE_RADIUS):
        raise DegenerateRadius("polar dynamics are undefined at r = 0")
    phi = params.omega * t + np.asarray(state.theta, dtype=float)
    drive = params.alpha * cubic_source(r * np.cos(phi), params.beta) + params.kappa * u
    dr = drive * np.cos(phi) / params.C
    dtheta = -drive * np.sin(phi) / (r * params.C)
    if dr.ndim == 0:
        return PolarState(float(dr), float(dtheta))
    return PolarState(dr, dtheta)


def to_polar(state, t=0.0, omega=0.0):
    x = np.asarray(state.x, dtype=float)
    y = np.asarray(state.y, dtype=float)
    r = np.hypot(x, y)
    if np.any(r < DEGENERATE_RADIUS):
        raise DegenerateRadius("state is at the origin")
    theta = wrap_angle(np.arctan2(x, y) - omega * t)
    if r.ndim == 0:
        return PolarState(float(r), float(theta))
    return PolarState(r, theta)


def to_cartesian(state, t=0.0, omega=0.0):
    phi = omega * t + np.asarray(state.theta, dtype=float)
    r = np.asarray(state.r, dtype=float)
    x, y = r * np.sin(phi), r * np.cos(phi)
    if x.ndim == 0:
        return CartesianState(float(x), float(y))
    return CartesianState(x, y)


_SIGMA_T = np.array([[1.0, 0.0],
                     [-0.5, math.sqrt(3.0) / 2.0],
                     [-0.5, -math.sqrt(3.0) / 2.0]])


def polar_to_abc(r, phi):
    """Balanced three-phase modulation signals (m_a, m_b, m_c) from amplitude and phase."""
    r = np.asarray(r, dtype=float)
    phi = np.asarray(phi, dtype=float)
    ab = np.stack([r * np.cos(phi), r * np.sin(phi)])
    return np.tensordot(_SIGMA_T, ab, axes=1)

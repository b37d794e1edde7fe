"""Start-up speed of the unforced oscillator: arc length needed to grow between two amplitudes.

In arc length phi = omega t the averaged radius obeys
dr/dphi = (eps alpha / 2) r (1 - (r / r_oc)**2), which integrates in closed form.
"""
from dataclasses import dataclass
import csv
import math

import numpy as np

from .errors import NumericalBlowup


@dataclass(frozen=True)
class RateResult:
    eps: float
    phi_s_analytic: float
    phi_s_numeric: float

    @property
    def ratio(self):
        return self.phi_s_numeric / self.phi_s_analytic

    def product_check(self, alpha):
        return self.eps * alpha * self.phi_s_analytic


def _check_window(r_from, r_to):
    if not (0 < r_from <= r_to < 1):
        raise ValueError("fractions must satisfy 0 < from <= to < 1")


def arc_length_analytic(params, r_from=0.1, r_to=0.9):
    """Phase traversed by the averaged radius between ``r_from`` and ``r_to`` times r_oc."""
    _check_window(r_from, r_to)
    log_term = math.log(r_to / r_from) - 0.5 * math.log((1 - r_to ** 2) / (1 - r_from ** 2))
    return 2.0 / (params.eps * params.alpha) * log_term


def _unforced_orbit(params, r0, n_cycles, steps_per_cycle, phase0=0.0):
    """RK4 in tau = omega t; returns sampled radius and unwrapped phase."""
    h = 2 * math.pi / steps_per_cycle
    ea = params.eps * params.alpha
    b3 = params.beta / 3.0
    n = int(n_cycles * steps_per_cycle)
    xs = np.empty(n + 1)
    ys = np.empty(n + 1)
    x, y = r0 * math.sin(phase0), r0 * math.cos(phase0)
    xs[0], ys[0] = x, y

    def f(x, y):
        return y, -x + ea * (y - b3 * y ** 3)

    for m in range(n):
        k1x, k1y = f(x, y)
        k2x, k2y = f(x + 0.5 * h * k1x, y + 0.5 * h * k1y)
        k3x, k3y = f(x + 0.5 * h * k2x, y + 0.5 * h * k2y)
        k4x, k4y = f(x + h * k3x, y + h * k3y)
        x += h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        y += h / 6 * (k1y + 2 * k2y + 2 * k3y + k4y)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise NumericalBlowup("unforced oscillator diverged", time=(m + 1) * h / params.omega)
        xs[m + 1], ys[m + 1] = x, y
    return np.hypot(xs, ys), np.unwrap(np.arctan2(xs, ys))


def _centered_mean(values, half):
    c = np.concatenate([[0.0], np.cumsum(0.5 * (values[1:] + values[:-1]))])
    out = np.full(values.shape, np.nan)
    out[half:-half] = (c[2 * half:] - c[:-2 * half]) / (2 * half)
    return out


def _crossing(series, level, phase):
    idx = np.flatnonzero((series[:-1] < level) & (series[1:] >= level))
    if idx.size == 0:
        return None
    i = idx[0]
    w = (level - series[i]) / (series[i + 1] - series[i])
    return phase[i] + w * (phase[i + 1] - phase[i])


def arc_length_numeric(params, r_from=0.1, r_to=0.9, steps_per_cycle=1000, phase0=0.0):
    """Phase traversed by the one-cycle-mean radius between the two amplitude levels.

    The orbit starts below ``r_from`` so the cycle mean is fully formed at the
    first crossing; both crossings are located by linear interpolation.
    ``phase0`` sets the starting point on the initial circle.
    """
    _check_window(r_from, r_to)
    if steps_per_cycle % 2:
        raise ValueError("steps_per_cycle must be even")
    r_oc = params.r_oc
    expected = arc_length_analytic(params, 0.5 * r_from, min(0.5 * (1 + r_to), 0.999))
    n_cycles = int(math.ceil(1.5 * expected / (2 * math.pi))) + 4
    r, phi = _unforced_orbit(params, 0.5 * r_from * r_oc, n_cycles, steps_per_cycle, phase0)
    half = steps_per_cycle // 2
    r_bar = _centered_mean(r, half)
    phi_bar = _centered_mean(phi, half)
    valid = ~np.isnan(r_bar)
    start = _crossing(r_bar[valid], r_from * r_oc, phi_bar[valid])
    stop = _crossing(r_bar[valid], r_to * r_oc, phi_bar[valid])
    if start is None or stop is None:
        raise NumericalBlowup("averaged radius never crossed the requested window", time=float("nan"))
    return float(stop - start)


def sweep(params, eps_values, r_from=0.1, r_to=0.9, steps_per_cycle=1000):
    """Analytic and numeric arc lengths at each eps (L C held fixed)."""
    out = []
    for eps in eps_values:
        p = params.with_eps(eps)
        out.append(RateResult(float(eps), arc_length_analytic(p, r_from, r_to),
                              arc_length_numeric(p, r_from, r_to, steps_per_cycle)))
    return out


def loglog_slope(results):
    """Least-squares slope of log(phi_numeric) against log(eps)."""
    if len(results) < 2:
        return float("nan")
    x = np.log([res.eps for res in results])
    y = np.log([res.phi_s_numeric for res in results])
    return float(np.polyfit(x, y, 1)[0])


def write_sweep_csv(results, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["eps", "phi_analytic", "phi_numeric", "ratio"])
        for res in results:
            writer.writerow([f"{res.eps:.17e}", f"{res.phi_s_analytic:.17e}",
                             f"{res.phi_s_numeric:.17e}", f"{res.ratio:.17e}"])

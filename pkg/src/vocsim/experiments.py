"""Reusable experiment drivers: load sweeps, sharing runs, analysis bundles and random networks."""
from dataclasses import dataclass
import csv
import math

import numpy as np

from .averaged import AveragedState, single_inverter_roots, solve_equilibrium
from .errors import NoEquilibriumFound
from .network import KronNetwork, build_conductance, kron_reduce, NetworkSpec
from .oscillator import as_bank
from .simulator import Scenario, run
from .stability import amplitude_jacobian, check_global_convergence, phase_jacobian


@dataclass
class PowerSweep:
    eps: float
    P_set: np.ndarray
    P_measured: np.ndarray
    r_sim: np.ndarray
    r_closed_form: np.ndarray

    @property
    def rel_error(self):
        return np.abs(self.r_sim - self.r_closed_form) / self.r_closed_form


def power_sweep(params, powers, t_end, steps_per_cycle=1000):
    """Steady-state amplitude of isolated inverters, each feeding a resistive load.

    Every load conductance is sized so the averaged model settles at the
    high-branch root for its set power. All points run in one batched
    simulation with a diagonal network. The measured amplitude is the last
    one-cycle mean of r; it is compared against the closed-form root at the
    measured cycle-averaged power.
    """
    powers = np.asarray(powers, float)
    r_set = np.array([single_inverter_roots(P, params)[0] for P in powers])
    g = 2 * powers / r_set ** 2
    bank = [params] * powers.size
    scenario = Scenario.from_phases(bank, KronNetwork(np.diag(g)), amplitude=r_set, t_end=t_end,
                                    steps_per_cycle=steps_per_cycle, record_stride=max(1, steps_per_cycle // 200))
    trace = run(scenario)
    r_sim = trace.mean_amplitude()
    P_meas = trace.Pbar[-1]
    r_cf = np.array([single_inverter_roots(max(P, 0.0), params)[0] for P in P_meas])
    return PowerSweep(params.eps, powers, P_meas, r_sim, r_cf)


def write_power_sweep_csv(sweeps, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["eps", "P_set", "P_measured", "r_sim", "r_closed_form", "rel_error"])
        for sw in sweeps:
            for i in range(sw.P_set.size):
                writer.writerow([f"{v:.17e}" for v in (sw.eps, sw.P_set[i], sw.P_measured[i], sw.r_sim[i],
                                                        sw.r_closed_form[i], sw.rel_error[i])])


def sharing_run(params, networks, t_end, share_times, steps_per_cycle=1000, record_stride=10, theta0=None):
    """Time-domain run returning the trace and active-power shares at each requested time."""
    scenario = Scenario.from_phases(params, networks, theta0=theta0, t_end=t_end,
                                    steps_per_cycle=steps_per_cycle, record_stride=record_stride)
    trace = run(scenario)
    return trace, [trace.shares(t) for t in share_times]


@dataclass
class Analysis:
    equilibrium: object
    certificate: object
    amplitude: object
    phase: object


def analyze(net, params, initial_guess=None):
    bank = as_bank(params, net.n)
    guess = initial_guess or AveragedState(bank.r_oc * 0.99, np.zeros(bank.n))
    eq = solve_equilibrium(net, bank, guess)
    return Analysis(eq, check_global_convergence(net, bank),
                    amplitude_jacobian(eq, net, bank), phase_jacobian(eq, net, bank))


def random_network(rng, n, line_scale=1.0, shunt_scale=1.0, n_interior=2, source_amplitude=0.0):
    """Random connected resistive network Kron-reduced onto ``n`` inverters.

    A random spanning tree guarantees connectivity; extra edges appear with
    probability one half. Interior nodes may carry current sources of the
    given amplitude with random phases.
    """
    total = n + n_interior
    order = rng.permutation(total)
    edges = []
    for i in range(1, total):
        j = order[rng.integers(0, i)]
        edges.append((int(order[i]), int(j), float(rng.uniform(0.2, 1.0) * line_scale)))
    for a in range(total):
        for b in range(a + 1, total):
            if rng.random() < 0.5 and not any({a, b} == {e[0], e[1]} for e in edges):
                edges.append((a, b, float(rng.uniform(0.2, 1.0) * line_scale)))
    shunts = rng.uniform(0.0, 1.0, total) * shunt_scale
    sources = {}
    if source_amplitude > 0 and n_interior:
        for node in range(n, total):
            sources[node] = (float(rng.uniform(0.5, 1.0) * source_amplitude), float(rng.uniform(-math.pi, math.pi)))
    spec = NetworkSpec(total, tuple(range(n)), tuple(edges), tuple(shunts), sources)
    return spec


def random_kron(rng, n, **kwargs):
    from .network import reduce_spec
    return reduce_spec(random_network(rng, n, **kwargs))


@dataclass
class CertificateSweep:
    checked: int
    amplitude_admissible: int
    amplitude_violations: int
    phase_admissible: int
    phase_violations: int
    skipped: int


def certificate_sweep(rng, params, count, n_range=(2, 5), line_scale=0.5, shunt_scale=0.5,
                      source_probability=0.5, source_amplitude=10.0):
    """Random networks: count equilibria meeting the structural conditions whose spectra disagree."""
    amp_ok = amp_bad = ph_ok = ph_bad = skipped = 0
    for _ in range(count):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        kappas = rng.uniform(0.5, 2.0, n)
        bank = [params.with_kappa(kp) for kp in kappas]
        amp = source_amplitude if rng.random() < source_probability else 0.0
        net = random_kron(rng, n, line_scale=line_scale, shunt_scale=shunt_scale, source_amplitude=amp)
        try:
            res = analyze(net, bank)
        except NoEquilibriumFound:
            skipped += 1
            continue
        if res.amplitude.structural_ok:
            amp_ok += 1
            amp_bad += not res.amplitude.stable
        if res.phase.structural_ok:
            ph_ok += 1
            ph_bad += not res.phase.stable
    return CertificateSweep(count, amp_ok, amp_bad, ph_ok, ph_bad, skipped)

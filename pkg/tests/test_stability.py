import csv
import math

import numpy as np
import pytest

from vocsim.averaged import AveragedState, Equilibrium, solve_equilibrium
from vocsim.experiments import random_network
from vocsim.network import KronNetwork, reduce_spec
from vocsim.stability import (amplitude_jacobian, check_global_convergence, decoupled_amplitude_rhs,
                              decoupled_phase_rhs, format_report, full_jacobian, gamma_matrix, loading_bound,
                              phase_jacobian, search_source_phases, theta_matrix, write_eigenvalue_csv)

REFERENCE_MARGINS = [-13.52104704, -6.70389846, -4.61178121]


def _fd_jacobian(fun, x, h):
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((fun(x + e) - fun(x - e)) / (2 * h))
    return np.column_stack(cols)


def test_open_circuit_certificate(base):
    cert = check_global_convergence(KronNetwork([[0.0]]), base)
    assert cert.all_satisfied
    assert cert.margin[0] == pytest.approx(16 / 81 * base.alpha ** 3, rel=1e-14)
    assert cert.r_low[0] == pytest.approx(base.r_oc / math.sqrt(3), rel=1e-14)
    assert cert.reasons == ("ok",)


def test_reference_certificate_frozen(bank3, pre_net):
    cert = check_global_convergence(pre_net, bank3)
    np.testing.assert_allclose(cert.margin, REFERENCE_MARGINS, rtol=1e-8)
    assert not cert.all_satisfied
    assert cert.reasons == ("ExcessiveShunt",) * 3
    assert np.all(np.isnan(cert.r_low))


def test_certificate_monotone_in_kappa(bank3, pre_net):
    before = check_global_convergence(pre_net, bank3).margin
    after = check_global_convergence(pre_net, [p.with_kappa(p.kappa / 10) for p in bank3]).margin
    assert np.all(after >= before)


def test_coupling_too_strong(base):
    Q = 0.5 * np.array([[1.0, -1.0], [-1.0, 1.0]])
    cert = check_global_convergence(KronNetwork(Q), base)
    assert cert.reasons == ("CouplingTooStrong",) * 2


def test_loading_bound(base):
    ok, margin = loading_bound(0.0, base)
    assert ok and margin == pytest.approx(3239.97, abs=0.01)
    ok, margin = loading_bound(3300.0, base)
    assert not ok and margin < 0
    ok, _ = loading_bound(3000.0, base)
    assert ok


def test_single_inverter_amplitude_scalar(base):
    eq = solve_equilibrium(KronNetwork([[0.0]]), base)
    rep = amplitude_jacobian(eq, KronNetwork([[0.0]]), base)
    assert rep.matrix[0, 0] == pytest.approx(base.alpha / (2 * base.C) * (1 - 3), rel=1e-10)
    assert rep.stable and rep.structural_ok


def _random_eq(rng, base, sources=0.0):
    for _ in range(50):
        net = reduce_spec(random_network(rng, 3, line_scale=0.3, shunt_scale=0.2, source_amplitude=sources))
        params = [base.with_kappa(k) for k in rng.uniform(0.5, 2.0, 3)]
        try:
            eq = solve_equilibrium(net, params)
        except Exception:
            continue
        if eq.high_branch:
            return net, params, eq
    raise RuntimeError("no equilibrium found")


@pytest.mark.parametrize("sources", [0.0, 5.0])
def test_gamma_finite_differences(base, rng, sources):
    net, params, eq = _random_eq(rng, base, sources)
    rep = amplitude_jacobian(eq, net, params)
    fd = _fd_jacobian(lambda r: decoupled_amplitude_rhs(r, eq.theta, net, params), eq.r, 1e-4)
    np.testing.assert_allclose(rep.matrix, fd, rtol=1e-6, atol=1e-6 * np.abs(fd).max())
    G = gamma_matrix(eq, net, base)
    np.testing.assert_array_equal(G, G.T)


@pytest.mark.parametrize("sources", [0.0, 5.0])
def test_theta_finite_differences(base, rng, sources):
    net, params, eq = _random_eq(rng, base, sources)
    rep = phase_jacobian(eq, net, params)
    fd = _fd_jacobian(lambda th: decoupled_phase_rhs(th, eq.r, net, params), eq.theta, 1e-6)
    np.testing.assert_allclose(rep.matrix, fd, rtol=1e-6, atol=1e-6 * np.abs(fd).max())
    T = theta_matrix(eq, net, base)
    np.testing.assert_array_equal(T, T.T)


def test_theta_kills_ones_without_sources(bank3, pre_net):
    eq = solve_equilibrium(pre_net, bank3)
    rep = phase_jacobian(eq, pre_net, bank3)
    assert np.max(np.abs(rep.matrix @ np.ones(3))) <= 1e-12 * np.abs(rep.matrix).max()
    assert rep.zero_mode and rep.stable
    assert abs(rep.eigenvalues[-2]) > 1e-6 * np.abs(rep.eigenvalues).max()


def test_tracking_loads_keep_zero_mode(base):
    Q = np.array([[1.0, -1.0], [-1.0, 1.0]]) * 0.05 + 0.01 * np.eye(2)
    net = KronNetwork(Q).with_tracking_loads([2.0, 1.0], [0.3, 0.3])
    eq = solve_equilibrium(net, [base, base])
    rep = phase_jacobian(eq, net, [base, base])
    assert rep.zero_mode and rep.stable


def test_two_inverter_hand_oracle(base):
    g = 0.08
    Q = np.array([[g, -g], [-g, g]]) + 0.02 * np.diag([1.0, 3.0])
    params = [base.with_kappa(1.0), base.with_kappa(0.4)]
    eq = solve_equilibrium(KronNetwork(Q), params)
    rep = phase_jacobian(eq, KronNetwork(Q), params)
    r1, r2 = eq.r
    c12 = math.cos(eq.theta[0] - eq.theta[1])
    expected = -(g / (2 * base.C)) * (1.0 * r2 / r1 + 0.4 * r1 / r2) * c12
    lam = np.sort(np.linalg.eigvals(rep.matrix).real)
    assert lam[1] == pytest.approx(0.0, abs=1e-9 * abs(expected))
    assert lam[0] == pytest.approx(expected, rel=1e-10)
    np.testing.assert_allclose(np.sort(rep.eigenvalues)[0], expected, rtol=1e-9)


def test_inertia_preserved(rng):
    for _ in range(50):
        A = rng.normal(size=(4, 4))
        S = A + A.T
        K = np.diag(rng.uniform(0.1, 10, 4))
        M = np.diag(rng.uniform(0.1, 10, 4))
        signs = np.sign(np.linalg.eigvalsh(S))
        for mat in (K @ S, K @ S @ M):
            np.testing.assert_array_equal(np.sign(np.sort(np.linalg.eigvals(mat).real)), signs)


def test_amplitude_spectrum_matches_matrix(base, rng):
    net, params, eq = _random_eq(rng, base)
    rep = amplitude_jacobian(eq, net, params)
    direct = np.sort(np.linalg.eigvals(rep.matrix).real)
    np.testing.assert_allclose(rep.eigenvalues, direct, rtol=1e-9, atol=1e-9 * np.abs(direct).max())


def test_soundness_on_random_networks(base, rng):
    amp_checked = phase_checked = 0
    for _ in range(60):
        net, params, eq = _random_eq(rng, base, rng.choice([0.0, 5.0]))
        amp = amplitude_jacobian(eq, net, params)
        if amp.structural_ok:
            amp_checked += 1
            assert amp.stable
        ph = phase_jacobian(eq, net, params)
        if ph.structural_ok:
            phase_checked += 1
            assert ph.stable
    assert amp_checked > 0 and phase_checked > 0


def test_search_source_phases(base, rng):
    found = 0
    for _ in range(5):
        net = reduce_spec(random_network(rng, 3, line_scale=0.3, shunt_scale=0.2, source_amplitude=5.0))
        out = search_source_phases(net, base, n_grid=36)
        if out is None:
            continue
        found += 1
        delta, trial, eq = out
        rep = phase_jacobian(eq, trial, base)
        assert rep.structural_ok and rep.stable
        np.testing.assert_allclose(np.abs(trial.sources), np.abs(net.sources))
    assert found > 0
    with pytest.raises(ValueError):
        search_source_phases(KronNetwork([[0.1]]), base)


def test_full_jacobian_sorted(bank3, pre_net):
    eq = solve_equilibrium(pre_net, bank3)
    J, w = full_jacobian(eq, pre_net, bank3)
    assert J.shape == (6, 6)
    assert np.all(np.diff(w.real) <= 1e-12)
    assert abs(w[0]) < 1e-6 * np.abs(w).max()


def test_report_and_csv(bank3, pre_net, tmp_path):
    eq = solve_equilibrium(pre_net, bank3)
    cert = check_global_convergence(pre_net, bank3)
    amp, ph = amplitude_jacobian(eq, pre_net, bank3), phase_jacobian(eq, pre_net, bank3)
    text = format_report(cert, amp, ph, eq)
    assert "[amplitude jacobian]" in text and "reason=ExcessiveShunt" in text
    path = tmp_path / "eig.csv"
    write_eigenvalue_csv([amp, ph], path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["jacobian", "index", "eigenvalue"]
    assert len(rows) == 7

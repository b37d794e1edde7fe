"""Command-line front end: ``vocsim {simulate,analyze,correspond,rate} --config FILE``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 certificate or expectation violation when ``--strict`` is given.
"""
import argparse
import json
import math
import os
import sys

import numpy as np

from . import config as cfg
from .averaged import single_inverter_roots, write_equilibrium_csv
from .droop import compare_voc_droop
from .errors import ConfigError, VocError
from .experiments import analyze, certificate_sweep, power_sweep, write_power_sweep_csv
from .rate import loglog_slope, sweep as rate_sweep, write_sweep_csv
from .simulator import DEFAULT_STEPS_PER_CYCLE, Scenario, run
from .stability import format_report, loading_bound, search_source_phases, write_eigenvalue_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VIOLATION = 0, 2, 3, 4


class Report:
    """Plain-text summary built from fixed section headers and key=value lines."""

    def __init__(self, subcommand):
        self.lines = [f"== vocsim {subcommand} =="]
        self.violations = []
        self.files = []

    def section(self, title):
        self.lines.append(f"[{title}]")

    def add(self, key, value):
        if isinstance(value, float):
            value = f"{value:.6g}"
        elif isinstance(value, (list, tuple, np.ndarray)):
            value = " ".join(f"{v:.6g}" if isinstance(v, (float, np.floating)) else str(v) for v in value)
        self.lines.append(f"{key}={value}")

    def violation(self, message):
        self.violations.append(message)
        self.lines.append(f"VIOLATION {message}")

    def text(self):
        tail = ["[files]"] + self.files + ["[status]", f"violations={len(self.violations)}"]
        return "\n".join(self.lines + tail) + "\n"


def _label(exp, index):
    return exp.get("name") or f"{exp['kind']}{index}"


def _out(report, out_dir, filename):
    report.files.append(filename)
    return os.path.join(out_dir, filename)


def cmd_simulate(data, out_dir, report, seed=None):
    params = cfg.oscillators(data)
    stages = cfg.networks(data, params)
    for index, exp in enumerate(cfg.experiments(data, "simulate")):
        label = _label(exp, index)
        report.section(f"experiment {label}")
        if exp["kind"] == "power_sweep":
            _power_sweep(exp, params[0], out_dir, report, label)
            continue
        spc = exp.get("steps_per_cycle", DEFAULT_STEPS_PER_CYCLE)
        scenario = Scenario.from_phases(params, stages, cfg.initial_phases(data), cfg.initial_amplitude(data),
                                        exp["t_end"], spc, exp.get("record_stride", 10))
        trace = run(scenario)
        trace.to_csv(_out(report, out_dir, f"{label}_trace.csv"))
        report.add("t_end", float(trace.t[-1]))
        if trace.t[-1] >= trace.period:
            report.add("r_mean", trace.mean_amplitude())
            report.add("Pbar", trace.Pbar[-1])
            report.add("Qbar", trace.Qbar[-1])
        report.add("theta", trace.theta[-1])
        times = exp.get("share_times", [float(trace.t[-1])])
        expected = exp.get("expected_shares")
        tol = exp.get("share_tolerance", 0.02)
        report.section(f"shares {label}")
        for t in times:
            shares = trace.shares(t)
            report.add(f"shares_at_{t:g}", 100 * shares)
            if expected is not None:
                dev = float(np.max(np.abs(shares - np.asarray(expected))))
                report.add(f"max_deviation_at_{t:g}", dev)
                if dev > tol:
                    report.violation(f"{label}: shares at t={t:g} deviate by {dev:.4f} > {tol:g}")


def _power_sweep(exp, base, out_dir, report, label):
    powers = cfg.linspace(exp["powers"])
    sweeps = []
    for run_cfg in exp["runs"]:
        params = base if run_cfg["eps"] is None else base.with_eps(run_cfg["eps"])
        sw = power_sweep(params, powers, run_cfg["t_end"], exp.get("steps_per_cycle", DEFAULT_STEPS_PER_CYCLE))
        sweeps.append(sw)
        tol = run_cfg.get("tolerance", 2 * params.eps)
        worst = float(sw.rel_error.max())
        report.add(f"eps_{params.eps:.6g}_max_rel_error", worst)
        report.add(f"eps_{params.eps:.6g}_tolerance", tol)
        if worst > tol:
            report.violation(f"{label}: relative amplitude error {worst:.4g} exceeds {tol:.4g} at eps={params.eps:.4g}")
    write_power_sweep_csv(sweeps, _out(report, out_dir, f"{label}_power_sweep.csv"))


def cmd_analyze(data, out_dir, report, seed=None):
    params = cfg.oscillators(data)
    stages = cfg.networks(data, params)
    for index, exp in enumerate(cfg.experiments(data, "analyze")):
        label = _label(exp, index)
        if exp["kind"] == "certificate_sweep":
            _certificate_sweep(exp, params[0], report, label, seed)
            continue
        if "operating_power" in exp:
            report.section(f"loading {label}")
            for j, p in enumerate(params):
                ok, margin = loading_bound(exp["operating_power"], p)
                report.add(f"inverter_{j + 1}_loading_margin", margin)
                r_high, r_low = single_inverter_roots(exp["operating_power"], p)
                report.add(f"inverter_{j + 1}_roots", [r_high, r_low])
        for s, (t_stage, net) in enumerate(stages):
            tag = f"{label}_stage{s}"
            report.section(f"analysis {tag}")
            report.add("stage_start", t_stage)
            guess = None
            if "initial_guess" in exp:
                from .averaged import AveragedState
                g = exp["initial_guess"]
                guess = AveragedState(np.broadcast_to(np.asarray(g.get("r", params[0].r_oc), float), (net.n,)),
                                      np.broadcast_to(np.asarray(g.get("theta", 0.0), float), (net.n,)))
            if exp.get("search_source_phases") and net.has_sources:
                found = search_source_phases(net, params, exp.get("phase_grid", 72), guess)
                if found is None:
                    report.violation(f"{tag}: no source phase offset satisfies the phase conditions")
                else:
                    report.add("source_phase_offset", found[0])
                    net = found[1]
            res = analyze(net, params, guess)
            write_equilibrium_csv(res.equilibrium, _out(report, out_dir, f"{tag}_equilibrium.csv"))
            write_eigenvalue_csv([res.amplitude, res.phase], _out(report, out_dir, f"{tag}_eigenvalues.csv"))
            report.lines.extend(format_report(res.certificate, res.amplitude, res.phase, res.equilibrium).splitlines())
            report.section(f"verdict {tag}")
            report.add("global_convergence", res.certificate.all_satisfied)
            report.add("amplitude_structural", res.amplitude.structural_ok)
            report.add("phase_structural", res.phase.structural_ok)
            if not res.certificate.all_satisfied:
                report.violation(f"{tag}: global convergence condition fails ({', '.join(res.certificate.reasons)})")
            for rep in (res.amplitude, res.phase):
                if not rep.structural_ok:
                    report.violation(f"{tag}: {rep.kind} structural condition fails")
                elif not rep.stable:
                    report.violation(f"{tag}: {rep.kind} certificate holds but spectrum is not stable")


def _certificate_sweep(exp, base, report, label, seed):
    rng = np.random.default_rng(seed)
    res = certificate_sweep(rng, base, exp["count"], (exp.get("n_min", 2), exp.get("n_max", 5)),
                            exp.get("line_scale", 0.5), exp.get("shunt_scale", 0.5),
                            exp.get("source_probability", 0.5), exp.get("source_amplitude", 10.0))
    report.section(f"certificate sweep {label}")
    report.add("seed", "none" if seed is None else seed)
    for key in ("checked", "amplitude_admissible", "amplitude_violations", "phase_admissible",
                "phase_violations", "skipped"):
        report.add(key, getattr(res, key))
    if res.amplitude_violations or res.phase_violations:
        report.violation(f"{label}: certificate soundness violated on random networks")


def cmd_correspond(data, out_dir, report, seed=None):
    params = cfg.oscillators(data)
    net = cfg.networks(data, params)[0][1]
    theta0 = cfg.initial_phases(data)
    for index, exp in enumerate(cfg.experiments(data, "correspond")):
        label = _label(exp, index)
        report.section(f"correspondence {label}")
        modes = exp.get("modes", ["voc", "mismatch", "self"])
        sups = {}
        for e_idx, eps in enumerate(exp["eps"]):
            bank = [p.with_eps(eps) for p in params]
            for mode in modes:
                if mode != "voc" and e_idx:
                    continue
                comp = compare_voc_droop(bank, net, mode, exp.get("n_cycles", 50),
                                         exp.get("steps_per_cycle", DEFAULT_STEPS_PER_CYCLE), theta0,
                                         exp.get("n_scale", 1.5), exp.get("samples_per_cycle", 50))
                comp.to_csv(_out(report, out_dir, f"{label}_{mode}_eps{e_idx}.csv"))
                if mode == "voc" and e_idx == 0:
                    with open(_out(report, out_dir, f"{label}_droop_config.json"), "w") as fh:
                        fh.write(json.dumps(comp.config.to_dict(), sort_keys=True, indent=2) + "\n")
                key = f"{mode}_eps_{eps:.6g}"
                report.add(f"{key}_horizon_s", comp.horizon)
                report.add(f"{key}_sup_e_r", comp.sup_e_r)
                report.add(f"{key}_sup_e_theta", comp.sup_e_theta)
                report.add(f"{key}_secular", comp.secular)
                if mode == "voc":
                    sups[eps] = (comp.sup_e_r, comp.sup_e_theta)
                elif mode == "mismatch" and not comp.secular:
                    report.violation(f"{label}: mismatched droop gain shows no secular phase drift")
                elif mode == "self" and (comp.sup_e_r or comp.sup_e_theta):
                    report.violation(f"{label}: self-comparison is not identically zero")
        tol = exp.get("halving_tolerance", 0.3)
        ordered = sorted(sups)
        for small, big in zip(ordered, ordered[1:]):
            factor = big / small
            for name, i in (("e_r", 0), ("e_theta", 1)):
                ratio = sups[small][i] / sups[big][i]
                report.add(f"ratio_{name}_{small:.6g}_over_{big:.6g}", ratio)
                expected = 1.0 / factor
                if abs(ratio - expected) > tol * expected:
                    report.violation(f"{label}: sup {name} ratio {ratio:.3f} is not within {tol:g} of {expected:.3f}")


def cmd_rate(data, out_dir, report, seed=None):
    base = cfg.oscillators(data)[0]
    for index, exp in enumerate(cfg.experiments(data, "rate")):
        label = _label(exp, index)
        results = rate_sweep(base, exp["eps"], exp.get("r_from", 0.1), exp.get("r_to", 0.9),
                             exp.get("steps_per_cycle", DEFAULT_STEPS_PER_CYCLE))
        write_sweep_csv(results, _out(report, out_dir, f"{label}_rate.csv"))
        report.section(f"rate {label}")
        for res in results:
            report.add(f"eps_{res.eps:.6g}", [res.phi_s_analytic, res.phi_s_numeric, res.ratio])
        report.add("eps_alpha_phi_analytic", results[0].product_check(base.alpha))
        slope = loglog_slope(results)
        report.add("loglog_slope", "nan" if math.isnan(slope) else slope)
        tol = exp.get("slope_tolerance", 0.05)
        if not math.isnan(slope) and abs(slope + 1) > tol:
            report.violation(f"{label}: log-log slope {slope:.4f} is not within {tol:g} of -1")


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "correspond": cmd_correspond, "rate": cmd_rate}


def build_parser():
    parser = argparse.ArgumentParser(prog="vocsim", description="Virtual-oscillator microgrid experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario file (JSON syntax)")
        p.add_argument("--out", default=None, help="output directory (overrides the scenario's)")
        p.add_argument("--seed", type=int, default=None, help="seed for randomized experiments")
        p.add_argument("--strict", action="store_true", help="exit with code 4 on any certificate violation")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        data = cfg.load(args.config)
        cfg.experiments(data, args.command)
        out_dir = args.out or data.get("output", {}).get("directory", "out")
        os.makedirs(out_dir, exist_ok=True)
        report = Report(args.command)
        report.add("config", os.path.basename(args.config))
        COMMANDS[args.command](data, out_dir, report, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (VocError, ArithmeticError, np.linalg.LinAlgError) as exc:
        where = getattr(exc, "time", None)
        suffix = f" (t = {where:.6g} s)" if where is not None and not math.isnan(where) else ""
        print(f"numerical failure: {type(exc).__name__}: {exc}{suffix}", file=sys.stderr)
        return EXIT_NUMERIC
    text = report.text()
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(text)
    sys.stdout.write(text)
    if args.strict and report.violations:
        return EXIT_VIOLATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

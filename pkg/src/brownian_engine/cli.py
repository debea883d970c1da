"""Command-line entry point: ``brownian-engine <subcommand> [--config file.toml] ...``.

Each subcommand writes plot-ready CSV files and a ``checks.json`` into the
output directory. The exit status is 0 only when every internal cross-check
passes; otherwise the failed checks are printed to stderr as JSON and the
status is 1. Configuration errors exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import bathswitch, dynamics, efficiency, langevin, maxpower, perturb, thermo
from .core import Bath, Oscillator, Regime, UnitSystem, diffusion_coefficient, thermal_moments
from .tables import write_csv

COMMANDS = ("thermo", "cycle", "bathswitch", "protocol", "maxpower", "simulate")

_NUM = (int, float)
_LIST = (list,)

# section -> key -> (accepted types, default)
SCHEMA = {
    "thermo": {
        "omega": (_NUM + _LIST, [0.5, 1.0, 2.0]),
        "T": (_NUM + _LIST, [0.5, 1.0, 2.0]),
    },
    "cycle": {
        "engine": ((str,), "stirling"),
        "omega1": (_NUM, 1.0),
        "omega2": (_NUM, 2.04922),
        "Tc": (_NUM, 0.845272),
        "Th": (_NUM, 1.0),
        "omega_c": (_NUM, 1.0),
        "omega_h": (_NUM, 2.0),
        "mu_neq": (_NUM, 0.5),
        "kappa": (_NUM, None),
        "tau": (_NUM, None),
        "a": (_NUM, None),
        "b": (_NUM, None),
        "c": (_NUM, None),
        "grid_a": (_LIST, None),
        "grid_c": (_LIST, None),
    },
    "bathswitch": {
        "omega": (_NUM, 1.0),
        "kappa_over_omega": (_LIST, [0.01, 0.1, 1.0, 10.0, 100.0]),
        "kappa_tau": (_LIST, [0.01, 0.1, 1.0, 10.0]),
    },
    "protocol": {
        "omega_i": (_NUM, 2.0),
        "omega_f": (_NUM, 1.0),
        "T": (_NUM, 1.0),
        "m": (_NUM, 1.0),
        "kappa": (_NUM, 1.0),
        "tau": (_NUM, 10.0),
        "regime": ((str,), "overdamped"),
        "limit": ((str,), "classical"),
        "n_samples": ((int,), 65),
        "bound_omega_f": (_LIST, [0.25, 0.5, 1.0, 1.5]),
        "bound_beta": (_LIST, [0.1, 1.0, 10.0]),
    },
    "maxpower": {
        "Tc": (_NUM, 0.25),
        "Th": (_NUM, 1.0),
        "Sigma_h": (_NUM, None),
        "Sigma_c": (_NUM, None),
        "DeltaS": (_NUM, None),
        "mu_neq": (_NUM, 0.0),
        "omega1": (_NUM, 1.0),
        "omega2": (_NUM, 2.05),
        "m": (_NUM, 1.0),
        "kappa": (_NUM, 1.0),
        "regime": ((str,), "overdamped"),
        "grid_b": (_NUM, 2.05),
        "grid_mu": (_LIST, [0.001, 0.1, 0.2, 0.4]),
        "grid_points": ((int,), 99),
    },
    "simulate": {
        "m": (_NUM, 1.0),
        "kappa": (_NUM, 1.0),
        "omega0": (_NUM, 1.0),
        "omega1": (_NUM, None),
        "T0": (_NUM, 1.0),
        "T1": (_NUM, None),
        "tau": (_NUM, 1.0),
        "N": ((int,), 2000),
        "dt": (_NUM, 0.005),
        "regime": ((str,), "classical"),
        "n_out": ((int,), 11),
        "bins": ((int,), 40),
        "workers": ((int,), 1),
        "se_threshold": (_NUM, 3.0),
        "pass_fraction": (_NUM, 0.95),
    },
}

TOP_LEVEL = {"units": ((str,), "natural"), "seed": ((int,), 0)}


class ConfigError(ValueError):
    pass


def _check_type(where, value, types):
    if isinstance(value, bool) or not isinstance(value, types):
        raise ConfigError(f"{where}: expected {'/'.join(t.__name__ for t in types)}, "
                          f"got {type(value).__name__}")


def load_config(path, command: str) -> dict:
    """Read and validate a TOML config; returns the top level plus the command section."""
    raw = {}
    if path is not None:
        with open(path, "rb") as fh:
            try:
                raw = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
    for key in raw:
        if key not in TOP_LEVEL and key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
    cfg = {}
    for key, (types, default) in TOP_LEVEL.items():
        value = raw.get(key, default)
        _check_type(key, value, types)
        cfg[key] = value
    for section, schema in SCHEMA.items():
        given = raw.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key in given:
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
        if section != command:
            continue
        sec = {}
        for key, (types, default) in schema.items():
            value = given.get(key, default)
            if value is not None:
                _check_type(f"{section}.{key}", value, types)
                if isinstance(value, list):
                    for v in value:
                        _check_type(f"{section}.{key}[]", v, _NUM)
            sec[key] = value
        cfg[command] = sec
    return cfg


class Checks:
    def __init__(self):
        self.items = []

    def add(self, name, value, tol, passed=None):
        value = float(value)
        ok = bool(value <= tol) if passed is None else bool(passed)
        if not math.isfinite(value):
            ok = False
        self.items.append({"name": name, "value": value, "tol": float(tol), "passed": ok})

    def rel(self, name, a, b, tol):
        self.add(name, abs(a - b) / max(abs(b), 1e-300), tol)

    @property
    def failures(self):
        return [c for c in self.items if not c["passed"]]

    def write(self, out: Path):
        doc = {"passed": not self.failures, "checks": self.items}
        (out / "checks.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")


def _as_list(x):
    return [float(v) for v in (x if isinstance(x, list) else [x])]


def _write_json(path: Path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- commands


def cmd_thermo(cfg, units, seed, out, checks):
    c = cfg["thermo"]
    rows = []
    for T in _as_list(c["T"]):
        bath = Bath(T)
        for w in _as_list(c["omega"]):
            cl = thermo.state_functions(w, bath, Regime.CLASSICAL, units)
            qu = thermo.state_functions(w, bath, Regime.QUANTUM, units)
            rows.append((w, T, cl.U, cl.F, cl.S, qu.U, qu.F, qu.S, qu.n))
            for tag, sf in (("classical", cl), ("quantum", qu)):
                checks.add(f"F=U-TS {tag} omega={w:g} T={T:g}",
                           abs(sf.F - (sf.U - T * sf.S)) / max(abs(sf.U), abs(sf.F), 1e-300), 1e-10)
            sigma = thermo.uncertainty_defect(
                thermal_moments(Oscillator(), w, bath, Regime.QUANTUM, units), units)
            checks.add(f"defect=n omega={w:g} T={T:g}", abs(sigma - qu.n) / max(qu.n, 1e-300), 1e-10)
    write_csv(out / "thermo.csv", ["omega", "T", "U_classical", "F_classical", "S_classical",
                                   "U_quantum", "F_quantum", "S_quantum", "n"], rows)


def cmd_cycle(cfg, units, seed, out, checks):
    c = cfg["cycle"]
    engine = c["engine"]
    report = [("engine_" + engine, 1)]
    if engine == "stirling":
        if c["a"] is not None:
            d = efficiency.DimensionlessStirling(c["a"], c["b"], c["c"], c["mu_neq"])
            spec = None
        else:
            spec = efficiency.StirlingSpec(c["omega1"], c["omega2"], c["Tc"], c["Th"])
            d = efficiency.DimensionlessStirling.from_spec(spec, c["mu_neq"], units)
        eta_cl = efficiency.stirling_classical(d)
        eta_q = efficiency.stirling_quantum(d)
        report += [("a", d.a), ("b", d.b), ("c", d.c), ("mu_neq", d.mu_neq),
                   ("eta_c", 1.0 - d.c), ("eta_classical", eta_cl), ("eta_quantum", eta_q),
                   ("R", eta_q / eta_cl)]
        if spec is not None:
            for reg, closed in (("classical", eta_cl), ("quantum", eta_q)):
                via = efficiency.stirling_cycle_efficiency(spec, reg, d.mu_neq, units)
                checks.rel(f"stirling {reg} thermo route", via, closed, 1e-10)
                quad = efficiency.stirling_cycle_efficiency(spec, reg, d.mu_neq, units, "quadrature")
                checks.rel(f"stirling {reg} quadrature route", quad, closed, 1e-9)
            if c["kappa"] is not None and c["tau"] is not None:
                s = bathswitch.alpha_beta_closed(c["kappa"], spec.omega2, c["tau"])
                dd = efficiency.DimensionlessStirling(d.a, d.b, d.c, s.mu_neq)
                report += [("alpha", s.alpha_q), ("beta", s.beta_p), ("mu_dynamic", s.mu_neq),
                           ("eta_classical_dynamic", efficiency.stirling_classical(dd)),
                           ("eta_quantum_dynamic", efficiency.stirling_quantum(dd))]
                q = bathswitch.alpha_beta_quadrature(c["kappa"], spec.omega2, c["tau"])
                checks.rel("alpha closed vs quadrature", s.alpha_q, q.alpha_q, 1e-9)
                checks.rel("beta closed vs quadrature", s.beta_p, q.beta_p, 1e-9)
        if c["grid_a"] is not None and c["grid_c"] is not None:
            grid = efficiency.efficiency_ratio_grid(d.b, c["grid_a"], c["grid_c"], d.mu_neq)
            grid.to_csv(out / "ratio_grid.csv")
            i, j = len(grid.a) // 2, len(grid.c) // 2
            dd = efficiency.DimensionlessStirling(grid.a[i], d.b, grid.c[j], d.mu_neq)
            checks.rel("grid spot cell", grid.R[i, j],
                       efficiency.stirling_quantum(dd) / efficiency.stirling_classical(dd), 1e-14)
    elif engine == "carnot":
        spec = efficiency.CarnotSpec.from_hot_isotherm(c["omega2"], c["omega1"], c["Tc"], c["Th"])
        eta = efficiency.carnot_efficiency(spec)
        report += [("eta_c", eta)]
        for reg in ("classical", "quantum"):
            via = efficiency.carnot_cycle_efficiency(spec, reg, units)
            report.append((f"eta_{reg}", via))
            checks.rel(f"carnot {reg} thermo route", via, eta, 1e-10)
    elif engine == "otto":
        spec = efficiency.OttoSpec(c["omega_c"], c["omega_h"], c["Tc"], c["Th"])
        eta = efficiency.otto_efficiency(spec)
        report += [("eta_otto", eta), ("eta_c", 1.0 - spec.Tc / spec.Th)]
        for reg in ("classical", "quantum"):
            via = efficiency.otto_cycle_efficiency(spec, reg, units)
            report.append((f"eta_{reg}", via))
            checks.rel(f"otto {reg} thermo route", via, eta, 1e-10)
    else:
        raise ConfigError(f"cycle.engine must be stirling, carnot or otto, got {engine!r}")
    write_csv(out / "cycle.csv", ["quantity", "value"], report)


def cmd_bathswitch(cfg, units, seed, out, checks):
    c = cfg["bathswitch"]
    sw = bathswitch.sweep(c["kappa_over_omega"], c["kappa_tau"], c["omega"])
    sw.to_csv(out / "bathswitch.csv")
    for i, r in enumerate(sw.kappa_over_omega):
        for j, kt in enumerate(sw.kappa_tau):
            kappa = r * c["omega"]
            q = bathswitch.alpha_beta_quadrature(kappa, c["omega"], kt / kappa)
            checks.rel(f"alpha r={r:g} kt={kt:g}", sw.alpha[i, j], q.alpha_q, 1e-9)
            checks.rel(f"beta r={r:g} kt={kt:g}", sw.beta[i, j], q.beta_p, 1e-9)
            checks.add(f"alpha>beta r={r:g} kt={kt:g}", sw.beta[i, j] - sw.alpha[i, j], 0.0,
                       passed=sw.alpha[i, j] > sw.beta[i, j])


def cmd_protocol(cfg, units, seed, out, checks):
    c = cfg["protocol"]
    osc = Oscillator(c["m"], c["kappa"])
    bath = Bath(c["T"])
    reg, lim = c["regime"], c["limit"]
    opt = perturb.optimal_protocol(c["omega_i"], c["omega_f"], bath, reg, lim, units, c["n_samples"])
    res_opt = perturb.irreversible_heat(opt.schedule, c["tau"], bath, osc, reg, lim, units,
                                        c["n_samples"])
    lin = perturb.linear_path(c["omega_i"], c["omega_f"])
    res_lin = perturb.irreversible_heat(lin, c["tau"], bath, osc, reg, lim, units)
    bound = perturb.complementarity_bound(c["omega_i"], c["omega_f"], bath, osc, reg, lim, units)
    tq = res_opt.Q_irr * c["tau"]
    ratio = tq / bound if bound > 0 else 1.0
    rows = ((s, w, opt.g(w), opt.g(w) * opt.schedule.derivative(s) ** 2) for s, w in opt.samples)
    write_csv(out / "protocol.csv", ["s", "omega", "g", "dI_ds"], rows)
    write_csv(out / "protocol_report.csv", ["quantity", "value"], [
        ("Q_irr_linear", res_lin.Q_irr), ("Q_irr_optimal", res_opt.Q_irr),
        ("tau_Q_irr_optimal", tq), ("bound", bound), ("tightness", ratio),
        ("Sigma_optimal", res_opt.Sigma), ("I_min", opt.I_min)])
    perturb.write_bound_table(out / "bounds.csv", perturb.bound_table(
        c["omega_i"], c["bound_omega_f"], c["bound_beta"], osc, reg, lim, units))
    checks.add("bound tightness", abs(ratio - 1.0), 1e-9)
    checks.add("linear >= optimal", res_opt.Q_irr - res_lin.Q_irr, 1e-12 * max(res_lin.Q_irr, 1e-300))


def cmd_maxpower(cfg, units, seed, out, checks):
    c = cfg["maxpower"]
    if c["Sigma_h"] is not None:
        dS = c["DeltaS"] if c["DeltaS"] is not None else units.kB * math.log(c["omega2"] / c["omega1"])
        inp = maxpower.MaxPowerInputs(c["Tc"], c["Th"], c["Sigma_h"], c["Sigma_c"], dS,
                                      c["mu_neq"], units.kB)
    else:
        spec = efficiency.StirlingSpec(c["omega1"], c["omega2"], c["Tc"], c["Th"])
        inp = maxpower.MaxPowerInputs.from_stirling(spec, Oscillator(c["m"], c["kappa"]),
                                                    c["regime"], "classical", c["mu_neq"],
                                                    units=units)
    res = maxpower.maximize(inp)
    sub = maxpower.eta_at_max_power(inp, "substitution")
    rep = maxpower.bounds_and_special_values(inp)
    write_csv(out / "maxpower.csv", ["quantity", "value"], [
        ("Sigma_h", inp.Sigma_h), ("Sigma_c", inp.Sigma_c), ("DeltaS", inp.DeltaS),
        ("tau_h_star", res.tau_h_star), ("tau_c_star", res.tau_c_star), ("P_max", res.P_max),
        ("eta_star", res.eta_star), ("eta_c", rep.eta_c), ("eta_CA", rep.eta_CA),
        ("lower", rep.lower), ("upper", rep.upper), ("regime_flag", int(rep.regime_flag))])
    checks.rel("eta* closed vs substitution", res.eta_star, sub, 1e-10)
    checks.add("eta* within bounds", 0.0, 0.0,
               passed=rep.lower * (1 - 1e-12) <= res.eta_star <= rep.upper * (1 + 1e-12))
    grid = maxpower.figure_grid(c["grid_b"], c["grid_mu"],
                                np.linspace(0.0, 1.0, c["grid_points"] + 2)[1:-1])
    grid.to_csv(out / "figure_grid.csv")
    checks.add("grid lower <= upper", 0.0, 0.0, passed=all(r[2] <= r[3] for r in grid.rows))


def cmd_simulate(cfg, units, seed, out, checks):
    c = cfg["simulate"]
    osc = Oscillator(c["m"], c["kappa"])
    regime = Regime(c["regime"])
    tau = c["tau"]
    w0 = c["omega0"]
    w1 = c["omega1"] if c["omega1"] is not None else w0
    T0 = c["T0"]
    T1 = c["T1"] if c["T1"] is not None else T0
    if w1 != w0 and T1 != T0:
        raise ConfigError("simulate: ramp either the frequency or the temperature, not both")
    if w1 == w0:
        freq = dynamics.FrequencySchedule.constant(w0)
        D0 = diffusion_coefficient(osc, w0, Bath(T0), regime, units)
        D1 = diffusion_coefficient(osc, w0, Bath(T1), regime, units)
        D = dynamics.DiffusionSchedule.constant(D0) if T1 == T0 else \
            dynamics.DiffusionSchedule.linear_ramp(D0, D1, tau)
    else:
        freq = dynamics.FrequencySchedule.function(
            lambda t: w0 + (w1 - w0) * min(max(t / tau, 0.0), 1.0),
            lambda t: (w1 - w0) / tau if 0.0 <= t <= tau else 0.0, duration=tau)
        D = dynamics.DiffusionSchedule.isothermal(osc, freq, Bath(T0), regime, units)
    V0 = thermal_moments(osc, w0, Bath(T0), regime, units)
    st = langevin.simulate_ensemble(freq, D, osc, V0, c["N"], c["dt"], seed, tau, c["n_out"],
                                    c["workers"])
    traj = dynamics.moment_ode_integrate(osc, freq, D, V0, (0.0, tau), t_eval=st.t)
    rows, within, total = [], 0, 0
    for i, t in enumerate(st.t):
        ode = traj.at(float(t)).as_array()
        devs = []
        for k in range(3):
            se = st.moments_se[i, k]
            dev = (st.moments[i, k] - ode[k]) / se if se > 0 else 0.0
            devs.append(dev)
            if i > 0:
                total += 1
                within += abs(dev) <= c["se_threshold"]
        rows.append((t, *st.moments[i], *st.moments_se[i], *ode, *devs))
    write_csv(out / "moments.csv", ["t", "q2", "qp", "p2", "q2_se", "qp_se", "p2_se",
                                    "q2_ode", "qp_ode", "p2_ode", "q2_dev", "qp_dev", "p2_dev"], rows)
    langevin.work_distribution(st.W, c["bins"]).to_csv(out / "work_hist.csv")
    langevin.work_distribution(st.Q, c["bins"]).to_csv(out / "heat_hist.csv")
    _write_json(out / "stats.json", st.summary())
    frac = within / total if total else 1.0
    checks.add("fraction of moments within threshold", 1.0 - frac, 1.0 - c["pass_fraction"])
    checks.add("energy balance residual", st.balance_residual, 1e-9)


HANDLERS = {
    "thermo": cmd_thermo,
    "cycle": cmd_cycle,
    "bathswitch": cmd_bathswitch,
    "protocol": cmd_protocol,
    "maxpower": cmd_maxpower,
    "simulate": cmd_simulate,
}

PLOT_SCRIPT = {
    "thermo": ("thermo.csv", "omega", ["U_classical", "U_quantum"]),
    "cycle": ("cycle.csv", None, []),
    "bathswitch": ("bathswitch.csv", "kappa_tau", ["alpha", "beta", "mu"]),
    "protocol": ("protocol.csv", "s", ["omega"]),
    "maxpower": ("figure_grid.csv", "eta_c", ["lower", "upper", "eta_CA", "eta_c_half"]),
    "simulate": ("moments.csv", "t", ["q2", "q2_ode", "p2", "p2_ode"]),
}


def _plot_script(command, out: Path):
    fname, x, ys = PLOT_SCRIPT[command]
    if x is None:
        return
    lines = [
        "import csv",
        "import matplotlib.pyplot as plt",
        "",
        f"with open({fname!r}) as fh:",
        "    rows = list(csv.DictReader(fh))",
        f"x = [float(r[{x!r}]) for r in rows]",
    ]
    for y in ys:
        lines.append(f"plt.plot(x, [float(r[{y!r}]) for r in rows], '.', label={y!r})")
    lines += [f"plt.xlabel({x!r})", "plt.legend()", f"plt.savefig('{command}.png', dpi=150)", ""]
    (out / f"plot_{command}.py").write_text("\n".join(lines), encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="brownian-engine", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, default=None, help="TOML configuration file")
    ap.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="RNG seed (overrides the config)")
    ap.add_argument("--units", choices=("natural", "si"), default=None,
                    help="unit system (overrides the config)")
    ap.add_argument("--plot-script", action="store_true", help="also write a matplotlib script")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command)
        units = UnitSystem.named(args.units or cfg["units"])
        seed = args.seed if args.seed is not None else cfg["seed"]
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        args.out.mkdir(parents=True, exist_ok=True)
        checks = Checks()
        HANDLERS[args.command](cfg, units, seed, args.out, checks)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"brownian-engine: error: {exc}", file=sys.stderr)
        return 2
    checks.write(args.out)
    if args.plot_script:
        _plot_script(args.command, args.out)
    if checks.failures:
        print(json.dumps({"failed": checks.failures}, indent=2, sort_keys=True), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

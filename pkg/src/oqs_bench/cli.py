"""Command-line front end: oqs-bench {dynamics|steady|scan|kernels|hpz-coeffs}.

Every command emits CSV (stdout or --out) with a `#` comment header echoing
all parameters and the tool version, 17 significant digits, LF endings.
Flags override config-file keys, which override defaults.  Exit codes:
0 ok, 2 configuration error, 3 numerical failure, 4 physical-validity
failure under --strict.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .bath import (
    BathSpec,
    asymptotic_imag_matsubara,
    asymptotic_imag_pv,
    coupling_density,
    nr_f,
    nr_h,
    spectral_density,
    thermal_spectral_density,
)
from .dynamics import (
    DegenerateSteadyStateError,
    EvolutionError,
    SteadyStateError,
    benchmark_initial_state,
    build_generator,
    build_steady_generator,
    evolve,
    steady_errors,
    steady_state,
    thermal_start_state,
    trajectory_distances,
    truncation_tail,
)
from .hpz import hpz_asymptotics, hpz_coefficients
from .oscillator import SystemSpec, trace_distance
from .scan import (
    PRESET_NAMES,
    POSITIVITY_LIMIT,
    TAIL_LIMIT,
    ScanConfig,
    preset_config,
    run_scan,
    write_plot_script,
    write_scan_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VALIDITY = 4


class ConfigError(ValueError):
    pass


class ValidityError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# config files: flat "key = value" lines, # comments, dotted sections


def parse_config_text(text: str) -> dict:
    mapping = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno} is not 'key = value': {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"config line {lineno} has an empty key")
        mapping[key] = value.strip()
    return mapping


def serialize_config(mapping: dict) -> str:
    return "\n".join(f"{k} = {mapping[k]}" for k in sorted(mapping)) + "\n"


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err


class Settings:
    """Layered lookup: CLI flag, then '<cmd>.<name>' or '<name>' config key,
    then the command's default table."""

    def __init__(self, command, args, config, defaults):
        self.command = command
        self.args = vars(args)
        self.config = config
        self.defaults = defaults
        self.resolved = {}

    def get(self, name, cast=str):
        flag = self.args.get(name)
        if flag is not None:
            value = flag
        elif f"{self.command}.{name}" in self.config:
            value = self.config[f"{self.command}.{name}"]
        elif name in self.config:
            value = self.config[name]
        else:
            value = self.defaults[name]
        if value is None:
            self.resolved[name] = "none"
            return None
        try:
            value = cast(value) if not isinstance(value, cast) else value
        except (TypeError, ValueError) as err:
            raise ConfigError(f"bad value for {name}: {value!r} ({err})") from err
        self.resolved[name] = value
        return value


def _float_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(p) for p in str(text).split(",") if p.strip()]


def _delta_grid(text) -> np.ndarray:
    """Comma list of values, or 'lo:hi:n' for a uniform grid."""
    text = str(text)
    if ":" in text:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    return np.array(_float_list(text))


# ---------------------------------------------------------------------------
# CSV plumbing


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _emit(lines, out_path):
    text = "\n".join(lines) + "\n"
    if out_path is None or out_path == "-":
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _header(params: dict) -> list:
    lines = [f"# oqs-bench version = {__version__}"]
    for key in sorted(params):
        lines.append(f"# {key} = {_fmt(params[key])}")
    return lines


# ---------------------------------------------------------------------------
# commands


_DYNAMICS_DEFAULTS = {
    "method": "redfield",
    "gamma": 0.1,
    "beta": 1.0,
    "cutoff": 5.0,
    "dim": 30,
    "tmax": 2.0,
    "samples": 400,
    "reference": "exact",
    "out": None,
}


def cmd_dynamics(args, config) -> int:
    s = Settings("dynamics", args, config, _DYNAMICS_DEFAULTS)
    method = s.get("method")
    gamma = s.get("gamma", float)
    beta = s.get("beta", float)
    cutoff = s.get("cutoff", float)
    dim = s.get("dim", int)
    tmax = s.get("tmax", float)
    samples = s.get("samples", int)
    reference = s.get("reference")
    out = s.get("out")
    if reference not in ("exact", "none"):
        raise ConfigError(f"reference must be exact or none, got {reference!r}")
    spec = SystemSpec(dim)
    bath = BathSpec(gamma, beta, cutoff)
    # tmax is in units of 1/(gamma omega); for gamma = 0 there is no
    # relaxation scale, so fall back to units of 1/omega
    t_final = tmax / (gamma * spec.omega) if gamma > 0 else tmax / spec.omega

    gen = build_generator(method, spec, bath, t_max=t_final)
    traj = evolve(gen, benchmark_initial_state(gen), t_final, samples=samples)
    dist = None
    if reference == "exact" and method != "exact":
        gen_ref = build_generator("exact", spec, bath, t_max=t_final)
        ref = evolve(gen_ref, benchmark_initial_state(gen_ref), t_final, samples=samples)
        dist = trajectory_distances(traj, ref)

    lines = _header(s.resolved)
    cols = ["t", "n_expect"] + (["trace_dist_to_exact"] if dist is not None else []) + ["min_eig", "trace"]
    lines.append(",".join(cols))
    obs = traj.observables
    for k, t in enumerate(traj.times):
        row = [t, obs["n_expect"][k]]
        if dist is not None:
            row.append(dist[k])
        row += [obs["min_eig"][k], obs["trace"][k]]
        lines.append(",".join(_fmt(float(v)) for v in row))
    _emit(lines, out)
    if args.strict and float(np.min(obs["min_eig"])) < POSITIVITY_LIMIT:
        raise ValidityError(
            f"minimum eigenvalue {float(np.min(obs['min_eig'])):.3e} breaches positivity"
        )
    return EXIT_OK


_STEADY_DEFAULTS = {
    "method": "redfield_ti",
    "gamma": "0.1",
    "beta": "1",
    "cutoff": 1.0,
    "dim": 30,
    "reference": "exact",
    "out": None,
}


def cmd_steady(args, config) -> int:
    s = Settings("steady", args, config, _STEADY_DEFAULTS)
    method = s.get("method")
    gammas = _float_list(s.get("gamma"))
    betas = _float_list(s.get("beta"))
    cutoff = s.get("cutoff", float)
    dim = s.get("dim", int)
    reference = s.get("reference")
    out = s.get("out")
    if reference not in ("exact", "gibbs"):
        raise ConfigError(f"reference must be exact or gibbs, got {reference!r}")
    spec = SystemSpec(dim)

    lines = _header(s.resolved)
    lines.append("gamma,beta,trace_dist,trace_dist_over_gamma,od_dist_over_gamma,residual,tail_population")
    worst_eig = 0.0
    worst_tail = 0.0
    for gamma in gammas:
        for beta in betas:
            bath = BathSpec(gamma, beta, cutoff)
            gen = build_steady_generator(method, spec, bath)
            result = steady_state(gen)
            if reference == "gibbs":
                rho_ref = thermal_start_state(gen)
                d = trace_distance(result.state.entries, rho_ref)
                errs = {
                    "trace_dist": d,
                    "trace_dist_over_gamma": d / gamma,
                    "od_dist_over_gamma": float("nan"),
                }
            else:
                exact = steady_state(build_steady_generator("exact", spec, bath))
                errs = steady_errors(result, exact, gamma)
            tail = truncation_tail(result.state.entries)
            worst_eig = min(worst_eig, result.positivity_min_eig)
            worst_tail = max(worst_tail, tail)
            lines.append(
                ",".join(
                    _fmt(float(v))
                    for v in (
                        gamma,
                        beta,
                        errs["trace_dist"],
                        errs["trace_dist_over_gamma"],
                        errs["od_dist_over_gamma"],
                        result.residual,
                        tail,
                    )
                )
            )
    _emit(lines, out)
    if args.strict and (worst_eig < POSITIVITY_LIMIT or worst_tail > TAIL_LIMIT):
        raise ValidityError(
            f"validity breach: min eigenvalue {worst_eig:.3e}, tail {worst_tail:.3e}"
        )
    return EXIT_OK


_SCAN_DEFAULTS = {
    "preset": None,
    "out": None,
    "executor": "processes",
    "workers": None,
}


def cmd_scan(args, config) -> int:
    s = Settings("scan", args, config, _SCAN_DEFAULTS)
    preset = s.get("preset")
    out = s.get("out")
    executor = s.get("executor")
    workers = s.get("workers", int)
    if preset is not None:
        if preset not in PRESET_NAMES:
            raise ConfigError(f"unknown preset {preset!r}; have {PRESET_NAMES}")
        scan_config = preset_config(preset, output=out)
    else:
        if not config:
            raise ConfigError("scan needs --preset or a --config file")
        try:
            scan_config = ScanConfig.from_mapping(config)
        except ValueError as err:
            raise ConfigError(str(err)) from err
        if out is not None:
            scan_config = ScanConfig.from_mapping({**scan_config.to_mapping(), "scan.output": out})
    result = run_scan(scan_config, executor=executor, workers=workers)
    write_scan_csv(result, scan_config.output)
    script = write_plot_script(result, scan_config.output)
    n_fail = int(np.sum((result.status == "truncation_fail") | (result.status == "integration_fail")))
    n_pos = int(np.sum(result.status == "positivity_violation"))
    print(f"wrote {scan_config.output} and {script}; "
          f"{result.values.size} cells, {n_pos} positivity violations, {n_fail} failed",
          file=sys.stderr)
    if args.strict and (n_fail or n_pos):
        raise ValidityError(f"{n_pos} positivity violations, {n_fail} failed cells")
    return EXIT_OK


_KERNELS_DEFAULTS = {
    "gamma": 0.1,
    "beta": 1.0,
    "cutoff": 5.0,
    "delta_grid": "-3:3:25",
    "out": None,
}


def cmd_kernels(args, config) -> int:
    s = Settings("kernels", args, config, _KERNELS_DEFAULTS)
    gamma = s.get("gamma", float)
    beta = s.get("beta", float)
    cutoff = s.get("cutoff", float)
    deltas = _delta_grid(s.get("delta_grid"))
    out = s.get("out")
    bath = BathSpec(gamma, beta, cutoff)

    lines = _header(s.resolved)
    # the three distinct Lamb-shift integrals of the oscillator, at the bare
    # gaps (omega, -omega): f(w,w), f(-w,-w) -> canonical f(w,w), and f(w,-w)
    omega = 1.0
    f_pairs = ((omega, omega), (omega, -omega), (-omega, omega))
    for d1, d2 in f_pairs:
        lines.append(f"# f({_fmt(float(d1))}, {_fmt(float(d2))}) = {_fmt(nr_f(d1, d2, bath))}")
    lines.append("delta,J,G_inf_r,G_inf_i_matsubara,G_inf_i_pv,h")
    for delta in deltas:
        delta = float(delta)
        j = spectral_density(delta, bath)
        g_r = np.pi * thermal_spectral_density(delta, bath)
        g_i_m = asymptotic_imag_matsubara(delta, bath)
        g_i_pv = asymptotic_imag_pv(delta, bath)
        h = nr_h(delta, bath)
        lines.append(",".join(_fmt(float(v)) for v in (delta, j, g_r, g_i_m, g_i_pv, h)))
    _emit(lines, out)
    return EXIT_OK


_HPZ_DEFAULTS = {
    "gamma": 0.1,
    "beta": 1.0,
    "cutoff": 5.0,
    "tmax": 10.0,
    "samples": 801,
    "out": None,
}


def cmd_hpz_coeffs(args, config) -> int:
    s = Settings("hpz-coeffs", args, config, _HPZ_DEFAULTS)
    gamma = s.get("gamma", float)
    beta = s.get("beta", float)
    cutoff = s.get("cutoff", float)
    tmax = s.get("tmax", float)
    samples = s.get("samples", int)
    out = s.get("out")
    if tmax <= 0:
        raise ConfigError(f"tmax must be > 0, got {tmax}")
    spec = SystemSpec(4)
    bath = BathSpec(gamma, beta, cutoff)
    grid = np.linspace(0.0, tmax, samples)
    coeffs = hpz_coefficients(bath, spec, grid)
    lines = _header(s.resolved)
    lines.append("t,gamma_x,gamma_p,D_x,D_p")
    for k in range(grid.size):
        lines.append(
            ",".join(
                _fmt(float(v))
                for v in (
                    grid[k],
                    coeffs.gamma_x[k],
                    coeffs.gamma_p[k],
                    coeffs.d_x[k],
                    coeffs.d_p[k],
                )
            )
        )
    gx, gp, dx, dp = hpz_asymptotics(bath, spec)
    lines.append(
        "# asymptotic: gamma_x = %s, gamma_p = %s, D_x = %s, D_p = %s"
        % (_fmt(gx), _fmt(gp), _fmt(dx), _fmt(dp))
    )
    _emit(lines, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oqs-bench",
        description="Benchmark approximate master equations for the damped "
        "oscillator against its exact solution.",
    )
    parser.add_argument("--version", action="version", version=f"oqs-bench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--out", help="output CSV path (default stdout)")
        p.add_argument("--strict", action="store_true",
                       help="exit 4 on positivity/truncation breaches")

    p = sub.add_parser("dynamics", help="transient evolution time series")
    common(p)
    p.add_argument("--method", choices=("exact", "redfield", "redfield_ti", "rwa", "nr"))
    p.add_argument("--gamma", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--cutoff", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--tmax", type=float,
                   help="evolution window in units of 1/(gamma omega); 1/omega when gamma = 0")
    p.add_argument("--samples", type=int)
    p.add_argument("--reference", choices=("exact", "none"))

    p = sub.add_parser("steady", help="stationary-state error table")
    common(p)
    p.add_argument("--method", choices=("exact", "redfield", "redfield_ti", "rwa", "nr"))
    p.add_argument("--gamma", help="comma-separated list")
    p.add_argument("--beta", help="comma-separated list")
    p.add_argument("--cutoff", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--reference", choices=("exact", "gibbs"))

    p = sub.add_parser("scan", help="(gamma, beta) grid scan")
    common(p)
    p.add_argument("--preset", help=f"one of {', '.join(PRESET_NAMES)}")
    p.add_argument("--executor", choices=("serial", "threads", "processes"))
    p.add_argument("--workers", type=int)

    p = sub.add_parser("kernels", help="bath kernel table on a delta grid")
    common(p)
    p.add_argument("--gamma", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--cutoff", type=float)
    p.add_argument("--delta-grid", dest="delta_grid",
                   help="comma list of deltas, or lo:hi:n")

    p = sub.add_parser("hpz-coeffs", help="exact generator coefficient table")
    common(p)
    p.add_argument("--gamma", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--cutoff", type=float)
    p.add_argument("--tmax", type=float)
    p.add_argument("--samples", type=int)
    return parser


_COMMANDS = {
    "dynamics": cmd_dynamics,
    "steady": cmd_steady,
    "scan": cmd_scan,
    "kernels": cmd_kernels,
    "hpz-coeffs": cmd_hpz_coeffs,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        return _COMMANDS[args.command](args, config)
    except ConfigError as err:
        print(f"oqs-bench: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidityError as err:
        print(f"oqs-bench: validity failure: {err}", file=sys.stderr)
        return EXIT_VALIDITY
    except (ValueError, TypeError) as err:
        # parameter combinations rejected by the domain types
        print(f"oqs-bench: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (EvolutionError, SteadyStateError, ArithmeticError) as err:
        kind = "degenerate" if isinstance(err, DegenerateSteadyStateError) else "numerical"
        print(f"oqs-bench: {kind} failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

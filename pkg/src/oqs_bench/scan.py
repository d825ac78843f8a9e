"""Parameter scans over coupling strength and inverse temperature.

A scan evaluates one error metric of one method against a reference on a
(gamma, beta) grid, cell by cell, on a worker pool.  Cells are independent;
failures are recorded per cell and never abort the scan.  Output is a
long-format CSV (gamma, beta, metric, status) with a deterministic row
order plus a generated matplotlib script for rendering the heatmap.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .bath import BathSpec
from .dynamics import (
    average_trace_distance,
    benchmark_initial_state,
    build_generator,
    build_steady_generator,
    evolve,
    steady_errors,
    steady_state,
    truncation_tail,
)
from .oscillator import SystemSpec

__all__ = [
    "AxisSpec",
    "ScanConfig",
    "ScanResult",
    "METRIC_NAMES",
    "STATUS_NAMES",
    "TAIL_LIMIT",
    "POSITIVITY_LIMIT",
    "run_scan",
    "evaluate_cell",
    "write_scan_csv",
    "write_plot_script",
    "preset_config",
    "PRESET_NAMES",
]

METRIC_NAMES = (
    "avg_trace_dist",
    "steady_trace_dist",
    "steady_trace_dist_over_gamma",
    "od_dist_over_gamma",
)
STATUS_NAMES = ("ok", "positivity_violation", "truncation_fail", "integration_fail")
REFERENCE_NAMES = ("exact", "gibbs")

# population allowed in the top decile of the basis before a state is
# declared untrustworthy for its dimension
TAIL_LIMIT = 1e-3
# eigenvalues below this mark a positivity violation rather than roundoff
POSITIVITY_LIMIT = -1e-8


@dataclass(frozen=True)
class AxisSpec:
    """One scan axis: n points from lo to hi, linearly or log spaced."""

    lo: float
    hi: float
    n: int
    scale: str = "log"

    def __post_init__(self):
        if self.scale not in ("linear", "log"):
            raise ValueError(f"scale must be linear or log, got {self.scale!r}")
        if self.n < 1:
            raise ValueError(f"axis needs n >= 1, got {self.n}")
        if not self.lo < self.hi:
            raise ValueError(f"axis needs lo < hi, got [{self.lo}, {self.hi}]")
        if self.scale == "log" and self.lo <= 0:
            raise ValueError("log axis needs lo > 0")

    def values(self) -> np.ndarray:
        if self.n == 1:
            return np.array([self.lo])
        if self.scale == "log":
            return np.geomspace(self.lo, self.hi, self.n)
        return np.linspace(self.lo, self.hi, self.n)

    def serialize(self) -> str:
        return f"{self.lo:.17g}, {self.hi:.17g}, {self.n}, {self.scale}"

    @classmethod
    def parse(cls, text: str) -> "AxisSpec":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError(
                f"axis spec needs 'lo, hi, n, scale', got {text!r}"
            )
        return cls(float(parts[0]), float(parts[1]), int(parts[2]), parts[3])


_SCAN_METHODS = ("exact", "redfield", "redfield_ti", "rwa", "nr")


@dataclass(frozen=True)
class ScanConfig:
    """Full description of one scan; round-trips through flat key = value text."""

    method: str
    metric: str
    gamma: AxisSpec
    beta: AxisSpec
    reference: str = "exact"
    cutoff: float = 1.0
    dim: int = 30
    tau_r_mult: float = 2.0
    output: str = "scan.csv"

    def __post_init__(self):
        if self.method not in _SCAN_METHODS:
            raise ValueError(f"method must be one of {_SCAN_METHODS}, got {self.method!r}")
        if self.metric not in METRIC_NAMES:
            raise ValueError(f"metric must be one of {METRIC_NAMES}, got {self.metric!r}")
        if self.reference not in REFERENCE_NAMES:
            raise ValueError(f"reference must be one of {REFERENCE_NAMES}, got {self.reference!r}")
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if self.cutoff <= 0:
            raise ValueError(f"cutoff must be > 0, got {self.cutoff}")
        if self.tau_r_mult <= 0:
            raise ValueError(f"tau_r_mult must be > 0, got {self.tau_r_mult}")

    def to_mapping(self) -> dict:
        return {
            "scan.method": self.method,
            "scan.metric": self.metric,
            "scan.reference": self.reference,
            "grid.gamma": self.gamma.serialize(),
            "grid.beta": self.beta.serialize(),
            "fixed.cutoff": f"{self.cutoff:.17g}",
            "fixed.dim": str(self.dim),
            "fixed.tau_R_rule": f"{self.tau_r_mult:.17g}/gamma_omega",
            "scan.output": self.output,
        }

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ScanConfig":
        def need(key):
            if key not in mapping:
                raise ValueError(f"scan config is missing {key!r}")
            return mapping[key]

        rule = str(mapping.get("fixed.tau_R_rule", "2/gamma_omega")).strip()
        if not rule.endswith("/gamma_omega"):
            raise ValueError(
                f"fixed.tau_R_rule must look like '<mult>/gamma_omega', got {rule!r}"
            )
        mult = float(rule[: -len("/gamma_omega")])
        return cls(
            method=str(need("scan.method")).strip(),
            metric=str(need("scan.metric")).strip(),
            reference=str(mapping.get("scan.reference", "exact")).strip(),
            gamma=AxisSpec.parse(str(need("grid.gamma"))),
            beta=AxisSpec.parse(str(need("grid.beta"))),
            cutoff=float(mapping.get("fixed.cutoff", 1.0)),
            dim=int(mapping.get("fixed.dim", 30)),
            tau_r_mult=mult,
            output=str(mapping.get("scan.output", "scan.csv")).strip(),
        )


@dataclass(frozen=True, eq=False)
class ScanResult:
    """Metric matrix (n_gamma, n_beta) with one status per cell.

    values holds NaN exactly where the status says no metric exists
    (truncation_fail / integration_fail).
    """

    gamma: np.ndarray
    beta: np.ndarray
    values: np.ndarray
    status: np.ndarray
    config: ScanConfig

    def cell(self, i: int, j: int):
        return self.values[i, j], str(self.status[i, j])


# ---------------------------------------------------------------------------
# cell evaluation (top-level and dict-valued so worker pools can pickle it)


def _steady_cell(spec, bath, task):
    gen = build_steady_generator(task["method"], spec, bath)
    result = steady_state(gen)
    if task["reference"] == "gibbs":
        from .dynamics import thermal_start_state
        from .oscillator import trace_distance

        rho_ref = thermal_start_state(gen)
        d = trace_distance(result.state.entries, rho_ref)
        errs = {
            "trace_dist": d,
            "trace_dist_over_gamma": d / bath.gamma,
            "od_dist_over_gamma": float("nan"),
        }
        tail_ref = truncation_tail(rho_ref)
    else:
        exact = steady_state(build_steady_generator("exact", spec, bath))
        errs = steady_errors(result, exact, bath.gamma)
        tail_ref = truncation_tail(exact.state.entries)
    metric = {
        "steady_trace_dist": errs["trace_dist"],
        "steady_trace_dist_over_gamma": errs["trace_dist_over_gamma"],
        "od_dist_over_gamma": errs["od_dist_over_gamma"],
    }[task["metric"]]
    # magnitude: a non-positive state can carry a negative top-decile sum
    tail = max(abs(truncation_tail(result.state.entries)), abs(tail_ref))
    min_eig = result.positivity_min_eig
    return metric, tail, min_eig


def _transient_cell(spec, bath, task):
    t_final = task["tau_r_mult"] / (bath.gamma * spec.omega)
    gen = build_generator(task["method"], spec, bath, t_max=t_final)
    traj = evolve(gen, benchmark_initial_state(gen), t_final)
    gen_ref = build_generator("exact", spec, bath, t_max=t_final)
    ref = evolve(gen_ref, benchmark_initial_state(gen_ref), t_final)
    metric = average_trace_distance(traj, ref)
    tail = max(
        abs(truncation_tail(traj.states[-1])),
        abs(truncation_tail(ref.states[-1])),
    )
    min_eig = float(np.min(traj.observables["min_eig"]))
    return metric, tail, min_eig


def evaluate_cell(task: dict) -> dict:
    """Evaluate one (gamma, beta) cell; never raises.

    The returned dict carries gamma, beta, value (float or None), status,
    and error (message, for the failed statuses).
    """
    out = {"gamma": task["gamma"], "beta": task["beta"], "value": None, "error": ""}
    try:
        spec = SystemSpec(task["dim"])
        bath = BathSpec(task["gamma"], task["beta"], task["cutoff"])
        if task["metric"] == "avg_trace_dist":
            metric, tail, min_eig = _transient_cell(spec, bath, task)
        else:
            metric, tail, min_eig = _steady_cell(spec, bath, task)
    except Exception as err:  # per-cell failures must not abort the scan
        out["status"] = "integration_fail"
        out["error"] = f"{type(err).__name__}: {err}"
        return out
    if tail > TAIL_LIMIT:
        out["status"] = "truncation_fail"
        out["error"] = f"tail population {tail:.3e}"
        return out
    out["value"] = float(metric)
    out["status"] = "ok" if min_eig >= POSITIVITY_LIMIT else "positivity_violation"
    return out


def _worker_count(workers=None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("OQS_BENCH_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_scan(config: ScanConfig, executor: str = "processes", workers=None) -> ScanResult:
    """Evaluate every grid cell and assemble the result matrix.

    executor is one of serial, threads, processes.  Worker count comes from
    `workers`, else the OQS_BENCH_THREADS environment variable, else the CPU
    count.  Cell order in the result (gamma-major) is independent of
    completion order.
    """
    gammas = config.gamma.values()
    betas = config.beta.values()
    tasks = [
        {
            "method": config.method,
            "metric": config.metric,
            "reference": config.reference,
            "gamma": float(g),
            "beta": float(b),
            "cutoff": config.cutoff,
            "dim": config.dim,
            "tau_r_mult": config.tau_r_mult,
        }
        for g in gammas
        for b in betas
    ]
    if executor == "serial":
        cells = [evaluate_cell(t) for t in tasks]
    elif executor in ("threads", "processes"):
        pool_cls = ThreadPoolExecutor if executor == "threads" else ProcessPoolExecutor
        with pool_cls(max_workers=_worker_count(workers)) as pool:
            cells = list(pool.map(evaluate_cell, tasks))
    else:
        raise ValueError(f"executor must be serial, threads, or processes, got {executor!r}")

    values = np.full((gammas.size, betas.size), np.nan)
    status = np.empty((gammas.size, betas.size), dtype=object)
    for cell, task in zip(cells, tasks):
        i = int(np.argmin(np.abs(gammas - task["gamma"])))
        j = int(np.argmin(np.abs(betas - task["beta"])))
        status[i, j] = cell["status"]
        if cell["value"] is not None:
            values[i, j] = cell["value"]
    return ScanResult(gamma=gammas, beta=betas, values=values, status=status, config=config)


# ---------------------------------------------------------------------------
# output


def _comment_header(mapping: dict) -> list:
    lines = [f"# oqs-bench version = {__version__}"]
    for key in sorted(mapping):
        lines.append(f"# {key} = {mapping[key]}")
    return lines


def write_scan_csv(result: ScanResult, path: str) -> None:
    """Long-format CSV: one row per cell, gamma-major, `#` comment header.

    Byte-deterministic for a fixed config and version: 17 significant
    digits, LF endings, fixed row order.  Cells without a metric leave the
    metric field empty.
    """
    lines = _comment_header(result.config.to_mapping())
    lines.append("gamma,beta,metric,status")
    for i, g in enumerate(result.gamma):
        for j, b in enumerate(result.beta):
            v = result.values[i, j]
            vtext = "" if np.isnan(v) else f"{v:.17g}"
            lines.append(f"{g:.17g},{b:.17g},{vtext},{result.status[i, j]}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


_PLOT_TEMPLATE = '''#!/usr/bin/env python3
"""Render the scan heatmap from {csv_name} (generated alongside it)."""
import csv

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

CSV = {csv_name!r}
GAMMA_SCALE = {gamma_scale!r}
BETA_SCALE = {beta_scale!r}
LABEL = {label!r}

rows = []
with open(CSV, encoding="utf-8") as fh:
    for row in csv.reader(line for line in fh if not line.startswith("#")):
        if row and row[0] != "gamma":
            rows.append(row)
gammas = sorted({{float(r[0]) for r in rows}})
betas = sorted({{float(r[1]) for r in rows}})
value = np.full((len(gammas), len(betas)), np.nan)
bad = np.zeros_like(value, dtype=bool)
for g, b, v, status in rows:
    i, j = gammas.index(float(g)), betas.index(float(b))
    value[i, j] = float(v) if v else np.nan
    bad[i, j] = status not in ("ok", "positivity_violation")

fig, ax = plt.subplots(figsize=(5.2, 4.2))
cmap = matplotlib.colormaps["viridis"].copy()
cmap.set_over("lightgray")
cmap.set_bad("white")
shown = np.ma.masked_where(bad | np.isnan(value), value)
vmax = 1.0 if LABEL == "avg_trace_dist" else None
mesh = ax.pcolormesh(betas, gammas, shown, cmap=cmap, vmax=vmax, shading="nearest")
ax.set_xscale("log" if BETA_SCALE == "log" else "linear")
ax.set_yscale("log" if GAMMA_SCALE == "log" else "linear")
ax.set_xlabel("beta")
ax.set_ylabel("gamma")
ax.set_title(LABEL)
fig.colorbar(mesh, ax=ax, extend="max" if vmax else "neither")
out = CSV.rsplit(".", 1)[0] + ".png"
fig.savefig(out, dpi=160, bbox_inches="tight")
print(out)
'''


def write_plot_script(result: ScanResult, csv_path: str) -> str:
    """Emit <csv>.plot.py, a standalone matplotlib renderer for the CSV.

    Cells whose metric exceeds 1 are grayed for the transient metric (the
    violation regime is shown, not hidden); cells without a metric stay
    blank.
    """
    script_path = csv_path + ".plot.py"
    text = _PLOT_TEMPLATE.format(
        csv_name=os.path.basename(csv_path),
        gamma_scale=result.config.gamma.scale,
        beta_scale=result.config.beta.scale,
        label=result.config.metric,
    )
    with open(script_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return script_path


# ---------------------------------------------------------------------------
# presets


_HEATMAP_GAMMA = AxisSpec(0.05, 1.0, 21, "log")
_HEATMAP_BETA = AxisSpec(0.2, 5.0, 21, "log")

_PRESETS = {
    # transient benchmark heatmaps at E_c = 5
    "fig3": dict(method="redfield", metric="avg_trace_dist", cutoff=5.0),
    "fig4": dict(method="nr", metric="avg_trace_dist", cutoff=5.0),
    # stationary benchmark heatmaps at E_c = 1, error scaled by gamma
    "fig5": dict(method="redfield_ti", metric="steady_trace_dist_over_gamma", cutoff=1.0),
    "fig6": dict(method="nr", metric="steady_trace_dist_over_gamma", cutoff=1.0),
}
PRESET_NAMES = tuple(sorted(_PRESETS))


def preset_config(name: str, output: str | None = None) -> ScanConfig:
    """Named scan presets for the published heatmaps.

    Axis ranges are read off the figure axes (gamma in [0.05, 1], beta in
    [0.2, 5], both log, 21 points each), since they are not tabulated
    anywhere.
    """
    if name not in _PRESETS:
        raise ValueError(f"unknown preset {name!r}; have {PRESET_NAMES}")
    kw = dict(_PRESETS[name])
    cfg = ScanConfig(
        gamma=_HEATMAP_GAMMA,
        beta=_HEATMAP_BETA,
        output=output or f"{name}.csv",
        **kw,
    )
    return cfg

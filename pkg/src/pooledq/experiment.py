"""MSE/bias/variance sweeps over the processor count R, with CSV and SVG output.

Config files are JSON::

    {
      "micro_reps": 100,
      "base_seed": 20240101,
      "output_dir": "results",
      "workers": 1,
      "scenarios": [
        {"name": "ar1_phi0.9_L1000",
         "model": {"type": "ar1", "phi": 0.9, "mu": 0.0, "sigma": 1.0, "warmup": 0},
         "L": 1000, "alphas": [0.5, 0.95], "R": [1, 2, 4, 8, 16, 32, 64]},
        {"model": {"type": "mm1", "utilization": 0.9, "arrival_rate": 1.0, "warmup": 5000},
         "L": 1000}
      ]
    }

Omitted scenario fields fall back to ``alphas = [0.5, 0.95]``,
``R = DEFAULT_R_GRID`` and a name built from the model and L.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

from .engine import MicroPlan, RunPlan, run_micro_experiment
from .errors import ConfigError, DomainError
from .processes import MM1_DEFAULT_WARMUP, ProcessModel

DEFAULT_R_GRID = (1, 2, 4, 8, 16, 32, 64)
DEFAULT_ALPHAS = (0.5, 0.95)
DEFAULT_SEED = 20240101

EXPERIMENT_COLUMNS = ("scenario", "model", "param", "L", "R", "alpha", "method",
                      "micro_reps", "truth", "mse", "bias", "variance")
BIAS_VARIANCE_COLUMNS = ("scenario", "model", "param", "design", "L", "R", "N", "alpha", "micro_reps", "truth",
                         "bias_pooled", "variance_pooled", "bias_average", "variance_average",
                         "bound_pooled", "bound_average")
METHODS = ("pooled", "average")


def fmt(x) -> str:
    """17-significant-digit decimal for reals; plain text otherwise."""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


@dataclass(frozen=True)
class Scenario:
    name: str
    model: ProcessModel
    l: int
    alphas: tuple = DEFAULT_ALPHAS
    r_grid: tuple = DEFAULT_R_GRID


@dataclass
class ExperimentConfig:
    scenarios: List[Scenario]
    micro_reps: int = 100
    base_seed: int = DEFAULT_SEED
    output_dir: Path = Path("results")
    workers: int = 1


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    model: str
    param: float
    l: int
    r: int
    alpha: float
    method: str
    micro_reps: int
    truth: float
    mse: float
    bias: float
    variance: float

    def cells(self) -> list:
        return [fmt(v) for v in (self.scenario, self.model, self.param, self.l, self.r, self.alpha,
                                 self.method, self.micro_reps, self.truth, self.mse, self.bias, self.variance)]


@dataclass
class ExperimentResult:
    rows: List[ResultRow] = field(default_factory=list)

    def for_scenario(self, name: str) -> List[ResultRow]:
        return [r for r in self.rows if r.scenario == name]


def summarize(estimates: np.ndarray, truth: float):
    """``(mse, bias, variance)`` of a 1-D sample of estimates.

    ``variance`` is the unbiased sample variance (0 for a single sample), so
    ``mse == bias**2 + variance * (M - 1) / M``.
    """
    e = np.asarray(estimates, dtype=np.float64) - truth
    mse = float(np.mean(e**2))
    bias = float(np.mean(e))
    variance = float(np.var(e, ddof=1)) if e.size > 1 else 0.0
    return mse, bias, variance


def model_name(model: ProcessModel) -> str:
    return f"{model.kind}_{'phi' if model.kind == 'ar1' else 'rho'}{model.param:g}"


def default_scenarios(r_grid: Sequence[int] = DEFAULT_R_GRID) -> List[Scenario]:
    models = [ProcessModel.ar1(phi) for phi in (0.3, 0.5, 0.9)]
    models += [ProcessModel.mm1(rho) for rho in (0.7, 0.9)]
    return [Scenario(f"{model_name(m)}_L{l}", m, l, DEFAULT_ALPHAS, tuple(r_grid))
            for l in (1000, 10000) for m in models]


def _model_from_dict(d: dict, where: str) -> ProcessModel:
    if not isinstance(d, dict):
        raise ConfigError("must be an object", where)
    kind = d.get("type")
    try:
        if kind == "ar1":
            if "phi" not in d:
                raise ConfigError("missing field", f"{where}.phi")
            return ProcessModel.ar1(float(d["phi"]), float(d.get("mu", 0.0)), float(d.get("sigma", 1.0)),
                                    int(d.get("warmup", 0)))
        if kind == "mm1":
            if "utilization" not in d:
                raise ConfigError("missing field", f"{where}.utilization")
            return ProcessModel.mm1(float(d["utilization"]), float(d.get("arrival_rate", 1.0)),
                                    int(d.get("warmup", MM1_DEFAULT_WARMUP)))
    except (DomainError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), where) from exc
    raise ConfigError(f"unknown model type {kind!r} (expected 'ar1' or 'mm1')", f"{where}.type")


def _positive_int(v, where) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ConfigError(f"must be a positive integer, got {v!r}", where)
    return v


def config_from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("top level must be a JSON object")
    micro = _positive_int(d.get("micro_reps", 100), "micro_reps")
    seed = d.get("base_seed", DEFAULT_SEED)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError(f"must be an unsigned 64-bit integer, got {seed!r}", "base_seed")
    workers = _positive_int(d.get("workers", 1), "workers")
    raw = d.get("scenarios")
    if raw is None:
        scenarios = default_scenarios()
    else:
        if not isinstance(raw, list) or not raw:
            raise ConfigError("must be a nonempty list", "scenarios")
        scenarios = []
        for i, s in enumerate(raw):
            where = f"scenarios[{i}]"
            if not isinstance(s, dict):
                raise ConfigError("must be an object", where)
            model = _model_from_dict(s.get("model"), f"{where}.model")
            l = _positive_int(s.get("L"), f"{where}.L")
            alphas = s.get("alphas", list(DEFAULT_ALPHAS))
            if not isinstance(alphas, list) or not alphas or not all(
                    isinstance(a, (int, float)) and 0 < a < 1 for a in alphas):
                raise ConfigError("must be a nonempty list of levels in (0, 1)", f"{where}.alphas")
            grid = s.get("R", list(DEFAULT_R_GRID))
            if not isinstance(grid, list) or not grid:
                raise ConfigError("must be a nonempty list", f"{where}.R")
            grid = [_positive_int(r, f"{where}.R") for r in grid]
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError("must be strictly ascending", f"{where}.R")
            name = s.get("name") or f"{model_name(model)}_L{l}"
            scenarios.append(Scenario(str(name), model, l, tuple(float(a) for a in alphas), tuple(grid)))
        names = [s.name for s in scenarios]
        if len(set(names)) != len(names):
            raise ConfigError("scenario names must be unique", "scenarios")
    return ExperimentConfig(scenarios, micro, seed, Path(d.get("output_dir", "results")), workers)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(d)


def run_scenario(scenario: Scenario, micro_reps: int, base_seed: int, workers: int = 1) -> List[ResultRow]:
    rows = []
    for r in scenario.r_grid:
        plan = MicroPlan(RunPlan(scenario.model, r, scenario.l, base_seed, workers), micro_reps, scenario.alphas)
        table = run_micro_experiment(plan)
        for a_idx, alpha in enumerate(scenario.alphas):
            truth = float(table.truths[a_idx])
            for m_idx, method in enumerate(METHODS):
                mse, bias, var = summarize(table.estimates[:, a_idx, m_idx], truth)
                rows.append(ResultRow(scenario.name, scenario.model.kind, scenario.model.param, scenario.l, r,
                                      alpha, method, micro_reps, truth, mse, bias, var))
    return rows


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence[str]]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_experiment_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run every scenario; write ``<name>.csv`` and ``<name>_alpha<a>.svg`` per level."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = ExperimentResult()
    for sc in config.scenarios:
        rows = run_scenario(sc, config.micro_reps, config.base_seed, config.workers)
        result.rows.extend(rows)
        write_rows(out / f"{sc.name}.csv", EXPERIMENT_COLUMNS, (r.cells() for r in rows))
        for alpha in sc.alphas:
            sel = [r for r in rows if r.alpha == alpha]
            series = {m: [(r.r, r.mse) for r in sel if r.method == m] for m in METHODS}
            title = f"{sc.name}  alpha={alpha:g}  M={config.micro_reps}"
            (out / f"{sc.name}_alpha{alpha:g}.svg").write_text(svg_chart(title, series))
    return result


def bias_variance_rows(scenario: Scenario, micro_reps: int, base_seed: int, workers: int = 1) -> List[list]:
    """Bias/variance of both estimators at fixed L and at fixed budget ``N = L * max(R)``."""
    budget = scenario.l * max(scenario.r_grid)
    designs = [("fixed_L", r, scenario.l) for r in scenario.r_grid]
    designs += [("fixed_budget", r, budget // r) for r in scenario.r_grid if budget % r == 0]
    rows = []
    for design, r, l in designs:
        plan = MicroPlan(RunPlan(scenario.model, r, l, base_seed, workers), micro_reps, scenario.alphas)
        table = run_micro_experiment(plan)
        n = r * l
        for a_idx, alpha in enumerate(scenario.alphas):
            truth = float(table.truths[a_idx])
            _, bp, vp = summarize(table.estimates[:, a_idx, 0], truth)
            _, ba, va = summarize(table.estimates[:, a_idx, 1], truth)
            rows.append([scenario.name, scenario.model.kind, scenario.model.param, design, l, r, n, alpha,
                         micro_reps, truth, bp, vp, ba, va,
                         n**-0.75 * math.log(l), l**-0.75 * math.log(l)])
    return rows


def cmd_bias_variance_sweep(config: ExperimentConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for sc in config.scenarios:
        rows.extend(bias_variance_rows(sc, config.micro_reps, config.base_seed, config.workers))
    path = out / "bias_variance.csv"
    write_rows(path, BIAS_VARIANCE_COLUMNS, ([fmt(v) for v in row] for row in rows))
    return path


_COLORS = {"pooled": "#1f77b4", "average": "#d62728"}


def svg_chart(title: str, series: dict, width: int = 560, height: int = 380) -> str:
    """Static log-log line chart; each point carries its exact value in ``data-value``."""
    left, right, top, bottom = 70, 20, 40, 50
    pts = [(x, y) for s in series.values() for x, y in s]
    xs = [math.log2(x) for x, _ in pts]
    ys = [math.log10(y) for _, y in pts if y > 0] or [0.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = math.floor(min(ys)), math.ceil(max(ys))
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def px(x):
        return left + (math.log2(x) - x0) / (x1 - x0) * (width - left - right)

    def py(y):
        ly = math.log10(y) if y > 0 else y0
        return top + (y1 - ly) / (y1 - y0) * (height - top - bottom)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{_esc(title)}</text>',
             f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" y2="{height - bottom}" stroke="black"/>',
             f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="black"/>',
             f'<text x="{width / 2:.1f}" y="{height - 10}" text-anchor="middle">number of processors R</text>',
             f'<text x="15" y="{height / 2:.1f}" text-anchor="middle" '
             f'transform="rotate(-90 15 {height / 2:.1f})">MSE (log scale)</text>']
    for x in sorted({x for x, _ in pts}):
        parts.append(f'<text x="{px(x):.2f}" y="{height - bottom + 16}" text-anchor="middle">{x}</text>')
    for e in range(y0, y1 + 1):
        parts.append(f'<text x="{left - 6}" y="{py(10.0**e) + 4:.2f}" text-anchor="end">1e{e}</text>')
    for i, (name, s) in enumerate(series.items()):
        color = _COLORS.get(name, "black")
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in s)
        parts.append(f'<g class="series" data-series="{name}">')
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in s:
            parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{color}" '
                         f'data-r="{x}" data-value="{fmt(float(y))}"/>')
        parts.append("</g>")
        ly = top + 10 + 16 * i
        parts.append(f'<line x1="{width - right - 110}" y1="{ly}" x2="{width - right - 90}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{width - right - 85}" y="{ly + 4}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_replication_csv(data, path):
    """Raw paths as ``replication,index,value`` rows (both indices 0-based)."""
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write("replication,index,value\n")
        for j, row in enumerate(data.values):
            fh.writelines(f"{j},{i},{fmt(float(v))}\n" for i, v in enumerate(row))


def read_replication_csv(path):
    from .estimators import ReplicationSet

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["replication", "index", "value"]:
            raise DomainError(f"unexpected raw-path header {header}")
        rows = [(int(j), int(i), float(v)) for j, i, v in reader]
    r = max(j for j, _, _ in rows) + 1
    l = max(i for _, i, _ in rows) + 1
    if len(rows) != r * l:
        raise DomainError(f"ragged raw-path file: {len(rows)} rows for R={r}, L={l}")
    values = np.empty((r, l))
    for j, i, v in rows:
        values[j, i] = v
    return ReplicationSet(values)

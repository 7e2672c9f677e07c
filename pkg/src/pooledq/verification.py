"""Acceptance checks behind ``pooledq verify``.

Every check is a deterministic function of the base seed; the report holds
no timings so two runs with one seed are byte-identical.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .asymptotics import (
    AsymptoticProfile,
    Source,
    analytic_v2,
    bahadur_residual,
    estimate_v2_batch_means,
    estimate_v2_truncated,
    normality_check,
    standardized_errors,
)
from .engine import MicroPlan, RunPlan, derive, run_micro_experiment, run_replications
from .estimators import (
    Method,
    QuantileEstimate,
    ReplicationSet,
    average_quantile,
    pooled_quantile,
    single_path_quantile,
)
from .experiment import summarize
from .processes import ProcessModel, generate, true_density_at_quantile, true_quantile

ORACLE_MICRO = 2**32 - 1
LONG_PATH = 10**7
_GOLDEN = 0x9E3779B97F4A7C15


@dataclass
class CheckResult:
    cid: str
    name: str
    passed: bool
    detail: str
    metrics: Dict[str, float] = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"{self.cid:<4} {'PASS' if self.passed else 'FAIL':<5} {self.name:<28} {self.detail}"


def check_seed(seed: int, cid: int) -> int:
    return (seed + cid * _GOLDEN) % 2**64


def long_path(model: ProcessModel, seed: int, length: int = LONG_PATH):
    return generate(model, length, derive(seed, ORACLE_MICRO, 0))


def _ceil_rank(n: int, alpha: float) -> int:
    # decimal reading of alpha, independent of the library's rank rule
    return max(1, math.ceil(Fraction(str(alpha)) * n))


def sort_oracle_pooled(values: np.ndarray, alpha: float) -> float:
    flat = sorted(values.ravel().tolist())
    return flat[_ceil_rank(len(flat), alpha) - 1]


def sort_oracle_average(values: np.ndarray, alpha: float) -> float:
    picks = [sorted(row.tolist())[_ceil_rank(len(row), alpha) - 1] for row in values]
    return float(np.mean(np.array(picks)))


def _random_set(rng: np.random.Generator, max_n: int = 10**4, r: Optional[int] = None) -> np.ndarray:
    r = int(rng.integers(1, 21)) if r is None else r
    l = int(rng.integers(1, max_n // r + 1))
    if rng.random() < 0.5:
        return rng.standard_normal((r, l))
    return rng.integers(-5, 6, size=(r, l)).astype(float)  # heavy ties


def _random_alpha(rng: np.random.Generator) -> float:
    return int(rng.integers(1, 1000)) / 1000


ORACLE_MODELS = [ProcessModel.ar1(phi) for phi in (0.0, 0.3, 0.5, 0.9)] + [ProcessModel.mm1(rho) for rho in (0.7, 0.9)]


def check_oracle_consistency(seed: int, truth_shift: float = 0.0, length: int = LONG_PATH, **_) -> CheckResult:
    worst, where = 0.0, ""
    metrics = {}
    for i, model in enumerate(ORACLE_MODELS):
        path = generate(model, length, derive(check_seed(seed, 1), 0, i))
        data = ReplicationSet([path])
        for alpha in (0.5, 0.95):
            truth = true_quantile(model, alpha) + truth_shift
            est = pooled_quantile(data, alpha).value
            v2 = estimate_v2_batch_means(path, truth)
            se = math.sqrt(v2 / length) / true_density_at_quantile(model, alpha)
            ratio = abs(est - truth) / se if se > 0 else math.inf
            metrics[f"{model.kind}_{model.param:g}_{alpha:g}"] = ratio
            if ratio >= worst:
                worst, where = ratio, f"{model.kind} {model.param:g} alpha={alpha:g}"
    return CheckResult("C01", "oracle_consistency", worst <= 3.0,
                       f"max |err|/se = {worst:.4f} at {where} (gate <= 3)", metrics)


def check_estimator_definitions(seed: int, cases: int = 1000, **_) -> CheckResult:
    rng = derive(check_seed(seed, 2), 0, 0)
    mismatches = 0
    for _ in range(cases):
        values = _random_set(rng)
        alpha = _random_alpha(rng)
        data = ReplicationSet(values)
        if pooled_quantile(data, alpha).value != sort_oracle_pooled(values, alpha):
            mismatches += 1
        if average_quantile(data, alpha).value != sort_oracle_average(values, alpha):
            mismatches += 1
    return CheckResult("C02", "estimator_definitions", mismatches == 0,
                       f"{mismatches} mismatches against sort oracles over {cases} sets", {"mismatches": mismatches})


def check_r1_collapse(seed: int, cases: int = 100, **_) -> CheckResult:
    rng = derive(check_seed(seed, 3), 0, 0)
    bad = 0
    for _ in range(cases):
        values = _random_set(rng, r=1)
        alpha = _random_alpha(rng)
        data = ReplicationSet(values)
        p = pooled_quantile(data, alpha).value
        a = average_quantile(data, alpha).value
        s = single_path_quantile(values[0], alpha).value
        bad += not (p == a == s)
    return CheckResult("C03", "r1_collapse", bad == 0, f"{bad} of {cases} cases differ", {"failures": bad})


def check_clt(seed: int, workers: int = 1, micro_reps: int = 500, **_) -> CheckResult:
    model, alpha, l, r = ProcessModel.ar1(0.5), 0.5, 5000, 4
    s = check_seed(seed, 4)
    truth = true_quantile(model, alpha)
    v2 = estimate_v2_batch_means(long_path(model, s), truth)
    profile = AsymptoticProfile.from_v2(v2, true_density_at_quantile(model, alpha), alpha, Source.BATCH_MEANS)
    table = run_micro_experiment(MicroPlan(RunPlan(model, r, l, s, workers), micro_reps, (alpha,)))
    ests = [QuantileEstimate(float(v), alpha, Method.POOLED, r, l) for v in table.pooled[:, 0]]
    rep = normality_check(standardized_errors(ests, truth, profile))
    ok = abs(rep.mean) <= 0.15 and 0.8 <= rep.variance <= 1.2 and rep.ks_distance <= 0.08
    return CheckResult("C04", "clt_reproduction", ok,
                       f"mean={rep.mean:.4f} var={rep.variance:.4f} ks={rep.ks_distance:.4f} "
                       f"(gates |mean|<=0.15, var in [0.8,1.2], ks<=0.08; v2_bm={v2:.4f})",
                       {"mean": rep.mean, "variance": rep.variance, "ks": rep.ks_distance, "v2": v2})


def bahadur_curve(seed: int, lengths: Sequence[int] = (10**3, 10**4, 10**5), micro_reps: int = 200,
                  r: int = 4, workers: int = 1):
    model, alpha = ProcessModel.ar1(0.5), 0.5
    truth = true_quantile(model, alpha)
    dens = true_density_at_quantile(model, alpha)
    means, scales = [], []
    for l in lengths:
        plan = RunPlan(model, r, l, seed, workers)
        res = [abs(bahadur_residual(run_replications(plan, micro=m), alpha, truth, dens).residual)
               for m in range(micro_reps)]
        means.append(float(np.mean(res)))
        scales.append((r * l) ** -0.75 * math.log(l))
    return np.array(means), np.array(scales)


def check_bahadur_decay(seed: int, workers: int = 1, micro_reps: int = 200, **_) -> CheckResult:
    lengths, r = (10**3, 10**4, 10**5), 4
    means, scales = bahadur_curve(check_seed(seed, 5), lengths, micro_reps, r, workers)
    slope = float(np.polyfit(np.log([r * l for l in lengths]), np.log(means), 1)[0])
    decreasing = bool(np.all(np.diff(means) < 0))
    ok = decreasing and slope <= -0.5
    return CheckResult("C05", "bahadur_decay", ok,
                       "mean|res| = " + ", ".join(f"{m:.4e}" for m in means) +
                       f"; slope = {slope:.4f} (gate <= -0.5); ratio to bound = " +
                       ", ".join(f"{m / s:.4f}" for m, s in zip(means, scales)),
                       {"slope": slope, "decreasing": float(decreasing)})


def check_bias_separation(seed: int, workers: int = 1, micro_reps: int = 2000, **_) -> CheckResult:
    model, alpha, l = ProcessModel.mm1(0.9), 0.95, 400
    s = check_seed(seed, 6)
    bias = {}
    for r in (1, 64):
        table = run_micro_experiment(MicroPlan(RunPlan(model, r, l, s, workers), micro_reps, (alpha,)))
        truth = float(table.truths[0])
        bias[r] = (summarize(table.pooled[:, 0], truth)[1], summarize(table.average[:, 0], truth)[1])
    pooled_ratio = abs(bias[64][0]) / abs(bias[1][0])
    average_ratio = abs(bias[64][1]) / abs(bias[1][1])
    ok = abs(bias[64][0]) < abs(bias[1][0]) and pooled_ratio <= 0.5 and 1 / 3 <= average_ratio <= 3
    return CheckResult("C06", "bias_order_separation", ok,
                       f"pooled bias R=1 {bias[1][0]:.4f} R=64 {bias[64][0]:.4f} ratio {pooled_ratio:.4f} (<=0.5); "
                       f"average bias R=1 {bias[1][1]:.4f} R=64 {bias[64][1]:.4f} ratio {average_ratio:.4f} "
                       f"(in [1/3,3])",
                       {"pooled_ratio": pooled_ratio, "average_ratio": average_ratio})


def check_urgent_mse(seed: int, workers: int = 1, micro_reps: int = 100, **_) -> CheckResult:
    s = check_seed(seed, 7)
    parts, ok, metrics = [], True, {}
    for model in (ProcessModel.ar1(0.9), ProcessModel.mm1(0.9)):
        table = run_micro_experiment(MicroPlan(RunPlan(model, 64, 1000, s, workers), micro_reps, (0.95,)))
        truth = float(table.truths[0])
        mp = summarize(table.pooled[:, 0], truth)[0]
        ma = summarize(table.average[:, 0], truth)[0]
        ok &= mp <= 1.1 * ma
        metrics[model.kind] = mp / ma
        parts.append(f"{model.kind} {model.param:g}: mse pooled {mp:.4e} average {ma:.4e}")
    return CheckResult("C07", "urgent_mse_ordering", ok, "; ".join(parts) + " (gate pooled <= 1.1*average)", metrics)


def check_shared_variance(seed: int, workers: int = 1, micro_reps: int = 500, **_) -> CheckResult:
    model, alpha, l, r = ProcessModel.ar1(0.5), 0.5, 10**4, 16
    table = run_micro_experiment(MicroPlan(RunPlan(model, r, l, check_seed(seed, 8), workers), micro_reps, (alpha,)))
    truth = float(table.truths[0])
    vp = summarize(table.pooled[:, 0], truth)[2]
    va = summarize(table.average[:, 0], truth)[2]
    theory = analytic_v2(model, alpha) / (r * l * true_density_at_quantile(model, alpha) ** 2)
    rel = abs(vp - va) / max(vp, va)
    ok = rel <= 0.2 and abs(vp / theory - 1) <= 0.25 and abs(va / theory - 1) <= 0.25
    return CheckResult("C08", "shared_variance", ok,
                       f"var pooled {vp:.4e} average {va:.4e} theory {theory:.4e}; rel diff {rel:.4f} (<=0.2), "
                       f"ratios to theory {vp / theory:.4f} {va / theory:.4f} (within 25%)",
                       {"rel": rel, "pooled_ratio": vp / theory, "average_ratio": va / theory})


def check_determinism(seed: int, **_) -> CheckResult:
    s = check_seed(seed, 9)
    ok = True
    for model in (ProcessModel.ar1(0.5), ProcessModel.mm1(0.9, warmup=200)):
        runs = [run_replications(RunPlan(model, 13, 257, s, w), micro=3).values for w in (1, 2, 8)]
        ok &= all(np.array_equal(runs[0], x) for x in runs[1:])
    a = derive(s, 5, 7).random(4)
    b = derive(s, 5, 7).random(4)
    ok &= bool(np.array_equal(a, b))
    return CheckResult("C09", "determinism", ok,
                       "run_replications identical for workers in {1,2,8}" if ok else "worker-count dependence found")


def check_v2_agreement(seed: int, length: int = LONG_PATH, **_) -> CheckResult:
    s = check_seed(seed, 10)
    parts, worst, metrics = [], 0.0, {}
    for i, phi in enumerate((0.0, 0.5, 0.9)):
        model = ProcessModel.ar1(phi)
        path = generate(model, length, derive(s, 0, i))
        thr = true_quantile(model, 0.5)
        bm = estimate_v2_batch_means(path, thr)
        tr = estimate_v2_truncated(ReplicationSet([path]), thr)
        rel = abs(tr - bm) / bm
        worst = max(worst, rel)
        metrics[f"phi{phi:g}"] = rel
        parts.append(f"phi={phi:g} trunc {tr:.5f} bm {bm:.5f} rel {rel:.4f}")
    return CheckResult("C10", "v2_cross_oracle", worst <= 0.10, "; ".join(parts) + " (gate <= 0.10)", metrics)


CHECKS: Dict[str, Callable[..., CheckResult]] = {
    "C01": check_oracle_consistency,
    "C02": check_estimator_definitions,
    "C03": check_r1_collapse,
    "C04": check_clt,
    "C05": check_bahadur_decay,
    "C06": check_bias_separation,
    "C07": check_urgent_mse,
    "C08": check_shared_variance,
    "C09": check_determinism,
    "C10": check_v2_agreement,
}


def run_checks(seed: int, workers: int = 1, only: Optional[Sequence[str]] = None,
               truth_shift: float = 0.0, progress: Optional[Callable[[CheckResult], None]] = None) -> List[CheckResult]:
    """Run the selected checks in id order. ``truth_shift`` perturbs the C01 oracle (fault injection)."""
    results = []
    for cid, fn in CHECKS.items():
        if only and cid not in only:
            continue
        t = time.perf_counter()
        res = fn(seed, workers=workers, truth_shift=truth_shift)
        res.seconds = time.perf_counter() - t
        results.append(res)
        if progress:
            progress(res)
    return results


def format_report(seed: int, results: Sequence[CheckResult]) -> str:
    failed = sum(not r.passed for r in results)
    lines = [f"pooledq verification report  seed={seed}",
             f"{'id':<4} {'status':<5} {'check':<28} detail"]
    lines += [r.line() for r in results]
    lines.append(f"summary: {len(results) - failed} passed, {failed} failed")
    return "\n".join(lines) + "\n"


def cmd_verify(seed: int, out_dir, workers: int = 1, only=None, truth_shift: float = 0.0, progress=None):
    """Write ``verify_report.txt`` to ``out_dir``; return ``(path, all_passed, results)``."""
    results = run_checks(seed, workers, only, truth_shift, progress)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "verify_report.txt"
    path.write_text(format_report(seed, results))
    return path, all(r.passed for r in results), results

"""Deterministic parallel replication runner.

Stream derivation
-----------------
Replication ``j`` of micro-replication ``m`` under base seed ``s`` draws from
a Philox4x64-10 counter-based generator with 128-bit key

    key = (s mod 2**64) + 2**64 * (m * 2**32 + j)

and counter 0. The mapping is injective for ``0 <= m, j < 2**32``, so every
(micro, replication) pair owns a disjoint stream and results never depend on
how replications are spread across worker threads.
"""

from __future__ import annotations

from concurrent.futures import Executor, ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, ReplicationError
from .estimators import ReplicationSet, quantile_pair
from .processes import ProcessModel, generate, true_quantile

_U32 = 1 << 32
_U64 = 1 << 64


def stream_key(base_seed: int, micro: int, replication: int) -> int:
    if not (0 <= micro < _U32 and 0 <= replication < _U32):
        raise DomainError(f"micro and replication indices must be in [0, 2**32), got ({micro}, {replication})")
    return (int(base_seed) % _U64) + _U64 * (micro * _U32 + replication)


def derive(base_seed: int, micro: int, replication: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=stream_key(base_seed, micro, replication)))


@dataclass(frozen=True)
class RunPlan:
    model: ProcessModel
    r: int
    l: int
    base_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        for name in ("r", "l", "workers"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise DomainError(f"{name} must be a positive integer, got {v}")


@dataclass(frozen=True)
class MicroPlan:
    run: RunPlan
    micro_reps: int = 100
    alphas: Sequence[float] = (0.5, 0.95)

    def __post_init__(self):
        if int(self.micro_reps) != self.micro_reps or self.micro_reps < 1:
            raise DomainError(f"micro_reps must be a positive integer, got {self.micro_reps}")
        alphas = tuple(float(a) for a in self.alphas)
        if not alphas:
            raise DomainError("alphas must be nonempty")
        for a in alphas:
            if not (0 < a < 1):
                raise DomainError(f"alpha must lie in (0, 1), got {a}")
        object.__setattr__(self, "alphas", alphas)


@dataclass
class MicroTable:
    """Raw estimates: ``estimates[m, a, 0]`` pooled, ``estimates[m, a, 1]`` average."""

    plan: MicroPlan
    estimates: np.ndarray
    truths: np.ndarray = field(repr=False)

    @property
    def pooled(self) -> np.ndarray:
        return self.estimates[:, :, 0]

    @property
    def average(self) -> np.ndarray:
        return self.estimates[:, :, 1]

    def errors(self) -> np.ndarray:
        return self.estimates - self.truths[None, :, None]


def _fill_rows(plan: RunPlan, micro: int, rows: range, out: np.ndarray):
    for j in rows:
        key = stream_key(plan.base_seed, micro, j)
        try:
            out[j] = generate(plan.model, plan.l, derive(plan.base_seed, micro, j), seed=key).entries
        except Exception as exc:
            raise ReplicationError(j, key, exc) from exc


def _chunks(r: int, k: int):
    step, extra = divmod(r, k)
    start = 0
    for i in range(k):
        stop = start + step + (i < extra)
        yield range(start, stop)
        start = stop


def run_replications(plan: RunPlan, micro: int = 0, executor: Optional[Executor] = None) -> ReplicationSet:
    """Generate the R x L block for one micro-replication.

    Replications are split into ``min(workers, r)`` contiguous chunks; each
    row is written exactly once, so the result is identical for any worker
    count.
    """
    out = np.empty((plan.r, plan.l))
    k = min(plan.workers, plan.r)
    if k == 1:
        _fill_rows(plan, micro, range(plan.r), out)
    else:
        ctx = nullcontext(executor) if executor is not None else ThreadPoolExecutor(max_workers=k)
        with ctx as pool:
            futures = [pool.submit(_fill_rows, plan, micro, rows, out) for rows in _chunks(plan.r, k)]
            for f in futures:
                f.result()
    seeds = [stream_key(plan.base_seed, micro, j) for j in range(plan.r)]
    return ReplicationSet(out, seeds=seeds)


def run_micro_experiment(plan: MicroPlan) -> MicroTable:
    """Pooled and average estimates for every micro-replication and level."""
    run = plan.run
    truths = np.array([true_quantile(run.model, a) for a in plan.alphas])
    estimates = np.empty((plan.micro_reps, len(plan.alphas), 2))
    k = min(run.workers, run.r)
    ctx = ThreadPoolExecutor(max_workers=k) if k > 1 else nullcontext(None)
    with ctx as pool:
        for m in range(plan.micro_reps):
            data = run_replications(run, micro=m, executor=pool)
            estimates[m] = quantile_pair(data, plan.alphas)
    return MicroTable(plan, estimates, truths)

"""Order-statistic quantile estimators over R independent dependent paths.

All quantiles use the ceiling convention: the alpha-quantile of ``n``
values is the ``ceil(n * alpha)``-th smallest, with no interpolation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import DomainError
from .processes import SamplePath


class Method(str, enum.Enum):
    POOLED = "pooled"
    AVERAGE = "average"
    SINGLE = "single"


@dataclass(frozen=True)
class QuantileEstimate:
    value: float
    alpha: float
    method: Method
    r: int
    l: int

    @property
    def n(self) -> int:
        return self.r * self.l


class ReplicationSet:
    """Immutable R x L block of outputs; row ``j`` is replication ``j``.

    Accepts a sequence of :class:`SamplePath` (or 1-D arrays) of equal length,
    or a 2-D array. NaN anywhere is rejected.
    """

    def __init__(self, paths: Union[Sequence[SamplePath], Sequence[Sequence[float]], np.ndarray], seeds=None):
        if isinstance(paths, np.ndarray):
            values = np.array(paths, dtype=np.float64, ndmin=2)
        else:
            rows = [p.entries if isinstance(p, SamplePath) else np.asarray(p, dtype=np.float64) for p in paths]
            if seeds is None and rows and all(isinstance(p, SamplePath) for p in paths):
                seeds = tuple(p.seed for p in paths)
            if not rows:
                raise DomainError("a replication set needs at least one path")
            lengths = {len(r) for r in rows}
            if len(lengths) != 1:
                raise DomainError(f"all paths must share one run-length, got lengths {sorted(lengths)}")
            values = np.vstack(rows).astype(np.float64, copy=False)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DomainError(f"expected a nonempty R x L array, got shape {values.shape}")
        if np.isnan(values).any():
            raise DomainError("NaN in replication data")
        values.setflags(write=False)
        self._values = values
        self.seeds = tuple(seeds) if seeds is not None else None

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def r(self) -> int:
        return self._values.shape[0]

    @property
    def l(self) -> int:
        return self._values.shape[1]

    @property
    def n(self) -> int:
        return self._values.size

    @property
    def paths(self) -> tuple:
        seeds = self.seeds or (None,) * self.r
        return tuple(SamplePath(row, seed=s) for row, s in zip(self._values, seeds))

    def pooled(self) -> np.ndarray:
        return self._values.ravel()

    def affine(self, scale: float, shift: float) -> "ReplicationSet":
        return ReplicationSet(self._values * scale + shift, seeds=self.seeds)

    def __repr__(self):
        return f"ReplicationSet(R={self.r}, L={self.l})"


def order_index(n: int, alpha: float) -> int:
    """``ceil(n * alpha)`` as a 1-based rank, clamped to ``[1, n]``.

    Products that land within float noise of an integer are taken as that
    integer, so ``order_index(100, 0.07) == 7`` rather than 8.
    """
    if not (0 < alpha < 1):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    x = n * alpha
    nearest = round(x)
    k = nearest if abs(x - nearest) <= 1e-9 * max(1.0, x) else math.ceil(x)
    return min(max(int(k), 1), n)


def _select(values: np.ndarray, k: int) -> float:
    # introselect: expected linear time, no full sort
    return float(np.partition(values, k - 1)[k - 1])


def _as_path_array(path) -> np.ndarray:
    arr = path.entries if isinstance(path, SamplePath) else np.asarray(path, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError("empty sample path")
    if np.isnan(arr).any():
        raise DomainError("NaN in sample path")
    return arr


def pooled_quantile(data: ReplicationSet, alpha: float) -> QuantileEstimate:
    k = order_index(data.n, alpha)
    return QuantileEstimate(_select(data.pooled(), k), alpha, Method.POOLED, data.r, data.l)


def single_path_quantile(path, alpha: float) -> QuantileEstimate:
    arr = _as_path_array(path)
    k = order_index(arr.size, alpha)
    return QuantileEstimate(_select(arr, k), alpha, Method.SINGLE, 1, arr.size)


def average_quantile(data: ReplicationSet, alpha: float) -> QuantileEstimate:
    k = order_index(data.l, alpha)
    per_path = np.partition(data.values, k - 1, axis=1)[:, k - 1]
    return QuantileEstimate(float(per_path.mean()), alpha, Method.AVERAGE, data.r, data.l)


def quantile_pair(data: ReplicationSet, alphas: Iterable[float]) -> np.ndarray:
    """Pooled and average estimates for several levels in one pass.

    Returns an array of shape ``(len(alphas), 2)`` with columns
    ``(pooled, average)``.
    """
    alphas = list(alphas)
    kp = sorted({order_index(data.n, a) - 1 for a in alphas})
    ka = sorted({order_index(data.l, a) - 1 for a in alphas})
    pooled = np.partition(data.pooled(), kp)
    per_path = np.partition(data.values, ka, axis=1)
    out = np.empty((len(alphas), 2))
    for i, a in enumerate(alphas):
        out[i, 0] = pooled[order_index(data.n, a) - 1]
        out[i, 1] = per_path[:, order_index(data.l, a) - 1].mean()
    return out


def empirical_cdf(data: ReplicationSet, x: float) -> float:
    return float(np.count_nonzero(data.pooled() <= x)) / data.n

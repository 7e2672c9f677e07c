"""Long-run variance, Bahadur remainders and normality diagnostics for the pooled estimator."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import fft, special, stats

from .errors import DomainError
from .estimators import QuantileEstimate, ReplicationSet, empirical_cdf, pooled_quantile
from .processes import Ar1Params, ProcessModel, SamplePath, true_density_at_quantile, true_quantile

logger = logging.getLogger(__name__)

_DIRECT_LAG_LIMIT = 64


class Source(str, enum.Enum):
    ANALYTIC_ORACLE = "analytic_oracle"
    BATCH_MEANS = "batch_means"
    TRUNCATED_AUTOCOV = "truncated_autocov"


@dataclass(frozen=True)
class AsymptoticProfile:
    """Variance constants of the pooled quantile at level ``alpha``.

    ``sigma2 = v2 / density**2`` is the limiting variance of
    ``sqrt(N) * (estimate - truth)``.
    """

    v2: float
    density: float
    sigma2: float
    alpha: float
    source: Source

    @classmethod
    def from_v2(cls, v2: float, density: float, alpha: float, source: Source) -> "AsymptoticProfile":
        if v2 < 0:
            raise DomainError(f"v2 must be nonnegative, got {v2}")
        if not density > 0:
            raise DomainError(f"density must be positive, got {density}")
        return cls(float(v2), float(density), float(v2) / density**2, alpha, Source(source))

    def variance(self, n: int) -> float:
        """Asymptotic variance of a quantile estimate built from ``n`` outputs."""
        return self.sigma2 / n


@dataclass(frozen=True)
class BahadurDiagnostic:
    residual: float
    n: int
    l: int
    bound_scale: float


@dataclass(frozen=True)
class NormalityReport:
    n: int
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float
    ks_distance: float


def default_max_lag(l: int) -> int:
    return max(1, math.ceil(l ** (1.0 / 3.0)))


def default_batch_size(l: int) -> int:
    return max(1, math.isqrt(l))


def _centered_indicators(values: np.ndarray, threshold: float) -> np.ndarray:
    ind = (values <= threshold).astype(np.float64)
    return ind - ind.mean(axis=-1, keepdims=True)


def _autocov(c: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased sample autocovariances (divisor L) at lags 0..max_lag, averaged over rows."""
    l = c.shape[1]
    if max_lag <= _DIRECT_LAG_LIMIT:
        acov = np.array([np.sum(c[:, : l - h] * c[:, h:]) for h in range(max_lag + 1)])
    else:
        nfft = fft.next_fast_len(2 * l - 1, real=True)
        spec = fft.rfft(c, n=nfft, axis=1)
        acov = fft.irfft(spec.real**2 + spec.imag**2, n=nfft, axis=1)[:, : max_lag + 1].sum(axis=0)
    return acov / (l * c.shape[0])


def estimate_v2_truncated(data: ReplicationSet, threshold: float, max_lag: Optional[int] = None) -> float:
    """Flat-window truncated sum ``v0 + 2 * sum_{h<=max_lag} v_h`` of the indicator process.

    Autocovariances are computed per replication around that replication's
    mean and then averaged. Negative totals are floored at 0.
    """
    if not isinstance(data, ReplicationSet):
        data = ReplicationSet([data])
    if max_lag is None:
        max_lag = default_max_lag(data.l)
    if max_lag < 1 or max_lag >= data.l:
        raise DomainError(f"max_lag must satisfy 1 <= max_lag < L={data.l}, got {max_lag}")
    acov = _autocov(_centered_indicators(data.values, threshold), max_lag)
    v2 = float(acov[0] + 2.0 * acov[1:].sum())
    if v2 < 0:
        logger.warning("truncated v2 estimate %.6g < 0 floored at 0 (L=%d, max_lag=%d)", v2, data.l, max_lag)
        return 0.0
    return v2


def estimate_v2_batch_means(path, threshold: float, batch_size: Optional[int] = None) -> float:
    """Batch-means long-run variance of ``1(X_i <= threshold)``.

    Uses the leading ``(L // batch_size) * batch_size`` entries; trailing
    leftovers are dropped. Needs at least 30 batches.
    """
    x = path.entries if isinstance(path, SamplePath) else np.asarray(path, dtype=np.float64)
    if x.ndim != 1:
        raise DomainError("batch means takes a single path")
    if batch_size is None:
        batch_size = default_batch_size(x.size)
    if batch_size < 1:
        raise DomainError(f"batch_size must be positive, got {batch_size}")
    n_batches = x.size // batch_size
    if n_batches < 30:
        raise DomainError(f"need at least 30 batches, got {n_batches} (L={x.size}, batch_size={batch_size})")
    ind = (x[: n_batches * batch_size] <= threshold).astype(np.float64)
    means = ind.reshape(n_batches, batch_size).mean(axis=1)
    return float(batch_size * means.var(ddof=1))


def analytic_v2(model: ProcessModel, alpha: float, tol: float = 1e-16, max_terms: int = 10**6) -> float:
    """Exact long-run variance of the indicator process for a Gaussian AR(1).

    Lag-h covariance is ``P(Z1 <= z, Z2 <= z; rho=phi**h) - alpha**2`` with the
    bivariate normal orthant computed through Owen's T function.
    """
    if not isinstance(model.params, Ar1Params):
        raise DomainError("analytic v2 is only available for AR(1) models")
    if not (0 < alpha < 1):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    z = float(special.ndtri(alpha))
    phi = model.params.phi
    total = alpha * (1.0 - alpha)
    rho = 1.0
    for _ in range(max_terms):
        rho *= phi
        if abs(rho) < tol:
            break
        a = math.sqrt((1.0 - rho) / (1.0 + rho))
        joint = alpha - 2.0 * float(special.owens_t(z, a))
        total += 2.0 * (joint - alpha * alpha)
    return total


def asymptotic_profile(model: ProcessModel, alpha: float, v2: Optional[float] = None,
                       source: Source = Source.ANALYTIC_ORACLE) -> AsymptoticProfile:
    """Profile with the analytic density; ``v2`` defaults to :func:`analytic_v2`."""
    if v2 is None:
        v2 = analytic_v2(model, alpha)
        source = Source.ANALYTIC_ORACLE
    return AsymptoticProfile.from_v2(v2, true_density_at_quantile(model, alpha), alpha, source)


def bahadur_residual(data: ReplicationSet, alpha: float, truth: float, density: float) -> BahadurDiagnostic:
    """Remainder of the linearization ``est - truth ~ (alpha - F_N(truth)) / density``."""
    if not density > 0:
        raise DomainError(f"density must be positive, got {density}")
    est = pooled_quantile(data, alpha).value
    residual = (est - truth) - (alpha - empirical_cdf(data, truth)) / density
    return BahadurDiagnostic(residual, data.n, data.l, data.n**-0.75 * math.log(data.l))


def standardized_errors(estimates: Sequence[QuantileEstimate], truth: float, profile: AsymptoticProfile) -> np.ndarray:
    if not profile.sigma2 > 0:
        raise DomainError("standardization needs sigma2 > 0")
    sigma = math.sqrt(profile.sigma2)
    return np.array([math.sqrt(e.n) * (e.value - truth) / sigma for e in estimates])


def normality_check(z) -> NormalityReport:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.size < 30:
        raise DomainError(f"normality check needs at least 30 values, got {z.size}")
    mean = z.mean()
    d = z - mean
    m2 = np.mean(d**2)
    if m2 > 0:
        skew = float(np.mean(d**3) / m2**1.5)
        kurt = float(np.mean(d**4) / m2**2 - 3.0)
    else:
        skew = kurt = math.nan
    ks = float(stats.kstest(z, "norm").statistic)
    return NormalityReport(int(z.size), float(mean), float(z.var(ddof=1)), skew, kurt, ks)

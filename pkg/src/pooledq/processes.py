"""Stationary dependent output processes and their analytic marginals.

Two generators are provided, matching the numerical study setting:

* AR(1): ``X_i = mu + phi * X_{i-1} + eps_i`` with Gaussian innovations,
  started from the exact stationary marginal so no warm-up is needed.
* M/M/1 sojourn times via the Lindley recursion, started from an empty
  system and run through a configurable warm-up.

Every path is a deterministic function of the uniform stream it is given.
Normals come from the inverse normal CDF and exponentials from ``-log(u)``,
where ``u = next_double() + 2**-54`` lies strictly inside (0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from numba import njit
from scipy import signal, special, stats

from .errors import DomainError

MM1_DEFAULT_WARMUP = 5000

_HALF_ULP = 2.0**-54


@dataclass(frozen=True)
class Ar1Params:
    phi: float
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.phi) and abs(self.phi) < 1):
            raise DomainError(f"AR(1) requires |phi| < 1, got {self.phi}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise DomainError(f"AR(1) requires sigma > 0, got {self.sigma}")
        if not math.isfinite(self.mu):
            raise DomainError(f"AR(1) mu must be finite, got {self.mu}")

    @property
    def stationary_mean(self) -> float:
        return self.mu / (1.0 - self.phi)

    @property
    def stationary_sd(self) -> float:
        return self.sigma / math.sqrt(1.0 - self.phi**2)


@dataclass(frozen=True)
class Mm1Params:
    utilization: float
    arrival_rate: float = 1.0

    def __post_init__(self):
        if not (0 < self.utilization < 1):
            raise DomainError(f"M/M/1 requires 0 < utilization < 1, got {self.utilization}")
        if not (math.isfinite(self.arrival_rate) and self.arrival_rate > 0):
            raise DomainError(f"M/M/1 requires arrival_rate > 0, got {self.arrival_rate}")

    @property
    def service_rate(self) -> float:
        return self.arrival_rate / self.utilization

    @property
    def sojourn_rate(self) -> float:
        """Rate of the exponential stationary sojourn-time distribution."""
        return self.service_rate - self.arrival_rate


@dataclass(frozen=True)
class ProcessModel:
    params: Union[Ar1Params, Mm1Params]
    warmup: int = -1  # resolved to the per-variant default

    def __post_init__(self):
        if not isinstance(self.params, (Ar1Params, Mm1Params)):
            raise DomainError(f"unknown process parameters {self.params!r}")
        if self.warmup == -1:
            default = 0 if isinstance(self.params, Ar1Params) else MM1_DEFAULT_WARMUP
            object.__setattr__(self, "warmup", default)
        if int(self.warmup) != self.warmup or self.warmup < 0:
            raise DomainError(f"warmup must be a nonnegative integer, got {self.warmup}")

    @classmethod
    def ar1(cls, phi: float, mu: float = 0.0, sigma: float = 1.0, warmup: int = 0) -> "ProcessModel":
        return cls(Ar1Params(phi=phi, mu=mu, sigma=sigma), warmup)

    @classmethod
    def mm1(cls, utilization: float, arrival_rate: float = 1.0, warmup: int = MM1_DEFAULT_WARMUP) -> "ProcessModel":
        return cls(Mm1Params(utilization=utilization, arrival_rate=arrival_rate), warmup)

    @property
    def kind(self) -> str:
        return "ar1" if isinstance(self.params, Ar1Params) else "mm1"

    @property
    def param(self) -> float:
        """The swept parameter: phi for AR(1), utilization for M/M/1."""
        if isinstance(self.params, Ar1Params):
            return self.params.phi
        return self.params.utilization


@dataclass(frozen=True, eq=False)
class SamplePath:
    entries: np.ndarray
    seed: Optional[int] = None
    model: Optional[ProcessModel] = field(default=None, repr=False)

    def __post_init__(self):
        arr = np.array(self.entries, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    def __len__(self):
        return self.entries.shape[0]


def _open_uniforms(stream: np.random.Generator, n: int) -> np.ndarray:
    return stream.random(n) + _HALF_ULP


def _check_length(length, warmup):
    if int(length) != length or length < 1:
        raise DomainError(f"length must be a positive integer, got {length}")
    if int(warmup) != warmup or warmup < 0:
        raise DomainError(f"warmup must be a nonnegative integer, got {warmup}")


def generate_ar1(params: Ar1Params, length: int, warmup: int, stream: np.random.Generator, seed=None) -> SamplePath:
    """Stationary AR(1) path of ``length`` observations after ``warmup``.

    Draw order: one uniform for ``X_0`` then ``warmup + length`` innovations.
    """
    _check_length(length, warmup)
    total = warmup + length
    u = _open_uniforms(stream, total + 1)
    z = special.ndtri(u)
    phi = params.phi
    y0 = z[0] * params.stationary_sd
    eps = z[1:] * params.sigma
    # deviations from the stationary mean follow y_i = phi*y_{i-1} + eps_i
    y, _ = signal.lfilter([1.0], [1.0, -phi], eps, zi=[phi * y0])
    x = y[warmup:] + params.stationary_mean
    return SamplePath(x, seed=seed, model=ProcessModel(params, warmup))


@njit(cache=True, nogil=True)
def _lindley_sojourn(service, interarrival, skip):
    n = service.shape[0]
    out = np.empty(n - skip)
    w = 0.0
    for i in range(n):
        if i >= skip:
            out[i - skip] = w + service[i]
        w = w + service[i] - interarrival[i]
        if w < 0.0:
            w = 0.0
    return out


def mm1_waiting_times(service: np.ndarray, interarrival: np.ndarray) -> np.ndarray:
    """Lindley waiting times for an initially empty queue (``W_1 = 0``)."""
    return _lindley_sojourn(np.asarray(service, float), np.asarray(interarrival, float), 0) - service


def generate_mm1(params: Mm1Params, length: int, warmup: int, stream: np.random.Generator, seed=None) -> SamplePath:
    """Sojourn times of customers ``warmup+1 .. warmup+length`` of an M/M/1 queue.

    Draw order: ``n = warmup + length`` service-time uniforms, then ``n``
    interarrival uniforms (entry ``i`` is the gap before customer ``i+1``).
    """
    _check_length(length, warmup)
    n = warmup + length
    u = _open_uniforms(stream, 2 * n)
    service = -np.log(u[:n]) / params.service_rate
    interarrival = -np.log(u[n:]) / params.arrival_rate
    x = _lindley_sojourn(service, interarrival, warmup)
    return SamplePath(x, seed=seed, model=ProcessModel(params, warmup))


def generate(model: ProcessModel, length: int, stream: np.random.Generator, seed=None) -> SamplePath:
    if isinstance(model.params, Ar1Params):
        return generate_ar1(model.params, length, model.warmup, stream, seed=seed)
    return generate_mm1(model.params, length, model.warmup, stream, seed=seed)


def _check_alpha(alpha):
    if not (0 < alpha < 1):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def true_quantile(model: ProcessModel, alpha: float) -> float:
    _check_alpha(alpha)
    p = model.params
    if isinstance(p, Ar1Params):
        return p.stationary_mean + float(special.ndtri(alpha)) * p.stationary_sd
    return -math.log1p(-alpha) / p.sojourn_rate


def true_density_at_quantile(model: ProcessModel, alpha: float) -> float:
    _check_alpha(alpha)
    p = model.params
    if isinstance(p, Ar1Params):
        z = float(special.ndtri(alpha))
        return float(stats.norm.pdf(z)) / p.stationary_sd
    return p.sojourn_rate * (1.0 - alpha)


def true_cdf(model: ProcessModel, x):
    """Stationary marginal CDF."""
    p = model.params
    if isinstance(p, Ar1Params):
        return stats.norm.cdf(x, loc=p.stationary_mean, scale=p.stationary_sd)
    return -np.expm1(-p.sojourn_rate * np.maximum(x, 0.0))

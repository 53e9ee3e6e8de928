"""Exact chain quantities and empirical statistics for the offset chain.

The offset ``b_i = a_i - i*t`` of a jittered-and-reflected schedule is a
Markov chain on ``[0, t]`` (or ``{0, ..., t-1}``). In discrete mode its
transition matrix is built by enumerating every (offset, jitter) pair; its
eigenvalues are the jitter's Fourier coefficients ``d(k)``, ``k = 0..t-1``.
Continuous chains are studied through ``d(k)`` directly and through a
binned surrogate kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy import integrate, stats

from .jitter import DiscreteLaw
from .sampler import SamplingConfig, Schedule, reflect_offset

MIN_MARGINAL_SAMPLES = 1000
SURROGATE_BINS = 256


class InsufficientDataError(ValueError):
    pass


def offsets(schedule: Schedule) -> np.ndarray:
    """Per-interval offsets ``a_i - i*t``."""
    t = schedule.config.t
    b = schedule.timestamps - np.arange(len(schedule)) * t
    if not schedule.config.discrete:
        # a_i - i*t can land an ulp outside [0, t] after rounding
        b = np.clip(b, 0.0, t)
    return b


class MarginalTest(NamedTuple):
    statistic: float
    p_value: float
    n: int


def marginal_uniformity_test(values, t, mode: str) -> MarginalTest:
    """KS against ``Unif[0, t]`` or chi-square over the ``t`` offsets."""
    values = np.asarray(values)
    if len(values) < MIN_MARGINAL_SAMPLES:
        raise InsufficientDataError(
            f"need at least {MIN_MARGINAL_SAMPLES} samples, got {len(values)}"
        )
    if mode == "discrete":
        counts = np.bincount(values.astype(np.int64), minlength=int(t))
        if len(counts) > t or values.min() < 0:
            raise ValueError("discrete offsets must lie in {0, ..., t-1}")
        res = stats.chisquare(counts)
    else:
        res = stats.kstest(values, "uniform", args=(0.0, float(t)))
    return MarginalTest(float(res.statistic), float(res.pvalue), len(values))


def _discrete_law(config: SamplingConfig) -> DiscreteLaw:
    if not config.discrete:
        raise ValueError("transition matrices are defined for discrete mode only")
    t = config.t
    law = config.law
    if not isinstance(t, int) or t < 1 or np.any(np.abs(law.support) >= t):
        raise ValueError("jitter offsets must satisfy |v| < t for a single reflection")
    return law


def transition_matrix(config: SamplingConfig, exact: bool = False) -> np.ndarray:
    """One-step offset transition matrix, by enumeration of (offset, jitter).

    The gcd condition is not required, so periodic chains can be studied.
    With ``exact=True`` the entries are :class:`fractions.Fraction`.
    """
    law = _discrete_law(config)
    t = config.t
    if exact:
        P = np.array([[Fraction(0)] * t for _ in range(t)], dtype=object)
        masses = law.exact
    else:
        P = np.zeros((t, t))
        masses = law.probs
    for b in range(t):
        for v, p in zip(law.support.tolist(), masses):
            P[b, reflect_offset(b + v, t, True)] += p
    return P


def alpha_of_config(config: SamplingConfig) -> float:
    """State-flip probability of the two-state chain (``t = 2`` only)."""
    if not config.discrete or config.t != 2:
        raise ValueError("alpha is defined for discrete t = 2 only")
    return float(transition_matrix(config)[0, 1])


def theoretical_correlation(alpha: float, m):
    return (1.0 - 2.0 * alpha) ** np.asarray(m)


def correlation_length(alpha: float) -> float:
    """Lag at which ``(1 - 2 alpha)^m`` falls to ``1/e``."""
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (0, 0.5), got {alpha!r}")
    return -1.0 / math.log(1.0 - 2.0 * alpha)


@dataclass
class CorrelationCurve:
    lags: np.ndarray
    empirical: np.ndarray
    theoretical: np.ndarray
    stderr: np.ndarray
    n: int
    block_len: int = 0

    def within(self, k: float = 3.0) -> np.ndarray:
        """Per-lag check that theory lies within ``k`` standard errors."""
        return np.abs(self.empirical - self.theoretical) <= k * self.stderr


def empirical_autocorrelation(
    series,
    max_lag: int,
    alpha: float | None = None,
    block_len: int | None = None,
) -> CorrelationCurve:
    """Overlapping-pairs Pearson autocorrelation with batch-means errors.

    Each lag uses all pairs ``(x_j, x_{j+m})`` centered on the global mean and
    scaled by the global variance. The standard error is that of the mean of
    the products over independent blocks of ``block_len`` steps (default
    ``10 * l_c`` plus the lag span, with ``l_c`` taken from ``alpha`` or from
    the lag-1 estimate).
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 100 * max(max_lag, 1):
        raise InsufficientDataError(f"series of length {n} is too short for max lag {max_lag}")
    z = x - x.mean()
    var = float(np.mean(z * z))
    if var == 0.0:
        raise InsufficientDataError("series is constant; correlation undefined")
    if block_len is None:
        if alpha is not None and 0 < alpha < 0.5:
            l_c = correlation_length(alpha)
        else:
            r1 = abs(float(np.mean(z[:-1] * z[1:])) / var)
            l_c = -1.0 / math.log(r1) if 0 < r1 < 1 else 1.0
        block_len = max(int(math.ceil(10 * l_c)), 10) + max_lag
    lags = np.arange(max_lag + 1)
    emp = np.empty(max_lag + 1)
    se = np.empty(max_lag + 1)
    for m in lags:
        prod = z[: n - m] * z[m:] / var
        emp[m] = prod.mean()
        nb = len(prod) // block_len
        means = prod[: nb * block_len].reshape(nb, block_len).mean(axis=1)
        se[m] = means.std(ddof=1) / math.sqrt(nb)
    theo = theoretical_correlation(alpha, lags) if alpha is not None else np.full(max_lag + 1, np.nan)
    return CorrelationCurve(lags, emp, np.asarray(theo, dtype=float), se, n, block_len)


def exact_autocorrelation(config: SamplingConfig, max_lag: int) -> np.ndarray:
    """Stationary lag-``m`` correlation of the discrete offset chain."""
    P = transition_matrix(config)
    t = config.t
    b = np.arange(t, dtype=float)
    z = b - b.mean()
    var = float(np.mean(z * z))
    out = np.empty(max_lag + 1)
    g = z.copy()
    for m in range(max_lag + 1):
        out[m] = float(np.mean(z * g)) / var
        g = P @ g
    return out


def crossing_length(rho) -> float:
    """First lag where a correlation curve reaches ``1/e``, log-interpolated."""
    rho = np.asarray(rho, dtype=float)
    target = -1.0
    for m in range(1, len(rho)):
        if rho[m] <= math.exp(target):
            if rho[m] <= 0:
                return float(m)
            lo, hi = math.log(rho[m - 1]), math.log(rho[m])
            return m - 1 + (lo - target) / (lo - hi)
    raise InsufficientDataError("curve never drops to 1/e within the available lags")


def fit_correlation_length(curve: CorrelationCurve, min_z: float = 3.0) -> float:
    """Fit ``log rho_m = -m / l_c`` by weighted least squares through the origin.

    Only lags whose estimate exceeds ``min_z`` standard errors are used;
    weights are ``(rho / se)^2``.
    """
    m = curve.lags[1:].astype(float)
    rho = curve.empirical[1:]
    se = curve.stderr[1:]
    keep = rho > min_z * se
    if not np.any(keep):
        raise InsufficientDataError("no lag is significantly positive")
    m, rho, se = m[keep], rho[keep], se[keep]
    w = (rho / se) ** 2
    slope = float(np.sum(w * m * np.log(rho)) / np.sum(w * m * m))
    if slope >= 0:
        raise InsufficientDataError("fitted correlation does not decay")
    return -1.0 / slope


def gap_variance(schedule: Schedule) -> float:
    if len(schedule) < 2:
        raise InsufficientDataError("need at least two timestamps")
    gaps = np.diff(schedule.timestamps).astype(float)
    return float(np.var(gaps, ddof=1 if len(gaps) > 1 else 0))


def fourier_coefficient(config: SamplingConfig, k):
    """``d(k) = E[exp(-i pi k v / t)]`` of the config's jitter."""
    return config.law.fourier(k, config.t)


def fourier_by_quadrature(config: SamplingConfig, k: int) -> float:
    """Real part of ``d(k)`` by adaptive quadrature of the density (continuous)."""
    law = config.law
    if config.discrete:
        raise ValueError("quadrature applies to continuous jitters")
    w = math.pi * k / config.t
    if hasattr(law, "t_p"):
        pieces = [(-law.t_p, law.t_p, 1.0 / (2.0 * law.t_p))]
    else:
        pieces = list(zip(law.lo, law.hi, law.dens))
    total = 0.0
    for lo, hi, dens in pieces:
        val, _ = integrate.quad(lambda x: math.cos(w * x), lo, hi, epsabs=1e-13, epsrel=1e-12, limit=500)
        total += dens * val
    return total


def spectral_gap_modulus(P: np.ndarray) -> float:
    """Second-largest eigenvalue modulus (1 for periodic or reducible chains)."""
    mods = np.sort(np.abs(np.linalg.eigvals(np.asarray(P, dtype=float))))[::-1]
    return float(mods[1]) if len(mods) > 1 else 0.0


def tv_decay(P: np.ndarray, initial, steps: int) -> np.ndarray:
    """``0.5 * || initial P^n - uniform ||_1`` for ``n = 0..steps``, exactly."""
    P = np.asarray(P, dtype=float)
    mu = np.asarray(initial, dtype=float)
    u = np.full(len(mu), 1.0 / len(mu))
    out = np.empty(steps + 1)
    for n in range(steps + 1):
        out[n] = 0.5 * np.abs(mu - u).sum()
        mu = mu @ P
    return out


def tv_envelope(tv: np.ndarray, slem: float, floor: float = 1e-12) -> tuple[float, np.ndarray]:
    """Smallest ``C`` with ``tv[n] <= C * slem**n`` up to the first ``tv[n] < floor``.

    Values past that point are rounding noise and would inflate ``C``.
    """
    n = np.arange(len(tv))
    below = np.flatnonzero(tv < floor)
    stop = int(below[0]) if len(below) else len(tv)
    if slem <= 0 or stop == 0:
        return float(tv[0]), np.where(n == 0, tv[0], 0.0)
    powers = slem ** n.astype(float)
    C = float(np.max(tv[:stop] / powers[:stop]))
    return C, C * powers


def surrogate_kernel(config: SamplingConfig, bins: int = SURROGATE_BINS, nodes: int = 16) -> np.ndarray:
    """Binned transition kernel of a continuous offset chain.

    The source position is averaged over each bin by Gauss-Legendre
    quadrature; the destination mass of each bin is exact through the jitter
    CDF, counting the direct image and both reflected images.
    """
    if config.discrete:
        raise ValueError("surrogate kernels are for continuous mode")
    law = config.law
    t = float(config.t)
    edges = np.linspace(0.0, t, bins + 1)
    h = t / bins
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    x = (edges[:-1, None] + (gx[None, :] + 1.0) * h / 2).reshape(-1, 1)
    direct = np.diff(law.cdf(edges[None, :] - x), axis=1)
    low = -np.diff(law.cdf(-edges[None, :] - x), axis=1)
    high = -np.diff(law.cdf(2 * t - edges[None, :] - x), axis=1)
    K = (direct + low + high).reshape(bins, nodes, bins)
    K = np.einsum("j,ijk->ik", gw / 2, K)
    return K / K.sum(axis=1, keepdims=True)


@dataclass
class SpectralReport:
    ks: np.ndarray
    d: np.ndarray
    slem: float
    tv: np.ndarray
    tv_constant: float
    tv_bound: np.ndarray
    eigenvalues: np.ndarray = field(default_factory=lambda: np.empty(0))

    def to_dict(self) -> dict:
        return {
            "k": self.ks.tolist(),
            "d_real": self.d.real.tolist(),
            "d_imag": self.d.imag.tolist(),
            "spectral_gap_modulus": self.slem,
            "tv_constant": self.tv_constant,
            "eigenvalues": sorted((float(abs(e)) for e in self.eigenvalues), reverse=True),
        }


def spectral_report(config: SamplingConfig, max_k: int = 64, steps: int = 200, initial=None) -> SpectralReport:
    """Fourier coefficients, spectral gap and exact TV decay from a point mass.

    Continuous configs use :func:`surrogate_kernel` for the chain quantities.
    """
    ks = np.arange(max_k + 1)
    d = np.asarray(fourier_coefficient(config, ks), dtype=complex)
    P = transition_matrix(config) if config.discrete else surrogate_kernel(config)
    if initial is None:
        initial = np.zeros(len(P))
        initial[0] = 1.0
    eig = np.linalg.eigvals(P)
    slem = spectral_gap_modulus(P)
    tv = tv_decay(P, initial, steps)
    C, bound = tv_envelope(tv, slem)
    return SpectralReport(ks, d, slem, tv, C, bound, eig)

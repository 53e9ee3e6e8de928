"""Symmetric jitter distributions and their resolved sampling laws."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Mapping, Sequence

import numpy as np

NORMALIZATION_TOL = 1e-12


def _as_fraction(x: float | int | str | Fraction) -> Fraction:
    # str() round-trips the shortest decimal, so 0.1 becomes exactly 1/10
    if isinstance(x, Fraction):
        return x
    return Fraction(str(x))


@dataclass(frozen=True)
class JitterSpec:
    """A jitter distribution, independent of the interval it is used with.

    ``kind="uniform"`` means uniform on ``[-t_p, t_p]`` (continuous) or on
    ``{-t_p, ..., t_p}`` (discrete); ``t_p`` comes from the sampling config.
    Explicit discrete jitters carry ``masses`` as ``(offset, probability)``
    pairs. Explicit continuous jitters carry piecewise-constant ``pieces`` as
    ``(lo, hi, density)`` triples.
    """

    kind: str = "uniform"
    masses: tuple[tuple[int, float], ...] | None = None
    pieces: tuple[tuple[float, float, float], ...] | None = None

    @classmethod
    def uniform(cls) -> JitterSpec:
        return cls("uniform")

    @classmethod
    def discrete(cls, masses: Mapping[int, float]) -> JitterSpec:
        items = tuple(sorted((int(k), float(p)) for k, p in masses.items()))
        return cls("explicit", masses=items)

    @classmethod
    def piecewise(cls, pieces: Sequence[Sequence[float]]) -> JitterSpec:
        items = tuple(sorted((float(lo), float(hi), float(d)) for lo, hi, d in pieces))
        return cls("explicit", pieces=items)

    @classmethod
    def flip(cls, alpha: float) -> JitterSpec:
        """Mass ``alpha`` on each of -1 and +1, the rest on 0.

        With ``t=2`` this makes the offset chain flip state with
        probability ``alpha`` per step.
        """
        return cls.discrete({-1: alpha, 0: 1.0 - 2.0 * alpha, 1: alpha})

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "uniform":
            return {"kind": "uniform"}
        if self.masses is not None:
            return {"kind": "explicit", "masses": {str(k): p for k, p in self.masses}}
        return {"kind": "explicit", "pieces": [list(p) for p in self.pieces or ()]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any] | None) -> JitterSpec:
        if data is None:
            return cls.uniform()
        kind = data.get("kind", "uniform")
        if kind == "uniform":
            return cls.uniform()
        if kind != "explicit":
            raise ValueError(f"unknown jitter kind {kind!r}")
        if "masses" in data:
            return cls.discrete({int(k): float(p) for k, p in data["masses"].items()})
        if "pieces" in data:
            return cls.piecewise(data["pieces"])
        raise ValueError("explicit jitter needs 'masses' or 'pieces'")

    def errors(self, mode: str, t: float, t_p: float) -> list[tuple[str, str]]:
        """Return every violated jitter invariant as ``(name, message)``."""
        if self.kind == "uniform":
            # the discrete uniform support contains +-1, so its gcd is always 1
            return []
        if mode == "discrete":
            if self.masses is None:
                return [("wrong_jitter_kind", "discrete mode needs offset masses")]
            return _discrete_errors(self.masses, t, t_p)
        if self.pieces is None:
            return [("wrong_jitter_kind", "continuous mode needs density pieces")]
        return _piecewise_errors(self.pieces, t_p)

    def law(self, mode: str, t_p: float) -> JitterLaw:
        if mode == "discrete":
            if self.kind == "uniform":
                n = 2 * int(t_p) + 1
                support = np.arange(-int(t_p), int(t_p) + 1, dtype=np.int64)
                exact = tuple(Fraction(1, n) for _ in range(n))
                return DiscreteLaw(support, np.full(n, 1.0 / n), exact)
            if self.masses is None:
                raise ValueError("discrete mode needs a mass-based jitter")
            kept = [(k, p) for k, p in self.masses if p > 0]
            support = np.array([k for k, _ in kept], dtype=np.int64)
            probs = np.array([p for _, p in kept], dtype=float)
            exact = tuple(_as_fraction(p) for _, p in kept)
            return DiscreteLaw(support, probs, exact)
        if self.kind == "uniform":
            return UniformLaw(float(t_p))
        if self.pieces is None:
            raise ValueError("continuous mode needs a piecewise density jitter")
        return PiecewiseLaw(np.array(self.pieces, dtype=float).reshape(-1, 3))


def jitter_gcd(t: int, offsets: Sequence[int]) -> int:
    """gcd of ``2t`` and every nonzero offset (offset 0 does not participate)."""
    g = 2 * int(t)
    for k in offsets:
        if k != 0:
            g = math.gcd(g, abs(int(k)))
    return g


def _discrete_errors(masses, t, t_p) -> list[tuple[str, str]]:
    errs: list[tuple[str, str]] = []
    if not masses:
        return [("not_normalized", "discrete jitter has no masses")]
    table = dict(masses)
    if any(p < 0 for p in table.values()):
        errs.append(("negative_mass", "jitter masses must be nonnegative"))
    total = sum(table.values())
    if abs(total - 1.0) > NORMALIZATION_TOL:
        errs.append(("not_normalized", f"jitter masses sum to {total!r}, expected 1"))
    support = [k for k, p in table.items() if p > 0]
    outside = [k for k in support if abs(k) > t_p]
    if outside:
        errs.append(("support_exceeds_t_p", f"offsets {outside} lie outside [-{t_p}, {t_p}]"))
    asym = [k for k in support if table.get(-k, 0.0) != table[k]]
    if asym:
        errs.append(("asymmetric_jitter", f"mass at offsets {sorted(asym)} differs from mass at their negatives"))
    g = jitter_gcd(int(t), support)
    if g != 1:
        errs.append(("gcd_condition", f"gcd of 2t={2 * int(t)} and nonzero jitter offsets {sorted(k for k in support if k)} is {g}, must be 1"))
    return errs


def _piecewise_errors(pieces, t_p) -> list[tuple[str, str]]:
    if not pieces:
        return [("not_normalized", "continuous jitter has no pieces")]
    errs: list[tuple[str, str]] = []
    frac = [(_as_fraction(lo), _as_fraction(hi), d) for lo, hi, d in pieces]
    if any(lo >= hi for lo, hi, _ in frac):
        errs.append(("malformed_pieces", "every piece needs lo < hi"))
        return errs
    if any(d < 0 for _, _, d in frac):
        errs.append(("negative_mass", "densities must be nonnegative"))
    ordered = sorted(frac)
    if any(a[1] > b[0] for a, b in zip(ordered, ordered[1:])):
        errs.append(("malformed_pieces", "pieces overlap"))
        return errs
    bound = _as_fraction(t_p)
    if any(d > 0 and (lo < -bound or hi > bound) for lo, hi, d in frac):
        errs.append(("support_exceeds_t_p", f"density is positive outside [-{t_p}, {t_p}]"))
    total = sum(float(hi - lo) * d for lo, hi, d in frac)
    if abs(total - 1.0) > NORMALIZATION_TOL:
        errs.append(("not_normalized", f"density integrates to {total!r}, expected 1"))

    # refine on the breakpoints and their mirrors, then compare mirrored segments
    cuts = sorted({x for lo, hi, _ in frac for x in (lo, hi, -lo, -hi)})

    def density(x: Fraction) -> float:
        for lo, hi, d in frac:
            if lo <= x < hi:
                return d
        return 0.0

    scale = max(d for _, _, d in frac) or 1.0
    for a, b in zip(cuts, cuts[1:]):
        mid = (a + b) / 2
        if abs(density(mid) - density(-mid)) > NORMALIZATION_TOL * scale:
            errs.append(("asymmetric_jitter", f"density on ({a}, {b}) differs from its mirror"))
            break
    return errs


class JitterLaw:
    """A jitter distribution resolved against a concrete ``t_p``."""

    discrete = False

    def sample(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms in ``[0, 1)`` to jitter values by inverse CDF."""
        raise NotImplementedError

    def fourier(self, k: int | np.ndarray, t: float) -> np.ndarray:
        """Characteristic coefficient ``E[exp(-i*pi*k*v/t)]``."""
        raise NotImplementedError


class DiscreteLaw(JitterLaw):
    discrete = True

    def __init__(self, support: np.ndarray, probs: np.ndarray, exact: tuple[Fraction, ...]):
        self.support = support
        self.probs = probs
        self.exact = exact
        self._cum = np.cumsum(probs)
        self._cum[-1] = 1.0

    def sample(self, u):
        idx = np.searchsorted(self._cum, u, side="right")
        return self.support[np.minimum(idx, len(self.support) - 1)]

    def fourier(self, k, t):
        k = np.asarray(k, dtype=float)
        phase = np.multiply.outer(k, self.support) * (np.pi / t)
        return (np.exp(-1j * phase) * self.probs).sum(axis=-1)


class UniformLaw(JitterLaw):
    def __init__(self, t_p: float):
        self.t_p = t_p

    def sample(self, u):
        return -self.t_p + 2.0 * self.t_p * np.asarray(u, dtype=float)

    def fourier(self, k, t):
        # np.sinc(x) = sin(pi x) / (pi x)
        return np.sinc(np.asarray(k, dtype=float) * self.t_p / t).astype(complex)

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) + self.t_p) / (2.0 * self.t_p), 0.0, 1.0)

    def density(self, x: float) -> float:
        return 1.0 / (2.0 * self.t_p) if -self.t_p <= x <= self.t_p else 0.0


class PiecewiseLaw(JitterLaw):
    def __init__(self, pieces: np.ndarray):
        pieces = pieces[pieces[:, 2] > 0]
        self.lo, self.hi, self.dens = pieces[:, 0], pieces[:, 1], pieces[:, 2]
        self._mass = self.dens * (self.hi - self.lo)
        self._cum = np.cumsum(self._mass)
        self._start = self._cum - self._mass

    def sample(self, u):
        u = np.asarray(u, dtype=float) * self._cum[-1]
        j = np.minimum(np.searchsorted(self._cum, u, side="right"), len(self.lo) - 1)
        v = self.lo[j] + (u - self._start[j]) / self.dens[j]
        return np.minimum(v, self.hi[j])

    def fourier(self, k, t):
        scalar = np.ndim(k) == 0
        k = np.atleast_1d(np.asarray(k, dtype=float))
        w = np.multiply.outer(k, np.ones_like(self.lo)) * (np.pi / t)
        safe = np.where(w == 0, 1.0, w)
        term = (np.exp(-1j * safe * self.lo) - np.exp(-1j * safe * self.hi)) / (1j * safe)
        term = np.where(w == 0, self.hi - self.lo, term)
        out = (term * self.dens).sum(axis=-1)
        return out[0] if scalar else out

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        span = np.clip(np.subtract.outer(x, self.lo), 0.0, self.hi - self.lo)
        return (span * self.dens).sum(axis=-1)

    def density(self, x: float) -> float:
        hit = (self.lo <= x) & (x < self.hi)
        return float(self.dens[hit].sum())

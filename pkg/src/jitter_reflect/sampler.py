"""Jittering with reflection, its baselines, and the uniformity checks.

Every sampler here is driven by a stream of uniforms from one PCG64
generator. A draw in ``[0, 1)`` becomes the initial offset ``u * t``
(``floor(u * t)`` in discrete mode) or, through the jitter's inverse CDF, a
jitter value. Bulk and one-at-a-time draws consume the stream identically, so
the streaming sampler, :func:`generate_schedule` and :func:`iter_offsets`
with a single chain all produce the same sequence for the same seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterator, NamedTuple

import numpy as np

from .jitter import JitterLaw, JitterSpec
from .seeding import make_rng

MODES = ("continuous", "discrete")
STRATEGIES = ("jwr", "fixed_rate", "random_offset", "iid_per_interval")

_CHUNK = 1 << 16


class InvalidConfigError(ValueError):
    """Raised with the full list of violated invariants."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{name}: {msg}" for name, msg in errors))


@dataclass(frozen=True)
class SamplingConfig:
    t: float
    t_p: float | None = None
    mode: str = "continuous"
    jitter: JitterSpec = field(default_factory=JitterSpec.uniform)

    @property
    def discrete(self) -> bool:
        return self.mode == "discrete"

    @cached_property
    def law(self) -> JitterLaw:
        return self.jitter.law(self.mode, self.t_p)

    def to_dict(self) -> dict[str, Any]:
        return {"mode": self.mode, "t": self.t, "t_p": self.t_p, "jitter": self.jitter.to_dict()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SamplingConfig:
        mode = data.get("mode", "continuous")
        t, t_p = data["t"], data.get("t_p")
        if mode == "discrete":
            # keep integer-valued floats from JSON as ints; anything else fails validation
            t = int(t) if float(t).is_integer() else t
            if t_p is not None and float(t_p).is_integer():
                t_p = int(t_p)
        return cls(t=t, t_p=t_p, mode=mode, jitter=JitterSpec.from_dict(data.get("jitter")))


def config_errors(config: SamplingConfig, strategy: str = "jwr") -> list[tuple[str, str]]:
    """Every violated config invariant as ``(name, message)`` pairs."""
    errs: list[tuple[str, str]] = []
    if config.mode not in MODES:
        return [("mode", f"mode must be one of {MODES}, got {config.mode!r}")]
    if strategy not in STRATEGIES:
        return [("strategy", f"strategy must be one of {STRATEGIES}, got {strategy!r}")]
    t, t_p = config.t, config.t_p
    if not isinstance(t, (int, float)) or not t > 0 or not math.isfinite(t):
        return [("t_range", f"t must be a positive number, got {t!r}")]
    if config.discrete and not isinstance(t, int):
        errs.append(("non_integer_discrete", f"discrete mode needs an integer t, got {t!r}"))
    if strategy != "jwr" and t_p is None:
        return errs
    if t_p is None or not 0 < t_p < t:
        errs.append(("t_p_range", f"t_p must lie in (0, t) = (0, {t}), got {t_p!r}"))
        return errs
    if config.discrete and not isinstance(t_p, int):
        errs.append(("non_integer_discrete", f"discrete mode needs an integer t_p, got {t_p!r}"))
    if errs or strategy != "jwr":
        return errs
    return config.jitter.errors(config.mode, t, t_p)


def validate_config(config: SamplingConfig, strategy: str = "jwr") -> SamplingConfig:
    errs = config_errors(config, strategy)
    if errs:
        raise InvalidConfigError(errs)
    return config


def reflect_offset(x, t, discrete: bool):
    """Fold a raw offset back into ``[0, t]`` (or ``{0, ..., t-1}``).

    The raw offset may overshoot by less than ``t``, so one reflection is
    enough. Boundary ties are in range in continuous mode.
    """
    if discrete:
        if x >= t:
            return 2 * t - x - 1
        if x < 0:
            return -x - 1
        return x
    if x > t:
        return 2 * t - x
    if x < 0:
        return -x
    return x


def reflect_offsets(x: np.ndarray, t, discrete: bool) -> np.ndarray:
    """Vectorized :func:`reflect_offset`."""
    if discrete:
        return np.where(x >= t, 2 * t - x - 1, np.where(x < 0, -x - 1, x))
    return np.where(x > t, 2 * t - x, np.where(x < 0, -x, x))


def reflect(b_raw, i: int, t, mode: str):
    """Reflect an absolute candidate timestamp into interval ``i``."""
    base = i * t
    return base + reflect_offset(b_raw - base, t, mode == "discrete")


def _initial_offset(u, t, discrete: bool):
    if discrete:
        return np.floor(np.asarray(u) * t).astype(np.int64)
    return np.asarray(u) * t


@dataclass
class SamplerState:
    """Position of the offset chain.

    ``rng`` is owned by the chain of states: :func:`next_sample` advances it
    in place, so a state must not be stepped twice.
    """

    i: int
    b: float | int
    rng: np.random.Generator

    def timestamp(self, t):
        return self.b + self.i * t


def init_sampler(config: SamplingConfig, seed: int) -> SamplerState:
    rng = make_rng(seed)
    b = _initial_offset(rng.random(), config.t, config.discrete)
    return SamplerState(0, b.item(), rng)


def next_sample(config: SamplingConfig, state: SamplerState) -> tuple[SamplerState, float | int]:
    v = config.law.sample(state.rng.random()).item()
    b = reflect_offset(state.b + v, config.t, config.discrete)
    new = SamplerState(state.i + 1, b, state.rng)
    return new, new.timestamp(config.t)


class JitterReflectSampler:
    """Endless stream of jittered-and-reflected timestamps."""

    def __init__(self, config: SamplingConfig, seed: int):
        self.config = validate_config(config)
        self.state = init_sampler(config, seed)
        self._started = False

    def __iter__(self) -> Iterator[float | int]:
        return self

    def __next__(self) -> float | int:
        if not self._started:
            self._started = True
        else:
            self.state, _ = next_sample(self.config, self.state)
        return self.state.timestamp(self.config.t)


@dataclass
class Schedule:
    timestamps: np.ndarray
    config: SamplingConfig
    seed: int | None = None
    strategy: str = "jwr"

    def __len__(self) -> int:
        return len(self.timestamps)

    def to_dict(self) -> dict[str, Any]:
        if self.config.discrete:
            stamps = [int(x) for x in self.timestamps]
        else:
            stamps = [float(format(x, ".12g")) for x in self.timestamps]
        return {
            "strategy": self.strategy,
            "mode": self.config.mode,
            "t": self.config.t,
            "t_p": self.config.t_p,
            "jitter": self.config.jitter.to_dict() if self.strategy == "jwr" else None,
            "seed": self.seed,
            "timestamps": stamps,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Schedule:
        config = SamplingConfig.from_dict(data)
        dtype = np.int64 if config.discrete else float
        return cls(
            np.asarray(data["timestamps"], dtype=dtype),
            config,
            data.get("seed"),
            data.get("strategy", "jwr"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> Schedule:
        return cls.from_dict(json.loads(Path(path).read_text()))


def _jwr_offsets(config: SamplingConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    t, discrete = config.t, config.discrete
    out = np.empty(n, dtype=np.int64 if discrete else float)
    b = _initial_offset(rng.random(), t, discrete).item()
    out[0] = b
    law = config.law
    pos = 1
    while pos < n:
        m = min(_CHUNK, n - pos)
        vs = law.sample(rng.random(m)).tolist()
        chunk = []
        for v in vs:
            x = b + v
            if discrete:
                b = 2 * t - x - 1 if x >= t else (-x - 1 if x < 0 else x)
            else:
                b = 2 * t - x if x > t else (-x if x < 0 else x)
            chunk.append(b)
        out[pos:pos + m] = chunk
        pos += m
    return out


def _absolute(offsets: np.ndarray, t) -> np.ndarray:
    return offsets + np.arange(len(offsets), dtype=offsets.dtype) * t


def generate_schedule(config: SamplingConfig, seed: int, n: int) -> Schedule:
    """The first ``n`` jittered-and-reflected timestamps for ``seed``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    validate_config(config)
    offsets = _jwr_offsets(config, make_rng(seed), n)
    return Schedule(_absolute(offsets, config.t), config, seed, "jwr")


def _baseline_offsets(strategy: str, t, discrete: bool, rng: np.random.Generator, n: int) -> np.ndarray:
    dtype = np.int64 if discrete else float
    if strategy == "fixed_rate":
        return np.zeros(n, dtype=dtype)
    if strategy == "random_offset":
        return np.full(n, _initial_offset(rng.random(), t, discrete), dtype=dtype)
    if strategy == "iid_per_interval":
        return _initial_offset(rng.random(n), t, discrete).astype(dtype)
    raise ValueError(f"unknown baseline strategy {strategy!r}")


def baseline_schedule(
    strategy: str,
    t,
    seed: int,
    n: int,
    mode: str = "continuous",
    t_p=None,
) -> Schedule:
    """Naive comparison samplers.

    ``fixed_rate`` samples ``i*t``; ``random_offset`` shifts that grid by one
    uniform draw; ``iid_per_interval`` draws every sample independently and
    uniformly inside its own interval.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    config = validate_config(SamplingConfig(t, t_p, mode), strategy)
    offsets = _baseline_offsets(strategy, t, config.discrete, make_rng(seed), n)
    return Schedule(_absolute(offsets, t), config, seed, strategy)


def build_schedule(strategy: str, config: SamplingConfig, seed: int, n: int) -> Schedule:
    if strategy == "jwr":
        return generate_schedule(config, seed, n)
    return baseline_schedule(strategy, config.t, seed, n, config.mode, config.t_p)


def iter_offsets(
    strategy: str,
    config: SamplingConfig,
    n_chains: int,
    rng: np.random.Generator,
) -> Iterator[np.ndarray]:
    """Advance ``n_chains`` independent offset chains in lockstep.

    Yields the offset array for interval 0, 1, 2, ... forever. The yielded
    array may be reused by the next step; copy it to keep it.
    """
    t, discrete = config.t, config.discrete
    if strategy == "fixed_rate":
        b = np.zeros(n_chains, dtype=np.int64 if discrete else float)
        while True:
            yield b
    if strategy == "iid_per_interval":
        while True:
            yield _initial_offset(rng.random(n_chains), t, discrete)
    b = _initial_offset(rng.random(n_chains), t, discrete)
    if strategy == "random_offset":
        while True:
            yield b
    if strategy != "jwr":
        raise ValueError(f"unknown strategy {strategy!r}")
    law = config.law
    while True:
        yield b
        b = reflect_offsets(b + law.sample(rng.random(n_chains)), t, discrete)


class Violation(NamedTuple):
    index: int
    value: float


def _tolerance(schedule: Schedule, tol: float | None) -> float:
    if tol is not None:
        return tol
    if schedule.config.discrete:
        return 0.0
    # covers float rounding and the 12-significant-digit file format
    top = float(np.max(np.abs(schedule.timestamps))) if len(schedule) else 0.0
    return 1e-11 * top + 1e-12 * schedule.config.t


def check_u1(schedule: Schedule, t_p=None, tol: float | None = None) -> list[Violation]:
    """Gaps deviating from ``t`` by more than ``t_p``, as ``(index, gap)``."""
    t_p = schedule.config.t_p if t_p is None else t_p
    if t_p is None:
        raise ValueError("check_u1 needs t_p")
    gaps = np.diff(schedule.timestamps)
    bad = np.flatnonzero(np.abs(gaps - schedule.config.t) > t_p + _tolerance(schedule, tol))
    return [Violation(int(i), gaps[i].item()) for i in bad]


def jwr_center_offset(config: SamplingConfig) -> float:
    """The grid offset ``o`` for which jittering with reflection meets U2."""
    return (config.t - 1) / 2 if config.discrete else config.t / 2


def check_u2(schedule: Schedule, offset: float, tol: float | None = None) -> list[Violation]:
    """Samples farther than ``t/2`` from ``i*t + offset``, as ``(index, deviation)``."""
    t = schedule.config.t
    idx = np.arange(len(schedule))
    dev = schedule.timestamps - (idx * t + offset)
    bad = np.flatnonzero(np.abs(dev) > t / 2 + _tolerance(schedule, tol))
    return [Violation(int(i), float(dev[i])) for i in bad]

"""Insertion attacks, detection trials and miss-probability estimation.

An attack is a set ``S`` of timestamps. A trial is a miss when the sampled
schedule never lands in ``S`` before the horizon. Miss probabilities come
from two routes: Monte Carlo over fresh schedules, and (discrete mode) an
exact forward recursion over the offset chain.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import stats

from .analysis import InsufficientDataError, transition_matrix
from .sampler import SamplingConfig, build_schedule, iter_offsets
from .seeding import derive_seed, make_rng

Z95 = 1.959963984540054
BLOCK_SIZE = 4096
MIN_TRIALS = 100
MAX_DP_HORIZON = 10**6


@dataclass(frozen=True)
class AttackSet:
    """Adversarial timestamps within ``[0, horizon)``.

    Discrete sets hold sorted unique integer ``points``. Continuous sets hold
    disjoint half-open intervals ``[starts[j], ends[j])``.
    """

    horizon: float
    discrete: bool
    points: np.ndarray | None = None
    starts: np.ndarray | None = None
    ends: np.ndarray | None = None
    spec: Mapping[str, Any] = field(default_factory=dict)

    def measure(self, u: float | None = None) -> float:
        """Cardinality (discrete) or Lebesgue measure of ``S`` within ``[0, u)``."""
        u = self.horizon if u is None else min(u, self.horizon)
        if self.discrete:
            return int(np.searchsorted(self.points, u, side="left"))
        return float(np.clip(np.minimum(self.ends, u) - self.starts, 0.0, None).sum())

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x)
        if self.discrete:
            if len(self.points) == 0:
                return np.zeros(x.shape, dtype=bool)
            idx = np.minimum(np.searchsorted(self.points, x), len(self.points) - 1)
            return self.points[idx] == x
        if len(self.starts) == 0:
            return np.zeros(x.shape, dtype=bool)
        idx = np.searchsorted(self.starts, x, side="right") - 1
        return (idx >= 0) & (x < self.ends[np.maximum(idx, 0)])

    def interval_mask(self, t: int, n_intervals: int) -> np.ndarray:
        """``mask[i, b]`` is true when ``i*t + b`` is in ``S`` (discrete only)."""
        mask = np.zeros((n_intervals, t), dtype=bool)
        pts = self.points[self.points < n_intervals * t]
        mask[pts // t, pts % t] = True
        return mask

    def to_dict(self) -> dict[str, Any]:
        return dict(self.spec, horizon=self.horizon)


def _merge(starts: np.ndarray, ends: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(starts, kind="stable")
    s_out: list[float] = []
    e_out: list[float] = []
    for s, e in zip(starts[order].tolist(), ends[order].tolist()):
        if e <= s:
            continue
        if s_out and s <= e_out[-1]:
            e_out[-1] = max(e_out[-1], e)
        else:
            s_out.append(s)
            e_out.append(e)
    return np.array(s_out, dtype=float), np.array(e_out, dtype=float)


def build_attack_set(spec: Mapping[str, Any], horizon: float | None = None, mode: str = "discrete", allow_empty: bool = False) -> AttackSet:
    """Materialize an attack description.

    ``{"kind": "periodic", "period", "phase", "width"}`` inserts
    ``[k*period + phase, k*period + phase + width)`` for every ``k``;
    ``{"kind": "explicit", "timestamps": [...]}`` (discrete) or
    ``{"kind": "explicit", "intervals": [[lo, hi], ...]}`` (continuous) lists
    the set; ``{"kind": "complement", "timestamps": [...]}`` is every
    instant of ``[0, horizon)`` except the given schedule points.
    """
    horizon = spec.get("horizon") if horizon is None else horizon
    if horizon is None or not horizon > 0:
        raise ValueError("attack horizon must be positive")
    discrete = mode == "discrete"
    kind = spec.get("kind")
    if kind == "periodic":
        period, phase = spec["period"], spec.get("phase", 0)
        width = spec.get("width", 1)
        if not period > 0:
            raise ValueError("period must be positive")
        if not 0 <= phase < period:
            raise ValueError(f"phase must lie in [0, period), got {phase!r}")
        if discrete and (width < 1 or int(width) != width or int(period) != period or int(phase) != phase):
            raise ValueError("discrete periodic attacks need integer period, phase and width >= 1")
        if not width > 0:
            raise ValueError("width must be positive")
        k = np.arange(int(math.ceil(horizon / period)) + 1)
        if discrete:
            pts = (k[:, None] * int(period) + int(phase) + np.arange(int(width))[None, :]).ravel()
            pts = np.unique(pts[pts < horizon])
            attack = AttackSet(horizon, True, points=pts.astype(np.int64))
        else:
            s = k * period + phase
            s, e = _merge(s, np.minimum(s + width, horizon))
            attack = AttackSet(horizon, False, starts=s, ends=e)
    elif kind == "explicit":
        if discrete:
            pts = np.unique(np.asarray(spec.get("timestamps", []), dtype=np.int64))
            pts = pts[(pts >= 0) & (pts < horizon)]
            attack = AttackSet(horizon, True, points=pts)
        else:
            iv = np.asarray(spec.get("intervals", []), dtype=float).reshape(-1, 2)
            s, e = _merge(np.clip(iv[:, 0], 0, horizon), np.clip(iv[:, 1], 0, horizon))
            attack = AttackSet(horizon, False, starts=s, ends=e)
    elif kind == "complement":
        sched = np.unique(np.asarray(spec.get("timestamps", [])))
        if discrete:
            pts = np.setdiff1d(np.arange(int(math.ceil(horizon)), dtype=np.int64), sched.astype(np.int64))
            attack = AttackSet(horizon, True, points=pts)
        else:
            cuts = np.concatenate([[0.0], sched[(sched >= 0) & (sched < horizon)], [horizon]])
            s = np.where(np.isin(cuts[:-1], sched), np.nextafter(cuts[:-1], np.inf), cuts[:-1])
            s, e = _merge(s, cuts[1:])
            attack = AttackSet(horizon, False, starts=s, ends=e)
    else:
        raise ValueError(f"unknown attack kind {kind!r}")
    spec_clean = {k: v for k, v in spec.items() if k != "horizon"}
    attack = AttackSet(horizon, discrete, attack.points, attack.starts, attack.ends, spec_clean)
    if not allow_empty and attack.measure() == 0:
        raise ValueError("attack set is empty within the horizon")
    return attack


class TrialOutcome(NamedTuple):
    detected: bool
    first_hit: float | int | None
    measure_covered: float


def _n_intervals(horizon: float, t) -> int:
    return int(math.ceil(horizon / t))


def run_trial(strategy: str, config: SamplingConfig, attack: AttackSet, seed: int) -> TrialOutcome:
    """Sample one schedule up to the horizon and intersect it with ``S``."""
    n = max(_n_intervals(attack.horizon, config.t), 1)
    ts = build_schedule(strategy, config, seed, n).timestamps
    ts = ts[ts < attack.horizon]
    hits = ts[attack.contains(ts)]
    first = hits[0].item() if len(hits) else None
    return TrialOutcome(first is not None, first, attack.measure())


def wilson_interval(misses: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("need at least one trial")
    p = misses / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if misses == 0 else max(0.0, center - half)
    hi = 1.0 if misses == n else min(1.0, center + half)
    return lo, hi


class ExpFit(NamedTuple):
    slope: float
    intercept: float
    r2: float
    n_used: int
    n_excluded: int
    flag: str


def fit_exponential(measures: Sequence[float], miss: Sequence[float]) -> ExpFit:
    """Least squares of ``log(miss)`` on measure.

    Zero estimates are excluded and counted. A constant or increasing series
    is flagged ``"no decay"``.
    """
    x = np.asarray(measures, dtype=float)
    y = np.asarray(miss, dtype=float)
    keep = y > 0
    if keep.sum() < 4:
        raise InsufficientDataError(f"need at least 4 positive miss estimates, got {int(keep.sum())}")
    x, ly = x[keep], np.log(y[keep])
    excluded = int((~keep).sum())
    if np.ptp(ly) == 0:
        return ExpFit(0.0, float(ly[0]), float("nan"), len(x), excluded, "no decay")
    res = stats.linregress(x, ly)
    flag = "ok" if res.slope < 0 else "no decay"
    return ExpFit(float(res.slope), float(res.intercept), float(res.rvalue**2), len(x), excluded, flag)


@dataclass
class MissPoint:
    horizon: float
    measure: float
    trials: int
    misses: int
    p_hat: float
    wilson_lo: float
    wilson_hi: float
    exact: float | None = None


@dataclass
class MissCurve:
    strategy: str
    points: list[MissPoint]
    fit: ExpFit | None = None
    fit_error: str | None = None

    def fit_summary(self) -> dict[str, Any]:
        if self.fit is None:
            return {"flag": self.fit_error or "not fitted"}
        return self.fit._asdict()


def _first_hit_intervals(strategy, config, attack, n_chains, rng, n_intervals) -> np.ndarray:
    """Interval index of each chain's first detection (``n_intervals`` if none)."""
    t = config.t
    first = np.full(n_chains, n_intervals, dtype=np.int64)
    alive = np.ones(n_chains, dtype=bool)
    mask = attack.interval_mask(t, n_intervals) if attack.discrete else None
    stream = iter_offsets(strategy, config, n_chains, rng)
    for i in range(n_intervals):
        b = next(stream)
        if mask is not None:
            hit = mask[i][b]
        else:
            a = b + i * t
            hit = attack.contains(a) & (a < attack.horizon)
        new = hit & alive
        first[new] = i
        alive &= ~hit
        if not alive.any():
            break
    return first


def simulate_first_hits(
    strategy: str,
    config: SamplingConfig,
    attack: AttackSet,
    trials: int,
    master_seed: int,
    block_size: int = BLOCK_SIZE,
    max_workers: int | None = None,
) -> np.ndarray:
    """First-detection interval index per trial, for ``trials`` fresh schedules.

    Trials are simulated in fixed-size blocks, block ``j`` seeded from
    ``(master_seed, "miss-block", j)``. Adding trials never changes earlier
    ones, and running blocks on a thread pool gives the same result as
    running them in order.
    """
    n_intervals = _n_intervals(attack.horizon, config.t)
    n_blocks = -(-trials // block_size)

    def block(j: int) -> np.ndarray:
        rng = make_rng(derive_seed(master_seed, "miss-block", j))
        return _first_hit_intervals(strategy, config, attack, block_size, rng, n_intervals)

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            parts = list(pool.map(block, range(n_blocks)))
    else:
        parts = [block(j) for j in range(n_blocks)]
    return np.concatenate(parts)[:trials]


def default_horizons(attack: AttackSet, t, points: int = 8) -> list[float]:
    n = _n_intervals(attack.horizon, t)
    ks = sorted({max(1, round(n * (j + 1) / points)) for j in range(points)})
    return [k * t for k in ks]


def estimate_miss_probability(
    strategy: str,
    config: SamplingConfig,
    attack: AttackSet,
    trials: int,
    master_seed: int,
    horizons: Sequence[float] | None = None,
    exact: bool = False,
    block_size: int = BLOCK_SIZE,
    max_workers: int | None = None,
) -> MissCurve:
    """Miss probability at each horizon with 95% Wilson intervals.

    All horizons share the same trials: a trial misses at ``u`` when its
    first detection falls at or beyond ``u``. With ``exact=True`` (discrete
    only) every point also carries the exact recursion value.
    """
    if trials < MIN_TRIALS:
        raise ValueError(f"need at least {MIN_TRIALS} trials, got {trials}")
    t = config.t
    horizons = sorted(horizons) if horizons is not None else default_horizons(attack, t)
    if any(u > attack.horizon or u <= 0 for u in horizons):
        raise ValueError("horizons must lie in (0, attack horizon]")
    if any(not float(u / t).is_integer() for u in horizons):
        raise ValueError("horizons must be whole multiples of t")
    first = simulate_first_hits(strategy, config, attack, trials, master_seed, block_size, max_workers)
    curve = exact_miss_curve(strategy, config, attack) if exact else None
    pts = []
    for u in horizons:
        k = _n_intervals(u, t)
        misses = int(np.sum(first >= k))
        lo, hi = wilson_interval(misses, trials)
        dp = float(curve[k - 1]) if curve is not None else None
        pts.append(MissPoint(u, attack.measure(u), trials, misses, misses / trials, lo, hi, dp))
    result = MissCurve(strategy, pts)
    try:
        result.fit = fit_exponential([p.measure for p in pts], [p.p_hat for p in pts])
    except InsufficientDataError as exc:
        result.fit_error = str(exc)
    return result


def chain_model(strategy: str, config: SamplingConfig) -> tuple[np.ndarray, np.ndarray]:
    """Initial offset law and transition matrix of a discrete strategy."""
    if not config.discrete:
        raise ValueError("exact chain models are for discrete mode")
    t = int(config.t)
    uniform = np.full(t, 1.0 / t)
    if strategy == "jwr":
        return uniform, transition_matrix(config)
    if strategy == "fixed_rate":
        init = np.zeros(t)
        init[0] = 1.0
        return init, np.eye(t)
    if strategy == "random_offset":
        return uniform, np.eye(t)
    if strategy == "iid_per_interval":
        return uniform, np.full((t, t), 1.0 / t)
    raise ValueError(f"unknown strategy {strategy!r}")


def _survival(init: np.ndarray, P: np.ndarray, mask: np.ndarray) -> np.ndarray:
    alive = init.astype(float).copy()
    out = np.empty(len(mask))
    for i, row in enumerate(mask):
        if i:
            alive = alive @ P
        alive[row] = 0.0
        out[i] = alive.sum()
    return out


def exact_miss_curve(strategy: str, config: SamplingConfig, attack: AttackSet, horizon: float | None = None) -> np.ndarray:
    """Exact miss probability after each interval, by forward recursion.

    Carries the probability of "no hit so far" per offset; offsets that land
    in ``S`` are pruned interval by interval.
    """
    if not attack.discrete:
        raise ValueError("exact miss probabilities are for discrete attacks")
    horizon = attack.horizon if horizon is None else horizon
    if horizon > MAX_DP_HORIZON:
        raise ValueError(f"horizon {horizon} exceeds the exact-recursion limit {MAX_DP_HORIZON}")
    init, P = chain_model(strategy, config)
    n = _n_intervals(horizon, config.t)
    clipped = attack.points[attack.points < horizon]
    sub = AttackSet(horizon, True, points=clipped)
    return _survival(init, P, sub.interval_mask(int(config.t), n))


def exact_miss_dp(strategy: str, config: SamplingConfig, attack: AttackSet, horizon: float | None = None) -> float:
    curve = exact_miss_curve(strategy, config, attack, horizon)
    return float(curve[-1]) if len(curve) else 1.0


def periodic_mask(t: int, n_intervals: int, phase: int, width: int = 1) -> np.ndarray:
    """Hit mask of a period-``t`` attack on ``n_intervals`` consecutive intervals."""
    mask = np.zeros((n_intervals, t), dtype=bool)
    for j in range(width):
        off = phase + j
        carry, b = divmod(off, t)
        mask[carry:, b] = True
    return mask


@dataclass
class PhaseSearchResult:
    strategy: str
    budget: int
    n_intervals: int
    width: int
    evasion_rate: float
    best_phase: dict[int, int]
    phase_evasion: np.ndarray
    observed_law: np.ndarray
    simulated: float | None = None
    simulated_interval: tuple[float, float] | None = None


def phase_search_attack(
    strategy: str,
    config: SamplingConfig,
    budget: int,
    n_intervals: int,
    width: int = 1,
    trials: int = 0,
    seed: int = 0,
) -> PhaseSearchResult:
    """Best fixed-phase periodic insertion after observing ``budget`` samples.

    The attacker watches the first ``budget`` sampled timestamps of the
    victim's run, then commits to one phase for a period-``t`` insertion of
    ``width`` frames per interval over the next ``n_intervals`` intervals.
    The phase is chosen to maximize the exact probability of never being
    sampled given what was seen. Because every strategy is a Markov chain on
    offsets, only the last observed offset matters.

    ``phase_evasion[b, phi]`` is the evasion probability of phase ``phi``
    given last observed offset ``b`` (a single row, the prior, when
    ``budget == 0``). With ``trials > 0`` the chosen policy is also replayed
    against fresh simulated runs.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    if not 1 <= width <= config.t:
        raise ValueError("width must lie in [1, t]")
    init, P = chain_model(strategy, config)
    t = int(config.t)
    masks = [periodic_mask(t, n_intervals, phi, width) for phi in range(t)]
    if budget == 0:
        observed = np.ones(1)
        starts = init[None, :]
    else:
        observed = init @ np.linalg.matrix_power(P, budget - 1)
        starts = P
    table = np.array([[_survival(start, P, m)[-1] for m in masks] for start in starts])
    best = table.argmax(axis=1)
    evasion = float(observed @ table.max(axis=1))
    result = PhaseSearchResult(
        strategy, budget, n_intervals, width, evasion,
        {int(b): int(phi) for b, phi in enumerate(best)}, table, observed,
    )
    if trials:
        result.simulated, result.simulated_interval = _replay_policy(strategy, config, budget, n_intervals, width, best, trials, seed)
    return result


def _replay_policy(strategy, config, budget, n_intervals, width, best, trials, seed):
    t = int(config.t)
    rng = make_rng(derive_seed(seed, "phase-search", 0))
    stream = iter_offsets(strategy, config, trials, rng)
    last = np.zeros(trials, dtype=np.int64)
    for _ in range(budget):
        last = next(stream).copy()
    phase = best[last] if budget else np.full(trials, best[0])
    caught = np.zeros(trials, dtype=bool)
    for i in range(n_intervals):
        b = next(stream)
        for j in range(width):
            carry, off = divmod(phase + j, t)
            caught |= (carry <= i) & (b == off)
    evaded = int((~caught).sum())
    return evaded / trials, wilson_interval(evaded, trials)

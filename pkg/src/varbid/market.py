"""Hourly reactive power market with quadratic dispatch and nodal pricing.

Producers submit two-part bids (b1 $/unit operation cost, b2 $/unit^2 lost
opportunity cost; one unit = 100 MVAr). The operator allocates incremental
quantities x_i in [0, q_max_i] that meet the hourly requirement D at
minimum claimed cost sum_i b1_i x_i + b2_i x_i^2. The allocation solves the
shared-marginal-cost condition by bisection on the shadow price lambda with
x_i(lambda) = clip((lambda - b1_i) / (2 b2_i), 0, q_max_i); each producer
is paid its own marginal bid cost at the dispatched quantity (nodal price),
which equals lambda for strictly interior units.

The environment pits one learning producer against rivals following either
a demand-scaled markup rule (strategy "b1") or truthful cost bidding
("b2"). Rewards are profits relative to a truthful-bid counterfactual
cleared against identical rival bids and demand, so the neutral action
(1, 1) earns exactly zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

RIVAL_STRATEGIES = ("b1", "b2")
B1_NOISE = 0.05  # uniform demand-observation noise for strategy b1 rivals


class InfeasibleDemand(RuntimeError):
    """Requirement exceeds total incremental capacity."""

    def __init__(self, demand: float, max_deliverable: float):
        super().__init__(f"requirement {demand} exceeds deliverable capacity {max_deliverable}")
        self.demand = demand
        self.max_deliverable = max_deliverable


@dataclass(frozen=True)
class GencoParams:
    """True cost data for one producer.

    c1: $ per unit operation cost; c2: $ per unit^2 lost opportunity cost;
    bg: base generation supplied regardless of dispatch; q_max: maximum
    incremental quantity. Quantities are in units of 100 MVAr.
    """

    id: int
    c1: float
    c2: float
    bg: float
    q_max: float

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError(f"genco {self.id}: cost coefficients must be positive")
        if self.bg < 0 or self.q_max <= 0:
            raise ValueError(f"genco {self.id}: bg must be >= 0 and q_max > 0")


# Six-producer system: true costs in $/unit and $/unit^2, base generation
# converted from MVAr to units of 100 MVAr, default 0.5 unit incremental cap.
DEFAULT_GENCOS = (
    GencoParams(1, 0.73, 0.30, 0.07500, 0.5),
    GencoParams(2, 0.68, 0.39, 0.03000, 0.5),
    GencoParams(3, 0.75, 0.43, 0.03125, 0.5),
    GencoParams(4, 0.60, 0.50, 0.02435, 0.5),
    GencoParams(5, 0.75, 0.90, 0.02000, 0.5),
    GencoParams(6, 0.73, 0.38, 0.02235, 0.5),
)


def load_gencos(path: str) -> list[GencoParams]:
    """Read a producer table CSV with columns id, c1, c2, bg, q_max."""
    gencos = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            gencos.append(GencoParams(int(row["id"]), float(row["c1"]), float(row["c2"]),
                                      float(row["bg"]), float(row["q_max"])))
    if not gencos:
        raise ValueError(f"no producer rows in {path}")
    return gencos


@dataclass(frozen=True)
class Bid:
    """Claimed operation cost b1 and lost opportunity cost b2."""

    b1: float
    b2: float

    def __post_init__(self):
        if self.b1 < 0 or self.b2 < 0:
            raise ValueError(f"bid coefficients must be nonnegative, got {self}")


@dataclass
class MarketOutcome:
    """One clearing: per-producer dispatched totals and nodal prices."""

    qg: np.ndarray          # total quantity per producer (bg + incremental)
    prices: np.ndarray      # nodal price per producer
    shadow_price: float     # clearing marginal price lambda
    demand: float           # requirement served


# ---------------------------------------------------------------------------
# Dispatch solver
# ---------------------------------------------------------------------------

_BISECT_ITERS = 60


def _solve_dispatch(b1, b2, qmax, demand):
    """Allocate incremental quantities by bisection on the shadow price.

    Plain-float scalar path: called twice per environment step, so it avoids
    numpy overhead. Returns (x list, lambda).
    """
    n = len(b1)
    data = tuple(zip(b1, b2, qmax))
    lo = min(b1)
    hi = lo
    for bb, cc, qq in data:
        m = bb + 2.0 * cc * qq
        if m > hi:
            hi = m
    hi += 1.0  # strictly above every marginal cost: full capacity at hi
    for _ in range(_BISECT_ITERS):
        lam = 0.5 * (lo + hi)
        total = 0.0
        for bb, cc, qq in data:
            if cc > 0.0:
                xi = (lam - bb) / (cc + cc)
                if xi > 0.0:
                    total += qq if xi > qq else xi
            elif lam >= bb:
                total += qq
        if total < demand:
            lo = lam
        else:
            hi = lam
    lam = 0.5 * (lo + hi)
    gap = max(1e-9, hi - lo)

    # Zero-curvature units are step functions of the price: classify them at
    # the converged price (full below it, idle above it, marginal inside the
    # bisection gap). Marginal ones are filled with whatever the priced-in
    # units leave over, which is the allocation the shared-marginal-cost
    # condition prescribes at the jump.
    x = [0.0] * n
    marginal = []
    fixed_total = 0.0
    for k, (bb, cc, qq) in enumerate(data):
        if cc == 0.0:
            if bb < lam - gap:
                x[k] = qq
                fixed_total += qq
            elif bb <= lam + gap:
                marginal.append(k)

    def fill_curved(price):
        total = 0.0
        slope = 0.0
        for k, (bb, cc, qq) in enumerate(data):
            if cc > 0.0:
                xi = (price - bb) / (cc + cc)
                if xi <= 0.0:
                    xi = 0.0
                elif xi >= qq:
                    xi = qq
                else:
                    slope += 0.5 / cc
                x[k] = xi
                total += xi
        return total, slope

    curved_total, slope = fill_curved(lam)
    residual = demand - fixed_total - curved_total
    for k in marginal:
        if residual <= 1e-15:
            break
        take = qmax[k] if qmax[k] < residual else residual
        x[k] = take
        residual -= take
    # Exact balance repair along strictly interior curved units.
    for _ in range(3):
        if -1e-12 <= residual <= 1e-12 or slope <= 0.0:
            break
        lam += residual / slope
        curved_total, slope = fill_curved(lam)
        residual = demand - fixed_total - curved_total - sum(x[k] for k in marginal)
    return x, lam


def clear_market(bids, demand: float, gencos) -> MarketOutcome:
    """Clear one hour: minimize claimed cost of meeting the requirement.

    Raises InfeasibleDemand (carrying the deliverable maximum) when the
    requirement exceeds total incremental capacity.
    """
    if demand < 0:
        raise ValueError(f"requirement must be nonnegative, got {demand}")
    if len(bids) != len(gencos):
        raise ValueError(f"{len(bids)} bids for {len(gencos)} producers")
    b1 = [float(b.b1) for b in bids]
    b2 = [float(b.b2) for b in bids]
    qmax = [g.q_max for g in gencos]
    total_cap = sum(qmax)
    if demand > total_cap + 1e-12:
        raise InfeasibleDemand(demand, total_cap)
    if demand == 0.0:
        x = [0.0] * len(gencos)
        lam = min(b1)
    else:
        x, lam = _solve_dispatch(b1, b2, qmax, demand)
    qg = np.array([g.bg + xi for g, xi in zip(gencos, x)])
    prices = np.array([b1i + 2.0 * b2i * xi for b1i, b2i, xi in zip(b1, b2, x)])
    return MarketOutcome(qg=qg, prices=prices, shadow_price=lam, demand=demand)


def clear_market_batch(b1: np.ndarray, b2: np.ndarray, qmax: np.ndarray,
                       demand: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized dispatch for (T, n) bid arrays; returns (x (T, n), lambda (T,)).

    Rows with purely quadratic bids run a vectorized bisection; rows holding
    any zero-curvature bid fall back to the scalar solver, which handles the
    step allocations those bids produce.
    """
    b1 = np.asarray(b1, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    demand = np.asarray(demand, dtype=float)
    T, n = b1.shape
    cap = np.broadcast_to(np.asarray(qmax, dtype=float), (T, n))
    total_cap = cap.sum(axis=1)
    if np.any(demand < 0):
        raise ValueError("requirement must be nonnegative")
    bad = demand > total_cap + 1e-12
    if np.any(bad):
        t = int(np.argmax(bad))
        raise InfeasibleDemand(float(demand[t]), float(total_cap[t]))
    flat_rows = np.nonzero((b2 <= 0.0).any(axis=1))[0]

    safe_b2 = np.where(b2 > 0.0, b2, 1.0)
    lo = b1.min(axis=1)
    hi = np.maximum((b1 + 2.0 * b2 * cap).max(axis=1), lo) + 1.0

    def alloc(lam):
        return np.clip((lam[:, None] - b1) / (2.0 * safe_b2), 0.0, cap)

    for _ in range(_BISECT_ITERS):
        lam = 0.5 * (lo + hi)
        low = alloc(lam).sum(axis=1) < demand
        lo = np.where(low, lam, lo)
        hi = np.where(low, hi, lam)
    lam = 0.5 * (lo + hi)
    x = alloc(lam)
    for _ in range(3):
        residual = demand - x.sum(axis=1)
        interior = (b2 > 0.0) & (x > 0.0) & (x < cap)
        slope = np.where(interior, 0.5 / safe_b2, 0.0).sum(axis=1)
        move = (np.abs(residual) > 1e-12) & (slope > 0.0)
        if not np.any(move):
            break
        lam = np.where(move, lam + residual / np.where(slope > 0.0, slope, 1.0), lam)
        x = alloc(lam)
    for t in flat_rows:
        xs, ls = _solve_dispatch(list(b1[t]), list(b2[t]), list(cap[t]), float(demand[t]))
        x[t] = xs
        lam[t] = ls
    x[demand == 0.0] = 0.0
    return x, lam


def profit(price: float, qg: float, genco: GencoParams) -> float:
    """Producer profit: revenue at the nodal price minus true incremental cost."""
    inc = qg - genco.bg
    return price * qg - genco.c1 * inc - genco.c2 * inc * inc


# ---------------------------------------------------------------------------
# Requirement series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DemandConfig:
    """Synthetic hourly requirement profile constants.

    The base level is calibrated so the peak requirement reaches
    peak_units * participation: peak_units is the system reactive peak in
    100 MVAr units and participation the share procured on the market.
    """

    peak_units: float = 1.072
    participation: float = 0.6
    daily_amplitude: float = 0.45
    weekly_amplitude: float = 0.15
    noise_amplitude: float = 0.05


@dataclass
class DemandSeries:
    """Hourly requirement values plus the [0, 1] normalization d_t."""

    values: np.ndarray
    normalized: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


def demand_profile(episode_steps: int, seed: int,
                   config: DemandConfig = DemandConfig()) -> DemandSeries:
    """Seeded requirement series: base * (1 + daily + weekly sinusoids + noise).

    Values are clipped at zero; normalization divides by the series maximum.
    Needs at least 49 steps so two full days of history exist for state lags.
    """
    if episode_steps < 49:
        raise ValueError(f"episode needs >= 49 steps for two days of history, got {episode_steps}")
    rng = np.random.default_rng(seed)
    t = np.arange(episode_steps)
    amp_sum = 1.0 + config.daily_amplitude + config.weekly_amplitude + config.noise_amplitude
    base = config.peak_units * config.participation / amp_sum
    shape = (1.0
             + config.daily_amplitude * np.sin(2.0 * np.pi * (t - 9.0) / 24.0)
             + config.weekly_amplitude * np.sin(2.0 * np.pi * t / 168.0)
             + rng.uniform(-config.noise_amplitude, config.noise_amplitude, episode_steps))
    values = np.maximum(base * shape, 0.0)
    peak = values.max()
    normalized = values / peak if peak > 0 else np.zeros_like(values)
    return DemandSeries(values=values, normalized=normalized)


# ---------------------------------------------------------------------------
# Rival bidding
# ---------------------------------------------------------------------------

def rival_bids(strategy: str, genco: GencoParams, d_norm: float,
               rng: np.random.Generator) -> Bid:
    """Bid for a non-learning producer.

    "b1": markup scaled by a noisy view of normalized demand,
          (2 d c1, 5 d c2) with d = clip(d_norm + U(-0.05, 0.05), 0, 1).
    "b2": truthful (c1, c2).
    """
    if not 0.0 <= d_norm <= 1.0:
        raise ValueError(f"d_norm must be in [0, 1], got {d_norm}")
    if strategy == "b2":
        return Bid(genco.c1, genco.c2)
    if strategy == "b1":
        d = d_norm + rng.uniform(-B1_NOISE, B1_NOISE)
        d = min(max(d, 0.0), 1.0)
        return Bid(2.0 * d * genco.c1, 5.0 * d * genco.c2)
    raise ValueError(f"unknown rival strategy {strategy!r}")


# ---------------------------------------------------------------------------
# Environment
# ---------------------------------------------------------------------------

class EnvStep(NamedTuple):
    reward: float
    outcome: MarketOutcome | None
    done: bool
    info: dict


@dataclass
class ReactiveMarketEnv:
    """Episode of hourly clearings with one learning producer.

    Each step takes the learner's bid magnifications (a1, a2) in [1, 5],
    builds its bid (a1 c1, a2 c2), draws rival bids, clears the market
    twice (submitted bid and truthful counterfactual against identical
    rivals and demand) and returns the profit difference as the reward.

    ``reset(seed)`` regenerates the requirement series with a one-day
    lead-in so the requirement forecaster has a full window before the
    first market hour, and returns those lead-in total quantities.
    """

    gencos: tuple = DEFAULT_GENCOS
    learner: int = 0                       # index into gencos
    rival_strategy: str = "b1"
    demand_config: DemandConfig = field(default_factory=DemandConfig)
    episode_steps: int = 720
    lead_in: int = 24

    def __post_init__(self):
        if not 0 <= self.learner < len(self.gencos):
            raise ValueError(f"learner index {self.learner} outside producer list")
        if self.rival_strategy not in RIVAL_STRATEGIES:
            raise ValueError(f"unknown rival strategy {self.rival_strategy!r}")
        if self.episode_steps < 25:
            raise ValueError("episode needs at least 25 steps")
        self._t = len(self)  # unusable until reset
        self._series: DemandSeries | None = None

    def __len__(self) -> int:
        return self.episode_steps

    @property
    def t(self) -> int:
        return self._t

    @property
    def demand_values(self) -> np.ndarray:
        return self._values

    @property
    def base_total(self) -> float:
        return sum(g.bg for g in self.gencos)

    def reset(self, seed: int) -> np.ndarray:
        """Regenerate the requirement series; returns lead-in total quantities."""
        full = demand_profile(self.episode_steps + self.lead_in, seed, self.demand_config)
        self._values = full.values[self.lead_in:]
        self._d_norm = full.normalized[self.lead_in:]
        self._lead_values = full.values[:self.lead_in]
        self._series = full
        self._rng = np.random.default_rng([seed, 1])
        self._t = 0
        return self.base_total + self._lead_values.copy()

    def step(self, action: tuple[float, float]) -> EnvStep:
        a1, a2 = float(action[0]), float(action[1])
        if not (1.0 <= a1 <= 5.0 and 1.0 <= a2 <= 5.0):
            raise ValueError(f"bid magnifications must lie in [1, 5], got ({a1}, {a2})")
        if self._series is None:
            raise RuntimeError("call reset() before step()")
        if self._t >= self.episode_steps:
            return EnvStep(0.0, None, True, {"exhausted": True})

        t = self._t
        demand = float(self._values[t])
        d_norm = float(self._d_norm[t])
        n = len(self.gencos)
        b1 = [0.0] * n
        b2 = [0.0] * n
        for j, g in enumerate(self.gencos):
            if j == self.learner:
                continue
            bid = rival_bids(self.rival_strategy, g, d_norm, self._rng)
            b1[j], b2[j] = bid.b1, bid.b2
        me = self.gencos[self.learner]
        bids_actual = [Bid(b1[j], b2[j]) if j != self.learner else Bid(a1 * me.c1, a2 * me.c2)
                       for j in range(n)]
        bids_truthful = [Bid(b1[j], b2[j]) if j != self.learner else Bid(me.c1, me.c2)
                         for j in range(n)]
        outcome = clear_market(bids_actual, demand, self.gencos)
        baseline = clear_market(bids_truthful, demand, self.gencos)

        k = self.learner
        p = profit(float(outcome.prices[k]), float(outcome.qg[k]), me)
        p_base = profit(float(baseline.prices[k]), float(baseline.qg[k]), me)
        reward = p - p_base

        self._t += 1
        info = {
            "t": t,
            "demand": demand,
            "d_norm": d_norm,
            "total_quantity": float(outcome.qg.sum()),
            "profit": p,
            "baseline_profit": p_base,
            "baseline_payment": float(baseline.prices[k] * baseline.qg[k]),
            "baseline_outcome": baseline,
            "bids_b1": [b.b1 for b in bids_actual],
            "bids_b2": [b.b2 for b in bids_actual],
            "qg": outcome.qg,
            "prices": outcome.prices,
        }
        return EnvStep(reward, outcome, self._t >= self.episode_steps, info)


def simulate_total_quantity(gencos=DEFAULT_GENCOS, demand_config: DemandConfig = DemandConfig(),
                            seed: int = 0, steps: int = 720,
                            magnification: tuple[float, float] = (2.0, 2.0)) -> np.ndarray:
    """Total quantity series from an episode where everyone bids a fixed markup.

    Used to build the forecaster's training data: the hourly sum of
    dispatched totals tracks the market requirement.
    """
    series = demand_profile(steps, seed, demand_config)
    m1, m2 = magnification
    b1 = np.array([[m1 * g.c1 for g in gencos]] * steps)
    b2 = np.array([[m2 * g.c2 for g in gencos]] * steps)
    qmax = np.array([g.q_max for g in gencos])
    x, _ = clear_market_batch(b1, b2, qmax, series.values)
    return x.sum(axis=1) + sum(g.bg for g in gencos)

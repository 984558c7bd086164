"""Delivery-request streams with a Gaussian-mixture arrival profile.

Arrival intensity is evaluated in minutes. Minute ``m`` covers
``[m - 0.5, m + 0.5)`` clipped to the horizon, so quotas are symmetric
whenever the peaks are; each bin's quota is proportional to intensity times
bin width and the quotas are rounded by largest remainder to hit the exact
request total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GenerationError, InvalidConfigError
from .graph import HotspotGraph, WeightKind, single_source_paths


@dataclass(frozen=True)
class DeadlinePolicy:
    mode: str = "scaled"  # "scaled" | "fixed"
    alpha: float = 2.0
    beta_s: float = 600.0
    budget_s: float = 1800.0

    def __post_init__(self) -> None:
        if self.mode not in ("scaled", "fixed"):
            raise InvalidConfigError(f"unknown deadline mode {self.mode!r}")
        if self.alpha < 1.0:
            raise InvalidConfigError("alpha must be >= 1")
        if self.beta_s < 0.0:
            raise InvalidConfigError("beta_s must be >= 0")
        if not self.budget_s > 0.0:
            raise InvalidConfigError("budget_s must be > 0")

    @classmethod
    def scaled(cls, alpha: float = 2.0, beta_s: float = 600.0) -> "DeadlinePolicy":
        return cls("scaled", alpha=alpha, beta_s=beta_s)

    @classmethod
    def fixed(cls, budget_s: float) -> "DeadlinePolicy":
        return cls("fixed", budget_s=budget_s)


@dataclass(frozen=True)
class WorkloadConfig:
    horizon_s: float = 3600.0
    total_requests: int = 9234
    peak_fractions: tuple[float, ...] = (0.25, 0.75)
    sigma_min: float = 10.0
    max_trip_s: float = 1800.0
    deadline_policy: DeadlinePolicy = field(default_factory=DeadlinePolicy)
    rng_seed: int = 0
    # per-hotspot demand weights; None means uniform
    hotspot_weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not self.horizon_s > 0:
            raise InvalidConfigError("horizon_s must be positive")
        if self.total_requests < 1:
            raise InvalidConfigError("total_requests must be >= 1")
        fr = self.peak_fractions
        if not fr or any(not 0.0 < f < 1.0 for f in fr):
            raise InvalidConfigError("peak fractions must lie in (0, 1)")
        if any(b <= a for a, b in zip(fr, fr[1:])):
            raise InvalidConfigError("peak fractions must be strictly increasing")
        if not self.sigma_min > 0:
            raise InvalidConfigError("sigma_min must be positive")
        if not self.max_trip_s > 0:
            raise InvalidConfigError("max_trip_s must be positive")

    @property
    def horizon_min(self) -> float:
        return self.horizon_s / 60.0

    @property
    def peaks_min(self) -> list[float]:
        return [f * self.horizon_min for f in self.peak_fractions]


@dataclass(frozen=True)
class DeliveryRequest:
    id: int
    pickup: int
    dropoff: int
    earliest_pickup_s: float
    deadline_s: float

    def __post_init__(self) -> None:
        if self.pickup == self.dropoff:
            raise InvalidConfigError(f"request {self.id}: pickup equals dropoff")
        if not self.earliest_pickup_s < self.deadline_s:
            raise InvalidConfigError(f"request {self.id}: deadline not after earliest pickup")


def arrival_intensity(t_min: float, cfg: WorkloadConfig) -> float:
    """Sum of unit-mass Gaussians at the configured peaks; ``t_min`` in minutes."""
    s = cfg.sigma_min
    norm = 1.0 / (s * math.sqrt(2.0 * math.pi))
    return sum(norm * math.exp(-0.5 * ((t_min - mu) / s) ** 2) for mu in cfg.peaks_min)


def minute_bins(cfg: WorkloadConfig) -> list[tuple[float, float]]:
    """``(start, end)`` in minutes for each bin centred on an integer minute."""
    h = cfg.horizon_min
    return [(max(0.0, m - 0.5), min(h, m + 0.5)) for m in range(int(math.floor(h)) + 1)
            if min(h, m + 0.5) > max(0.0, m - 0.5)]


def largest_remainder(weights: list[float], total: int) -> list[int]:
    """Integer apportionment of ``total`` proportional to ``weights``.

    Ties go to the bin nearer the middle of the vector first, then lower
    index, so an odd leftover unit lands on the centre of a symmetric vector.
    """
    wsum = math.fsum(weights)
    exact = [w / wsum * total for w in weights]
    quotas = [math.floor(x) for x in exact]
    left = total - sum(quotas)
    n = len(weights)
    order = sorted(range(n), key=lambda i: (-(exact[i] - quotas[i]), -min(i, n - 1 - i), i))
    for i in order[:left]:
        quotas[i] += 1
    return quotas


def minute_quotas(cfg: WorkloadConfig) -> list[int]:
    bins = minute_bins(cfg)
    weights = [arrival_intensity(m, cfg) * (end - start) for m, (start, end) in enumerate(bins)]
    return largest_remainder(weights, cfg.total_requests)


def complete_graph_travel_times(g: HotspotGraph) -> list[list[float]]:
    out = []
    for s in g.nodes():
        paths = single_source_paths(g, s, WeightKind.TRAVEL_TIME)
        out.append([paths[t].cost if t in paths else math.inf for t in g.nodes()])
    return out


def assign_deadline(
    earliest_pickup_s: float,
    shortest_time_s: float,
    policy: DeadlinePolicy,
    max_trip_s: float = 1800.0,
) -> float:
    if policy.mode == "fixed":
        return earliest_pickup_s + policy.budget_s
    if not math.isfinite(shortest_time_s):
        raise GenerationError("dropoff unreachable from pickup")
    return earliest_pickup_s + min(policy.alpha * shortest_time_s + policy.beta_s, max_trip_s)


def generate_requests(g: HotspotGraph, cfg: WorkloadConfig) -> list[DeliveryRequest]:
    if g.n < 2:
        raise GenerationError("need at least 2 hotspots")
    rng = np.random.default_rng(cfg.rng_seed)
    bins = minute_bins(cfg)
    quotas = minute_quotas(cfg)
    times = []
    for (start, end), q in zip(bins, quotas):
        if q:
            times.extend((rng.uniform(start, end, size=q) * 60.0).tolist())
    times = [min(t, cfg.horizon_s) for t in times]
    times.sort()

    p = None
    if cfg.hotspot_weights is not None:
        w = np.asarray(cfg.hotspot_weights, dtype=float)
        if w.shape != (g.n,) or (w < 0).any() or (w > 0).sum() < 2:
            raise InvalidConfigError("hotspot_weights must be nonnegative with >= 2 positive entries")
        p = w / w.sum()

    spt = complete_graph_travel_times(g) if cfg.deadline_policy.mode == "scaled" else None
    out = []
    for i, t in enumerate(times):
        a, b = (int(x) for x in rng.choice(g.n, size=2, replace=False, p=p))
        shortest = spt[a][b] if spt is not None else 0.0
        deadline = assign_deadline(t, shortest, cfg.deadline_policy, cfg.max_trip_s)
        out.append(DeliveryRequest(i, a, b, t, deadline))
    return out

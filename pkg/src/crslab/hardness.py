"""Round-based matching process on K_{n,n} and its fluid-limit trajectory.

The 2n vertices arrive one at a time in uniform random order; an arriving
vertex picks one uniform partner on the opposite side (the x = 1/n choice
distribution) and the algorithm may accept that pair if the partner has
already arrived and both are unmatched. The matched fraction M(t)/n tracks
the solution m(s) = (e^{-s} + s - 1)/2 of m' = s/2 - m, and the balance
event Q_t controls how far the two sides' unarrived counts may drift apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .rng import stream

__all__ = [
    "m_de",
    "TrajectoryReport",
    "DriftBucket",
    "hardness_trajectory",
    "drift_report",
]

AcceptRule = Callable[[int, int], float]  # (round index, n) -> accept probability


def m_de(s: float) -> float:
    """Matched-fraction fluid limit (e^{-s} + s - 1)/2."""
    return (math.exp(-s) + s - 1.0) / 2.0


@dataclass
class TrajectoryReport:
    n: int
    trials: int
    algorithm: str
    matched: np.ndarray  # (trials, 2n+1) M(t) after t rounds
    balance: np.ndarray  # (trials, 2n+1) Q_t indicator

    @property
    def rounds(self) -> np.ndarray:
        return np.arange(2 * self.n + 1)

    @property
    def mean_trajectory(self) -> np.ndarray:
        """Mean M(t)/n per round."""
        return self.matched.mean(axis=0) / self.n

    @property
    def reference(self) -> np.ndarray:
        """m(t/n) per round."""
        s = self.rounds / self.n
        return (np.exp(-s) + s - 1.0) / 2.0

    @property
    def finals(self) -> np.ndarray:
        return self.matched[:, -1] / self.n

    @property
    def mean_final(self) -> float:
        return float(self.finals.mean())

    @property
    def sup_distance(self) -> float:
        return float(np.abs(self.mean_trajectory - self.reference).max())

    @property
    def q_frequency(self) -> np.ndarray:
        """Per-round frequency of the balance event."""
        return self.balance.mean(axis=0)

    def q_min_frequency(self, t_max: int) -> float:
        """Smallest per-round Q_t frequency over rounds 0..t_max."""
        return float(self.q_frequency[: t_max + 1].min())

    def q_all_frequency(self, t_max: int) -> float:
        """Fraction of trials where Q_t held at every round 0..t_max."""
        return float(self.balance[:, : t_max + 1].all(axis=1).mean())


def hardness_trajectory(
    n: int,
    trials: int,
    seed: int,
    algorithm: str | AcceptRule = "greedy",
) -> TrajectoryReport:
    """Simulate the round process on K_{n,n} with x = 1/n choices.

    `algorithm` is "greedy" (accept every feasible pair) or a callable
    (round, n) -> probability thinning feasible pairs, which models
    time-dependent selection rules in round time.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    N = 2 * n
    rng = stream(seed, "hardness", n)
    order = rng.permuted(np.tile(np.arange(N), (trials, 1)), axis=1)
    choice = rng.integers(0, n, size=(trials, N))
    rule: AcceptRule | None = None
    if algorithm != "greedy":
        if not callable(algorithm):
            raise ValueError("algorithm must be 'greedy' or a callable")
        rule = algorithm
        accept_u = rng.random((trials, N))
    rows = np.arange(trials)
    arrived = np.zeros((trials, N), dtype=bool)
    matched_v = np.zeros((trials, N), dtype=bool)
    matched = np.zeros((trials, N + 1), dtype=np.int64)
    balance = np.zeros((trials, N + 1), dtype=bool)
    thresholds = (1.0 + n ** (-1.0 / 3.0)) * (N - np.arange(N + 1)) / 2.0
    left_arrived = np.zeros(trials, dtype=np.int64)
    right_arrived = np.zeros(trials, dtype=np.int64)
    count = np.zeros(trials, dtype=np.int64)
    balance[:, 0] = n <= thresholds[0]
    for t in range(N):
        w = order[:, t]
        is_left = w < n
        partner = np.where(is_left, n + choice[:, t], choice[:, t])
        arrived[rows, w] = True
        left_arrived += is_left
        right_arrived += ~is_left
        ok = arrived[rows, partner] & ~matched_v[rows, partner]
        if rule is not None:
            ok &= accept_u[:, t] <= rule(t, n)
        matched_v[rows, w] |= ok
        matched_v[rows, partner] |= ok
        count += ok
        matched[:, t + 1] = count
        unarrived = np.maximum(n - left_arrived, n - right_arrived)
        balance[:, t + 1] = unarrived <= thresholds[t + 1]
    name = algorithm if isinstance(algorithm, str) else getattr(algorithm, "__name__", "custom")
    return TrajectoryReport(n, trials, name, matched, balance)


@dataclass
class DriftBucket:
    t_lo: int
    t_hi: int
    count: int
    mean_residual: float
    sigma: float

    @property
    def ok(self) -> bool:
        return self.mean_residual <= 3.0 * self.sigma


def drift_report(report: TrajectoryReport, buckets: int = 20) -> list[DriftBucket]:
    """One-step drift audit on rounds where the balance event held.

    Residual per step: Delta M - (1 + n^{-1/3}) (t/(2n) - M(t)/n). Each
    step's conditional mean is <= 0 under Q_t, so every bucket mean must
    sit below 3 standard errors.
    """
    n = report.n
    N = 2 * n
    factor = 1.0 + n ** (-1.0 / 3.0)
    delta_m = np.diff(report.matched, axis=1).astype(np.float64)
    m_before = report.matched[:, :-1].astype(np.float64)
    t_idx = np.arange(N, dtype=np.float64)[None, :]
    residual = delta_m - factor * (t_idx / N - m_before / n)
    mask = report.balance[:, :-1]
    edges = np.linspace(0, N, buckets + 1).astype(np.int64)
    out: list[DriftBucket] = []
    for b in range(buckets):
        lo, hi = int(edges[b]), int(edges[b + 1])
        vals = residual[:, lo:hi][mask[:, lo:hi]]
        if vals.size < 2:
            continue
        mean = float(vals.mean())
        sigma = float(vals.std(ddof=1) / math.sqrt(vals.size))
        out.append(DriftBucket(lo, hi, int(vals.size), mean, sigma))
    return out

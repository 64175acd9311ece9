"""Two-phase pruned contention resolution for 1-regular fractional matchings.

Each active edge is first thinned by an independent Bernoulli(a_t(x_e))
"pruning" bit, so an edge survives its proposal with probability
f_t(x) = x * a_t(x). Proposals before the switch time t additionally pass a
load-balancing bit B with success probability 1/(2 - sum of f_t over the
target's already-arrived incident edges); after t the scheme accepts every
surviving proposal whose target is free (greedy phase).

t = 0 degenerates to prune-greedy and t = 1 to the pure balanced scheme; the
guarantee polynomial (16 + 5t^2 - 10t^3 + 4t^5)/30 is certified up to the
root t0 of the degree-6 switch polynomial. The L/U recursion bounds the
conditional matching rate of a directed edge by alternating upper/lower
expansions on vertex-deleted subgraphs; with polynomial inputs every level
stays polynomial, so the evaluator uses exact coefficient arithmetic.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from .arrivals import NO_CHOICE, ArrivalSample, sample_choices_batch
from .graph import Graph
from .matching import BatchResult, Matching
from .rng import stream
from .selection import SelectionFunction  # noqa: F401  (type referenced in docs)

__all__ = [
    "prune_factor",
    "survival_prob",
    "survival_prob_closed",
    "t_root_poly",
    "find_t0",
    "guarantee_poly",
    "TwoValuesReport",
    "check_two_values_inequality",
    "run_two_phase",
    "run_two_phase_batch",
    "prune_greedy_batch",
    "balanced_ocrs_batch",
    "simulate_two_phase",
    "TwoPhaseSimResult",
    "RecursionBound",
    "recursion_bound",
    "overall_recursion_bound",
    "pinned_phase1_frequency",
]


def prune_factor(x, t):
    """Pruning probability a_t(x) in [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    big_n = 3.0 + 6.0 * t + 4.0 * t * t + 2.0 * t**3
    out = big_n / (big_n + 2.0 * x * (1.0 - t) * (1.0 + 3.0 * t + t * t))
    return float(out) if out.ndim == 0 else out


def survival_prob(x, t):
    """Edge survival f_t(x) = x * a_t(x)."""
    x = np.asarray(x, dtype=np.float64)
    out = x * prune_factor(x, t)
    return float(out) if out.ndim == 0 else out


def survival_prob_closed(x, t):
    """Alternative closed form of f_t.

    Identical to x * a_t(x) but written with a removable (t-1)^2 factor, so
    it degenerates to 0/0 at t = 1 and loses precision close to it; kept for
    the algebraic identity check on t <= 0.9.
    """
    x = np.asarray(x, dtype=np.float64)
    num = x * (3.0 + 2.0 * t**5 - 5.0 * t * t)
    den = 3.0 + 2.0 * t**5 * (1.0 - x) + 2.0 * x + 10.0 * t**3 * x - 5.0 * t * t * (1.0 + 2.0 * x)
    out = num / den
    return float(out) if out.ndim == 0 else out


def t_root_poly(t: float) -> float:
    """Switch-time polynomial 4t^6 + 16t^5 + 100t^4 + 180t^3 + 80t^2 - 4t - 1."""
    return ((((4.0 * t + 16.0) * t + 100.0) * t + 180.0) * t + 80.0) * t * t - 4.0 * t - 1.0


@functools.lru_cache(maxsize=1)
def find_t0() -> float:
    """Unique root of t_root_poly on (0, 1), by bisection to 1e-14."""
    lo, hi = 0.0, 1.0
    flo, fhi = t_root_poly(lo), t_root_poly(hi)
    assert flo < 0.0 < fhi, "sign change on (0,1) expected"
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_root_poly(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16:
            break
    return 0.5 * (lo + hi)


def guarantee_poly(t: float) -> float:
    """Certified selectability (16 + 5t^2 - 10t^3 + 4t^5)/30 for t <= t0."""
    return (16.0 + 5.0 * t * t - 10.0 * t**3 + 4.0 * t**5) / 30.0


@dataclass
class TwoValuesReport:
    t: float
    grid: int
    max_violation: float  # max over the grid of lhs - rhs (<= 0 means holds)
    argmax: tuple[float, float]
    violations: list[tuple[float, float, float]]  # (x, y, violation) above 1e-10

    @property
    def holds(self) -> bool:
        return self.max_violation <= 1e-10


def check_two_values_inequality(t: float, grid: int) -> TwoValuesReport:
    """Grid check of the two-point survival inequality behind the guarantee."""
    if grid < 2:
        raise ValueError("grid must be >= 2")
    base = 1.0 / 3.0 + t**3 / 6.0 - t * t / 2.0
    kk = 3.0 + 2.0 * t**5 - 5.0 * t * t
    vals = np.linspace(0.0, 1.0, grid)
    xs, ys = np.meshgrid(vals, vals, indexing="ij")
    fx = survival_prob(xs, t)
    fy = survival_prob(ys, t)
    lhs = fx * (base - (2.0 - 2.0 * xs - ys) * kk / 60.0) + fy * (base - (2.0 - 2.0 * ys - xs) * kk / 60.0)
    rhs = (base - kk / 30.0) * (xs + ys)
    diff = lhs - rhs
    flat = int(np.argmax(diff))
    i, j = np.unravel_index(flat, diff.shape)
    bad = np.argwhere(diff > 1e-10)
    violations = [(float(vals[a]), float(vals[b]), float(diff[a, b])) for a, b in bad[:100]]
    return TwoValuesReport(t, grid, float(diff[i, j]), (float(vals[i]), float(vals[j])), violations)


# -- runners -------------------------------------------------------------------


def _warn_if_not_one_regular(g: Graph) -> None:
    if not g.is_one_regular():
        warnings.warn("instance is not 1-regular: the guarantee is void, reporting observed rates only", stacklevel=3)


def _phase1_mode(g: Graph) -> tuple[str, np.ndarray | None]:
    """Pick the cheapest way to accumulate the phase-1 neighbor sums.

    All-equal x on a complete graph makes the sum f*(k-1) at arrival rank k;
    on a complete bipartite graph it is f times the arrived count of the
    proposer's side. Anything else uses a dense f-weighted adjacency.
    """
    n, m = g.vertex_count, g.edge_count
    uniform = m > 0 and float(np.ptp(g.x)) <= 1e-15
    if uniform and m == n * (n - 1) // 2:
        return "complete", None
    if uniform:
        side = np.full(n, -1, dtype=np.int64)
        queue = []
        ok = True
        for s in range(n):
            if side[s] >= 0:
                continue
            side[s] = 0
            queue.append(s)
            while queue:
                v = queue.pop()
                for w in g.neighbors(v):
                    if side[w] < 0:
                        side[w] = side[v] ^ 1
                        queue.append(int(w))
                    elif side[w] == side[v]:
                        ok = False
        counts = (int(np.sum(side == 0)), int(np.sum(side == 1)))
        degs = np.diff(g.indptr)
        if ok and m == counts[0] * counts[1] and np.all(degs == np.where(side == 0, counts[1], counts[0])):
            return "bipartite", side
    return "dense", None


def run_two_phase_batch(
    g: Graph,
    t: float,
    Y: np.ndarray,
    F: np.ndarray,
    UA: np.ndarray,
    UB: np.ndarray,
    t_stop: float = 1.0,
    bins: int | None = None,
    track_edges: bool = False,
    check_regular: bool = True,
) -> BatchResult:
    """Vectorized two-phase runs; Y/F/UA/UB are (trials, n) per-vertex arrays."""
    if not (0.0 <= t <= 1.0):
        raise ValueError("t must lie in [0, 1]")
    if check_regular:
        _warn_if_not_one_regular(g)
    trials, n = Y.shape
    m = g.edge_count
    eidmat = np.full((n, n), -1, dtype=np.int64)
    eidmat[g.eu, g.ev] = np.arange(m)
    eidmat[g.ev, g.eu] = np.arange(m)
    avals = prune_factor(g.x, t)
    fvals = survival_prob(g.x, t)
    f0 = float(fvals[0]) if m else 0.0
    mode, side = _phase1_mode(g)
    needs_b = t > 0.0
    if needs_b:
        if mode == "bipartite":
            side_cnt = np.zeros((trials, 2), dtype=np.int64)
        elif mode == "dense":
            fmat = np.zeros((n, n), dtype=np.float64)
            fmat[g.eu, g.ev] = fvals
            fmat[g.ev, g.eu] = fvals
            arrived = np.zeros((trials, n), dtype=bool)
    rows = np.arange(trials)
    order = np.argsort(Y, axis=1, kind="stable")
    matched = np.zeros((trials, n), dtype=bool)
    accepted = np.zeros(m, dtype=np.int64)
    active_cnt = np.zeros(m, dtype=np.int64)
    acc_bin = np.zeros((m, bins), dtype=np.int64) if bins else None
    act_bin = np.zeros((m, bins), dtype=np.int64) if bins else None
    acc_edge = np.zeros((trials, m), dtype=bool) if track_edges else None
    prop_is_ev = np.zeros((trials, m), dtype=bool) if track_edges else None

    for k in range(n):
        v = order[:, k]
        y = Y[rows, v]
        live = y <= t_stop
        if not live.any():
            break
        u = F[rows, v]
        has = live & (u != NO_CHOICE)
        uu = np.where(has, u, 0)
        yu = Y[rows, uu]
        arrived_u = has & ((yu < y) | ((yu == y) & (uu < v)))
        idx = np.nonzero(arrived_u)[0]
        if idx.size:
            ue, ve, ye = uu[idx], v[idx], y[idx]
            eid = eidmat[ue, ve]
            np.add.at(active_cnt, eid, 1)
            if bins:
                bi = np.minimum((ye * bins).astype(np.int64), bins - 1)
                np.add.at(act_bin, (eid, bi), 1)
            a_bit = UA[idx, ve] <= avals[eid]
            phase1 = ye < t
            if needs_b and phase1.any():
                if mode == "complete":
                    s = np.full(idx.size, f0 * (k - 1))
                elif mode == "bipartite":
                    s = f0 * side_cnt[idx, side[ve]]
                else:
                    s = np.einsum("ij,ij->i", fmat[ue], arrived[idx])
                assert float(np.max(s, initial=0.0)) <= 1.0 + 1e-9, "phase-1 sums must stay within the unit load"
                b = np.where(phase1, 1.0 / (2.0 - s), 1.0)
                b_bit = np.where(phase1, UB[idx, ve] <= b, True)
            else:
                b_bit = np.ones(idx.size, dtype=bool)
            free = ~matched[idx, ue]
            acc = a_bit & b_bit & free
            ai = idx[acc]
            if ai.size:
                ua, va, ea = ue[acc], ve[acc], eid[acc]
                matched[ai, ua] = True
                matched[ai, va] = True
                np.add.at(accepted, ea, 1)
                if bins:
                    ba = np.minimum((ye[acc] * bins).astype(np.int64), bins - 1)
                    np.add.at(acc_bin, (ea, ba), 1)
                if track_edges:
                    acc_edge[ai, ea] = True
                    prop_is_ev[ai, ea] = va == g.ev[ea]
        if needs_b:
            if mode == "bipartite":
                side_cnt[rows[live], side[v[live]]] += 1
            elif mode == "dense":
                arrived[rows[live], v[live]] = True
    return BatchResult(matched, accepted, active_cnt, acc_bin, act_bin, acc_edge, prop_is_ev, None)


def run_two_phase(g: Graph, t: float, s: ArrivalSample, UA: np.ndarray, UB: np.ndarray) -> Matching:
    """Single-sample reference implementation (plain event loop)."""
    if s.mode != "vertex":
        raise ValueError("vertex-mode sample required")
    _warn_if_not_one_regular(g)
    y, f = s.times, s.choices
    n = g.vertex_count
    fvals = survival_prob(g.x, t)
    out = Matching(n)
    for v in sorted(range(n), key=lambda w: (y[w], w)):
        u = int(f[v])
        if u == NO_CHOICE or not ((y[u], u) < (y[v], v)):
            continue
        eid = g.edge_id(u, v)
        if UA[v] > prune_factor(float(g.x[eid]), t):
            continue
        if y[v] < t:
            s_sum = sum(
                float(fvals[g.edge_id(u, int(w))])
                for w in g.neighbors(u)
                if (y[w], int(w)) < (y[v], v)
            )
            assert s_sum <= 1.0 + 1e-9
            if UB[v] > 1.0 / (2.0 - s_sum):
                continue
        if not out.matched[u]:
            out.add(g, eid, float(y[v]), v)
    return out


def prune_greedy_batch(g: Graph, Y: np.ndarray, F: np.ndarray, UA: np.ndarray) -> BatchResult:
    """Independent baseline: accept active edges passing Bernoulli(a_0(x)) greedily."""
    return run_two_phase_batch(g, 0.0, Y, F, UA, UA, check_regular=False)


def balanced_ocrs_batch(g: Graph, Y: np.ndarray, F: np.ndarray, UB: np.ndarray) -> BatchResult:
    """Independent baseline: no pruning, balancing bit everywhere (switch time 1)."""
    ones = np.zeros_like(UB)  # UA <= a_1 = 1 always; any array works
    return run_two_phase_batch(g, 1.0, Y, F, ones, UB, check_regular=False)


@dataclass
class TwoPhaseSimResult:
    trials: int
    bins: int
    accepted: np.ndarray
    active: np.ndarray
    acc_bin: np.ndarray
    act_bin: np.ndarray

    def ratio_active(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.active > 0, self.accepted / np.maximum(self.active, 1), np.nan)

    def ratio_x(self, g: Graph) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            denom = self.trials * g.x
            return np.where(denom > 0, self.accepted / np.where(denom > 0, denom, 1.0), np.nan)


TRIAL_CHUNK = 200_000


def simulate_two_phase(g: Graph, t: float, trials: int, seed: int, bins: int = 20) -> TwoPhaseSimResult:
    _warn_if_not_one_regular(g)
    m = g.edge_count
    n = g.vertex_count
    out = TwoPhaseSimResult(trials, bins, np.zeros(m, np.int64), np.zeros(m, np.int64), np.zeros((m, bins), np.int64), np.zeros((m, bins), np.int64))
    done = 0
    ci = 0
    while done < trials:
        count = min(TRIAL_CHUNK, trials - done)
        rng = stream(seed, "trials-two-phase", ci)
        Y = rng.random((count, n))
        F = sample_choices_batch(g, rng, count)
        UA = rng.random((count, n))
        UB = rng.random((count, n))
        res = run_two_phase_batch(g, t, Y, F, UA, UB, bins=bins, check_regular=False)
        out.accepted += res.accepted
        out.active += res.active
        out.acc_bin += res.acc_bin
        out.act_bin += res.act_bin
        done += count
        ci += 1
    return out


def pinned_phase1_frequency(
    g: Graph,
    t: float,
    u0: int,
    u1: int,
    y0: float,
    pinned: dict[int, float],
    trials: int,
    seed: int,
) -> tuple[float, float]:
    """Frequency that (u0,u1) is picked by time y0 with all other times pinned.

    u0 arrives exactly at y0 <= t, u1 uniformly before y0, every other vertex
    at its pinned time; choices and decision bits stay random. Returns
    (frequency, binomial sigma).
    """
    if not (0.0 < y0 <= t):
        raise ValueError("need 0 < y0 <= t")
    missing = set(range(g.vertex_count)) - {u0, u1} - set(pinned)
    if missing:
        raise ValueError(f"pinned times missing for vertices {sorted(missing)}")
    n = g.vertex_count
    eid = g.edge_id(u0, u1)
    hits = 0
    done = 0
    ci = 0
    while done < trials:
        count = min(TRIAL_CHUNK, trials - done)
        rng = stream(seed, "pinned-phase1", ci)
        Y = np.empty((count, n))
        for w, yw in pinned.items():
            Y[:, w] = yw
        Y[:, u0] = y0
        Y[:, u1] = rng.random(count) * y0
        F = sample_choices_batch(g, rng, count)
        UA = rng.random((count, n))
        UB = rng.random((count, n))
        res = run_two_phase_batch(g, t, Y, F, UA, UB, t_stop=y0, track_edges=True, check_regular=False)
        hits += int(res.acc_edge[:, eid].sum())
        done += count
        ci += 1
    freq = hits / trials
    sigma = math.sqrt(max(freq * (1.0 - freq), 1e-12) / trials)
    return freq, sigma


# -- recursive bound ------------------------------------------------------------


@dataclass
class RecursionBound:
    direction: str  # "lower" | "upper"
    ell: int
    t: float
    poly: Polynomial
    ys: np.ndarray
    values: np.ndarray


def _bound_poly(g: Graph, t: float, memo: dict, deleted: frozenset, a: int, b: int, ell: int) -> Polynomial:
    """Bound polynomial for the directed pair a->b at level ell, vertices in
    `deleted` removed. Odd levels are upper bounds, even levels lower bounds;
    level 1 is the base y0."""
    key = (deleted, a, b, ell)
    hit = memo.get(key)
    if hit is not None:
        return hit
    y_poly = Polynomial([0.0, 1.0])
    if ell == 1:
        memo[key] = y_poly
        return y_poly
    total = y_poly
    half_t2 = 0.5 * t * t
    inner_deleted = deleted | {a}
    for w in g.neighbors(b):
        w = int(w)
        if w == a or w in deleted:
            continue
        f = survival_prob(float(g.x[g.edge_id(b, w)]), t)
        p1 = _bound_poly(g, t, memo, inner_deleted, b, w, ell - 1)
        p2 = _bound_poly(g, t, memo, inner_deleted, w, b, ell - 1)
        q1, q2 = p1.integ(), p2.integ()
        contrib = Polynomial([half_t2 - q1(t) - q2(t)]) + q1 + q2
        total = total - f * contrib
    memo[key] = total
    return total


def recursion_bound(g: Graph, t: float, edge: tuple[int, int], ell: int, direction: str, grid: int = 201) -> RecursionBound:
    """Dense table (and exact polynomial) of the level-ell bound on (t, 1]."""
    if ell not in (1, 2, 3, 4):
        raise ValueError("ell must be in 1..4")
    if direction not in ("lower", "upper"):
        raise ValueError("direction must be 'lower' or 'upper'")
    if direction == "lower" and ell % 2 == 1:
        raise ValueError("lower bounds have even ell")
    if direction == "upper" and ell % 2 == 0:
        raise ValueError("upper bounds have odd ell")
    u0, u1 = edge
    g.edge_id(u0, u1)  # validates adjacency
    memo: dict = {}
    poly = _bound_poly(g, t, memo, frozenset(), u0, u1, ell)
    ys = np.linspace(t, 1.0, grid)
    return RecursionBound(direction, ell, t, poly, ys, poly(ys))


def overall_recursion_bound(g: Graph, t: float, edge: tuple[int, int], ell: int = 4) -> float:
    """a(x_e) * (t^2/2 + int_t^1 (L_{u0->u1} + L_{u1->u0}) dy0), exactly integrated."""
    u0, u1 = edge
    lower_fwd = recursion_bound(g, t, (u0, u1), ell, "lower").poly
    lower_bwd = recursion_bound(g, t, (u1, u0), ell, "lower").poly
    total = lower_fwd + lower_bwd
    anti = total.integ()
    integral = anti(1.0) - anti(t)
    x = float(g.x[g.edge_id(u0, u1)])
    return prune_factor(x, t) * (0.5 * t * t + integral)

"""Recursive self-sampling contention resolution.

The scheme targets an exact conditional acceptance rate c(y) for an active
element arriving at time y. It cannot observe the true safety probability
S (the chance its partner is still free), so it estimates S by simulating
itself: time is split into T phases, and at the start of phase j the scheme
runs Q forced-arrival simulations of phases 1..j-1 (reusing the estimates
already recorded for those phases) to tabulate. An arrival at y in phase j
then proposes with probability

    min( c(y) / S_hat(j) * (1 - delta) / (1 + 1/(C T y)), 1 ).

Vertex mode keeps one estimate per directed adjacent pair (proposer ->
target); edge mode keeps one per edge. Tables are written once per phase and
never mutated afterwards, and nested simulations reuse them verbatim.

The rank-1 closed-form scheme (single star, loads summing to 1) needs no
tables: it accepts the first active element that passes an independent
Bernoulli(e^{-y x_e}) thinning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .arrivals import NO_CHOICE, ArrivalSample, sample_choices_batch
from .graph import Graph
from .matching import BatchResult, Matching
from .rng import stream
from .selection import SelectionFunction

__all__ = [
    "EstimateTable",
    "required_samples",
    "phase_of",
    "fill_tables",
    "fill_tables_edge",
    "estimate_safety",
    "run_vertex",
    "run_edge",
    "run_vertex_batch",
    "run_edge_batch",
    "run_rank1_closed_form",
    "simulate_vertex",
    "simulate_edge",
    "simulate_rank1",
    "BatchResult",
    "SimResult",
    "Rank1Result",
]

# Row budget for one estimator batch; keeps peak memory modest and makes
# chunk boundaries (and hence RNG keys) independent of available RAM.
FILL_ROW_CHUNK = 1_000_000


def required_samples(C: float, delta: float, T: int, n: int) -> int:
    """Smallest integer Q >= (3/(C delta^2)) ln(2 T n^2 / delta)."""
    if not (0.0 < C <= 1.0):
        raise ValueError("C must lie in (0, 1]")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if T < 1 or n < 1:
        raise ValueError("T and n must be >= 1")
    return math.ceil(3.0 / (C * delta * delta) * math.log(2.0 * T * n * n / delta))


def phase_of(y, T: int):
    """Phase index j for arrival time y in (t_j, t_{j+1}] with t_j = j/T."""
    j = np.ceil(np.asarray(y) * T).astype(np.int64) - 1
    return np.clip(j, 0, T - 1)


@dataclass
class EstimateTable:
    mode: str  # "vertex" | "edge"
    T: int
    delta: float
    Q: int
    floor_clamp: float
    values: np.ndarray  # (T, 2m) vertex / (T, m) edge; row 0 is all ones

    def dir_index(self, g: Graph, proposer: int, target: int) -> int:
        eid = g.edge_id(proposer, target)
        return 2 * eid + (1 if target == g.ev[eid] else 0)


def _edge_matrix(g: Graph) -> np.ndarray:
    mat = np.full((g.vertex_count, g.vertex_count), -1, dtype=np.int64)
    mat[g.eu, g.ev] = np.arange(g.edge_count)
    mat[g.ev, g.eu] = np.arange(g.edge_count)
    return mat


def run_vertex_batch(
    g: Graph,
    sel: SelectionFunction,
    table: EstimateTable,
    Y: np.ndarray,
    F: np.ndarray,
    U: np.ndarray,
    t_stop: float = 1.0,
    exclude: int | None = None,
    bins: int | None = None,
    track_edges: bool = False,
    track_targets: bool = False,
) -> BatchResult:
    """Vectorized vertex-mode runs over the trial axis.

    Y, F, U are (trials, n): arrival times, neighbor choices and per-vertex
    decision uniforms. Passing the same arrays with different `exclude`
    values realizes coupled executions on G and G minus a vertex.
    """
    trials, n = Y.shape
    m = g.edge_count
    T, delta, C = table.T, table.delta, sel.floor
    eidmat = _edge_matrix(g)
    ev = g.ev
    rows = np.arange(trials)
    order = np.argsort(Y, axis=1, kind="stable")
    matched = np.zeros((trials, n), dtype=bool)
    accepted = np.zeros(m, dtype=np.int64)
    active_cnt = np.zeros(m, dtype=np.int64)
    acc_bin = np.zeros((m, bins), dtype=np.int64) if bins else None
    act_bin = np.zeros((m, bins), dtype=np.int64) if bins else None
    acc_edge = np.zeros((trials, m), dtype=bool) if track_edges else None
    prop_is_ev = np.zeros((trials, m), dtype=bool) if track_edges else None
    sel_into = np.zeros((trials, n), dtype=bool) if track_targets else None

    for k in range(n):
        v = order[:, k]
        y = Y[rows, v]
        live = y <= t_stop
        if not live.any():
            break
        u = F[rows, v]
        has = live & (u != NO_CHOICE)
        if exclude is not None:
            has &= (v != exclude) & (u != exclude)
        if not has.any():
            continue
        uu = np.where(has, u, 0)
        yu = Y[rows, uu]
        arrived = has & ((yu < y) | ((yu == y) & (uu < v)))
        if not arrived.any():
            continue
        idx = np.nonzero(arrived)[0]
        ue, ve, ye = uu[idx], v[idx], y[idx]
        eid = eidmat[ue, ve]
        np.add.at(active_cnt, eid, 1)
        if bins:
            b = np.minimum((ye * bins).astype(np.int64), bins - 1)
            np.add.at(act_bin, (eid, b), 1)
        j = phase_of(ye, T)
        shat = table.values[j, 2 * eid + (ue == ev[eid])]
        param = sel(ye) / shat * (1.0 - delta) / (1.0 + 1.0 / (C * T * ye))
        np.minimum(param, 1.0, out=param)
        bit = U[idx, ve] <= param
        free = ~matched[idx, ue]
        acc = bit & free
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
                prop_is_ev[ai, ea] = va == ev[ea]
            if track_targets:
                sel_into[ai, ua] = True
    return BatchResult(matched, accepted, active_cnt, acc_bin, act_bin, acc_edge, prop_is_ev, sel_into)


def run_vertex(
    g: Graph,
    sel: SelectionFunction,
    table: EstimateTable,
    s: ArrivalSample,
    decision_u: np.ndarray,
    t_stop: float = 1.0,
    exclude: int | None = None,
) -> Matching:
    """Single-sample reference implementation (plain event loop)."""
    if s.mode != "vertex":
        raise ValueError("vertex-mode sample required")
    y, f = s.times, s.choices
    n = g.vertex_count
    T, delta, C = table.T, table.delta, sel.floor
    out = Matching(n)
    for v in sorted(range(n), key=lambda w: (y[w], w)):
        if y[v] > t_stop:
            break
        u = int(f[v])
        if u == NO_CHOICE or v == exclude or u == exclude:
            continue
        if not ((y[u], u) < (y[v], v)):
            continue
        assert not out.matched[v], "a proposer is always unmatched at its own arrival"
        j = int(phase_of(float(y[v]), T))
        shat = table.values[j, table.dir_index(g, v, u)]
        param = float(sel(float(y[v]))) / shat * (1.0 - delta) / (1.0 + 1.0 / (C * T * float(y[v])))
        if decision_u[v] <= min(param, 1.0) and not out.matched[u]:
            out.add(g, g.edge_id(u, v), float(y[v]), v)
    return out


def fill_tables(g: Graph, sel: SelectionFunction, T: int, delta: float, Q: int, seed: int) -> EstimateTable:
    """Estimate tables for vertex mode, one phase at a time.

    Phase j is estimated from Q forced runs per directed pair (target's time
    uniform on [0, t_j), proposer's on (t_j, 1], fresh choices), executed as
    one stacked batch over all 2m pairs and reusing rows 0..j-1 of the table.
    """
    m = g.edge_count
    n = g.vertex_count
    floor_clamp = sel.floor / 2.0
    values = np.ones((T, 2 * m), dtype=np.float64)
    table = EstimateTable("vertex", T, delta, Q, floor_clamp, values)
    targets = np.empty(2 * m, dtype=np.int64)
    proposers = np.empty(2 * m, dtype=np.int64)
    for eid in range(m):
        u, v = g.eu[eid], g.ev[eid]
        targets[2 * eid], proposers[2 * eid] = u, v  # dir v->u (target eu)
        targets[2 * eid + 1], proposers[2 * eid + 1] = v, u  # dir u->v (target ev)
    for j in range(1, T):
        tj = j / T
        rows_total = 2 * m * Q
        unmatched = np.zeros(2 * m, dtype=np.float64)
        n_chunks = (rows_total + FILL_ROW_CHUNK - 1) // FILL_ROW_CHUNK
        base = 0
        for c in range(n_chunks):
            count = min(FILL_ROW_CHUNK, rows_total - base)
            rng = stream(seed, "fill-vertex", j, c)
            rr = np.arange(count)
            dir_id = (base + rr) // Q
            trow = targets[dir_id]
            prow = proposers[dir_id]
            Y = rng.random((count, n))
            Y[rr, trow] *= tj
            Y[rr, prow] = tj + Y[rr, prow] * (1.0 - tj)
            F = sample_choices_batch(g, rng, count)
            U = rng.random((count, n))
            res = run_vertex_batch(g, sel, table, Y, F, U, t_stop=tj)
            free = ~res.matched[rr, trow]
            unmatched += np.bincount(dir_id, weights=free, minlength=2 * m)
            base += count
        values[j] = np.clip(unmatched / Q, floor_clamp, 1.0)
    return table


def estimate_safety(
    g: Graph,
    sel: SelectionFunction,
    table: EstimateTable,
    j: int,
    proposer: int,
    target: int,
    seed: int,
    Q: int | None = None,
) -> float:
    """One forced-run estimate S_hat_{proposer->target}(j) using phases < j."""
    if j < 1:
        raise ValueError("estimates exist for phases j >= 1 only")
    Q = table.Q if Q is None else Q
    tj = j / table.T
    n = g.vertex_count
    rng = stream(seed, "estimate", j, proposer, target)
    rr = np.arange(Q)
    Y = rng.random((Q, n))
    Y[:, target] *= tj
    Y[:, proposer] = tj + Y[:, proposer] * (1.0 - tj)
    F = sample_choices_batch(g, rng, Q)
    U = rng.random((Q, n))
    res = run_vertex_batch(g, sel, table, Y, F, U, t_stop=tj)
    frac = float(np.mean(~res.matched[rr, target]))
    return max(frac, table.floor_clamp)


# -- edge mode ----------------------------------------------------------------


def run_edge_batch(
    g: Graph,
    sel: SelectionFunction,
    table: EstimateTable,
    active: np.ndarray,
    Ye: np.ndarray,
    U: np.ndarray,
    t_stop: float = 1.0,
    bins: int | None = None,
) -> BatchResult:
    """Vectorized edge-mode runs; feasibility is both endpoints unmatched."""
    trials, m = Ye.shape
    n = g.vertex_count
    T, delta, C = table.T, table.delta, sel.floor
    rows = np.arange(trials)
    order = np.argsort(Ye, axis=1, kind="stable")
    matched = np.zeros((trials, n), dtype=bool)
    accepted = np.zeros(m, dtype=np.int64)
    active_cnt = np.zeros(m, dtype=np.int64)
    acc_bin = np.zeros((m, bins), dtype=np.int64) if bins else None
    act_bin = np.zeros((m, bins), dtype=np.int64) if bins else None
    eu, ev = g.eu, g.ev
    for k in range(m):
        e = order[:, k]
        y = Ye[rows, e]
        live = y <= t_stop
        if not live.any():
            break
        act = live & active[rows, e]
        if not act.any():
            continue
        idx = np.nonzero(act)[0]
        ee, ye = e[idx], y[idx]
        np.add.at(active_cnt, ee, 1)
        if bins:
            b = np.minimum((ye * bins).astype(np.int64), bins - 1)
            np.add.at(act_bin, (ee, b), 1)
        j = phase_of(ye, T)
        shat = table.values[j, ee]
        param = sel(ye) / shat * (1.0 - delta) / (1.0 + 1.0 / (C * T * ye))
        np.minimum(param, 1.0, out=param)
        bit = U[idx, ee] <= param
        feas = ~matched[idx, eu[ee]] & ~matched[idx, ev[ee]]
        acc = bit & feas
        ai = idx[acc]
        if ai.size:
            ea = ee[acc]
            matched[ai, eu[ea]] = True
            matched[ai, ev[ea]] = True
            np.add.at(accepted, ea, 1)
            if bins:
                ba = np.minimum((ye[acc] * bins).astype(np.int64), bins - 1)
                np.add.at(acc_bin, (ea, ba), 1)
    return BatchResult(matched, accepted, active_cnt, acc_bin, act_bin)


def run_edge(
    g: Graph,
    sel: SelectionFunction,
    table: EstimateTable,
    s: ArrivalSample,
    decision_u: np.ndarray,
    t_stop: float = 1.0,
) -> Matching:
    """Single-sample reference implementation for edge mode."""
    if s.mode != "edge":
        raise ValueError("edge-mode sample required")
    y, act = s.edge_times, s.active
    T, delta, C = table.T, table.delta, sel.floor
    out = Matching(g.vertex_count)
    for e in sorted(range(g.edge_count), key=lambda i: (y[i], i)):
        if y[e] > t_stop:
            break
        if not act[e]:
            continue
        u, v = int(g.eu[e]), int(g.ev[e])
        if out.matched[u] or out.matched[v]:
            continue
        j = int(phase_of(float(y[e]), T))
        param = float(sel(float(y[e]))) / table.values[j, e] * (1.0 - delta) / (1.0 + 1.0 / (C * T * float(y[e])))
        if decision_u[e] <= min(param, 1.0):
            out.add(g, e, float(y[e]), u)
    return out


def fill_tables_edge(g: Graph, sel: SelectionFunction, T: int, delta: float, Q: int, seed: int) -> EstimateTable:
    """Estimate tables for edge mode: S_hat_e(j) = P[e feasible at t_j | Y_e > t_j]."""
    m = g.edge_count
    floor_clamp = sel.floor / 2.0
    values = np.ones((T, m), dtype=np.float64)
    table = EstimateTable("edge", T, delta, Q, floor_clamp, values)
    eu, ev = g.eu, g.ev
    for j in range(1, T):
        tj = j / T
        rows_total = m * Q
        feasible = np.zeros(m, dtype=np.float64)
        n_chunks = (rows_total + FILL_ROW_CHUNK - 1) // FILL_ROW_CHUNK
        base = 0
        for c in range(n_chunks):
            count = min(FILL_ROW_CHUNK, rows_total - base)
            rng = stream(seed, "fill-edge", j, c)
            rr = np.arange(count)
            erow = (base + rr) // Q
            active = rng.random((count, m)) < g.x[None, :]
            Ye = rng.random((count, m))
            Ye[rr, erow] = tj + Ye[rr, erow] * (1.0 - tj)
            U = rng.random((count, m))
            res = run_edge_batch(g, sel, table, active, Ye, U, t_stop=tj)
            free = ~res.matched[rr, eu[erow]] & ~res.matched[rr, ev[erow]]
            feasible += np.bincount(erow, weights=free, minlength=m)
            base += count
        values[j] = np.clip(feasible / Q, floor_clamp, 1.0)
    return table


# -- rank-1 closed form --------------------------------------------------------


def _check_rank1(g: Graph) -> None:
    if abs(float(np.sum(g.x)) - 1.0) > 1e-9:
        raise ValueError("rank-1 closed form needs element values summing to 1")


def run_rank1_closed_form(g: Graph, s: ArrivalSample, decision_u: np.ndarray) -> Matching:
    """Accept the first active element passing Bernoulli(e^{-y x_e})."""
    _check_rank1(g)
    if s.mode != "edge":
        raise ValueError("edge-mode sample required")
    out = Matching(g.vertex_count)
    for e in sorted(range(g.edge_count), key=lambda i: (s.edge_times[i], i)):
        if not s.active[e]:
            continue
        y = float(s.edge_times[e])
        if decision_u[e] <= math.exp(-y * float(g.x[e])):
            out.add(g, e, y, int(g.eu[e]))
            break
    return out


# -- top-level experiment loops -------------------------------------------------


@dataclass
class SimResult:
    """Accumulated per-edge and per-bin counts over all trials."""

    trials: int
    bins: int
    accepted: np.ndarray  # (m,)
    active: np.ndarray  # (m,)
    acc_bin: np.ndarray  # (m, bins)
    act_bin: np.ndarray  # (m, bins)
    table: EstimateTable | None = None

    def ratio_active(self) -> np.ndarray:
        """Accepted / active per edge (nan when an edge was never active)."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.active > 0, self.accepted / np.maximum(self.active, 1), np.nan)

    def ratio_x(self, g: Graph) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            denom = self.trials * g.x
            return np.where(denom > 0, self.accepted / np.where(denom > 0, denom, 1.0), np.nan)


TRIAL_CHUNK = 100_000


def _trial_chunks(trials: int, chunk: int):
    starts = range(0, trials, chunk)
    return [(i, min(chunk, trials - s)) for i, s in enumerate(starts)]


def simulate_vertex(
    g: Graph,
    sel: SelectionFunction,
    T: int,
    delta: float,
    trials: int,
    seed: int,
    Q: int | None = None,
    bins: int = 20,
    table: EstimateTable | None = None,
) -> SimResult:
    """Fill tables once, then measure acceptance over independent trials."""
    if delta == 0.0 and Q is None and table is None:
        raise ValueError("delta=0 (idealized mode) needs an explicit Q")
    if Q is None and table is None:
        Q = required_samples(sel.floor, delta, T, g.vertex_count)
    if table is None:
        table = fill_tables(g, sel, T, delta, Q, seed)
    m = g.edge_count
    out = SimResult(trials, bins, np.zeros(m, np.int64), np.zeros(m, np.int64), np.zeros((m, bins), np.int64), np.zeros((m, bins), np.int64), table)
    for ci, count in _trial_chunks(trials, TRIAL_CHUNK):
        rng = stream(seed, "trials-vertex", ci)
        Y = rng.random((count, g.vertex_count))
        F = sample_choices_batch(g, rng, count)
        U = rng.random((count, g.vertex_count))
        res = run_vertex_batch(g, sel, table, Y, F, U, bins=bins)
        out.accepted += res.accepted
        out.active += res.active
        out.acc_bin += res.acc_bin
        out.act_bin += res.act_bin
    return out


def simulate_edge(
    g: Graph,
    sel: SelectionFunction,
    T: int,
    delta: float,
    trials: int,
    seed: int,
    Q: int | None = None,
    bins: int = 20,
    table: EstimateTable | None = None,
) -> SimResult:
    if delta == 0.0 and Q is None and table is None:
        raise ValueError("delta=0 (idealized mode) needs an explicit Q")
    if Q is None and table is None:
        Q = required_samples(sel.floor, delta, T, g.vertex_count)
    if table is None:
        table = fill_tables_edge(g, sel, T, delta, Q, seed)
    m = g.edge_count
    out = SimResult(trials, bins, np.zeros(m, np.int64), np.zeros(m, np.int64), np.zeros((m, bins), np.int64), np.zeros((m, bins), np.int64), table)
    for ci, count in _trial_chunks(trials, TRIAL_CHUNK):
        rng = stream(seed, "trials-edge", ci)
        active = rng.random((count, m)) < g.x[None, :]
        Ye = rng.random((count, m))
        U = rng.random((count, m))
        res = run_edge_batch(g, sel, table, active, Ye, U, bins=bins)
        out.accepted += res.accepted
        out.active += res.active
        out.acc_bin += res.acc_bin
        out.act_bin += res.act_bin
    return out


@dataclass
class Rank1Result:
    trials: int
    bins: int
    accepted: np.ndarray  # (m,)
    active: np.ndarray  # (m,)
    acc_bin: np.ndarray  # (m, bins) accepted by arrival bin
    act_bin: np.ndarray  # (m, bins) active by arrival bin
    safe_bin: np.ndarray  # (m, bins) trials where nothing was taken before Y_e
    all_bin: np.ndarray  # (m, bins) trials by Y_e bin

    def ratio_active(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.active > 0, self.accepted / np.maximum(self.active, 1), np.nan)


def simulate_rank1(g: Graph, trials: int, seed: int, bins: int = 20) -> Rank1Result:
    """Vectorized closed-form rank-1 runs with safety tracking.

    The first active element passing its thinning bit is the unique accept,
    so a run reduces to an argmin over eligible arrival times.
    """
    _check_rank1(g)
    m = g.edge_count
    out = Rank1Result(
        trials,
        bins,
        np.zeros(m, np.int64),
        np.zeros(m, np.int64),
        np.zeros((m, bins), np.int64),
        np.zeros((m, bins), np.int64),
        np.zeros((m, bins), np.int64),
        np.zeros((m, bins), np.int64),
    )
    for ci, count in _trial_chunks(trials, TRIAL_CHUNK):
        rng = stream(seed, "trials-rank1", ci)
        active = rng.random((count, m)) < g.x[None, :]
        Ye = rng.random((count, m))
        U = rng.random((count, m))
        eligible = active & (U <= np.exp(-Ye * g.x[None, :]))
        elig_y = np.where(eligible, Ye, np.inf)
        winner = np.argmin(elig_y, axis=1)
        has = eligible[np.arange(count), winner]
        b = np.minimum((Ye * bins).astype(np.int64), bins - 1)
        for e in range(m):
            act_e = active[:, e]
            out.active[e] += int(act_e.sum())
            out.act_bin[e] += np.bincount(b[act_e, e], minlength=bins)
            won = has & (winner == e)
            out.accepted[e] += int(won.sum())
            out.acc_bin[e] += np.bincount(b[won, e], minlength=bins)
            # Safety: was anything (other than e itself) taken before Y_e?
            other = elig_y.copy()
            other[:, e] = np.inf
            safe = np.min(other, axis=1) > Ye[:, e]
            out.all_bin[e] += np.bincount(b[:, e], minlength=bins)
            out.safe_bin[e] += np.bincount(b[safe, e], minlength=bins)
    return out

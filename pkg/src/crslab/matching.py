"""Matching result types shared by the scheme engines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Graph

__all__ = ["Matching", "BatchResult", "assert_valid_matching"]


@dataclass
class BatchResult:
    """Counters produced by one vectorized batch of trials."""

    matched: np.ndarray  # (trials, n) matched-by-t_stop flags
    accepted: np.ndarray  # (m,) accepted count per edge
    active: np.ndarray  # (m,) active-proposal count per edge
    acc_bin: np.ndarray | None = None  # (m, bins)
    act_bin: np.ndarray | None = None  # (m, bins)
    acc_edge: np.ndarray | None = None  # (trials, m) accepted indicator
    prop_is_ev: np.ndarray | None = None  # (trials, m) proposer side of accepted edge
    sel_into: np.ndarray | None = None  # (trials, n) vertex was accepted as target


@dataclass
class Matching:
    """Accepted edges with acceptance metadata and per-vertex matched flags."""

    vertex_count: int
    accepted: list[tuple[int, float, int]] = field(default_factory=list)  # (edge_id, time, proposer)
    matched: np.ndarray = None

    def __post_init__(self) -> None:
        if self.matched is None:
            self.matched = np.zeros(self.vertex_count, dtype=bool)

    def add(self, g: Graph, edge_id: int, time: float, proposer: int) -> None:
        u, v = int(g.eu[edge_id]), int(g.ev[edge_id])
        self.accepted.append((int(edge_id), float(time), int(proposer)))
        self.matched[u] = True
        self.matched[v] = True

    @property
    def size(self) -> int:
        return len(self.accepted)


def assert_valid_matching(g: Graph, m: Matching) -> None:
    """No two accepted edges may share a vertex."""
    seen = set()
    for eid, _, _ in m.accepted:
        for w in (int(g.eu[eid]), int(g.ev[eid])):
            if w in seen:
                raise AssertionError(f"vertex {w} covered twice")
            seen.add(w)

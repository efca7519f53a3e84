"""Communication graphs and temporal peer-activation rules."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError

REGULAR_RETRIES = 200


@dataclass
class Graph:
    n: int
    adjacency: list[list[int]]  # per node, sorted peer ids, no self-loops

    def degree(self, node: int) -> int:
        return len(self.adjacency[node])

    def edges(self) -> list[tuple[int, int]]:
        out = []
        for u, peers in enumerate(self.adjacency):
            for v in peers:
                if u < v:
                    out.append((u, v))
        return out


def _validate(graph: Graph) -> Graph:
    for u, peers in enumerate(graph.adjacency):
        for v in peers:
            if v == u:
                raise ValueError(f"self-loop at node {u}")
            if not 0 <= v < graph.n:
                raise ValueError(f"peer id {v} out of range at node {u}")
            if u not in graph.adjacency[v]:
                raise ValueError(f"asymmetric edge {u}->{v}")
    return graph


def _connected(adjacency: list[set[int]]) -> bool:
    n = len(adjacency)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in adjacency[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == n


def build_regular(n: int, k: int, rng: np.random.Generator) -> Graph:
    """Connected k-regular simple graph via seeded pairing with repair.

    Shuffled stubs are paired; clashing stubs are re-shuffled and retried,
    and the whole construction restarts (bounded) if it wedges or the
    result is disconnected.
    """
    if not 0 < k < n:
        raise ConfigError(f"need 0 < k < n, got k={k}, n={n}")
    if (n * k) % 2 != 0:
        raise ConfigError(f"n*k must be even, got n={n}, k={k}")

    for _ in range(REGULAR_RETRIES):
        edges = _pair_stubs(n, k, rng)
        if edges is None:
            continue
        adjacency = [set() for _ in range(n)]
        for u, v in edges:
            adjacency[u].add(v)
            adjacency[v].add(u)
        if _connected(adjacency):
            return _validate(Graph(n, [sorted(peers) for peers in adjacency]))
    raise RuntimeError(f"failed to build a connected {k}-regular graph on {n} nodes")


def _pair_stubs(n: int, k: int, rng: np.random.Generator) -> set[tuple[int, int]] | None:
    edges: set[tuple[int, int]] = set()
    stubs = list(range(n)) * k
    while stubs:
        stubs = [int(s) for s in rng.permutation(stubs)]
        leftover: list[int] = []
        it = iter(stubs)
        for u, v in zip(it, it):
            if u > v:
                u, v = v, u
            if u != v and (u, v) not in edges:
                edges.add((u, v))
            else:
                leftover.extend((u, v))
        if leftover and len(leftover) == len(stubs):
            return None  # no progress; restart from scratch
        stubs = leftover
        if stubs and not _repairable(edges, stubs):
            return None
    return edges


def _repairable(edges: set[tuple[int, int]], stubs: list[int]) -> bool:
    # Some pair of leftover stubs must still form a fresh edge.
    uniq = sorted(set(stubs))
    for i, u in enumerate(uniq):
        for v in uniq[i + 1:]:
            if (u, v) not in edges:
                return True
    return False


def build_star(n: int) -> Graph:
    """Star graph: node 0 is the hub, nodes 1..n-1 are leaves."""
    if n < 2:
        raise ConfigError(f"star graph needs at least 2 nodes, got {n}")
    adjacency = [list(range(1, n))] + [[0] for _ in range(n - 1)]
    return _validate(Graph(n, adjacency))


@dataclass
class TemporalState:
    """Per-node activation state for the temporal hierarchical network."""

    active: list[int] = field(default_factory=list)
    waiting: list[int] = field(default_factory=list)
    threshold: float = 0.8


def temporal_activation(state: TemporalState, own_accuracy: float) -> TemporalState:
    """Promote the head of the waiting list once local accuracy clears the bar.

    At most one peer moves per call; callers invoke this once per training
    session, which makes the activation rate one peer per session.
    """
    if own_accuracy < state.threshold or not state.waiting:
        return state
    head, *rest = state.waiting
    return replace(state, active=state.active + [head], waiting=rest)


def force_activate(state: TemporalState, peer: int) -> TemporalState:
    """Mark an edge live from this side because the peer activated it."""
    if peer not in state.waiting:
        return state
    return replace(
        state,
        active=state.active + [peer],
        waiting=[p for p in state.waiting if p != peer],
    )


def edge_list_text(graph: Graph) -> str:
    """One 'u v' pair per line, for auditability."""
    return "".join(f"{u} {v}\n" for u, v in graph.edges())


def from_edge_list(text: str, n: int) -> Graph:
    adjacency = [set() for _ in range(n)]
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        u, v = (int(tok) for tok in line.split())
        adjacency[u].add(v)
        adjacency[v].add(u)
    return _validate(Graph(n, [sorted(p) for p in adjacency]))

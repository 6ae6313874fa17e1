"""
Interference network: adjacency, hop distances, L-nearest neighborhoods and
distance shells.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path
from scipy.spatial.distance import cdist

from .numerics import InvalidInputError

logger = logging.getLogger(__name__)

INFINITE = np.inf
METRICS = {"chebyshev": "chebyshev", "euclidean": "euclidean"}


@dataclass(frozen=True)
class Network:
    """
    Undirected, unweighted interference network over ``n`` units.

    ``dist`` holds hop counts as floats, ``INFINITE`` for disconnected
    pairs. ``metric_dist`` is kept when the network came from coordinates
    and is only used to break ties between equal hop counts.
    """

    n: int
    adjacency: np.ndarray
    dist: np.ndarray
    points: Optional[np.ndarray] = None
    metric_dist: Optional[np.ndarray] = None

    def is_adjacent(self, i: int, j: int) -> bool:
        return bool(self.adjacency[i, j])

    def within_range(self, K: int) -> np.ndarray:
        """Boolean matrix of pairs with ``1 <= dist <= K``."""
        return (self.dist >= 1) & (self.dist <= K)


def _hop_distances(adjacency: np.ndarray) -> np.ndarray:
    # unweighted=True makes scipy run a breadth-first search per source
    graph = csr_matrix(adjacency.astype(np.int8))
    return shortest_path(graph, method="D", directed=False, unweighted=True)


def build_network_from_points(
    points: Sequence[Sequence[float]],
    radius: float = 1.0,
    metric: str = "chebyshev",
) -> Network:
    """
    Geometric network: i and j are adjacent when their metric distance is
    at most ``radius``.
    """
    coords = np.asarray(points, dtype=float)
    if coords.size == 0:
        raise InvalidInputError("point list is empty")
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise InvalidInputError("points must be an (n, 2) array of coordinates")
    if radius <= 0:
        raise InvalidInputError("radius must be positive")
    if metric not in METRICS:
        raise InvalidInputError(f"unknown metric '{metric}' (expected one of {sorted(METRICS)})")

    metric_dist = cdist(coords, coords, metric=METRICS[metric])
    adjacency = metric_dist <= radius
    np.fill_diagonal(adjacency, False)
    return Network(
        n=coords.shape[0],
        adjacency=adjacency,
        dist=_hop_distances(adjacency),
        points=coords,
        metric_dist=metric_dist,
    )


def build_network_from_edges(n: int, edges: Iterable[Tuple[int, int]]) -> Network:
    """Network from an undirected edge list; self-loops and duplicates are ignored."""
    if n < 1:
        raise InvalidInputError("network needs at least one unit")
    adjacency = np.zeros((n, n), dtype=bool)
    for src, dst in edges:
        src, dst = int(src), int(dst)
        if not (0 <= src < n and 0 <= dst < n):
            raise InvalidInputError(f"edge ({src}, {dst}) references a unit outside [0, {n})")
        if src == dst:
            continue
        adjacency[src, dst] = True
        adjacency[dst, src] = True
    return Network(n=n, adjacency=adjacency, dist=_hop_distances(adjacency))


def treated_neighbor_counts(net: Network, treatments: Sequence[int], K: int) -> np.ndarray:
    """S_i: number of treated units j != i with ``dist(i, j) <= K``."""
    D = np.asarray(treatments, dtype=int)
    if D.shape != (net.n,):
        raise InvalidInputError("treatment vector length must equal network size")
    return net.within_range(K).astype(int) @ D


def within_range_neighbors(net: Network, i: int, K: int) -> np.ndarray:
    row = net.dist[i]
    return np.flatnonzero((row >= 1) & (row <= K))


@dataclass(frozen=True)
class NeighborhoodIndex:
    """
    Distance-ranked L-neighborhoods and the aligned treatment vectors.

    ``neighbors`` is an (n, L) id array padded with -1; ``pad_mask`` marks
    the padded slots, whose ``treatment_vector`` entries are 0.
    """

    L: int
    K: int
    neighbors: np.ndarray
    treatment_vector: np.ndarray
    pad_mask: np.ndarray
    violations: int = 0

    @property
    def n(self) -> int:
        return self.neighbors.shape[0]

    def neighbors_of(self, i: int) -> np.ndarray:
        row = self.neighbors[i]
        return row[~self.pad_mask[i]]

    def pair_rows(self) -> np.ndarray:
        """(P, 2) array of (i, j) pairs with j in N_i, in index order."""
        i_idx, slot = np.nonzero(~self.pad_mask)
        return np.column_stack((i_idx, self.neighbors[i_idx, slot])).astype(int)


def _ranking_key(net: Network, i: int, candidates: np.ndarray) -> np.ndarray:
    """Order candidates by (hop distance, raw metric distance, unit id)."""
    hops = net.dist[i, candidates]
    if net.metric_dist is not None:
        raw = net.metric_dist[i, candidates]
        order = np.lexsort((candidates, raw, hops))
    else:
        order = np.lexsort((candidates, hops))
    return candidates[order]


def build_neighborhood_index(
    net: Network,
    treatments: Sequence[int],
    L: int,
    K: int,
    sampler: Optional[np.random.Generator] = None,
) -> NeighborhoodIndex:
    """
    Select N_i for every unit.

    Without a sampler N_i is the first L reachable units under the
    (hop, metric, id) ranking. With a sampler, a unit that has more than L
    units within hop distance K gets a uniformly random L-subset of them,
    reported in ranking order.
    """
    if L < 1 or K < 1:
        raise InvalidInputError("L and K must both be >= 1")
    D = np.asarray(treatments, dtype=int)
    if D.shape != (net.n,):
        raise InvalidInputError("treatment vector length must equal network size")

    neighbors = np.full((net.n, L), -1, dtype=int)
    pad_mask = np.ones((net.n, L), dtype=bool)
    violations = 0

    for i in range(net.n):
        row = net.dist[i]
        reachable = np.flatnonzero(np.isfinite(row) & (row >= 1))
        if reachable.size == 0:
            continue
        in_range = reachable[row[reachable] <= K]
        if sampler is not None and in_range.size > L:
            chosen = sampler.choice(in_range, size=L, replace=False)
            selected = _ranking_key(net, i, np.sort(chosen))
        else:
            selected = _ranking_key(net, i, reachable)[:L]

        neighbors[i, : selected.size] = selected
        pad_mask[i, : selected.size] = False
        if np.any(row[selected] > K):
            violations += 1

    treatment_vector = np.where(pad_mask, 0, D[np.clip(neighbors, 0, None)])
    if violations:
        logger.warning(
            "%d of %d units have L-neighbors beyond interference range K=%d", violations, net.n, K
        )
    return NeighborhoodIndex(
        L=L,
        K=K,
        neighbors=neighbors,
        treatment_vector=treatment_vector.astype(int),
        pad_mask=pad_mask,
        violations=violations,
    )


@dataclass(frozen=True)
class DistanceShell:
    """Units at exact hop distance s from each unit, for s = 0..s_max."""

    s_max: int
    shells: Dict[int, List[np.ndarray]] = field(default_factory=dict)
    avg_shell_size: Dict[int, float] = field(default_factory=dict)

    def members(self, s: int, i: int) -> np.ndarray:
        return self.shells[s][i]


def distance_shells(net: Network, s_max: int) -> DistanceShell:
    if s_max < 0:
        raise InvalidInputError("s_max must be non-negative")
    shells: Dict[int, List[np.ndarray]] = {}
    avg: Dict[int, float] = {}
    for s in range(s_max + 1):
        layer = [np.flatnonzero(net.dist[i] == s) for i in range(net.n)]
        shells[s] = layer
        avg[s] = float(sum(len(members) for members in layer)) / net.n
    return DistanceShell(s_max=s_max, shells=shells, avg_shell_size=avg)

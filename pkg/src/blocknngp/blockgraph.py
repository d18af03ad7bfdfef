"""Directed conditioning structure over blocks.

Block k draws its past from the nb earlier blocks whose centroids are
closest (ties: lower block index), ordered nearest first. The induced
graph over blocks is acyclic by construction since edges only point to
earlier positions in the conditioning sequence.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import BlockPartition


@dataclass(frozen=True)
class BlockGraph:
    """Past-neighbor lists per block, nearest-centroid order."""

    neighbors: list  # block k -> int64 array of earlier block indices
    nb: int

    def __post_init__(self):
        object.__setattr__(
            self, "neighbors",
            [np.asarray(v, dtype=np.int64) for v in self.neighbors])
        for k, v in enumerate(self.neighbors):
            if v.size and v.max() >= k:
                raise ValueError(f"block {k} conditions on a non-earlier block")

    @property
    def M(self) -> int:
        return len(self.neighbors)


def build_graph(part: BlockPartition, nb: int) -> BlockGraph:
    """Select min(nb, k) nearest earlier blocks for each block k."""
    if nb < 0:
        raise ValueError("nb must be non-negative")
    cents = part.centroids
    neighbors = []
    for k in range(part.M):
        m = min(nb, k)
        if m == 0:
            neighbors.append(np.empty(0, dtype=np.int64))
            continue
        d = np.sqrt(np.sum((cents[:k] - cents[k]) ** 2, axis=1))
        # primary key distance, secondary key block index
        order = np.lexsort((np.arange(k), d))
        neighbors.append(order[:m].astype(np.int64))
    return BlockGraph(neighbors=neighbors, nb=nb)


def conditioning_indices(graph: BlockGraph, part: BlockPartition, k: int) -> np.ndarray:
    """Locations block k conditions on: neighbor-block members, nearest block first."""
    nbr = graph.neighbors[k]
    if nbr.size == 0:
        return np.empty(0, dtype=np.int64)
    return np.concatenate([part.block_members[j] for j in nbr])


def location_conditioning_set(graph: BlockGraph, part: BlockPartition,
                              loc: int) -> np.ndarray:
    """Conditioning set of one location: its block mates, then the members
    of the block's past neighbors."""
    k = int(part.block_of[loc])
    own = part.block_members[k]
    own = own[own != loc]
    return np.concatenate([own, conditioning_indices(graph, part, k)])


def graph_edges(graph: BlockGraph) -> np.ndarray:
    """(E, 2) array of directed edges (block, earlier neighbor block)."""
    rows = [(k, int(j)) for k in range(graph.M) for j in graph.neighbors[k]]
    if not rows:
        return np.empty((0, 2), dtype=np.int64)
    return np.array(rows, dtype=np.int64)

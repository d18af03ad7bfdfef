"""Spatial locations and domain blocking.

Locations live on a 2-d plane and are indexed 0..n-1. A partition groups
them into M disjoint non-empty blocks; the position of a block in the
partition's member list is its place in the conditioning sequence (block 0
is the root of the ordering, block k conditions only on blocks < k).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


def distance(a, b) -> float:
    """Euclidean distance between two coordinate pairs."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def _check_coords(coords) -> np.ndarray:
    coords = np.ascontiguousarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValueError("coords must be an (n, 2) array")
    if coords.shape[0] < 1:
        raise ValueError("need at least one location")
    if not np.all(np.isfinite(coords)):
        raise ValueError("coords must be finite")
    return coords


def _find_duplicate(coords) -> tuple[int, int] | None:
    order = np.lexsort((coords[:, 1], coords[:, 0]))
    srt = coords[order]
    same = np.all(srt[1:] == srt[:-1], axis=1)
    hits = np.nonzero(same)[0]
    if hits.size:
        i = hits[0]
        return int(order[i]), int(order[i + 1])
    return None


@dataclass(frozen=True)
class LocationSet:
    """Ordered, pairwise-distinct 2-d coordinates."""

    coords: np.ndarray

    def __post_init__(self):
        coords = _check_coords(self.coords)
        object.__setattr__(self, "coords", coords)
        dup = _find_duplicate(coords)
        if dup is not None:
            raise ValueError(f"duplicate location at rows {dup[0]} and {dup[1]}")

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    def bbox(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the point cloud."""
        lo = self.coords.min(axis=0)
        hi = self.coords.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])


@dataclass(frozen=True)
class GridRegions:
    """Cell geometry of a regular partition, for locating new sites."""

    rows: int
    cols: int
    bbox: tuple[float, float, float, float]
    cell_block: dict  # cell id (row-major) -> block index; dropped cells absent

    def block_of_point(self, xy) -> int:
        """Block whose cell contains xy, or -1 if that cell was dropped."""
        xmin, ymin, xmax, ymax = self.bbox
        wx = (xmax - xmin) or 1.0
        wy = (ymax - ymin) or 1.0
        ix = min(max(int((xy[0] - xmin) / wx * self.cols), 0), self.cols - 1)
        iy = min(max(int((xy[1] - ymin) / wy * self.rows), 0), self.rows - 1)
        return self.cell_block.get(iy * self.cols + ix, -1)


class _TreeNode:
    __slots__ = ("axis", "cut", "left", "right", "idx", "block", "birth")

    def __init__(self, idx, birth):
        self.idx = idx          # member indices while a leaf
        self.birth = birth      # creation order, breaks largest-leaf ties
        self.axis = None
        self.cut = None
        self.left = None
        self.right = None
        self.block = -1


@dataclass(frozen=True)
class TreeRegions:
    """Split tree of a kd-tree partition, for locating new sites."""

    root: object

    def block_of_point(self, xy) -> int:
        node = self.root
        while node.axis is not None:
            node = node.left if xy[node.axis] <= node.cut else node.right
        return node.block


@dataclass(frozen=True)
class BlockPartition:
    """Disjoint cover of a location set; list position = conditioning order."""

    block_of: np.ndarray            # (n,) block index of each location
    block_members: list             # block k -> sorted member indices
    centroids: np.ndarray           # (M, 2) member coordinate means
    regions: object = None          # GridRegions | TreeRegions | None

    def __post_init__(self):
        members = [np.asarray(m, dtype=np.int64) for m in self.block_members]
        object.__setattr__(self, "block_members", members)
        n = self.block_of.shape[0]
        if any(m.size == 0 for m in members):
            raise ValueError("empty block")
        seen = np.concatenate(members)
        if seen.size != n or np.unique(seen).size != n:
            raise ValueError("blocks must cover every location exactly once")

    @property
    def M(self) -> int:
        return len(self.block_members)

    @property
    def n(self) -> int:
        return self.block_of.shape[0]

    def sizes(self) -> np.ndarray:
        return np.array([m.size for m in self.block_members])


def _partition_from_members(coords, members, regions=None) -> BlockPartition:
    n = coords.shape[0]
    block_of = np.full(n, -1, dtype=np.int64)
    cents = np.empty((len(members), 2))
    for k, m in enumerate(members):
        block_of[m] = k
        cents[k] = coords[m].mean(axis=0)
    return BlockPartition(block_of=block_of, block_members=members,
                          centroids=cents, regions=regions)


def regular_partition(locs: LocationSet, rows: int, cols: int) -> BlockPartition:
    """Bin locations into a rows x cols grid over the bounding box.

    Cells are numbered row-major; empty cells are dropped (logged) and the
    remaining blocks renumbered consecutively in cell order.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    coords = locs.coords
    xmin, ymin, xmax, ymax = locs.bbox()
    wx = (xmax - xmin) or 1.0
    wy = (ymax - ymin) or 1.0
    ix = np.minimum((coords[:, 0] - xmin) / wx * cols, cols - 1).astype(np.int64)
    iy = np.minimum((coords[:, 1] - ymin) / wy * rows, rows - 1).astype(np.int64)
    cell = iy * cols + ix
    occupied = np.unique(cell)
    n_empty = rows * cols - occupied.size
    if n_empty:
        log.warning("regular partition: dropping %d empty cell(s) of %d",
                    n_empty, rows * cols)
    members = [np.sort(np.nonzero(cell == c)[0]) for c in occupied]
    cell_block = {int(c): k for k, c in enumerate(occupied)}
    regions = GridRegions(rows=rows, cols=cols, bbox=(xmin, ymin, xmax, ymax),
                          cell_block=cell_block)
    return _partition_from_members(coords, members, regions)


def _lower_median(vals) -> float:
    srt = np.sort(vals)
    return float(srt[(srt.size - 1) // 2])


def _split_leaf(idx, coords):
    """Split member indices at the lower median of the wider-extent axis.

    Coordinates <= cut go left. When every value ties at or below the cut
    (cut equals the max), the cut falls back to the largest strictly
    smaller value; an axis where all values coincide is skipped.
    """
    pts = coords[idx]
    ext = pts.max(axis=0) - pts.min(axis=0)
    axes = (0, 1) if ext[0] >= ext[1] else (1, 0)
    for ax in axes:
        vals = pts[:, ax]
        cut = _lower_median(vals)
        left = vals <= cut
        if left.all():
            below = vals[vals < vals.max()]
            if below.size == 0:
                continue
            cut = float(below.max())
            left = vals <= cut
        return ax, cut, idx[left], idx[~left]
    raise ValueError("cannot split a leaf of coincident points")


def kdtree_partition(locs: LocationSet, M: int) -> BlockPartition:
    """Partition into M blocks by recursive median splits.

    The largest current leaf (ties: earliest created) is split along its
    wider coordinate extent until M leaves exist; blocks are numbered by
    depth-first left-to-right leaf order, so sizes stay within one point
    of n/M when M divides n evenly.
    """
    n = locs.n
    if not 1 <= M <= n:
        raise ValueError(f"M must be in [1, {n}], got {M}")
    coords = locs.coords
    root = _TreeNode(np.arange(n, dtype=np.int64), birth=0)
    leaves = [root]
    births = 1
    while len(leaves) < M:
        order = max(range(len(leaves)),
                    key=lambda i: (leaves[i].idx.size, -leaves[i].birth))
        node = leaves.pop(order)
        ax, cut, li, ri = _split_leaf(node.idx, coords)
        node.axis, node.cut, node.idx = ax, cut, None
        node.left = _TreeNode(li, births)
        node.right = _TreeNode(ri, births + 1)
        births += 2
        leaves.extend([node.left, node.right])
    members = []
    stack = [root]
    while stack:
        node = stack.pop()
        if node.axis is None:
            node.block = len(members)
            members.append(np.sort(node.idx))
        else:
            stack.append(node.right)
            stack.append(node.left)
    return _partition_from_members(coords, members, TreeRegions(root=root))


def singleton_partition(locs: LocationSet) -> BlockPartition:
    """One location per block, ordered by location index."""
    members = [np.array([i], dtype=np.int64) for i in range(locs.n)]
    return _partition_from_members(locs.coords, members, None)


def locate_block(part: BlockPartition, locs: LocationSet, xy) -> tuple[int, bool]:
    """Block responsible for a (possibly new) site.

    Uses the partition's region geometry when available, falling back to
    the nearest block centroid (also used for dropped grid cells). Returns
    (block index, outside-bounding-box flag).
    """
    xy = np.asarray(xy, dtype=float)
    xmin, ymin, xmax, ymax = locs.bbox()
    outside = not (xmin <= xy[0] <= xmax and ymin <= xy[1] <= ymax)
    block = -1
    if part.regions is not None and not outside:
        block = part.regions.block_of_point(xy)
    if block < 0:
        d2 = np.sum((part.centroids - xy) ** 2, axis=1)
        block = int(np.argmin(d2))
    return block, outside

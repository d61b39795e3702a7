"""Partitioning of the 1-D fluid cell list and partition-quality metrics.

The default assignment cuts the contiguous index range [1, N_f] into N
equal chunks (the trailing ones smaller by one cell). Externally
computed partitions are imported as a text file of start indices.
Quality metrics count, per partition, the distinct neighbor partitions
and the directed PDF links crossing partition boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, PartitionMapError, TooManyProcessesError

__all__ = [
    "PartitionAssignment",
    "PartitionStats",
    "chunk_ranges",
    "emit_histograms",
    "import_partition_map",
    "partition_stats",
]


@dataclass(frozen=True, eq=False)
class PartitionAssignment:
    """Boundaries of N contiguous index ranges covering [1, N_f]."""

    n_fluid: int
    boundaries: np.ndarray  # (N + 1,) uint64; first 1, last N_f + 1

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=np.uint64)
        if b.ndim != 1 or b.size < 2:
            raise ValueError(f"need at least 2 boundaries, got shape {b.shape}")
        if b[0] != 1 or b[-1] != self.n_fluid + 1:
            raise ValueError(
                f"boundaries must run from 1 to N_f+1={self.n_fluid + 1}, "
                f"got {b[0]}..{b[-1]}"
            )
        if not (b[1:] > b[:-1]).all():
            raise ValueError("boundaries must be strictly increasing")
        object.__setattr__(self, "boundaries", b)

    @property
    def N(self) -> int:
        return self.boundaries.size - 1

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.boundaries).astype(np.int64)

    def owner_of(self, ic) -> np.ndarray:
        """Partition id of each contiguous index (vectorized)."""
        return (
            np.searchsorted(self.boundaries, np.asarray(ic, dtype=np.uint64), "right")
            - 1
        )

    def __eq__(self, other):
        if not isinstance(other, PartitionAssignment):
            return NotImplemented
        return self.n_fluid == other.n_fluid and np.array_equal(
            self.boundaries, other.boundaries
        )


def chunk_ranges(n_fluid: int, N: int) -> PartitionAssignment:
    """Equal chunking: the first (N_f mod N) chunks are one cell larger."""
    if N < 1:
        raise ValueError(f"partition count must be >= 1, got {N}")
    if N > n_fluid:
        raise TooManyProcessesError(
            f"{N} partitions requested but only {n_fluid} fluid cells exist"
        )
    base, extra = divmod(n_fluid, N)
    sizes = np.full(N, base, dtype=np.uint64)
    sizes[:extra] += 1
    bounds = np.empty(N + 1, dtype=np.uint64)
    bounds[0] = 1
    np.cumsum(sizes, out=bounds[1:])
    bounds[1:] += 1
    return PartitionAssignment(n_fluid=n_fluid, boundaries=bounds)


def import_partition_map(path, n_fluid: int) -> PartitionAssignment:
    """Read one start index per line; starts must begin at 1, increase
    strictly and stay within [1, N_f]."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    starts = []
    for lineno, line in enumerate(lines, 1):
        s = line.strip()
        if not s:
            raise PartitionMapError("empty line in partition map", line=lineno)
        try:
            v = int(s)
        except ValueError:
            raise PartitionMapError(f"not an integer: {s!r}", line=lineno) from None
        if lineno == 1 and v != 1:
            raise PartitionMapError(f"first start must be 1, got {v}", line=lineno)
        if starts and v <= starts[-1]:
            raise PartitionMapError(
                f"start {v} does not increase past {starts[-1]}", line=lineno
            )
        if not 1 <= v <= n_fluid:
            raise PartitionMapError(
                f"start {v} outside [1, {n_fluid}]", line=lineno
            )
        starts.append(v)
    if not starts:
        raise PartitionMapError("partition map contains no start indices")
    bounds = np.array(starts + [n_fluid + 1], dtype=np.uint64)
    return PartitionAssignment(n_fluid=n_fluid, boundaries=bounds)


@dataclass(frozen=True)
class PartitionStats:
    """Per-partition link metrics over a given assignment."""

    fluid_cells: np.ndarray     # (N,) int64
    neighbor_count: np.ndarray  # (N,) distinct other partitions linked to
    remote_links: np.ndarray    # (N,) directed PDF links leaving the partition

    @property
    def N(self) -> int:
        return self.fluid_cells.size

    @property
    def total_remote_links(self) -> int:
        return int(self.remote_links.sum())

    @property
    def max_neighbor_count(self) -> int:
        return int(self.neighbor_count.max()) if self.N else 0


def partition_stats(records, assignment: PartitionAssignment) -> PartitionStats:
    """Count remote links and neighbor partitions for every partition.

    A directed link a -> b counts when partition(a) != partition(b);
    links to solid cells (nbr 0) and links staying inside a partition
    (including periodic wraps onto the same partition) do not count.
    """
    N = assignment.N
    n_fluid = assignment.n_fluid
    ic = records.ic
    nbr = records.nbr
    if len(records) != n_fluid:
        raise DataError(
            f"expected {n_fluid} records covering [1, {n_fluid}], got {len(records)}"
        )
    if n_fluid and (ic.min() < 1 or ic.max() > n_fluid):
        raise DataError("record indices outside [1, N_f]")
    if n_fluid and int(nbr.max()) > n_fluid:
        raise DataError(
            f"neighbor index {int(nbr.max())} exceeds N_f={n_fluid}"
        )
    owner = assignment.owner_of(ic)
    fluid_cells = np.bincount(owner, minlength=N).astype(np.int64)

    valid = nbr != 0
    src = np.broadcast_to(owner[:, None], nbr.shape)[valid]
    dst = assignment.owner_of(nbr[valid])
    cross = src != dst
    remote_links = np.bincount(src[cross], minlength=N).astype(np.int64)
    pair_ids = np.unique(src[cross].astype(np.int64) * N + dst[cross])
    neighbor_count = np.bincount(pair_ids // N, minlength=N).astype(np.int64)
    return PartitionStats(
        fluid_cells=fluid_cells,
        neighbor_count=neighbor_count,
        remote_links=remote_links,
    )


def emit_histograms(stats: PartitionStats, prefix) -> tuple[str, str]:
    """Write two CSV histograms and return their paths.

    <prefix>_neighbors.csv uses unit bins and lists only occupied bins;
    <prefix>_remote_links.csv uses 64 equal-width bins (all listed,
    labeled by lower edge).
    """
    neighbors_path = f"{prefix}_neighbors.csv"
    remote_path = f"{prefix}_remote_links.csv"

    values, counts = np.unique(stats.neighbor_count, return_counts=True)
    with open(neighbors_path, "w", encoding="ascii") as fh:
        fh.write("bin,count\n")
        for v, c in zip(values, counts):
            fh.write(f"{int(v)},{int(c)}\n")

    top = int(stats.remote_links.max()) if stats.N else 0
    width = max(1, -(-(top + 1) // 64))
    binned = np.bincount(
        np.minimum(stats.remote_links // width, 63).astype(np.int64), minlength=64
    )
    with open(remote_path, "w", encoding="ascii") as fh:
        fh.write("bin,count\n")
        for k in range(64):
            fh.write(f"{k * width},{int(binned[k])}\n")
    return neighbors_path, remote_path

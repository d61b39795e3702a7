"""End-to-end preprocessing: voxel grid in, sparse representation out.

Ties together decomposition, run detection, the tree reduction, halo
exchange and adjacency construction. The output depends only on the
grid, the numbering scheme and the periodic flags; the preprocessor
rank count never changes a single byte.
"""

from __future__ import annotations

import numpy as np

from .adjacency import SparseRecords, build_adjacency, halo_exchange
from .errors import ConsistencyError
from .geometry import VoxelGrid, decompose_ranks
from .indexer import (
    CellOrder,
    assign_contiguous,
    build_rank_tree,
    find_runs,
    octree_reduce,
)
from .numbering import NumberingScheme, scheme_text
from .sparse_io import SparseHeader, write_sparse

__all__ = [
    "contiguous_index_field",
    "preprocess_grid",
    "preprocess_to_file",
]


def _distributed_ic(grid, scheme, boxes, order, rng=None):
    tree = build_rank_tree(len(boxes))
    lists = [find_runs(grid, scheme, b, boxes, order=order) for b in boxes]
    assigned = octree_reduce(lists, tree, rng=rng)
    return [
        assign_contiguous(grid, scheme, b, assigned[b.rank], order=order)
        for b in boxes
    ]


def contiguous_index_field(
    grid: VoxelGrid, scheme: NumberingScheme, nranks: int = 1, rng=None
) -> np.ndarray:
    """Dense (Z, Y, X) map of I_c computed via the distributed path."""
    X, Y, Z = grid.dims
    boxes = decompose_ranks(grid.dims, nranks)
    order = CellOrder(grid.dims, scheme)
    ic_by_rank = _distributed_ic(grid, scheme, boxes, order, rng=rng)
    dense = np.zeros((Z, Y, X), dtype=np.uint64)
    for b in boxes:
        dense[b.lo[2] : b.hi[2], b.lo[1] : b.hi[1], b.lo[0] : b.hi[0]] = ic_by_rank[
            b.rank
        ]
    return dense


def preprocess_grid(
    grid: VoxelGrid,
    scheme: NumberingScheme,
    nranks: int = 1,
    periodic=(False, False, False),
    rng=None,
) -> tuple[SparseHeader, SparseRecords]:
    """Produce the sorted sparse records and matching header in memory."""
    boxes = decompose_ranks(grid.dims, nranks)
    order = CellOrder(grid.dims, scheme)
    ic_by_rank = _distributed_ic(grid, scheme, boxes, order, rng=rng)
    halos = halo_exchange(grid, boxes, ic_by_rank, periodic=periodic)
    records = SparseRecords.concat(build_adjacency(h) for h in halos).sorted_by_ic()
    if len(records) != grid.fluid_count:
        raise ConsistencyError(
            f"adjacency produced {len(records)} records "
            f"for {grid.fluid_count} fluid cells"
        )
    header = SparseHeader(
        dims=grid.dims,
        n_fluid=grid.fluid_count,
        scheme_text=scheme_text(scheme),
        periodic=tuple(bool(p) for p in periodic),
    )
    return header, records


def preprocess_to_file(
    grid: VoxelGrid,
    scheme: NumberingScheme,
    path,
    nranks: int = 1,
    periodic=(False, False, False),
    part_starts=None,
) -> SparseHeader:
    """Preprocess and write the sparse file; returns the header."""
    header, records = preprocess_grid(grid, scheme, nranks=nranks, periodic=periodic)
    if part_starts is not None:
        header = SparseHeader(
            dims=header.dims,
            n_fluid=header.n_fluid,
            scheme_text=header.scheme_text,
            periodic=header.periodic,
            part_starts=tuple(int(s) for s in part_starts),
        )
    write_sparse(path, records, header)
    return header

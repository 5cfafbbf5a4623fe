"""Dense 3D popularity tensor with an observation mask, plus block algebra.

The tensor holds one real value per (user, post, time-bin) cell and a
boolean mask marking which cells were actually observed.  Unobserved cells
are stored as 0 but carry no meaning; all downstream arithmetic must
consult the mask rather than test for zero.  Blocks are contiguous
sub-tensors used as the unit of low-rank analysis; embedding a block back
into a zero tensor of the parent shape is the inverse of extraction, so a
disjoint exhaustive block cover sums back to the original tensor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Dims = tuple[int, int, int]


@dataclass
class MaskedTensor:
    """Dense (users x posts x time) values with a same-shape observation mask."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.ndim != 3:
            raise ValueError(f"tensor must be 3-dimensional, got ndim={self.values.ndim}")
        if self.values.shape != self.mask.shape:
            raise ValueError(f"values shape {self.values.shape} != mask shape {self.mask.shape}")
        if any(d < 1 for d in self.values.shape):
            raise ValueError(f"all dimensions must be >= 1, got {self.values.shape}")

    @property
    def dims(self) -> Dims:
        return self.values.shape

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())

    def set_observed(self, u: int, v: int, t: int, value: float) -> None:
        """Record an observed value at (u, v, t); last write wins."""
        _check_index(self.dims, (u, v, t))
        self.values[u, v, t] = float(value)
        self.mask[u, v, t] = True

    def copy(self) -> "MaskedTensor":
        return MaskedTensor(self.values.copy(), self.mask.copy())


@dataclass
class Block:
    """A contiguous sub-tensor and where it sits in its parent."""

    data: np.ndarray
    location: Dims

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.location = tuple(int(x) for x in self.location)
        if self.data.ndim != 3:
            raise ValueError(f"block data must be 3-dimensional, got ndim={self.data.ndim}")
        if any(d < 1 for d in self.data.shape):
            raise ValueError(f"block extents must be >= 1, got {self.data.shape}")
        if any(o < 0 for o in self.location):
            raise ValueError(f"block offsets must be >= 0, got {self.location}")

    @property
    def extents(self) -> Dims:
        return self.data.shape


def new_tensor(dims: Dims) -> MaskedTensor:
    """All-zero, fully unobserved tensor of the given shape."""
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise ValueError(f"dims must be three positive integers, got {dims}")
    return MaskedTensor(np.zeros(dims), np.zeros(dims, dtype=bool))


def _check_index(dims: Dims, idx: Dims) -> None:
    for axis, (i, d) in enumerate(zip(idx, dims)):
        if not 0 <= i < d:
            raise IndexError(f"index {i} out of range [0, {d}) on axis {axis}")


def _check_block_bounds(dims: Dims, location: Dims, extents: Dims) -> None:
    for axis, (off, ext, d) in enumerate(zip(location, extents, dims)):
        if ext < 1:
            raise ValueError(f"block extent must be >= 1, got {ext} on axis {axis}")
        if off < 0 or off + ext > d:
            raise ValueError(
                f"block [{off}, {off + ext}) exceeds parent dimension {d} on axis {axis}"
            )


def extract_block(tensor: MaskedTensor, location: Dims, extents: Dims) -> Block:
    """Copy the sub-tensor of shape `extents` starting at `location`."""
    _check_block_bounds(tensor.dims, location, extents)
    u0, v0, t0 = location
    mu, nv, tt = extents
    return Block(tensor.values[u0 : u0 + mu, v0 : v0 + nv, t0 : t0 + tt].copy(), location)


def embed_block(dims: Dims, block: Block) -> MaskedTensor:
    """Zero tensor of shape `dims` with the block's values at its location.

    Inverse of :func:`extract_block` on the covered region, so summing the
    embeddings of a disjoint exhaustive cover reproduces the source tensor.
    """
    dims = tuple(int(d) for d in dims)
    _check_block_bounds(dims, block.location, block.extents)
    out = new_tensor(dims)
    u0, v0, t0 = block.location
    mu, nv, tt = block.extents
    out.values[u0 : u0 + mu, v0 : v0 + nv, t0 : t0 + tt] = block.data
    return out


def unfold_time(block: Block) -> np.ndarray:
    """Flatten (user, post) into rows, keep time as columns.

    Row (u * n + v), column t holds data[u, v, t]; this is the matricization
    every spectral operation in the solver works on.
    """
    mu, nv, tt = block.extents
    return block.data.reshape(mu * nv, tt).copy()


def fold_time(matrix: np.ndarray, extents: Dims, location: Dims = (0, 0, 0)) -> Block:
    """Inverse of :func:`unfold_time`."""
    matrix = np.asarray(matrix, dtype=np.float64)
    mu, nv, tt = extents
    if matrix.shape != (mu * nv, tt):
        raise ValueError(f"matrix shape {matrix.shape} does not fold into extents {extents}")
    return Block(matrix.reshape(mu, nv, tt).copy(), location)


def add(a: MaskedTensor, b: MaskedTensor) -> MaskedTensor:
    """Elementwise sum; an entry of the result is observed if either input's is."""
    if a.dims != b.dims:
        raise ValueError(f"dimension mismatch: {a.dims} vs {b.dims}")
    return MaskedTensor(a.values + b.values, a.mask | b.mask)


def scale(a: MaskedTensor, c: float) -> MaskedTensor:
    """Elementwise scaling; the mask is unchanged."""
    return MaskedTensor(a.values * float(c), a.mask.copy())

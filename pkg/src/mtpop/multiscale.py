"""Time-scale plans and block layouts.

Each adopted time scale (week / month / season by default) gets its own
layout: a disjoint, exhaustive tiling of the tensor into blocks whose time
extent is the scale's window rounded up to a power of two and whose
user/post extents are powers of two of the same order of magnitude, never
smaller than the minimum group size from the rearrangement.  Trailing
remainders stay as smaller edge blocks instead of being padded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from mtpop.tensor import Block, Dims, MaskedTensor, extract_block


@dataclass(frozen=True)
class TimeScale:
    name: str
    window_bins: int

    def __post_init__(self):
        if self.window_bins < 1:
            raise ValueError(f"window_bins must be >= 1, got {self.window_bins}")


@dataclass
class ScalePlan:
    """Ordered list of adopted time scales."""

    scales: list[TimeScale]

    def __post_init__(self):
        if not self.scales:
            raise ValueError("a scale plan needs at least one time scale")
        names = [s.name for s in self.scales]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate scale names: {names}")

    @property
    def count(self) -> int:
        return len(self.scales)


# calendar windows in days for the default general plan
_DEFAULT_WINDOWS = (("week", 7.0), ("month", 30.0), ("season", 91.0))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def default_scale_plan(time_granularity_days: float = 1.0) -> ScalePlan:
    """Week/month/season plan expressed in bins of the given width (days)."""
    if time_granularity_days <= 0:
        raise ValueError("time granularity must be positive")
    scales = []
    for name, days in _DEFAULT_WINDOWS:
        bins = _round_half_up(days / time_granularity_days)
        if bins < 1:
            raise ValueError(
                f"granularity {time_granularity_days}d is coarser than the {name} window ({days}d)"
            )
        scales.append(TimeScale(name, bins))
    return ScalePlan(scales)


@dataclass
class BlockLayout:
    """Disjoint exhaustive tiling of a tensor for one time scale."""

    scale: TimeScale
    dims: Dims
    blocks: list[tuple[Dims, Dims]]  # (location, extents), in (u, v, t) nested order

    @property
    def count(self) -> int:
        return len(self.blocks)


def _next_pow2(n: int) -> int:
    return 1 << max(0, math.ceil(math.log2(n))) if n > 1 else 1


def _prev_pow2(n: int) -> int:
    return 1 << (n.bit_length() - 1)


def _round_window(window: int, rounding: str) -> int:
    if rounding == "base2":
        return _next_pow2(window)
    if rounding == "basee":
        return max(1, _round_half_up(math.e ** math.ceil(math.log(window)))) if window > 1 else 1
    raise ValueError(f"unknown rounding mode {rounding!r} (expected 'base2' or 'basee')")


def plan_layout(
    dims: Dims,
    scale: TimeScale,
    min_user_group: int = 1,
    min_post_group: int = 1,
    rounding: str = "base2",
) -> BlockLayout:
    """Choose block extents for one scale and tile the tensor with them.

    The time extent is the scale window rounded up per ``rounding`` (base-2
    by default) and capped at the largest power of two that fits the time
    axis.  User/post extents are the smallest power of two that is at least
    ``max(min_group, t/2)``, capped at the axis length.  Whatever does not
    divide evenly is kept as smaller trailing blocks.
    """
    u_n, v_n, t_n = dims
    if min_user_group < 1 or min_post_group < 1:
        raise ValueError("minimum group sizes must be >= 1")
    if min_user_group > u_n or min_post_group > v_n:
        raise ValueError(
            f"minimum group sizes ({min_user_group}, {min_post_group}) exceed dims {dims[:2]}"
        )

    t_j = _round_window(scale.window_bins, rounding)
    if t_j > t_n:
        t_j = _prev_pow2(t_n) if rounding == "base2" else t_n

    def axis_extent(min_group: int, dim: int) -> int:
        target = max(min_group, t_j // 2, 1)
        ext = _next_pow2(target)
        return ext if ext <= dim else _prev_pow2(dim)

    m_j = axis_extent(min_user_group, u_n)
    n_j = axis_extent(min_post_group, v_n)

    blocks = []
    for u0 in range(0, u_n, m_j):
        for v0 in range(0, v_n, n_j):
            for t0 in range(0, t_n, t_j):
                ext = (min(m_j, u_n - u0), min(n_j, v_n - v0), min(t_j, t_n - t0))
                blocks.append(((u0, v0, t0), ext))
    return BlockLayout(scale, tuple(dims), blocks)


def partition(t: MaskedTensor, layout: BlockLayout) -> list[Block]:
    """Cut the tensor into the layout's blocks, in layout order."""
    if tuple(t.dims) != tuple(layout.dims):
        raise ValueError(f"layout dims {layout.dims} do not match tensor dims {t.dims}")
    return [extract_block(t, loc, ext) for loc, ext in layout.blocks]

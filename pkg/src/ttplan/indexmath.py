"""Integer index arithmetic for dense tensor transposes.

Dimension labels are 1-based at every public boundary (dimension 1 is the
stride-1 dimension). Internally, label ``z`` lives at tuple index ``z - 1``.
That conversion happens only in :meth:`TensorLayout.extent` and
:meth:`TensorLayout.input_stride`.

Positions and volumes are Python ints; layouts whose volume does not fit in
an unsigned 64-bit integer are rejected at construction. The ``*_vec``
helpers evaluate the same sums over numpy int64 arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Iterable, Sequence

import numpy as np

WARP_SIZE = 32
MAX_VOLUME = 2**64 - 1


class LayoutError(ValueError):
    """Bad label, coordinate or position."""


@dataclass(frozen=True)
class TensorLayout:
    extents: tuple[int, ...]
    element_size: int = 8

    def __post_init__(self):
        ext = tuple(int(e) for e in self.extents)
        object.__setattr__(self, "extents", ext)
        if len(ext) < 1:
            raise LayoutError("rank must be >= 1")
        if any(e < 1 for e in ext):
            raise LayoutError(f"extents must be >= 1, got {ext}")
        if self.element_size not in (4, 8):
            raise LayoutError(f"element_size must be 4 or 8, got {self.element_size}")
        if prod(ext) > MAX_VOLUME:
            raise LayoutError("tensor volume overflows 64-bit unsigned")

    @property
    def rank(self) -> int:
        return len(self.extents)

    @property
    def volume(self) -> int:
        return prod(self.extents)

    @property
    def nbytes(self) -> int:
        return self.volume * self.element_size

    def extent(self, label: int) -> int:
        if not 1 <= label <= self.rank:
            raise LayoutError(f"dimension label {label} outside 1..{self.rank}")
        return self.extents[label - 1]

    def input_stride(self, label: int) -> int:
        """c(label, I): stride of ``label`` in the untransposed tensor."""
        self.extent(label)
        return prod(self.extents[: label - 1])


@dataclass(frozen=True)
class Permutation:
    """Output dimension order ``(w_1, ..., w_n)``, 1-based."""

    order: tuple[int, ...]

    def __post_init__(self):
        order = tuple(int(w) for w in self.order)
        object.__setattr__(self, "order", order)
        if sorted(order) != list(range(1, len(order) + 1)):
            raise LayoutError(f"{order} is not a permutation of 1..{len(order)}")

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(1, n + 1)))

    @classmethod
    def reverse(cls, n: int) -> "Permutation":
        return cls(tuple(range(n, 0, -1)))

    def __len__(self):
        return len(self.order)

    def __iter__(self):
        return iter(self.order)

    def __getitem__(self, i):
        return self.order[i]

    @property
    def is_identity(self) -> bool:
        return self.order == tuple(range(1, len(self.order) + 1))

    def inverse(self) -> "Permutation":
        inv = [0] * len(self.order)
        for j, w in enumerate(self.order, start=1):
            inv[w - 1] = j
        return Permutation(tuple(inv))

    def output_extents(self, layout: TensorLayout) -> tuple[int, ...]:
        return tuple(layout.extent(w) for w in self.order)

    def output_layout(self, layout: TensorLayout) -> TensorLayout:
        return TensorLayout(self.output_extents(layout), layout.element_size)

    def output_stride(self, label: int, layout: TensorLayout) -> int:
        """c(label, O): stride of ``label`` in the transposed tensor."""
        return cumulative_volume(label, self.order, layout)


@dataclass(frozen=True)
class MultiIndex:
    """Ordered group of dimensions treated as one composite index.

    ``extents`` normally mirror the layout but may be overridden, which is
    how the padded L x (L+1) staging buffer and split chunks are expressed.
    """

    labels: tuple[int, ...]
    extents: tuple[int, ...]

    def __post_init__(self):
        labels = tuple(int(x) for x in self.labels)
        extents = tuple(int(x) for x in self.extents)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "extents", extents)
        if len(set(labels)) != len(labels):
            raise LayoutError(f"duplicate labels in multi-index {labels}")
        if len(labels) != len(extents):
            raise LayoutError("labels and extents differ in length")
        if any(e < 1 for e in extents):
            raise LayoutError("multi-index extents must be >= 1")

    @classmethod
    def of(cls, labels: Iterable[int], layout: TensorLayout) -> "MultiIndex":
        labels = tuple(labels)
        return cls(labels, tuple(layout.extent(z) for z in labels))

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    @property
    def volume(self) -> int:
        return prod(self.extents)

    def cumulative(self, label: int) -> int:
        """c(label, self) using this multi-index's own extents."""
        try:
            i = self.labels.index(label)
        except ValueError:
            raise LayoutError(f"label {label} not in multi-index {self.labels}") from None
        return prod(self.extents[:i])

    def cumulatives(self) -> tuple[int, ...]:
        out, acc = [], 1
        for e in self.extents:
            out.append(acc)
            acc *= e
        return tuple(out)

    def with_extent(self, label: int, extent: int) -> "MultiIndex":
        ext = list(self.extents)
        ext[self.labels.index(label)] = extent
        return MultiIndex(self.labels, tuple(ext))

    def without(self, label: int) -> "MultiIndex":
        keep = [i for i, z in enumerate(self.labels) if z != label]
        return MultiIndex(tuple(self.labels[i] for i in keep), tuple(self.extents[i] for i in keep))


def _ordering_extents(ordering, layout: TensorLayout) -> tuple[tuple[int, ...], tuple[int, ...]]:
    if isinstance(ordering, MultiIndex):
        return ordering.labels, ordering.extents
    labels = tuple(ordering)
    return labels, tuple(layout.extent(z) for z in labels)


def cumulative_volume(z: int, ordering, layout: TensorLayout) -> int:
    """Product of the extents preceding ``z`` in ``ordering`` (1 if first)."""
    labels, extents = _ordering_extents(ordering, layout)
    try:
        i = labels.index(z)
    except ValueError:
        raise LayoutError(f"label {z} not in ordering {labels}") from None
    return prod(extents[:i])


def scalar_position(coords: Sequence[int], ordering, layout: TensorLayout) -> int:
    """Linear position of ``coords`` (indexed by dimension label) stored in ``ordering``."""
    if len(coords) != layout.rank:
        raise LayoutError(f"expected {layout.rank} coordinates, got {len(coords)}")
    for j, x in enumerate(coords, start=1):
        if not 0 <= x < layout.extent(j):
            raise LayoutError(f"coordinate x_{j}={x} outside [0, {layout.extent(j)})")
    labels = tuple(ordering)
    return sum(coords[w - 1] * cumulative_volume(w, labels, layout) for w in labels)


def coords_from_position(p: int, ordering, layout: TensorLayout) -> tuple[int, ...]:
    if not 0 <= p < layout.volume:
        raise LayoutError(f"position {p} outside [0, {layout.volume})")
    labels = tuple(ordering)
    coords = [0] * layout.rank
    for w in labels:
        coords[w - 1] = (p // cumulative_volume(w, labels, layout)) % layout.extent(w)
    return tuple(coords)


def transpose_position(p_in: int, perm: Permutation, layout: TensorLayout) -> int:
    """Output position of the element stored at input position ``p_in``."""
    if not 0 <= p_in < layout.volume:
        raise LayoutError(f"position {p_in} outside [0, {layout.volume})")
    total = 0
    for i in range(1, layout.rank + 1):
        x_i = (p_in // layout.input_stride(i)) % layout.extent(i)
        total += x_i * perm.output_stride(i, layout)
    return total


def _mixed_radix(value: int, extents: Sequence[int], strides: Sequence[int]) -> int:
    total, cum = 0, 1
    for d, s in zip(extents, strides):
        total += ((value // cum) % d) * s
        cum *= d
    return total


def _check_range(value: int, volume: int, name: str):
    if not 0 <= value < volume:
        raise LayoutError(f"{name}={value} outside [0, {volume})")


def p_major_in(b: int, mbar_in: MultiIndex, layout: TensorLayout) -> int:
    _check_range(b, mbar_in.volume, "b")
    return _mixed_radix(b, mbar_in.extents, [layout.input_stride(s) for s in mbar_in])


def p_major_out(b: int, mbar_out: MultiIndex, layout: TensorLayout, perm: Permutation) -> int:
    _check_range(b, mbar_out.volume, "b")
    return _mixed_radix(b, mbar_out.extents, [perm.output_stride(s, layout) for s in mbar_out])


def p_minor_in(k: int, mk_in: MultiIndex, layout: TensorLayout) -> int:
    _check_range(k, mk_in.volume, "k")
    return _mixed_radix(k, mk_in.extents, [layout.input_stride(q) for q in mk_in])


def p_minor_out(k: int, mk_out: MultiIndex, layout: TensorLayout, perm: Permutation) -> int:
    _check_range(k, mk_out.volume, "k")
    return _mixed_radix(k, mk_out.extents, [perm.output_stride(q, layout) for q in mk_out])


def p_shared(k: int, mk_out: MultiIndex, mk_in: MultiIndex) -> int:
    """Staging-buffer offset of output-order index ``k``.

    Strides come from ``mk_in``'s own extents, so a padded buffer is
    described by giving ``mk_in`` a padded extent.
    """
    _check_range(k, mk_out.volume, "k")
    return _mixed_radix(k, mk_out.extents, [mk_in.cumulative(q) for q in mk_out])


def mixed_radix_vec(values: np.ndarray, extents: Sequence[int], strides: Sequence[int]) -> np.ndarray:
    """Vectorised ``sum(((v // cum_i) % d_i) * stride_i)`` over int64 ``values``."""
    values = np.asarray(values, dtype=np.int64)
    out = np.zeros_like(values)
    cum = 1
    for d, s in zip(extents, strides):
        if d > 1:
            out += ((values // cum) % d) * s
        cum *= d
    return out


def transpose_position_vec(p_in: np.ndarray, perm: Permutation, layout: TensorLayout) -> np.ndarray:
    return mixed_radix_vec(p_in, layout.extents,
                           [perm.output_stride(i, layout) for i in range(1, layout.rank + 1)])


def lane_arrays(mi: MultiIndex, strides: Sequence[int], lanes: int = WARP_SIZE):
    """Per-lane (c, d, ct) registers for :func:`lane_parallel_position`.

    Lanes at or beyond ``len(mi)`` get don't-care values (c=1, d=1, ct=0).
    """
    h = len(mi)
    if h > lanes:
        raise LayoutError(f"{h} terms do not fit on {lanes} lanes")
    c = np.ones(lanes, dtype=np.int64)
    d = np.ones(lanes, dtype=np.int64)
    ct = np.zeros(lanes, dtype=np.int64)
    c[:h] = mi.cumulatives()
    d[:h] = mi.extents
    ct[:h] = strides
    return c, d, ct, h


def lane_parallel_position(b: int, c_lane, d_lane, ct_lane, h: int,
                           lanes: int = WARP_SIZE, return_lanes: bool = False):
    """Warp-cooperative evaluation of a major position.

    Lane ``i < h`` computes one term of the sum, then an XOR butterfly of
    ``log2(lanes)`` steps adds the terms so every lane ends with the total.
    """
    if h > lanes:
        raise LayoutError(f"h={h} exceeds lane count {lanes}")
    if lanes & (lanes - 1):
        raise LayoutError("lane count must be a power of two")
    lane = np.arange(lanes)
    c = np.asarray(c_lane, dtype=np.int64)
    d = np.asarray(d_lane, dtype=np.int64)
    ct = np.asarray(ct_lane, dtype=np.int64)
    r = np.where(lane < h, ((b // c) % d) * ct, 0)
    step = lanes // 2
    while step >= 1:
        r = r + r[lane ^ step]
        step //= 2
    if return_lanes:
        return r
    return int(r[0])

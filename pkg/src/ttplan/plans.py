"""Transpose plan construction.

A plan fixes the algorithm (Tiled, TiledCopy, Packed, PackedSplit), the
partition of dimensions into the staged multi-index ``M_mk`` and the looped
remainder ``Mbar_mk``, and the launch geometry. Plans are immutable and carry
their layout and permutation so executors and simulators can reject
mismatched inputs.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from math import ceil, prod

from .device import DeviceProfile
from .indexmath import WARP_SIZE, LayoutError, MultiIndex, Permutation, TensorLayout

TILED_THREADS = 256
PACKED_THREADS = (128, 256, 512)
MAX_NREG = 8


class PlanError(ValueError):
    pass


class AlgorithmKind(enum.Enum):
    TILED = "Tiled"
    TILED_COPY = "TiledCopy"
    PACKED = "Packed"
    PACKED_SPLIT = "PackedSplit"

    @property
    def rank(self) -> int:
        return _KIND_ORDER[self]

    @property
    def uses_shared(self) -> bool:
        return self is not AlgorithmKind.TILED_COPY


_KIND_ORDER = {k: i for i, k in enumerate(AlgorithmKind)}


@dataclass(frozen=True)
class Partition:
    m_in: tuple[int, ...]     # M_m^I, first m input dims
    k_out: tuple[int, ...]    # M_k^O, first k output dims
    mk_in: MultiIndex
    mk_out: MultiIndex
    mbar_in: MultiIndex
    mbar_out: MultiIndex

    @property
    def vol_mk(self) -> int:
        return self.mk_in.volume

    @property
    def vol_mbar(self) -> int:
        return self.mbar_in.volume

    @property
    def vol_m(self) -> int:
        return prod(self.mk_in.extents[self.mk_in.labels.index(z)] for z in self.m_in)

    @property
    def vol_k(self) -> int:
        return prod(self.mk_out.extents[self.mk_out.labels.index(z)] for z in self.k_out)


def build_partition(layout: TensorLayout, perm: Permutation, m: int, k: int) -> Partition:
    n = layout.rank
    if len(perm) != n:
        raise LayoutError(f"permutation rank {len(perm)} != layout rank {n}")
    if not (1 <= m <= n and 1 <= k <= n):
        raise PlanError(f"need 1 <= m, k <= {n}, got m={m}, k={k}")
    m_in = tuple(range(1, m + 1))
    k_out = tuple(perm.order[:k])
    staged = set(m_in) | set(k_out)
    mk_in = MultiIndex.of(sorted(staged), layout)
    mk_out = MultiIndex.of([w for w in perm.order if w in staged], layout)
    mbar_in = MultiIndex.of([z for z in range(1, n + 1) if z not in staged], layout)
    mbar_out = MultiIndex.of([w for w in perm.order if w not in staged], layout)
    return Partition(m_in, k_out, mk_in, mk_out, mbar_in, mbar_out)


@dataclass(frozen=True)
class TransposePlan:
    kind: AlgorithmKind
    layout: TensorLayout
    perm: Permutation
    m: int
    k: int
    partition: Partition
    n_thread: int
    n_reg: int
    shmem_elems: int
    work_units: int
    grid_blocks: int
    n_iter: int
    split_dim: int | None = None
    n_sp: int = 1
    chunk: int = 0            # ceil(d(g) / n_sp) for PackedSplit
    tile: int = WARP_SIZE
    extra: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def n_warp(self) -> int:
        return self.n_thread // WARP_SIZE

    @property
    def shmem_bytes(self) -> int:
        return self.shmem_elems * self.layout.element_size

    @property
    def sort_key(self):
        return (self.kind.rank, self.m, self.k, self.n_sp, self.n_thread)

    def label(self) -> str:
        s = f"{self.kind.value}(m={self.m},k={self.k}"
        if self.kind is AlgorithmKind.PACKED_SPLIT:
            s += f",g={self.split_dim},nsp={self.n_sp}"
        return s + f",threads={self.n_thread})"

    def to_dict(self) -> dict:
        p = self.partition
        return {
            "kind": self.kind.value,
            "extents": list(self.layout.extents),
            "permutation": list(self.perm.order),
            "element_size": self.layout.element_size,
            "m": self.m,
            "k": self.k,
            "mk_in": {"labels": list(p.mk_in.labels), "extents": list(p.mk_in.extents)},
            "mk_out": {"labels": list(p.mk_out.labels), "extents": list(p.mk_out.extents)},
            "mbar_in": {"labels": list(p.mbar_in.labels), "extents": list(p.mbar_in.extents)},
            "mbar_out": {"labels": list(p.mbar_out.labels), "extents": list(p.mbar_out.extents)},
            "split_dim": self.split_dim,
            "n_sp": self.n_sp,
            "n_thread": self.n_thread,
            "n_warp": self.n_warp,
            "n_reg": self.n_reg,
            "shmem_bytes": self.shmem_bytes,
            "work_units": self.work_units,
            "grid_blocks": self.grid_blocks,
            "n_iter": self.n_iter,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def describe(self) -> str:
        p = self.partition
        lines = [
            self.label(),
            f"  M_mk^I  = {list(p.mk_in.labels)} extents {list(p.mk_in.extents)} (vol {p.vol_mk})",
            f"  M_mk^O  = {list(p.mk_out.labels)}",
            f"  Mbar^I  = {list(p.mbar_in.labels)} extents {list(p.mbar_in.extents)} (vol {p.vol_mbar})",
            f"  Mbar^O  = {list(p.mbar_out.labels)}",
        ]
        if self.kind is AlgorithmKind.PACKED_SPLIT:
            lines.append(f"  split   = dim {self.split_dim} into {self.n_sp} chunks of {self.chunk}")
        lines.append(
            f"  threads = {self.n_thread} ({self.n_warp} warps), nReg {self.n_reg}, "
            f"shmem {self.shmem_bytes} B")
        lines.append(
            f"  grid    = {self.grid_blocks} blocks over {self.work_units} units, N_iter {self.n_iter}")
        return "\n".join(lines)


def _grid(work_units: int, device: DeviceProfile) -> tuple[int, int]:
    grid = min(work_units, device.n_sm * device.max_blocks_per_sm)
    return grid, ceil(work_units / grid)


def _check(layout: TensorLayout, perm: Permutation):
    if len(perm) != layout.rank:
        raise LayoutError(f"permutation rank {len(perm)} != layout rank {layout.rank}")


def plan_tiled(layout: TensorLayout, perm: Permutation, device: DeviceProfile,
               n_thread: int = TILED_THREADS) -> TransposePlan:
    """Tiled plan, or TiledCopy when the stride-1 dimension stays first.

    Tiled work units are L x L tiles of the (d(1), d(w_1)) plane for every
    Mbar slice. TiledCopy units are L x L blocks of (d(1), Mbar slice).
    """
    _check(layout, perm)
    L = WARP_SIZE
    part = build_partition(layout, perm, 1, 1)
    d1 = layout.extent(1)
    if perm.order[0] == 1:
        kind = AlgorithmKind.TILED_COPY
        units = ceil(d1 / L) * ceil(part.vol_mbar / L)
        shmem = 0
    else:
        kind = AlgorithmKind.TILED
        units = ceil(d1 / L) * ceil(layout.extent(perm.order[0]) / L) * part.vol_mbar
        shmem = L * (L + 1)
    grid, n_iter = _grid(units, device)
    return TransposePlan(kind=kind, layout=layout, perm=perm, m=1, k=1, partition=part,
                         n_thread=n_thread, n_reg=L // (n_thread // L), shmem_elems=shmem,
                         work_units=units, grid_blocks=grid, n_iter=n_iter)


def _packed(layout, perm, device, m, k, part, n_thread) -> TransposePlan:
    vol = part.vol_mk
    units = part.vol_mbar
    grid, n_iter = _grid(units, device)
    return TransposePlan(kind=AlgorithmKind.PACKED, layout=layout, perm=perm, m=m, k=k,
                         partition=part, n_thread=n_thread, n_reg=ceil(vol / n_thread),
                         shmem_elems=vol, work_units=units, grid_blocks=grid, n_iter=n_iter)


def split_dimension(part: Partition) -> int:
    """Largest-extent dimension of M_mk; ties go to the lowest label."""
    mk = part.mk_in
    return max(mk.labels, key=lambda z: (mk.extents[mk.labels.index(z)], -z))


def minimal_split(rest_vol: int, dg: int, capacity: int, n_thread: int) -> int | None:
    """Smallest n_sp >= 2 with rest_vol * ceil(dg / n_sp) fitting shared memory and nReg."""
    limit = min(capacity, MAX_NREG * n_thread)
    if rest_vol > limit:
        return None
    max_chunk = limit // rest_vol
    if max_chunk < 1 or dg < 2:
        return None
    n_sp = max(2, ceil(dg / max_chunk))
    # ceil(dg / n_sp) <= max_chunk is guaranteed once n_sp >= dg / max_chunk
    return n_sp if n_sp <= dg else None


def _packed_split(layout, perm, device, m, k, part, n_thread) -> TransposePlan | None:
    g = split_dimension(part)
    dg = layout.extent(g)
    rest = part.vol_mk // dg
    cap = device.shmem_elements(layout.element_size)
    n_sp = minimal_split(rest, dg, cap, n_thread)
    if n_sp is None:
        return None
    chunk = ceil(dg / n_sp)
    n_chunks = ceil(dg / chunk)
    units = part.vol_mbar * n_chunks
    grid, n_iter = _grid(units, device)
    return TransposePlan(kind=AlgorithmKind.PACKED_SPLIT, layout=layout, perm=perm, m=m, k=k,
                         partition=part, n_thread=n_thread,
                         n_reg=ceil(rest * chunk / n_thread), shmem_elems=rest * chunk,
                         work_units=units, grid_blocks=grid, n_iter=n_iter,
                         split_dim=g, n_sp=n_chunks, chunk=chunk)


def _packed_fits(vol: int, cap: int, n_thread: int) -> bool:
    return vol <= cap and ceil(vol / n_thread) <= MAX_NREG


def _enumerate(layout, perm, device, thread_counts):
    """Walk (m, k) and yield (m, k, partition, fits_any) for distinct M_mk sets.

    Volume grows with m and with k, so the walk stops growing k at the first
    partition that fits no thread count, and stops growing m when even k=1
    no longer fits.
    """
    _check(layout, perm)
    n = layout.rank
    cap = device.shmem_elements(layout.element_size)
    seen = set()
    for m in range(1, n + 1):
        for k in range(1, n + 1):
            part = build_partition(layout, perm, m, k)
            fits = any(_packed_fits(part.vol_mk, cap, t) for t in thread_counts)
            key = part.mk_in.labels
            if key not in seen:
                seen.add(key)
                yield m, k, part, fits
            if not fits:
                break
        if not any(_packed_fits(build_partition(layout, perm, m, 1).vol_mk, cap, t)
                   for t in thread_counts):
            break


def enumerate_packed(layout: TensorLayout, perm: Permutation, device: DeviceProfile,
                     thread_counts=PACKED_THREADS) -> list[TransposePlan]:
    cap = device.shmem_elements(layout.element_size)
    plans = []
    for m, k, part, _ in _enumerate(layout, perm, device, thread_counts):
        for t in thread_counts:
            if _packed_fits(part.vol_mk, cap, t):
                plans.append(_packed(layout, perm, device, m, k, part, t))
    return plans


def enumerate_packed_split(layout: TensorLayout, perm: Permutation, device: DeviceProfile,
                           thread_counts=PACKED_THREADS) -> list[TransposePlan]:
    """PackedSplit candidates for partitions plain Packed cannot stage.

    Only (m, k, n_thread) combinations where the unsplit volume does not fit
    are split; splitting a partition that already fits would only duplicate a
    Packed plan with extra passes.
    """
    cap = device.shmem_elements(layout.element_size)
    plans = []
    for m, k, part, _ in _enumerate(layout, perm, device, thread_counts):
        for t in thread_counts:
            if _packed_fits(part.vol_mk, cap, t):
                continue
            plan = _packed_split(layout, perm, device, m, k, part, t)
            if plan is not None:
                plans.append(plan)
    return plans


def build_all_plans(layout: TensorLayout, perm: Permutation, device: DeviceProfile,
                    thread_counts=PACKED_THREADS) -> list[TransposePlan]:
    plans = [plan_tiled(layout, perm, device)]
    if perm.is_identity:
        # a plain copy: staging through shared memory only adds traffic
        return plans
    plans += enumerate_packed(layout, perm, device, thread_counts)
    plans += enumerate_packed_split(layout, perm, device, thread_counts)
    return sorted(plans, key=lambda p: p.sort_key)

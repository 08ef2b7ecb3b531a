"""Exact software model of the transpose kernels' memory traffic.

Three rules are modelled, each at warp granularity:

* global coalescing: a warp request costs one transaction per distinct
  ``tran_size``-aligned segment its active lanes touch;
* L2 store lines: within one warp store, a ``l2_line``-byte line whose bytes
  are all written is *full*, any other touched line is *partial*;
* shared-memory banks: a request costs the largest number of distinct
  ``bank_width`` words that fall into any single bank (the same word read
  by several lanes is broadcast and counted once).

Buffers start at byte offset 0, so every tensor is 128-byte aligned.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .device import DeviceProfile
from .indexmath import WARP_SIZE, transpose_position_vec
from .plans import AlgorithmKind, TransposePlan
from .schedule import Schedule, WarpStreams

log = logging.getLogger(__name__)

DEFAULT_SIM_CAP = 1 << 22


class SimulationError(RuntimeError):
    pass


class VolumeCapError(SimulationError):
    pass


@dataclass(frozen=True)
class SimConfig:
    tran_size: int = 128
    l2_line: int = 32
    bank_count: int = 32
    bank_width: int = 4
    lanes: int = WARP_SIZE
    cap: int = DEFAULT_SIM_CAP

    def __post_init__(self):
        if self.tran_size % self.l2_line:
            raise ValueError("tran_size must be a multiple of l2_line")
        if self.bank_count != 32:
            raise ValueError("only 32-bank shared memory is modelled")

    @classmethod
    def from_profile(cls, profile: DeviceProfile, **kw) -> "SimConfig":
        return cls(tran_size=profile.tran_size, l2_line=profile.l2_line,
                   bank_count=profile.bank_count, bank_width=profile.bank_width, **kw)


@dataclass(frozen=True)
class WarpAccess:
    """One warp memory instruction. ``None`` marks an inactive lane."""

    lane_addresses: tuple
    kind: str = "load"          # load | store
    space: str = "global"       # global | shared
    bytes_per_lane: int = 4

    def __post_init__(self):
        if len(self.lane_addresses) > WARP_SIZE:
            raise ValueError(f"a warp has at most {WARP_SIZE} lanes")
        if self.kind not in ("load", "store") or self.space not in ("global", "shared"):
            raise ValueError("bad access kind/space")

    @property
    def active(self) -> list[int]:
        return [a for a in self.lane_addresses if a is not None]


def coalesce(access: WarpAccess, cfg: SimConfig = SimConfig()) -> int:
    segs = set()
    for a in access.active:
        segs.update(range(a // cfg.tran_size, (a + access.bytes_per_lane - 1) // cfg.tran_size + 1))
    return len(segs)


def classify_store_lines(accesses: Sequence[WarpAccess], cfg: SimConfig = SimConfig()):
    """(CL_full, CL_part) summed over warp stores, by per-byte line coverage."""
    full = part = 0
    for acc in accesses:
        covered: dict[int, set] = {}
        for a in acc.active:
            for byte in range(a, a + acc.bytes_per_lane):
                covered.setdefault(byte // cfg.l2_line, set()).add(byte)
        for line_bytes in covered.values():
            if len(line_bytes) == cfg.l2_line:
                full += 1
            else:
                part += 1
    return full, part


def bank_transactions(access: WarpAccess, cfg: SimConfig = SimConfig()) -> int:
    words = set()
    for a in access.active:
        words.update(range(a // cfg.bank_width, (a + access.bytes_per_lane - 1) // cfg.bank_width + 1))
    if not words:
        return 0
    per_bank: dict[int, int] = {}
    for w in words:
        per_bank[w % cfg.bank_count] = per_bank.get(w % cfg.bank_count, 0) + 1
    return max(per_bank.values())


# -- vectorised counters over (rows, lanes) element-address arrays ----------

def _distinct_per_row(keys: np.ndarray) -> np.ndarray:
    """Distinct non-negative values per row; negative entries are ignored."""
    if keys.size == 0:
        return np.zeros(keys.shape[0], dtype=np.int64)
    s = np.sort(keys, axis=1)
    new = np.ones_like(s, dtype=bool)
    new[:, 1:] = s[:, 1:] != s[:, :-1]
    return (new & (s >= 0)).sum(axis=1)


def segments_per_row(addr: np.ndarray, elem: int, cfg: SimConfig) -> np.ndarray:
    seg = np.where(addr >= 0, addr * elem // cfg.tran_size, -1)
    return _distinct_per_row(seg)


def store_lines(addr: np.ndarray, elem: int, cfg: SimConfig) -> tuple[int, int]:
    """(full, partial) L2 lines over rows of distinct element addresses."""
    if addr.size == 0:
        return 0, 0
    line = np.where(addr >= 0, addr * elem // cfg.l2_line, -1)
    s = np.sort(line, axis=1)
    n_rows, width = s.shape
    start = np.ones_like(s, dtype=bool)
    start[:, 1:] = s[:, 1:] != s[:, :-1]
    flat = s.reshape(-1)
    run_id = np.cumsum(start.reshape(-1)) - 1
    counts = np.bincount(run_id)
    valid = flat[start.reshape(-1)] >= 0
    full_bytes = counts * elem == cfg.l2_line
    n_full = int((full_bytes & valid).sum())
    n_part = int((~full_bytes & valid).sum())
    return n_full, n_part


def bank_per_row(sh: np.ndarray, elem: int, cfg: SimConfig) -> np.ndarray:
    if sh.size == 0:
        return np.zeros(sh.shape[0], dtype=np.int64)
    words_per = max(1, elem // cfg.bank_width)
    base = np.where(sh >= 0, sh * elem // cfg.bank_width, -1)
    if words_per > 1:
        parts = [np.where(base >= 0, base + i, -1) for i in range(words_per)]
        base = np.concatenate(parts, axis=1)
    s = np.sort(base, axis=1)
    first = np.ones_like(s, dtype=bool)
    first[:, 1:] = s[:, 1:] != s[:, :-1]
    first &= s >= 0
    rows = np.broadcast_to(np.arange(s.shape[0])[:, None], s.shape)
    key = rows[first] * cfg.bank_count + s[first] % cfg.bank_count
    counts = np.bincount(key, minlength=s.shape[0] * cfg.bank_count)
    return counts.reshape(s.shape[0], cfg.bank_count).max(axis=1)


@dataclass
class TrafficReport:
    ld_req: float = 0
    st_req: float = 0
    ld_tran: float = 0
    st_tran: float = 0
    cl_full: float = 0
    cl_part: float = 0
    shmem_req: float = 0
    shmem_tran: float = 0
    shmem_ld_req: float = 0
    shmem_ld_tran: float = 0
    slices: int = 0
    exact: bool = True

    def __iadd__(self, other: "TrafficReport"):
        for k in ("ld_req", "st_req", "ld_tran", "st_tran", "cl_full", "cl_part",
                  "shmem_req", "shmem_tran", "shmem_ld_req", "shmem_ld_tran", "slices"):
            setattr(self, k, getattr(self, k) + getattr(other, k))
        return self

    @property
    def global_tran(self) -> float:
        return self.ld_tran + self.st_tran

    def per_slice(self) -> "TrafficReport":
        n = max(self.slices, 1)
        vals = {k: v / n for k, v in asdict(self).items() if k not in ("slices", "exact")}
        return TrafficReport(**vals, slices=1, exact=self.exact)

    def to_dict(self) -> dict:
        return asdict(self)


def count_streams(st: WarpStreams, elem: int, cfg: SimConfig) -> TrafficReport:
    rep = TrafficReport(
        ld_req=len(st.ld_global), st_req=len(st.st_global),
        ld_tran=int(segments_per_row(st.ld_global, elem, cfg).sum()),
        st_tran=int(segments_per_row(st.st_global, elem, cfg).sum()))
    rep.cl_full, rep.cl_part = store_lines(st.st_global, elem, cfg)
    if st.sh_groups is not None:
        for sh_w, sh_r, n in st.sh_groups:
            w = bank_per_row(sh_w, elem, cfg)
            r = bank_per_row(sh_r, elem, cfg)
            rep.shmem_req += n * (len(w) + len(r))
            rep.shmem_tran += n * int(w.sum() + r.sum())
            rep.shmem_ld_req += n * len(r)
            rep.shmem_ld_tran += n * int(r.sum())
    elif st.sh_write is not None:
        w = bank_per_row(st.sh_write, elem, cfg)
        r = bank_per_row(st.sh_read, elem, cfg)
        rep.shmem_req = len(w) + len(r)
        rep.shmem_tran = int(w.sum() + r.sum())
        rep.shmem_ld_req = len(r)
        rep.shmem_ld_tran = int(r.sum())
    return rep


def element_pairs(st: WarpStreams, shared_size: int) -> tuple[np.ndarray, np.ndarray]:
    """(input position, output position) for every element the streams move."""
    if st.sh_write is None:
        m = st.ld_global >= 0
        return st.ld_global[m], st.st_global[m]
    n_items = int(max(st.ld_item.max(initial=-1), st.st_item.max(initial=-1))) + 1
    staged = np.full(n_items * shared_size, -1, dtype=np.int64)
    wm = st.sh_write >= 0
    slot = (st.ld_item[:, None] * shared_size + st.sh_write)[wm]
    staged[slot] = st.ld_global[wm]
    rm = st.sh_read >= 0
    src = staged[(st.st_item[:, None] * shared_size + st.sh_read)[rm]]
    return src, st.st_global[rm]


def _check_scope(plan: TransposePlan, slices, cfg: SimConfig):
    if slices is None and plan.layout.volume > cfg.cap:
        raise VolumeCapError(
            f"tensor volume {plan.layout.volume} exceeds simulation cap {cfg.cap}; "
            "use heuristic selection or raise the cap")


def simulate_plan(plan: TransposePlan, cfg: SimConfig = SimConfig(), slices=None,
                  verify: bool = True, trace=None) -> TrafficReport:
    """Exact traffic of ``plan`` over the full tensor or the given Mbar slices.

    With ``verify`` (full scope only) every output position must be written
    exactly once and receive the element the permutation maps to it.
    """
    _check_scope(plan, slices, cfg)
    sched = Schedule(plan)
    elem = plan.layout.element_size
    if slices is None:
        items = np.arange(sched.n_items, dtype=np.int64)
        n_slices = sched.n_slices
    else:
        slices = np.asarray(slices, dtype=np.int64)
        items = sched.items_for_slices(slices)
        n_slices = len(slices)
        verify = False
    total = TrafficReport(slices=0)
    written = np.zeros(plan.layout.volume, dtype=np.int64) if verify else None
    for batch in sched.batches(items):
        st = sched.streams(batch)
        total += count_streams(st, elem, cfg)
        if trace is not None:
            write_trace(trace, st, elem, cfg, plan.kind.uses_shared)
        if verify:
            src, dst = element_pairs(st, sched.shared_size)
            if (src < 0).any():
                raise SimulationError(f"{plan.label()}: staged slot read before written")
            written += np.bincount(dst, minlength=written.size)
            expect = transpose_position_vec(src, plan.perm, plan.layout)
            if not np.array_equal(expect, dst):
                raise SimulationError(f"{plan.label()}: element routed to wrong output")
    total.slices = n_slices
    if verify:
        if (written != 1).any():
            holes = int((written == 0).sum())
            dup = int((written > 1).sum())
            raise SimulationError(f"{plan.label()}: {holes} unwritten, {dup} multiply written")
    return total


def shared_read_tpr(plan: TransposePlan, cfg: SimConfig = SimConfig()) -> float:
    """Average shared transactions per transposed shared read, one staged volume."""
    if not plan.kind.uses_shared:
        raise ValueError("TiledCopy uses no shared memory")
    sched = Schedule(plan)
    st = sched.streams(np.array([0], dtype=np.int64))
    r = bank_per_row(st.sh_read, plan.layout.element_size, cfg)
    return float(r.mean())


def write_trace(fh, st: WarpStreams, elem: int, cfg: SimConfig, staged: bool):
    """Text dump, one line per warp access: space, kind, touched units."""
    def segs(row, unit):
        return sorted({int(a) * elem // unit for a in row if a >= 0})

    for i, row in enumerate(st.ld_global):
        fh.write(f"global load  segs={segs(row, cfg.tran_size)}\n")
        if staged:
            fh.write(f"shared store words={segs(st.sh_write[i], cfg.bank_width)}\n")
    for i, row in enumerate(st.st_global):
        if staged:
            fh.write(f"shared load  words={segs(st.sh_read[i], cfg.bank_width)}\n")
        fh.write(f"global store segs={segs(row, cfg.tran_size)} "
                 f"lines={segs(row, cfg.l2_line)}\n")


def analytic_requests(plan: TransposePlan) -> tuple[int, int]:
    """(LD_req, ST_req) over the whole tensor from plan geometry alone."""
    layout, part = plan.layout, plan.partition
    L = WARP_SIZE
    d1 = layout.extent(1)
    ntx = -(-d1 // L)
    if plan.kind is AlgorithmKind.TILED:
        dw = layout.extent(plan.perm.order[0])
        nty = -(-dw // L)
        return ntx * dw * part.vol_mbar, nty * d1 * part.vol_mbar
    if plan.kind is AlgorithmKind.TILED_COPY:
        n = ntx * part.vol_mbar
        return n, n
    if plan.kind is AlgorithmKind.PACKED:
        n = -(-part.vol_mk // L) * part.vol_mbar
        return n, n
    dg = layout.extent(plan.split_dim)
    rest = part.vol_mk // dg
    tail = dg - (plan.n_sp - 1) * plan.chunk
    per = (plan.n_sp - 1) * -(-(rest * plan.chunk) // L) + -(-(rest * tail) // L)
    return per * part.vol_mbar, per * part.vol_mbar

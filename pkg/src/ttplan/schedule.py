"""Warp-level address schedules for every plan kind.

A schedule turns a plan into rows of warp instructions: one row per warp
memory instruction, one column per lane, ``-1`` for an inactive lane. The
device simulator counts transactions on these rows and the host executor
moves data along them, so both see the same addresses.

Schedules are enumerated over *items*:

* Tiled: one L x L tile of the (d(1), d(w_1)) plane in one Mbar slice.
* TiledCopy: one L-wide segment of dimension 1 in one Mbar slice.
* Packed: one Mbar slice.
* PackedSplit: one chunk of the split dimension in one Mbar slice.

Each item belongs to exactly one Mbar slice ``b``, which is what the
ten-slice traffic sampler draws from.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from .indexmath import WARP_SIZE, MultiIndex, mixed_radix_vec
from .plans import AlgorithmKind, TransposePlan

L = WARP_SIZE


@dataclass
class WarpStreams:
    """Global/shared addresses (in elements) for a batch of items.

    ``ld_*`` rows are the read phase (global load, shared store); ``st_*``
    rows the write phase (shared load, global store). ``*_item`` give the
    batch-local item index of each row. For TiledCopy there is no staging
    buffer and ``st_global`` row ``i`` carries the same elements, lane for
    lane, as ``ld_global`` row ``i``.
    """

    ld_global: np.ndarray
    st_global: np.ndarray
    sh_write: np.ndarray | None
    sh_read: np.ndarray | None
    ld_item: np.ndarray
    st_item: np.ndarray
    # (sh_write rows, sh_read rows, repeat count) when the shared rows are
    # one table repeated per item; lets counters skip the broadcast copies
    sh_groups: list | None = None


def _rows(arr: np.ndarray, keep: np.ndarray) -> np.ndarray:
    return arr.reshape(-1, L)[keep.reshape(-1)]


class Schedule:
    def __init__(self, plan: TransposePlan):
        self.plan = plan
        layout, perm, part = plan.layout, plan.perm, plan.partition
        self.kind = plan.kind
        mbar = part.mbar_in
        self._mbar_ext = mbar.extents
        self._mbar_in_strides = [layout.input_stride(s) for s in mbar]
        # Output major position of slice b, decoding b in input order so the
        # read and write phases of a block address the same slice.
        self._mbar_out_strides = [perm.output_stride(s, layout) for s in mbar]
        self.n_slices = part.vol_mbar
        d1 = layout.extent(1)
        self.d1 = d1
        self.ntx = ceil(d1 / L)
        if self.kind is AlgorithmKind.TILED:
            w1 = perm.order[0]
            self.dw = layout.extent(w1)
            self.nty = ceil(self.dw / L)
            self.per_slice = self.ntx * self.nty
            self.c_w_in = layout.input_stride(w1)
            self.c_1_out = perm.output_stride(1, layout)
            j = np.arange(L)[:, None]
            lane = np.arange(L)[None, :]
            self._ld_off = lane + j * self.c_w_in          # row j, lane x
            self._st_off = lane + j * self.c_1_out         # row i (x), lane y
            self._sh_w = j * (L + 1) + lane
            self._sh_r = lane * (L + 1) + j
        elif self.kind is AlgorithmKind.TILED_COPY:
            self.per_slice = self.ntx
        elif self.kind is AlgorithmKind.PACKED:
            self.per_slice = 1
            self._tables = [self._packed_tables(part.mk_in, part.mk_out)]
        else:
            g = plan.split_dim
            dg = layout.extent(g)
            self.n_chunks = plan.n_sp
            self.chunk = plan.chunk
            self.per_slice = self.n_chunks
            self._g_in = layout.input_stride(g)
            self._g_out = perm.output_stride(g, layout)
            tail = dg - (self.n_chunks - 1) * self.chunk
            full = self._packed_tables(part.mk_in.with_extent(g, self.chunk),
                                       part.mk_out.with_extent(g, self.chunk))
            if tail == self.chunk:
                self._tables = [full, full]
            else:
                self._tables = [full, self._packed_tables(part.mk_in.with_extent(g, tail),
                                                          part.mk_out.with_extent(g, tail))]
        self.n_items = self.n_slices * self.per_slice

    # -- table construction -------------------------------------------------
    def _packed_tables(self, mk_in: MultiIndex, mk_out: MultiIndex):
        """Per-lane minor offsets for one staged volume.

        Thread t of the block handles k = t + r * n_thread for r < nReg, so
        warp w at register step r covers k in [r*n_thread + w*L, ... + L).
        """
        layout, perm = self.plan.layout, self.plan.perm
        vol = mk_in.volume
        nt = self.plan.n_thread
        n_reg = ceil(vol / nt)
        k = (np.arange(n_reg)[:, None, None] * nt
             + np.arange(nt // L)[None, :, None] * L
             + np.arange(L)[None, None, :]).reshape(-1, L)
        k = k[k[:, 0] < vol]
        active = k < vol
        kc = np.where(active, k, 0)
        minor_in = mixed_radix_vec(kc, mk_in.extents, [layout.input_stride(q) for q in mk_in])
        minor_out = mixed_radix_vec(kc, mk_out.extents,
                                    [perm.output_stride(q, layout) for q in mk_out])
        sh_read = mixed_radix_vec(kc, mk_out.extents, [mk_in.cumulative(q) for q in mk_out])
        return {
            "active": active,
            "in": minor_in,
            "out": minor_out,
            "sh_w": np.where(active, k, -1),
            "sh_r": np.where(active, sh_read, -1),
            "vol": vol,
        }

    # -- slices and items ---------------------------------------------------
    def major_in(self, b: np.ndarray) -> np.ndarray:
        return mixed_radix_vec(b, self._mbar_ext, self._mbar_in_strides)

    def major_out(self, b: np.ndarray) -> np.ndarray:
        return mixed_radix_vec(b, self._mbar_ext, self._mbar_out_strides)

    def items_for_slices(self, slices) -> np.ndarray:
        b = np.asarray(slices, dtype=np.int64)
        return (b[:, None] * self.per_slice + np.arange(self.per_slice)[None, :]).reshape(-1)

    def items_for_units(self, u0: int, u1: int) -> np.ndarray:
        """Items belonging to work units ``[u0, u1)`` of the plan's grid."""
        if self.kind is not AlgorithmKind.TILED_COPY:
            return np.arange(u0, u1, dtype=np.int64)
        u = np.arange(u0, u1, dtype=np.int64)
        by, tx = u // self.ntx, u % self.ntx
        b = by[:, None] * L + np.arange(L)[None, :]
        keep = b < self.n_slices
        items = b * self.ntx + tx[:, None]
        return items[keep]

    @property
    def shared_size(self) -> int:
        return max(self.plan.shmem_elems, 1)

    # -- streams ------------------------------------------------------------
    def streams(self, items) -> WarpStreams:
        items = np.asarray(items, dtype=np.int64)
        if self.kind is AlgorithmKind.TILED:
            return self._tiled(items)
        if self.kind is AlgorithmKind.TILED_COPY:
            return self._tiled_copy(items)
        return self._packed(items)

    def _tiled(self, items):
        b, t = items // self.per_slice, items % self.per_slice
        tx, ty = t % self.ntx, t // self.ntx
        x0, y0 = tx * L, ty * L
        wx = np.minimum(L, self.d1 - x0)
        hy = np.minimum(L, self.dw - y0)
        base_in = self.major_in(b) + x0 + y0 * self.c_w_in
        base_out = self.major_out(b) + y0 + x0 * self.c_1_out
        j = np.arange(L)
        lane = np.arange(L)
        # read phase: row j of the tile is one warp instruction over x
        ld_mask = (j[None, :, None] < hy[:, None, None]) & (lane[None, None, :] < wx[:, None, None])
        ld = np.where(ld_mask, base_in[:, None, None] + self._ld_off[None], -1)
        ld_keep = j[None, :] < hy[:, None]
        # write phase: row i (x) is one warp instruction over y
        st_mask = (j[None, :, None] < wx[:, None, None]) & (lane[None, None, :] < hy[:, None, None])
        st = np.where(st_mask, base_out[:, None, None] + self._st_off[None], -1)
        st_keep = j[None, :] < wx[:, None]
        n = len(items)
        sh_w = np.where(ld_mask, self._sh_w[None], -1)
        sh_r = np.where(st_mask, self._sh_r[None], -1)
        idx = np.broadcast_to(np.arange(n)[:, None], (n, L))
        # shared rows depend only on the tile's cut: group items by (wx, hy)
        shape_key, counts = np.unique(wx * (L + 1) + hy, return_counts=True)
        groups = []
        for key, cnt in zip(shape_key.tolist(), counts.tolist()):
            w, h = divmod(key, L + 1)
            jj = np.arange(L)[:, None]
            groups.append((np.where((jj < h) & (lane[None, :] < w), self._sh_w, -1)[:h],
                           np.where((jj < w) & (lane[None, :] < h), self._sh_r, -1)[:w],
                           cnt))
        return WarpStreams(
            ld_global=_rows(ld, ld_keep), st_global=_rows(st, st_keep),
            sh_write=_rows(sh_w, ld_keep), sh_read=_rows(sh_r, st_keep),
            ld_item=idx[ld_keep], st_item=idx[st_keep], sh_groups=groups)

    def _tiled_copy(self, items):
        b, tx = items // self.ntx, items % self.ntx
        x0 = tx * L
        wx = np.minimum(L, self.d1 - x0)
        lane = np.arange(L)[None, :]
        mask = lane < wx[:, None]
        ld = np.where(mask, (self.major_in(b) + x0)[:, None] + lane, -1)
        st = np.where(mask, (self.major_out(b) + x0)[:, None] + lane, -1)
        idx = np.arange(len(items))
        return WarpStreams(ld_global=ld, st_global=st, sh_write=None, sh_read=None,
                           ld_item=idx, st_item=idx)

    def _packed(self, items):
        b = items // self.per_slice
        if self.kind is AlgorithmKind.PACKED:
            groups = [(np.arange(len(items)), self._tables[0], 0)]
        else:
            c = items % self.per_slice
            is_tail = c == self.n_chunks - 1
            groups = []
            for flag, tab in ((False, self._tables[0]), (True, self._tables[1])):
                sel = np.nonzero(is_tail == flag)[0]
                if len(sel):
                    groups.append((sel, tab, c[sel] * self.chunk))
        parts, groups_out = [], []
        for sel, tab, start in groups:
            bs = b[sel]
            base_in = self.major_in(bs)
            base_out = self.major_out(bs)
            if self.kind is AlgorithmKind.PACKED_SPLIT:
                base_in = base_in + start * self._g_in
                base_out = base_out + start * self._g_out
            act = tab["active"][None]
            rows = tab["active"].shape[0]
            ld = np.where(act, base_in[:, None, None] + tab["in"][None], -1).reshape(-1, L)
            st = np.where(act, base_out[:, None, None] + tab["out"][None], -1).reshape(-1, L)
            sh_w = np.broadcast_to(tab["sh_w"][None], (len(sel), rows, L)).reshape(-1, L)
            sh_r = np.broadcast_to(tab["sh_r"][None], (len(sel), rows, L)).reshape(-1, L)
            item = np.repeat(sel, rows)
            parts.append((ld, st, sh_w, sh_r, item))
            groups_out.append((tab["sh_w"], tab["sh_r"], len(sel)))
        if len(parts) == 1:
            ld, st, sh_w, sh_r, item = parts[0]
        else:
            ld, st, sh_w, sh_r, item = (np.concatenate(z) for z in zip(*parts))
        return WarpStreams(ld_global=ld, st_global=st, sh_write=sh_w, sh_read=sh_r,
                           ld_item=item, st_item=item, sh_groups=groups_out)

    def batches(self, items: np.ndarray, target_elems: int = 1 << 17):
        """Split ``items`` into batches of roughly ``target_elems`` elements."""
        per_item = {AlgorithmKind.TILED: L * L, AlgorithmKind.TILED_COPY: L}.get(
            self.kind, self.plan.n_thread * self.plan.n_reg)
        step = max(1, target_elems // per_item)
        for i in range(0, len(items), step):
            yield items[i:i + step]

"""Multi-threaded host execution of transpose plans.

Worker threads play the role of thread blocks: each claims a run of work
units from a shared counter, stages the units' elements through a scratch
array laid out exactly like the kernel's shared-memory buffer, and writes
them to their output positions. The addresses come from the same
:class:`~ttplan.schedule.Schedule` the simulator counts, so the executor
checks the simulator's address streams as a side effect.
"""
from __future__ import annotations

import enum
import threading
import time
from dataclasses import dataclass
from statistics import median

import numpy as np

from .indexmath import Permutation, TensorLayout, transpose_position_vec
from .plans import AlgorithmKind, TransposePlan
from .schedule import WARP_SIZE, Schedule

L = WARP_SIZE
CLAIM_ELEMS = 1 << 16       # elements moved per work claim, roughly


class ExecError(ValueError):
    pass


class WriteMode(enum.Enum):
    WRITE = "write"
    ACCUMULATE = "accumulate"

    @property
    def traffic_factor(self) -> int:
        """Passes over the tensor: read in + write out, plus read out when accumulating."""
        return 2 if self is WriteMode.WRITE else 3


_UINT = {4: np.uint32, 8: np.uint64}


@dataclass
class TensorBuffer:
    elements: np.ndarray
    layout: TensorLayout

    def __post_init__(self):
        e = self.elements
        if e.ndim != 1:
            raise ExecError("elements must be a flat array")
        if e.itemsize != self.layout.element_size:
            raise ExecError(f"element size {e.itemsize} does not match layout "
                            f"({self.layout.element_size})")
        if len(e) != self.layout.volume:
            raise ExecError(f"buffer length {len(e)} != volume {self.layout.volume}")

    @classmethod
    def zeros(cls, layout: TensorLayout, dtype=None) -> "TensorBuffer":
        dtype = dtype or _UINT[layout.element_size]
        return cls(np.zeros(layout.volume, dtype=dtype), layout)

    @classmethod
    def random(cls, layout: TensorLayout, rng: np.random.Generator, dtype=None) -> "TensorBuffer":
        dtype = np.dtype(dtype or _UINT[layout.element_size])
        if dtype.kind == "f":
            data = rng.standard_normal(layout.volume).astype(dtype)
        else:
            data = rng.integers(0, np.iinfo(dtype).max, size=layout.volume,
                                dtype=dtype, endpoint=True)
        return cls(data, layout)

    def bits(self) -> np.ndarray:
        """The raw element bits as unsigned integers (a view)."""
        return self.elements.view(_UINT[self.layout.element_size])


def _check_mode_dtype(buf: TensorBuffer, mode: WriteMode):
    if mode is WriteMode.ACCUMULATE and buf.elements.dtype.kind not in "uif":
        raise ExecError(f"cannot accumulate dtype {buf.elements.dtype}")


def _output_buffer(inp: TensorBuffer, perm: Permutation, mode: WriteMode,
                   out: TensorBuffer | None) -> TensorBuffer:
    out_layout = perm.output_layout(inp.layout)
    if out is None:
        if mode is WriteMode.ACCUMULATE:
            raise ExecError("accumulate mode needs an initialised output buffer")
        return TensorBuffer(np.empty_like(inp.elements), out_layout)
    if out.layout.extents != out_layout.extents or out.elements.dtype != inp.elements.dtype:
        raise ExecError("output buffer does not match the transposed layout")
    return out


def transpose_scatter(inp: TensorBuffer, perm: Permutation, mode: WriteMode = WriteMode.WRITE,
                      out: TensorBuffer | None = None) -> TensorBuffer:
    """Reference transpose: one linear pass over the input, scattered writes."""
    if len(perm) != inp.layout.rank:
        raise ExecError(f"permutation rank {len(perm)} != tensor rank {inp.layout.rank}")
    _check_mode_dtype(inp, mode)
    out = _output_buffer(inp, perm, mode, out)
    dest = transpose_position_vec(np.arange(inp.layout.volume, dtype=np.int64), perm, inp.layout)
    if mode is WriteMode.WRITE:
        out.bits()[dest] = inp.bits()
    else:
        out.elements[dest] += inp.elements
    return out


class _Runner:
    """Per-plan precomputation shared by all workers."""

    def __init__(self, plan: TransposePlan):
        self.plan = plan
        self.sched = Schedule(plan)
        self.staged = plan.kind is not AlgorithmKind.TILED_COPY
        if plan.kind is AlgorithmKind.TILED:
            per_unit = L * L
        elif plan.kind is AlgorithmKind.TILED_COPY:
            per_unit = L * L        # a unit is L rows of one L-wide segment
        else:
            per_unit = plan.shmem_elems
        self.units_per_claim = max(1, CLAIM_ELEMS // per_unit)

    def run_units(self, u0: int, u1: int, src: np.ndarray, dst: np.ndarray, accumulate: bool):
        items = self.sched.items_for_units(u0, u1)
        if len(items) == 0:
            return
        st = self.sched.streams(items)
        if self.staged:
            size = self.sched.shared_size
            scratch = np.zeros(len(items) * size, dtype=src.dtype)
            ld = st.ld_global >= 0
            scratch[st.ld_item[:, None].repeat(L, 1)[ld] * size + st.sh_write[ld]] = src[st.ld_global[ld]]
            sm = st.st_global >= 0
            vals = scratch[st.st_item[:, None].repeat(L, 1)[sm] * size + st.sh_read[sm]]
            targets = st.st_global[sm]
        else:
            ld = st.ld_global >= 0
            vals = src[st.ld_global[ld]]
            targets = st.st_global[st.st_global >= 0]
        if accumulate:
            dst[targets] += vals
        else:
            dst[targets] = vals


def transpose_execute(plan: TransposePlan, inp: TensorBuffer, mode: WriteMode = WriteMode.WRITE,
                      workers: int = 1, out: TensorBuffer | None = None) -> TensorBuffer:
    """Carry out ``plan`` on ``inp`` with ``workers`` threads.

    Each output position is written by exactly one work unit, so the result
    does not depend on the worker count or on which worker claims which unit.
    """
    if inp.layout != plan.layout:
        raise ExecError(f"plan built for {plan.layout.extents} (E={plan.layout.element_size}), "
                        f"input is {inp.layout.extents} (E={inp.layout.element_size})")
    if workers < 1:
        raise ExecError("workers must be >= 1")
    _check_mode_dtype(inp, mode)
    out = _output_buffer(inp, plan.perm, mode, out)
    accumulate = mode is WriteMode.ACCUMULATE
    src = inp.elements if accumulate else inp.bits()
    dst = out.elements if accumulate else out.bits()
    runner = _Runner(plan)
    total = plan.work_units
    step = runner.units_per_claim
    lock = threading.Lock()
    counter = [0]
    errors: list[BaseException] = []

    def claim():
        with lock:
            u0 = counter[0]
            counter[0] = min(total, u0 + step)
            return u0, counter[0]

    def work():
        try:
            while True:
                u0, u1 = claim()
                if u0 >= total:
                    return
                runner.run_units(u0, u1, src, dst, accumulate)
        except BaseException as exc:     # surfaced on the calling thread
            errors.append(exc)

    if workers == 1:
        work()
    else:
        threads = [threading.Thread(target=work) for _ in range(min(workers, total))]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    if errors:
        raise errors[0]
    return out


def bandwidth(volume: int, element_size: int, seconds: float,
              mode: WriteMode = WriteMode.WRITE) -> float:
    """Effective bandwidth in bytes/s: factor * vol * E / D."""
    if seconds <= 0:
        raise ValueError("elapsed time must be positive")
    return mode.traffic_factor * volume * element_size / seconds


def measure_bandwidth(plan: TransposePlan, mode: WriteMode = WriteMode.WRITE,
                      repetitions: int = 3, workers: int = 1, seed: int = 0) -> float:
    """Host bandwidth of ``plan`` from the median of ``repetitions`` timed runs."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    rng = np.random.default_rng(seed)
    layout = plan.layout
    inp = TensorBuffer.random(layout, rng)
    out = TensorBuffer.zeros(plan.perm.output_layout(layout))
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        transpose_execute(plan, inp, mode, workers, out=out)
        times.append(time.perf_counter() - t0)
    return bandwidth(layout.volume, layout.element_size, median(times), mode)

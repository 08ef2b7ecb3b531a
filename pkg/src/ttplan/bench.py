"""Benchmark case generation, the bench driver and result output."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import median

import numpy as np

from .device import DeviceProfile
from .executor import TensorBuffer, WriteMode, bandwidth, transpose_execute, transpose_scatter
from .indexmath import LayoutError, Permutation, TensorLayout
from .plans import PlanError, TransposePlan, build_all_plans
from .selection import rank_heuristic, rank_simulated, _argmin
from .sim import SimConfig, simulate_plan

log = logging.getLogger(__name__)

Case = tuple[TensorLayout, Permutation]

SET2_SHAPES = (
    (5, 3, 2, 4, 35, 33, 37, 40),
    (2, 3, 4, 3, 2, 2, 3, 2, 20, 18, 22, 24),
)
SET2_LARGE = 4           # the last four dimensions of each shape are the large ones
RATIO_TOL = 0.10
VOLUME_TOL = 0.05
MAX_TRIES = 200


class BenchSpecError(ValueError):
    pass


class CaseFileError(ValueError):
    pass


@dataclass(frozen=True)
class BenchSpec:
    ranks: tuple[int, ...] = (2, 3, 4, 5, 6, 7)
    mean_volume: float = float(1 << 20)
    sd_volume: float = 0.2 * (1 << 20)
    ratios: tuple[int, ...] = (1, 5, 15)
    n_perms: int = 2
    element_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.mean_volume <= 0 or self.sd_volume < 0:
            raise BenchSpecError("volume parameters must be positive")
        if any(r < 1 for r in self.ratios):
            raise BenchSpecError("extent ratio must be >= 1")
        if any(r < 1 for r in self.ranks):
            raise BenchSpecError("ranks must be >= 1")
        if self.n_perms < 1:
            raise BenchSpecError("need at least one permutation per shape")
        if self.element_size not in (4, 8):
            raise BenchSpecError("element size must be 4 or 8")


def _extents_for(rank: int, ratio: int, volume: float, rng: np.random.Generator) -> tuple[int, ...]:
    if ratio == 1 or rank == 1:
        return (max(1, round(volume ** (1 / rank))),) * rank
    for _ in range(MAX_TRIES):
        # min and max dimensions are pinned; the rest spread log-uniformly between
        u = rng.uniform(0.0, 1.0, size=rank - 2)
        log_e = (math.log(volume) - math.log(ratio) * (1 + u.sum())) / rank
        e = math.exp(log_e)
        lo = max(1, round(e))
        mid = [max(lo, min(round(lo * ratio), round(lo * ratio ** t))) for t in u]
        # the largest extent absorbs rounding, within the ratio tolerance
        hi_min = max(lo, math.ceil(lo * ratio * (1 - RATIO_TOL)), *mid)
        hi_max = max(hi_min, math.floor(lo * ratio * (1 + RATIO_TOL)))
        hi = min(hi_max, max(hi_min, round(volume / (lo * math.prod(mid)))))
        ext = [lo, hi, *mid]
        vol = math.prod(ext)
        if (abs(max(ext) / min(ext) - ratio) <= RATIO_TOL * ratio
                and abs(vol - volume) <= VOLUME_TOL * volume):
            return tuple(int(x) for x in rng.permutation(ext))
    raise BenchSpecError(f"cannot draw rank-{rank} extents with ratio {ratio} "
                         f"near volume {volume:.0f}")


def gen_set1(spec: BenchSpec, seed: int | None = None) -> list[Case]:
    """Random shapes per (rank, ratio) with random permutations.

    Volumes are drawn from Normal(mean, sd). For ratio r > 1 the smallest and
    largest extents are pinned to e and r*e and the others spread
    log-uniformly between, with e solved from the target volume. Draws that
    miss the ratio by more than 10% or the volume by more than 5% after
    rounding are redrawn.
    """
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    cases = []
    for rank in spec.ranks:
        for ratio in spec.ratios:
            vol = max(float(rank), rng.normal(spec.mean_volume, spec.sd_volume))
            ext = _extents_for(rank, ratio, vol, rng)
            layout = TensorLayout(ext, spec.element_size)
            for _ in range(spec.n_perms):
                perm = Permutation(tuple(int(x) + 1 for x in rng.permutation(rank)))
                cases.append((layout, perm))
    return cases


def gen_set2(scale: int = 1, n_perms: int = 500, seed: int = 0,
             element_size: int = 8) -> list[Case]:
    """The two fixed high-rank shapes with trivial, reverse and random permutations."""
    if scale < 1:
        raise BenchSpecError("scale must be >= 1")
    rng = np.random.default_rng(seed)
    cases = []
    for shape in SET2_SHAPES:
        n = len(shape)
        small, large = shape[:-SET2_LARGE], shape[-SET2_LARGE:]
        ext = small + tuple(max(2, d // scale) for d in large)
        layout = TensorLayout(ext, element_size)
        cases.append((layout, Permutation.identity(n)))
        cases.append((layout, Permutation.reverse(n)))
        for _ in range(n_perms):
            cases.append((layout, Permutation(tuple(int(x) + 1 for x in rng.permutation(n)))))
    return cases


def arithmetic_intensity(vol_d: float, vol_l: float, vol_r: float) -> float:
    """2 sqrt(D L R) / (D + L + R) for a contraction with these index volumes."""
    if min(vol_d, vol_l, vol_r) <= 0:
        raise ValueError("volumes must be positive")
    return 2 * math.sqrt(vol_d * vol_l * vol_r) / (vol_d + vol_l + vol_r)


# -- custom case files ------------------------------------------------------

def _ints(text: str, what: str, lineno: int) -> tuple[int, ...]:
    try:
        vals = tuple(int(x) for x in text.replace(" ", "").split(",") if x)
    except ValueError:
        raise CaseFileError(f"line {lineno}: {what} must be comma-separated integers") from None
    if not vals:
        raise CaseFileError(f"line {lineno}: empty {what}")
    return vals


def parse_cases(text: str, element_size: int = 8) -> list[Case]:
    """Parse ``"2,3,4 | 3,1,2"`` lines; ``#`` starts a comment."""
    cases = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.count("|") != 1:
            raise CaseFileError(f"line {lineno}: expected 'extents | permutation'")
        a, b = line.split("|")
        ext, perm = _ints(a, "extents", lineno), _ints(b, "permutation", lineno)
        try:
            layout = TensorLayout(ext, element_size)
            p = Permutation(perm)
        except LayoutError as exc:
            raise CaseFileError(f"line {lineno}: {exc}") from None
        if len(p) != layout.rank:
            raise CaseFileError(f"line {lineno}: permutation has {len(p)} labels, "
                                f"tensor has rank {layout.rank}")
        cases.append((layout, p))
    return cases


def load_custom_cases(path, element_size: int = 8) -> list[Case]:
    return parse_cases(Path(path).read_text(), element_size)


def dump_cases(cases: list[Case]) -> str:
    return "".join(",".join(map(str, lay.extents)) + " | " + ",".join(map(str, p.order)) + "\n"
                   for lay, p in cases)


# -- driver -----------------------------------------------------------------

@dataclass
class BenchRecord:
    index: int
    extents: tuple[int, ...]
    perm: tuple[int, ...]
    element_size: int
    volume: int
    n_plans: int = 0
    heuristic_plan: str = ""
    heuristic_kind: str = ""
    model_cycles: float | None = None
    simulated_plan: str = ""
    simulated_kind: str = ""
    heuristic_tran: int | None = None
    best_tran: int | None = None
    traffic_ratio: float | None = None
    ld_tran: int | None = None
    st_tran: int | None = None
    cl_part: int | None = None
    shmem_tran: int | None = None
    match: bool | None = None
    verified: bool | None = None
    bandwidth: float | None = None
    error: str = ""

    def row(self, timing: bool) -> dict:
        d = asdict(self)
        d["extents"] = "x".join(map(str, self.extents))
        d["perm"] = ",".join(map(str, self.perm))
        if not timing:
            d.pop("bandwidth")
        return d


@dataclass
class BenchOptions:
    mode: str = "heuristic"          # heuristic | simulated | both
    execute: bool = True
    timing: bool = False
    repetitions: int = 3
    exec_workers: int = 1
    sample_seed: int = 0
    write_mode: WriteMode = WriteMode.WRITE

    def __post_init__(self):
        if self.mode not in ("heuristic", "simulated", "both"):
            raise ValueError(f"unknown mode {self.mode!r}")


def _run_case(i: int, case: Case, profile: DeviceProfile, cfg: SimConfig,
              opts: BenchOptions) -> BenchRecord:
    layout, perm = case
    rec = BenchRecord(i, layout.extents, perm.order, layout.element_size, layout.volume)
    try:
        plans = build_all_plans(layout, perm, profile)
        rec.n_plans = len(plans)
        can_sim = layout.volume <= cfg.cap
        chosen: TransposePlan
        exact = {}
        if opts.mode in ("simulated", "both"):
            if not can_sim:
                raise PlanError(f"volume {layout.volume} above simulation cap {cfg.cap}")
            ranked = rank_simulated(plans, cfg)
            exact = {id(s.plan): s.detail for s in ranked}
            best = _argmin(ranked).plan
            rec.simulated_plan, rec.simulated_kind = best.label(), best.kind.value
            rec.best_tran = min(s.detail.global_tran for s in ranked)
            chosen = best
        if opts.mode in ("heuristic", "both"):
            scored = rank_heuristic(plans, profile, opts.sample_seed)
            h = _argmin(scored)
            rec.heuristic_plan, rec.heuristic_kind = h.plan.label(), h.plan.kind.value
            rec.model_cycles = round(h.score, 3)
            chosen = h.plan
        if can_sim:
            t = exact.get(id(chosen)) or simulate_plan(chosen, cfg, verify=True)
            rec.ld_tran, rec.st_tran = t.ld_tran, t.st_tran
            rec.cl_part, rec.shmem_tran = t.cl_part, t.shmem_tran
            if opts.mode == "both":
                rec.heuristic_tran = t.global_tran
                rec.traffic_ratio = round(t.global_tran / rec.best_tran, 6)
                rec.match = rec.heuristic_plan == rec.simulated_plan
        if opts.execute:
            rng = np.random.default_rng(i)
            inp = TensorBuffer.random(layout, rng)
            ref = transpose_scatter(inp, perm)
            got = transpose_execute(chosen, inp, WriteMode.WRITE, opts.exec_workers)
            rec.verified = bool(np.array_equal(ref.bits(), got.bits()))
            if opts.timing:
                out = TensorBuffer.zeros(perm.output_layout(layout))
                times = []
                for _ in range(opts.repetitions):
                    t0 = time.perf_counter()
                    transpose_execute(chosen, inp, opts.write_mode, opts.exec_workers, out=out)
                    times.append(time.perf_counter() - t0)
                rec.bandwidth = bandwidth(layout.volume, layout.element_size, median(times),
                                          opts.write_mode)
    except Exception as exc:       # recorded, the run continues
        log.warning("case %d %s %s failed: %s", i, layout.extents, perm.order, exc)
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def run_bench(cases: list[Case], profile: DeviceProfile, opts: BenchOptions = BenchOptions(),
              workers: int = 1, cfg: SimConfig | None = None) -> list[BenchRecord]:
    if not cases:
        raise ValueError("no cases to run")
    cfg = cfg or SimConfig.from_profile(profile)
    if workers <= 1:
        recs = [_run_case(i, c, profile, cfg, opts) for i, c in enumerate(cases)]
    else:
        with ThreadPoolExecutor(workers) as pool:
            futs = [pool.submit(_run_case, i, c, profile, cfg, opts) for i, c in enumerate(cases)]
            recs = [f.result() for f in futs]
    return sorted(recs, key=lambda r: r.index)


def _stats(values) -> dict | None:
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    return {"min": min(vals), "median": median(vals), "max": max(vals), "n": len(vals)}


@dataclass
class BenchSummary:
    cases: int
    failed: int
    unverified: int
    agreement: float | None
    within_1_5: float | None
    traffic_ratio: dict | None
    model_cycles: dict | None
    bandwidth: dict | None = None
    kinds: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.failed == 0 and self.unverified == 0


def summarize(records: list[BenchRecord]) -> BenchSummary:
    matches = [r.match for r in records if r.match is not None]
    ratios = [r.traffic_ratio for r in records if r.traffic_ratio is not None]
    kinds: dict[str, int] = {}
    for r in records:
        k = r.heuristic_kind or r.simulated_kind
        if k:
            kinds[k] = kinds.get(k, 0) + 1
    return BenchSummary(
        cases=len(records),
        failed=sum(1 for r in records if r.error),
        unverified=sum(1 for r in records if r.verified is False),
        agreement=sum(matches) / len(matches) if matches else None,
        within_1_5=sum(x <= 1.5 for x in ratios) / len(ratios) if ratios else None,
        traffic_ratio=_stats(ratios),
        model_cycles=_stats(r.model_cycles for r in records),
        bandwidth=_stats(r.bandwidth for r in records),
        kinds=dict(sorted(kinds.items())),
    )


def records_csv(records: list[BenchRecord], timing: bool = False) -> str:
    buf = io.StringIO()
    rows = [r.row(timing) for r in records]
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def records_json(records: list[BenchRecord], summary: BenchSummary, timing: bool = False) -> str:
    return json.dumps({"summary": asdict(summary), "records": [r.row(timing) for r in records]},
                      indent=2)


def summary_table(s: BenchSummary) -> str:
    def fmt(x):
        return "-" if x is None else f"{x:.4g}"

    lines = [f"cases {s.cases}   failed {s.failed}   unverified {s.unverified}"]
    for name, st in (("traffic ratio", s.traffic_ratio), ("model cycles", s.model_cycles),
                     ("bandwidth B/s", s.bandwidth)):
        if st:
            lines.append(f"{name:<14} min {fmt(st['min']):>10}  median {fmt(st['median']):>10}"
                         f"  max {fmt(st['max']):>10}")
    if s.agreement is not None:
        lines.append(f"agreement      {s.agreement:.3f}   within 1.5x {fmt(s.within_1_5)}")
    if s.kinds:
        lines.append("chosen kinds   " + "  ".join(f"{k}={v}" for k, v in s.kinds.items()))
    return "\n".join(lines)

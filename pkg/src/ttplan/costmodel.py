"""Memory-warp-parallelism cycle model for transpose plans.

Per plan the model predicts

    cycles = (cycles_mem + cycles_shmem + cycles_ac) * N_iter
    cycles_mem = 2 * mem_lat * MLP * N_warp / MWP
    mem_lat = mem_baselat + (TPR_mem - 1) * delta

where TPR_mem counts partial L2 line stores twice and N_iter is the number
of work units each SM works through (work_units / N_SM). Global transaction
counts come from ten sampled Mbar slices run through the simulator.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .device import DeviceProfile
from .indexmath import WARP_SIZE
from .plans import AlgorithmKind, TransposePlan
from .sim import SimConfig, TrafficReport, analytic_requests, shared_read_tpr, simulate_plan

log = logging.getLogger(__name__)

N_SAMPLES = 10


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class TileCensus:
    full: int
    horz: int       # width cut to h = vol_m mod L, full height
    vert: int       # height cut to v = vol_k mod L, full width
    corn: int
    v: int
    h: int

    @property
    def total(self) -> int:
        return self.full + self.horz + self.vert + self.corn


def tile_census(vol_m: int, vol_k: int, L: int = WARP_SIZE) -> TileCensus:
    """Classify the ceil(vol_m/L) x ceil(vol_k/L) tile grid by which edges are cut.

    ``vol_m`` runs along the read direction (tile width), ``vol_k`` across it
    (tile height).
    """
    if vol_m < 1 or vol_k < 1:
        raise ModelError("tile census needs positive volumes")
    h, v = vol_m % L, vol_k % L
    full_cols, cut_cols = vol_m // L, int(h > 0)
    full_rows, cut_rows = vol_k // L, int(v > 0)
    return TileCensus(full=full_cols * full_rows, horz=cut_cols * full_rows,
                      vert=full_cols * cut_rows, corn=cut_cols * cut_rows, v=v, h=h)


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def mlp_tiled(c: TileCensus, L: int, R: int) -> float:
    if c.total == 0:
        raise ModelError("no tiles")
    num = ((L / R) * (2 * c.full + c.horz)
           + _ceil_div(c.v, R) * (c.vert + c.corn)
           + _ceil_div(c.h, R) * (c.horz + c.corn))
    return num / (2 * c.total)


def mlp_tiled_copy(c: TileCensus, L: int, R: int) -> float:
    if c.total == 0:
        raise ModelError("no tiles")
    num = (L / R) * (c.full + c.horz) + _ceil_div(c.v, R) * (c.vert + c.corn)
    return num / c.total


def mlp_packed(n_reg: int) -> int:
    if not 1 <= n_reg <= 8:
        raise ModelError(f"nReg must lie in 1..8, got {n_reg}")
    return n_reg


def tpr_mem(t: TrafficReport) -> float:
    req = t.ld_req + t.st_req
    if req <= 0:
        raise ModelError("no memory requests")
    lines = t.cl_full + t.cl_part
    partial = t.cl_part / lines if lines else 0.0
    return (t.ld_tran + t.st_tran * (1 + partial)) / req


def mem_latency(profile: DeviceProfile, tpr: float) -> float:
    if tpr < 1:
        log.warning("TPR_mem %.4f below 1, clamping", tpr)
        tpr = 1.0
    return profile.mem_baselat + (tpr - 1) * profile.delta


def bytes_per_request(profile: DeviceProfile, tpr: float) -> float:
    ch = profile.cache_hit
    return (tpr * (1 - ch) + ch) * profile.tran_size


@dataclass(frozen=True)
class MWPTerms:
    mwp: float
    mwp_mem: float
    mwp_peak: float
    bw_warp: float
    bytes_req: float


def mwp(profile: DeviceProfile, mem_lat: float, mlp: float, n_warps_per_sm: float,
        bytes_req: float) -> MWPTerms:
    if min(mem_lat, mlp, n_warps_per_sm, bytes_req) <= 0:
        raise ModelError("MWP inputs must be positive")
    bw_warp = profile.freq * bytes_req / mem_lat
    mwp_peak = profile.mem_bw / (bw_warp * profile.n_sm)
    mwp_mem = mem_lat / profile.delta
    return MWPTerms(min(mwp_mem * mlp, mwp_peak, n_warps_per_sm),
                    mwp_mem, mwp_peak, bw_warp, bytes_req)


def cycles_mem(mem_lat: float, mlp: float, n_warp: int, mwp_value: float) -> float:
    if mwp_value <= 0:
        raise ModelError("MWP must be positive")
    return 2 * mem_lat * mlp * n_warp / mwp_value


def cycles_shmem(profile: DeviceProfile, tpr: float, mlp: float) -> float:
    return 2 * tpr * profile.shmem_lat * mlp


def tpr_shmem(plan: TransposePlan, cfg: SimConfig = SimConfig()) -> float:
    if plan.kind is AlgorithmKind.TILED_COPY:
        raise ModelError("TiledCopy has no shared-memory traffic")
    if plan.kind is AlgorithmKind.TILED:
        return 1.0
    return shared_read_tpr(plan, cfg)


def warps_per_sm(plan: TransposePlan, profile: DeviceProfile) -> int:
    """Resident warps per SM, limited by warp slots and shared memory."""
    warps = profile.max_warps_per_sm
    if plan.shmem_bytes:
        warps = min(warps, (profile.shmem_capacity // plan.shmem_bytes) * plan.n_warp)
    if warps < 1:
        raise ModelError(f"{plan.label()} does not fit in shared memory")
    return warps


def iterations_per_sm(plan: TransposePlan, profile: DeviceProfile) -> float:
    """Load-store iterations each SM runs, amortised over the whole grid.

    The per-iteration cost already divides by MWP, so it is the throughput
    cost of one work unit on a busy SM; the SM runs work_units / N_SM of
    them. Not rounded: rounding hides the difference between plans whose
    grids are smaller than the machine.
    """
    return plan.work_units / profile.n_sm


def sample_slices(n_slices: int, rng_seed: int, n: int = N_SAMPLES) -> np.ndarray:
    if n_slices <= n:
        return np.arange(n_slices, dtype=np.int64)
    rng = np.random.default_rng(rng_seed)
    return np.sort(rng.choice(n_slices, size=n, replace=False)).astype(np.int64)


def sample_traffic(plan: TransposePlan, rng_seed: int = 0,
                   cfg: SimConfig = SimConfig()) -> TrafficReport:
    """Ten-slice estimate of whole-tensor traffic.

    Transaction and line counts are averaged over the sampled slices and
    scaled to all slices; request counts are exact from plan geometry.
    """
    n_slices = plan.partition.vol_mbar
    slices = sample_slices(n_slices, rng_seed)
    rep = simulate_plan(plan, cfg, slices=slices, verify=False)
    scale = n_slices / len(slices)
    ld_req, st_req = analytic_requests(plan)
    return TrafficReport(
        ld_req=ld_req, st_req=st_req,
        ld_tran=rep.ld_tran * scale, st_tran=rep.st_tran * scale,
        cl_full=rep.cl_full * scale, cl_part=rep.cl_part * scale,
        shmem_req=rep.shmem_req * scale, shmem_tran=rep.shmem_tran * scale,
        shmem_ld_req=rep.shmem_ld_req * scale, shmem_ld_tran=rep.shmem_ld_tran * scale,
        slices=n_slices, exact=len(slices) == n_slices)


@dataclass(frozen=True)
class CostEstimate:
    total_cycles: float
    cycles_mem: float
    cycles_shmem: float
    cycles_ac: float
    n_iter: float
    mem_lat: float
    tpr_mem: float
    tpr_shmem: float
    mlp: float
    mwp: float
    mwp_mem: float
    mwp_peak: float
    bw_warp: float
    bytes_req: float
    n_warps_per_sm: int

    def to_dict(self) -> dict:
        return asdict(self)


def plan_mlp(plan: TransposePlan) -> float:
    L = WARP_SIZE
    R = plan.n_warp
    if plan.kind is AlgorithmKind.TILED:
        layout = plan.layout
        c = tile_census(layout.extent(1), layout.extent(plan.perm.order[0]), L)
        return mlp_tiled(c, L, R)
    if plan.kind is AlgorithmKind.TILED_COPY:
        c = tile_census(plan.layout.extent(1), plan.partition.vol_mbar, L)
        return mlp_tiled_copy(c, L, R)
    return float(mlp_packed(plan.n_reg))


def estimate_cycles(plan: TransposePlan, profile: DeviceProfile, rng_seed: int = 0,
                    traffic: TrafficReport | None = None,
                    cfg: SimConfig | None = None) -> CostEstimate:
    cfg = cfg or SimConfig.from_profile(profile)
    if traffic is None:
        traffic = sample_traffic(plan, rng_seed, cfg)
    tpr = tpr_mem(traffic)
    if tpr < 1:
        log.warning("%s: sampled TPR_mem %.4f below 1, clamping", plan.label(), tpr)
        tpr = 1.0
    lat = mem_latency(profile, tpr)
    mlp = plan_mlp(plan)
    nw = warps_per_sm(plan, profile)
    terms = mwp(profile, lat, mlp, nw, bytes_per_request(profile, tpr))
    c_mem = cycles_mem(lat, mlp, plan.n_warp, terms.mwp)
    if plan.kind is AlgorithmKind.TILED_COPY:
        t_sh, c_sh = 0.0, 0.0
    else:
        t_sh = tpr_shmem(plan, cfg)
        c_sh = cycles_shmem(profile, t_sh, mlp)
    n_iter = iterations_per_sm(plan, profile)
    total = (c_mem + c_sh + profile.cycles_ac) * n_iter
    return CostEstimate(total_cycles=total, cycles_mem=c_mem, cycles_shmem=c_sh,
                        cycles_ac=profile.cycles_ac, n_iter=n_iter, mem_lat=lat,
                        tpr_mem=tpr, tpr_shmem=t_sh, mlp=mlp, mwp=terms.mwp,
                        mwp_mem=terms.mwp_mem, mwp_peak=terms.mwp_peak,
                        bw_warp=terms.bw_warp, bytes_req=terms.bytes_req,
                        n_warps_per_sm=nw)

"""Choosing one plan out of the enumerated candidates."""
from __future__ import annotations

from dataclasses import dataclass

from .costmodel import CostEstimate, estimate_cycles
from .device import DeviceProfile
from .plans import TransposePlan
from .sim import SimConfig, TrafficReport, VolumeCapError, simulate_plan

# Weights for the measured score: one 128-byte transaction is the unit, a
# partial L2 line costs an extra 32-byte fill, a shared-memory replay is far
# cheaper than a DRAM transaction.
W_GLOBAL = 1.0
W_PARTIAL = 0.25
W_SHARED = 0.125


@dataclass(frozen=True)
class Scored:
    plan: TransposePlan
    score: float
    detail: object


def _argmin(scored: list[Scored]) -> Scored:
    best = scored[0]
    for s in scored[1:]:
        if s.score < best.score:
            best = s
    return best


def rank_heuristic(plans, profile: DeviceProfile, rng_seed: int = 0) -> list[Scored]:
    out = []
    for p in plans:
        est: CostEstimate = estimate_cycles(p, profile, rng_seed)
        out.append(Scored(p, est.total_cycles, est))
    return out


def select_heuristic(plans, profile: DeviceProfile, rng_seed: int = 0) -> TransposePlan:
    """Plan with the fewest modelled cycles; ties go to the earlier plan."""
    plans = list(plans)
    if not plans:
        raise ValueError("no plans to choose from")
    if len(plans) == 1:
        return plans[0]
    return _argmin(rank_heuristic(plans, profile, rng_seed)).plan


def traffic_score(t: TrafficReport) -> float:
    return W_GLOBAL * (t.ld_tran + t.st_tran) + W_PARTIAL * t.cl_part + W_SHARED * t.shmem_tran


def rank_simulated(plans, cfg: SimConfig = SimConfig()) -> list[Scored]:
    out = []
    for p in plans:
        t = simulate_plan(p, cfg, verify=False)
        out.append(Scored(p, traffic_score(t), t))
    return out


def select_simulated(plans, cfg: SimConfig = SimConfig()) -> TransposePlan:
    """Plan with the lowest exact weighted traffic; ties go to the earlier plan."""
    plans = list(plans)
    if not plans:
        raise ValueError("no plans to choose from")
    vol = plans[0].layout.volume
    if vol > cfg.cap:
        raise VolumeCapError(
            f"volume {vol} exceeds simulation cap {cfg.cap}; use heuristic selection")
    if len(plans) == 1:
        return plans[0]
    return _argmin(rank_simulated(plans, cfg)).plan

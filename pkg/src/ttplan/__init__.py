"""Tensor transpose planning: index math, plans, cost model, traffic simulator, executor."""
from .costmodel import CostEstimate, estimate_cycles, sample_traffic
from .device import BUILTIN_PROFILES, DeviceProfile, get_profile, load_profile
from .executor import (TensorBuffer, WriteMode, measure_bandwidth, transpose_execute,
                       transpose_scatter)
from .indexmath import LayoutError, MultiIndex, Permutation, TensorLayout, transpose_position
from .plans import AlgorithmKind, PlanError, TransposePlan, build_all_plans
from .selection import select_heuristic, select_simulated
from .sim import SimConfig, TrafficReport, VolumeCapError, simulate_plan

__version__ = "0.1.0"

__all__ = [
    "AlgorithmKind", "BUILTIN_PROFILES", "CostEstimate", "DeviceProfile", "LayoutError",
    "MultiIndex", "Permutation", "PlanError", "SimConfig", "TensorBuffer", "TensorLayout",
    "TrafficReport", "TransposePlan", "VolumeCapError", "WriteMode", "build_all_plans",
    "estimate_cycles", "get_profile", "load_profile", "measure_bandwidth", "sample_traffic",
    "select_heuristic", "select_simulated", "simulate_plan", "transpose_execute",
    "transpose_position", "transpose_scatter",
]

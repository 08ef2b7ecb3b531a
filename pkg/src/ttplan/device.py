"""GPU architecture constants consumed by the planner, cost model and simulator."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    n_sm: int
    mem_bw: float              # bytes/s, theoretical peak
    freq: float                # Hz
    delta: float               # cycles between consecutive transaction departures
    mem_baselat: float         # cycles
    shmem_lat: float           # cycles
    cycles_ac: float           # cycles per iteration, arithmetic and control
    shmem_capacity: int = 48 * 1024   # bytes per block
    bank_count: int = 32
    bank_width: int = 4
    tran_size: int = 128
    l2_line: int = 32
    cache_hit: float = 0.2
    max_warps_per_sm: int = 64
    max_blocks_per_sm: int = 32

    def __post_init__(self):
        for f in fields(self):
            if f.name == "name":
                continue
            v = getattr(self, f.name)
            if f.name == "cache_hit":
                if not 0.0 <= v <= 1.0:
                    raise ProfileError(f"cache_hit must lie in [0, 1], got {v}")
            elif not v > 0:
                raise ProfileError(f"{f.name} must be positive, got {v}")
        if self.tran_size % self.l2_line:
            raise ProfileError("tran_size must be a multiple of l2_line")

    def shmem_elements(self, element_size: int) -> int:
        return self.shmem_capacity // element_size

    def to_dict(self) -> dict:
        return asdict(self)


# Latency constants are the fitted values for each architecture family.
# SM count, bandwidth and clock are public board specs (base clock) and are
# meant to be overridden for other boards.
BUILTIN_PROFILES = {
    "kepler-k20x": DeviceProfile(
        name="kepler-k20x", n_sm=14, mem_bw=250e9, freq=732e6,
        delta=14, mem_baselat=358, shmem_lat=11, cycles_ac=50),
    "maxwell-m40": DeviceProfile(
        name="maxwell-m40", n_sm=24, mem_bw=288e9, freq=948e6,
        delta=2.5, mem_baselat=385, shmem_lat=1, cycles_ac=220),
    "pascal-p100": DeviceProfile(
        name="pascal-p100", n_sm=56, mem_bw=732e9, freq=1328e6,
        delta=2.8, mem_baselat=485, shmem_lat=1, cycles_ac=260),
}

DEFAULT_PROFILE = "kepler-k20x"

_INT_FIELDS = {f.name for f in fields(DeviceProfile) if f.type in ("int", int)}
_STR_FIELDS = {"name"}


def _coerce(raw: dict) -> DeviceProfile:
    raw = dict(raw)
    base = raw.pop("base", None)
    unknown = set(raw) - {f.name for f in fields(DeviceProfile)}
    if unknown:
        raise ProfileError(f"unknown profile keys: {sorted(unknown)}")
    values = {}
    for key, val in raw.items():
        if key in _STR_FIELDS:
            values[key] = str(val)
        elif key in _INT_FIELDS:
            values[key] = int(float(val))
        else:
            values[key] = float(val)
    if base is not None:
        return replace(get_profile(base), **values)
    missing = {"name", "n_sm", "mem_bw", "freq", "delta", "mem_baselat",
               "shmem_lat", "cycles_ac"} - set(values)
    if missing:
        raise ProfileError(f"profile missing keys: {sorted(missing)}")
    return DeviceProfile(**values)


def parse_profile_text(text: str) -> DeviceProfile:
    """Parse JSON or ``key = value`` lines (``#`` starts a comment)."""
    stripped = text.strip()
    if stripped.startswith("{"):
        raw = json.loads(stripped)
    else:
        raw = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ProfileError(f"line {lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            raw[key] = val
    return _coerce(raw)


def load_profile(path) -> DeviceProfile:
    return parse_profile_text(Path(path).read_text())


def get_profile(name_or_path: str) -> DeviceProfile:
    if name_or_path in BUILTIN_PROFILES:
        return BUILTIN_PROFILES[name_or_path]
    p = Path(name_or_path)
    if p.exists():
        return load_profile(p)
    raise ProfileError(
        f"unknown device {name_or_path!r}; built-ins: {', '.join(BUILTIN_PROFILES)}")

"""Seeded synthetic telemetry with recorded ground truth.

Randomness comes from a counter-based splitmix64 stream and Box-Muller
normals, so a given seed yields the same numbers on any platform:

* ``u_k = (splitmix64(seed + (k + 1) * GOLDEN) >> 11) * 2**-53``
* normals are produced in pairs from ``(u_2j, u_2j+1)`` as
  ``sqrt(-2 ln(1 - u_2j)) * (cos, sin)(2 pi u_2j+1)``
* a node's seed is ``derive_seed(seed, node_index)`` and each quantity
  (cpu noise, bursts, ...) draws from ``derive_seed(node_seed, stream)``,
  where ``derive_seed(s, i) = mix64(s ^ mix64((i + 1) * GOLDEN))``.
"""

from __future__ import annotations

import json
import math
from dataclasses import MISSING, asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import numpy as np

from .telemetry import DAY, TelemetryRecord, parse_timestamp, serialize_csv

GOLDEN = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1
WEEK = 7 * DAY
BURST_WIDTH = 600

# stream ids
CPU_NOISE, BURSTS, NET_NOISE, MEM_NOISE, DISK_IO_NOISE, POWER_NOISE, TEMP_NOISE, DISK_USED_NOISE = range(8)


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    return mix64((seed & MASK64) ^ mix64((index + 1) * GOLDEN))


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Counter-based splitmix64 stream."""

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self.counter = 0

    def raw(self, n: int) -> np.ndarray:
        k = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return _mix64_array(np.uint64(self.seed) + k * np.uint64(GOLDEN))

    def uniforms(self, n: int) -> np.ndarray:
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normals(self, n: int) -> np.ndarray:
        pairs = (n + 1) // 2
        u = self.uniforms(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        theta = 2.0 * np.pi * u[:, 1]
        out = np.empty((pairs, 2))
        out[:, 0] = r * np.cos(theta)
        out[:, 1] = r * np.sin(theta)
        return out.reshape(-1)[:n]


# ---------------------------------------------------------------------------
# configuration


@dataclass
class CpuPattern:
    base: float = 45.0
    diurnal: float = 20.0
    weekly: float = 3.0
    burst_rate: float = 1.0  # per day
    burst_height: float = 20.0
    noise: float = 3.0


@dataclass
class PowerLaw:
    a: float = 1.5  # W per cpu %
    b: float = 0.8  # W per net mbps
    c: float = 20.0  # idle W
    noise: float = 2.0


@dataclass
class TempLaw:
    cpu: float = 0.15
    mem: float = 0.05
    disk_io: float = 0.2
    disk_used: float = 0.05
    ambient: float = 22.0
    noise: float = 0.5


@dataclass
class NetPattern:
    mean: float = 10.0
    noise: float = 3.0


@dataclass
class MemPattern:
    base: float = 50.0
    cpu_coupling: float = 0.3
    noise: float = 2.0


@dataclass
class DiskPattern:
    io_mean: float = 5.0
    io_cpu_coupling: float = 0.05
    io_noise: float = 1.5
    used_start: float = 40.0
    used_growth_per_day: float = 0.5
    used_noise: float = 0.1


@dataclass
class SynthConfig:
    nodes: int = 1
    duration: int = 7 * DAY
    interval: int = 60
    seed: int = 0
    start: str = "2019-01-01T00:00:00Z"
    cpu_pattern: CpuPattern = field(default_factory=CpuPattern)
    power_law: PowerLaw = field(default_factory=PowerLaw)
    temp_law: TempLaw = field(default_factory=TempLaw)
    net_pattern: NetPattern = field(default_factory=NetPattern)
    mem_pattern: MemPattern = field(default_factory=MemPattern)
    disk_pattern: DiskPattern = field(default_factory=DiskPattern)

    def __post_init__(self):
        if self.nodes < 1:
            raise ValueError("nodes must be >= 1")
        if self.interval <= 0 or self.duration < self.interval:
            raise ValueError("need duration >= interval > 0")
        sigmas = [
            self.cpu_pattern.noise,
            self.power_law.noise,
            self.temp_law.noise,
            self.net_pattern.noise,
            self.mem_pattern.noise,
            self.disk_pattern.io_noise,
            self.disk_pattern.used_noise,
        ]
        if any(s < 0 for s in sigmas):
            raise ValueError("noise standard deviations must be >= 0")
        if self.cpu_pattern.burst_rate < 0:
            raise ValueError("burst_rate must be >= 0")

    @property
    def n_samples(self) -> int:
        return self.duration // self.interval

    @classmethod
    def from_dict(cls, data: dict) -> SynthConfig:
        kwargs = {}
        for f in fields(cls):
            if f.name not in data:
                continue
            value = data[f.name]
            sub = f.default_factory if f.default_factory is not MISSING else None
            if isinstance(value, dict) and sub is not None and is_dataclass(sub):
                value = sub(**value)
            kwargs[f.name] = value
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GroundTruth:
    config: SynthConfig
    node_index: int
    node_id: str
    node_seed: int
    latent: dict[str, np.ndarray]
    clamp_events: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "node_index": self.node_index,
            "node_id": self.node_id,
            "node_seed": self.node_seed,
            "latent": {k: v.tolist() for k, v in self.latent.items()},
            "clamp_events": dict(self.clamp_events),
        }


# ---------------------------------------------------------------------------
# generation


def _clamp(x: np.ndarray, lo: float, hi: float, name: str, counts: dict) -> np.ndarray:
    out = np.clip(x, lo, hi)
    counts[name] = int(np.count_nonzero(out != x))
    return out


def burst_signal(t: np.ndarray, rate_per_day: float, height: float, stream: SplitMix64) -> np.ndarray:
    """Square pulses of ``height`` and 10-minute width at Poisson arrival times; overlaps add."""
    sig = np.zeros_like(t, dtype=np.float64)
    if rate_per_day <= 0 or height == 0 or t.size == 0:
        return sig
    mean_gap = DAY / rate_per_day
    horizon = float(t[-1])
    arrivals = []
    clock = 0.0
    while True:
        clock += -mean_gap * math.log1p(-float(stream.uniforms(1)[0]))
        if clock > horizon:
            break
        arrivals.append(clock)
    for a in arrivals:
        sig[(t >= a) & (t < a + BURST_WIDTH)] += height
    return sig


def node_id_for(index: int) -> str:
    return f"n{index}"


def gen_node(config: SynthConfig, node_index: int = 0) -> tuple[list[TelemetryRecord], GroundTruth]:
    node_seed = derive_seed(config.seed, node_index)

    def stream(k):
        return SplitMix64(derive_seed(node_seed, k))

    n = config.n_samples
    t = config.interval * np.arange(n, dtype=np.float64)
    start = parse_timestamp(config.start)
    clamps: dict[str, int] = {}
    cp, pl, tl = config.cpu_pattern, config.power_law, config.temp_law
    npat, mp, dp = config.net_pattern, config.mem_pattern, config.disk_pattern

    cpu_signal = (
        cp.base
        + cp.diurnal * np.sin(2.0 * np.pi * t / DAY)
        + cp.weekly * np.sin(2.0 * np.pi * t / WEEK)
        + burst_signal(t, cp.burst_rate, cp.burst_height, stream(BURSTS))
    )
    cpu = _clamp(cpu_signal + cp.noise * stream(CPU_NOISE).normals(n), 0.0, 100.0, "cpu_pct", clamps)
    net = _clamp(npat.mean + npat.noise * stream(NET_NOISE).normals(n), 0.0, np.inf, "net_mbps", clamps)
    mem = _clamp(
        mp.base + mp.cpu_coupling * (cpu - cp.base) + mp.noise * stream(MEM_NOISE).normals(n),
        0.0,
        100.0,
        "mem_pct",
        clamps,
    )
    disk_io = _clamp(
        dp.io_mean + dp.io_cpu_coupling * cpu + dp.io_noise * stream(DISK_IO_NOISE).normals(n),
        0.0,
        np.inf,
        "disk_io_mbps",
        clamps,
    )
    disk_used = _clamp(
        dp.used_start + dp.used_growth_per_day * t / DAY + dp.used_noise * stream(DISK_USED_NOISE).normals(n),
        0.0,
        100.0,
        "disk_used_pct",
        clamps,
    )
    power_latent = pl.a * cpu + pl.b * net + pl.c
    power = _clamp(power_latent + pl.noise * stream(POWER_NOISE).normals(n), 0.0, np.inf, "power_w", clamps)
    temp_latent = tl.ambient + tl.cpu * cpu + tl.mem * mem + tl.disk_io * disk_io + tl.disk_used * disk_used
    temp = temp_latent + tl.noise * stream(TEMP_NOISE).normals(n)

    nid = node_id_for(node_index)
    ts = start + config.interval * np.arange(n, dtype=np.int64)
    cols = zip(ts.tolist(), cpu.tolist(), mem.tolist(), disk_io.tolist(), disk_used.tolist(), net.tolist(),
               power.tolist(), temp.tolist())
    records = [TelemetryRecord(tk, nid, *vals) for tk, *vals in cols]
    truth = GroundTruth(
        config=config,
        node_index=node_index,
        node_id=nid,
        node_seed=node_seed,
        latent={"cpu_pct": np.clip(cpu_signal, 0.0, 100.0), "power_w": power_latent, "temp_c": temp_latent},
        clamp_events=clamps,
    )
    return records, truth


def gen_cluster(config: SynthConfig, k: int | None = None) -> list[tuple[list[TelemetryRecord], GroundTruth]]:
    k = config.nodes if k is None else k
    if k < 1:
        raise ValueError("cluster needs at least one node")
    return [gen_node(config, i) for i in range(k)]


def write_synth(config: SynthConfig, out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``telemetry.csv`` (all nodes, node-major) and ``groundtruth.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    nodes = gen_cluster(config)
    all_records = [r for recs, _ in nodes for r in recs]
    csv_path = out / "telemetry.csv"
    csv_path.write_bytes(serialize_csv(all_records))
    gt_path = out / "groundtruth.json"
    doc = {"config": config.to_dict(), "nodes": [gt.to_dict() for _, gt in nodes]}
    gt_path.write_text(json.dumps(doc, sort_keys=True))
    return csv_path, gt_path

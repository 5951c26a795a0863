"""Network drops: AP/UE placement, wrap-around distances, large-scale fading
and pilot assignment.

Large-scale coefficients are returned already divided by the receiver noise
power, so they carry units of 1/W.  Every power in the package (pilot power,
downlink powers, per-AP budgets) is then expressed in watts and the product
``power * beta`` is an SNR.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BOLTZMANN = 1.380649e-23  # J/K
NOISE_TEMPERATURE = 290.0  # K


class ConfigError(ValueError):
    """Raised when a configuration violates a dimensioning constraint."""


@dataclass(frozen=True)
class SystemConfig:
    L: int = 128
    M: int = 64
    K: int = 20
    tau_p: int = 10
    tau_c: int = 200
    xi_dl: float = 0.5
    area_side: float = 500.0
    carrier_freq: float = 2e9
    bandwidth: float = 20e6
    noise_figure: float = 9.0
    ap_height: float = 15.0
    ue_height: float = 1.65
    shadow_sigma: float = 8.0
    p_max_dl: float = 0.2
    p_ul: float = 0.1
    # three-slope breakpoints, meters
    d0: float = 10.0
    d1: float = 50.0
    pilot_mode: str = "random"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if min(self.L, self.M, self.K, self.tau_p) < 1:
            raise ConfigError("L, M, K and tau_p must all be >= 1")
        if self.L * self.M <= self.K:
            raise ConfigError(f"need L*M > K, got L*M={self.L * self.M}, K={self.K}")
        if not self.tau_p <= min(self.tau_c, self.K):
            raise ConfigError(f"need 1 <= tau_p <= min(tau_c, K), got tau_p={self.tau_p}")
        if not 0.0 < self.xi_dl <= 1.0:
            raise ConfigError(f"xi_dl must lie in (0, 1], got {self.xi_dl}")
        if self.area_side <= 0:
            raise ConfigError("area_side must be positive")
        if not 0 < self.d0 < self.d1:
            raise ConfigError("path-loss breakpoints must satisfy 0 < d0 < d1")
        if self.pilot_mode not in ("random", "distinct"):
            raise ConfigError(f"unknown pilot_mode {self.pilot_mode!r}")

    def require_fpzf(self):
        """fpZF needs more antennas than pilots per AP."""
        if self.M < self.tau_p + 1:
            raise ConfigError(
                f"fpZF requires M >= tau_p + 1 (M={self.M}, tau_p={self.tau_p})")

    @property
    def height_delta(self) -> float:
        return self.ap_height - self.ue_height

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SystemConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "SystemConfig":
        """Load a JSON config; missing keys keep their defaults."""
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if "preset" in data:
            base = PRESETS[data.pop("preset")].to_dict()
            base.update(data)
            data = base
        return cls.from_dict(data)


PRESETS = {
    "full-l128": SystemConfig(L=128, M=64, K=20, tau_p=10),
    "full-l256": SystemConfig(L=256, M=64, K=20, tau_p=10),
    "desk": SystemConfig(L=64, M=16, K=10, tau_p=5),
    "small": SystemConfig(L=16, M=8, K=6, tau_p=3),
}


@dataclass
class Geometry:
    ap_positions: np.ndarray  # (L, 2), meters
    ue_positions: np.ndarray  # (K, 2), meters


@dataclass
class PilotAssignment:
    """Pilot index per UE, 0-based (``index[k]`` in ``range(tau_p)``)."""

    index: np.ndarray
    tau_p: int

    def __post_init__(self):
        self.index = np.asarray(self.index, dtype=int)
        if self.index.ndim != 1:
            raise ValueError("pilot index must be one-dimensional")
        if self.index.size and (self.index.min() < 0 or self.index.max() >= self.tau_p):
            raise ValueError("pilot index out of range")

    @property
    def K(self) -> int:
        return self.index.size

    def same_pilot(self) -> np.ndarray:
        """Boolean K x K matrix, True where two UEs share a pilot."""
        return self.index[:, None] == self.index[None, :]

    def cochannel(self, k: int) -> np.ndarray:
        """Indices of the UEs that use the same pilot as ``k``, ``k`` included."""
        return np.flatnonzero(self.index == self.index[k])

    def sets(self) -> list[np.ndarray]:
        return [self.cochannel(k) for k in range(self.K)]


@dataclass
class Scenario:
    config: SystemConfig
    geometry: Geometry
    beta: np.ndarray  # (L, K), noise-normalized, 1/W
    pilots: PilotAssignment
    shadow_db: np.ndarray = field(repr=False, default=None)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def generate_geometry(config: SystemConfig, seed) -> Geometry:
    rng = _rng(seed)
    aps = rng.uniform(0.0, config.area_side, size=(config.L, 2))
    ues = rng.uniform(0.0, config.area_side, size=(config.K, 2))
    return Geometry(ap_positions=aps, ue_positions=ues)


def wrapped_distance(a, b, area_side: float, height_delta: float = 0.0):
    """Shortest 3-D distance from ``a`` to any of the nine torus copies of ``b``.

    ``a`` and ``b`` broadcast against each other; the trailing axis holds the
    planar (x, y) coordinates.
    """
    diff = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    diff = np.minimum(diff, area_side - diff)
    planar_sq = np.sum(diff ** 2, axis=-1)
    return np.sqrt(planar_sq + height_delta ** 2)


def distance_matrix(geometry: Geometry, config: SystemConfig) -> np.ndarray:
    """(L, K) matrix of wrapped AP-UE distances in meters."""
    return wrapped_distance(geometry.ap_positions[:, None, :],
                            geometry.ue_positions[None, :, :],
                            config.area_side, config.height_delta)


def noise_power(config: SystemConfig) -> float:
    """Receiver noise power in watts."""
    return BOLTZMANN * NOISE_TEMPERATURE * config.bandwidth * 10 ** (config.noise_figure / 10)


def hata_constant(config: SystemConfig) -> float:
    """COST-231 Hata fixed loss in dB (frequency in MHz, heights in m)."""
    f = config.carrier_freq / 1e6
    hb, hm = config.ap_height, config.ue_height
    return (46.3 + 33.9 * math.log10(f) - 13.82 * math.log10(hb)
            - (1.1 * math.log10(f) - 0.7) * hm + (1.56 * math.log10(f) - 0.8))


def path_loss_db(distance, config: SystemConfig):
    """Three-slope path gain in dB (a negative number); distance in meters.

    Flat below d0, slope 20 dB/decade between d0 and d1, 35 dB/decade beyond.
    """
    d_km = np.asarray(distance, dtype=float) / 1000.0
    d0, d1 = config.d0 / 1000.0, config.d1 / 1000.0
    loss = hata_constant(config)
    far = -loss - 35.0 * np.log10(np.maximum(d_km, d1))
    mid = -loss - 15.0 * np.log10(d1) - 20.0 * np.log10(np.clip(d_km, d0, d1))
    return np.where(d_km > d1, far, mid)


def large_scale_coefficient(distance, shadow_db, config: SystemConfig):
    """Noise-normalized large-scale gain beta (1/W).

    ``shadow_db`` only acts on links beyond the far breakpoint d1.
    """
    distance = np.asarray(distance, dtype=float)
    if np.any(distance <= 0):
        raise ValueError("distance must be positive")
    shadow = np.where(distance > config.d1, shadow_db, 0.0)
    gain_db = path_loss_db(distance, config) + shadow
    return 10 ** (gain_db / 10) / noise_power(config)


def assign_pilots(K: int, tau_p: int, seed=None, mode: str = "random") -> PilotAssignment:
    """Random (i.i.d. uniform) or round-robin pilot assignment."""
    if tau_p < 1:
        raise ValueError("tau_p must be >= 1")
    if mode == "random":
        index = _rng(seed).integers(0, tau_p, size=K)
    elif mode == "distinct":
        index = np.arange(K) % tau_p
    else:
        raise ValueError(f"unknown pilot assignment mode {mode!r}")
    return PilotAssignment(index=index, tau_p=tau_p)


def generate_drop(config: SystemConfig, seed) -> Scenario:
    """One network realization: geometry, shadowing, beta and pilots.

    ``seed`` feeds a SeedSequence that is split into independent streams for
    positions, shadowing and pilots, so changing one never perturbs the others.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    geo_ss, shadow_ss, pilot_ss = ss.spawn(3)
    geometry = generate_geometry(config, geo_ss)
    dist = distance_matrix(geometry, config)
    shadow_db = np.random.default_rng(shadow_ss).normal(0.0, config.shadow_sigma, size=dist.shape)
    beta = large_scale_coefficient(dist, shadow_db, config)
    pilots = assign_pilots(config.K, config.tau_p, pilot_ss, mode=config.pilot_mode)
    return Scenario(config=config, geometry=geometry, beta=beta, pilots=pilots, shadow_db=shadow_db)


def load_config(path: str | Path | None, **overrides) -> SystemConfig:
    base = SystemConfig.from_file(path) if path else SystemConfig()
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return base.replace(**overrides) if overrides else base

"""Synthetic hotspot layouts for experiments without census data."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError
from .graph import Hotspot

# Roughly downtown Columbus, OH.
DOWNTOWN_BBOX = (39.940, 40.000, -83.030, -82.960)


@dataclass(frozen=True)
class SyntheticCityConfig:
    n_hotspots: int = 26
    bbox: tuple[float, float, float, float] = DOWNTOWN_BBOX
    placement: str = "uniform"  # "uniform" | "grid"
    cell_jitter_fraction: float = 0.5
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.n_hotspots < 2:
            raise InvalidConfigError("n_hotspots must be >= 2")
        lat_min, lat_max, lon_min, lon_max = self.bbox
        if not (-90 <= lat_min < lat_max <= 90 and -180 <= lon_min < lon_max <= 180):
            raise InvalidConfigError(f"degenerate or invalid bbox {self.bbox}")
        if self.placement not in ("uniform", "grid"):
            raise InvalidConfigError(f"unknown placement {self.placement!r}")
        if not 0.0 <= self.cell_jitter_fraction <= 1.0:
            raise InvalidConfigError("cell_jitter_fraction must lie in [0, 1]")


def generate_synthetic_city(cfg: SyntheticCityConfig) -> list[Hotspot]:
    rng = np.random.default_rng(cfg.rng_seed)
    lat_min, lat_max, lon_min, lon_max = cfg.bbox
    n = cfg.n_hotspots
    if cfg.placement == "uniform":
        coords: list[tuple[float, float]] = []
        seen = set()
        while len(coords) < n:
            lat = float(rng.uniform(lat_min, lat_max))
            lon = float(rng.uniform(lon_min, lon_max))
            if (lat, lon) not in seen:
                seen.add((lat, lon))
                coords.append((lat, lon))
    else:
        cols = math.ceil(math.sqrt(n))
        rows = math.ceil(n / cols)
        dlat = (lat_max - lat_min) / rows
        dlon = (lon_max - lon_min) / cols
        jitter = cfg.cell_jitter_fraction / 2
        coords = []
        for i in range(n):
            r, c = divmod(i, cols)
            lat = lat_min + (r + 0.5 + rng.uniform(-jitter, jitter)) * dlat
            lon = lon_min + (c + 0.5 + rng.uniform(-jitter, jitter)) * dlon
            coords.append((float(lat), float(lon)))
    return [Hotspot(i, lat, lon, f"tract-{i:03d}") for i, (lat, lon) in enumerate(coords)]

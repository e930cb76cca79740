"""Clustered-delay-line profile tables and their loader.

Profiles ship as JSON data files with per-cluster rows of
(normalized delay, power dB, departure azimuth deg, arrival azimuth deg)
plus the per-cluster azimuth spreads and the fixed within-cluster ray
offset angles (normalized to unit RMS spread).  Table fidelity is a
convenience, not a contract: any file with the same schema works.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import ConfigError

PROFILE_NAMES = ("CDL-A", "CDL-B", "CDL-C", "CDL-D", "CDL-E")


@dataclass(frozen=True)
class CdlProfile:
    """One delay-line profile: clusters plus the ray layout inside each."""

    name: str
    # each row: (normalized_delay, power_db, aod_deg, aoa_deg)
    clusters: tuple[tuple[float, float, float, float], ...]
    c_asd_deg: float = 5.0
    c_asa_deg: float = 11.0
    ray_offsets: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not self.clusters:
            raise ConfigError(f"profile {self.name!r}: cluster list is empty")
        delays = np.array([row[0] for row in self.clusters])
        if np.any(delays < 0):
            raise ConfigError(f"profile {self.name!r}: negative normalized delay")
        if not np.any(delays == 0):
            raise ConfigError(f"profile {self.name!r}: no cluster at delay 0")
        if not self.ray_offsets:
            raise ConfigError(f"profile {self.name!r}: ray_offsets must be non-empty")

    @property
    def num_clusters(self) -> int:
        return len(self.clusters)

    @property
    def rays_per_cluster(self) -> int:
        return len(self.ray_offsets)

    def normalized_delays(self) -> np.ndarray:
        return np.array([row[0] for row in self.clusters], dtype=np.float64)

    def powers_linear(self) -> np.ndarray:
        """Cluster powers converted from dB and normalized to sum to 1."""
        p = 10.0 ** (np.array([row[1] for row in self.clusters]) / 10.0)
        return p / p.sum()

    def ray_aod_deg(self) -> np.ndarray:
        """[L, R] per-ray departure azimuths: cluster angle + spread * offset."""
        base = np.array([row[2] for row in self.clusters], dtype=np.float64)
        off = np.asarray(self.ray_offsets, dtype=np.float64)
        return base[:, None] + self.c_asd_deg * off[None, :]

    def ray_aoa_deg(self) -> np.ndarray:
        """[L, R] per-ray arrival azimuths: cluster angle + spread * offset."""
        base = np.array([row[3] for row in self.clusters], dtype=np.float64)
        off = np.asarray(self.ray_offsets, dtype=np.float64)
        return base[:, None] + self.c_asa_deg * off[None, :]

    @classmethod
    def from_dict(cls, data: dict) -> "CdlProfile":
        try:
            clusters = tuple(tuple(float(v) for v in row) for row in data["clusters"])
            return cls(
                name=str(data["name"]),
                clusters=clusters,
                c_asd_deg=float(data.get("c_asd_deg", 5.0)),
                c_asa_deg=float(data.get("c_asa_deg", 11.0)),
                ray_offsets=tuple(float(v) for v in data["ray_offsets"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed profile data: {exc}") from exc


def load_profile(name: str) -> CdlProfile:
    """Load a bundled profile by name ("CDL-A" .. "CDL-E") or from a JSON path."""
    if name in PROFILE_NAMES:
        fname = name.lower().replace("-", "_") + ".json"
        data = json.loads(
            resources.files("csidiff.profiles").joinpath(fname).read_text("utf-8")
        )
        return CdlProfile.from_dict(data)
    path = Path(name)
    if path.suffix == ".json" and path.exists():
        return CdlProfile.from_dict(json.loads(path.read_text("utf-8")))
    raise ConfigError(
        f"unknown profile {name!r}; expected one of {', '.join(PROFILE_NAMES)} "
        "or a path to a profile JSON file"
    )


def load_profiles(names: list[str] | tuple[str, ...]) -> list[CdlProfile]:
    if not names:
        raise ConfigError("profile list is empty")
    return [load_profile(n) for n in names]

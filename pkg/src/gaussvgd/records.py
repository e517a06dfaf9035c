"""
Trajectory records and run manifests.

A TrajectoryRecord holds one row per recorded time (or iteration) with the
standard diagnostics columns plus free-form extras, and serializes to CSV and
JSON. Run manifests echo the configuration together with provenance.
"""

import csv
import json
import logging
import platform
import subprocess
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

import numpy as np

from .core import GaussianParams
from .config import VERSION

logger = logging.getLogger(__name__)

STANDARD_COLUMNS = ("t", "kl", "free_energy", "mu_err", "sigma_err")


@dataclass
class TrajectoryRow:
    """Diagnostics at one recorded time."""
    t: float
    kl: Optional[float] = None
    free_energy: Optional[float] = None
    mu_err: Optional[float] = None
    sigma_err: Optional[float] = None
    extras: Dict[str, float] = field(default_factory=dict)
    theta: Optional[GaussianParams] = None

    def get(self, name: str) -> Optional[float]:
        if name in STANDARD_COLUMNS:
            return getattr(self, name)
        return self.extras.get(name)

    def to_dict(self, include_theta: bool = False) -> Dict[str, Any]:
        row: Dict[str, Any] = {name: getattr(self, name) for name in STANDARD_COLUMNS}
        row.update(self.extras)
        if include_theta and self.theta is not None:
            row["mean"] = self.theta.mean.tolist()
            row["cov"] = self.theta.sigma.tolist()
        return row


@dataclass
class TrajectoryRecord:
    """Recorded trajectory of a flow, particle system or algorithm run."""
    label: str
    rows: List[TrajectoryRow] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def append(self, row: TrajectoryRow) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[TrajectoryRow]:
        return iter(self.rows)

    def times(self) -> np.ndarray:
        return np.array([row.t for row in self.rows], dtype=float)

    def column(self, name: str) -> np.ndarray:
        """Values of a standard or extra column; missing entries are NaN."""
        values = [row.get(name) for row in self.rows]
        return np.array([np.nan if v is None else v for v in values], dtype=float)

    def thetas(self) -> List[Optional[GaussianParams]]:
        return [row.theta for row in self.rows]

    @property
    def final(self) -> TrajectoryRow:
        if not self.rows:
            raise IndexError(f"Trajectory '{self.label}' is empty")
        return self.rows[-1]

    @property
    def final_theta(self) -> Optional[GaussianParams]:
        return self.final.theta

    def extra_columns(self) -> List[str]:
        names: List[str] = []
        for row in self.rows:
            for key in row.extras:
                if key not in names:
                    names.append(key)
        return names

    def to_dict(self, include_theta: bool = False) -> Dict[str, Any]:
        return {
            "label": self.label,
            "metadata": self.metadata,
            "rows": [row.to_dict(include_theta) for row in self.rows],
        }

    def to_json(self, path: str, include_theta: bool = False) -> Path:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(include_theta), f, indent=2, default=_json_default)
        logger.info(f"Wrote trajectory '{self.label}' ({len(self)} rows) to {out}")
        return out

    def to_csv(self, path: str, include_theta: bool = False) -> Path:
        """
        Write one CSV row per record.

        With include_theta, the mean and covariance are flattened into columns
        mu_<i> and sigma_<i>_<j>.
        """
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        extras = self.extra_columns()
        header = list(STANDARD_COLUMNS) + extras
        dim = 0
        if include_theta and self.rows and self.rows[0].theta is not None:
            dim = self.rows[0].theta.dim
            header += [f"mu_{i}" for i in range(dim)]
            header += [f"sigma_{i}_{j}" for i in range(dim) for j in range(dim)]
        with open(out, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for row in self.rows:
                values = [_cell(row.get(name)) for name in STANDARD_COLUMNS]
                values += [_cell(row.extras.get(name)) for name in extras]
                if dim:
                    theta = row.theta
                    values += list(theta.mean) if theta is not None else [""] * dim
                    values += list(theta.sigma.reshape(-1)) if theta is not None else [""] * dim * dim
                writer.writerow(values)
        logger.info(f"Wrote trajectory '{self.label}' ({len(self)} rows) to {out}")
        return out


def _cell(value: Optional[float]) -> Any:
    return "" if value is None else repr(float(value))


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return str(obj)


def git_revision() -> str:
    """Current git commit hash, or "unknown" outside a repository."""
    try:
        result = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            capture_output=True,
            text=True,
            timeout=5,
            check=True,
        )
        return result.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def build_manifest(config: Dict[str, Any], seed: Optional[int]) -> Dict[str, Any]:
    """Manifest dict: config echo, git hash, seed, version, platform and UTC time."""
    return {
        "config": config,
        "git_revision": git_revision(),
        "seed": seed,
        "version": VERSION,
        "python": platform.python_version(),
        "platform": platform.platform(),
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }


def write_manifest(path: str, config: Dict[str, Any], seed: Optional[int],
                   outputs: Optional[List[str]] = None) -> Path:
    manifest = build_manifest(config, seed)
    if outputs:
        manifest["outputs"] = outputs
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, default=_json_default)
    return out

"""Trajectory CSVs and the run manifest."""

from __future__ import annotations

import csv
import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..diagnostics import TrajectoryRecord

__all__ = ["write_record", "read_record", "trajectory_path", "discover_trajectories", "RunManifest"]

_NAME = re.compile(r"^(e1|e2)_lambda_([0-9.eE+-]+)\.csv$")


def _fmt(x: float) -> str:
    return "%.17g" % x


def trajectory_path(directory, experiment: str, lam: float) -> Path:
    return Path(directory) / f"{experiment}_lambda_{lam:g}.csv"


def write_record(record: TrajectoryRecord, path) -> Path:
    """Write ``t,norm,energy,<others>`` with 17 significant digits."""
    names = record.names
    for required in ("norm", "energy"):
        if required not in names:
            raise ValueError(f"record lacks the {required!r} series")
    order = ["norm", "energy"] + [n for n in names if n not in ("norm", "energy")]
    columns = [record.times] + [np.real(record[n]) for n in order]
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(",".join(["t"] + order) + "\n")
        for row in zip(*columns):
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def read_record(path) -> TrajectoryRecord:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in row] for row in reader], dtype=float).reshape(-1, len(header))
    if header[0] != "t":
        raise ValueError(f"{path}: first column must be t")
    series = {name: rows[:, j] for j, name in enumerate(header[1:], 1)}
    return TrajectoryRecord(rows[:, 0], series, {"source": str(path)})


def discover_trajectories(directory) -> tuple[str, dict[float, Path]]:
    """Find ``<experiment>_lambda_<value>.csv`` files; all must share one experiment."""
    found: dict[str, dict[float, Path]] = {}
    for path in sorted(Path(directory).glob("*.csv")):
        match = _NAME.match(path.name)
        if match:
            found.setdefault(match.group(1), {})[float(match.group(2))] = path
    if not found:
        raise FileNotFoundError(f"no trajectory CSVs in {directory}")
    if len(found) > 1:
        raise ValueError(f"{directory} mixes experiments {sorted(found)}")
    experiment, files = next(iter(found.items()))
    return experiment, dict(sorted(files.items()))


@dataclass
class RunManifest:
    experiment: str
    config: dict
    files: dict[str, str] = field(default_factory=dict)
    sup_values: dict[str, dict[str, float]] = field(default_factory=dict)
    per_lambda: dict[str, dict[str, float]] = field(default_factory=dict)
    rates: dict[str, dict] = field(default_factory=dict)
    oracle_reports: list[dict] = field(default_factory=list)
    verdicts: dict[str, dict] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    started: str = ""
    finished: str = ""
    runtime_seconds: float = 0.0
    tool_version: str = ""

    @property
    def passed(self) -> bool:
        return all(v["passed"] for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))

    def missing_files(self) -> list[str]:
        return [p for p in self.files.values() if not Path(p).is_file()]


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")

"""Observation datasets and their CSV representation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class Dataset:
    """Observation times and measurements for the observed components.

    ``y`` has one column per entry of ``obs_components`` (zero-based state
    indices, in column order).  ``provenance`` records how the data came to
    be: ``{"kind": "simulated", "seed": ..., "truth": {...}}`` or
    ``{"kind": "external", "path": ...}``.
    """

    times: np.ndarray
    y: np.ndarray
    obs_components: tuple
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        if times.ndim != 1:
            raise ValueError("times must be 1-d")
        if y.shape != (times.size, len(self.obs_components)):
            raise ValueError("y must be (n_times, n_obs_components)")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(y)):
            raise ValueError("observations contain missing/non-finite entries")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.times.size

    @property
    def n_obs_components(self) -> int:
        return len(self.obs_components)


def save_dataset(path, dataset: Dataset) -> None:
    """Write a dataset as CSV with header ``t,y_<component+1>,...``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"y_{j + 1}" for j in dataset.obs_components])
        for i in range(dataset.n):
            writer.writerow(
                [f"{dataset.times[i]:.17g}"]
                + [f"{v:.17g}" for v in dataset.y[i]]
            )


def load_dataset(path, provenance: Optional[dict] = None) -> Dataset:
    """Read a dataset written by `save_dataset`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "t":
            raise ValueError(f"{path}: expected header starting with 't'")
        obs = []
        for col in header[1:]:
            if not col.startswith("y_"):
                raise ValueError(f"{path}: unexpected column {col!r}")
            obs.append(int(col[2:]) - 1)
        rows = [[float(v) for v in row] for row in reader if row]
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != len(obs) + 1:
        raise ValueError(f"{path}: malformed data rows")
    return Dataset(
        times=arr[:, 0],
        y=arr[:, 1:],
        obs_components=tuple(obs),
        provenance=provenance or {"kind": "external", "path": str(path)},
    )

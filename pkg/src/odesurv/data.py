"""Right-censored datasets: simulation, CSV ingestion, standardization, splits.

The CSV schema is a header row with feature columns followed by ``time`` and
``event`` (1 = event observed, 0 = right-censored). Any column other than
``time``/``event`` is treated as a numeric feature, in header order;
categorical variables must be dummy-encoded upstream.

All randomness goes through numpy's default 64-bit generator (PCG64), so a
seed pins every draw bit-for-bit across platforms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataLoadError

__all__ = [
    "Observation",
    "Standardization",
    "Dataset",
    "simulate_crossing",
    "load_csv",
    "save_csv",
    "standardize",
    "split",
]


@dataclass(frozen=True)
class Observation:
    """One right-censored record: features, observed time, event flag."""

    x: np.ndarray
    y: float
    delta: int


@dataclass(frozen=True)
class Standardization:
    """Per-feature location and (positive) scale from a training set."""

    mean: np.ndarray
    scale: np.ndarray


class Dataset:
    """Column-oriented collection of observations."""

    __slots__ = ("features", "times", "events", "feature_names", "stats")

    def __init__(self, features, times, events, feature_names=None, stats=None):
        features = np.atleast_2d(np.asarray(features, dtype=float))
        times = np.asarray(times, dtype=float)
        events = np.asarray(events)
        n = features.shape[0]
        if times.shape != (n,) or events.shape != (n,):
            raise ValueError(
                f"inconsistent lengths: features {features.shape}, times {times.shape}, "
                f"events {events.shape}"
            )
        if not np.all(np.isfinite(features)):
            raise ValueError("features must be finite")
        if not np.all(np.isfinite(times)) or np.any(times < 0.0):
            raise ValueError("times must be finite and nonnegative")
        if not np.all(np.isin(events, (0, 1))):
            raise ValueError("event flags must be 0 or 1")
        if feature_names is None:
            feature_names = [f"x{i}" for i in range(features.shape[1])]
        if len(feature_names) != features.shape[1]:
            raise ValueError("feature_names length does not match feature count")
        self.features = features
        self.times = times
        self.events = np.asarray(events, dtype=int)
        self.feature_names = list(feature_names)
        self.stats = stats

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.n

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(self.features[idx], self.times[idx], self.events[idx],
                       self.feature_names, self.stats)

    def observation(self, i: int) -> Observation:
        return Observation(x=self.features[i], y=float(self.times[i]), delta=int(self.events[i]))


def simulate_crossing(n: int, seed: int) -> Dataset:
    """Two-group study whose true survival curves cross at t = 1.

    Group membership is Bernoulli(0.5). Event times are drawn by inverting
    the group survival functions exp(-2t) (group 0) and exp(-2t^2) (group 1);
    censoring times are uniform on (0, 2); the event wins ties. Draw order is
    fixed (group flags, then event-time uniforms, then censoring times), so a
    seed determines the dataset exactly.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    group = (rng.random(n) < 0.5).astype(float)
    u = 1.0 - rng.random(n)  # in (0, 1]; keeps the log finite
    censor = rng.uniform(0.0, 2.0, size=n)
    base = -np.log(u) / 2.0
    event_time = np.where(group == 0.0, base, np.sqrt(base))
    observed = np.minimum(event_time, censor)
    delta = (event_time <= censor).astype(int)
    return Dataset(group[:, None], observed, delta, feature_names=["x0"])


def load_csv(path) -> Dataset:
    """Parse a dataset CSV; errors carry the offending file line number."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataLoadError(f"{path}: file is empty") from None
        header = [name.strip() for name in header]
        if "time" not in header or "event" not in header:
            raise DataLoadError(f"{path}: header must contain 'time' and 'event' columns")
        time_col = header.index("time")
        event_col = header.index("event")
        feature_cols = [i for i in range(len(header)) if i not in (time_col, event_col)]
        feature_names = [header[i] for i in feature_cols]

        features, times, events = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataLoadError(f"{path}:{line_no}: expected {len(header)} cells, got {len(row)}")
            try:
                t = float(row[time_col])
                e = float(row[event_col])
                feats = [float(row[i]) for i in feature_cols]
            except ValueError as exc:
                raise DataLoadError(f"{path}:{line_no}: unparsable cell ({exc})") from None
            if not np.isfinite(t) or t < 0.0:
                raise DataLoadError(f"{path}:{line_no}: time must be finite and >= 0, got {t}")
            if e not in (0.0, 1.0):
                raise DataLoadError(f"{path}:{line_no}: event must be 0 or 1, got {row[event_col]!r}")
            if not all(np.isfinite(feats)):
                raise DataLoadError(f"{path}:{line_no}: features must be finite")
            features.append(feats)
            times.append(t)
            events.append(int(e))
    if not times:
        raise DataLoadError(f"{path}: no data rows")
    return Dataset(np.array(features), np.array(times), np.array(events), feature_names)


def save_csv(dataset: Dataset, path) -> None:
    """Write the dataset in the canonical schema (features, time, event)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([*dataset.feature_names, "time", "event"])
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.features[i]]
            row.append(repr(float(dataset.times[i])))
            row.append(str(int(dataset.events[i])))
            writer.writerow(row)


def standardize(train: Dataset, *others: Dataset):
    """Z-score features using the training set's statistics only.

    Constant features get scale 1 (and become identically zero). Returns the
    transformed datasets in argument order plus the statistics used.
    """
    if train.n == 0:
        raise ValueError("training set must be nonempty")
    mean = train.features.mean(axis=0)
    sd = train.features.std(axis=0)
    scale = np.where(sd > 0.0, sd, 1.0)
    stats = Standardization(mean=mean, scale=scale)

    def transform(ds: Dataset) -> Dataset:
        return Dataset((ds.features - mean) / scale, ds.times, ds.events,
                       ds.feature_names, stats)

    transformed = tuple(transform(ds) for ds in (train, *others))
    return transformed, stats


def split(dataset: Dataset, ratios=(3, 1, 1), seed: int = 0):
    """Seeded permutation followed by contiguous slicing in the given ratios."""
    ratios = [float(r) for r in ratios]
    if any(r <= 0 for r in ratios):
        raise ConfigError(f"split ratios must be positive, got {ratios}")
    n = dataset.n
    total = sum(ratios)
    perm = np.random.default_rng(seed).permutation(n)
    bounds = [int(round(n * sum(ratios[: i + 1]) / total)) for i in range(len(ratios) - 1)]
    pieces = np.split(perm, bounds)
    if any(len(piece) == 0 for piece in pieces):
        raise ConfigError(f"split of {n} rows by ratios {ratios} leaves an empty part")
    return tuple(dataset.subset(piece) for piece in pieces)

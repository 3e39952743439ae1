"""Entity x time x feature data cube: CSV ingestion, validation, percentile scaling.

The cube is an ordered list of time slices; each slice holds the observations
(feature vector plus optional non-negative weight) of the entities present at
that time. Panels may be unbalanced: an entity can enter or leave the sample.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Invalid input data (user error, not an internal bug)."""


class SchemaError(DataError):
    """Header or row structure does not match the expected column layout."""


class ParseError(DataError):
    """A cell failed to parse; message names the line and column."""


class EmptyInputError(DataError):
    """The input file contains no data rows."""


TimeKey = int | str


@dataclass(frozen=True)
class Observation:
    """One entity's feature vector at one time, with an importance weight."""

    entity_id: str
    features: tuple[float, ...]
    weight: float = 1.0

    def __post_init__(self) -> None:
        feats = tuple(float(v) for v in self.features)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "weight", float(self.weight))
        if not feats:
            raise DataError(f"observation {self.entity_id!r} has no features")
        for k, v in enumerate(feats):
            if not math.isfinite(v):
                raise DataError(
                    f"observation {self.entity_id!r}: feature {k} is not finite ({v!r})"
                )
        if not math.isfinite(self.weight) or self.weight < 0.0:
            raise DataError(
                f"observation {self.entity_id!r}: weight must be finite and >= 0, "
                f"got {self.weight!r}"
            )

    @property
    def dim(self) -> int:
        return len(self.features)


@dataclass
class TimeSlice:
    """All observations sharing one time key."""

    time_key: TimeKey
    observations: list[Observation]
    _matrix: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.observations:
            raise DataError(f"time slice {self.time_key!r} has no observations")
        d = self.observations[0].dim
        for obs in self.observations:
            if obs.dim != d:
                raise DataError(
                    f"time slice {self.time_key!r}: inconsistent feature dimension "
                    f"({obs.dim} != {d})"
                )
        if all(obs.weight == 0.0 for obs in self.observations):
            raise DataError(f"time slice {self.time_key!r}: all weights are zero")

    @property
    def n(self) -> int:
        return len(self.observations)

    @property
    def dim(self) -> int:
        return self.observations[0].dim

    @property
    def matrix(self) -> np.ndarray:
        """Observations stacked as an (n, dim) float array. Cached."""
        if self._matrix is None:
            self._matrix = np.array([o.features for o in self.observations], dtype=float)
            self._matrix.setflags(write=False)
        return self._matrix

    @property
    def weights(self) -> np.ndarray:
        """Per-observation weights as a length-n float array."""
        return np.array([o.weight for o in self.observations], dtype=float)


@dataclass
class DataCube:
    """Time-ordered slices over a shared feature space."""

    slices: list[TimeSlice]
    feature_names: list[str]

    def __post_init__(self) -> None:
        if not self.slices:
            raise EmptyInputError("data cube has no time slices")
        d = self.slices[0].dim
        if len(self.feature_names) != d:
            raise DataError(
                f"{len(self.feature_names)} feature names for dimension {d}"
            )
        key_types = {type(s.time_key) for s in self.slices}
        if len(key_types) > 1:
            raise SchemaError(f"mixed time key types: {sorted(t.__name__ for t in key_types)}")
        for prev, cur in zip(self.slices, self.slices[1:]):
            if cur.dim != d:
                raise DataError(
                    f"slice {cur.time_key!r}: dimension {cur.dim} != {d}"
                )
            if not prev.time_key < cur.time_key:
                raise DataError(
                    f"time keys not strictly increasing: {prev.time_key!r} then {cur.time_key!r}"
                )

    @property
    def n_slices(self) -> int:
        return len(self.slices)

    @property
    def dim(self) -> int:
        return self.slices[0].dim

    @property
    def time_keys(self) -> list[TimeKey]:
        return [s.time_key for s in self.slices]

    def slice_at(self, index: int) -> TimeSlice:
        """Return the slice at a 0-based position; negative indices are rejected."""
        if not 0 <= index < len(self.slices):
            raise IndexError(
                f"slice index {index} out of range [0, {len(self.slices) - 1}]"
            )
        return self.slices[index]

    def equals(self, other: "DataCube") -> bool:
        """Structural equality: keys, names, entities, features and weights."""
        if self.feature_names != other.feature_names:
            return False
        if self.time_keys != other.time_keys:
            return False
        for a, b in zip(self.slices, other.slices):
            if a.observations != b.observations:
                return False
        return True


# ---------------------------------------------------------------------------
# CSV ingestion / serialization
# ---------------------------------------------------------------------------
#
# Expected layout: header row with an entity column, a time column, an
# optional weight column, then one column per feature, in order. UTF-8,
# comma separated, decimal point, no thousands separators.

def _parse_cell(raw: str, line_no: int, column: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ParseError(
            f"line {line_no}, column {column!r}: not a number: {raw!r}"
        ) from None
    if not math.isfinite(value):
        raise ParseError(f"line {line_no}, column {column!r}: non-finite value {raw!r}")
    return value


def _coerce_time_keys(raw_keys: list[str]) -> dict[str, TimeKey]:
    """Map raw time strings to int keys when every key is an integer.

    All-or-nothing: a mix of integer and non-integer keys is rejected so the
    ordering is never a surprise.
    """
    coerced: dict[str, TimeKey] = {}
    as_int: dict[str, int] = {}
    for raw in raw_keys:
        try:
            as_int[raw] = int(raw)
        except ValueError:
            as_int = {}
            break
    if as_int:
        return dict(as_int)
    for raw in raw_keys:
        try:
            int(raw)
        except ValueError:
            coerced[raw] = raw
        else:
            raise SchemaError(
                f"mixed time keys: {raw!r} is numeric but other keys are not"
            )
    return coerced


def load_csv(
    path: str | Path,
    *,
    entity_col: str = "entity",
    time_col: str = "time",
    weight_col: str = "weight",
) -> DataCube:
    """Load a data cube from CSV, grouping rows by time key (ascending).

    The header must start with the entity and time columns; a weight column is
    optional and defaults every weight to 1.0 when absent. All remaining
    columns are features, in header order. Line numbers in error messages are
    1-based physical lines (the header is line 1).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if len(header) < 3 or header[0] != entity_col or header[1] != time_col:
            raise SchemaError(
                f"{path}: header must start with {entity_col!r}, {time_col!r} "
                f"and at least one feature column, got {header!r}"
            )
        has_weight = len(header) > 2 and header[2] == weight_col
        feature_names = header[3:] if has_weight else header[2:]
        if not feature_names:
            raise SchemaError(f"{path}: no feature columns in header {header!r}")

        rows: list[tuple[str, str, float, tuple[float, ...]]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(
                    f"{path}: line {line_no}: expected {len(header)} columns, got {len(row)}"
                )
            entity = row[0].strip()
            time_raw = row[1].strip()
            offset = 3 if has_weight else 2
            weight = 1.0
            if has_weight:
                weight = _parse_cell(row[2], line_no, weight_col)
                if weight < 0.0:
                    raise ParseError(
                        f"{path}: line {line_no}, column {weight_col!r}: "
                        f"negative weight {row[2]!r}"
                    )
            feats = tuple(
                _parse_cell(raw, line_no, name)
                for raw, name in zip(row[offset:], feature_names)
            )
            rows.append((entity, time_raw, weight, feats))

    if not rows:
        raise EmptyInputError(f"{path}: no data rows")

    key_map = _coerce_time_keys([r[1] for r in rows])
    grouped: dict[TimeKey, list[Observation]] = {}
    for entity, time_raw, weight, feats in rows:
        key = key_map[time_raw]
        grouped.setdefault(key, []).append(
            Observation(entity_id=entity, features=feats, weight=weight)
        )
    slices = [TimeSlice(time_key=k, observations=grouped[k]) for k in sorted(grouped)]
    return DataCube(slices=slices, feature_names=feature_names)


def _fmt(value: float) -> str:
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(value))


def save_csv(cube: DataCube, path: str | Path) -> None:
    """Write a cube back to the CSV layout accepted by load_csv."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["entity", "time", "weight", *cube.feature_names])
        for sl in cube.slices:
            for obs in sl.observations:
                writer.writerow(
                    [obs.entity_id, str(sl.time_key), _fmt(obs.weight)]
                    + [_fmt(v) for v in obs.features]
                )


# ---------------------------------------------------------------------------
# Percentile scaling
# ---------------------------------------------------------------------------

NORMALIZE_MODES = ("expanding", "full")


def percentile_normalize(cube: DataCube, mode: str = "full") -> DataCube:
    """Replace each feature value by its percentile rank in the entity's own history.

    Rank of v among n historical values is count(values <= v) / n, so output
    values lie in (0, 1] and ties share a rank. In ``expanding`` mode the
    history at time t is the entity's values up to and including t; in
    ``full`` mode it is the entity's whole sample. Weights pass through
    unchanged.
    """
    if mode not in NORMALIZE_MODES:
        raise ValueError(f"mode must be one of {NORMALIZE_MODES}, got {mode!r}")

    d = cube.dim
    # entity -> feature -> list of (slice position, value)
    history: dict[str, list[list[tuple[int, float]]]] = {}
    for t, sl in enumerate(cube.slices):
        for obs in sl.observations:
            per_feature = history.setdefault(obs.entity_id, [[] for _ in range(d)])
            for k in range(d):
                per_feature[k].append((t, obs.features[k]))

    def rank(entity: str, k: int, t: int, value: float) -> float:
        pool = history[entity][k]
        if mode == "expanding":
            pool = [(tt, v) for tt, v in pool if tt <= t]
        n = len(pool)
        c = sum(1 for _, v in pool if v <= value)
        return c / n

    new_slices = []
    for t, sl in enumerate(cube.slices):
        new_obs = [
            Observation(
                entity_id=obs.entity_id,
                features=tuple(
                    rank(obs.entity_id, k, t, obs.features[k]) for k in range(d)
                ),
                weight=obs.weight,
            )
            for obs in sl.observations
        ]
        new_slices.append(TimeSlice(time_key=sl.time_key, observations=new_obs))
    return DataCube(slices=new_slices, feature_names=list(cube.feature_names))

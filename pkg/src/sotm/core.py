"""Time-chained one-dimensional batch SOM training.

One reference array per time slice: the first array is seeded from the first
principal component of the earliest slice, every later array starts as a copy
of its trained predecessor, and each slice is fit with a fixed number of
two-phase batch steps (match all observations to their best unit, then move
every unit to the weighted neighborhood mean).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .datacube import DataCube, TimeKey, TimeSlice

MODEL_FORMAT_VERSION = 1

DECAY_MODES = ("linear", "constant")


class ModelFormatError(ValueError):
    """A serialized model violates the expected schema."""


@dataclass
class ReferenceArray:
    """M reference vectors on a line; grid coordinate of unit i is i."""

    units: np.ndarray  # shape (M, d)

    def __post_init__(self) -> None:
        units = np.array(self.units, dtype=float)
        if units.ndim != 2 or units.shape[0] < 2:
            raise ValueError(f"units must be (M>=2, d), got shape {units.shape}")
        if not np.all(np.isfinite(units)):
            raise ValueError("units contain non-finite values")
        units.setflags(write=False)
        self.units = units

    @property
    def n_units(self) -> int:
        return self.units.shape[0]

    @property
    def dim(self) -> int:
        return self.units.shape[1]

    @property
    def grid_coords(self) -> np.ndarray:
        return np.arange(self.n_units)


@dataclass
class TrainConfig:
    """Knobs for one training run.

    steps and sigma may be scalars (shared by all slices) or per-slice
    sequences. sigma is the start radius of each slice's within-slice
    schedule; with linear decay it shrinks to max(sigma_floor, 0.1 * start).
    """

    n_units: int
    steps: int | Sequence[int] = 10
    sigma: float | Sequence[float] | None = None
    sigma_decay: str = "linear"
    sigma_floor: float = 0.05
    pca_span: float = 2.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_units < 2:
            raise ValueError(f"n_units must be >= 2, got {self.n_units}")
        if self.sigma_decay not in DECAY_MODES:
            raise ValueError(f"sigma_decay must be one of {DECAY_MODES}")
        if self.sigma_floor <= 0.0:
            raise ValueError("sigma_floor must be positive")
        if self.pca_span <= 0.0:
            raise ValueError("pca_span must be positive")
        for s in np.atleast_1d(np.asarray(self.steps)):
            if int(s) != s or s < 0:
                raise ValueError(f"steps must be non-negative integers, got {self.steps!r}")
        if self.sigma is not None:
            for v in np.atleast_1d(np.asarray(self.sigma, dtype=float)):
                if not v > 0.0:
                    raise ValueError(f"sigma values must be positive, got {self.sigma!r}")

    def steps_for(self, n_slices: int) -> list[int]:
        arr = np.atleast_1d(np.asarray(self.steps))
        if arr.size == 1:
            return [int(arr[0])] * n_slices
        if arr.size != n_slices:
            raise ValueError(f"{arr.size} step counts for {n_slices} slices")
        return [int(s) for s in arr]

    def sigma_for(self, n_slices: int) -> list[float]:
        if self.sigma is None:
            raise ValueError("config has no fixed sigma; use the auto-tuner or set one")
        arr = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        if arr.size == 1:
            return [float(arr[0])] * n_slices
        if arr.size != n_slices:
            raise ValueError(f"{arr.size} sigma values for {n_slices} slices")
        return [float(v) for v in arr]


@dataclass
class SotmModel:
    """Trained map: one reference array per slice, in time order.

    sigma_final holds the neighborhood radius in effect at each slice's last
    batch step; quality reporting reuses it, so it is part of the serialized
    form (JSON key ``sigma_chosen``).
    """

    arrays: list[ReferenceArray]
    time_keys: list[TimeKey]
    feature_names: list[str]
    sigma_final: list[float]
    config: TrainConfig | None = None

    def __post_init__(self) -> None:
        if not self.arrays:
            raise ValueError("model has no arrays")
        m, d = self.arrays[0].n_units, self.arrays[0].dim
        for arr in self.arrays:
            if arr.n_units != m or arr.dim != d:
                raise ValueError("all arrays must share unit count and dimension")
        if not (len(self.time_keys) == len(self.arrays) == len(self.sigma_final)):
            raise ValueError("arrays, time_keys and sigma_final must have equal length")

    @property
    def n_slices(self) -> int:
        return len(self.arrays)

    @property
    def n_units(self) -> int:
        return self.arrays[0].n_units

    @property
    def dim(self) -> int:
        return self.arrays[0].dim

    # -- serialization -----------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "version": MODEL_FORMAT_VERSION,
            "M": self.n_units,
            "d": self.dim,
            "T": self.n_slices,
            "time_keys": list(self.time_keys),
            "feature_names": list(self.feature_names),
            "sigma_chosen": [float(s) for s in self.sigma_final],
            "arrays": [arr.units.tolist() for arr in self.arrays],
        }

    def dumps(self) -> str:
        """Canonical JSON text; float repr is the shortest round-trip form."""
        return json.dumps(self.to_json_dict(), separators=(",", ":")) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SotmModel":
        if not isinstance(doc, dict):
            raise ModelFormatError("model document must be a JSON object")
        for key in ("version", "M", "d", "T", "time_keys", "feature_names",
                    "sigma_chosen", "arrays"):
            if key not in doc:
                raise ModelFormatError(f"model document missing key {key!r}")
        if doc["version"] != MODEL_FORMAT_VERSION:
            raise ModelFormatError(f"unsupported model version {doc['version']!r}")
        m, d, t = doc["M"], doc["d"], doc["T"]
        arrays_raw = doc["arrays"]
        if len(arrays_raw) != t:
            raise ModelFormatError(f"arrays has {len(arrays_raw)} entries, T={t}")
        if len(doc["time_keys"]) != t or len(doc["sigma_chosen"]) != t:
            raise ModelFormatError("time_keys and sigma_chosen must have T entries")
        if len(doc["feature_names"]) != d:
            raise ModelFormatError(f"feature_names has {len(doc['feature_names'])} entries, d={d}")
        arrays = []
        for i, raw in enumerate(arrays_raw):
            units = np.asarray(raw, dtype=float)
            if units.shape != (m, d):
                raise ModelFormatError(
                    f"arrays[{i}] has shape {units.shape}, expected ({m}, {d})"
                )
            arrays.append(ReferenceArray(units=units))
        return cls(
            arrays=arrays,
            time_keys=list(doc["time_keys"]),
            feature_names=[str(s) for s in doc["feature_names"]],
            sigma_final=[float(s) for s in doc["sigma_chosen"]],
        )

    @classmethod
    def loads(cls, text: str) -> "SotmModel":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"model is not valid JSON: {exc}") from None
        return cls.from_json_dict(doc)

    @classmethod
    def load(cls, path: str | Path) -> "SotmModel":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Matching and neighborhood
# ---------------------------------------------------------------------------

def find_bmu(x: np.ndarray, array: ReferenceArray) -> tuple[int, float]:
    """Index and distance of the unit nearest to x; ties go to the lowest index."""
    x = np.asarray(x, dtype=float)
    if x.shape != (array.dim,):
        raise ValueError(f"x has shape {x.shape}, expected ({array.dim},)")
    dists = np.linalg.norm(array.units - x, axis=1)
    b = int(np.argmin(dists))
    return b, float(dists[b])


def second_bmu(x: np.ndarray, array: ReferenceArray) -> int:
    """Index of the second-nearest unit (BMU excluded); ties go to the lowest index."""
    x = np.asarray(x, dtype=float)
    if x.shape != (array.dim,):
        raise ValueError(f"x has shape {x.shape}, expected ({array.dim},)")
    dists = np.linalg.norm(array.units - x, axis=1)
    b = int(np.argmin(dists))
    dists[b] = np.inf
    return int(np.argmin(dists))


def neighborhood(i: int, b: int, sigma: float) -> float:
    """Gaussian kernel over grid distance: exp(-(i-b)^2 / (2 sigma^2))."""
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if i < 0 or b < 0:
        raise ValueError("unit indices must be non-negative")
    delta = float(i - b)
    return float(np.exp(-(delta * delta) / (2.0 * sigma * sigma)))


def neighborhood_matrix(n_units: int, sigma: float) -> np.ndarray:
    """Kernel values for every (unit, BMU) pair as an (M, M) array."""
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    idx = np.arange(n_units, dtype=float)
    delta = idx[:, None] - idx[None, :]
    return np.exp(-(delta * delta) / (2.0 * sigma * sigma))


def bmu_indices(array: ReferenceArray, data: np.ndarray) -> np.ndarray:
    """BMU index for each row of data; argmin resolves ties to the lowest index."""
    diff = data[:, None, :] - array.units[None, :, :]
    dists = np.sqrt(np.einsum("nmd,nmd->nm", diff, diff))
    return np.argmin(dists, axis=1)


# ---------------------------------------------------------------------------
# Batch updates
# ---------------------------------------------------------------------------

def batch_update(array: ReferenceArray, slice_: TimeSlice, sigma: float) -> ReferenceArray:
    """One two-phase batch step over a slice.

    BMUs are assigned against the input array and held fixed; every unit then
    moves to the weight-and-kernel average of all observations:

        m_i <- sum_j w_j h(i, b_j) x_j / sum_j w_j h(i, b_j)

    The Gaussian kernel is positive everywhere, so no unit is left without
    support as long as some weight is positive. The kernel exponent is
    max-shifted per unit before exponentiation (the shift cancels in the
    ratio), otherwise small sigma underflows a far unit's entire support
    to zero.
    """
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if slice_.dim != array.dim:
        raise ValueError(f"slice dimension {slice_.dim} != array dimension {array.dim}")
    data = slice_.matrix
    weights = slice_.weights
    bmus = bmu_indices(array, data)
    grid = np.arange(array.n_units, dtype=float)
    exponent = -((grid[:, None] - bmus[None, :]) ** 2) / (2.0 * sigma * sigma)
    shift = exponent[:, weights > 0.0].max(axis=1)
    contrib = np.exp(exponent - shift[:, None]) * weights[None, :]
    denom = contrib.sum(axis=1)
    if not np.all(denom > 0.0):
        raise ValueError("batch update has a unit with zero total support "
                         "(all weights zero?)")
    numer = np.einsum("mn,nd->md", contrib, data)
    return ReferenceArray(units=numer / denom[:, None])


def sigma_schedule(
    sigma_start: float,
    steps: int,
    decay: str = "linear",
    floor: float = 0.05,
) -> np.ndarray:
    """Per-step radius values for one slice.

    linear: evenly spaced from sigma_start down to max(floor, 0.1 * sigma_start).
    constant: sigma_start at every step.
    """
    if sigma_start <= 0.0:
        raise ValueError("sigma_start must be positive")
    if decay not in DECAY_MODES:
        raise ValueError(f"decay must be one of {DECAY_MODES}")
    if steps == 0:
        return np.empty(0)
    if decay == "constant":
        return np.full(steps, float(sigma_start))
    end = max(floor, 0.1 * sigma_start)
    return np.linspace(sigma_start, end, steps)


def train_slice(
    init: ReferenceArray,
    slice_: TimeSlice,
    sigmas: Sequence[float],
) -> ReferenceArray:
    """Apply one batch step per schedule entry, re-matching BMUs each step."""
    array = init
    for sigma in sigmas:
        array = batch_update(array, slice_, float(sigma))
    return array


# ---------------------------------------------------------------------------
# Initialization and the full chain
# ---------------------------------------------------------------------------

def _weighted_mean_and_pc1(data: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Weighted mean, first principal direction, and the projected std dev."""
    wsum = weights.sum()
    mean = np.einsum("n,nd->d", weights, data) / wsum
    centered = data - mean
    cov = np.einsum("n,nd,ne->de", weights, centered, centered) / wsum
    eigvals, eigvecs = np.linalg.eigh(cov)
    direction = eigvecs[:, -1]
    # Deterministic sign: the largest-magnitude component points up.
    lead = int(np.argmax(np.abs(direction)))
    if direction[lead] < 0.0:
        direction = -direction
    proj = centered @ direction
    spread = float(np.sqrt(np.einsum("n,n,n->", weights, proj, proj) / wsum))
    return mean, direction, spread


def pca_init(slice_: TimeSlice, n_units: int, span: float = 2.0) -> ReferenceArray:
    """Seed units along the first principal component of the slice.

    Units sit at mean + a_i * u for M evenly spaced a_i in
    [-span * s, +span * s], where s is the (weighted) std dev of the data
    projected on u. Zero-variance data falls back to the mean plus tiny
    ordered offsets on the first coordinate so grid order stays meaningful.
    """
    if n_units < 2:
        raise ValueError(f"n_units must be >= 2, got {n_units}")
    if span <= 0.0:
        raise ValueError("span must be positive")
    if slice_.n < 2:
        raise ValueError(f"need at least 2 observations, got {slice_.n}")
    data = slice_.matrix
    weights = slice_.weights
    mean, direction, spread = _weighted_mean_and_pc1(data, weights)

    scale = max(1.0, float(np.max(np.abs(mean))))
    if spread <= 1e-12 * scale:
        warnings.warn(
            "zero-variance slice: placing all units at the mean with tiny "
            "ordered offsets",
            RuntimeWarning,
            stacklevel=2,
        )
        units = np.tile(mean, (n_units, 1))
        offsets = 1e-6 * (np.arange(n_units) - (n_units - 1) / 2.0)
        units[:, 0] += offsets
        return ReferenceArray(units=units)

    alphas = np.linspace(-span * spread, span * spread, n_units)
    units = mean[None, :] + alphas[:, None] * direction[None, :]
    return ReferenceArray(units=units)


def train_sotm(cube: DataCube, config: TrainConfig) -> SotmModel:
    """Train the whole chain with a fixed per-slice sigma policy.

    The first array comes from pca_init; every later slice starts from an
    exact copy of its trained predecessor, preserving unit identity over time.
    """
    n = cube.n_slices
    steps = config.steps_for(n)
    sigma_starts = config.sigma_for(n)

    arrays: list[ReferenceArray] = []
    sigma_final: list[float] = []
    current = pca_init(cube.slices[0], config.n_units, config.pca_span)
    for t, sl in enumerate(cube.slices):
        schedule = sigma_schedule(
            sigma_starts[t], steps[t], config.sigma_decay, config.sigma_floor
        )
        current = train_slice(current, sl, schedule)
        arrays.append(current)
        sigma_final.append(float(schedule[-1]) if len(schedule) else sigma_starts[t])
    return SotmModel(
        arrays=arrays,
        time_keys=list(cube.time_keys),
        feature_names=list(cube.feature_names),
        sigma_final=sigma_final,
        config=config,
    )

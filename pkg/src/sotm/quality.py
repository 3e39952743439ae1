"""Per-slice and aggregate map quality measures.

Five measures per slice: quantization error (mean data-to-BMU distance), the
distortion measure (kernel-weighted variant), topographic error (share of
observations whose two best units are not grid neighbors), the Kaski-Lagus
goodness value (BMU distance plus the input-space length of the grid path from
first to second BMU), and structural change (mean displacement of
index-matched units between consecutive slices). Aggregates are plain means
over slices.

Observation weights never enter these measures unless ``weighted=True`` is
passed, which switches the per-slice averages to weight-weighted means.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ReferenceArray, SotmModel, neighborhood_matrix
from .datacube import DataCube, TimeKey, TimeSlice


def _distances(array: ReferenceArray, slice_: TimeSlice) -> np.ndarray:
    if slice_.dim != array.dim:
        raise ValueError(f"slice dimension {slice_.dim} != array dimension {array.dim}")
    diff = slice_.matrix[:, None, :] - array.units[None, :, :]
    return np.sqrt(np.einsum("nmd,nmd->nm", diff, diff))


def _first_and_second(dists: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    b = np.argmin(dists, axis=1)
    masked = dists.copy()
    masked[np.arange(dists.shape[0]), b] = np.inf
    return b, np.argmin(masked, axis=1)


def _average(values: np.ndarray, weights: np.ndarray | None) -> float:
    if weights is None:
        return float(values.mean())
    return float(np.einsum("n,n->", weights, values) / weights.sum())


def qe_slice(array: ReferenceArray, slice_: TimeSlice, weighted: bool = False) -> float:
    """Mean distance from each observation to its best-matching unit."""
    dists = _distances(array, slice_)
    bmu_dist = dists[np.arange(slice_.n), np.argmin(dists, axis=1)]
    return _average(bmu_dist, slice_.weights if weighted else None)


def dm_slice(
    array: ReferenceArray,
    slice_: TimeSlice,
    sigma: float,
    classical: bool = False,
    weighted: bool = False,
) -> float:
    """Kernel-weighted distortion of the slice.

    Default form: (1 / (N * M)) sum_j sum_i h(i, b_j) * ||x_j - m_{b_j}||,
    i.e. the BMU distance scaled by each observation's total kernel mass.
    With ``classical=True`` the inner distance becomes ||x_j - m_i||^2, the
    textbook distortion, under the same normalization.
    """
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    dists = _distances(array, slice_)
    n, m = dists.shape
    b = np.argmin(dists, axis=1)
    kernel = neighborhood_matrix(m, sigma)[:, b]  # (M, N)
    if classical:
        per_obs = np.einsum("mn,nm->n", kernel, dists * dists)
    else:
        bmu_dist = dists[np.arange(n), b]
        per_obs = kernel.sum(axis=0) * bmu_dist
    return _average(per_obs, slice_.weights if weighted else None) / m


def te_slice(array: ReferenceArray, slice_: TimeSlice, weighted: bool = False) -> float:
    """Share of observations whose first and second BMU are not grid neighbors."""
    if array.n_units < 2:
        raise ValueError("topographic error needs at least 2 units")
    dists = _distances(array, slice_)
    b, b2 = _first_and_second(dists)
    non_adjacent = (np.abs(b - b2) != 1).astype(float)
    return _average(non_adjacent, slice_.weights if weighted else None)


def _grid_path_positions(array: ReferenceArray) -> np.ndarray:
    """Cumulative input-space length along the grid: pos[i] = sum of segment
    lengths up to unit i. The path length between units a and b is
    |pos[a] - pos[b]| because the one-dimensional path is unique."""
    segments = np.linalg.norm(np.diff(array.units, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(segments)])


def kl_slice(array: ReferenceArray, slice_: TimeSlice, weighted: bool = False) -> float:
    """Kaski-Lagus goodness: BMU distance plus the input-space length of the
    grid path from the first to the second BMU, averaged over the slice."""
    if array.n_units < 2:
        raise ValueError("the combined measure needs at least 2 units")
    dists = _distances(array, slice_)
    b, b2 = _first_and_second(dists)
    bmu_dist = dists[np.arange(slice_.n), b]
    pos = _grid_path_positions(array)
    path = np.abs(pos[b] - pos[b2])
    return _average(bmu_dist + path, slice_.weights if weighted else None)


def sc_slice(current: ReferenceArray, previous: ReferenceArray) -> float:
    """Mean displacement of index-matched units between two arrays."""
    if current.units.shape != previous.units.shape:
        raise ValueError(
            f"shape mismatch: {current.units.shape} vs {previous.units.shape}"
        )
    return float(np.linalg.norm(current.units - previous.units, axis=1).mean())


# ---------------------------------------------------------------------------
# Whole-model report
# ---------------------------------------------------------------------------

@dataclass
class SliceQuality:
    time_key: TimeKey
    n: int
    sigma: float
    qe: float
    dm: float
    te: float
    kl: float
    sc: float | None  # None for the first slice


@dataclass
class QualityReport:
    """Per-slice measures plus their means over all slices."""

    per_slice: list[SliceQuality]
    qe: float
    dm: float
    te: float
    kl: float

    def to_csv(self) -> str:
        lines = ["time_key,n,sigma,qe,dm,te,kl,sc"]
        for row in self.per_slice:
            sc = "" if row.sc is None else repr(row.sc)
            lines.append(
                f"{row.time_key},{row.n},{repr(row.sigma)},{repr(row.qe)},"
                f"{repr(row.dm)},{repr(row.te)},{repr(row.kl)},{sc}"
            )
        lines.append(
            f"aggregate,,,{repr(self.qe)},{repr(self.dm)},{repr(self.te)},"
            f"{repr(self.kl)},"
        )
        return "\n".join(lines) + "\n"

    def save_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def aggregate(
    model: SotmModel,
    cube: DataCube,
    classical: bool = False,
    weighted: bool = False,
) -> QualityReport:
    """Compute every per-slice measure and the slice means.

    The distortion measure uses the sigma in effect at each slice's final
    training step, as recorded in the model; structural change starts at the
    second slice.
    """
    if model.n_slices != cube.n_slices:
        raise ValueError(
            f"model has {model.n_slices} slices, cube has {cube.n_slices}"
        )
    if model.dim != cube.dim:
        raise ValueError(f"model dimension {model.dim} != cube dimension {cube.dim}")
    if model.time_keys != cube.time_keys:
        raise ValueError("model and cube time keys differ")

    rows: list[SliceQuality] = []
    for t, (arr, sl) in enumerate(zip(model.arrays, cube.slices)):
        sigma = model.sigma_final[t]
        rows.append(
            SliceQuality(
                time_key=sl.time_key,
                n=sl.n,
                sigma=sigma,
                qe=qe_slice(arr, sl, weighted),
                dm=dm_slice(arr, sl, sigma, classical, weighted),
                te=te_slice(arr, sl, weighted),
                kl=kl_slice(arr, sl, weighted),
                sc=None if t == 0 else sc_slice(arr, model.arrays[t - 1]),
            )
        )
    return QualityReport(
        per_slice=rows,
        qe=float(np.mean([r.qe for r in rows])),
        dm=float(np.mean([r.dm for r in rows])),
        te=float(np.mean([r.te for r in rows])),
        kl=float(np.mean([r.kl for r in rows])),
    )

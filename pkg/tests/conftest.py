"""Shared builders for synthetic cubes, slices and models."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from sotm import DataCube, Observation, SotmModel, TimeSlice


def make_slice(rng, n, d, time_key=1, weights=None, center=0.0, spread=1.0):
    values = rng.normal(center, spread, (n, d))
    if weights is None:
        weights = np.ones(n)
    obs = [
        Observation(entity_id=f"e{j}", features=tuple(values[j]), weight=float(weights[j]))
        for j in range(n)
    ]
    return TimeSlice(time_key=time_key, observations=obs)


def make_cube(rng, n_slices, n, d, drift=0.0, spread=1.0, weights=None):
    slices = [
        make_slice(rng, n, d, time_key=t + 1, weights=weights,
                   center=drift * t, spread=spread)
        for t in range(n_slices)
    ]
    return DataCube(slices=slices, feature_names=[f"f{k+1}" for k in range(d)])


def make_model(arrays, feature_names=None, sigmas=None):
    t = len(arrays)
    d = arrays[0].dim
    return SotmModel(
        arrays=arrays,
        time_keys=list(range(1, t + 1)),
        feature_names=feature_names or [f"f{k+1}" for k in range(d)],
        sigma_final=sigmas or [1.0] * t,
    )


def write_cube_csv(path: Path, rng, n_slices, n_entities, d,
                   weights=True, time_style="int", drift=0.0):
    """Random panel CSV in the layout load_csv expects."""
    header = ["entity", "time"] + (["weight"] if weights else []) + [f"f{k+1}" for k in range(d)]
    lines = [",".join(header)]
    for t in range(n_slices):
        if time_style == "quarter":
            key = f"{2005 + t // 4}Q{t % 4 + 1}"
        else:
            key = str(t + 1)
        for e in range(n_entities):
            feats = rng.normal(drift * t, 1.0, d)
            row = [f"e{e:02d}", key]
            if weights:
                row.append(repr(float(0.5 + rng.random())))
            row.extend(repr(float(v)) for v in feats)
            lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)

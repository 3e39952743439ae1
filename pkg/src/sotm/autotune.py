"""Per-slice neighborhood-radius selection.

Every candidate start radius trains its own copy of the slice's initial
array; the candidate whose trained array scores the lowest Kaski-Lagus value
wins, ties going to the larger radius (smoother maps). The chain continues
from the winning array only, so the tuned map is a single coherent sequence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    ReferenceArray,
    SotmModel,
    TrainConfig,
    pca_init,
    sigma_schedule,
    train_slice,
)
from .datacube import DataCube, TimeKey, TimeSlice
from .quality import QualityReport, aggregate, kl_slice

DEFAULT_GRID_SIZE = 16
DEFAULT_GRID_LOW = 0.3


@dataclass
class TuneGrid:
    """Strictly increasing positive candidate start radii."""

    candidates: np.ndarray

    def __post_init__(self) -> None:
        cand = np.asarray(self.candidates, dtype=float)
        if cand.ndim != 1 or cand.size == 0:
            raise ValueError("grid needs at least one candidate")
        if not np.all(cand > 0.0):
            raise ValueError("grid candidates must be positive")
        if not np.all(np.diff(cand) > 0.0):
            raise ValueError("grid candidates must be strictly increasing")
        self.candidates = cand

    @classmethod
    def default(cls, n_units: int, size: int = DEFAULT_GRID_SIZE) -> "TuneGrid":
        """Log-spaced candidates from 0.3 up to the unit count."""
        return cls(candidates=np.geomspace(DEFAULT_GRID_LOW, float(n_units), size))


@dataclass
class SliceTune:
    time_key: TimeKey
    chosen_sigma: float
    kl_by_candidate: dict[float, float] = field(default_factory=dict)


@dataclass
class TuneReport:
    per_slice: list[SliceTune]

    def to_json_dict(self) -> dict:
        return {
            "per_slice": [
                {
                    "time_key": row.time_key,
                    "chosen_sigma": row.chosen_sigma,
                    "kl_by_candidate": {
                        repr(c): v for c, v in row.kl_by_candidate.items()
                    },
                }
                for row in self.per_slice
            ]
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), separators=(",", ":")) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def tune_sigma(
    init: ReferenceArray,
    slice_: TimeSlice,
    grid: TuneGrid,
    steps: int,
    decay: str = "linear",
    floor: float = 0.05,
) -> tuple[float, ReferenceArray, dict[float, float]]:
    """Train one slice once per candidate and keep the lowest-kl result.

    Candidates are evaluated in grid order from the same initial array, so
    the outcome does not depend on evaluation order; exact kl ties resolve
    to the largest radius.
    """
    best_sigma = None
    best_array = None
    best_kl = np.inf
    kl_by_candidate: dict[float, float] = {}
    for cand in grid.candidates:
        cand = float(cand)
        schedule = sigma_schedule(cand, steps, decay, floor)
        trained = train_slice(init, slice_, schedule)
        value = kl_slice(trained, slice_)
        kl_by_candidate[cand] = value
        if value <= best_kl:
            best_kl, best_sigma, best_array = value, cand, trained
    return best_sigma, best_array, kl_by_candidate


def auto_train(
    cube: DataCube,
    config: TrainConfig,
    grid: TuneGrid | None = None,
) -> tuple[SotmModel, TuneReport, QualityReport]:
    """Train the chain with a tuned radius per slice.

    The first slice's initial array comes from pca_init; each later slice
    starts from the previous slice's winning array. Any fixed sigma in the
    config is ignored.
    """
    if grid is None:
        grid = TuneGrid.default(config.n_units)
    steps = config.steps_for(cube.n_slices)

    arrays: list[ReferenceArray] = []
    sigma_final: list[float] = []
    tuned: list[SliceTune] = []
    current = pca_init(cube.slices[0], config.n_units, config.pca_span)
    for t, sl in enumerate(cube.slices):
        chosen, current, by_candidate = tune_sigma(
            current, sl, grid, steps[t], config.sigma_decay, config.sigma_floor
        )
        schedule = sigma_schedule(chosen, steps[t], config.sigma_decay, config.sigma_floor)
        sigma_final.append(float(schedule[-1]) if len(schedule) else chosen)
        arrays.append(current)
        tuned.append(
            SliceTune(time_key=sl.time_key, chosen_sigma=chosen,
                      kl_by_candidate=by_candidate)
        )
    model = SotmModel(
        arrays=arrays,
        time_keys=list(cube.time_keys),
        feature_names=list(cube.feature_names),
        sigma_final=sigma_final,
        config=config,
    )
    report = TuneReport(per_slice=tuned)
    return model, report, aggregate(model, cube)


def verify_tuning(
    cube: DataCube,
    config: TrainConfig,
    grid: TuneGrid,
    model: SotmModel,
    report: TuneReport,
) -> list[str]:
    """Exhaustively recheck that every slice's choice attains the grid minimum.

    Re-trains every candidate from the recorded chain and returns a list of
    violation descriptions (empty when the tuning is optimal).
    """
    problems: list[str] = []
    steps = config.steps_for(cube.n_slices)
    current = pca_init(cube.slices[0], config.n_units, config.pca_span)
    for t, sl in enumerate(cube.slices):
        row = report.per_slice[t]
        chosen_kl = None
        best = np.inf
        for cand in grid.candidates:
            cand = float(cand)
            schedule = sigma_schedule(cand, steps[t], config.sigma_decay, config.sigma_floor)
            value = kl_slice(train_slice(current, sl, schedule), sl)
            best = min(best, value)
            if cand == row.chosen_sigma:
                chosen_kl = value
        if chosen_kl is None:
            problems.append(f"slice {sl.time_key!r}: chosen sigma not in grid")
        elif chosen_kl > best:
            problems.append(
                f"slice {sl.time_key!r}: chosen sigma {row.chosen_sigma} has kl "
                f"{chosen_kl}, grid minimum is {best}"
            )
        current = model.arrays[t]
    return problems

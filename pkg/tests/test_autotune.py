"""Radius selection: grid optimality, tie handling, chain coherence."""

from __future__ import annotations

import json

import numpy as np
import pytest

from sotm import (
    TrainConfig,
    TuneGrid,
    auto_train,
    kl_slice,
    pca_init,
    sigma_schedule,
    train_slice,
    train_sotm,
    tune_sigma,
    verify_tuning,
)

from conftest import make_cube, make_slice
from test_core import slice_from


class TestTuneGrid:
    def test_default_spans_point_three_to_unit_count(self):
        grid = TuneGrid.default(7)
        assert len(grid.candidates) == 16
        assert grid.candidates[0] == pytest.approx(0.3)
        assert grid.candidates[-1] == pytest.approx(7.0)
        assert np.all(np.diff(grid.candidates) > 0)

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            TuneGrid(candidates=[-0.5, 1.0])

    def test_rejects_non_increasing(self):
        with pytest.raises(ValueError):
            TuneGrid(candidates=[1.0, 1.0, 2.0])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            TuneGrid(candidates=[])


class TestTuneSigma:
    def test_single_candidate_is_plain_training(self, rng):
        sl = make_slice(rng, 20, 3)
        init = pca_init(sl, 4)
        grid = TuneGrid(candidates=[0.8])
        chosen, trained, by_candidate = tune_sigma(init, sl, grid, steps=6)
        assert chosen == 0.8
        manual = train_slice(init, sl, sigma_schedule(0.8, 6))
        np.testing.assert_array_equal(trained.units, manual.units)
        assert list(by_candidate) == [0.8]

    def test_exact_tie_prefers_larger_radius(self, rng):
        # a single observation collapses every unit onto it at any radius,
        # so every candidate ties at kl = 0
        sl = slice_from([[2.0, -1.0]])
        init = pca_init(make_slice(rng, 10, 2), 3)
        grid = TuneGrid(candidates=[0.5, 1.0, 2.0])
        chosen, _, by_candidate = tune_sigma(init, sl, grid, steps=4)
        assert set(by_candidate.values()) == {0.0}
        assert chosen == 2.0

    def test_choice_attains_exhaustive_minimum(self, rng):
        for _ in range(10):
            sl = make_slice(rng, 25, 3, spread=1.5)
            init = pca_init(sl, 5)
            grid = TuneGrid.default(5, size=8)
            chosen, _, by_candidate = tune_sigma(init, sl, grid, steps=5)
            # independent exhaustive recomputation
            recomputed = {}
            for cand in grid.candidates:
                arr = train_slice(init, sl, sigma_schedule(float(cand), 5))
                recomputed[float(cand)] = kl_slice(arr, sl)
            assert by_candidate == recomputed
            best = min(recomputed.values())
            assert by_candidate[chosen] == best
            for cand, value in recomputed.items():
                assert by_candidate[chosen] <= value

    def test_adding_a_candidate_never_hurts(self, rng):
        sl = make_slice(rng, 20, 2)
        init = pca_init(sl, 4)
        base = TuneGrid(candidates=[0.5, 1.5])
        larger = TuneGrid(candidates=[0.5, 0.9, 1.5])
        chosen_base, _, by_base = tune_sigma(init, sl, base, steps=5)
        chosen_larger, _, by_larger = tune_sigma(init, sl, larger, steps=5)
        assert by_larger[chosen_larger] <= by_base[chosen_base]


class TestAutoTrain:
    def test_degenerate_grid_equals_fixed_training(self, rng):
        cube = make_cube(rng, 3, 15, 2, drift=0.3)
        config = TrainConfig(n_units=4, steps=5)
        model_tuned, report, _ = auto_train(cube, config, TuneGrid(candidates=[1.1]))
        fixed = TrainConfig(n_units=4, steps=5, sigma=1.1)
        model_fixed = train_sotm(cube, fixed)
        assert model_tuned.dumps() == model_fixed.dumps()
        assert all(r.chosen_sigma == 1.1 for r in report.per_slice)

    def test_identical_slices_choose_identical_sigma(self, rng):
        from sotm import DataCube, TimeSlice

        sl = make_slice(rng, 20, 2)
        cube = DataCube(
            slices=[TimeSlice(time_key=t + 1, observations=sl.observations)
                    for t in range(3)],
            feature_names=["f1", "f2"],
        )
        config = TrainConfig(n_units=4, steps=[30, 6, 6], sigma_decay="constant")
        _, report, _ = auto_train(cube, config, TuneGrid.default(4, size=6))
        assert report.per_slice[1].chosen_sigma == report.per_slice[2].chosen_sigma

    def test_report_covers_every_slice_and_candidate(self, rng):
        cube = make_cube(rng, 4, 12, 3)
        grid = TuneGrid.default(3, size=5)
        model, report, quality = auto_train(cube, TrainConfig(n_units=3, steps=4), grid)
        assert len(report.per_slice) == 4
        for row in report.per_slice:
            assert len(row.kl_by_candidate) == 5
            assert row.chosen_sigma in row.kl_by_candidate
        assert len(quality.per_slice) == 4
        assert model.n_slices == 4

    def test_quality_report_kl_matches_tuned_choice(self, rng):
        cube = make_cube(rng, 3, 14, 2)
        grid = TuneGrid.default(4, size=6)
        model, report, quality = auto_train(cube, TrainConfig(n_units=4, steps=5), grid)
        for tune_row, quality_row in zip(report.per_slice, quality.per_slice):
            assert quality_row.kl == tune_row.kl_by_candidate[tune_row.chosen_sigma]

    def test_determinism(self, rng):
        cube = make_cube(rng, 3, 12, 2, weights=0.5 + rng.random(12))
        config = TrainConfig(n_units=4, steps=5)
        grid = TuneGrid.default(4, size=6)
        a = auto_train(cube, config, grid)
        b = auto_train(cube, config, grid)
        assert a[0].dumps() == b[0].dumps()
        assert a[1].dumps() == b[1].dumps()


class TestVerifyTuning:
    def test_honest_run_verifies_clean(self, rng):
        cube = make_cube(rng, 3, 12, 2)
        config = TrainConfig(n_units=4, steps=5)
        grid = TuneGrid.default(4, size=6)
        model, report, _ = auto_train(cube, config, grid)
        assert verify_tuning(cube, config, grid, model, report) == []

    def test_tampered_choice_is_detected(self, rng):
        cube = make_cube(rng, 3, 12, 2, spread=1.4)
        config = TrainConfig(n_units=4, steps=5)
        grid = TuneGrid.default(4, size=6)
        model, report, _ = auto_train(cube, config, grid)
        row = report.per_slice[1]
        worst = max(row.kl_by_candidate, key=row.kl_by_candidate.get)
        if worst != row.chosen_sigma:
            row.chosen_sigma = worst
            problems = verify_tuning(cube, config, grid, model, report)
            assert problems and "slice" in problems[0]

    def test_foreign_sigma_is_detected(self, rng):
        cube = make_cube(rng, 2, 10, 2)
        config = TrainConfig(n_units=3, steps=4)
        grid = TuneGrid.default(3, size=4)
        model, report, _ = auto_train(cube, config, grid)
        report.per_slice[0].chosen_sigma = 123.0
        problems = verify_tuning(cube, config, grid, model, report)
        assert problems and "not in grid" in problems[0]


class TestTuneReportSerialization:
    def test_json_shape(self, rng):
        cube = make_cube(rng, 2, 10, 2)
        _, report, _ = auto_train(
            cube, TrainConfig(n_units=3, steps=4), TuneGrid(candidates=[0.5, 1.0])
        )
        doc = json.loads(report.dumps())
        assert set(doc) == {"per_slice"}
        assert [row["time_key"] for row in doc["per_slice"]] == [1, 2]
        for row in doc["per_slice"]:
            assert set(row) == {"time_key", "chosen_sigma", "kl_by_candidate"}
            assert set(row["kl_by_candidate"]) == {"0.5", "1.0"}

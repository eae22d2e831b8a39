import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harmonize.errors import SelectionFailureError
from harmonize.geomcore import AreaUnit, GridFieldSnapshot, discretize_block
from harmonize.tuning import (CrossValidator, TuningConfig, align_field, cv_rmse, fold_assignment,
                              select_family, select_nmax)
from harmonize.variogram import covariance

from conftest import grid_coords
from oracles import dense_block_kriging


def smooth_field(n_side=10, seed=0, noise=0.0):
    xy = grid_coords(n_side)
    r = np.random.default_rng(seed)
    z = np.sin(xy[:, 0] / 3.0) * np.cos(xy[:, 1] / 4.0) + 0.1 * xy[:, 0] + noise * r.normal(size=len(xy))
    return GridFieldSnapshot("s", 2020, xy, z)


def test_constant_field_has_zero_cv_error():
    f = GridFieldSnapshot("c", 2020, grid_coords(6), np.full(36, 3.0))
    assert cv_rmse(f, "exponential", 8, TuningConfig()) == pytest.approx(0.0, abs=1e-12)


def test_cv_rmse_with_offset_predictor(grid6):
    lookup = {tuple(c): v for c, v in zip(grid6.coords.tolist(), grid6.values)}

    def shifted(spec, train_xy, train_z, test_xy, nmax):
        return np.array([lookup[tuple(c)] + 1.0 for c in test_xy.tolist()])

    assert cv_rmse(grid6, "gaussian", 8, TuningConfig(), predictor=shifted) == pytest.approx(1.0, abs=1e-12)


def test_cv_rmse_is_reproducible(grid6):
    cfg = TuningConfig(seed=42)
    assert cv_rmse(grid6, "spherical", 8, cfg) == cv_rmse(grid6, "spherical", 8, cfg)


def test_too_few_samples_for_folds():
    f = GridFieldSnapshot("v", 0, [(0, 0), (1, 0), (0, 1)], [1.0, 2.0, 3.0])
    with pytest.raises(SelectionFailureError):
        cv_rmse(f, "exponential", 2, TuningConfig(folds=5))


def test_single_family_candidate(grid6):
    assert select_family(grid6, TuningConfig(families=("gaussian",))) == "gaussian"


def test_smooth_surface_beats_mean_predictor():
    f = smooth_field()
    cfg = TuningConfig(families=("gaussian", "exponential"), seed=1)
    fam = select_family(f, cfg)
    assert fam in ("gaussian", "exponential")
    z = f.values
    mean_rmse = float(np.sqrt(np.mean((z - z.mean()) ** 2)))
    assert cv_rmse(f, fam, cfg.initial_nmax, cfg) < mean_rmse


@pytest.mark.parametrize("families", [("matern(0.5)", "Matern(0.5)"), ("Matern(0.5)", "matern(0.5)")])
def test_tied_families_keep_first_listed(grid6, families):
    assert select_family(grid6, TuningConfig(families=families)) == families[0]


def test_single_nmax_candidate(grid6):
    assert select_nmax(grid6, "exponential", TuningConfig(nmax_grid=(12,))) == 12


def test_nmax_equal_to_sample_count_is_global(grid6):
    cfg = TuningConfig(nmax_grid=(4, 36))
    cv = CrossValidator(grid6, cfg)
    assert cv.rmse("exponential", 36) == cv.rmse("exponential", 500)


def test_fold_assignment_partition_and_balance():
    labels = fold_assignment(23, 5, seed=9)
    assert sorted(np.bincount(labels).tolist()) == [4, 4, 5, 5, 5]
    assert np.array_equal(labels, fold_assignment(23, 5, seed=9))
    assert not np.array_equal(labels, fold_assignment(23, 5, seed=10))


@settings(max_examples=50, deadline=None)
@given(st.integers(5, 200), st.integers(2, 10), st.integers(0, 2**32 - 1), st.integers(0, 3))
def test_folds_form_a_partition(n, k, seed, repeat):
    if n < k:
        return
    labels = fold_assignment(n, k, seed, repeat)
    assert labels.min() == 0 and labels.max() == k - 1
    counts = np.bincount(labels, minlength=k)
    assert counts.sum() == n and counts.max() - counts.min() <= 1


def test_align_constant_field():
    f = GridFieldSnapshot("c", 2020, grid_coords(6), np.full(36, -2.5))
    areas = [AreaUnit.rectangle("A", 0, 0, 3, 3), AreaUnit.rectangle("B", 2, 2, 6, 5)]
    res = align_field(f, areas, TuningConfig(families=("exponential",), nmax_grid=(8,)))
    assert [p.mean for p in res.predictions] == pytest.approx([-2.5, -2.5], abs=1e-12)


def test_align_matches_dense_oracle(grid6, four_blocks):
    cfg = TuningConfig(families=("exponential",), nmax_grid=(36,), spacing=0.5)
    res = align_field(grid6, four_blocks, cfg)
    spec = res.final_spec
    cov = lambda h: float(covariance(spec, h))  # noqa: E731
    for area, pred in zip(sorted(four_blocks, key=lambda a: a.id), res.predictions):
        bp = discretize_block(area, 0.5)
        mean, var, _ = dense_block_kriging(cov, grid6.coords, grid6.values, bp)
        assert pred.area_id == area.id
        assert pred.mean == pytest.approx(mean, rel=1e-8)
        assert pred.variance == pytest.approx(var, rel=1e-8)


def test_chosen_candidates_have_minimal_cv_error():
    f = smooth_field(noise=0.05)
    cfg = TuningConfig(families=("spherical", "exponential", "gaussian"), nmax_grid=(4, 8, 16), seed=5)
    res = align_field(f, [AreaUnit.rectangle("A", 0, 0, 10, 10)], cfg)
    fam_scores = {k: s for kind, k, s in res.cv_table if kind == "family"}
    nmax_scores = {int(k): s for kind, k, s in res.cv_table if kind == "nmax"}
    assert fam_scores[res.chosen_family] == min(fam_scores.values())
    assert nmax_scores[res.chosen_nmax] == min(nmax_scores.values())


def test_align_is_deterministic(fast_tuning):
    f = smooth_field(noise=0.1, seed=3)
    areas = [AreaUnit.rectangle("A", 0, 0, 5, 5), AreaUnit.rectangle("B", 5, 5, 10, 10)]
    a = align_field(f, areas, fast_tuning)
    b = align_field(f, areas, fast_tuning)
    assert a.predictions == b.predictions
    assert a.cv_table == b.cv_table


def test_tuning_config_validation():
    with pytest.raises(ValueError):
        TuningConfig(folds=1)
    with pytest.raises(ValueError):
        TuningConfig(nmax_grid=())
    with pytest.raises(ValueError):
        TuningConfig(families=("cubic",))

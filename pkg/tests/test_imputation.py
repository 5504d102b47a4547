import numpy as np
import pytest

from causal_panel.errors import DegenerateIndicatorError
from causal_panel.imputation import drift, impute, impute_knn, impute_msreg, impute_random
from causal_panel.synth import mask_missing

from conftest import make_panel

nan = np.nan


def bivariate(seed, n=200, rho=0.9):
    rng = np.random.default_rng(seed)
    z = rng.multivariate_normal([0.0, 0.0], [[1.0, rho], [rho, 1.0]], n).T
    return make_panel(z, indicators=("x", "y"))


@pytest.mark.parametrize("method", ["random", "knn", "msreg"])
def test_no_missing_is_identity(method):
    p = bivariate(0, n=20)
    out = impute(p, method, seed=1)
    assert np.array_equal(out.panel.values, p.values)
    assert not out.imputed_mask.any()
    if method == "msreg":
        assert out.n_regressions == 0


@pytest.mark.parametrize("method", ["random", "knn", "msreg"])
def test_observed_cells_untouched_and_complete(method):
    p = mask_missing(bivariate(4, n=40), 0.25, seed=9)
    out = impute(p, method, seed=2)
    assert np.array_equal(out.imputed_mask, p.missing)
    assert not out.panel.missing.any()
    assert np.isfinite(out.panel.values).all()
    assert np.array_equal(out.panel.values[~p.missing], p.values[~p.missing])


@pytest.mark.parametrize("method", ["random", "knn", "msreg"])
def test_same_seed_bit_identical(method):
    p = mask_missing(bivariate(5, n=30), 0.2, seed=1)
    a, b = impute(p, method, seed=77), impute(p, method, seed=77)
    assert a.panel.values.tobytes() == b.panel.values.tobytes()


def test_random_single_donor():
    p = make_panel([[5.0, nan, nan, nan]])
    out = impute_random(p, seed=3)
    assert out.panel.values[0].tolist() == [5.0] * 4


def test_random_draws_from_observed_values():
    p = make_panel([[1.0, 2.0, nan, nan, 7.0, nan]])
    out = impute_random(p, seed=0)
    assert set(out.panel.values[0, p.missing[0]]) <= {1.0, 2.0, 7.0}


@pytest.mark.parametrize("fn", [impute_random, lambda p, s: impute_knn(p, 2, s)])
def test_fully_missing_indicator_is_named(fn):
    p = make_panel([[1.0, 2.0, 3.0], [nan, nan, nan]], indicators=("ok", "empty"))
    with pytest.raises(DegenerateIndicatorError) as exc:
        fn(p, 0)
    assert exc.value.indicator == "empty"


def test_knn_zero_distance_donor_copied():
    p = make_panel([[1.0, 5.0, 1.0, 9.0], [10.0, 20.0, nan, 40.0]])
    out = impute_knn(p, k=1)
    assert out.panel.values[1, 2] == 10.0


def test_knn_full_neighbourhood_is_donor_mean():
    p = make_panel([[1.0, 5.0, 2.0, 9.0], [10.0, 20.0, nan, 40.0]])
    out = impute_knn(p, k=3)
    assert out.panel.values[1, 2] == pytest.approx(70.0 / 3)


def test_knn_hand_computed_equal_distances():
    # years 1..5; B missing in year 3 and wherever no donor exists; A identical everywhere
    p = make_panel([[1.0, 1.0, 1.0, 1.0, 1.0], [2.0, 4.0, nan, nan, nan]])
    out = impute_knn(p, k=2)
    assert out.panel.values[1, 2] == 3.0


def test_knn_tie_broken_by_year_order():
    p = make_panel([[0.0, 2.0, 1.0, 0.0], [7.0, 9.0, nan, 8.0]])
    # years 0, 1 and 3 are all at distance 1 from year 2 on A; the earliest wins for k=1
    assert impute_knn(p, k=1).panel.values[1, 2] == 7.0


def test_knn_no_comparable_donor_falls_back_to_mean():
    p = make_panel([[1.0, nan, 3.0], [nan, 5.0, nan]])
    out = impute_knn(p, k=1)
    assert out.panel.values[1, 0] == 5.0
    assert any("indicator mean" in w for w in out.warnings)


def test_msreg_exact_copy_has_no_noise():
    x = np.array([0.3, 1.7, -2.0, 0.5, 4.0, 2.2, -1.1, 0.9])
    y = x.copy()
    y[[2, 5]] = nan
    p = make_panel([x, y], indicators=("x", "y"))
    out = impute_msreg(p, seed=11)
    assert out.noise_scales["y"] == 0.0
    assert np.allclose(out.panel.values[1], x, rtol=0, atol=1e-12)


def test_msreg_requirements():
    with pytest.raises(ValueError):
        impute_msreg(make_panel([[1.0, nan, 3.0, 4.0]]), 0)
    with pytest.raises(DegenerateIndicatorError):
        impute_msreg(make_panel([[1.0, 2.0, 3.0, 4.0], [1.0, nan, nan, 4.0]]), 0)


def test_msreg_collinear_predictors_use_ridge():
    rng = np.random.default_rng(2)
    a = rng.standard_normal(12)
    target = a + 0.1 * rng.standard_normal(12)
    target[[3, 7]] = nan
    p = make_panel([a, 2 * a, target])
    out = impute_msreg(p, seed=0)
    assert any("ridge" in w for w in out.warnings)
    assert np.isfinite(out.panel.values).all()


def test_msreg_noise_scale_within_unit_interval():
    p = mask_missing(bivariate(8, n=60), 0.3, seed=3)
    out = impute_msreg(p, seed=1)
    assert all(0.0 <= s <= 1.0 for s in out.noise_scales.values())
    # rho = 0.9 -> residual scale near sqrt(1 - 0.81)
    assert out.noise_scales["x"] == pytest.approx(np.sqrt(1 - 0.81), abs=0.1)


def test_msreg_imputed_mean_unbiased_monte_carlo():
    # 1000 repetitions: the mean error of imputed cells must sit within 3 SE of zero
    errors = []
    for s in range(1000):
        full = bivariate(s)
        miss = np.zeros_like(full.missing)
        rng = np.random.default_rng(10_000 + s)
        miss[0, rng.choice(200, 40, replace=False)] = True
        p = full.replace(missing=miss)
        out = impute_msreg(p, seed=s)
        errors.append(out.panel.values[0, miss[0]].mean() - full.values[0, miss[0]].mean())
    errors = np.array(errors)
    se = errors.std(ddof=1) / np.sqrt(errors.size)
    assert abs(errors.mean()) <= 3 * se


def test_drift_zero_without_imputation():
    p = bivariate(1, n=30)
    r = drift(p, impute_random(p, 0))
    assert set(r.variance_delta.values()) == {0.0}
    assert r.covariance_frobenius_delta == 0.0
    assert r.correlation_max_abs_delta == 0.0


def test_drift_constant_indicator_has_zero_variance_delta():
    p = make_panel([[3.0, 3.0, nan, 3.0, 3.0], [1.0, 2.0, 4.0, 3.0, 5.0]])
    r = drift(p, impute_random(p, 0))
    assert r.variance_delta["A"] == 0.0


def test_drift_msreg_beats_random_on_correlation():
    wins = 0
    for s in range(100):
        p = mask_missing(bivariate(s), 0.2, seed=500 + s)
        wins += (drift(p, impute_msreg(p, s)).correlation_max_abs_delta
                 < drift(p, impute_random(p, s)).correlation_max_abs_delta)
    assert wins >= 90


def test_unknown_method():
    with pytest.raises(ValueError):
        impute(bivariate(0, 10), "mice")

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpack_lab import coherence as co
from qpack_lab.core.geometry import Point2
from qpack_lab.errors import FitError, ValidationError


def _curve(tau, n=20, span=5.0):
    t = np.linspace(0, span * tau, n)
    return co.DecayCurve(t, np.exp(-t / tau))


# --- decay fits -------------------------------------------------------------

@pytest.mark.parametrize("tau", [1e-9, 97e-6, 0.3, 40.0])
def test_fit_decay_exact_curve(tau):
    fit_tau, r2 = co.fit_decay(_curve(tau))
    assert fit_tau == pytest.approx(tau, rel=1e-9)
    assert r2 == pytest.approx(1.0, abs=1e-12)


@given(st.floats(1e-3, 1e3))
@settings(max_examples=30, deadline=None)
def test_fit_decay_time_scaling(c):
    rng = np.random.default_rng(0)
    t = np.linspace(0, 400e-6, 25)
    y = np.exp(-t / 80e-6) + 0.03 * rng.standard_normal(len(t))
    tau1, r1 = co.fit_decay(co.DecayCurve(t, y))
    tau2, r2 = co.fit_decay(co.DecayCurve(c * t, y))
    assert tau2 == pytest.approx(c * tau1, rel=1e-8)
    assert r2 == pytest.approx(r1, abs=1e-10)


def test_fit_decay_rejects_growth():
    t = np.linspace(0, 1, 10)
    with pytest.raises(FitError):
        co.fit_decay(co.DecayCurve(t, np.exp(t)))


def test_decay_curve_validation():
    with pytest.raises(ValidationError):
        co.DecayCurve([0, 1, 2], [1, 0.5, 0.2])
    with pytest.raises(ValidationError):
        co.DecayCurve([0, 2, 1, 3], [1, 0.5, 0.2, 0.1])
    with pytest.raises(ValidationError):
        co.DecayCurve.normalized([0, 1, 2, 3], [1, 1, 1, 1], 0.3, 0.3)


def test_normalized_levels():
    t = np.linspace(0, 5, 12)
    raw = 0.2 + 0.6 * np.exp(-t)
    c = co.DecayCurve.normalized(t, raw, 0.8, 0.2)
    np.testing.assert_allclose(c.signal, np.exp(-t), atol=1e-15)


def test_median_of_fits_filters_bad_curves():
    rng = np.random.default_rng(2)
    good = [_curve(50e-6), _curve(60e-6), _curve(70e-6)]
    t = np.linspace(0, 1e-4, 20)
    junk = co.DecayCurve(t, 0.5 + 0.2 * rng.standard_normal(20))
    res = co.median_of_fits(good + [junk])
    assert res.value == pytest.approx(60e-6, rel=1e-8)
    assert (res.n_accepted, res.n_total) == (3, 4)
    empty = co.median_of_fits([junk])
    assert not empty.measured and math.isnan(empty.value)


def test_observable_values_and_unmeasured():
    recs = [co.QubitRecord("A", Point2(0, 0), 4e9, 4.01e9, 9e9, 9.02e9, (_curve(1e-4),) * 3),
            co.QubitRecord("B", Point2(1e-3, 0), 4e9, 3.99e9, 9e9, 9e9)]
    t1 = co.observable_values(recs, "t1")
    assert t1[0] == pytest.approx(1e-4, rel=1e-8) and math.isnan(t1[1])
    np.testing.assert_allclose(co.observable_values(recs, "qubit_freq_error"), [1e7, -1e7])
    np.testing.assert_allclose(co.observable_values(recs, "resonator_freq_error"), [2e7, 0.0])


def test_positions_checked():
    with pytest.raises(ValidationError):
        co.check_positions([co.QubitRecord("X", Point2(40e-3, 0))])


# --- bootstrap --------------------------------------------------------------

@pytest.fixture(scope="module")
def ensemble():
    return co.matched_ensemble(105, 97e-6, 0.48)


def test_matched_ensemble(ensemble):
    assert np.median(ensemble) == pytest.approx(97e-6, rel=1e-12)
    assert ensemble.min() == pytest.approx(28.1e-6, rel=0.01)
    assert ensemble.max() == pytest.approx(334.8e-6, rel=0.01)


def test_bootstrap_jobs_invariant(ensemble):
    a = co.bootstrap_statistic(ensemble, "median", resamples=300, seed=4, jobs=1)
    b = co.bootstrap_statistic(ensemble, "median", resamples=300, seed=4, jobs=8)
    c = co.bootstrap_statistic(ensemble, "median", sizes=[50, 10, 3], resamples=300, seed=4)
    for conf in a.bands:
        np.testing.assert_array_equal(a.relative_error[conf], b.relative_error[conf])
        np.testing.assert_array_equal(a.relative_error[conf][[2, 9, 49]], c.relative_error[conf])


def test_bootstrap_full_size_has_no_error(ensemble):
    for stat in ("median", "min", "max"):
        r = co.bootstrap_statistic(ensemble, stat, sizes=[105], resamples=100)
        assert r.relative_error[0.99][0] == 0.0


@given(st.floats(1e-9, 1e3))
@settings(max_examples=10, deadline=None)
def test_bootstrap_relative_error_scale_free(ensemble, c):
    a = co.bootstrap_statistic(ensemble, "median", sizes=[5, 20], resamples=200, seed=1)
    b = co.bootstrap_statistic(c * ensemble, "median", sizes=[5, 20], resamples=200, seed=1)
    np.testing.assert_allclose(a.relative_error[0.9], b.relative_error[0.9], rtol=1e-12)


def test_crossings_on_matched_ensemble(ensemble):
    med = co.bootstrap_statistic(ensemble, "median", resamples=2000, seed=0)
    low = co.bootstrap_statistic(ensemble, "min", resamples=2000, seed=0)
    assert co.crossing_size(med, 0.5) == 4
    assert co.crossing_size(med, 0.9) == 20
    assert co.crossing_size(low, 0.5) == 55


def test_crossing_never_reached():
    v = co.matched_ensemble(20, 1.0, 2.0)
    r = co.bootstrap_statistic(v, "min", sizes=[1, 2, 3], resamples=100)
    assert co.crossing_size(r, 0.99, threshold=1e-6) is None


def test_bootstrap_validation(ensemble):
    with pytest.raises(ValidationError):
        co.bootstrap_statistic(ensemble, "median", sizes=[0, 5])
    with pytest.raises(ValidationError):
        co.bootstrap_statistic(ensemble, "median", resamples=10)
    with pytest.raises(ValidationError):
        co.bootstrap_statistic([np.nan, np.nan], "median")
    with pytest.raises(ValueError):
        co.bootstrap_statistic(ensemble, "mode")


# --- spatial correlation ----------------------------------------------------

@pytest.fixture(scope="module")
def positions():
    return np.array([r.position for r in co.synth_records(105, curves_per_qubit=1, seed=0)])


def test_pearson_long_range_frozen(positions):
    v = positions[:, 0] + 0.3 * positions[:, 1]
    r = co.pearson_spatial(positions, v, resamples=300, seed=1)
    assert r.correlation[0] == pytest.approx(0.80, abs=0.01)
    assert 0.55 < r.band_low[0] < r.band_high[0] < 1.0
    # anti-correlated across the wafer
    assert r.correlation[-1] < 0
    assert r.pair_counts.sum() == 105 * 104 // 2


def test_pearson_drops_nan_and_handles_fixed_edges(positions):
    v = positions[:, 1].copy()
    v[::7] = np.nan
    r = co.pearson_spatial(positions, v, bins=[0.0, 0.01, 0.03, 0.08], resamples=200)
    assert r.pair_counts.sum() <= 90 * 89 // 2
    assert len(r.centers) == 3


def test_pearson_validation(positions):
    with pytest.raises(ValidationError):
        co.pearson_spatial(positions, np.ones(len(positions)))
    with pytest.raises(ValidationError):
        co.pearson_spatial(positions[:1], np.ones(1))
    with pytest.raises(ValidationError):
        co.pearson_spatial(positions, positions[:, 0], bins=[0.0, 0.0])


def test_radial_profile(positions):
    v = np.hypot(positions[:, 0], positions[:, 1])
    r, vals, edges, med = co.radial_profile(positions, v, n_bins=4)
    assert np.all(np.diff(r) >= 0)
    np.testing.assert_array_equal(r, vals)
    assert np.all(np.diff(med) > 0)


# --- synthetic wafers and files ---------------------------------------------

def test_synth_records_recover_medians():
    recs = co.synth_records(40, curves_per_qubit=5, seed=3)
    t1 = co.observable_values(recs, "t1")
    assert np.isfinite(t1).all()
    assert np.median(t1) == pytest.approx(97e-6, rel=0.1)
    co.check_positions(recs)


def test_records_round_trip(tmp_path):
    recs = co.synth_records(6, curves_per_qubit=2, seed=1)
    co.write_records(recs, tmp_path / "wafer.csv", tmp_path / "decays")
    back = co.read_records(tmp_path / "wafer.csv", tmp_path / "decays")
    assert [r.qubit_id for r in back] == [r.qubit_id for r in recs]
    for a, b in zip(recs, back):
        assert a.position == b.position
        assert a.measured_frequency == b.measured_frequency
        for ca, cb in zip(a.t1_samples, b.t1_samples):
            np.testing.assert_array_equal(ca.delays, cb.delays)
            np.testing.assert_allclose(ca.signal, cb.signal, rtol=0, atol=1e-15)

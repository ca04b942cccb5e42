import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpack_lab import readout as ro
from qpack_lab.errors import FitError, ParseError, ValidationError


def _truth(**kw):
    base = dict(sigma=1e-3, center_g=(-3e-3, 1e-3), center_e=(4e-3, 2e-3), thermal=0.02,
                n_shots=20_000)
    base.update(kw)
    return ro.ShotTruth(**base)


@pytest.fixture(scope="module")
def dataset():
    return ro.synth_shots(ro.ShotTruth.from_t1(50e-6, 2e-6, **{
        k: v for k, v in _truth().__dict__.items()
        if k not in ("decay_probability", "readout_duration", "t1_reference")}), 3)


def test_projection_orientation(dataset):
    proj = ro.project_shots(dataset)
    assert np.median(proj.ground) < 0 < np.median(proj.excited)
    d = np.array([7e-3, 1e-3])
    np.testing.assert_allclose(proj.direction, d / np.linalg.norm(d), atol=2e-2)


def test_fit_recovers_truth(dataset):
    res = ro.analyze(dataset)
    f = res.fit
    sep = math.hypot(7e-3, 1e-3)
    # decay during readout smears the excited cloud, which the model absorbs into sigma
    assert f.sigma == pytest.approx(1e-3, rel=0.05)
    assert f.center_e - f.center_g == pytest.approx(sep, rel=0.02)
    assert ro.thermal_fraction(f) == pytest.approx(0.02, abs=0.004)
    assert res.budget.decay == pytest.approx(2e-6 / 200e-6)
    # the decay tail is outside the model and shows up in the fit quality
    assert res.fit.reduced_chi2 > 2


def test_reduced_chi2_near_one_without_decay():
    ds = ro.synth_shots(_truth(n_shots=50_000), 4)
    fit = ro.analyze(ds).fit
    assert 0.7 < fit.reduced_chi2 < 1.4
    assert fit.sigma == pytest.approx(1e-3, rel=0.01)


@given(st.floats(0, 2 * math.pi))
@settings(max_examples=8, deadline=None)
def test_rotation_invariance(dataset, theta):
    c, s = math.cos(theta), math.sin(theta)
    i = c * dataset.i - s * dataset.q + 0.01
    q = s * dataset.i + c * dataset.q - 0.02
    turned = ro.IQDataset("Q", dataset.prepared, i, q, dataset.readout_duration,
                          dataset.qubit_frequency, dataset.t1_reference)
    a = ro.project_shots(dataset)
    b = ro.project_shots(turned)
    np.testing.assert_allclose(b.ground, a.ground, atol=1e-12)
    assert ro.readout_error(b.ground, b.excited) == ro.readout_error(a.ground, a.excited)


@given(st.floats(1e-4, 1e-1), st.floats(0.5, 14.0))
def test_overlap_matches_quadrature(sigma, k):
    exact = ro.overlap_error(sigma, -k * sigma / 2, k * sigma / 2)
    assert abs(exact - ro.overlap_error_numeric(sigma, -k * sigma / 2, k * sigma / 2)) <= 1e-10


def test_overlap_ten_sigma():
    from scipy.special import erfc
    assert ro.overlap_error(1.0, 0.0, 10.0) == pytest.approx(0.5 * erfc(5 / math.sqrt(2)),
                                                              abs=1e-15)
    assert ro.overlap_error(1.0, 0.0, 10.0) == pytest.approx(2.866515718791939e-07, rel=1e-12)


def test_decay_only_error_is_quarter_probability():
    t = ro.ShotTruth(sigma=1e-3, center_g=(-5e-3, 0), center_e=(5e-3, 0),
                     decay_probability=0.1, n_shots=200_000)
    p = ro.project_shots(ro.synth_shots(t, 1))
    # uniform decay time: half of the decayed shots cross the midpoint, half of the preps are excited
    assert ro.readout_error(p.ground, p.excited) == pytest.approx(0.025, abs=0.002)


def test_effective_temperature():
    fit = ro.DoubleGaussianFit(1.0, -5.0, 5.0, 1.0, math.exp(-6), 0.0, 1.0)
    assert ro.effective_temperature(fit, 4.5e9) == pytest.approx(35.994e-3, abs=1e-6)
    zero = ro.DoubleGaussianFit(1.0, -5.0, 5.0, 1.0, 0.0, 0.0, 1.0)
    assert ro.effective_temperature(zero, 4.5e9) == 0.0
    inverted = ro.DoubleGaussianFit(1.0, -5.0, 5.0, 0.4, 0.6, 0.0, 1.0)
    with pytest.raises(ValidationError, match="inversion"):
        ro.effective_temperature(inverted, 4.5e9)


@given(st.floats(0.5, 20.0), st.floats(1e9, 10e9))
def test_temperature_monotone_in_population(ratio_log, f):
    hot = ro.DoubleGaussianFit(1.0, -5.0, 5.0, 1.0, math.exp(-ratio_log), 0.0, 1.0)
    cold = ro.DoubleGaussianFit(1.0, -5.0, 5.0, 1.0, math.exp(-ratio_log - 1), 0.0, 1.0)
    assert ro.effective_temperature(cold, f) < ro.effective_temperature(hot, f)


def test_thermal_halving_toggle(dataset):
    half = ro.analyze(dataset).budget
    full = ro.analyze(dataset, halve_thermal=False).budget
    assert full.thermal == pytest.approx(2 * half.thermal, rel=1e-14)
    assert half.residual == pytest.approx(half.measured_error - half.predicted)


def test_analyze_without_t1():
    ds = ro.synth_shots(_truth(), 0)
    res = ro.analyze(ds)
    assert res.budget is None and "no T1" in res.note
    assert ro.analyze(ds, t1=100e-6).budget is not None


def test_fit_needs_shots_and_distinct_centroids():
    with pytest.raises(FitError):
        ro.fit_double_gaussian(np.zeros(10), np.ones(10))
    same = np.zeros(200)
    ds = ro.IQDataset("Q", np.r_[np.zeros(100), np.ones(100)], same, same, 1e-6, 4e9)
    with pytest.raises(ValidationError, match="coincident"):
        ro.project_shots(ds)


def test_dataset_validation():
    with pytest.raises(ValidationError):
        ro.IQDataset("Q", [0, 2], [0.0, 1.0], [0.0, 1.0], 1e-6, 4e9)
    with pytest.raises(ValidationError):
        ro.IQDataset("Q", [0, 1], [0.0, np.nan], [0.0, 1.0], 1e-6, 4e9)
    with pytest.raises(ValidationError):
        ro.ShotTruth(thermal=1.2)


def test_synth_is_seeded():
    a = ro.synth_shots(_truth(), 5)
    b = ro.synth_shots(_truth(), 5)
    np.testing.assert_array_equal(a.i, b.i)
    assert not np.array_equal(a.i, ro.synth_shots(_truth(), 6).i)


def test_excited_prep_ground_population():
    ds = ro.synth_shots(_truth(thermal=0.0, excited_prep_ground=0.2, n_shots=50_000), 2)
    p = ro.project_shots(ds)
    assert np.mean(p.excited < 0) == pytest.approx(0.2, abs=0.01)
    # the shifted excited centroid moves the midpoint towards the ground cloud
    assert np.mean(p.ground > 0) < 0.01


def test_shot_file_round_trip(tmp_path):
    sets = [ro.synth_shots(_truth(qubit_id=q, n_shots=200, t1_reference=t), s)
            for s, (q, t) in enumerate([("Q1", 80e-6), ("Q2", None)])]
    path = tmp_path / "shots.csv"
    ro.write_shots(sets, path)
    back = ro.read_shots(path)
    assert [d.qubit_id for d in back] == ["Q1", "Q2"]
    for a, b in zip(sets, back):
        np.testing.assert_array_equal(a.i, b.i)
        np.testing.assert_array_equal(a.prepared, b.prepared)
        assert a.t1_reference == b.t1_reference


def test_shot_file_errors(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("qubit_id,prepared,i_volts,q_volts\nQ1,ground,0.1,0.2\n")
    with pytest.raises(ParseError, match="sidecar"):
        ro.read_shots(path)
    ro.metadata_path(path).write_text('{"Q1": {"qubit_frequency": 4e9}}')
    with pytest.raises(ParseError, match="readout_duration"):
        ro.read_shots(path)
    path.write_text("qubit_id,prepared,i_volts,q_volts\nQ1,maybe,0.1,0.2\n")
    with pytest.raises(ParseError, match="prepared"):
        ro.read_shots(path)

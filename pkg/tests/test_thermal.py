import dataclasses
import math
from importlib import resources

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qpack_lab import thermal
from qpack_lab.errors import ParseError, QpackError, ValidationError

stage_db = st.fixed_dictionaries({s: st.floats(0, 40) for s in thermal.STAGES})


@given(stage_db, st.floats(1e-15, 1e-3))
def test_line_energy_conservation(atten, power):
    line = thermal.LineSpec("drive", 1, atten, signal_power_at_device=power)
    flow = thermal.line_flow(line)
    balance = flow.input_power - flow.delivered - math.fsum(flow.dissipated.values())
    assert abs(balance) <= 1e-12 * flow.input_power
    assert all(v >= 0 for v in flow.dissipated.values())


def test_single_attenuator():
    line = thermal.LineSpec("drive", 1, {"MXC": 20.0}, signal_power_at_device=10e-6)
    flow = thermal.line_flow(line)
    assert flow.input_power == pytest.approx(1e-3, rel=1e-14)
    assert flow.dissipated["MXC"] == pytest.approx(990e-6, rel=1e-14)
    assert flow.dissipated["CLD"] == 0.0


def test_line_validation():
    with pytest.raises(ValidationError, match="budget"):
        thermal.LineSpec("drive", 1, {"PT2": 20.0}, budget_db=60.0)
    with pytest.raises(ValidationError):
        thermal.LineSpec("drive", -1)
    with pytest.raises(ValidationError):
        thermal.LineSpec("drive", 1, {"XYZ": 1.0})
    with pytest.raises(ValueError):
        thermal.LineSpec("laser", 1)


def test_doubling_lines_doubles_line_loads():
    p = thermal.load_payloads()["qpu_mode"]
    base = thermal.aggregate_loads(p.lines)
    doubled = thermal.aggregate_loads([dataclasses.replace(ln, count=2 * ln.count)
                                       for ln in p.lines])
    for a, b in zip(base.stages, doubled.stages):
        assert b.passive == pytest.approx(2 * a.passive, rel=1e-14)
        assert b.dissipative == pytest.approx(2 * a.dissipative, rel=1e-14)


@given(st.floats(0, 20e-6), st.floats(0, 20e-6))
def test_temperature_monotone_in_load(a, b):
    curve = thermal.load_payloads()["qpu_mode"].stages[-1].curve
    lo, hi = sorted((a, b))
    assert thermal.solve_temperature(curve, lo) <= thermal.solve_temperature(curve, hi) + 1e-12


def test_solve_temperature_resolution():
    curve = thermal.QuadraticCurve.through(9.5e-3, 1.524e-6, 20e-3, 25e-6, 0.1)
    t = thermal.solve_temperature(curve, 25e-6)
    assert abs(t - 20e-3) <= thermal.TEMPERATURE_RESOLUTION
    assert thermal.solve_temperature(curve, 0.0) == curve.base_temperature
    with pytest.raises(QpackError, match="insufficient cooling"):
        thermal.solve_temperature(curve, 1.0)


def test_curve_validation():
    with pytest.raises(ValidationError):
        thermal.TableCurve((1.0, 2.0), (0.1, 0.2))
    with pytest.raises(ValidationError):
        thermal.TableCurve((1.0, 2.0, 1.5), (0.0, 0.2, 0.3))
    with pytest.raises(ValidationError):
        thermal.QuadraticCurve(-1.0, 0.0, 1.0)


def test_presets_mxc():
    payloads = thermal.load_payloads()
    qpu = payloads["qpu_mode"].evaluate().stage("MXC")
    ht = payloads["high_throughput"].evaluate().stage("MXC")
    assert qpu.passive == pytest.approx(752.9e-9, rel=1e-3)
    assert qpu.active_dissipative == pytest.approx(795.4e-9, rel=1e-3)
    assert ht.active_dissipative == pytest.approx(1.806e-6, rel=1e-3)
    assert qpu.temperature == pytest.approx(9.52e-3, abs=0.1e-3)
    assert ht.temperature == pytest.approx(10.2e-3, abs=0.1e-3)


def test_presets_upper_stages():
    qpu = thermal.load_payloads()["qpu_mode"].evaluate()
    assert qpu.stage("PT2").active_dissipative == pytest.approx(0.9936, rel=1e-3)
    assert qpu.stage("PT2").active == pytest.approx(56 * 17.6e-3, rel=1e-12)
    assert qpu.stage("CLD").active_dissipative == pytest.approx(79.6e-6, rel=2e-3)
    assert qpu.stage("PT1").temperature == pytest.approx(35.15, abs=1e-3)


def test_headroom():
    report = thermal.LoadReport(tuple(thermal.StageLoad(s, 3e-6 if s == "MXC" else 0.0, 0.0, 0.0)
                                      for s in thermal.STAGES))
    assert thermal.headroom(report, 25e-6) == pytest.approx(0.12, rel=1e-14)
    with pytest.raises(ValidationError):
        thermal.headroom(report, 0.0)


def test_contraction():
    table = thermal.load_contraction_table()
    assert thermal.differential_contraction(38.1e-3, table["Al"], table["sapphire"]) == \
        pytest.approx(127.635e-6, rel=1e-9)
    assert thermal.differential_contraction(1.0, 0.003, 0.003) == 0.0
    with pytest.raises(ValidationError):
        thermal.differential_contraction(1.0, 0.2, 0.0)


def test_parse_payload_errors():
    with pytest.raises(ParseError):
        thermal.parse_payloads("not = [toml")
    text = resources.files("qpack_lab.data").joinpath("thermal_presets.toml").read_text()
    with pytest.raises(ParseError, match="no \\[modes\\]"):
        thermal.parse_payloads(text.split("[modes.qpu_mode]")[0])
    bad = text.replace('{ kind = "pump", count = 56, input_power_dbm = -60.0 }',
                       '{ kind = "pump", count = 56, input_power_dbm = -60.0, '
                       'device_power_dbm = -90.0 }')
    with pytest.raises(ParseError, match="not both"):
        thermal.parse_payloads(bad)
    with pytest.raises(ParseError, match="unknown stage"):
        thermal.parse_payloads(text.replace("MXC = 80.9e-9", "MXD = 80.9e-9"))

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from qpack_lab import loss
from qpack_lab.core.fieldgrid import Boundary, FieldGrid
from qpack_lab.core.materials import MaterialTable, load_material_table
from qpack_lab.errors import MissingPropertyError, ParseError, QpackError, ValidationError
from qpack_lab.units import MU0

F = 4.5e9


@pytest.fixture(scope="module")
def tm():
    return oracles.pillbox(80)


# --- dielectric -------------------------------------------------------------

def test_whole_grid_participation_is_one(tm):
    assert loss.dielectric_participation(tm.field, "*") == pytest.approx(1.0, abs=1e-15)


def test_equal_halves_uniform_field():
    n = 10
    g = FieldGrid(1.0, 3, np.zeros((n, 3)), np.tile([0, 0, 1.0], (n, 1)), np.zeros((n, 3)),
                  np.ones(n), np.array(["a"] * 5 + ["b"] * 5, dtype=object), {"a": 2.0, "b": 2.0})
    assert loss.dielectric_participation(g, "a") == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("n", [10, 20, 40])
def test_slab_series_capacitor(n):
    p = loss.dielectric_participation(oracles.slab_grid(n), "slab")
    assert p == pytest.approx(oracles.slab_exact(), rel=1e-12)
    # frozen value of 0.03 / 0.73
    assert p == pytest.approx(0.0410958904109589, rel=1e-12)


def test_unknown_region_and_permittivity_mismatch(tm):
    with pytest.raises(QpackError, match="unknown region"):
        loss.dielectric_participation(tm.field, "sapphire")
    table = MaterialTable({"cavity": {"relative_permittivity": 11.5}})
    with pytest.raises(ValidationError, match="disagrees"):
        loss.dielectric_participation(tm.field, "cavity", table)


# --- surface dielectric -----------------------------------------------------

def test_floor_oxide_matches_slab_formula(tm):
    p = loss.surface_dielectric_participation(tm.field, "floor", oracles.OXIDE_T, oracles.OXIDE_EPS)
    assert p == pytest.approx(oracles.floor_oxide_exact(), rel=1e-12)


def test_oxide_conventions(tm):
    g = tm.field
    base = {c: loss.surface_dielectric_participation(g, "floor", 3e-9, 10, c)
            for c in ("metal_oxide", "in_layer", "inverse_square")}
    doubled = {c: loss.surface_dielectric_participation(g, "floor", 3e-9, 20, c)
               for c in base}
    assert doubled["inverse_square"] == pytest.approx(base["inverse_square"] / 4, rel=1e-14)
    assert doubled["metal_oxide"] == pytest.approx(base["metal_oxide"] / 2, rel=1e-14)
    assert doubled["in_layer"] == pytest.approx(base["in_layer"] * 2, rel=1e-14)
    # vacuum side: metal_oxide exceeds inverse_square by eps_side * eps_ox
    assert base["metal_oxide"] == pytest.approx(base["inverse_square"] * 10, rel=1e-14)
    with pytest.raises(ValidationError):
        loss.surface_dielectric_participation(g, "floor", 3e-9, 10, "bogus")


@given(st.floats(1e-12, 1e-8))
@settings(max_examples=20, deadline=None)
def test_oxide_linear_in_thickness(tm, t):
    p1 = loss.surface_dielectric_participation(tm.field, "floor", t, 10)
    assert p1 / t == pytest.approx(oracles.floor_oxide_exact(t=1.0), rel=1e-12)


def test_oxide_errors(tm):
    with pytest.raises(ValidationError):
        loss.surface_dielectric_participation(tm.field, "floor", 0.0, 10)
    with pytest.raises(QpackError, match="absent"):
        loss.surface_dielectric_participation(tm.field, "ceiling", 1e-9, 10)


# --- conductor --------------------------------------------------------------

@pytest.mark.parametrize("n,bound", [(40, 3e-3), (80, 1.6e-3), (160, 8e-4)])
def test_conductor_pillbox_oracle(n, bound):
    assert oracles.pillbox_errors(n)["conductor"] < bound


def test_conductor_linear_in_lambda(tm):
    p1 = loss.conductor_participation(tm.field, "*", 50e-9)
    p2 = loss.conductor_participation(tm.field, "*", 100e-9)
    assert p2 == pytest.approx(2 * p1, rel=1e-14)


def _normal_h_grid():
    n = 4
    h = np.zeros((n, 3), dtype=complex)
    h[:, 2] = 1.0
    b = Boundary(np.arange(n), np.tile([0, 0, 1.0], (n, 1)), np.ones(n),
                 np.array(["lid"] * n, dtype=object),
                 np.column_stack([np.arange(n), np.zeros(n), np.ones(n)]).astype(float))
    return FieldGrid(1.0, 3, np.zeros((n, 3)), np.zeros((n, 3)), h, np.ones(n),
                     np.array(["v"] * n, dtype=object), {"v": 1.0}, b)


def test_normal_h_gives_zero():
    g = _normal_h_grid()
    assert loss.conductor_participation(g, "lid", 50e-9) == 0.0
    # a straight seam along x sees only H_z, which is not along the path
    assert loss.seam_admittance(g, [0, 1, 2, 3], F) == 0.0


# --- seams ------------------------------------------------------------------

@pytest.mark.parametrize("n,bound", [(40, 3e-2), (80, 1.6e-2), (160, 8e-3)])
def test_wall_seam_oracle(n, bound):
    assert oracles.pillbox_errors(n)["seam"] < bound


def test_seam_frequency_scaling(tm):
    (_, path), = loss.surface_loops(tm.field, "wall")
    y1 = loss.seam_admittance(tm.field, path, F, closed=True)
    y2 = loss.seam_admittance(tm.field, path, 2 * F, closed=True)
    assert y2 == pytest.approx(y1 / 2, rel=1e-14)


def test_seam_errors(tm):
    with pytest.raises(ValidationError):
        loss.seam_admittance(tm.field, [0], F)
    with pytest.raises(ValidationError):
        loss.seam_admittance(tm.field, [0, 1], 0.0)


def test_rescaling_invariance(tm):
    g, big = tm.field, tm.field.scaled(7.0)
    (_, path), = loss.surface_loops(g, "wall")
    pairs = [
        (loss.dielectric_participation(g, "*"), loss.dielectric_participation(big, "*")),
        (loss.surface_dielectric_participation(g, "lid", 3e-9, 10),
         loss.surface_dielectric_participation(big, "lid", 3e-9, 10)),
        (loss.conductor_participation(g, "wall", 50e-9),
         loss.conductor_participation(big, "wall", 50e-9)),
        (loss.seam_admittance(g, path, F, True), loss.seam_admittance(big, path, F, True)),
    ]
    for a, b in pairs:
        assert b == pytest.approx(a, rel=1e-13)


# --- Q arithmetic -----------------------------------------------------------

def test_q_examples():
    table = load_material_table()
    rogers = loss.LossChannel("bulk_dielectric", "pcb", 1.0, "Rogers")
    assert loss.q_from_channel(rogers, table, F) == pytest.approx(1428.5714285714, rel=1e-10)
    seam = loss.LossChannel("seam", "wall", 700.0, "Al/Al")
    assert loss.q_from_channel(seam, table, F) == pytest.approx(1.0, rel=1e-14)
    cond = loss.LossChannel("conductor", "wall", 1e-9, "Al")
    q = loss.q_from_channel(cond, table, F)
    assert q == pytest.approx(2 * math.pi * F * MU0 * 50e-9 / (3e-6 * 1e-9), rel=1e-12)
    assert q == pytest.approx(5.9218e11, rel=1e-4)


def test_q_missing_property():
    with pytest.raises(MissingPropertyError):
        loss.q_from_channel(loss.LossChannel("surface_dielectric", "x", 1e-4, "Ag"),
                            load_material_table(), F)


@given(st.floats(1e-6, 1e-1), st.floats(1.0, 10.0))
def test_q_monotone_in_loss(tan, factor):
    ch = loss.LossChannel("bulk_dielectric", "x", 0.5, "m")
    lo = loss.q_from_channel(ch, MaterialTable({"m": {"loss_tangent": tan}}), F)
    hi = loss.q_from_channel(ch, MaterialTable({"m": {"loss_tangent": tan * factor}}), F)
    assert hi <= lo


def test_budget_combination():
    table = MaterialTable({"m": {"loss_tangent": 1e-6}})
    ch = loss.LossChannel("bulk_dielectric", "x", 1.0, "m")
    budget = loss.assemble_budget([ch, ch], table, F)
    assert budget.total_q == pytest.approx(5e5, rel=1e-14)
    assert budget.t1_limit == pytest.approx(5e5 / (2 * math.pi * F), rel=1e-14)
    with pytest.raises(ValidationError):
        loss.assemble_budget([], table, F)


@given(st.lists(st.floats(1e-9, 1.0), min_size=1, max_size=6))
def test_budget_total_below_min(ps):
    table = MaterialTable({"m": {"loss_tangent": 1e-5}})
    chans = [loss.LossChannel("bulk_dielectric", f"c{i}", p, "m") for i, p in enumerate(ps)]
    budget = loss.assemble_budget(chans, table, F)
    assert budget.total_q <= min(q for _, q in budget.channels) * (1 + 1e-12)


def test_unbudgeted_channels_carried():
    table = load_material_table()
    chans = [loss.LossChannel("seam", "pillar_*", 0.1, "Al/In"),
             loss.LossChannel("seam", "wall", 0.5, "Al/Al")]
    budget = loss.assemble_budget(chans, table, F)
    assert len(budget.channels) == 1 and len(budget.unbudgeted) == 1
    rows = loss.budget_rows(budget)
    assert rows[1]["status"].startswith("unbudgeted")
    assert budget.total_q == pytest.approx(1400.0)


def test_t1_arithmetic():
    assert loss.t1_from_q(5e8, F) == pytest.approx(17.68e-3, rel=1e-3)
    assert loss.t1_from_q(2.8e6, F) == pytest.approx(99.03e-6, rel=1e-3)
    y = 3e3 / (2 * math.pi * F * 100e-6)
    assert y == pytest.approx(1.061e-3, rel=1e-3)
    assert loss.seam_bound_from_t1(100e-6, F, y) == pytest.approx(3e3, rel=1e-14)
    assert loss.seam_bound_from_t1(200e-6, F, y) == pytest.approx(6e3, rel=1e-14)
    with pytest.raises(ValidationError):
        loss.seam_bound_from_t1(0.0, F, y)


def test_t1_bound_inverse_frequency():
    table = MaterialTable({"m": {"loss_tangent": 1 / 2.8e6}})
    ch = [loss.LossChannel("bulk_dielectric", "x", 1.0, "m")]
    (f1, t1), (f2, t2) = loss.t1_bound([4.5e9, 9e9], ch, table)
    assert t2 == pytest.approx(t1 / 2, rel=1e-14)
    with pytest.raises(ValidationError):
        loss.t1_bound([], ch, table)


# --- channel files ----------------------------------------------------------

def test_parse_channels():
    specs = loss.parse_channels("conductor wall Al lambda=80_nm\n# c\nseam pillar_* Al/In\n")
    assert specs[0].kind is loss.ChannelKind.CONDUCTOR and specs[0].options == {"lambda": "80_nm"}
    assert specs[1].label == "pillar_*"
    for bad in ("conductor wall", "laser wall Al", "conductor wall Al lambda"):
        with pytest.raises(ParseError):
            loss.parse_channels(bad)


def test_evaluate_channels_options(tm):
    table = load_material_table()
    specs = loss.parse_channels("conductor wall Al lambda=100_nm\nconductor wall Al\n"
                                "surface_dielectric floor Al thickness=6_nm\n"
                                "seam wall Al/Al\n")
    c = loss.evaluate_channels(tm.field, specs, table, tm.frequency)
    assert c[0].participation == pytest.approx(2 * c[1].participation, rel=1e-14)
    assert c[2].participation == pytest.approx(2 * oracles.floor_oxide_exact(), rel=1e-12)
    assert c[3].participation == pytest.approx(oracles.wall_seam_exact(tm.frequency), rel=2e-2)

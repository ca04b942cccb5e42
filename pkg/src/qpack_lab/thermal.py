"""Dilution-refrigerator heat loads for a wiring payload, stage temperatures
from configured cooling curves, and differential thermal contraction.

Cooling curves and passive conduction values are configuration calibrated
to target operating points, not first-principles predictions.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConvergenceError, ParseError, QpackError, ValidationError
from .units import dbm_to_watts

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

STAGES = ("PT1", "PT2", "STL", "CLD", "MXC")
TEMPERATURE_RESOLUTION = 1e-4  # kelvin


class LineKind(str, enum.Enum):
    DRIVE = "drive"
    READOUT_IN = "readout_in"
    READOUT_OUT = "readout_out"
    PUMP = "pump"


def _check_stage(name: str) -> str:
    if name not in STAGES:
        raise ValidationError(f"unknown stage {name!r}; expected one of {', '.join(STAGES)}")
    return name


# --- cooling curves ---------------------------------------------------------

@dataclass(frozen=True)
class QuadraticCurve:
    """Cooling power ``a * (T^2 - T0^2)`` above the base temperature T0."""

    coefficient: float
    base_temperature: float
    max_temperature: float

    def __post_init__(self):
        if not (self.coefficient > 0 and 0 <= self.base_temperature < self.max_temperature):
            raise ValidationError("quadratic curve needs a > 0 and 0 <= T0 < T_max")

    def power(self, t: float) -> float:
        return self.coefficient * (t * t - self.base_temperature ** 2)

    @classmethod
    def through(cls, t1: float, p1: float, t2: float, p2: float, max_temperature: float):
        """Curve passing through two (temperature, power) operating points."""
        a = (p2 - p1) / (t2 * t2 - t1 * t1)
        return cls(a, math.sqrt(t1 * t1 - p1 / a), max_temperature)


@dataclass(frozen=True)
class TableCurve:
    """Piecewise-linear cooling power between tabulated points."""

    temperatures: tuple[float, ...]
    powers: tuple[float, ...]

    def __post_init__(self):
        t = np.asarray(self.temperatures, dtype=float)
        p = np.asarray(self.powers, dtype=float)
        if len(t) < 2 or t.shape != p.shape:
            raise ValidationError("tabulated curve needs matching lists of >= 2 points")
        if np.any(np.diff(t) <= 0) or np.any(np.diff(p) <= 0):
            raise ValidationError("cooling curve must be strictly increasing")
        if p[0] != 0:
            raise ValidationError("tabulated curve must start at zero power (base temperature)")

    @property
    def base_temperature(self) -> float:
        return self.temperatures[0]

    @property
    def max_temperature(self) -> float:
        return self.temperatures[-1]

    def power(self, t: float) -> float:
        return float(np.interp(t, self.temperatures, self.powers))


@dataclass(frozen=True)
class Stage:
    name: str
    curve: QuadraticCurve | TableCurve

    def __post_init__(self):
        _check_stage(self.name)

    @property
    def base_temperature(self) -> float:
        return self.curve.base_temperature


# --- lines and loads --------------------------------------------------------

@dataclass(frozen=True)
class LineSpec:
    kind: LineKind
    count: int
    attenuation: Mapping[str, float] = field(default_factory=dict)  # dB per stage
    passive: Mapping[str, float] = field(default_factory=dict)  # W per line per stage
    signal_power_at_device: float = 0.0  # W per line, continuous equivalent
    budget_db: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", LineKind(self.kind))
        if self.count < 0 or int(self.count) != self.count:
            raise ValidationError("line count must be a non-negative integer")
        for stage, a in self.attenuation.items():
            _check_stage(stage)
            if not a >= 0:
                raise ValidationError(f"{self.kind.value}: attenuation at {stage} must be >= 0")
        for stage, p in self.passive.items():
            _check_stage(stage)
            if not p >= 0:
                raise ValidationError(f"{self.kind.value}: passive load at {stage} must be >= 0")
        if not self.signal_power_at_device >= 0:
            raise ValidationError("signal power must be >= 0")
        if self.budget_db is not None:
            total = sum(self.attenuation.values())
            if not math.isclose(total, self.budget_db, abs_tol=1e-9):
                raise ValidationError(
                    f"{self.kind.value}: attenuation schedule sums to {total} dB, "
                    f"budget is {self.budget_db} dB")

    @property
    def total_attenuation_db(self) -> float:
        return float(sum(self.attenuation.values()))


@dataclass(frozen=True)
class LineFlow:
    input_power: float
    delivered: float
    dissipated: Mapping[str, float]


def line_flow(line: LineSpec) -> LineFlow:
    """Per-line power bookkeeping, working upward from the device.

    Each attenuator passes ``10**(-A/10)`` of its incoming power; the rest
    is dumped at its stage.
    """
    out = line.signal_power_at_device
    dissipated = {s: 0.0 for s in STAGES}
    for stage in reversed(STAGES):
        a = line.attenuation.get(stage, 0.0)
        incoming = out * 10.0 ** (a / 10.0)
        dissipated[stage] = incoming - out
        out = incoming
    return LineFlow(out, line.signal_power_at_device, dissipated)


def dissipative_loads(lines: Sequence[LineSpec]) -> dict[str, float]:
    totals = {s: 0.0 for s in STAGES}
    for line in lines:
        flow = line_flow(line)
        for s in STAGES:
            totals[s] += line.count * flow.dissipated[s]
    return totals


@dataclass(frozen=True)
class ActiveComponent:
    stage: str
    power: float
    count: int = 1
    label: str = ""

    def __post_init__(self):
        _check_stage(self.stage)
        if not self.power >= 0 or self.count < 0:
            raise ValidationError("active power and count must be >= 0")


@dataclass(frozen=True)
class StageLoad:
    name: str
    passive: float
    active: float
    dissipative: float
    temperature: float | None = None

    @property
    def total(self) -> float:
        return self.passive + self.active + self.dissipative

    @property
    def active_dissipative(self) -> float:
        return self.active + self.dissipative


@dataclass(frozen=True)
class LoadReport:
    stages: tuple[StageLoad, ...]

    def stage(self, name: str) -> StageLoad:
        _check_stage(name)
        return next(s for s in self.stages if s.name == name)


def aggregate_loads(lines: Sequence[LineSpec], active: Sequence[ActiveComponent] = (),
                    structure: Mapping[str, float] | None = None) -> LoadReport:
    """Per-stage passive, active and dissipative sums.

    ``structure`` holds passive loads not tied to any line (supports,
    mechanical interconnects).
    """
    passive = {s: 0.0 for s in STAGES}
    for stage, p in (structure or {}).items():
        passive[_check_stage(stage)] += p
    for line in lines:
        for stage, p in line.passive.items():
            passive[stage] += line.count * p
    act = {s: 0.0 for s in STAGES}
    for comp in active:
        act[comp.stage] += comp.count * comp.power
    diss = dissipative_loads(lines)
    return LoadReport(tuple(StageLoad(s, passive[s], act[s], diss[s]) for s in STAGES))


def solve_temperature(curve, load: float) -> float:
    """Bisection on the cooling curve to within 0.1 mK."""
    if load < 0:
        raise ValidationError("load must be >= 0")
    lo, hi = curve.base_temperature, curve.max_temperature
    if load == 0:
        return lo
    if curve.power(hi) < load:
        raise QpackError(f"insufficient cooling power: load {load:.4g} W exceeds "
                         f"{curve.power(hi):.4g} W available at {hi:.4g} K")
    for _ in range(200):
        if hi - lo <= TEMPERATURE_RESOLUTION / 8:
            break
        mid = 0.5 * (lo + hi)
        if curve.power(mid) < load:
            lo = mid
        else:
            hi = mid
    else:
        raise ConvergenceError("temperature bisection did not converge")
    return 0.5 * (lo + hi)


def solve_temperatures(report: LoadReport, stages: Sequence[Stage]) -> LoadReport:
    """Each stage solved independently against its own curve."""
    curves = {s.name: s.curve for s in stages}
    out = []
    for load in report.stages:
        if load.name not in curves:
            raise ValidationError(f"no cooling curve for stage {load.name}")
        out.append(StageLoad(load.name, load.passive, load.active, load.dissipative,
                             solve_temperature(curves[load.name], load.total)))
    return LoadReport(tuple(out))


def headroom(report: LoadReport, budget: float) -> float:
    """MXC total load as a fraction of a cooling budget."""
    if not budget > 0:
        raise ValidationError("budget must be > 0")
    return report.stage("MXC").total / budget


def differential_contraction(radius: float, contraction_a: float, contraction_b: float) -> float:
    """Relative radial travel between two materials cooled together."""
    if radius < 0:
        raise ValidationError("radius must be >= 0")
    for c in (contraction_a, contraction_b):
        if not 0 <= c <= 0.05:
            raise ValidationError("integrated contraction must lie in [0, 0.05]")
    return abs(contraction_a - contraction_b) * radius


# --- payload files ----------------------------------------------------------

@dataclass(frozen=True)
class Payload:
    name: str
    lines: tuple[LineSpec, ...]
    active: tuple[ActiveComponent, ...]
    structure: Mapping[str, float]
    stages: tuple[Stage, ...]
    description: str = ""

    def evaluate(self) -> LoadReport:
        return solve_temperatures(
            aggregate_loads(self.lines, self.active, self.structure), self.stages)


def _stage_map(table: Mapping, where: str) -> dict[str, float]:
    if not isinstance(table, Mapping):
        raise ParseError(f"{where}: expected a stage table")
    out = {}
    for k, v in table.items():
        if k not in STAGES:
            raise ParseError(f"{where}: unknown stage {k!r}")
        out[k] = float(v)
    return out


def _curve(spec: Mapping, where: str):
    kind = spec.get("curve")
    try:
        if kind == "quadratic":
            return QuadraticCurve(float(spec["coefficient_w_per_k2"]),
                                  float(spec["base_temperature_k"]),
                                  float(spec["max_temperature_k"]))
        if kind == "table":
            return TableCurve(tuple(map(float, spec["temperature_k"])),
                              tuple(map(float, spec["power_w"])))
    except KeyError as exc:
        raise ParseError(f"{where}: missing key {exc.args[0]}") from None
    raise ParseError(f"{where}: curve must be 'quadratic' or 'table'")


def parse_payloads(text: str, source: str = "<string>") -> dict[str, Payload]:
    """Read a payload file holding stage curves, passive table, attenuation
    schedules and one or more named modes."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{source}: {exc}") from None
    try:
        stages = tuple(Stage(name, _curve(doc["stages"][name], f"{source}: stages.{name}"))
                       for name in STAGES)
    except KeyError as exc:
        raise ParseError(f"{source}: missing stage curve {exc.args[0]}") from None
    passive = doc.get("passive", {})
    structure = _stage_map(passive.get("structure", {}), f"{source}: passive.structure")
    schedules = doc.get("attenuation", {})
    budgets = doc.get("budget_db", {})
    modes = doc.get("modes", {})
    if not modes:
        raise ParseError(f"{source}: no [modes] defined")
    out = {}
    for mode, body in modes.items():
        lines = []
        for k, ln in enumerate(body.get("lines", [])):
            where = f"{source}: modes.{mode}.lines[{k}]"
            try:
                kind = LineKind(ln["kind"])
            except (KeyError, ValueError):
                raise ParseError(f"{where}: bad or missing kind") from None
            atten = _stage_map(ln.get("attenuation", schedules.get(kind.value, {})), where)
            total_db = sum(atten.values())
            if "device_power_dbm" in ln and "input_power_dbm" in ln:
                raise ParseError(f"{where}: give device_power_dbm or input_power_dbm, not both")
            if "device_power_dbm" in ln:
                power = dbm_to_watts(float(ln["device_power_dbm"])) * ln.get("tones", 1)
            elif "input_power_dbm" in ln:
                power = (dbm_to_watts(float(ln["input_power_dbm"])) * ln.get("tones", 1)
                         * 10.0 ** (-total_db / 10.0))
            else:
                power = 0.0
            budget = ln.get("budget_db", budgets.get(kind.value))
            lines.append(LineSpec(
                kind, int(ln.get("count", 0)), atten,
                _stage_map(ln.get("passive", passive.get(kind.value, {})), where),
                power, None if budget is None else float(budget)))
        active = tuple(
            ActiveComponent(a["stage"], float(a["power_w"]), int(a.get("count", 1)),
                            a.get("label", ""))
            for a in body.get("active", []))
        out[mode] = Payload(mode, tuple(lines), active, structure, stages,
                            body.get("description", ""))
    return out


def load_payloads(path: str | Path | None = None) -> dict[str, Payload]:
    """Payload modes from ``path``; None loads the bundled presets."""
    if path is None:
        from importlib import resources

        text = resources.files("qpack_lab.data").joinpath("thermal_presets.toml").read_text()
        return parse_payloads(text, "thermal_presets.toml")
    path = Path(path)
    return parse_payloads(path.read_text(), str(path))


def load_contraction_table(path: str | Path | None = None) -> dict[str, float]:
    """Integrated contraction (room temperature to 4 K) per material, as a fraction."""
    if path is None:
        from importlib import resources

        text = resources.files("qpack_lab.data").joinpath("contraction.toml").read_text()
        source = "contraction.toml"
    else:
        text, source = Path(path).read_text(), str(path)
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{source}: {exc}") from None
    table = {k: float(v) / 100.0 for k, v in doc.get("contraction_percent", {}).items()}
    if not table:
        raise ParseError(f"{source}: no [contraction_percent] entries")
    return table


# passive loads, the active/dissipative split and cooling curves come from preset calibration
CALIBRATION_BASIS = "calibrated: passive_w, active_w split, temperature_k"


def report_rows(report: LoadReport) -> list[dict]:
    return [{"stage": s.name, "passive_w": s.passive, "active_w": s.active,
             "dissipative_w": s.dissipative, "active_dissipative_w": s.active_dissipative,
             "total_w": s.total, "temperature_k": s.temperature, "basis": CALIBRATION_BASIS}
            for s in report.stages]

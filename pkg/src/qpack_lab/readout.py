"""Single-shot readout analysis: IQ projection, double-Gaussian fits,
error budgets and effective qubit temperature.

Projected coordinates put the ground-state cloud on the negative side and
the midpoint between the two preparation centroids at 0 V, which is also
the state discriminator.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.special import erfc, ndtr

from .errors import FitError, ParseError, ValidationError
from .units import HBAR, K_B, angular

GROUND, EXCITED = 0, 1
MIN_SHOTS = 100
MIN_BINS = 64
MAX_BINS = 2048


@dataclass(frozen=True)
class IQDataset:
    qubit_id: str
    prepared: np.ndarray  # 0 = ground, 1 = excited
    i: np.ndarray
    q: np.ndarray
    readout_duration: float
    qubit_frequency: float
    t1_reference: float | None = None

    def __post_init__(self):
        prepared = np.asarray(self.prepared, dtype=np.int8)
        i = np.asarray(self.i, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if not (prepared.shape == i.shape == q.shape) or prepared.ndim != 1:
            raise ValidationError(f"{self.qubit_id}: shot columns differ in length")
        if not np.all(np.isin(prepared, (GROUND, EXCITED))):
            raise ValidationError(f"{self.qubit_id}: prepared state must be ground or excited")
        if not (np.all(np.isfinite(i)) and np.all(np.isfinite(q))):
            raise ValidationError(f"{self.qubit_id}: non-finite voltages")
        if not self.readout_duration > 0 or not self.qubit_frequency > 0:
            raise ValidationError(f"{self.qubit_id}: readout duration and frequency must be > 0")
        if self.t1_reference is not None and not self.t1_reference > 0:
            raise ValidationError(f"{self.qubit_id}: t1_reference must be > 0")
        for name, arr in (("prepared", prepared), ("i", i), ("q", q)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def points(self, state: int) -> np.ndarray:
        sel = self.prepared == state
        return np.column_stack([self.i[sel], self.q[sel]])


@dataclass(frozen=True)
class Projection:
    ground: np.ndarray
    excited: np.ndarray
    origin: tuple[float, float]
    direction: tuple[float, float]


@dataclass(frozen=True)
class DoubleGaussianFit:
    sigma: float
    center_g: float
    center_e: float
    a_gg: float
    a_ge: float
    a_eg: float
    a_ee: float
    stderr: Mapping[str, float] = field(default_factory=dict)
    reduced_chi2: float = math.nan
    n_bins: int = 0
    discriminator: float = 0.0

    PARAMS = ("sigma", "center_g", "center_e", "a_gg", "a_ge", "a_eg", "a_ee")

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError("sigma must be > 0")
        if not self.center_g < self.center_e:
            raise ValidationError("ground center must lie below excited center")
        amps = (self.a_gg, self.a_ge, self.a_eg, self.a_ee)
        if not all(math.isfinite(a) and a >= 0 for a in amps):
            raise ValidationError("amplitudes must be finite and >= 0")

    def values(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in self.PARAMS}


@dataclass(frozen=True)
class ReadoutBudget:
    measured_error: float
    thermal: float
    overlap: float
    decay: float

    @property
    def predicted(self) -> float:
        return self.thermal + self.overlap + self.decay

    @property
    def residual(self) -> float:
        return self.measured_error - self.predicted


# --- projection and fitting -------------------------------------------------

def project_shots(dataset: IQDataset) -> Projection:
    """Project shots onto the line through the two preparation centroids."""
    g = dataset.points(GROUND)
    e = dataset.points(EXCITED)
    if len(g) == 0 or len(e) == 0:
        raise ValidationError(f"{dataset.qubit_id}: both preparations are required")
    cg, ce = g.mean(axis=0), e.mean(axis=0)
    d = ce - cg
    norm = float(np.hypot(*d))
    if not norm > 1e-12 * max(1.0, float(np.abs(g).max()), float(np.abs(e).max())):
        raise ValidationError(f"{dataset.qubit_id}: coincident centroids")
    u = d / norm
    mid = 0.5 * (cg + ce)
    return Projection((g - mid) @ u, (e - mid) @ u, (float(mid[0]), float(mid[1])),
                      (float(u[0]), float(u[1])))


def _bin_edges(samples: np.ndarray) -> np.ndarray:
    q75, q25 = np.percentile(samples, [75, 25])
    lo, hi = float(samples.min()), float(samples.max())
    width = 2.0 * (q75 - q25) / len(samples) ** (1 / 3)
    n = MIN_BINS if not width > 0 else int(np.clip(math.ceil((hi - lo) / width), MIN_BINS, MAX_BINS))
    pad = 1e-9 * max(hi - lo, 1.0)
    return np.linspace(lo - pad, hi + pad, n + 1)


def _mad_sigma(x: np.ndarray) -> float:
    return 1.4826 * float(np.median(np.abs(x - np.median(x))))


def fit_double_gaussian(ground: np.ndarray, excited: np.ndarray,
                        reweight_rounds: int = 3) -> DoubleGaussianFit:
    """Joint binned least-squares fit of two shared-sigma Gaussian mixtures.

    Amplitudes are shot fractions: the expected count in a bin is
    ``n_prep * (a_xg * P_g(bin) + a_xe * P_e(bin))``.  Residuals are
    weighted by the Poisson variance of the previous round's model.
    """
    ground = np.asarray(ground, dtype=float)
    excited = np.asarray(excited, dtype=float)
    if len(ground) < MIN_SHOTS or len(excited) < MIN_SHOTS:
        raise FitError(f"need at least {MIN_SHOTS} shots per preparation")
    # work in units of the initial sigma estimate so parameters are O(1)
    s0 = 0.5 * (_mad_sigma(ground) + _mad_sigma(excited))
    if not s0 > 0:
        s0 = float(np.std(np.concatenate([ground, excited]))) or 1.0
    xg, xe = ground / s0, excited / s0
    edges = _bin_edges(np.concatenate([xg, xe]))
    hg = np.histogram(xg, edges)[0].astype(float)
    he = np.histogram(xe, edges)[0].astype(float)
    ng, ne = len(xg), len(xe)

    def model(p):
        sigma, cg, ce, agg, age, aeg, aee = p
        pg = np.diff(ndtr((edges - cg) / sigma))
        pe = np.diff(ndtr((edges - ce) / sigma))
        return ng * (agg * pg + age * pe), ne * (aeg * pg + aee * pe)

    mg, me = np.median(xg), np.median(xe)
    p0 = np.array([1.0, min(mg, me - 1e-3), max(me, mg + 1e-3), 1.0, 0.0, 0.0, 1.0])
    lower = [1e-6, -np.inf, -np.inf, 0, 0, 0, 0]
    upper = [np.inf] * 7
    wg = np.sqrt(np.maximum(hg, 1.0))
    we = np.sqrt(np.maximum(he, 1.0))
    result = None
    for _ in range(max(1, reweight_rounds)):
        def resid(p, wg=wg, we=we):
            eg, ee = model(p)
            return np.concatenate([(eg - hg) / wg, (ee - he) / we])

        result = least_squares(resid, p0, bounds=(lower, upper), x_scale="jac",
                               xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=2000)
        if not result.success:
            raise FitError(f"double-Gaussian fit did not converge: {result.message}")
        p0 = result.x
        eg, ee = model(p0)
        wg = np.sqrt(np.maximum(eg, 1.0))
        we = np.sqrt(np.maximum(ee, 1.0))
    sigma, cg, ce, agg, age, aeg, aee = result.x
    if not cg < ce:
        raise FitError("fit swapped the two centers")
    jac = result.jac
    try:
        cov = np.linalg.inv(jac.T @ jac)
        se = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        se = np.full(7, np.nan)
    scale = np.array([s0, s0, s0, 1, 1, 1, 1])
    dof = max(1, 2 * (len(edges) - 1) - 7)
    return DoubleGaussianFit(
        sigma * s0, cg * s0, ce * s0, agg, age, aeg, aee,
        stderr=dict(zip(DoubleGaussianFit.PARAMS, (se * scale).tolist())),
        reduced_chi2=float(2 * result.cost / dof), n_bins=len(edges) - 1)


# --- errors and budget ------------------------------------------------------

def readout_error(ground: np.ndarray, excited: np.ndarray, threshold: float = 0.0) -> float:
    """Average misassignment counted on raw projected shots."""
    ground = np.asarray(ground)
    excited = np.asarray(excited)
    if len(ground) == 0 or len(excited) == 0:
        raise ValidationError("empty sample set")
    return 0.5 * (np.count_nonzero(ground > threshold) / len(ground)
                  + np.count_nonzero(excited < threshold) / len(excited))


def optimal_threshold(ground: np.ndarray, excited: np.ndarray) -> float:
    """Threshold minimizing the averaged raw misassignment (not used for the
    fixed-midpoint numbers)."""
    g = np.sort(np.asarray(ground, dtype=float))
    e = np.sort(np.asarray(excited, dtype=float))
    cand = np.concatenate([g, e])
    err_g = 1.0 - np.searchsorted(g, cand, side="right") / len(g)
    err_e = np.searchsorted(e, cand, side="left") / len(e)
    return float(cand[np.argmin(err_g + err_e)])


def overlap_error(sigma: float, center_g: float, center_e: float) -> float:
    """Mass of one Gaussian beyond the midpoint of the two centers."""
    if not sigma > 0:
        raise ValidationError("sigma must be > 0")
    return 0.5 * float(erfc(abs(center_e - center_g) / (2 * math.sqrt(2) * sigma)))


def overlap_error_numeric(sigma: float, center_g: float, center_e: float) -> float:
    """Same quantity by adaptive quadrature of the ground Gaussian's tail."""
    from scipy.integrate import quad

    mid = 0.5 * (center_g + center_e)
    z = abs(mid - center_g) / sigma
    val, _ = quad(lambda t: math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi), z, np.inf,
                  epsabs=1e-15, epsrel=1e-13)
    return val


def decay_error(readout_duration: float, t1: float) -> float:
    if not (readout_duration > 0 and t1 > 0):
        raise ValidationError("readout duration and T1 must be > 0")
    return readout_duration / (4.0 * t1)


def thermal_fraction(fit: DoubleGaussianFit) -> float:
    total = fit.a_gg + fit.a_ge
    if not total > 0:
        raise ValidationError("ground-prep amplitudes are both zero")
    return fit.a_ge / total


def error_budget(projection: Projection, fit: DoubleGaussianFit, readout_duration: float,
                 t1: float | None, halve_thermal: bool = True) -> ReadoutBudget:
    if t1 is None:
        raise ValidationError("error budget needs a T1 value")
    thermal = thermal_fraction(fit)
    if halve_thermal:
        thermal *= 0.5
    return ReadoutBudget(
        readout_error(projection.ground, projection.excited, fit.discriminator),
        thermal,
        overlap_error(fit.sigma, fit.center_g, fit.center_e),
        decay_error(readout_duration, t1))


def effective_temperature(fit: DoubleGaussianFit, qubit_frequency: float) -> float:
    """Boltzmann temperature from the ground-prep amplitudes.

    Returns 0.0 when no excited population is resolved (below the
    measurement floor).  Equal or inverted populations raise.
    """
    if not qubit_frequency > 0:
        raise ValidationError("qubit frequency must be > 0")
    if not fit.a_gg > 0:
        raise ValidationError("a_gg must be > 0")
    if fit.a_ge == 0:
        return 0.0
    if fit.a_ge >= fit.a_gg:
        raise ValidationError("population inversion: a_ge >= a_gg has no thermal interpretation")
    return HBAR * angular(qubit_frequency) / (K_B * math.log(fit.a_gg / fit.a_ge))


# --- per-qubit analysis -----------------------------------------------------

@dataclass(frozen=True)
class ReadoutResult:
    qubit_id: str
    fit: DoubleGaussianFit
    budget: ReadoutBudget | None
    temperature: float | None
    note: str = ""


def analyze(dataset: IQDataset, t1: float | None = None,
            halve_thermal: bool = True) -> ReadoutResult:
    proj = project_shots(dataset)
    fit = fit_double_gaussian(proj.ground, proj.excited)
    t1 = t1 if t1 is not None else dataset.t1_reference
    budget = None if t1 is None else error_budget(
        proj, fit, dataset.readout_duration, t1, halve_thermal)
    note = ""
    try:
        temp = effective_temperature(fit, dataset.qubit_frequency)
        if temp == 0.0:
            note = "excited population below measurement floor"
    except ValidationError as exc:
        temp, note = None, str(exc)
    if budget is None:
        note = "; ".join(filter(None, [note, "no T1: budget skipped"]))
    return ReadoutResult(dataset.qubit_id, fit, budget, temp, note)


def result_row(res: ReadoutResult) -> dict:
    row = {"qubit_id": res.qubit_id}
    row.update(res.fit.values())
    b = res.budget
    for key in ("measured_error", "thermal", "overlap", "decay", "residual"):
        row[key] = None if b is None else getattr(b, key)
    row["t_eff_k"] = res.temperature
    row["reduced_chi2"] = res.fit.reduced_chi2
    row["note"] = res.note
    return row


# --- synthetic shots --------------------------------------------------------

@dataclass(frozen=True)
class ShotTruth:
    qubit_id: str = "Q0"
    sigma: float = 1e-3
    center_g: tuple[float, float] = (-5e-3, 0.0)
    center_e: tuple[float, float] = (5e-3, 0.0)
    thermal: float = 0.0
    decay_probability: float = 0.0
    n_shots: int = 100_000
    readout_duration: float = 2e-6
    qubit_frequency: float = 4.5e9
    t1_reference: float | None = None
    excited_prep_ground: float | None = None  # defaults to ``thermal``

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError("sigma must be > 0")
        for name in ("thermal", "decay_probability", "excited_prep_ground"):
            p = getattr(self, name)
            if p is None:
                continue
            if not 0.0 <= p < 1.0:
                raise ValidationError(f"{name} must lie in [0, 1)")
        if self.n_shots < 1:
            raise ValidationError("n_shots must be >= 1")

    @classmethod
    def from_t1(cls, t1: float, readout_duration: float, **kw) -> "ShotTruth":
        """Decay probability for an excited state surviving a readout window."""
        return cls(decay_probability=-math.expm1(-readout_duration / t1),
                   readout_duration=readout_duration, t1_reference=t1, **kw)


def synth_shots(truth: ShotTruth, seed: int | np.random.SeedSequence) -> IQDataset:
    """Draw IQ shots for both preparations.

    A thermal fraction starts in the wrong state (the pi pulse swaps it for
    the excited preparation unless ``excited_prep_ground`` overrides it).
    Shots in the excited state at readout start decay with
    ``decay_probability`` at a uniformly distributed time; the integrated
    signal of such a shot sits on the segment between the two centers, at
    the fraction of the window spent excited.
    """
    rng = np.random.default_rng(seed)
    cg = np.asarray(truth.center_g, dtype=float)
    ce = np.asarray(truth.center_e, dtype=float)
    n = truth.n_shots
    blocks = []
    wrong_fraction = {GROUND: truth.thermal,
                      EXCITED: truth.thermal if truth.excited_prep_ground is None
                      else truth.excited_prep_ground}
    for prep in (GROUND, EXCITED):
        wrong = rng.random(n) < wrong_fraction[prep]
        excited = wrong if prep == GROUND else ~wrong
        decays = excited & (rng.random(n) < truth.decay_probability)
        frac = np.where(excited, 1.0, 0.0)
        frac[decays] = rng.random(np.count_nonzero(decays))
        mean = cg + frac[:, None] * (ce - cg)
        pts = mean + truth.sigma * rng.standard_normal((n, 2))
        blocks.append((np.full(n, prep, dtype=np.int8), pts))
    prepared = np.concatenate([b[0] for b in blocks])
    pts = np.concatenate([b[1] for b in blocks])
    return IQDataset(truth.qubit_id, prepared, pts[:, 0], pts[:, 1],
                     truth.readout_duration, truth.qubit_frequency, truth.t1_reference)


# --- file formats -----------------------------------------------------------

SHOT_HEADER = ["qubit_id", "prepared", "i_volts", "q_volts"]


def metadata_path(shots_path: Path) -> Path:
    return shots_path.with_suffix(".meta.json")


def write_shots(datasets: Sequence[IQDataset], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SHOT_HEADER)
        for ds in datasets:
            names = np.where(ds.prepared == GROUND, "ground", "excited")
            for p, i, q in zip(names, ds.i, ds.q):
                w.writerow([ds.qubit_id, p, repr(float(i)), repr(float(q))])
    meta = {ds.qubit_id: {"readout_duration": ds.readout_duration,
                          "qubit_frequency": ds.qubit_frequency,
                          "t1_reference": ds.t1_reference} for ds in datasets}
    metadata_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_shots(path: str | Path) -> list[IQDataset]:
    """Read a shot CSV and its ``.meta.json`` sidecar; qubits keep file order."""
    path = Path(path)
    meta_file = metadata_path(path)
    if not meta_file.exists():
        raise ParseError(f"{path}: missing metadata sidecar {meta_file.name}")
    meta = json.loads(meta_file.read_text())
    cols: dict[str, list] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SHOT_HEADER:
            raise ParseError(f"{path}: expected header {','.join(SHOT_HEADER)}")
        for lineno, row in enumerate(reader, 2):
            if len(row) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 columns")
            qid, prep, i, q = row
            if prep not in ("ground", "excited"):
                raise ParseError(f"{path}:{lineno}: prepared must be ground or excited")
            try:
                cols.setdefault(qid, []).append((prep == "excited", float(i), float(q)))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric voltage") from None
    out = []
    for qid, rows in cols.items():
        if qid not in meta:
            raise ParseError(f"{meta_file}: no metadata for qubit {qid!r}")
        m = meta[qid]
        arr = np.array(rows, dtype=float)
        try:
            out.append(IQDataset(qid, arr[:, 0].astype(np.int8), arr[:, 1], arr[:, 2],
                                 float(m["readout_duration"]), float(m["qubit_frequency"]),
                                 None if m.get("t1_reference") is None else float(m["t1_reference"])))
        except KeyError as exc:
            raise ParseError(f"{meta_file}: qubit {qid!r} lacks {exc.args[0]}") from None
    return out

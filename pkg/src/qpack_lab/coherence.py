"""Coherence statistics: decay fits, per-qubit medians, sub-sampling
bootstrap and spatial correlation across the wafer."""

from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.special import ndtri

from .core.geometry import Point2
from .errors import FitError, ParseError, ValidationError

WAFER_RADIUS = 38.1e-3  # 3-inch wafer
R2_THRESHOLD = 0.75


@dataclass(frozen=True)
class DecayCurve:
    delays: np.ndarray
    signal: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.delays, dtype=float)
        s = np.asarray(self.signal, dtype=float)
        if t.ndim != 1 or t.shape != s.shape:
            raise ValidationError("delays and signal must be 1-D and equal length")
        if len(t) < 4:
            raise ValidationError("decay curve needs at least 4 points")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(s))):
            raise ValidationError("decay curve has non-finite values")
        if np.any(np.diff(t) <= 0):
            raise ValidationError("delays must be strictly increasing")
        t.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "delays", t)
        object.__setattr__(self, "signal", s)

    @classmethod
    def normalized(cls, delays, raw, start_level: float, end_level: float) -> "DecayCurve":
        """Map calibration levels to 1 (zero delay) and 0 (asymptote)."""
        if start_level == end_level:
            raise ValidationError("calibration levels coincide")
        raw = np.asarray(raw, dtype=float)
        return cls(delays, (raw - end_level) / (start_level - end_level))


class Observable(str, enum.Enum):
    T1 = "t1"
    T2E = "t2e"
    QUBIT_FREQ_ERROR = "qubit_freq_error"
    RESONATOR_FREQ_ERROR = "resonator_freq_error"


@dataclass(frozen=True)
class QubitRecord:
    qubit_id: str
    position: Point2
    design_frequency: float = math.nan
    measured_frequency: float = math.nan
    resonator_design_frequency: float = math.nan
    resonator_measured_frequency: float = math.nan
    t1_samples: tuple[DecayCurve, ...] = ()
    t2e_samples: tuple[DecayCurve, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "position", Point2(*map(float, self.position)))
        object.__setattr__(self, "t1_samples", tuple(self.t1_samples))
        object.__setattr__(self, "t2e_samples", tuple(self.t2e_samples))

    def samples(self, which: str) -> tuple[DecayCurve, ...]:
        return self.t1_samples if Observable(which) is Observable.T1 else self.t2e_samples


def check_positions(records: Iterable[QubitRecord], wafer_radius: float = WAFER_RADIUS) -> None:
    for r in records:
        if math.hypot(*r.position) > wafer_radius:
            raise ValidationError(f"{r.qubit_id}: position outside the wafer radius")


# --- decay fits -------------------------------------------------------------

def fit_decay(curve: DecayCurve) -> tuple[float, float]:
    """Fit ``exp(-t/tau)`` with tau the only parameter; returns (tau, R^2).

    Time is normalized by the longest delay, so scaling all delays by c
    scales tau by c.  A log-spaced grid scan seeds the local refinement.
    """
    scale = float(curve.delays[-1])
    if not scale > 0:
        raise FitError("longest delay must be positive")
    x = curve.delays / scale
    y = curve.signal
    rates = np.geomspace(1e-3, 1e3, 121)
    sse = np.sum((np.exp(-np.outer(rates, x)) - y) ** 2, axis=1)
    k0 = rates[int(np.argmin(sse))]

    res = least_squares(lambda k: np.exp(-k[0] * x) - y, [k0], xtol=1e-14, ftol=1e-14,
                        gtol=1e-14, max_nfev=200)
    k = float(res.x[0])
    if not res.success or not math.isfinite(k):
        raise FitError(f"decay fit did not converge: {res.message}")
    if k <= 0:
        raise FitError("best-fit decay time is not positive")
    ss_res = float(np.sum(res.fun ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        r2 = 1.0 if ss_res == 0 else -math.inf
    else:
        r2 = 1.0 - ss_res / ss_tot
    return scale / k, r2


@dataclass(frozen=True)
class MedianResult:
    value: float
    n_accepted: int
    n_total: int

    @property
    def measured(self) -> bool:
        return self.n_accepted > 0


def median_of_fits(curves: Sequence[DecayCurve], r2_threshold: float = R2_THRESHOLD) -> MedianResult:
    taus = []
    for c in curves:
        try:
            tau, r2 = fit_decay(c)
        except FitError:
            continue
        if r2 > r2_threshold:
            taus.append(tau)
    value = float(np.median(taus)) if taus else math.nan
    return MedianResult(value, len(taus), len(curves))


def qubit_median(record: QubitRecord, which: str = "t1",
                 r2_threshold: float = R2_THRESHOLD) -> MedianResult:
    """Median of accepted fits; ``measured`` is False when none pass."""
    return median_of_fits(record.samples(which), r2_threshold)


def observable_values(records: Sequence[QubitRecord], observable: str,
                      r2_threshold: float = R2_THRESHOLD) -> np.ndarray:
    """One value per record, NaN where the qubit is unmeasured."""
    obs = Observable(observable)
    if obs in (Observable.T1, Observable.T2E):
        return np.array([qubit_median(r, obs.value, r2_threshold).value for r in records])
    if obs is Observable.QUBIT_FREQ_ERROR:
        return np.array([r.measured_frequency - r.design_frequency for r in records])
    return np.array([r.resonator_measured_frequency - r.resonator_design_frequency
                     for r in records])


# --- bootstrap --------------------------------------------------------------

class Statistic(str, enum.Enum):
    MEDIAN = "median"
    MIN = "min"
    MAX = "max"


_STAT = {Statistic.MEDIAN: np.median, Statistic.MIN: np.min, Statistic.MAX: np.max}


@dataclass(frozen=True)
class BootstrapResult:
    subsample_sizes: np.ndarray
    statistic: Statistic
    full_value: float
    mean_estimate: np.ndarray
    bands: Mapping[float, tuple[np.ndarray, np.ndarray]]
    relative_error: Mapping[float, np.ndarray]
    resamples: int
    replace: bool = False


def _subsample_stats(values: np.ndarray, size: int, resamples: int, stat,
                     seed: int, replace: bool) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, size]))
    n = len(values)
    if replace:
        idx = rng.integers(0, n, size=(resamples, size))
    elif size == n:
        idx = np.broadcast_to(np.arange(n), (resamples, n))
    else:
        keys = rng.random((resamples, n))
        idx = np.argpartition(keys, size - 1, axis=1)[:, :size]
    return stat(values[idx], axis=1)


def bootstrap_statistic(values: Sequence[float], statistic: str = "median",
                        sizes: Sequence[int] | None = None, resamples: int = 2000,
                        confidences: Sequence[float] = (0.5, 0.9, 0.99), seed: int = 0,
                        replace: bool = False, jobs: int = 1) -> BootstrapResult:
    """Distribution of a sub-sample statistic versus sub-sample size.

    Each size draws from its own stream keyed by ``(seed, size)``, so the
    result is identical for any worker count or ordering of ``sizes``.
    Bands are central quantile intervals; the relative error at confidence
    c is the c-quantile of ``|s - S| / |S|`` with S the full-population value.
    """
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if len(v) == 0:
        raise ValidationError("no values to resample")
    stat_kind = Statistic(statistic)
    stat = _STAT[stat_kind]
    sizes = np.arange(1, len(v) + 1) if sizes is None else np.asarray(sorted(set(sizes)), dtype=int)
    if len(sizes) == 0 or sizes.min() < 1 or sizes.max() > len(v):
        raise ValidationError(f"sub-sample sizes must lie in 1..{len(v)}")
    if resamples < 100:
        raise ValidationError("resamples must be >= 100")
    confs = sorted(float(c) for c in confidences)
    if not all(0 < c < 1 for c in confs):
        raise ValidationError("confidences must lie in (0, 1)")
    full = float(stat(v))
    if full == 0:
        raise ValidationError("full-population statistic is zero; relative error undefined")

    def work(size):
        return _subsample_stats(v, int(size), resamples, stat, seed, replace)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            draws = list(pool.map(work, sizes))
    else:
        draws = [work(s) for s in sizes]
    draws = np.vstack(draws)
    rel = np.abs(draws - full) / abs(full)
    bands, rel_err = {}, {}
    for c in confs:
        lo, hi = np.quantile(draws, [(1 - c) / 2, (1 + c) / 2], axis=1)
        bands[c] = (lo, hi)
        rel_err[c] = np.quantile(rel, c, axis=1)
    return BootstrapResult(sizes, stat_kind, full, draws.mean(axis=1), bands, rel_err,
                           resamples, replace)


def crossing_size(result: BootstrapResult, confidence: float, threshold: float = 0.2) -> int | None:
    """Smallest size from which the relative error stays at or below ``threshold``."""
    err = result.relative_error[confidence]
    above = np.nonzero(err > threshold)[0]
    if len(above) == 0:
        return int(result.subsample_sizes[0])
    last = above[-1]
    return None if last + 1 >= len(err) else int(result.subsample_sizes[last + 1])


def matched_ensemble(n: int, median: float, sigma_log: float) -> np.ndarray:
    """Deterministic log-normal population: values at the (i + 1/2)/n quantiles."""
    if n < 1 or not median > 0 or not sigma_log >= 0:
        raise ValidationError("invalid ensemble parameters")
    p = (np.arange(n) + 0.5) / n
    return median * np.exp(sigma_log * ndtri(p))


# --- spatial correlation ----------------------------------------------------

@dataclass(frozen=True)
class CorrelationResult:
    edges: np.ndarray
    centers: np.ndarray
    correlation: np.ndarray  # NaN marks an empty bin
    pair_counts: np.ndarray
    band_low: np.ndarray
    band_high: np.ndarray
    confidence: float


def _pair_products(pos: np.ndarray, vals: np.ndarray):
    std = vals.std()
    if not std > 0:
        raise ValidationError("observable has zero variance")
    z = (vals - vals.mean()) / std
    i, j = np.triu_indices(len(vals), k=1)
    d = np.hypot(*(pos[i] - pos[j]).T)
    return d, z[i] * z[j]


def _binned(d, prod, edges):
    # pairs outside the requested range do not contribute
    inside = (d >= edges[0]) & (d <= edges[-1])
    k = np.digitize(d[inside], edges[1:-1])
    counts = np.bincount(k, minlength=len(edges) - 1)
    sums = np.bincount(k, weights=prod[inside], minlength=len(edges) - 1)
    mean = np.full(len(edges) - 1, np.nan)
    np.divide(sums, counts, out=mean, where=counts > 0)
    return mean, counts


def pearson_spatial(positions: np.ndarray, values: np.ndarray, bins: int | Sequence[float] = 10,
                    bootstrap_fraction: float = 0.5, resamples: int = 1000,
                    confidence: float = 0.95, seed: int = 0) -> CorrelationResult:
    """Distance-binned mean of pairwise z-score products with subset bands.

    Each bootstrap round repeats the whole analysis (z-scoring included) on
    a random subset of ``bootstrap_fraction`` of the qubits drawn without
    replacement.  Non-finite values are dropped first.
    """
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    vals = np.asarray(values, dtype=float)
    keep = np.isfinite(vals)
    pos, vals = pos[keep], vals[keep]
    if len(vals) < 2:
        raise ValidationError("need at least two measured qubits")
    d, prod = _pair_products(pos, vals)
    if np.isscalar(bins) or np.ndim(bins) == 0:
        nb = int(bins)
        if nb < 1:
            raise ValidationError("need at least one distance bin")
        edges = np.linspace(d.min(), d.max(), nb + 1)
    else:
        edges = np.asarray(bins, dtype=float)
        if len(edges) < 2 or np.any(np.diff(edges) <= 0):
            raise ValidationError("bin edges must be strictly increasing")
    corr, counts = _binned(d, prod, edges)

    if not 0 < bootstrap_fraction <= 1:
        raise ValidationError("bootstrap_fraction must lie in (0, 1]")
    m = max(3, int(round(bootstrap_fraction * len(vals))))
    m = min(m, len(vals))
    rng = np.random.default_rng(np.random.SeedSequence([seed, len(vals)]))
    draws = np.full((resamples, len(edges) - 1), np.nan)
    for r in range(resamples):
        sub = np.sort(rng.permutation(len(vals))[:m])
        if not vals[sub].std() > 0:
            continue
        ds, ps = _pair_products(pos[sub], vals[sub])
        draws[r] = _binned(ds, ps, edges)[0]
    alpha = (1 - confidence) / 2
    lo = np.full(len(edges) - 1, np.nan)
    hi = np.full(len(edges) - 1, np.nan)
    for b in range(len(edges) - 1):
        col = draws[:, b][np.isfinite(draws[:, b])]
        if len(col) and counts[b] > 0:
            lo[b], hi[b] = np.quantile(col, [alpha, 1 - alpha])
    return CorrelationResult(edges, 0.5 * (edges[1:] + edges[:-1]), corr, counts, lo, hi,
                             confidence)


def radial_profile(positions: np.ndarray, values: np.ndarray, n_bins: int = 5):
    """Sorted (radius, value) scatter and the median value in equal-width radius bins."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    vals = np.asarray(values, dtype=float)
    keep = np.isfinite(vals)
    if not keep.any():
        raise ValidationError("no measured values")
    r = np.hypot(pos[keep, 0], pos[keep, 1])
    v = vals[keep]
    order = np.argsort(r, kind="stable")
    r, v = r[order], v[order]
    hi = r.max() if r.max() > 0 else 1.0
    edges = np.linspace(0.0, hi, n_bins + 1)
    k = np.minimum(np.digitize(r, edges[1:-1]), n_bins - 1) if n_bins > 1 else np.zeros(len(r), int)
    medians = np.array([np.median(v[k == b]) if np.any(k == b) else np.nan for b in range(n_bins)])
    return r, v, edges, medians


# --- synthetic wafers -------------------------------------------------------

def synth_curve(tau: float, rng: np.random.Generator, n_points: int = 20,
                noise: float = 0.02, span: float = 5.0) -> DecayCurve:
    t = np.linspace(0.0, span * tau, n_points)
    return DecayCurve(t, np.exp(-t / tau) + noise * rng.standard_normal(n_points))


def synth_records(n_qubits: int = 105, t1_median: float = 97e-6, t2e_median: float = 129e-6,
                  sigma_log: float = 0.48, curves_per_qubit: int = 10, garbage_fraction: float = 0.05,
                  freq_gradient: float = 2e9, wafer_radius: float = WAFER_RADIUS,
                  seed: int = 0) -> list[QubitRecord]:
    """Synthetic wafer: qubits on a square grid inside the wafer, coherence
    drawn from matched log-normal ensembles, frequency errors with a linear
    gradient across the wafer plus noise, and some unusable curves."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, n_qubits]))
    side = int(math.ceil(math.sqrt(n_qubits * 4 / math.pi))) + 2
    ax = np.linspace(-0.9 * wafer_radius, 0.9 * wafer_radius, side)
    xx, yy = np.meshgrid(ax, ax)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    pts = pts[np.hypot(pts[:, 0], pts[:, 1]) <= 0.9 * wafer_radius]
    pts = pts[np.lexsort((pts[:, 0], np.hypot(pts[:, 0], pts[:, 1])))][:n_qubits]
    if len(pts) < n_qubits:
        raise ValidationError("wafer too small for the requested qubit count")
    t1 = rng.permutation(matched_ensemble(n_qubits, t1_median, sigma_log))
    t2 = rng.permutation(matched_ensemble(n_qubits, t2e_median, sigma_log))
    records = []
    for k, (x, y) in enumerate(pts):
        design = 4.0e9 + 0.02e9 * (k % 9)
        res_design = 9.6e9 + 0.1e9 * (k % 9)
        gradient = freq_gradient * x / wafer_radius * 1e-3

        def curves(tau):
            out = []
            for _ in range(curves_per_qubit):
                if rng.random() < garbage_fraction:
                    t = np.linspace(0.0, 5 * tau, 20)
                    out.append(DecayCurve(t, 0.5 + 0.2 * rng.standard_normal(20)))
                else:
                    out.append(synth_curve(tau, rng))
            return tuple(out)

        records.append(QubitRecord(
            f"Q{k:03d}", Point2(float(x), float(y)), design,
            design + gradient + 2e6 * rng.standard_normal(), res_design,
            res_design + 3 * gradient + 2e6 * rng.standard_normal(),
            curves(t1[k]), curves(t2[k])))
    return records


# --- file formats -----------------------------------------------------------

WAFER_HEADER = ["qubit_id", "x_m", "y_m", "design_f_hz", "measured_f_hz",
                "res_design_f_hz", "res_measured_f_hz"]
MANIFEST_HEADER = ["qubit_id", "kind", "file", "start_level", "end_level"]


def write_records(records: Sequence[QubitRecord], wafer_path: str | Path,
                  decay_dir: str | Path) -> None:
    """Write the wafer map CSV plus one CSV per decay curve and a manifest."""
    wafer_path, decay_dir = Path(wafer_path), Path(decay_dir)
    decay_dir.mkdir(parents=True, exist_ok=True)
    with wafer_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(WAFER_HEADER)
        for r in records:
            nums = (r.position.x, r.position.y, r.design_frequency, r.measured_frequency,
                    r.resonator_design_frequency, r.resonator_measured_frequency)
            w.writerow([r.qubit_id, *(repr(float(x)) for x in nums)])
    with (decay_dir / "manifest.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_HEADER)
        for r in records:
            for kind, curves in (("t1", r.t1_samples), ("t2e", r.t2e_samples)):
                for n, c in enumerate(curves):
                    name = f"{r.qubit_id}_{kind}_{n:03d}.csv"
                    w.writerow([r.qubit_id, kind, name, "1", "0"])
                    with (decay_dir / name).open("w", newline="") as cf:
                        cw = csv.writer(cf)
                        cw.writerow(["delay_s", "signal"])
                        for t, s in zip(c.delays, c.signal):
                            cw.writerow([repr(float(t)), repr(float(s))])


def _read_csv(path: Path, header: list[str], optional: int = 0) -> list[list[str]]:
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got is None or got[:len(header) - optional] != header[:len(header) - optional]:
            raise ParseError(f"{path}: expected header {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(got):
                raise ParseError(f"{path}:{lineno}: expected {len(got)} columns")
            rows.append(row)
        return rows


def _float(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"{where}: not a number: {text!r}") from None


def read_records(wafer_path: str | Path, decay_dir: str | Path | None = None,
                 wafer_radius: float = WAFER_RADIUS) -> list[QubitRecord]:
    wafer_path = Path(wafer_path)
    rows = _read_csv(wafer_path, WAFER_HEADER)
    samples: dict[tuple[str, str], list[DecayCurve]] = {}
    if decay_dir is not None:
        decay_dir = Path(decay_dir)
        manifest = decay_dir / "manifest.csv"
        for row in _read_csv(manifest, MANIFEST_HEADER, optional=2):
            qid, kind, name = row[:3]
            if kind not in ("t1", "t2e"):
                raise ParseError(f"{manifest}: kind must be t1 or t2e, got {kind!r}")
            start = _float(row[3], str(manifest)) if len(row) > 3 else 1.0
            end = _float(row[4], str(manifest)) if len(row) > 4 else 0.0
            data = _read_csv(decay_dir / name, ["delay_s", "signal"])
            arr = np.array([[_float(a, name), _float(b, name)] for a, b in data]).reshape(-1, 2)
            samples.setdefault((qid, kind), []).append(
                DecayCurve.normalized(arr[:, 0], arr[:, 1], start, end))
    records = []
    for row in rows:
        qid = row[0]
        nums = [_float(x, f"{wafer_path}:{qid}") for x in row[1:]]
        records.append(QubitRecord(qid, Point2(nums[0], nums[1]), *nums[2:],
                                   t1_samples=samples.get((qid, "t1"), ()),
                                   t2e_samples=samples.get((qid, "t2e"), ())))
    check_positions(records, wafer_radius)
    return records

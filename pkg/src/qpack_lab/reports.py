"""Report writing: run manifests, atomic file output, CSV/JSON reports and
plot-ready data files.

Floats are written with ``repr`` so a report reproduces the in-memory
values exactly, and nothing time- or path-dependent enters a report unless
it came from the inputs.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .errors import ValidationError


# --- manifests --------------------------------------------------------------

def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def build_timestamp(inputs: Iterable[str | Path] = ()) -> str:
    """``SOURCE_DATE_EPOCH`` if set, else the newest input mtime, else epoch 0."""
    env = os.environ.get("SOURCE_DATE_EPOCH")
    if env is not None:
        try:
            seconds = int(env)
        except ValueError:
            raise ValidationError(f"SOURCE_DATE_EPOCH is not an integer: {env!r}") from None
    else:
        mtimes = [int(Path(p).stat().st_mtime) for p in inputs if Path(p).is_file()]
        seconds = max(mtimes, default=0)
    return dt.datetime.fromtimestamp(seconds, dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class RunManifest:
    subcommand: str
    inputs: tuple[tuple[str, str], ...]  # (name, sha256)
    config_hash: str
    seed: int | None
    version: str = __version__
    timestamp: str = "1970-01-01T00:00:00Z"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["inputs"] = [{"name": n, "sha256": h} for n, h in self.inputs]
        return d


def make_manifest(subcommand: str, config: Mapping[str, Any], seed: int | None,
                  inputs: Sequence[str | Path] = (),
                  timestamp_inputs: Sequence[str | Path] | None = None) -> RunManifest:
    """Manifest for a run; inputs are recorded by base name and content hash.

    ``timestamp_inputs`` restricts which files date the run (generated
    intermediates should not).
    """
    entries = tuple((Path(p).name, sha256_file(p)) for p in inputs)
    canonical = json.dumps(jsonable(dict(config)), sort_keys=True, separators=(",", ":"))
    stamp = build_timestamp(inputs if timestamp_inputs is None else timestamp_inputs)
    return RunManifest(subcommand, entries, sha256_bytes(canonical.encode()), seed,
                       __version__, stamp)


# --- serialization ----------------------------------------------------------

def jsonable(value: Any) -> Any:
    """Plain JSON types; NaN becomes null and infinities the strings "inf"/"-inf"."""
    if isinstance(value, Mapping):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value  # enums
    return value


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        x = float(value)
        return "" if math.isnan(x) else repr(x)
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(jsonable(value))


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write via a temporary file in the target directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def csv_text(rows: Sequence[Mapping[str, Any]], columns: Sequence[str] | None = None,
             manifest: RunManifest | None = None) -> str:
    """CSV with the manifest as a leading ``#`` comment line."""
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    buf = io.StringIO()
    if manifest is not None:
        buf.write("# manifest " + json.dumps(manifest.to_dict(), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def json_text(report: Any, manifest: RunManifest | None = None) -> str:
    doc = {"manifest": None if manifest is None else manifest.to_dict(), "report": jsonable(report)}
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(path: str | Path, rows: Sequence[Mapping[str, Any]], fmt: str,
                 manifest: RunManifest | None, extra: Mapping[str, Any] | None = None,
                 columns: Sequence[str] | None = None) -> Path:
    """Write ``rows`` as ``path.csv`` or ``path.json``; JSON also carries ``extra``."""
    path = Path(path)
    if fmt == "csv":
        out = path.with_suffix(".csv")
        atomic_write_text(out, csv_text(rows, columns, manifest))
    elif fmt == "json":
        out = path.with_suffix(".json")
        body = {"rows": list(rows)}
        if extra:
            body.update(extra)
        atomic_write_text(out, json_text(body, manifest))
    else:
        raise ValidationError(f"unknown report format {fmt!r}")
    return out


# --- plot data --------------------------------------------------------------

def _spectrum_rows(report) -> list[dict]:
    return [{"mode_index": r.index + 1, "frequency_hz": r.frequency,
             "bands": ";".join(r.bands), "collision": bool(r.bands)} for r in report.rows]


def _bootstrap_rows(result) -> list[dict]:
    rows = []
    for k, size in enumerate(result.subsample_sizes):
        row = {"subsample_size": int(size), "statistic": result.statistic.value,
               "full_value": result.full_value, "mean": result.mean_estimate[k]}
        for c in sorted(result.bands):
            tag = f"{round(100 * c):g}"
            row[f"low_{tag}"] = result.bands[c][0][k]
            row[f"high_{tag}"] = result.bands[c][1][k]
            row[f"rel_error_{tag}"] = result.relative_error[c][k]
        rows.append(row)
    return rows


def _correlation_rows(result) -> list[dict]:
    return [{"bin_low_m": result.edges[k], "bin_high_m": result.edges[k + 1],
             "distance_m": result.centers[k], "pairs": int(result.pair_counts[k]),
             "correlation": result.correlation[k], "band_low": result.band_low[k],
             "band_high": result.band_high[k]} for k in range(len(result.centers))]


def _readout_rows(results) -> list[dict]:
    rows = []
    for r in results:
        b = r.budget
        rows.append({"qubit_id": r.qubit_id,
                     "measured_error": None if b is None else b.measured_error,
                     "thermal": None if b is None else b.thermal,
                     "overlap": None if b is None else b.overlap,
                     "decay": None if b is None else b.decay,
                     "residual": None if b is None else b.residual,
                     "t_eff_k": r.temperature})
    return rows


def _wafer_rows(data) -> list[dict]:
    """``data``: {"records": [...], "values": {name: per-record values}}."""
    rows = [{"qubit_id": r.qubit_id, "x_m": r.position.x, "y_m": r.position.y}
            for r in data["records"]]
    for name, vals in data["values"].items():
        for row, v in zip(rows, vals):
            row[name] = v
            row[f"{name}_measured"] = bool(np.isfinite(v))
    return rows


def _histogram_rows(data) -> list[dict]:
    rows = []
    for name, vals in data["values"].items():
        v = np.asarray(vals, dtype=float)
        v = v[np.isfinite(v)]
        if len(v) == 0:
            continue
        counts, edges = np.histogram(v, bins=data.get("bins", 20))
        rows += [{"observable": name, "bin_low": edges[k], "bin_high": edges[k + 1],
                  "count": int(counts[k])} for k in range(len(counts))]
    return rows


def _thermal_rows(data) -> list[dict]:
    rows = []
    for mode, report in data.items():
        for s in report.stages:
            rows.append({"mode": mode, "stage": s.name, "passive_w": s.passive,
                         "active_dissipative_w": s.active_dissipative,
                         "temperature_k": s.temperature})
    return rows


PLOT_KINDS = {
    "spectrum": _spectrum_rows,
    "bootstrap": _bootstrap_rows,
    "correlation": _correlation_rows,
    "readout": _readout_rows,
    "wafer_map": _wafer_rows,
    "histogram": _histogram_rows,
    "thermal": _thermal_rows,
}


def plot_rows(report: Any, kind: str) -> list[dict]:
    try:
        builder = PLOT_KINDS[kind]
    except KeyError:
        raise ValidationError(f"unknown plot-data kind {kind!r}; "
                              f"expected one of {', '.join(sorted(PLOT_KINDS))}") from None
    return builder(report)


def emit_plot_data(report: Any, kind: str, path: str | Path,
                   manifest: RunManifest | None = None) -> Path:
    """Write plot-ready CSV for ``report`` of the given kind to ``path``."""
    rows = plot_rows(report, kind)
    path = Path(path).with_suffix(".csv")
    atomic_write_text(path, csv_text(rows, None, manifest))
    return path

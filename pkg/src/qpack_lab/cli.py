"""``qpack-lab`` command line: box modes, loss budgets, readout, coherence,
thermal loads, and an end-to-end pipeline.

Exit codes: 0 success, 1 domain failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from . import cavity, coherence, loss, readout, reports, thermal
from .core.fieldgrid import read_field_grid
from .core.geometry import load_geometry
from .core.materials import load_material_table
from .errors import QpackError
from .units import UnitError, parse_quantity

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("qpack_lab")

BUILTIN = "builtin:"
DEFAULT_BANDS = "qubit:4e9-6e9,readout:9.5e9-10.5e9"


class UsageError(Exception):
    """Bad command-line input detected after argument parsing."""


# --- argument helpers -------------------------------------------------------

def resolve_path(text: str) -> Path:
    """Path to an existing file; ``builtin:<name>`` selects bundled data."""
    if text.startswith(BUILTIN):
        name = text[len(BUILTIN):]
        path = Path(str(resources.files("qpack_lab.data").joinpath(name)))
    else:
        path = Path(text)
    if not path.exists():
        raise argparse.ArgumentTypeError(f"no such file: {text}")
    return path


def _quantity(dimension: str) -> Callable[[str], float]:
    def parse(text: str) -> float:
        try:
            return float(text)
        except ValueError:
            pass
        try:
            return parse_quantity(text, dimension)
        except UnitError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    parse.__name__ = dimension
    return parse


def _options(text: str, list_keys: Sequence[str] = ()) -> dict[str, list[str]]:
    """``key=value,key=v1,v2`` -> {key: [values]}; bare tokens extend the previous key."""
    out: dict[str, list[str]] = {}
    key = None
    for tok in (t.strip() for t in text.split(",")):
        if not tok:
            continue
        if "=" in tok:
            key, _, value = tok.partition("=")
            out[key.strip()] = [value.strip()]
        elif key is not None and key in list_keys:
            out[key].append(tok)
        else:
            raise UsageError(f"cannot parse option {tok!r} in {text!r}")
    return out


def _sizes(text: str, population: int) -> list[int]:
    sizes: list[int] = []
    for part in text.split(";"):
        lo, sep, hi = part.partition("-")
        try:
            if sep:
                sizes += list(range(int(lo), min(int(hi), population) + 1))
            else:
                sizes.append(int(part))
        except ValueError:
            raise UsageError(f"bad sub-sample sizes {text!r}") from None
    return sizes


def _seed(args) -> int:
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy % (2 ** 63))
        print(f"no --seed given; using entropy seed {args.seed}", file=sys.stderr)
    return args.seed


def _manifest(args, name: str, config: dict, inputs: Sequence[Path]) -> reports.RunManifest:
    stamp_inputs = getattr(args, "timestamp_inputs", None)
    return reports.make_manifest(name, config, getattr(args, "seed", None), inputs,
                                 stamp_inputs)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- modes ------------------------------------------------------------------

def cmd_modes(args) -> dict:
    materials = load_material_table(args.materials)
    geometry = load_geometry(args.geometry, materials)
    config = cavity.SolverConfig(args.spacing, args.n_modes, args.shift, None, args.tolerance)
    spectrum = cavity.solve_modes(geometry, config)
    bands = cavity.parse_bands(args.bands) if args.bands else []
    report = cavity.mode_report(spectrum, bands)
    out = _out(args)
    inputs = [args.geometry] + ([args.materials] if args.materials else [])
    manifest = _manifest(args, "modes", {
        "spacing": args.spacing, "n_modes": args.n_modes, "shift": args.shift,
        "tolerance": args.tolerance, "bands": args.bands}, inputs)
    rows = cavity.spectrum_table(spectrum, bands)
    summary = {"fundamental_hz": report.fundamental, "collisions": len(report.collisions),
               "clearance_hz": report.clearance, "validity_ceiling_hz": report.validity_ceiling,
               "above_ceiling": list(report.above_ceiling),
               "degenerate_groups": [list(g) for g in report.groups if len(g) > 1]}
    reports.write_report(out / "spectrum", rows, args.report, manifest, {"summary": summary})
    reports.emit_plot_data(report, "spectrum", out / "plot_spectrum", manifest)
    for k, mode in enumerate(spectrum.modes[:args.export_fields]):
        cavity.export_mode_field(mode, out / f"mode_{k + 1:03d}.fg")
    print(f"fundamental {report.fundamental / 1e9:.4f} GHz; "
          f"{len(report.collisions)} band collision(s)")
    for idx, label in report.collisions:
        print(f"  mode {idx + 1} at {spectrum.modes[idx].frequency / 1e9:.4f} GHz in {label}")
    return {"frequencies": [m.frequency for m in spectrum.modes], "collisions": report.collisions}


# --- loss -------------------------------------------------------------------

def cmd_loss(args) -> dict:
    grid = read_field_grid(args.field)
    materials = load_material_table(args.materials)
    specs = loss.load_channels(args.channels)
    channels = loss.evaluate_channels(grid, specs, materials, args.frequency)
    budget = loss.assemble_budget(channels, materials, args.frequency)
    rows = loss.budget_rows(budget)
    rows.append({"kind": "total", "label": "", "material": "", "participation": None,
                 "q_limit": budget.total_q, "t1_limit_s": budget.t1_limit, "status": ""})
    if args.seam_bound_t1 is not None:
        for ch in channels:
            if ch.kind is loss.ChannelKind.SEAM and ch.participation > 0:
                g_min = loss.seam_bound_from_t1(args.seam_bound_t1, args.frequency,
                                                ch.participation)
                rows.append({"kind": "seam_bound", "label": ch.label, "material": ch.material,
                             "participation": ch.participation, "q_limit": None,
                             "t1_limit_s": args.seam_bound_t1, "status": f"g_min={g_min!r}"})
    out = _out(args)
    inputs = [args.field, args.channels] + ([args.materials] if args.materials else [])
    manifest = _manifest(args, "loss", {"frequency": args.frequency,
                                        "seam_bound_t1": args.seam_bound_t1,
                                        "t1_bound": args.t1_bound}, inputs)
    reports.write_report(out / "loss_budget", rows, args.report, manifest,
                         {"total_q": budget.total_q, "t1_limit_s": budget.t1_limit,
                          "frequency_hz": budget.frequency})
    if args.t1_bound:
        lo, hi, n = _t1_band(args.t1_bound)
        bound = loss.t1_bound(np.linspace(lo, hi, n), channels, materials)
        reports.write_report(out / "t1_bound", [{"frequency_hz": f, "t1_limit_s": t}
                                                for f, t in bound], args.report, manifest)
    print(f"total Q {budget.total_q:.4g}; T1 limit {budget.t1_limit * 1e6:.4g} us "
          f"at {budget.frequency / 1e9:.4g} GHz; {len(budget.unbudgeted)} unbudgeted channel(s)")
    return {"total_q": budget.total_q}


def _t1_band(text: str) -> tuple[float, float, int]:
    parts = text.split(":")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except (IndexError, ValueError):
        raise UsageError(f"--t1-bound expects low:high:count in Hz, got {text!r}") from None
    return lo, hi, n


# --- readout ----------------------------------------------------------------

def _read_truth(path: Path) -> list[readout.ShotTruth]:
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise QpackError(f"{path}: {exc}") from None
    defaults = doc.get("defaults", {})
    truths = []
    for entry in doc.get("qubit", []):
        spec = {**defaults, **entry}
        t1 = spec.pop("t1", None)
        for key in ("center_g", "center_e"):
            if key in spec:
                spec[key] = tuple(spec[key])
        try:
            if t1 is not None:
                truths.append(readout.ShotTruth.from_t1(float(t1), spec.pop("readout_duration"),
                                                        **spec))
            else:
                truths.append(readout.ShotTruth(**spec))
        except TypeError as exc:
            raise QpackError(f"{path}: {exc}") from None
    if not truths:
        raise QpackError(f"{path}: no [[qubit]] entries")
    return truths


def _read_t1(path: Path) -> dict[str, float]:
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"qubit_id", "t1_s"} <= set(reader.fieldnames):
            raise QpackError(f"{path}: expected columns qubit_id,t1_s")
        return {row["qubit_id"]: float(row["t1_s"]) for row in reader}


def cmd_readout(args) -> dict:
    out = _out(args)
    inputs: list[Path] = []
    if args.synth is not None:
        seed = _seed(args)
        truths = _read_truth(args.synth)
        seqs = np.random.SeedSequence(seed).spawn(len(truths))
        datasets = [readout.synth_shots(t, s) for t, s in zip(truths, seqs)]
        shots_file = out / "shots.csv"
        readout.write_shots(datasets, shots_file)
        inputs.append(args.synth)
    elif args.shots is not None:
        files = sorted(args.shots.glob("*.csv")) if args.shots.is_dir() else [args.shots]
        datasets = [ds for f in files for ds in readout.read_shots(f)]
        inputs += files + [readout.metadata_path(f) for f in files]
    else:
        raise UsageError("readout needs --shots or --synth")
    t1 = _read_t1(args.t1) if args.t1 else {}
    if args.t1:
        inputs.append(args.t1)

    def work(ds):
        return readout.analyze(ds, t1.get(ds.qubit_id), halve_thermal=not args.full_thermal)

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(work, datasets))
    manifest = _manifest(args, "readout", {"synth": args.synth is not None,
                                           "full_thermal": args.full_thermal}, inputs)
    rows = [readout.result_row(r) for r in results]
    reports.write_report(out / "readout", rows, args.report, manifest)
    reports.emit_plot_data(results, "readout", out / "plot_readout", manifest)
    errs = [r.budget.measured_error for r in results if r.budget is not None]
    temps = [r.temperature for r in results if r.temperature]
    if errs:
        print(f"{len(results)} qubit(s); median readout error {100 * np.median(errs):.3g}%"
              + (f"; median T_eff {1e3 * np.median(temps):.3g} mK" if temps else ""))
    return {"results": results}


# --- coherence --------------------------------------------------------------

def cmd_coherence(args) -> dict:
    out = _out(args)
    seed = _seed(args)
    inputs: list[Path] = []
    if args.synth is not None:
        opts = _options(args.synth)
        n = int(opts.get("n", ["105"])[0])
        curves = int(opts.get("curves", ["10"])[0])
        records = coherence.synth_records(n, curves_per_qubit=curves, seed=seed)
        coherence.write_records(records, out / "wafer.csv", out / "decays")
    elif args.wafer is not None:
        records = coherence.read_records(args.wafer, args.decays)
        inputs.append(args.wafer)
        if args.decays is not None:
            inputs.append(args.decays / "manifest.csv")
    else:
        raise UsageError("coherence needs --wafer or --synth")

    medians = {w: [coherence.qubit_median(r, w, args.r2) for r in records] for w in ("t1", "t2e")}
    values = {"t1_s": np.array([m.value for m in medians["t1"]]),
              "t2e_s": np.array([m.value for m in medians["t2e"]]),
              "qubit_freq_error_hz": coherence.observable_values(records, "qubit_freq_error"),
              "resonator_freq_error_hz": coherence.observable_values(records, "resonator_freq_error")}
    config: dict[str, Any] = {"r2": args.r2, "bootstrap": args.bootstrap, "pearson": args.pearson,
                              "synth": args.synth}
    manifest = _manifest(args, "coherence", config, inputs)

    rows = []
    for k, r in enumerate(records):
        rows.append({"qubit_id": r.qubit_id, "x_m": r.position.x, "y_m": r.position.y,
                     "radius_m": math.hypot(*r.position),
                     "t1_s": values["t1_s"][k], "t1_accepted": medians["t1"][k].n_accepted,
                     "t1_total": medians["t1"][k].n_total,
                     "t2e_s": values["t2e_s"][k], "t2e_accepted": medians["t2e"][k].n_accepted,
                     "t2e_total": medians["t2e"][k].n_total,
                     "qubit_freq_error_hz": values["qubit_freq_error_hz"][k],
                     "resonator_freq_error_hz": values["resonator_freq_error_hz"][k]})
    cohort = {w: float(np.nanmedian(values[f"{w}_s"])) if np.isfinite(values[f"{w}_s"]).any()
              else math.nan for w in ("t1", "t2e")}
    reports.write_report(out / "coherence", rows, args.report, manifest,
                         {"median_of_medians": cohort})
    wafer = {"records": records, "values": values}
    reports.emit_plot_data(wafer, "wafer_map", out / "plot_wafer_map", manifest)
    reports.emit_plot_data({"values": {"t1_s": values["t1_s"], "t2e_s": values["t2e_s"]}},
                           "histogram", out / "plot_histogram", manifest)
    positions = np.array([r.position for r in records])
    radial_rows = []
    for name in ("t1_s", "t2e_s"):
        if np.isfinite(values[name]).any():
            r, v, edges, med = coherence.radial_profile(positions, values[name])
            radial_rows += [{"observable": name, "kind": "point", "radius_m": a, "value": b}
                            for a, b in zip(r, v)]
            radial_rows += [{"observable": name, "kind": "bin_median",
                             "radius_m": 0.5 * (edges[k] + edges[k + 1]), "value": med[k]}
                            for k in range(len(med))]
    reports.write_report(out / "radial", radial_rows, "csv", manifest)

    if args.bootstrap:
        opts = _options(args.bootstrap, list_keys=("conf",))
        resamples = int(opts.get("resamples", ["2000"])[0])
        confs = [float(c) / 100 for c in opts.get("conf", ["50", "90", "99"])]
        stats = opts.get("stats", ["median;min;max"])[0].split(";")
        for name in ("t1_s", "t2e_s"):
            vals = values[name][np.isfinite(values[name])]
            if len(vals) == 0:
                continue
            sizes = _sizes(opts.get("sizes", [f"1-{len(vals)}"])[0], len(vals))
            for stat in stats:
                res = coherence.bootstrap_statistic(vals, stat, sizes, resamples, confs, seed,
                                                    jobs=args.jobs)
                reports.emit_plot_data(res, "bootstrap", out / f"bootstrap_{name[:-2]}_{stat}",
                                       manifest)
                if stat == "median":
                    c50 = coherence.crossing_size(res, confs[0])
                    print(f"{name[:-2]} median: 20% error at {100 * confs[0]:g}% "
                          f"confidence from {c50} qubits")
    for spec in args.pearson or []:
        opts = _options(spec)
        obs = opts.get("observable", ["t1"])[0]
        col = {"t1": "t1_s", "t2e": "t2e_s", "qubit_freq_error": "qubit_freq_error_hz",
               "resonator_freq_error": "resonator_freq_error_hz"}.get(obs)
        if col is None:
            raise UsageError(f"unknown observable {obs!r}")
        res = coherence.pearson_spatial(
            positions, values[col], int(opts.get("bins", ["10"])[0]),
            float(opts.get("fraction", ["0.5"])[0]), int(opts.get("resamples", ["1000"])[0]),
            seed=seed)
        reports.emit_plot_data(res, "correlation", out / f"correlation_{obs}", manifest)
    print(f"{len(records)} qubit(s); median T1 {cohort['t1'] * 1e6:.4g} us, "
          f"median T2e {cohort['t2e'] * 1e6:.4g} us")
    return {"median_of_medians": cohort}


# --- thermal ----------------------------------------------------------------

def cmd_thermal(args) -> dict:
    payloads = thermal.load_payloads(args.payload)
    modes = args.mode or list(payloads)
    unknown = [m for m in modes if m not in payloads]
    if unknown:
        raise QpackError(f"unknown mode(s) {', '.join(unknown)}; available: {', '.join(payloads)}")
    solved = {m: payloads[m].evaluate() for m in modes}
    out = _out(args)
    inputs = [args.payload] if args.payload else []
    manifest = _manifest(args, "thermal", {"modes": modes, "budget": args.budget,
                                           "contraction": args.contraction}, inputs)
    rows = []
    summary = {}
    for m, rep in solved.items():
        for row in thermal.report_rows(rep):
            rows.append({"mode": m, **row})
        h = thermal.headroom(rep, args.budget)
        summary[m] = {"mxc_total_w": rep.stage("MXC").total, "headroom": h,
                      "over_budget": h >= 1.0}
        flag = "  OVER BUDGET" if h >= 1.0 else ""
        print(f"{m}: MXC {rep.stage('MXC').total * 1e6:.4g} uW, "
              f"{rep.stage('MXC').temperature * 1e3:.3g} mK, headroom {h:.3g}{flag}")
    if args.contraction:
        parts = [p.strip() for p in args.contraction.split(",")]
        if len(parts) != 3:
            raise UsageError("--contraction expects material_a,material_b,radius")
        table = thermal.load_contraction_table(args.contraction_table)
        for name in parts[:2]:
            if name not in table:
                raise QpackError(f"no contraction value for {name!r}")
        radius = _quantity("length")(parts[2])
        travel = thermal.differential_contraction(radius, table[parts[0]], table[parts[1]])
        summary["contraction"] = {"material_a": parts[0], "material_b": parts[1],
                                  "radius_m": radius, "travel_m": travel}
        print(f"differential contraction {parts[0]}/{parts[1]} at {radius * 1e3:g} mm: "
              f"{travel * 1e6:.4g} um")
    reports.write_report(out / "thermal", rows, args.report, manifest,
                         {"summary": summary, "note": thermal.CALIBRATION_BASIS})
    reports.emit_plot_data(solved, "thermal", out / "plot_thermal", manifest)
    return summary


# --- pipeline ---------------------------------------------------------------

_STAGE_ORDER = ("modes", "loss", "readout", "coherence", "thermal")


def _flag_list(section: dict, base: Path) -> list[str]:
    argv = []
    for key, value in section.items():
        flag = "--" + key.replace("_", "-")
        values = value if isinstance(value, list) else [value]
        for v in values:
            if isinstance(v, bool):
                if v:
                    argv.append(flag)
                continue
            v = str(v)
            if v.startswith("./"):
                v = str(base / v[2:])
            argv += [flag, v]
    return argv


def cmd_pipeline(args) -> dict:
    config_path = args.config
    try:
        doc = tomllib.loads(config_path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise QpackError(f"{config_path}: {exc}") from None
    seed = _seed(args)
    out = _out(args)
    base = config_path.parent
    parser = build_parser()
    results = {}
    for stage in _STAGE_ORDER:
        if stage not in doc:
            continue
        section = dict(doc[stage])
        if stage == "loss":
            field = str(section.get("field", ""))
            if field.startswith("modes:"):
                k = int(field.split(":", 1)[1])
                section["field"] = str(out / "modes" / f"mode_{k:03d}.fg")
                if section.get("frequency") == "mode":
                    section["frequency"] = repr(float(results["modes"]["frequencies"][k - 1]))
        argv = ["--seed", str(seed), "--jobs", str(args.jobs), stage,
                "--out", str(out / stage), "--report", args.report] + _flag_list(section, base)
        sub = parser.parse_args(argv)
        sub.timestamp_inputs = [config_path]
        print(f"[{stage}]")
        results[stage] = sub.handler(sub)
    manifest = _manifest(args, "pipeline", doc, [config_path])
    reports.atomic_write_text(out / "manifest.json", reports.json_text(
        {"stages": [s for s in _STAGE_ORDER if s in doc]}, manifest))
    return results


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="seed for all randomness (default: fresh entropy, recorded)")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS,
                        help="worker cap; results do not depend on it")

    p = argparse.ArgumentParser(
        prog="qpack-lab", parents=[common],
        description="packaging design and characterization tools for multi-qubit processors")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def add(name, handler, help_text):
        sp = sub.add_parser(name, help=help_text, parents=[common])
        sp.set_defaults(handler=handler)
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--report", choices=("csv", "json"), default="csv")
        return sp

    sp = add("modes", cmd_modes, "box-mode spectrum of a pillared cavity")
    sp.add_argument("--geometry", type=resolve_path, required=True,
                    help="geometry file, or builtin:geometry_pillars.txt")
    sp.add_argument("--materials", type=resolve_path)
    sp.add_argument("--spacing", type=_quantity("length"), default=0.25e-3,
                    help="grid spacing (default 0.25 mm)")
    sp.add_argument("--n-modes", type=int, default=16)
    sp.add_argument("--shift", type=_quantity("frequency"), default=0.0,
                    help="find modes nearest this frequency")
    sp.add_argument("--tolerance", type=float, default=1e-9)
    sp.add_argument("--bands", default=DEFAULT_BANDS,
                    help="protected bands, label:low-high in Hz, comma separated")
    sp.add_argument("--export-fields", type=int, default=0, metavar="N",
                    help="write field files for the N lowest modes")

    sp = add("loss", cmd_loss, "packaging loss budget over a field grid")
    sp.add_argument("--field", type=resolve_path, required=True)
    sp.add_argument("--materials", type=resolve_path)
    sp.add_argument("--channels", type=resolve_path, default="builtin:channels_default.txt")
    sp.add_argument("--frequency", type=_quantity("frequency"), required=True)
    sp.add_argument("--seam-bound-t1", type=_quantity("time"),
                    help="measured T1 for seam-conductance lower bounds")
    sp.add_argument("--t1-bound", metavar="LOW:HIGH:N",
                    help="evaluate the T1 limit across a frequency band")

    sp = add("readout", cmd_readout, "double-Gaussian readout analysis")
    sp.add_argument("--shots", type=resolve_path, help="shot CSV or directory of them")
    sp.add_argument("--t1", type=resolve_path, help="CSV qubit_id,t1_s")
    sp.add_argument("--synth", type=resolve_path, metavar="TRUTH",
                    help="generate shots from a truth file instead of reading them")
    sp.add_argument("--full-thermal", action="store_true",
                    help="do not halve the thermal term")

    sp = add("coherence", cmd_coherence, "coherence fits, bootstrap, correlations")
    sp.add_argument("--wafer", type=resolve_path)
    sp.add_argument("--decays", type=Path, help="directory holding manifest.csv")
    sp.add_argument("--synth", metavar="n=105,curves=10", help="generate a synthetic wafer")
    sp.add_argument("--r2", type=float, default=coherence.R2_THRESHOLD)
    sp.add_argument("--bootstrap", metavar="sizes=1-105,resamples=2000,conf=50,90,99")
    sp.add_argument("--pearson", action="append",
                    metavar="observable=t1,bins=10,fraction=0.5,resamples=1000")

    sp = add("thermal", cmd_thermal, "refrigerator heat loads and stage temperatures")
    sp.add_argument("--payload", type=resolve_path, help="payload file (default: bundled presets)")
    sp.add_argument("--mode", action="append", help="payload mode (default: all)")
    sp.add_argument("--budget", type=_quantity("power"), default=25e-6,
                    help="MXC cooling budget for headroom (default 25 uW)")
    sp.add_argument("--contraction", metavar="A,B,RADIUS")
    sp.add_argument("--contraction-table", type=resolve_path)

    sp = add("pipeline", cmd_pipeline, "run every stage from one config file")
    sp.add_argument("--config", type=resolve_path, default="builtin:demo_pipeline.toml")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.seed = getattr(args, "seed", None)
    args.jobs = getattr(args, "jobs", 1)
    if args.jobs < 1:
        parser.print_usage(sys.stderr)
        print("qpack-lab: error: --jobs must be >= 1", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.handler(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"qpack-lab: error: {exc}", file=sys.stderr)
        return 2
    except QpackError as exc:
        print(f"qpack-lab {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


run = main

if __name__ == "__main__":
    sys.exit(main())

"""Command-line runner for bundled and user experiment configs.

    dualdrag run <config> [--seed N] [--workers N] [--out DIR] [--format csv|json]
    dualdrag validate <config>

Exit codes: 0 success, 2 invalid config, 3 numeric failure during the run
(partial artifacts are flagged in the manifest), 4 output not writable.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .analytics import eta_correction, predict_peaks, train_amplitude
from .errors import DualDragError
from .gatecal import (GateCalibration, RefinementSettings, calibrate, initial_calibration,
                      driven_for, sqrtx_fidelity)
from .model import CouplingSpec, ModeSpec, SystemSpec, detuning_report
from .propagator import PropagationSettings
from .protocols import (FILTER_HEADER, RB_HEADER, SCAN_HEADER, DeltaSearch, Pipeline, Setup,
                        calibrate_setup, fit_epc, fit_expc, fmt, parameter_scan, peak_times,
                        resolve_drag_set, run_error_filter, run_rb)
from .pulseshape import hole_residuals, sample_waveform, sine4_pulse, spectral_peak, spectrum_rows
from .units import mhz, to_mhz

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OUTPUT = 0, 2, 3, 4
PROTOCOLS = ("pulse_report", "calibrate", "error_filter", "rb", "scan", "analytic_report")
BUNDLED = ("fig1_spectra", "fig2_vz_scan", "fig3_errorfilter", "fig3_rb_pair", "fig3_gscan",
           "fig4_tls_detuning", "fig4_tls_gatetime", "supp_dragsets", "supp_two_spectators",
           "supp_leakage")

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT1 = {"type": "integer", "minimum": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["name", "protocol", "gate"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "protocol": {"enum": list(PROTOCOLS)},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "output": {"type": "string"},
        "system": {
            "type": "object",
            "required": ["modes", "target"],
            "additionalProperties": False,
            "properties": {
                "modes": {"type": "array", "minItems": 1, "items": {
                    "type": "object",
                    "required": ["label", "kind", "frequency_GHz"],
                    "additionalProperties": False,
                    "properties": {
                        "label": {"type": "string", "minLength": 1},
                        "kind": {"enum": ["transmon", "tls"]},
                        "frequency_GHz": _POS,
                        "anharmonicity_MHz": _NUM,
                        "levels": {"type": "integer", "minimum": 2},
                    }}},
                "couplings": {"type": "array", "items": {
                    "type": "object",
                    "required": ["modes", "g_MHz"],
                    "additionalProperties": False,
                    "properties": {
                        "modes": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
                        "g_MHz": _NUM,
                    }}},
                "target": {"type": "string"},
                "spectators": {"type": "array", "items": {"type": "string"}},
                "leak_nu": _NUM,
            }},
        "gate": {
            "type": "object",
            "required": ["t_g_ns"],
            "additionalProperties": False,
            "properties": {
                "shape": {"enum": ["sine4"]},
                "t_g_ns": _POS,
                "eta_MHz": _NUM,
                "dt_ns": _POS,
                "refine": {"type": "boolean"},
                "schedule": {"type": "array", "items": _INT1, "minItems": 1},
                "drag_sets": {"type": "array", "minItems": 1, "items": {
                    "type": "object",
                    "required": ["name"],
                    "additionalProperties": False,
                    "properties": {
                        "name": {"enum": ["leakage_only", "single", "dual", "mirrored_only", "custom"]},
                        "label": {"type": "string"},
                        "drag_MHz": {"type": "array", "items": _NUM},
                        "optimize": {
                            "type": "object",
                            "additionalProperties": False,
                            "properties": {
                                "objective": {"enum": ["pulse_train", "rb_tail"]},
                                "span_MHz": _POS,
                                "points": {"type": "integer", "minimum": 3},
                                "offset_MHz": _NUM,
                                "rb_length": _INT1,
                                "rb_sequences": {"type": "integer", "minimum": 10},
                            }},
                    }}},
            }},
        "params": {"type": "object"},
    },
}


class ConfigError(Exception):
    def __init__(self, diagnostics: list[dict]):
        super().__init__("; ".join(f"{d['field']}: {d['message']}" for d in diagnostics))
        self.diagnostics = diagnostics


# --- config loading --------------------------------------------------------

def resolve_config_path(ref: str) -> Path:
    path = Path(ref)
    if path.exists():
        return path
    name = ref[:-5] if ref.endswith(".json") else ref
    if name in BUNDLED:
        return Path(str(resources.files("dualdrag") / "configs" / f"{name}.json"))
    raise FileNotFoundError(ref)


def canonical_digest(config: dict) -> str:
    """SHA-256 of the config re-serialized with sorted keys and no whitespace."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _field(path) -> str:
    return "/".join(str(p) for p in path) or "<root>"


def validate_config(config) -> list[dict]:
    """Schema and semantic diagnostics; empty when the config is runnable."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    diags = [{"field": _field(e.absolute_path), "message": e.message}
             for e in sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))]
    if diags:
        return diags
    proto = config["protocol"]
    if proto not in ("pulse_report", "analytic_report") and "system" not in config:
        diags.append({"field": "system", "message": f"protocol {proto!r} needs a system"})
    if "system" in config:
        try:
            build_system(config["system"])
        except (DualDragError, KeyError, ValueError) as exc:
            diags.append({"field": "system", "message": str(exc)})
    for i, ds in enumerate(config["gate"].get("drag_sets", [])):
        if ds["name"] == "custom" and "drag_MHz" not in ds:
            diags.append({"field": f"gate/drag_sets/{i}", "message": "custom set needs drag_MHz"})
        if ds["name"] != "custom" and proto != "pulse_report" and "system" in config:
            if not config["system"].get("spectators"):
                diags.append({"field": f"gate/drag_sets/{i}",
                              "message": "named DRAG sets need a spectator to place Delta"})
    params = config.get("params", {})
    if proto == "scan":
        if params.get("kind") not in ("coupling_g", "detuning", "gate_time"):
            diags.append({"field": "params/kind", "message": "must be coupling_g, detuning or gate_time"})
        if not params.get("grid"):
            diags.append({"field": "params/grid", "message": "must be a nonempty list"})
    if proto in ("rb", "scan"):
        if len(params.get("lengths", [1] * 4)) < 4:
            diags.append({"field": "params/lengths", "message": "need at least 4 lengths"})
        if params.get("sequences", 30) < 10:
            diags.append({"field": "params/sequences", "message": "need at least 10 sequences"})
    if proto == "error_filter" and params.get("pairs", 1) < 1:
        diags.append({"field": "params/pairs", "message": "must be >= 1"})
    return diags


def build_system(sys_cfg: dict) -> SystemSpec:
    modes = tuple(ModeSpec(m["label"], m["kind"], m["frequency_GHz"], m.get("anharmonicity_MHz"),
                           m.get("levels")) for m in sys_cfg["modes"])
    couplings = tuple(CouplingSpec(c["modes"][0], c["modes"][1], c["g_MHz"])
                      for c in sys_cfg.get("couplings", []))
    system = SystemSpec(modes, couplings)
    system.index(sys_cfg["target"])
    for s in sys_cfg.get("spectators", []):
        system.index(s)
    return system


def load_config(path: Path) -> dict:
    try:
        config = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError([{"field": "<document>", "message": f"invalid JSON: {exc}"}]) from exc
    diags = validate_config(config)
    if diags:
        raise ConfigError(diags)
    return config


# --- run context -----------------------------------------------------------

@dataclass
class RunContext:
    config: dict
    out: Path
    fmt: str
    seed: int
    workers: int
    tables: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    calibrations: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def table(self, name: str, header, rows) -> None:
        rows = [tuple(r) for r in rows]
        self.tables[name] = (tuple(header), rows)
        if self.fmt == "csv":
            path = self.out / f"{name}.csv"
            from .protocols import write_table

            write_table(path, header, rows)
            self.files.append(path.name)

    def finish_json(self) -> None:
        if self.fmt != "json":
            return
        doc = {"name": self.config["name"], "tables": {
            name: {"header": list(h), "rows": [[_json_num(v) for v in r] for r in rows]}
            for name, (h, rows) in self.tables.items()}}
        path = self.out / "results.json"
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        self.files.append(path.name)


def _json_num(v):
    if v is None or isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return int(v)
    x = float(fmt(v))
    return x if np.isfinite(x) else None


def _label(ds: dict) -> str:
    if "label" in ds:
        return ds["label"]
    return ds["name"] + ("_opt" if "optimize" in ds else "")


def _pipeline(config: dict, ds: dict, seed: int) -> Pipeline:
    gate = config["gate"]
    params = config.get("params", {})
    refine = None
    if gate.get("refine", True):
        refine = RefinementSettings(schedule=tuple(gate.get("schedule", (1, 2, 4, 8, 16))))
    search = None
    if "optimize" in ds:
        o = ds["optimize"]
        search = DeltaSearch(o.get("objective", "rb_tail"), o.get("span_MHz", 5.0), o.get("points", 41),
                             o.get("offset_MHz", 0.0), o.get("rb_length", 300), o.get("rb_sequences", 10))
    return Pipeline(t_g=float(gate["t_g_ns"]), drag=ds["name"],
                    custom_drag_mhz=tuple(ds.get("drag_MHz", ())), eta_mhz=float(gate.get("eta_MHz", 0.0)),
                    lengths=tuple(params.get("lengths", (2, 30, 75, 150, 300, 600))),
                    sequences=int(params.get("sequences", 30)), seed=seed,
                    readout=params.get("readout", "direct"), refine=refine, delta_search=search,
                    dt=float(gate.get("dt_ns", 0.05)))


def _setup(config: dict, spectator: str | None = None) -> Setup:
    s = config["system"]
    system = build_system(s)
    spec = spectator or (s.get("spectators") or [None])[0]
    if spec is None:
        raise DualDragError("no spectator configured")
    return Setup(system, s["target"], spec, float(s.get("leak_nu", 0.0)))


# --- protocols -------------------------------------------------------------

def _pulse_report(ctx: RunContext) -> None:
    cfg, gate, params = ctx.config, ctx.config["gate"], ctx.config.get("params", {})
    t_g = float(gate["t_g_ns"])
    amp = params.get("amplitude_rad_per_ns", 4 * np.pi / (3 * t_g))
    span, step = float(params.get("freq_span_MHz", 300.0)), float(params.get("freq_step_MHz", 1.0))
    grid_mhz = np.arange(-span, span + 0.5 * step, step)
    delta = float(params.get("delta_MHz", 40.0))
    alpha = float(params.get("alpha_MHz", -194.6))
    columns, summary = [], []
    for ds in gate.get("drag_sets", [{"name": "custom", "drag_MHz": [], "label": "plain"}]):
        label = _label(ds)
        drags = resolve_drag_set(ds["name"], alpha, delta, ds.get("drag_MHz", ()))
        spec = sine4_pulse(t_g, amp, tuple(mhz(d) for d in drags), mhz(gate.get("eta_MHz", 0.0)))
        rows = spectrum_rows(spec, mhz(grid_mhz))
        ctx.table(f"spectrum_{label}", ("f_MHz", "re", "im", "abs_norm"), rows)
        wf = sample_waveform(spec, float(params.get("waveform_dt_ns", 0.1)))
        ctx.table(f"waveform_{label}", ("t_ns", "re", "im"),
                  [(t, s.real, s.imag) for t, s in zip(wf.times, wf.samples)])
        columns.append((label, [r[3] for r in rows]))
        peak_w, _ = spectral_peak(spec)
        worst = max((r for _, r in hole_residuals(spec, mhz(np.array(drags)))), default=0.0) if drags else 0.0
        summary.append((label, to_mhz(peak_w), worst))
    ctx.table("spectra", ("f_MHz",) + tuple(c[0] for c in columns),
              [(f,) + tuple(c[1][i] for c in columns) for i, f in enumerate(grid_mhz)])
    ctx.table("pulse_summary", ("label", "peak_shift_MHz", "max_hole_residual"), summary)


def _calibrate(ctx: RunContext) -> None:
    cfg, gate, params = ctx.config, ctx.config["gate"], ctx.config.get("params", {})
    system = build_system(cfg["system"])
    target = cfg["system"]["target"]
    spectators = cfg["system"].get("spectators", [])
    etas = params.get("eta_MHz_grid", [gate.get("eta_MHz", 0.0)])
    rows = []
    for ds in gate.get("drag_sets", [{"name": "leakage_only"}]):
        label = _label(ds)
        alpha = system.mode(target).anharmonicity_mhz
        delta = to_mhz(detuning_report(system, target, spectators[0])["dressed"]) if spectators else 0.0
        drags = resolve_drag_set(ds["name"], alpha, delta, ds.get("drag_MHz", ()))
        for eta in etas:
            cal = initial_calibration(system, target, float(gate["t_g_ns"]), drags, float(eta))
            driven = driven_for(system, target, cal, settings=PropagationSettings(dt=gate.get("dt_ns", 0.05)))
            schedule = tuple(gate.get("schedule", (1, 2, 4, 8, 16)))
            cal = calibrate(driven, cal, RefinementSettings(schedule=schedule))
            ctx.calibrations[f"{label}@eta={fmt(eta)}"] = cal.to_dict()
            rows.append((label, eta, cal.amplitude, to_mhz(cal.amplitude), cal.vz_phase,
                         1.0 - sqrtx_fidelity(driven, cal)))
    ctx.table("calibration", ("label", "eta_MHz", "amplitude_rad_per_ns", "amplitude_MHz",
                              "vz_phase_rad", "sqrtx_infidelity"), rows)


def _error_filter(ctx: RunContext) -> None:
    cfg, params = ctx.config, ctx.config.get("params", {})
    tau = np.linspace(params.get("tau_start_ns", 0.0), params.get("tau_stop_ns", 49.75),
                      int(params.get("tau_points", 200)))
    pairs = int(params.get("pairs", 50))
    summary = []
    spectators = cfg["system"].get("spectators", [])
    for ds in cfg["gate"].get("drag_sets", [{"name": "leakage_only"}]):
        label = _label(ds)
        setup = _setup(cfg)
        driven, cal, delta_opt = calibrate_setup(setup, _pipeline(cfg, ds, ctx.seed))
        ctx.calibrations[label] = cal.to_dict()
        for spec in spectators:
            res = run_error_filter(driven, cal, spec, pairs, tau)
            name = f"filter_{label}" if len(spectators) == 1 else f"filter_{label}_{spec}"
            ctx.table(name, FILTER_HEADER, res.rows())
            d0 = detuning_report(setup.system, setup.target, spec)["dressed"]
            predicted = predict_peaks("ZX", d0, 2 * cal.t_g, float(tau[-1]), 2 * cal.vz_phase)
            summary.append((label, spec, float(res.p_e_spectator.max()), float(res.p_e_target.max()),
                            float(res.p_leak_target.max()), delta_opt if delta_opt is not None else float("nan"),
                            " ".join(fmt(t) for t in peak_times(res)), " ".join(fmt(t) for t in predicted)))
    ctx.table("filter_summary", ("label", "spectator", "max_pe_spectator", "max_pe_target",
                                 "max_leak_target", "delta_opt_MHz", "peaks_ns", "predicted_zx_ns"), summary)


def _rb(ctx: RunContext) -> None:
    cfg = ctx.config
    fits = []
    for ds in cfg["gate"].get("drag_sets", [{"name": "leakage_only"}]):
        label = _label(ds)
        pipe = _pipeline(cfg, ds, ctx.seed)
        setup = _setup(cfg)
        driven, cal, delta_opt = calibrate_setup(setup, pipe)
        ctx.calibrations[label] = cal.to_dict()
        rb = run_rb(driven, cal, setup.spectator, pipe.lengths, pipe.sequences, pipe.seed,
                    ctx.workers, pipe.readout)
        ctx.table(f"rb_{label}", RB_HEADER, rb.rows())
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            epc, expc = fit_epc(rb), fit_expc(rb)
        fits.append((label, epc["EPC"], epc.errors["EPC"], expc["ExPC"], expc.errors["ExPC"],
                     expc["Gamma"], delta_opt if delta_opt is not None else float("nan")))
    ctx.table("rb_fits", ("label", "epc", "epc_err", "expc", "expc_err", "gamma", "delta_opt_MHz"), fits)


def _scan(ctx: RunContext) -> None:
    cfg, params = ctx.config, ctx.config.get("params", {})
    for ds in cfg["gate"].get("drag_sets", [{"name": "leakage_only"}]):
        label = _label(ds)
        rows = parameter_scan(params["kind"], [float(x) for x in params["grid"]], _setup(cfg),
                              _pipeline(cfg, ds, ctx.seed), ctx.workers)
        ctx.table(f"scan_{label}", SCAN_HEADER, [r.csv_row() for r in rows])
        failed = [(r.param, r.error) for r in rows if r.error]
        for param, err in failed:
            ctx.notes.append(f"{label} at {fmt(param)}: {err}")


def _analytic_report(ctx: RunContext) -> None:
    params = ctx.config.get("params", {})
    omega = mhz(params.get("omega_MHz", 10.0))
    g = mhz(params.get("g_MHz", 1.0))
    d0 = mhz(params.get("delta0_MHz", 45.0))
    nu = float(params.get("nu", 0.0))
    t_g = float(ctx.config["gate"]["t_g_ns"])
    n = int(params.get("pairs", 50))
    tau = np.linspace(0.0, params.get("tau_stop_ns", 50.0), int(params.get("tau_points", 201)))
    rows = [(t, train_amplitude("ZX_ge", n, omega, g, nu, d0, t_g, t),
             train_amplitude("ZX_ee", n, omega, g, nu, d0, t_g, t),
             train_amplitude("IX_ge", n, omega, g, nu, d0, t_g, t)) for t in tau]
    ctx.table("train_amplitude", ("tau_ns", "zx_ge", "zx_ee", "ix_ge"), rows)
    peaks = [("ZX", t) for t in predict_peaks("ZX", d0, t_g, float(tau[-1]))]
    peaks += [("IX", t) for t in predict_peaks("IX", d0, t_g, float(tau[-1]))]
    ctx.table("predicted_peaks", ("kind", "tau_ns"), peaks)
    ctx.table("eta_correction", ("omega_MHz", "eta_MHz"), [(to_mhz(omega), to_mhz(eta_correction(omega, d0)))])


HANDLERS = {"pulse_report": _pulse_report, "calibrate": _calibrate, "error_filter": _error_filter,
            "rb": _rb, "scan": _scan, "analytic_report": _analytic_report}


# --- entry points ----------------------------------------------------------

def _emit(obj: dict, stream=None) -> None:
    (stream or sys.stdout).write(json.dumps(obj, sort_keys=True) + "\n")


def write_manifest(ctx: RunContext, digest: str, wall: float, status: str, error: str | None = None) -> None:
    manifest = {
        "config_name": ctx.config["name"],
        "config_digest": digest,
        "protocol": ctx.config["protocol"],
        "seed": ctx.seed,
        "workers": ctx.workers,
        "version": __version__,
        "format": ctx.fmt,
        "wall_time_s": round(wall, 3),
        "calibrations": ctx.calibrations,
        "outputs": sorted(ctx.files),
        "status": status,
        "notes": ctx.notes,
    }
    if error is not None:
        manifest["error"] = error
    (ctx.out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n",
                                           encoding="utf-8")


def run_config(ref: str, seed: int | None = None, workers: int = 1, out: str | None = None,
               fmt_: str = "csv") -> int:
    try:
        path = resolve_config_path(ref)
        config = load_config(path)
    except FileNotFoundError:
        _emit({"status": "error", "kind": "config", "diagnostics": [
            {"field": "<path>", "message": f"config not found: {ref}"}]})
        return EXIT_CONFIG
    except ConfigError as exc:
        _emit({"status": "error", "kind": "config", "diagnostics": exc.diagnostics})
        return EXIT_CONFIG
    out_dir = Path(out) if out else Path(config.get("output", f"out/{config['name']}"))
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        _emit({"status": "error", "kind": "output", "message": str(exc)})
        return EXIT_OUTPUT
    run_seed = int(config.get("seed", 0) if seed is None else seed)
    ctx = RunContext(config, out_dir, fmt_, run_seed, max(1, int(workers)))
    digest = canonical_digest(config)
    start = time.perf_counter()
    try:
        HANDLERS[config["protocol"]](ctx)
        ctx.finish_json()
    except (DualDragError, ArithmeticError, np.linalg.LinAlgError, ValueError, RuntimeError) as exc:
        err = f"{type(exc).__name__}: {exc}"
        try:
            ctx.finish_json()
            write_manifest(ctx, digest, time.perf_counter() - start, "partial", err)
        except OSError:
            pass
        _emit({"status": "error", "kind": "numeric", "message": err, "partial_outputs": sorted(ctx.files)})
        return EXIT_NUMERIC
    except OSError as exc:
        _emit({"status": "error", "kind": "output", "message": str(exc)})
        return EXIT_OUTPUT
    write_manifest(ctx, digest, time.perf_counter() - start, "complete")
    _emit({"status": "ok", "out": str(out_dir), "outputs": sorted(ctx.files)})
    return EXIT_OK


def validate_command(ref: str) -> int:
    try:
        path = resolve_config_path(ref)
        config = load_config(path)
    except FileNotFoundError:
        _emit({"status": "error", "diagnostics": [{"field": "<path>", "message": f"config not found: {ref}"}]})
        return EXIT_CONFIG
    except ConfigError as exc:
        _emit({"status": "error", "diagnostics": exc.diagnostics})
        return EXIT_CONFIG
    _emit({"status": "ok", "name": config["name"], "digest": canonical_digest(config)})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualdrag", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config (path or bundled name)")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--out", default=None)
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        if args.seed is not None and not 0 <= args.seed < 2**64:
            _emit({"status": "error", "kind": "config",
                   "diagnostics": [{"field": "--seed", "message": "must be an unsigned 64-bit integer"}]})
            return EXIT_CONFIG
        return run_config(args.config, args.seed, args.workers, args.out, args.format)
    return validate_command(args.config)


if __name__ == "__main__":
    sys.exit(main())

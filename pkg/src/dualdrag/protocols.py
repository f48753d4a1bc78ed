"""Simulated experiments: interference error filter, randomized benchmarking, fits and scans."""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import optimize

from .analytics import p1_closed_form
from .errors import DualDragError, FitWarning, ParameterError
from .gatecal import (GateCalibration, RefinementSettings, calibrate, clifford_table, compile_u3,
                      initial_calibration, optimize_delta, driven_for)
from .model import SystemSpec, detuning_report, two_mode_system
from .propagator import (DrivenSystem, IdealSwap, ProjectGround, PropagationSettings,
                         evolve_sequence, ground_state, sequence_unitary)
from .units import to_mhz

DEFAULT_LENGTHS = (2, 30, 75, 150, 300, 600)
DEFAULT_SEQUENCES = 30


# --- error filter ----------------------------------------------------------

@dataclass(frozen=True)
class ErrorFilterResult:
    tau_grid: np.ndarray
    p_e_target: np.ndarray
    p_e_spectator: np.ndarray
    pairs: int
    p_leak_target: np.ndarray | None = None

    def rows(self):
        leak = self.p_leak_target if self.p_leak_target is not None else np.zeros_like(self.tau_grid)
        return list(zip(self.tau_grid, self.p_e_target, self.p_e_spectator, leak))


def x_gate_unitary(driven: DrivenSystem, cal: GateCalibration) -> np.ndarray:
    """Pi gate made of two calibrated sqrt(X) gates."""
    return sequence_unitary(driven, cal.gate(driven.target) * 2)


def run_error_filter(driven: DrivenSystem, cal: GateCalibration, spectator: str, pairs: int,
                     tau_grid: Sequence[float]) -> ErrorFilterResult:
    """``2 * pairs`` pi gates, each followed by a wait ``tau``, from the global ground state."""
    if pairs < 1:
        raise ParameterError("need at least one pi-gate pair")
    tau_grid = np.asarray(tau_grid, dtype=float)
    x = x_gate_unitary(driven, cal)
    psi0 = ground_state(driven.system)
    pt, ps, pl = [], [], []
    for tau in tau_grid:
        step = driven.idle_unitary(tau) @ x
        psi = np.linalg.matrix_power(step, 2 * pairs) @ psi0
        pops = driven.populations(psi, driven.target)
        pt.append(1.0 - pops[0])
        pl.append(float(np.sum(pops[2:])))
        ps.append(driven.excited(psi, spectator))
    clip = lambda v: np.clip(np.array(v, dtype=float), 0.0, 1.0)
    return ErrorFilterResult(tau_grid, clip(pt), clip(ps), pairs, clip(pl))


def peak_times(result: ErrorFilterResult, which: str = "spectator", rel_height: float = 0.3) -> np.ndarray:
    """Centroids of the trace regions above ``rel_height`` of the maximum.

    At large N a crosstalk peak saturates and splits into a doublet; the
    intensity-weighted centre of the region is its position.
    """
    y = {"spectator": result.p_e_spectator, "target": result.p_e_target,
         "leak": result.p_leak_target}[which]
    x = result.tau_grid
    above = y >= rel_height * float(np.max(y))
    centers = []
    i = 0
    while i < len(y):
        if above[i]:
            j = i
            while j + 1 < len(y) and above[j + 1]:
                j += 1
            w = y[i:j + 1]
            centers.append(float(np.sum(w * x[i:j + 1]) / np.sum(w)))
            i = j + 1
        else:
            i += 1
    return np.array(centers)


# --- randomized benchmarking -----------------------------------------------

@dataclass(frozen=True)
class RBResult:
    lengths: np.ndarray
    survival: np.ndarray
    spectator_excitation: np.ndarray
    sequences_per_length: int
    seed: int
    readout: str = "direct"

    def rows(self):
        return [(int(m), s, p) for m, s, p in zip(self.lengths, self.survival, self.spectator_excitation)]


def clifford_unitaries(driven: DrivenSystem, cal: GateCalibration) -> list[np.ndarray]:
    return [sequence_unitary(driven, compile_u3(p, cal, driven.target)) for p in clifford_table().params]


def tls_excitation_readout(driven: DrivenSystem, state: np.ndarray, qubit: str, tls: str) -> float:
    """Reset the qubit, swap the TLS excitation into it, and read the qubit."""
    psi = evolve_sequence(driven, state, [ProjectGround(qubit), IdealSwap(qubit, tls)])
    return driven.excited(psi, qubit)


@dataclass(frozen=True)
class _RBJob:
    system: SystemSpec
    target: str
    spectator: str
    cal: GateCalibration
    leaks: tuple
    settings: PropagationSettings
    length: int
    sequences: int
    seed: int
    readout: str


def _rb_length(job: _RBJob, driven: DrivenSystem | None = None,
               cliffords: list[np.ndarray] | None = None) -> tuple[float, float]:
    if driven is None:
        driven = driven_for(job.system, job.target, job.cal, dict(job.leaks), job.settings)
    if cliffords is None:
        cliffords = clifford_unitaries(driven, job.cal)
    table = clifford_table()
    psi0 = ground_state(driven.system)
    surv, spec = [], []
    for k in range(job.sequences):
        rng = np.random.default_rng([job.seed, job.length, k])
        idx = rng.integers(0, len(table), job.length)
        psi = psi0
        for i in idx:
            psi = cliffords[i] @ psi
        psi = cliffords[table.sequence_inverse(idx)] @ psi
        surv.append(float(driven.populations(psi, job.target)[0]))
        if job.readout == "tls":
            spec.append(tls_excitation_readout(driven, psi, job.target, job.spectator))
        else:
            spec.append(driven.excited(psi, job.spectator))
    return float(np.mean(surv)), float(np.mean(spec))


def run_rb(driven: DrivenSystem, cal: GateCalibration, spectator: str,
           lengths: Sequence[int] = DEFAULT_LENGTHS, sequences: int = DEFAULT_SEQUENCES,
           seed: int = 0, workers: int = 1, readout: str = "direct") -> RBResult:
    """Clifford RB on the target while monitoring the spectator.

    Every sequence draws from its own generator seeded by ``(seed, m, k)`` so
    the result does not depend on the number of workers or their schedule.
    ``readout="tls"`` reads the spectator through qubit reset and swap.
    """
    if sequences < 10:
        raise ParameterError("need at least 10 sequences per length")
    if readout not in ("direct", "tls"):
        raise ParameterError(f"unknown readout {readout!r}")
    lengths = np.asarray(lengths, dtype=int)
    if np.any(lengths < 0):
        raise ParameterError("lengths must be non-negative")
    jobs = [_RBJob(driven.system, driven.target, spectator, cal, tuple(sorted(driven.leaks.items())),
                   driven.settings, int(m), sequences, int(seed), readout) for m in lengths]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_rb_length, jobs))
    else:
        cl = clifford_unitaries(driven, cal)
        out = [_rb_length(j, driven, cl) for j in jobs]
    surv = np.clip([o[0] for o in out], 0.0, 1.0)
    spec = np.clip([o[1] for o in out], 0.0, 1.0)
    return RBResult(lengths, surv, spec, sequences, int(seed), readout)


# --- fits ------------------------------------------------------------------

@dataclass(frozen=True)
class FitReport:
    model: str
    params: dict[str, float]
    errors: dict[str, float]
    residual_norm: float
    notes: tuple[str, ...] = ()

    def __getitem__(self, key):
        return self.params[key]


def _stderr(cov, n):
    if cov is None or not np.all(np.isfinite(cov)):
        return [float("nan")] * n
    return [float(np.sqrt(max(cov[i, i], 0.0))) for i in range(n)]


def fit_epc(result: RBResult) -> FitReport:
    """Fit ``survival = A p^m + B``; ``EPC = (1 - p) / 2``."""
    m = np.asarray(result.lengths, dtype=float)
    y = np.asarray(result.survival, dtype=float)
    if len(m) < 4:
        raise ParameterError("need at least 4 lengths")
    notes = []
    if np.ptp(y) < 1e-12:
        warnings.warn("survival does not decay; EPC clamped to 0", FitWarning, stacklevel=2)
        return FitReport("exp_decay", {"A": 0.0, "B": float(y.mean()), "p": 1.0, "EPC": 0.0},
                         {"A": 0.0, "B": 0.0, "p": 0.0, "EPC": 0.0}, 0.0, ("non-decaying data",))

    def model(m, a, b, p):
        return a * p**m + b

    a0 = max(y[0] - 0.5, 1e-3)
    ratio = np.clip((y[-1] - 0.5) / a0, 1e-6, 1 - 1e-12)
    p0 = float(ratio ** (1.0 / max(m[-1] - m[0], 1.0)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", optimize.OptimizeWarning)
        popt, pcov = optimize.curve_fit(model, m, y, p0=[min(a0, 0.5), 0.5, p0],
                                        bounds=([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]), method="trf",
                                        max_nfev=20000)
    a, b, p = (float(v) for v in popt)
    ea, eb, ep = _stderr(pcov, 3)
    if p >= 1.0 - 1e-12:
        warnings.warn(f"fitted decay p = {p:.6g} >= 1; EPC clamped to 0", FitWarning, stacklevel=2)
        notes.append("p clamped to 1")
        p = 1.0
    resid = float(np.linalg.norm(model(m, *popt) - y))
    epc = (1.0 - p) / 2.0
    return FitReport("exp_decay", {"A": a, "B": b, "p": p, "EPC": epc},
                     {"A": ea, "B": eb, "p": ep, "EPC": ep / 2.0}, resid, tuple(notes))


def fit_expc(result: RBResult) -> FitReport:
    """Fit spectator excitation to the twirled-excitation plus damping model ``p1(m)``."""
    m = np.asarray(result.lengths, dtype=float)
    y = np.asarray(result.spectator_excitation, dtype=float)
    return fit_p1(m, y)


def fit_p1(m, y) -> FitReport:
    m = np.asarray(m, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(m) < 4:
        raise ParameterError("need at least 4 lengths")
    notes = []
    if np.all(y <= 0):
        return FitReport("p1", {"r_e": 0.0, "Gamma": 0.0, "ExPC": 0.0},
                         {"r_e": 0.0, "Gamma": 0.0, "ExPC": 0.0}, float(np.linalg.norm(y)), ())
    pos = m > 0
    slope = float(np.sum(m[pos] * y[pos]) / np.sum(m[pos] ** 2))
    r0 = max(abs(slope), 1e-9)

    def full(m, r, g):
        return p1_closed_form(m, r, g)

    def fixed(m, r):
        return p1_closed_form(m, r, 0.0)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", optimize.OptimizeWarning)
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            popt, pcov = optimize.curve_fit(full, m, y, p0=[r0, 1e-3], x_scale=[r0, 1e-3], method="trf", max_nfev=20000)
            r, g = (float(v) for v in popt)
            er, eg = _stderr(pcov, 2)
        except RuntimeError:
            g = -1.0
        if g < 0:
            popt, pcov = optimize.curve_fit(fixed, m, y, p0=[r0], x_scale=[r0], method="trf", max_nfev=20000)
            r, g = float(popt[0]), 0.0
            er, eg = _stderr(pcov, 1)[0], 0.0
            notes.append("Gamma clamped to 0")
    if notes:
        warnings.warn("negative damping rate; refit with Gamma = 0", FitWarning, stacklevel=3)
    if r < 0:
        warnings.warn("negative excitation rate clamped to 0", FitWarning, stacklevel=3)
        notes.append("r_e clamped to 0")
        r = 0.0
    resid = float(np.linalg.norm(p1_closed_form(m, r, g) - y))
    return FitReport("p1", {"r_e": r, "Gamma": g, "ExPC": r}, {"r_e": er, "Gamma": eg, "ExPC": er},
                     resid, tuple(notes))


# --- pipelines and scans ---------------------------------------------------

DRAG_SET_NAMES = ("leakage_only", "single", "dual", "mirrored_only", "custom")


@dataclass(frozen=True)
class Setup:
    """A system, the driven target, the monitored spectator and an optional drive leak ``nu``."""

    system: SystemSpec
    target: str = "Q0"
    spectator: str = "Q1"
    nu: float = 0.0

    def __post_init__(self):
        self.system.index(self.target)
        self.system.index(self.spectator)

    @classmethod
    def two_mode(cls, nu: float = 0.0, **kwargs) -> "Setup":
        system = two_mode_system(**kwargs)
        return cls(system, system.modes[0].label, system.modes[1].label, nu)

    @property
    def leaks(self) -> dict[str, float]:
        return {self.spectator: self.nu} if self.nu else {}

    @property
    def target_alpha_mhz(self) -> float:
        alpha = self.system.mode(self.target).anharmonicity_mhz
        if alpha is None:
            raise ParameterError("target has no anharmonicity")
        return float(alpha)

    def varied(self, kind: str, value: float) -> "Setup":
        """Copy with the target-spectator coupling (MHz) or detuning (MHz) replaced."""
        if kind == "coupling_g":
            pair = {self.target, self.spectator}
            couplings = tuple(replace(c, g_mhz=float(value)) if {c.mode_a, c.mode_b} == pair else c
                              for c in self.system.couplings)
            return replace(self, system=replace(self.system, couplings=couplings))
        if kind == "detuning":
            f0 = self.system.mode(self.target).frequency_ghz
            modes = tuple(replace(m, frequency_ghz=f0 + float(value) / 1e3) if m.label == self.spectator
                          else m for m in self.system.modes)
            return replace(self, system=replace(self.system, modes=modes))
        raise ParameterError(f"cannot vary {kind!r} on the system")


def resolve_drag_set(name: str, alpha_mhz: float, delta_mhz: float,
                     custom: Sequence[float] = ()) -> tuple[float, ...]:
    """Named DRAG sets: ``leakage_only`` {a}, ``single`` {a, D}, ``dual`` {a, D, -D}."""
    if name == "leakage_only":
        return (alpha_mhz,)
    if name == "single":
        return (alpha_mhz, delta_mhz)
    if name == "dual":
        return (alpha_mhz, delta_mhz, -delta_mhz)
    if name == "mirrored_only":
        return (delta_mhz, -delta_mhz)
    if name == "custom":
        return tuple(float(x) for x in custom)
    raise ParameterError(f"unknown DRAG set {name!r}")


@dataclass(frozen=True)
class DeltaSearch:
    objective: str = "rb_tail"
    span_mhz: float = 5.0
    points: int = 41
    offset_mhz: float = 0.0  # scan center relative to the dressed detuning
    rb_length: int = 300
    rb_sequences: int = 10


@dataclass(frozen=True)
class Pipeline:
    t_g: float = 25.0
    drag: str = "dual"
    custom_drag_mhz: tuple[float, ...] = ()
    eta_mhz: float = 0.0
    lengths: tuple[int, ...] = DEFAULT_LENGTHS
    sequences: int = DEFAULT_SEQUENCES
    seed: int = 0
    readout: str = "direct"
    refine: RefinementSettings | None = field(default_factory=RefinementSettings)
    delta_search: DeltaSearch | None = None
    dt: float = 0.05


@dataclass(frozen=True)
class PipelineResult:
    calibration: GateCalibration
    rb: RBResult
    epc: FitReport
    expc: FitReport
    delta_opt_mhz: float | None


def calibrate_setup(setup: Setup, pipe: Pipeline) -> tuple[DrivenSystem, GateCalibration, float | None]:
    """Build the system, choose the DRAG set, calibrate, optionally optimize the mirrored pair."""
    system = setup.system
    delta = to_mhz(detuning_report(system, setup.target, setup.spectator)["dressed"])
    drags = resolve_drag_set(pipe.drag, setup.target_alpha_mhz, delta, pipe.custom_drag_mhz)
    cal = initial_calibration(system, setup.target, pipe.t_g, drags, pipe.eta_mhz)
    driven = driven_for(system, setup.target, cal, setup.leaks, PropagationSettings(dt=pipe.dt))
    delta_opt = None
    search = pipe.delta_search
    if search is not None and pipe.drag in ("dual", "mirrored_only"):
        scan = optimize_delta(driven, cal, setup.spectator, search.objective,
                              center_mhz=abs(delta) + search.offset_mhz, span_mhz=search.span_mhz,
                              points=search.points, rb_length=search.rb_length,
                              rb_sequences=search.rb_sequences, seed=pipe.seed)
        delta_opt = scan.optimum_mhz
        cal = scan.calibration
    cal = calibrate(driven, cal, pipe.refine) if pipe.refine is not None else _coarse_only(driven, cal)
    return driven, cal, delta_opt


def _coarse_only(driven, cal):
    from .gatecal import coarse_amplitude, coarse_vz

    cal = cal.with_amplitude(coarse_amplitude(driven, cal))
    return cal.with_phase(coarse_vz(driven, cal))


def run_pipeline(setup: Setup, pipe: Pipeline, workers: int = 1) -> PipelineResult:
    driven, cal, delta_opt = calibrate_setup(setup, pipe)
    rb = run_rb(driven, cal, setup.spectator, pipe.lengths, pipe.sequences, pipe.seed, workers,
                pipe.readout)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FitWarning)
        epc, expc = fit_epc(rb), fit_expc(rb)
    return PipelineResult(cal, rb, epc, expc, delta_opt)


@dataclass(frozen=True)
class ScanRow:
    param: float
    epc: float
    epc_err: float
    expc: float
    expc_err: float
    delta_opt_mhz: float | None = None
    error: str | None = None

    def csv_row(self):
        return (self.param, self.epc, self.epc_err, self.expc, self.expc_err)


SCAN_KINDS = ("coupling_g", "detuning", "gate_time")


def parameter_scan(kind: str, grid: Sequence[float], setup: Setup, pipe: Pipeline,
                   workers: int = 1) -> list[ScanRow]:
    """Recalibrate and benchmark at every grid value; failures are recorded, not raised."""
    if kind not in SCAN_KINDS:
        raise ParameterError(f"unknown scan kind {kind!r}")
    if len(grid) == 0:
        raise ParameterError("scan grid is empty")
    rows = []
    for value in grid:
        s, p = setup, pipe
        if kind == "gate_time":
            p = replace(pipe, t_g=float(value))
        else:
            s = setup.varied(kind, value)
        try:
            res = run_pipeline(s, p, workers)
            rows.append(ScanRow(float(value), res.epc["EPC"], res.epc.errors["EPC"], res.expc["ExPC"],
                                res.expc.errors["ExPC"], res.delta_opt_mhz))
        except DualDragError as exc:
            nan = float("nan")
            rows.append(ScanRow(float(value), nan, nan, nan, nan, None, f"{type(exc).__name__}: {exc}"))
    return rows


# --- export ----------------------------------------------------------------

def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def write_table(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


FILTER_HEADER = ("tau_ns", "pe_target", "pe_spectator", "leak_target")
RB_HEADER = ("m", "survival", "spectator_pe")
SCAN_HEADER = ("param", "epc", "epc_err", "expc", "expc_err")

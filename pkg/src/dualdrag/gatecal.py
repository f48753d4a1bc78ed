"""Calibration of the sqrt(X) gate and U3 / Clifford compilation.

A calibrated gate is one drive pulse followed by a virtual-Z of phase
``vz_phase`` on the target.  Its conjugate is the same pulse with phase pi,
again followed by the virtual-Z.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import optimize

from .errors import (CalibrationRangeError, DegenerateCalibrationError, InsensitiveParameterWarning,
                     ParameterError, RefinementDivergenceError)
from .model import SystemSpec, dressed_transition
from .propagator import (DrivenSystem, PropagationSettings, Pulse, SequenceItem, VirtualZ,
                         evolve_sequence, ground_state)
from .pulseshape import PulseSpec, sine4_pulse
from .units import ghz, mhz, to_ghz

SQRT_X = np.array([[1, -1j], [-1j, 1]], dtype=complex) / np.sqrt(2)
DEFAULT_SCHEDULE = (1, 2, 4, 8, 16)


def area_amplitude(t_g: float) -> float:
    """Sine4 peak amplitude whose pulse area is pi/2."""
    return 4.0 * np.pi / (3.0 * t_g)


@dataclass(frozen=True)
class GateCalibration:
    """Calibrated sqrt(X) parameters.

    Frequencies are stored in the units of the JSON document (MHz, GHz) so a
    round trip is bit-exact; the rad/ns values are derived properties.
    """

    amplitude: float
    vz_phase: float
    drag_set_mhz: tuple[float, ...]
    carrier_ghz: float
    t_g: float
    eta_mhz: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "drag_set_mhz", tuple(float(d) for d in self.drag_set_mhz))
        if not self.t_g > 0:
            raise ParameterError("gate time must be positive")
        if not np.isfinite(self.amplitude) or self.amplitude < 0:
            raise ParameterError("amplitude must be finite and non-negative")

    @property
    def drag_set(self) -> tuple[float, ...]:
        return tuple(mhz(d) for d in self.drag_set_mhz)

    @property
    def carrier(self) -> float:
        return ghz(self.carrier_ghz)

    @property
    def drive_detuning(self) -> float:
        return mhz(self.eta_mhz)

    def pulse(self, phase: float = 0.0) -> PulseSpec:
        return sine4_pulse(self.t_g, self.amplitude, self.drag_set, self.drive_detuning, phase)

    def gate(self, mode: str, conjugate: bool = False) -> list[SequenceItem]:
        return [Pulse(self.pulse(np.pi if conjugate else 0.0)), VirtualZ(self.vz_phase, mode)]

    def with_amplitude(self, amplitude: float) -> "GateCalibration":
        return replace(self, amplitude=float(amplitude))

    def with_phase(self, phase: float) -> "GateCalibration":
        return replace(self, vz_phase=float(phase))

    def with_drag_set(self, drag_set_mhz: Sequence[float]) -> "GateCalibration":
        return replace(self, drag_set_mhz=tuple(drag_set_mhz))

    def to_dict(self) -> dict:
        return {
            "amplitude_rad_per_ns": self.amplitude,
            "vz_phase_rad": self.vz_phase,
            "drag_set_MHz": list(self.drag_set_mhz),
            "carrier_GHz": self.carrier_ghz,
            "t_g_ns": self.t_g,
            "eta_MHz": self.eta_mhz,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "GateCalibration":
        return cls(amplitude=float(d["amplitude_rad_per_ns"]), vz_phase=float(d["vz_phase_rad"]),
                   drag_set_mhz=tuple(float(x) for x in d["drag_set_MHz"]),
                   carrier_ghz=float(d["carrier_GHz"]), t_g=float(d["t_g_ns"]),
                   eta_mhz=float(d.get("eta_MHz", 0.0)))

    @classmethod
    def from_json(cls, text: str) -> "GateCalibration":
        return cls.from_dict(json.loads(text))


def initial_calibration(system: SystemSpec, target: str, t_g: float,
                        drag_set_mhz: Sequence[float] = (), eta_mhz: float = 0.0) -> GateCalibration:
    """Uncalibrated starting point: area-theorem amplitude, no phase, carrier on the dressed line."""
    carrier_ghz = to_ghz(dressed_transition(system, target))
    return GateCalibration(area_amplitude(t_g), 0.0, tuple(drag_set_mhz), carrier_ghz, t_g, eta_mhz)


def driven_for(system: SystemSpec, target: str, cal: GateCalibration,
               leaks: dict[str, float] | None = None,
               settings: PropagationSettings = PropagationSettings()) -> DrivenSystem:
    return DrivenSystem(system, target, cal.carrier, leaks=leaks, settings=settings)


# --- measurement helpers ---------------------------------------------------

def _target_excited(driven: DrivenSystem, items: list[SequenceItem]) -> float:
    psi = evolve_sequence(driven, ground_state(driven.system), items)
    return driven.excited(psi, driven.target)


def _repeat_gate(driven: DrivenSystem, cal: GateCalibration, reps: int) -> float:
    """Target excited population after ``reps`` calibrated gates from ground."""
    u = _gate_unitary(driven, cal)
    psi = ground_state(driven.system)
    for _ in range(reps):
        psi = u @ psi
    return driven.excited(psi, driven.target)


def _gate_unitary(driven: DrivenSystem, cal: GateCalibration, conjugate: bool = False) -> np.ndarray:
    u = driven.pulse_unitary(cal.pulse(np.pi if conjugate else 0.0))
    return driven.frame_phase(cal.vz_phase)[:, None] * u


def _echo_ground(driven: DrivenSystem, cal: GateCalibration, n: int) -> float:
    """Target ground population after ``n`` rounds of (G, G, conj G, conj G)."""
    g = _gate_unitary(driven, cal)
    gc = _gate_unitary(driven, cal, conjugate=True)
    block = gc @ gc @ g @ g
    psi = ground_state(driven.system)
    for _ in range(n):
        psi = block @ psi
    return float(driven.populations(psi, driven.target)[0])


def _quadratic_vertex(x: np.ndarray, y: np.ndarray, i: int, periodic: bool = False) -> float:
    """Vertex of the parabola through the grid extremum and its neighbours."""
    n = len(x)
    if periodic:
        il, ir = (i - 1) % n, (i + 1) % n
        h = x[1] - x[0]
        xl, xr = x[i] - h, x[i] + h
    else:
        if i == 0 or i == n - 1:
            return float(x[i])
        il, ir = i - 1, i + 1
        xl, xr = x[il], x[ir]
    y0, yl, yr = y[i], y[il], y[ir]
    den = yl - 2 * y0 + yr
    if den == 0 or not np.isfinite(den):
        return float(x[i])
    h = (xr - xl) / 2
    shift = 0.5 * h * (yl - yr) / den
    return float(x[i] + np.clip(shift, -h, h))


# --- calibration steps -----------------------------------------------------

def coarse_amplitude(driven: DrivenSystem, cal: GateCalibration, points: int = 101,
                     max_amplitude: float | None = None) -> float:
    """Smallest amplitude where a single pulse from ground reaches P_e = 1/2."""
    if points < 101:
        raise ParameterError("coarse amplitude scan needs at least 101 points")
    top = 2.0 * area_amplitude(cal.t_g) if max_amplitude is None else float(max_amplitude)
    grid = np.linspace(0.0, top, points)

    def pe(a):
        return _target_excited(driven, [Pulse(cal.with_amplitude(a).pulse())])

    vals = np.array([pe(a) for a in grid]) - 0.5
    above = np.nonzero(vals >= 0)[0]
    if len(above) == 0 or above[0] == 0:
        raise CalibrationRangeError(f"no P_e = 0.5 crossing for amplitudes up to {top:.6g} rad/ns")
    k = above[0]
    lo, hi = grid[k - 1], grid[k]
    if vals[k] == 0:
        return float(hi)
    return float(optimize.brentq(lambda a: pe(a) - 0.5, lo, hi, xtol=1e-14, rtol=1e-13))


def coarse_vz(driven: DrivenSystem, cal: GateCalibration, points: int = 201) -> float:
    """Phase in [0, 2pi) maximizing target P_e after pulse, VZ(phi), pulse."""
    if points < 201:
        raise ParameterError("coarse phase scan needs at least 201 points")
    u = driven.pulse_unitary(cal.pulse())
    first = u @ ground_state(driven.system)
    grid = np.linspace(0.0, 2 * np.pi, points, endpoint=False)
    vals = np.array([driven.excited(u @ (driven.frame_phase(p) * first), driven.target) for p in grid])
    if vals.max() - vals.min() < 1e-6:
        raise DegenerateCalibrationError("virtual-Z landscape is flat")
    i = int(np.argmax(vals))
    return float(_quadratic_vertex(grid, vals, i, periodic=True) % (2 * np.pi))


@dataclass(frozen=True)
class RefinementSettings:
    schedule: tuple[int, ...] = DEFAULT_SCHEDULE
    amplitude_range: float = 0.1  # fraction of the current amplitude
    phase_range: float = 0.4  # radians
    xatol: float = 1e-10
    divergence: float = 0.1


def refine_calibration(driven: DrivenSystem, cal: GateCalibration,
                       settings: RefinementSettings = RefinementSettings()) -> GateCalibration:
    """Alternate amplitude and phase refinement over the repetition schedule.

    Each step is a bounded golden-section/Brent search in a window of
    half-width ``range / 2n`` around the current value.
    """
    a0, p0 = cal.amplitude, cal.vz_phase
    cur = cal
    for n in settings.schedule:
        if n < 1:
            raise ParameterError("schedule entries must be >= 1")
        half = cur.amplitude * settings.amplitude_range / (2 * n)
        res = optimize.minimize_scalar(
            lambda a: -_repeat_gate(driven, cur.with_amplitude(a), 4 * n + 2),
            bounds=(cur.amplitude - half, cur.amplitude + half), method="bounded",
            options={"xatol": settings.xatol * max(cur.amplitude, 1.0)})
        cur = cur.with_amplitude(res.x)
        half = settings.phase_range / (2 * n)
        res = optimize.minimize_scalar(
            lambda p: -_echo_ground(driven, cur.with_phase(p), n),
            bounds=(cur.vz_phase - half, cur.vz_phase + half), method="bounded",
            options={"xatol": settings.xatol})
        cur = cur.with_phase(res.x)
    if abs(cur.amplitude - a0) > settings.divergence * a0:
        raise RefinementDivergenceError(f"amplitude moved from {a0:.6g} to {cur.amplitude:.6g}")
    if abs(cur.vz_phase - p0) > settings.divergence * np.pi:
        raise RefinementDivergenceError(f"phase moved from {p0:.6g} to {cur.vz_phase:.6g}")
    return cur.with_phase(float(np.angle(np.exp(1j * cur.vz_phase))))


def calibrate(driven: DrivenSystem, cal: GateCalibration,
              settings: RefinementSettings = RefinementSettings()) -> GateCalibration:
    """Coarse amplitude, coarse phase, then refinement."""
    cal = cal.with_amplitude(coarse_amplitude(driven, cal))
    cal = cal.with_phase(coarse_vz(driven, cal))
    return refine_calibration(driven, cal, settings)


# --- gate quality ----------------------------------------------------------

def computational_block(driven: DrivenSystem, unitary: np.ndarray) -> np.ndarray:
    """2x2 block of a unitary on the target's {g, e} levels with other modes in ground (dressed)."""
    system = driven.system
    it = system.index(driven.target)
    occ = [0] * len(system.dims)
    idx = []
    for level in (0, 1):
        occ[it] = level
        idx.append(system.state_index(occ))
    ud = driven.basis.conj().T @ unitary @ driven.basis
    return ud[np.ix_(idx, idx)]


def rz(phi: float) -> np.ndarray:
    return np.diag([1.0, np.exp(1j * phi)]).astype(complex)


def frame_fidelity(block: np.ndarray, ideal: np.ndarray = SQRT_X) -> float:
    """Process fidelity ``|tr(V^dag M)|^2 / 4`` maximized over ``V = Rz(F) ideal Rz(-F)``.

    The frame angle ``F`` is a bookkeeping freedom: it is invisible to any
    experiment that starts in ground and measures populations.
    """
    def f(phi):
        v = rz(phi) @ ideal @ rz(-phi)
        return abs(np.trace(v.conj().T @ block)) ** 2 / 4

    grid = np.linspace(0, 2 * np.pi, 73, endpoint=False)
    vals = [f(p) for p in grid]
    i = int(np.argmax(vals))
    h = grid[1] - grid[0]
    res = optimize.minimize_scalar(lambda p: -f(p), bounds=(grid[i] - h, grid[i] + h),
                                   method="bounded", options={"xatol": 1e-12})
    return float(max(vals[i], -res.fun))


def sqrtx_fidelity(driven: DrivenSystem, cal: GateCalibration) -> float:
    return frame_fidelity(computational_block(driven, _gate_unitary(driven, cal)))


# --- U3 and Clifford compilation -------------------------------------------

@dataclass(frozen=True)
class U3Params:
    theta: float
    phi: float
    lam: float


def u3_matrix(p: U3Params) -> np.ndarray:
    c, s = np.cos(p.theta / 2), np.sin(p.theta / 2)
    return np.array([[c, -np.exp(1j * p.lam) * s],
                     [np.exp(1j * p.phi) * s, np.exp(1j * (p.phi + p.lam)) * c]], dtype=complex)


def u3_phases(p: U3Params) -> tuple[float, float, float]:
    """Virtual-Z angles (first, middle, last) of ``Rz(phi+pi) SX Rz(theta+pi) SX Rz(lam)``."""
    return p.lam, p.theta + np.pi, p.phi + np.pi


def compile_u3(p: U3Params, cal: GateCalibration, mode: str) -> list[SequenceItem]:
    """Time-ordered items implementing U3 with two calibrated gates.

    The calibrated gate already ends in its own virtual-Z, so the middle and
    final frame rotations are merged with it.
    """
    first, middle, last = u3_phases(p)
    pulse = Pulse(cal.pulse())
    return [VirtualZ(first, mode), pulse, VirtualZ(cal.vz_phase + middle, mode),
            pulse, VirtualZ(cal.vz_phase + last, mode)]


def ideal_composite(p: U3Params) -> np.ndarray:
    first, middle, last = u3_phases(p)
    return rz(last) @ SQRT_X @ rz(middle) @ SQRT_X @ rz(first)


def same_up_to_phase(a: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> bool:
    return abs(abs(np.trace(a.conj().T @ b)) - a.shape[0]) < tol


def phase_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Max elementwise distance after removing the best global phase."""
    ov = np.trace(a.conj().T @ b)
    ph = ov / abs(ov) if abs(ov) > 0 else 1.0
    return float(np.max(np.abs(a * ph - b)))


def u3_from_matrix(u: np.ndarray) -> U3Params:
    u = np.asarray(u, dtype=complex)
    theta = 2 * np.arctan2(abs(u[1, 0]), abs(u[0, 0]))
    if abs(u[0, 0]) > 1e-9:
        v = u * np.exp(-1j * np.angle(u[0, 0]))
        if abs(v[1, 0]) > 1e-9:
            phi = np.angle(v[1, 0])
            lam = np.angle(-v[0, 1])
        else:
            phi, lam = 0.0, float(np.angle(v[1, 1]))
    else:
        v = u * np.exp(-1j * np.angle(u[1, 0]))
        phi, lam = 0.0, float(np.angle(-v[0, 1]))
    return U3Params(float(theta), float(phi), float(lam))


@dataclass(frozen=True)
class CliffordTable:
    params: tuple[U3Params, ...]
    matrices: np.ndarray = field(repr=False)
    compose: np.ndarray = field(repr=False)  # compose[i, j] = index of C_i @ C_j
    inverse: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.params)

    def index_of(self, u: np.ndarray) -> int:
        for k, m in enumerate(self.matrices):
            if same_up_to_phase(m, u):
                return k
        raise KeyError("matrix is not a Clifford")

    def sequence_inverse(self, indices: Sequence[int]) -> int:
        """Index of the Clifford undoing ``C_{i_m} ... C_{i_1}`` (first index applied first)."""
        acc = 0
        for i in indices:
            acc = int(self.compose[i, acc])
        return int(self.inverse[acc])


@lru_cache(maxsize=1)
def clifford_table() -> CliffordTable:
    """The 24 single-qubit Cliffords, by closure of SX and S, identity first."""
    gens = (SQRT_X, rz(np.pi / 2))
    elems = [np.eye(2, dtype=complex)]
    frontier = list(elems)
    while frontier:
        nxt = []
        for e in frontier:
            for g in gens:
                m = g @ e
                if not any(same_up_to_phase(m, x) for x in elems):
                    elems.append(m)
                    nxt.append(m)
        frontier = nxt
    params = tuple(u3_from_matrix(m) for m in elems)
    mats = np.array([u3_matrix(p) for p in params])
    n = len(mats)

    def find(u):
        for k in range(n):
            if same_up_to_phase(mats[k], u):
                return k
        raise AssertionError("Clifford group not closed")

    compose = np.array([[find(mats[i] @ mats[j]) for j in range(n)] for i in range(n)])
    inverse = np.array([int(np.nonzero(compose[i] == 0)[0][0]) for i in range(n)])
    return CliffordTable(params, mats, compose, inverse)


# --- DRAG detuning optimization --------------------------------------------

@dataclass(frozen=True)
class DeltaScan:
    delta_mhz: np.ndarray
    objective: np.ndarray
    optimum_mhz: float
    calibration: GateCalibration


def mirrored_index(drag_set_mhz: Sequence[float]) -> int:
    """Position of the first element of a mirrored pair (Delta, -Delta) in the set."""
    ds = list(drag_set_mhz)
    for i, d in enumerate(ds):
        if d != 0 and -d in ds[i + 1:]:
            return i
    raise ParameterError("drag set has no mirrored pair")


def set_mirrored(drag_set_mhz: Sequence[float], delta_mhz: float) -> tuple[float, ...]:
    ds = list(drag_set_mhz)
    i = mirrored_index(ds)
    j = ds.index(-ds[i], i + 1)
    ds[i] = float(np.sign(ds[i]) * abs(delta_mhz))
    ds[j] = -ds[i]
    return tuple(ds)


def optimize_delta(driven: DrivenSystem, cal: GateCalibration, spectator: str,
                   objective: str = "pulse_train", center_mhz: float | None = None,
                   span_mhz: float = 5.0, points: int = 41, recalibrate: bool = True,
                   tau: float | None = None, pairs: int = 50, rb_length: int = 300,
                   rb_sequences: int = 10, seed: int = 0,
                   refine: RefinementSettings | None = None) -> DeltaScan:
    """Scan the mirrored DRAG detuning and return the argmin of the spectator objective.

    ``pulse_train`` measures the spectator after the error-filter sequence at
    waiting time ``tau`` (default: first crosstalk peak); ``rb_tail`` after
    ``rb_length``-Clifford random sequences.  Each grid point is
    recalibrated (coarse steps, plus refinement when ``refine`` is given).
    """
    from . import protocols
    from .analytics import predict_peaks
    from .model import detuning_report

    ds = cal.drag_set_mhz
    i = mirrored_index(ds)
    if center_mhz is None:
        center_mhz = abs(ds[i])
    grid = np.linspace(center_mhz - span_mhz, center_mhz + span_mhz, points)

    def cal_at(delta):
        c = cal.with_drag_set(set_mirrored(ds, delta))
        if recalibrate:
            c = c.with_amplitude(coarse_amplitude(driven, c))
            c = c.with_phase(coarse_vz(driven, c))
            if refine is not None:
                c = refine_calibration(driven, c, refine)
        return c

    if objective not in ("pulse_train", "rb_tail"):
        raise ParameterError(f"unknown objective {objective!r}")
    # grid points too close to the carrier may not calibrate; they count as infeasible
    cals = {}
    for d in grid:
        try:
            cals[d] = cal_at(d)
        except (CalibrationRangeError, DegenerateCalibrationError):
            pass
    if not cals:
        raise CalibrationRangeError(f"no mirrored detuning in [{grid[0]:.4g}, {grid[-1]:.4g}] MHz calibrates")
    if len(cals) < len(grid):
        warnings.warn(f"{len(grid) - len(cals)} of {len(grid)} DRAG detunings failed to calibrate",
                      InsensitiveParameterWarning, stacklevel=2)

    if objective == "pulse_train" and tau is None:
        # pi gate = two pulses; its virtual-Z phases advance the drive frame
        rep = detuning_report(driven.system, driven.target, spectator)
        c0 = cals.get(center_mhz) or cal_at(center_mhz)
        tau = predict_peaks("ZX", rep["dressed"], 2 * c0.t_g, 200.0, 2 * c0.vz_phase)[0]

    def value(c):
        if objective == "pulse_train":
            res = protocols.run_error_filter(driven, c, spectator, pairs, [tau])
            return float(res.p_e_spectator[0])
        res = protocols.run_rb(driven, c, spectator, [rb_length], rb_sequences, seed)
        return float(res.spectator_excitation[0])

    vals = np.array([value(cals[d]) if d in cals else np.nan for d in grid])
    finite = vals[np.isfinite(vals)]
    if finite.max() - finite.min() <= 1e-12 + 1e-6 * abs(finite.max()):
        warnings.warn("DRAG detuning objective is flat", InsensitiveParameterWarning, stacklevel=2)
    k = int(np.nanargmin(vals))
    best = _quadratic_vertex(grid, vals, k)
    return DeltaScan(grid, vals, best, cal_at(best))

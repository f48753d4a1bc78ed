"""Analytic pulse envelopes with recursive DRAG corrections.

A pulse is kept symbolic: a base shape plus an ordered list of DRAG
detunings.  Each detuning ``D`` applies the operator ``1 - i d/dt / D`` to the
envelope, which multiplies the spectrum by ``(1 - w / D)`` and therefore
carves an exact zero at relative frequency ``w = D``.

Spectral convention
-------------------
``spectrum(w) = int_0^tg Omega(t) exp(+i w t) dt``.  With the drive term
``(Omega a^dag + Omega^* a) / 2`` used in :mod:`dualdrag.model`, a transition
that sits ``w`` above the carrier (in the rotating frame) is driven by exactly
this Fourier component, so the frequency axis reads as physical detuning.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, InvalidSpecError, ResolutionError
from .units import mhz, to_mhz

_T_SLACK = 1e-12


class ShapeKind(str, enum.Enum):
    SINE4 = "sine4"


@dataclass(frozen=True)
class BaseEnvelope:
    """Real, non-negative base shape ``peak_amplitude * shape(t / t_g)``."""

    t_g: float
    peak_amplitude: float
    kind: ShapeKind = ShapeKind.SINE4

    def __post_init__(self):
        if not self.t_g > 0:
            raise InvalidSpecError(f"gate time must be positive, got {self.t_g}")
        object.__setattr__(self, "kind", ShapeKind(self.kind))

    def harmonics(self) -> list[tuple[float, float]]:
        """Cosine series ``shape(t) = sum_h c_h cos(nu_h t)`` on ``[0, t_g]``."""
        if self.kind is ShapeKind.SINE4:
            # sin^4 x = 3/8 - cos(2x)/2 + cos(4x)/8, x = pi t / t_g
            x = np.pi / self.t_g
            return [(0.0, 3.0 / 8.0), (2.0 * x, -0.5), (4.0 * x, 0.125)]
        raise InvalidSpecError(f"unsupported shape {self.kind}")

    def derivative(self, t, order: int = 0):
        """Exact ``order``-th time derivative of the base envelope."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for nu, c in self.harmonics():
            if nu == 0.0:
                if order == 0:
                    out = out + c
                continue
            out = out + c * nu**order * np.cos(nu * t + order * np.pi / 2)
        return self.peak_amplitude * out


@dataclass(frozen=True)
class PulseSpec:
    """Base envelope + DRAG detunings + carrier detuning ``eta`` + phase."""

    base: BaseEnvelope
    drag_detunings: tuple[float, ...] = ()
    carrier_detuning: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        dets = tuple(float(d) for d in self.drag_detunings)
        for d in dets:
            if d == 0.0 or not np.isfinite(d):
                raise InvalidSpecError(f"DRAG detuning must be finite and nonzero, got {d}")
        object.__setattr__(self, "drag_detunings", dets)

    @property
    def t_g(self) -> float:
        return self.base.t_g

    @property
    def amplitude(self) -> float:
        return self.base.peak_amplitude

    def with_amplitude(self, amplitude: float) -> "PulseSpec":
        return replace(self, base=replace(self.base, peak_amplitude=float(amplitude)))

    def with_phase(self, phase: float) -> "PulseSpec":
        return replace(self, phase=float(phase))

    def with_detunings(self, detunings: Sequence[float]) -> "PulseSpec":
        return replace(self, drag_detunings=tuple(detunings))


@dataclass(frozen=True)
class SampledWaveform:
    dt: float
    samples: np.ndarray = field(repr=False)
    t_g: float

    @property
    def times(self) -> np.ndarray:
        return np.minimum(np.arange(len(self.samples)) * self.dt, self.t_g)


def sine4_pulse(t_g: float, amplitude: float, detunings: Sequence[float] = (),
                eta: float = 0.0, phase: float = 0.0) -> PulseSpec:
    return PulseSpec(BaseEnvelope(t_g, amplitude), tuple(detunings), eta, phase)


def drag_polynomial(detunings: Sequence[float]) -> np.ndarray:
    """Coefficients ``c_j`` of ``prod_k (1 - i D / Delta_k)`` in powers of ``D = d/dt``."""
    poly = np.array([1.0 + 0j])
    for d in detunings:
        poly = np.convolve(poly, np.array([1.0, -1j / d]))
    return poly


def spectral_factor(detunings: Sequence[float], w):
    """``prod_k (1 - w / Delta_k)``: the DRAG filter seen by relative frequency ``w``."""
    w = np.asarray(w, dtype=float)
    out = np.ones_like(w, dtype=float)
    for d in detunings:
        out = out * (1.0 - w / d)
    return out


def _check_time(spec: PulseSpec, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < -_T_SLACK) or np.any(t > spec.t_g + _T_SLACK):
        raise DomainError(f"time outside [0, {spec.t_g}] ns")
    return np.clip(t, 0.0, spec.t_g)


def _envelope_recursive(spec: PulseSpec, t: np.ndarray) -> np.ndarray:
    out = np.zeros(t.shape, dtype=complex)
    for j, c in enumerate(drag_polynomial(spec.drag_detunings)):
        out = out + c * spec.base.derivative(t, j)
    return out


def _envelope_factorized(spec: PulseSpec, t: np.ndarray) -> np.ndarray:
    # each harmonic exp(+i nu t) is an eigenfunction of D with eigenvalue i nu,
    # so the DRAG operator reduces to the scalar prod(1 + nu / Delta)
    out = np.zeros(t.shape, dtype=complex)
    dets = spec.drag_detunings
    for nu, c in spec.base.harmonics():
        half = 0.5 * c * spec.amplitude
        out = out + half * (spectral_factor(dets, -nu) * np.exp(1j * nu * t)
                            + spectral_factor(dets, nu) * np.exp(-1j * nu * t))
    return out


def eval_envelope(spec: PulseSpec, t):
    """DRAG-corrected envelope ``Omega^(n)(t)`` (rad/ns), without carrier or phase.

    Up to four corrections use the explicit derivative recursion; deeper
    recursions are evaluated through the spectral factorization on the
    harmonic lines of the base shape.  Both routes are exact.
    """
    tt = _check_time(spec, t)
    if len(spec.drag_detunings) <= 4:
        out = _envelope_recursive(spec, tt)
    else:
        out = _envelope_factorized(spec, tt)
    return out if np.ndim(t) else complex(out)


def drive_waveform(spec: PulseSpec, t):
    """Complex drive ``Omega^(n)(t) exp(-i eta t + i phi0)`` fed to the Hamiltonian."""
    tt = _check_time(spec, t)
    env = _envelope_recursive(spec, tt) if len(spec.drag_detunings) <= 4 else _envelope_factorized(spec, tt)
    out = env * np.exp(-1j * spec.carrier_detuning * tt + 1j * spec.phase)
    return out if np.ndim(t) else complex(out)


def drag_extend(spec: PulseSpec, new_detunings: Sequence[float]) -> PulseSpec:
    return spec.with_detunings(spec.drag_detunings + tuple(float(d) for d in new_detunings))


def sample_waveform(spec: PulseSpec, dt: float) -> SampledWaveform:
    if not dt > 0:
        raise ResolutionError("sample period must be positive")
    if dt > spec.t_g / 50 * (1 + 1e-12):
        raise ResolutionError(f"dt={dt} ns is coarser than t_g/50={spec.t_g / 50} ns")
    n = int(round(spec.t_g / dt)) + 1
    t = np.minimum(np.arange(n) * dt, spec.t_g)
    return SampledWaveform(dt, drive_waveform(spec, t), spec.t_g)


def fourier_spectrum(spec: PulseSpec, freq_grid, normalized: bool = False,
                     epsrel: float = 1e-10) -> np.ndarray:
    """Continuous Fourier transform of the drive waveform by adaptive quadrature.

    ``freq_grid`` holds angular frequencies (rad/ns) relative to the carrier.
    With ``normalized`` the result is divided by its largest magnitude on the
    grid.
    """
    w = np.atleast_1d(np.asarray(freq_grid, dtype=float))
    if w.size == 0:
        raise ValueError("empty frequency grid")
    scale = abs(spec.amplitude) * spec.t_g or 1.0

    def integrand(t):
        return drive_waveform(spec, t) * np.exp(1j * w * t)

    # split at the harmonic node points so every panel is smooth and short
    n_panels = max(4, int(np.ceil(spec.t_g * (np.max(np.abs(w)) + 4 * np.pi / spec.t_g) / np.pi)))
    edges = np.linspace(0.0, spec.t_g, n_panels + 1)
    total = np.zeros(w.shape, dtype=complex)
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad_vec(integrand, a, b, epsrel=epsrel, epsabs=1e-13 * scale,
                                    norm="max", quadrature="gk21")
        total += val
    if normalized:
        total = total / np.max(np.abs(total))
    return total


def analytic_spectrum(spec: PulseSpec, freq_grid) -> np.ndarray:
    """Closed-form transform of the harmonic expansion (reference for quadrature)."""
    w = np.asarray(freq_grid, dtype=float)
    out = np.zeros(w.shape, dtype=complex)
    dets = spec.drag_detunings
    eta, tg = spec.carrier_detuning, spec.t_g
    for nu, c in spec.base.harmonics():
        half = 0.5 * c * spec.amplitude
        for sgn in (+1.0, -1.0):
            k = sgn * nu - eta + w
            integral = np.where(np.abs(k) * tg < 1e-8, tg + 0j,
                                (np.exp(1j * k * tg) - 1.0) / (1j * np.where(k == 0, 1.0, k)))
            out = out + half * spectral_factor(dets, -sgn * nu) * integral
    return out * np.exp(1j * spec.phase)


def spectral_peak(spec: PulseSpec, span: float = mhz(500.0), step: float = mhz(1.0)):
    """Frequency (rad/ns) and magnitude of the largest spectral component.

    A dense scan of ``carrier_detuning +/- span`` is refined with a bounded
    scalar search around the best grid point.
    """
    centre = spec.carrier_detuning
    grid = centre + np.arange(-span, span + 0.5 * step, step)
    mags = np.abs(fourier_spectrum(spec, grid))
    i = int(np.argmax(mags))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(lambda x: -abs(fourier_spectrum(spec, [x])[0]),
                                   bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-9})
    if -res.fun >= mags[i]:
        return float(res.x), float(-res.fun)
    return float(grid[i]), float(mags[i])


def hole_residuals(spec: PulseSpec, targets) -> list[tuple[float, float]]:
    """``|spectrum(target)| / max |spectrum|`` for each target frequency (rad/ns)."""
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    if targets.size == 0:
        raise ValueError("no target frequencies")
    _, peak = spectral_peak(spec)
    vals = np.abs(fourier_spectrum(spec, targets)) / peak
    return [(float(f), float(r)) for f, r in zip(targets, vals)]


def write_waveform_csv(path, waveform: SampledWaveform) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t_ns", "re", "im"])
        for t, s in zip(waveform.times, waveform.samples):
            writer.writerow([f"{t:.12g}", f"{s.real:.12g}", f"{s.imag:.12g}"])


def spectrum_rows(spec: PulseSpec, freq_grid) -> list[tuple[float, float, float, float]]:
    vals = fourier_spectrum(spec, freq_grid)
    norm = np.abs(vals) / np.max(np.abs(vals))
    return [(float(to_mhz(w)), v.real, v.imag, float(a)) for w, v, a in zip(freq_grid, vals, norm)]


def write_spectrum_csv(path, spec: PulseSpec, freq_grid) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["f_MHz", "re", "im", "abs_norm"])
        for row in spectrum_rows(spec, freq_grid):
            writer.writerow([f"{x:.12g}" for x in row])

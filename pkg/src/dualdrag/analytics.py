"""Closed-form crosstalk models and fit formulas.

The ZX and IX single-gate unitaries assume a square pi pulse of constant
amplitude and first order in ``g / Delta0``.  Basis order is
``|gg>, |ge>, |eg>, |ee>`` (target first).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import FitWarning, SingularityError

LIMIT_TOL = 1e-9


@dataclass(frozen=True)
class ZXCoefficients:
    A: complex
    B: complex
    C: complex
    omega: float
    g: float
    delta0: float
    t_g: float


@dataclass(frozen=True)
class IXCoefficients:
    D: complex
    nu: float
    C: complex


def zx_coefficients(omega: float, g: float, delta0: float, t_g: float) -> ZXCoefficients:
    den = delta0**2 - omega**2
    if abs(den) < 1e-15 * max(delta0**2, 1.0):
        raise SingularityError("drive amplitude equals the detuning")
    c = np.exp(-1j * delta0 * t_g)
    a = omega**2 * g / (-2.0 * delta0 * den) * (1.0 + c)
    b = omega * g / (-2.0 * den) * (1.0 + c)
    return ZXCoefficients(complex(a), complex(b), complex(c), omega, g, delta0, t_g)


def zx_gate_unitary(omega: float, g: float, delta0: float, t_g: float) -> np.ndarray:
    k = zx_coefficients(omega, g, delta0, t_g)
    A, B, C = k.A, k.B, k.C
    return np.array([
        [0, -1j * A, -1j, 1j * B],
        [-1j * A, 0, -1j * B, -1j * C],
        [-1j, -1j * B, 0, 1j * A],
        [1j * B, -1j * C, 1j * A, 0],
    ], dtype=complex)


def ix_coefficients(nu: float, delta0: float, t_g: float) -> IXCoefficients:
    c = np.exp(-1j * delta0 * t_g)
    return IXCoefficients(complex(nu * (1.0 - c)), nu, complex(c))


def ix_gate_unitary(nu: float, delta0: float, t_g: float) -> np.ndarray:
    k = ix_coefficients(nu, delta0, t_g)
    D, C = k.D, k.C
    return np.array([
        [0, 0, -1j, 1j * D],
        [0, 0, 1j * D, -1j * C],
        [-1j, 1j * D, 0, 0],
        [1j * D, -1j * C, 0, 0],
    ], dtype=complex)


def buffer_unitary(delta0: float, t_b: float) -> np.ndarray:
    ph = np.exp(-1j * delta0 * t_b)
    return np.diag([1, ph, 1, ph]).astype(complex)


def dirichlet_ratio(n: int, theta: float) -> float:
    """``|sin(n theta) / sin(theta)|`` with the removable singularity handled."""
    s = np.sin(theta)
    if abs(s) < LIMIT_TOL:
        return float(n)
    return float(abs(np.sin(n * theta) / s))


def train_amplitude(kind: str, n: int, omega: float = 0.0, g: float = 0.0, nu: float = 0.0,
                    delta0: float = 1.0, t_g: float = 0.0, t_b: float = 0.0) -> float:
    """Transition amplitude after ``n`` repetitions of (buffer, X, buffer, X).

    ``kind`` is ``ZX_ge`` (|gg> -> |ge>), ``ZX_ee`` (|gg> -> |ee>) or ``IX_ge``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    theta = delta0 * (t_g + t_b)
    ratio = dirichlet_ratio(n, theta)
    gate = abs(1.0 + np.exp(-1j * delta0 * t_g))
    if kind in ("ZX_ge", "ZX_ee"):
        den = delta0**2 - omega**2
        if den == 0:
            raise SingularityError("drive amplitude equals the detuning")
        prime = omega * g / (-2.0 * den) if kind == "ZX_ge" else omega**2 * g / (-2.0 * delta0 * den)
        return float(abs(prime) * gate * abs(1.0 - np.exp(-1j * theta)) * ratio)
    if kind == "IX_ge":
        return float(abs(nu) * abs(1.0 - np.exp(-1j * delta0 * t_g))
                     * abs(1.0 + np.exp(-1j * theta)) * ratio)
    raise ValueError(f"unknown amplitude kind {kind!r}")


def predict_peaks(kind: str, delta0: float, t_g: float, tau_max: float,
                  frame_phase: float = 0.0) -> list[float]:
    """Waiting times (ns) where the error filter shows ZX or IX peaks.

    ``t_g`` is the duration of one pi gate.  ``frame_phase`` is the drive
    phase advance per pi gate (the virtual-Z phases inside it); it enters as
    ``theta = Delta0 (t_g + tau) - frame_phase``.  ZX peaks sit at odd
    multiples of pi, IX peaks at even multiples.
    """
    if delta0 == 0:
        raise ValueError("detuning must be nonzero")
    offset = {"ZX": 1.0, "IX": 0.0}[kind]
    # theta / pi ranges over [lo, hi] for tau in [0, tau_max]
    ends = [(delta0 * (t_g + tau) - frame_phase) / np.pi for tau in (0.0, tau_max)]
    lo, hi = min(ends), max(ends)
    k0 = int(np.ceil((lo - offset) / 2.0 - 1e-12))
    out = []
    k = k0
    while 2 * k + offset <= hi + 1e-12:
        tau = ((2 * k + offset) * np.pi + frame_phase) / delta0 - t_g
        if -1e-9 <= tau <= tau_max + 1e-9:
            out.append(max(float(tau), 0.0))
        k += 1
    return sorted(out)


def eta_correction(omega: float, delta0: float) -> float:
    """Constant drive-detuning correction for single DRAG at crosstalk detuning ``delta0``."""
    ratio = omega**2 / (2.0 * delta0**2)
    if ratio >= 1.0:
        raise SingularityError("need omega^2 < 2 delta0^2")
    return -omega**2 / (delta0 * (1.0 - ratio))


def p1_closed_form(m, r_e: float, gamma: float):
    """Spectator excitation after ``m`` twirled-excitation + damping rounds."""
    m = np.asarray(m, dtype=float)
    q = 1.0 - gamma - 2.0 * r_e + 2.0 * r_e * gamma
    a = r_e - r_e * gamma
    if abs(1.0 - q) < 1e-300:
        out = m * a
    else:
        # (1 - q^m) via expm1 keeps precision when q is close to 1
        out = a * -np.expm1(m * np.log(q)) / (1.0 - q) if q > 0 else a * (1.0 - q**m) / (1.0 - q)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class PowerLawFit:
    a: float
    a_err: float
    slope: float
    slope_err: float
    n_used: int
    r_squared: float


def power_law_fit(x, y) -> PowerLawFit:
    """Fit ``y = a x^2`` by least squares and report the free log-log slope."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0):
        raise ValueError("x must be positive")
    keep = y > 0
    if not np.all(keep):
        warnings.warn(f"dropping {int((~keep).sum())} nonpositive points", FitWarning, stacklevel=2)
    x, y = x[keep], y[keep]
    if len(x) < 3:
        raise ValueError("need at least 3 positive points")
    x2 = x**2
    a = float(x2 @ y / (x2 @ x2))
    resid = y - a * x2
    dof = max(len(x) - 1, 1)
    a_err = float(np.sqrt(resid @ resid / dof / (x2 @ x2)))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    coef, cov = np.polyfit(np.log(x), np.log(y), 1, cov=len(x) > 3)
    slope_err = float(np.sqrt(cov[0, 0])) if len(x) > 3 else float("nan")
    return PowerLawFit(a, a_err, float(coef[0]), slope_err, len(x), r2)

import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from dualdrag.analytics import (
    dirichlet_ratio,
    eta_correction,
    ix_coefficients,
    ix_gate_unitary,
    p1_closed_form,
    power_law_fit,
    predict_peaks,
    train_amplitude,
    zx_coefficients,
    zx_gate_unitary,
)
from dualdrag.errors import FitWarning, SingularityError
from dualdrag.model import detuning_report, dressed_transition, rotating_generator, to_dressed, two_mode_system
from dualdrag.propagator import AmplitudeDamping, XYTwirl, apply_channel
from dualdrag.units import mhz

D0 = mhz(45.0)


def square_pi_pulse(ratio, omega_frac, leak=0.0):
    """Dressed-basis unitary of a constant pi pulse on the 2x2 model, with its Delta0."""
    sys = two_mode_system(g_mhz=ratio * 45.0, detuning_mhz=45.0, target_levels=2, spectator_levels=2)
    d0 = detuning_report(sys, "Q0", "Q1")["dressed"]
    omega = omega_frac * D0
    gen = rotating_generator(sys, dressed_transition(sys, "Q0"), None, "Q0", {"Q1": leak} if leak else None)
    t_g = np.pi / omega
    return expm(-1j * to_dressed(sys, gen.static + omega * gen.x_op) * t_g), omega, d0, t_g


# --- ZX / IX unitaries ----------------------------------------------------

def test_zx_without_coupling_is_pi_pulse():
    k = zx_coefficients(0.3, 0.0, D0, 10.0)
    assert k.A == 0 and k.B == 0 and abs(abs(k.C) - 1) < 1e-15
    u = zx_gate_unitary(0.3, 0.0, D0, 10.0)
    assert np.allclose(np.abs(u[:2, :2]), 0) and np.allclose(np.abs(u[2:, 2:]), 0)


def test_zx_odd_multiple_kills_coefficients():
    k = zx_coefficients(0.3, mhz(1.0), D0, np.pi / D0)
    assert abs(k.A) < 1e-15 and abs(k.B) < 1e-15


def test_zx_singular_drive():
    with pytest.raises(SingularityError):
        zx_gate_unitary(D0, mhz(1.0), D0, 10.0)
    with pytest.raises(SingularityError):
        train_amplitude("ZX_ge", 3, D0, mhz(1.0), 0.0, D0, 10.0, 1.0)


@pytest.mark.parametrize("ratio", [0.01, 0.02, 0.05])
def test_zx_matches_propagated_square_pulse(ratio):
    u, omega, d0, t_g = square_pi_pulse(ratio, 0.5)
    z = zx_gate_unitary(omega, ratio * D0, d0, t_g)
    assert np.max(np.abs(np.abs(u) - np.abs(z))) <= 3 * ratio**2


# the expansion parameter is Omega g / (Delta0^2 - Omega^2); keep the drive clear of Delta0
@given(st.floats(0.0, 0.1), st.floats(0.05, 0.6), st.floats(1.0, 60.0))
def test_zx_nearly_unitary(ratio, omega_frac, t_g):
    u = zx_gate_unitary(omega_frac * D0, ratio * D0, D0, t_g)
    assert np.max(np.abs(u.conj().T @ u - np.eye(4))) <= 5 * ratio**2 + 1e-15


def test_ix_coefficients_and_zero():
    k = ix_coefficients(0.02, D0, 10.0)
    assert k.D == pytest.approx(0.02 * (1 - np.exp(-1j * D0 * 10.0)))
    assert abs(abs(k.C) - 1) < 1e-15
    assert abs(ix_coefficients(0.02, D0, 2 * np.pi / D0).D) < 1e-15
    u = ix_gate_unitary(0.0, D0, 10.0)
    assert np.allclose(np.abs(u[[0, 0, 1, 1], [2, 3, 2, 3]]), [1, 0, 0, 1])


@pytest.mark.parametrize("leak", [1e-3, 1e-2])
def test_ix_matches_propagated_leak(leak):
    # a direct spectator drive leak * Omega maps onto the printed coefficient nu = leak * Omega / (2 Delta0)
    u, omega, d0, t_g = square_pi_pulse(0.0, 0.3, leak)
    z = ix_gate_unitary(leak * omega / (2 * d0), d0, t_g)
    assert np.max(np.abs(u - z)) <= 2 * leak**2


# --- pulse-train amplitudes and peaks -------------------------------------

def test_dirichlet_limit():
    assert dirichlet_ratio(7, 0.0) == 7
    assert dirichlet_ratio(7, 3 * np.pi) == 7
    assert dirichlet_ratio(7, 0.3) == pytest.approx(abs(np.sin(2.1) / np.sin(0.3)))


def test_single_repetition_is_prefactor():
    omega, g, t_g, t_b = mhz(10.0), mhz(1.0), 25.0, 3.3
    theta = D0 * (t_g + t_b)
    prime = abs(omega * g / (2 * (D0**2 - omega**2)))
    expect = prime * abs(1 + np.exp(-1j * D0 * t_g)) * abs(1 - np.exp(-1j * theta))
    assert train_amplitude("ZX_ge", 1, omega, g, 0.0, D0, t_g, t_b) == pytest.approx(expect)


@given(st.integers(1, 100), st.integers(0, 20), st.floats(1.0, 40.0))
def test_zx_vanishes_at_even_multiples(n, k, t_g):
    t_b = 2 * k * np.pi / D0 + 2 * np.pi / D0 - (t_g % (2 * np.pi / D0))
    for kind in ("ZX_ge", "ZX_ee"):
        assert train_amplitude(kind, n, mhz(10.0), mhz(1.0), 0.0, D0, t_g, t_b) < 1e-9


@given(st.integers(1, 100), st.integers(0, 20), st.floats(1.0, 40.0))
def test_ix_vanishes_at_odd_multiples(n, k, t_g):
    period = 2 * np.pi / D0
    t_b = (2 * k + 1) * np.pi / D0 + period - (t_g % period)
    assert train_amplitude("IX_ge", n, 0.0, 0.0, 0.01, D0, t_g, t_b) < 1e-9


def test_zx_peak_grows_linearly():
    t_g = 25.0
    tau = predict_peaks("ZX", D0, t_g, 100.0)[0]
    a1 = train_amplitude("ZX_ge", 1, mhz(10.0), mhz(0.45), 0.0, D0, t_g, tau)
    a50 = train_amplitude("ZX_ge", 50, mhz(10.0), mhz(0.45), 0.0, D0, t_g, tau)
    assert a50 == pytest.approx(50 * a1, rel=1e-6)


def test_unknown_amplitude_kind():
    with pytest.raises(ValueError):
        train_amplitude("ZZ", 1)
    with pytest.raises(ValueError):
        train_amplitude("ZX_ge", 0)


def test_predicted_peaks_at_45_mhz():
    zx = predict_peaks("ZX", D0, 25.0, 60.0)
    ix = predict_peaks("IX", D0, 25.0, 60.0)
    assert zx == pytest.approx([8.3333333, 30.5555556, 52.7777778], abs=1e-6)
    assert ix == pytest.approx([19.4444444, 41.6666667], abs=1e-6)
    assert np.diff(zx) == pytest.approx([22.2222222] * 2, abs=1e-6)


def test_frame_phase_shifts_peaks():
    plain = predict_peaks("ZX", D0, 50.0, 60.0)
    shifted = predict_peaks("ZX", D0, 50.0, 60.0, frame_phase=0.5)
    assert shifted[0] - plain[0] == pytest.approx(0.5 / D0)


def test_doubling_detuning_halves_spacing():
    a = np.diff(predict_peaks("ZX", D0, 25.0, 200.0))
    b = np.diff(predict_peaks("ZX", 2 * D0, 25.0, 200.0))
    assert b[0] == pytest.approx(a[0] / 2)


@given(st.floats(10.0, 100.0), st.floats(5.0, 60.0))
def test_peaks_interleave(f_mhz, t_g):
    d0 = mhz(f_mhz)
    zx = predict_peaks("ZX", d0, t_g, 150.0)
    ix = predict_peaks("IX", d0, t_g, 150.0)
    union = sorted([(t, "ZX") for t in zx] + [(t, "IX") for t in ix])
    for (t1, k1), (t2, k2) in zip(union, union[1:]):
        assert k1 != k2
        assert t2 - t1 == pytest.approx(np.pi / d0, abs=1e-9)


def test_predict_peaks_rejects_zero_detuning():
    with pytest.raises(ValueError):
        predict_peaks("ZX", 0.0, 25.0, 50.0)


# --- eta correction -------------------------------------------------------

def test_eta_limits():
    assert eta_correction(0.0, D0) == 0.0
    assert eta_correction(D0, D0) == pytest.approx(-2 * D0)
    with pytest.raises(SingularityError):
        eta_correction(np.sqrt(2) * D0, D0)


def test_eta_three_quarters():
    omega = 0.75 * D0
    assert eta_correction(omega, D0) / (omega**2 / D0) == pytest.approx(-1.391, rel=1e-3)


# --- excitation model -----------------------------------------------------

def test_p1_first_steps():
    assert p1_closed_form(0, 1e-3, 1e-2) == 0.0
    assert p1_closed_form(1, 1e-3, 1e-2) == pytest.approx(1e-3 * (1 - 1e-2), rel=1e-12)
    assert p1_closed_form(10, 1e-3, 0.0) == pytest.approx(0.5 * (1 - (1 - 2e-3) ** 10), rel=1e-12)
    assert p1_closed_form(7, 0.0, 0.0) == 0.0


def test_p1_steady_state_without_damping():
    assert p1_closed_form(10**7, 1e-3, 0.0) == pytest.approx(0.5, abs=1e-9)


def test_p1_matches_channel_composition_at_200():
    rho = np.diag([1.0, 0.0]).astype(complex)
    for _ in range(200):
        rho = apply_channel(apply_channel(rho, XYTwirl(1e-4)), AmplitudeDamping(1e-3))
    assert abs(rho[1, 1].real - p1_closed_form(200, 1e-4, 1e-3)) <= 1e-12


@given(st.floats(0.0, 0.5), st.floats(0.0, 1.0))
def test_p1_monotone_and_bounded(r_e, gamma):
    m = np.arange(0, 300)
    p = p1_closed_form(m, r_e, gamma)
    q = 1 - gamma - 2 * r_e + 2 * r_e * gamma
    bound = r_e * (1 - gamma) / (1 - q) if q < 1 else np.inf
    assert np.all(np.diff(p) >= -1e-15)
    assert np.all(p <= bound + 1e-12)


# --- power law ------------------------------------------------------------

def test_power_law_exact():
    x = np.array([0.5, 1, 2, 3, 5])
    fit = power_law_fit(x, 3 * x**2)
    assert fit.a == pytest.approx(3.0) and fit.slope == pytest.approx(2.0)
    assert fit.r_squared == pytest.approx(1.0)


def test_power_law_noise(rng):
    x = np.array([0.5, 1, 2, 3, 5])
    slopes = [power_law_fit(x, 2.6e-5 * x**2 * (1 + 0.1 * rng.standard_normal(5))).slope for _ in range(200)]
    assert np.mean(np.abs(np.array(slopes) - 2.0) <= 0.15) >= 0.95


def test_power_law_drops_nonpositive():
    x = np.array([0.5, 1, 2, 3, 5])
    y = 2 * x**2
    y[0] = -1.0
    with pytest.warns(FitWarning):
        fit = power_law_fit(x, y)
    assert fit.n_used == 4 and fit.a == pytest.approx(2.0)
    with pytest.raises(ValueError):
        power_law_fit([0.0, 1.0, 2.0], [1.0, 1.0, 1.0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FitWarning)
        with pytest.raises(ValueError):
            power_law_fit([1.0, 2.0, 3.0], [1.0, -1.0, -1.0])

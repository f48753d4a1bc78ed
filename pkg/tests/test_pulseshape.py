import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dualdrag.errors import DomainError, InvalidSpecError, ResolutionError
from dualdrag.pulseshape import (
    _envelope_factorized,
    _envelope_recursive,
    analytic_spectrum,
    drag_extend,
    eval_envelope,
    fourier_spectrum,
    hole_residuals,
    sample_waveform,
    sine4_pulse,
    spectral_factor,
    spectral_peak,
    write_spectrum_csv,
    write_waveform_csv,
)
from dualdrag.units import mhz, to_mhz

TG = 25.0
AMP = 4 * np.pi / (3 * TG)
D40 = mhz(40.0)

detuning = st.one_of(st.floats(0.05, 3.0), st.floats(-3.0, -0.05))
drag_sets = st.lists(detuning, min_size=0, max_size=6)


# --- envelope -------------------------------------------------------------

def test_base_peak_and_boundaries():
    spec = sine4_pulse(TG, AMP)
    assert eval_envelope(spec, TG / 2) == pytest.approx(AMP, rel=1e-14)
    assert eval_envelope(spec, 0.0) == 0
    assert abs(eval_envelope(spec, TG)) < 1e-15


def test_base_derivatives_vanish_at_edges():
    base = sine4_pulse(TG, AMP).base
    for order in (1, 2, 3):
        assert np.max(np.abs(base.derivative([0.0, TG], order))) < 1e-12 * AMP * (np.pi / TG) ** order


def test_base_nonnegative_with_peak():
    spec = sine4_pulse(TG, AMP)
    t = np.linspace(0, TG, 2001)
    env = eval_envelope(spec, t)
    assert np.all(env.real >= -1e-15)
    assert np.max(env.real) == pytest.approx(AMP, rel=1e-12)


def test_single_drag_zero_at_start():
    spec = sine4_pulse(TG, AMP, (D40,))
    assert abs(eval_envelope(spec, 0.0)) < 1e-15


def test_dual_drag_midpoint_cancels_at_unit_time_bandwidth():
    # second derivative of sin^4 at the centre is -4 (pi/t_g)^2 and t_g * 40 MHz = 1
    spec = sine4_pulse(TG, AMP, (D40, -D40))
    assert abs(eval_envelope(spec, TG / 2)) < 1e-14


def test_dual_drag_equals_base_plus_second_derivative():
    spec = sine4_pulse(TG, AMP, (mhz(33.0), -mhz(33.0)))
    t = np.linspace(0, TG, 101)
    base = spec.base
    expect = base.derivative(t, 0) + base.derivative(t, 2) / mhz(33.0) ** 2
    assert np.allclose(eval_envelope(spec, t), expect, atol=1e-15, rtol=0)


def test_time_outside_gate_raises():
    spec = sine4_pulse(TG, AMP)
    with pytest.raises(DomainError):
        eval_envelope(spec, -0.1)
    with pytest.raises(DomainError):
        eval_envelope(spec, TG + 0.1)


def test_zero_detuning_rejected():
    with pytest.raises(InvalidSpecError):
        sine4_pulse(TG, AMP, (0.0,))
    with pytest.raises(InvalidSpecError):
        drag_extend(sine4_pulse(TG, AMP), [D40, 0.0])


def test_drag_extend_appends_in_order():
    alpha = mhz(-194.6)
    spec = drag_extend(sine4_pulse(TG, AMP, (alpha,)), [D40, -D40])
    assert spec.drag_detunings == (alpha, D40, -D40)
    two = drag_extend(sine4_pulse(TG, AMP), [D40, -D40, mhz(90.0), -mhz(90.0)])
    assert np.max(np.abs(eval_envelope(two, np.linspace(0, TG, 51)).imag)) < 1e-15


@given(drag_sets)
def test_recursion_matches_factorization(dets):
    spec = sine4_pulse(TG, AMP, dets[:4])
    t = np.linspace(0, TG, 41)
    a, b = _envelope_recursive(spec, t), _envelope_factorized(spec, t)
    scale = AMP * max(1.0, float(np.prod([1 + (4 * np.pi / TG) / abs(d) for d in dets[:4]])))
    assert np.max(np.abs(a - b)) < 1e-12 * scale


@given(st.lists(st.floats(0.5, 24.5), min_size=100, max_size=100))
def test_derivatives_agree_with_central_differences(times):
    base = sine4_pulse(TG, AMP).base
    h = 1e-2
    t = np.array(times)
    for order in (1, 2, 3, 4):
        f = lambda x: base.derivative(x, order - 1)  # noqa: E731
        fd = (-f(t + 2 * h) + 8 * f(t + h) - 8 * f(t - h) + f(t - 2 * h)) / (12 * h)
        scale = AMP * (4 * np.pi / TG) ** order
        assert np.max(np.abs(fd - base.derivative(t, order))) < 1e-6 * scale


@given(st.floats(1e6, 1e9), st.booleans())
def test_huge_detuning_is_negligible(big, negative):
    d = -big if negative else big
    plain, dragged = sine4_pulse(TG, AMP), sine4_pulse(TG, AMP, (d,))
    t = np.linspace(0, TG, 51)
    assert np.max(np.abs(eval_envelope(dragged, t) - eval_envelope(plain, t))) < 1e-4 * AMP


@given(st.lists(st.floats(0.1, 3.0), min_size=1, max_size=3))
def test_mirrored_sets_give_real_envelope(pos):
    dets = [x for d in pos for x in (d, -d)]
    spec = sine4_pulse(TG, AMP, dets)
    assert np.max(np.abs(eval_envelope(spec, np.linspace(0, TG, 101)).imag)) < 1e-12 * AMP


# --- sampling -------------------------------------------------------------

@pytest.mark.parametrize("dets", [(), (D40,), (D40, -D40), (mhz(-194.6), D40, -D40)])
def test_sample_count_and_edges(dets):
    spec = sine4_pulse(TG, AMP, dets)
    wf = sample_waveform(spec, 0.1)
    assert len(wf.samples) == round(TG / 0.1) + 1
    assert abs(wf.samples[0]) < 1e-12 * AMP and abs(wf.samples[-1]) < 1e-12 * AMP
    assert wf.times[-1] == TG


def test_plain_samples_real_nonnegative():
    wf = sample_waveform(sine4_pulse(TG, AMP), 0.05)
    assert np.all(wf.samples.imag == 0)
    assert np.all(wf.samples.real >= -1e-15)


def test_dual_samples_real():
    wf = sample_waveform(sine4_pulse(TG, AMP, (D40, -D40)), 0.05)
    assert np.max(np.abs(wf.samples.imag)) < 1e-12 * AMP


def test_single_drag_imaginary_maximum():
    # max |d/dt sin^4(pi t / t_g)| = 3 sqrt(3) pi / (4 t_g) at pi t / t_g = pi / 3
    spec = sine4_pulse(TG, AMP, (D40,))
    wf = sample_waveform(spec, TG / 3000)
    expected = AMP * 3 * np.sqrt(3) * np.pi / (4 * TG) / D40
    assert np.max(np.abs(wf.samples.imag)) == pytest.approx(expected, rel=1e-6)


def test_sampling_includes_carrier_and_phase():
    spec = sine4_pulse(TG, AMP, eta=mhz(10.0), phase=0.3)
    wf = sample_waveform(spec, 0.25)
    t = wf.times
    expect = eval_envelope(spec, t) * np.exp(-1j * mhz(10.0) * t + 0.3j)
    assert np.allclose(wf.samples, expect, atol=1e-15)


def test_coarse_sampling_rejected():
    with pytest.raises(ResolutionError):
        sample_waveform(sine4_pulse(TG, AMP), TG / 40)
    with pytest.raises(ResolutionError):
        sample_waveform(sine4_pulse(TG, AMP), 0.0)


# --- spectrum -------------------------------------------------------------

def test_dc_component_is_three_eighths_area():
    spec = sine4_pulse(TG, AMP)
    assert abs(fourier_spectrum(spec, [0.0])[0]) == pytest.approx(3 / 8 * AMP * TG, rel=1e-10)


def test_quadrature_matches_closed_form():
    spec = sine4_pulse(TG, AMP, (mhz(-194.6), D40, -D40), eta=mhz(5.0), phase=0.2)
    w = mhz(np.linspace(-400, 400, 161))
    assert np.allclose(fourier_spectrum(spec, w), analytic_spectrum(spec, w), rtol=0, atol=1e-10 * AMP * TG)


def test_dual_drag_holes():
    spec = sine4_pulse(TG, AMP, (D40, -D40))
    res = hole_residuals(spec, [D40, -D40])
    assert all(r <= 1e-6 for _, r in res)


def test_untouched_frequency_residual_order_one():
    # oracle: closed-form transform evaluated independently of the quadrature
    spec = sine4_pulse(TG, AMP, (D40, -D40))
    w = mhz(np.arange(-500, 500.5, 0.5))
    peak = np.max(np.abs(analytic_spectrum(spec, w)))
    expect = abs(analytic_spectrum(spec, [mhz(10.0)])[0]) / peak
    (_, r), = hole_residuals(spec, [mhz(10.0)])
    assert r == pytest.approx(expect, rel=1e-6)
    assert 0.1 <= r <= 1.0


def test_single_drag_shifts_peak_about_thirty_mhz_away_from_hole():
    f, _ = spectral_peak(sine4_pulse(TG, AMP, (D40,)))
    assert 27.0 <= abs(to_mhz(f)) <= 33.0
    assert np.sign(f) == -np.sign(D40)


def test_spectral_peak_shifts_for_alpha_sets():
    alpha = mhz(-210.0)
    f3, _ = spectral_peak(sine4_pulse(6.0, 1.0, (alpha, -alpha, alpha)), span=mhz(1000))
    f2, _ = spectral_peak(sine4_pulse(6.0, 1.0, (alpha, alpha)), span=mhz(1000))
    assert to_mhz(f3) == pytest.approx(50.0, abs=5.0)
    assert to_mhz(f2) == pytest.approx(170.0, abs=10.0)


@given(st.lists(detuning, min_size=0, max_size=4))
def test_spectral_factorization(dets):
    spec = sine4_pulse(TG, AMP, dets)
    base = sine4_pulse(TG, AMP)
    w = mhz(np.linspace(-300, 300, 61))
    lhs = fourier_spectrum(spec, w)
    rhs = fourier_spectrum(base, w) * spectral_factor(spec.drag_detunings, w)
    scale = max(1.0, float(np.max(np.abs(spectral_factor(spec.drag_detunings, w)))))
    assert np.max(np.abs(lhs - rhs)) <= 1e-8 * AMP * TG * scale


@given(st.lists(detuning, min_size=5, max_size=6))
def test_deep_recursion_edge_terms(dets):
    # sine4 has three vanishing edge derivatives, so from the fifth correction on the
    # transform picks up edge terms: I_j = [f^(j-1) e^{iwt}]_0^T - i w I_(j-1)
    from dualdrag.pulseshape import drag_polynomial

    spec = sine4_pulse(TG, AMP, dets)
    base = spec.base
    w = mhz(np.linspace(-300, 300, 31))
    ints = [fourier_spectrum(sine4_pulse(TG, AMP), w)]
    for j in range(1, len(dets) + 1):
        edge = base.derivative(TG, j - 1) * np.exp(1j * w * TG) - base.derivative(0.0, j - 1)
        ints.append(edge - 1j * w * ints[-1])
    expect = sum(c * ints[j] for j, c in enumerate(drag_polynomial(spec.drag_detunings)))
    got = fourier_spectrum(spec, w)
    scale = max(1.0, float(np.max(np.abs(expect))))
    assert np.max(np.abs(got - expect)) <= 1e-8 * AMP * TG * scale


@given(st.lists(st.floats(0.1, 3.0), min_size=1, max_size=2))
def test_mirror_symmetric_magnitude(pos):
    dets = [x for d in pos for x in (d, -d)]
    spec = sine4_pulse(TG, AMP, dets)
    w = mhz(np.linspace(1, 300, 40))
    a, b = np.abs(fourier_spectrum(spec, w)), np.abs(fourier_spectrum(spec, -w))
    peak = abs(fourier_spectrum(spec, [0.0])[0])
    assert np.max(np.abs(a - b)) <= 1e-9 * max(peak, np.max(a))


def test_normalized_spectrum_peaks_at_one():
    spec = sine4_pulse(TG, AMP, (D40,))
    vals = fourier_spectrum(spec, mhz(np.linspace(-200, 200, 81)), normalized=True)
    assert np.max(np.abs(vals)) == pytest.approx(1.0)


def test_empty_grid_rejected():
    with pytest.raises(ValueError):
        fourier_spectrum(sine4_pulse(TG, AMP), [])
    with pytest.raises(ValueError):
        hole_residuals(sine4_pulse(TG, AMP), [])


# --- export ---------------------------------------------------------------

def test_csv_writers(tmp_path):
    spec = sine4_pulse(TG, AMP, (D40,))
    wpath, spath = tmp_path / "w.csv", tmp_path / "s.csv"
    write_waveform_csv(wpath, sample_waveform(spec, 0.5))
    write_spectrum_csv(spath, spec, mhz(np.array([-10.0, 0.0, 10.0])))
    wraw, sraw = wpath.read_bytes(), spath.read_bytes()
    assert b"\r" not in wraw and b"\r" not in sraw
    wrows = list(csv.reader(wpath.open()))
    srows = list(csv.reader(spath.open()))
    assert wrows[0] == ["t_ns", "re", "im"] and len(wrows) == 52
    assert srows[0] == ["f_MHz", "re", "im", "abs_norm"] and len(srows) == 4
    assert max(float(r[3]) for r in srows[1:]) == 1.0

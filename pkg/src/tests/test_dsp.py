import logging
import numpy as np
import pytest
from scipy import signal

from src.data import ChannelStream, Modality
from src.dsp import (
    butterworth_bandpass,
    butterworth_lowpass,
    chebyshev2_bandpass,
    decimate,
    decimation_factor,
    design_filter,
    filtfilt,
    filtfilt_array,
    POLE_RADIUS_LIMIT,
)
from src.error_handler import DecimationError, FilterDesignError, SignalTooShortError

logger = logging.getLogger(__name__)

FS = 128.0


def stream(samples, fs=FS):
    return ChannelStream(Modality.EEG, "AF3", fs, "µV", samples)


@pytest.fixture
def lowpass():
    return design_filter(butterworth_lowpass(14.0, FS, 4))


def test_butterworth_minus_3db_at_cutoff(lowpass):
    response = lowpass.response_db(np.array([0.0, 14.0, 28.0]))
    logger.info(f"Response at 0/14/28 Hz: {response}")
    assert abs(response[0]) < 0.01
    assert response[1] == pytest.approx(-3.0, abs=0.5)
    assert response[2] <= -23.0


def test_butterworth_matches_analytic_magnitude(lowpass):
    # Below the cutoff, where bilinear warping is small
    freqs = np.linspace(1.0, 14.0, 14)
    expected = -10.0 * np.log10(1.0 + (freqs / 14.0) ** 8)
    np.testing.assert_allclose(lowpass.response_db(freqs), expected, atol=0.1)


def test_chebyshev2_stopband():
    cheby = design_filter(chebyshev2_bandpass(0.1, 5.0, FS, 4, 40.0))
    assert cheby.response_db(np.array([20.0]))[0] <= -40.0 + 1.0
    assert cheby.pole_radius() < POLE_RADIUS_LIMIT


@pytest.mark.parametrize(
    "spec",
    [
        butterworth_lowpass(64.0, FS),
        butterworth_lowpass(0.0, FS),
        butterworth_bandpass(5.0, 1.0, FS),
        butterworth_lowpass(14.0, FS, 0),
        chebyshev2_bandpass(0.1, 5.0, FS, 4, 0.0),
    ],
)
def test_invalid_specs_rejected(spec):
    with pytest.raises(FilterDesignError):
        design_filter(spec)


def test_filtfilt_preserves_dc(lowpass):
    out = filtfilt(lowpass, stream(np.full(1280, 3.0)))
    assert len(out) == 1280 and out.fs == FS
    assert np.max(np.abs(out.samples[50:-50] - 3.0)) < 1e-6


def test_filtfilt_suppresses_50hz(lowpass):
    t = np.arange(1280) / FS
    x = np.sin(2 * np.pi * 50.0 * t)
    y = filtfilt_array(lowpass, x)
    rms = lambda v: np.sqrt(np.mean(v[100:-100] ** 2))
    assert rms(y) < 0.03 * rms(x)


def test_filtfilt_zero_phase(lowpass):
    t = np.arange(1280) / FS
    x = np.sin(2 * np.pi * 5.0 * t)
    y = filtfilt_array(lowpass, x)
    corr = signal.correlate(y[200:-200], x[200:-200], mode="full")
    lag = int(np.argmax(corr)) - (len(x[200:-200]) - 1)
    assert lag == 0


def test_filtfilt_linear(lowpass):
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal(512), rng.standard_normal(512)
    combined = filtfilt_array(lowpass, 2.0 * a - 0.5 * b)
    separate = 2.0 * filtfilt_array(lowpass, a) - 0.5 * filtfilt_array(lowpass, b)
    np.testing.assert_allclose(combined, separate, rtol=1e-9, atol=1e-12)


def test_filtfilt_too_short(lowpass):
    with pytest.raises(SignalTooShortError):
        filtfilt(lowpass, stream(np.ones(lowpass.padlen)))


def test_filtfilt_rate_mismatch(lowpass):
    with pytest.raises(FilterDesignError):
        filtfilt(lowpass, stream(np.ones(1000), fs=256.0))


def test_decimation_factor():
    assert decimation_factor(128.0, 32.0) == 4
    with pytest.raises(DecimationError):
        decimation_factor(128.0, 30.0)


def test_decimate_length_and_dc():
    out = decimate(stream(np.full(1280, 2.5)), 32.0)
    assert out.fs == 32.0
    assert len(out) == 320
    np.testing.assert_allclose(out.samples[10:-10], 2.5, atol=1e-6)

    odd = decimate(stream(np.zeros(1283)), 32.0)
    assert len(odd) == 321


def test_decimate_preserves_in_band_sinusoid():
    t = np.arange(2560) / FS
    out = decimate(stream(np.sin(2 * np.pi * 3.0 * t)), 32.0)
    amplitude = np.max(np.abs(out.samples[40:-40]))
    assert amplitude == pytest.approx(1.0, rel=0.02)


def test_decimate_with_cutoff_at_target_nyquist():
    t = np.arange(2560) / FS
    out = decimate(stream(np.sin(2 * np.pi * 3.0 * t)), 32.0, cutoff_hz=16.0)
    assert len(out) == 320
    assert np.max(np.abs(out.samples[40:-40])) == pytest.approx(1.0, rel=0.02)

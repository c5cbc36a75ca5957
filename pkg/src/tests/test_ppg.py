import logging
import numpy as np
import pytest

from src.data import ChannelStream, Modality
from src.error_handler import SamplingRateError, SignalTooShortError
from src.ppg import (
    PpgBeats,
    clean_ppg,
    detect_systolic_peaks,
    hr_step_series,
    read_beats,
    write_beats,
)
from src.synth import ppg_waveform

logger = logging.getLogger(__name__)

FS = 64.0


def ppg(samples, fs=FS, t0=0.0):
    return ChannelStream(Modality.PPG, "PPG", fs, "a.u.", samples, t0)


def synthetic_ppg(bpm: float, duration_s: float) -> ChannelStream:
    wave, _ = ppg_waveform(np.full(int(duration_s * FS), bpm), FS)
    return ppg(wave)


def rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


def test_clean_zero_signal():
    out = clean_ppg(ppg(np.zeros(640)))
    assert np.all(out.samples == 0.0)


def test_clean_keeps_pulse_band():
    t = np.arange(int(60 * FS)) / FS
    x = np.sin(2 * np.pi * 1.0 * t)
    y = clean_ppg(ppg(x)).samples
    middle = slice(int(10 * FS), int(50 * FS))
    assert rms(y[middle]) == pytest.approx(rms(x[middle]), rel=0.1)


def test_clean_removes_drift():
    t = np.arange(int(200 * FS)) / FS
    drift = np.sin(2 * np.pi * 0.02 * t)
    y = clean_ppg(ppg(drift)).samples
    middle = slice(int(50 * FS), int(150 * FS))
    assert rms(y[middle]) <= 0.1 * rms(drift[middle])


def test_clean_rejects_low_rate():
    with pytest.raises(SamplingRateError):
        clean_ppg(ppg(np.zeros(100), fs=8.0))


@pytest.mark.parametrize("bpm, duration_s", [(60.0, 60.0), (75.0, 120.0)])
def test_heart_rate_from_synthetic_ppg(bpm, duration_s):
    beats = detect_systolic_peaks(clean_ppg(synthetic_ppg(bpm, duration_s)))
    logger.info(f"{bpm} BPM: {beats.n_peaks} peaks, mean {beats.mean_hr_bpm}")
    expected_peaks = bpm * duration_s / 60.0
    assert abs(beats.n_peaks - expected_peaks) <= duration_s / 60.0 + 1
    assert beats.mean_hr_bpm == pytest.approx(bpm, abs=2.0)
    assert np.all(np.diff(beats.peak_times_s) > 0)
    valid_ibi = beats.ibi_s[beats.valid]
    assert np.std(valid_ibi) / np.mean(valid_ibi) < 0.05
    assert beats.mean_hr_bpm == pytest.approx(
        float(np.mean(60.0 / valid_ibi)), abs=0.1
    )


def test_flat_signal_has_no_beats():
    beats = detect_systolic_peaks(ppg(np.zeros(int(10 * FS))))
    assert beats.n_peaks == 0
    assert beats.mean_hr_bpm is None


def test_too_short():
    with pytest.raises(SignalTooShortError):
        detect_systolic_peaks(ppg(np.zeros(int(4 * FS))))


def test_peaks_scale_invariant_and_shift_equivariant():
    clean = clean_ppg(synthetic_ppg(70.0, 30.0))
    base = detect_systolic_peaks(clean)
    scaled = detect_systolic_peaks(clean.with_samples(3.0 * clean.samples))
    np.testing.assert_array_equal(scaled.peak_times_s, base.peak_times_s)

    k = 13
    shifted = detect_systolic_peaks(clean.with_samples(np.r_[np.zeros(k), clean.samples[:-k]]))
    lo, hi = 3.0, 26.0
    expected = base.peak_times_s[(base.peak_times_s > lo) & (base.peak_times_s < hi)] + k / FS
    moved = shifted.peak_times_s
    moved = moved[(moved > lo + k / FS) & (moved < hi + k / FS)]
    np.testing.assert_allclose(moved, expected, atol=1e-9)


def test_flagged_intervals(tmp_path, caplog):
    path = tmp_path / "beats.csv"
    path.write_text("peak_time_s,ibi_s,hr_bpm\n1.0,,\n2.0,,\n2.1,,\n3.1,,\n4.1,,\n", encoding="utf-8")
    caplog.set_level(logging.WARNING)
    beats = read_beats(str(path))
    assert beats.valid.tolist() == [True, False, True, True]
    assert beats.mean_hr_bpm == pytest.approx(60.0)
    assert beats.instantaneous_hr_bpm[1] == pytest.approx(600.0)
    assert "flagged" in caplog.text


def test_hr_step_series_holds_rate():
    beats = PpgBeats(
        peak_times_s=np.array([1.0, 2.0, 2.5, 3.5]),
        ibi_s=np.array([1.0, 0.5, 1.0]),
        instantaneous_hr_bpm=np.array([60.0, 120.0, 60.0]),
        valid=np.array([True, True, True]),
        mean_hr_bpm=80.0,
    )
    hr = hr_step_series(beats, n_samples=5 * 4, fs=4.0)
    assert hr[0] == 60.0  # before the first closing beat
    assert hr[int(2.25 * 4)] == 60.0
    assert hr[int(3.0 * 4)] == 120.0
    assert hr[int(4.0 * 4)] == 60.0


def test_beats_csv_roundtrip(tmp_path):
    beats = detect_systolic_peaks(clean_ppg(synthetic_ppg(72.0, 20.0)))
    path = tmp_path / "ppg_beats.csv"
    write_beats(beats, str(path))
    assert path.read_text(encoding="utf-8").splitlines()[0] == "peak_time_s,ibi_s,hr_bpm"
    loaded = read_beats(str(path))
    np.testing.assert_array_equal(loaded.peak_times_s, beats.peak_times_s)
    assert loaded.mean_hr_bpm == beats.mean_hr_bpm

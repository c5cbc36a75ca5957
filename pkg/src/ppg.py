"""
PPG cleaning and systolic peak detection.

Peaks are found with the two-event moving average scheme: the clipped and
squared signal is smoothed with a short (systolic peak) and a long (beat)
window, blocks where the short average exceeds the long one plus an offset
are kept, and the maximum of each block wide enough to hold a systolic peak
is a beat.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from scipy import ndimage

from .data import ChannelStream
from .dsp import chebyshev2_bandpass, design_filter, filtfilt
from .error_handler import (
    ErrorHandler,
    SamplingRateError,
    SignalTooShortError,
    FileWriteError,
    MissingFileError,
)

# Initialize Error Handling
error_handler = ErrorHandler()

MIN_FS = 16.0
MIN_DURATION_S = 5.0
BEAT_COLUMNS = ["peak_time_s", "ibi_s", "hr_bpm"]


@dataclass(frozen=True)
class PpgParams:
    low_hz: float = 0.1
    high_hz: float = 5.0
    order: int = 4
    stopband_atten_db: float = 40.0
    peak_window_s: float = 0.111
    beat_window_s: float = 0.667
    offset_beta: float = 0.02
    min_ibi_s: float = 0.33
    max_ibi_s: float = 2.0


@dataclass(frozen=True)
class PpgBeats:
    peak_times_s: np.ndarray
    ibi_s: np.ndarray
    instantaneous_hr_bpm: np.ndarray
    valid: np.ndarray  # per interval
    mean_hr_bpm: Optional[float]

    @property
    def n_peaks(self) -> int:
        return int(self.peak_times_s.size)


def clean_ppg(x: ChannelStream, params: PpgParams = PpgParams()) -> ChannelStream:
    """
    Zero-phase Chebyshev-II band-pass at the native rate.

    Raises:
        SamplingRateError: If fs is below 16 Hz.
    """
    if x.fs < MIN_FS:
        raise SamplingRateError(f"PPG cleaning needs fs >= {MIN_FS} Hz, '{x.name}' is at {x.fs} Hz")
    spec = chebyshev2_bandpass(
        params.low_hz, params.high_hz, x.fs, params.order, params.stopband_atten_db
    )
    return filtfilt(design_filter(spec), x)


def _beats_from_peaks(peak_times: np.ndarray, params: PpgParams) -> PpgBeats:
    ibi = np.diff(peak_times)
    hr = 60.0 / ibi if ibi.size else np.zeros(0)
    valid = (ibi >= params.min_ibi_s) & (ibi <= params.max_ibi_s)
    if ibi.size and not valid.all():
        error_handler.warning(
            f"PPG: {int((~valid).sum())} of {ibi.size} interbeat intervals outside "
            f"[{params.min_ibi_s}, {params.max_ibi_s}] s were flagged"
        )
    mean_hr = float(np.mean(hr[valid])) if valid.any() else None
    return PpgBeats(
        peak_times_s=peak_times,
        ibi_s=ibi,
        instantaneous_hr_bpm=hr,
        valid=valid,
        mean_hr_bpm=mean_hr,
    )


def detect_systolic_peaks(x_clean: ChannelStream, params: PpgParams = PpgParams()) -> PpgBeats:
    """
    One peak per systolic upstroke of a cleaned PPG stream.

    Raises:
        SignalTooShortError: If the stream is shorter than five seconds.
    """
    if x_clean.duration_s < MIN_DURATION_S:
        raise SignalTooShortError(
            f"Peak detection needs {MIN_DURATION_S} s of PPG, '{x_clean.name}' has "
            f"{x_clean.duration_s:.2f} s"
        )
    x = x_clean.samples
    energy = np.clip(x, 0.0, None) ** 2

    peak_window = max(int(round(params.peak_window_s * x_clean.fs)), 1)
    beat_window = max(int(round(params.beat_window_s * x_clean.fs)), 1)
    ma_peak = ndimage.uniform_filter1d(energy, size=peak_window, mode="nearest")
    ma_beat = ndimage.uniform_filter1d(energy, size=beat_window, mode="nearest")
    threshold = ma_beat + params.offset_beta * energy.mean()

    blocks = np.diff(np.r_[0, (ma_peak > threshold).astype(np.int8), 0])
    starts = np.flatnonzero(blocks == 1)
    ends = np.flatnonzero(blocks == -1)

    peaks = [
        start + int(np.argmax(x[start:end]))
        for start, end in zip(starts, ends)
        if end - start >= peak_window
    ]
    peak_times = x_clean.t0 + np.asarray(peaks, dtype=float) / x_clean.fs
    beats = _beats_from_peaks(peak_times, params)
    error_handler.debug(
        f"PPG '{x_clean.name}': {beats.n_peaks} peaks, mean HR {beats.mean_hr_bpm}"
    )
    return beats


def hr_step_series(beats: PpgBeats, n_samples: int, fs: float, t0: float = 0.0) -> np.ndarray:
    """
    Instantaneous heart rate held between beats, sampled at fs.

    An interval's rate applies from the beat that closes it; before that the
    first valid rate is used. Flagged intervals hold the previous value.
    """
    out = np.zeros(n_samples)
    if not beats.valid.any():
        return out

    times = t0 + np.arange(n_samples) / fs
    first_valid = int(np.argmax(beats.valid))
    current = beats.instantaneous_hr_bpm[first_valid]
    out[:] = current
    for i, hr in enumerate(beats.instantaneous_hr_bpm):
        if beats.valid[i]:
            current = hr
        out[times >= beats.peak_times_s[i + 1]] = current
    return out


def write_beats(beats: PpgBeats, path: str) -> None:
    ibi = np.r_[np.nan, beats.ibi_s] if beats.n_peaks else np.zeros(0)
    hr = np.r_[np.nan, beats.instantaneous_hr_bpm] if beats.n_peaks else np.zeros(0)
    frame = pd.DataFrame({"peak_time_s": beats.peak_times_s, "ibi_s": ibi, "hr_bpm": hr})
    try:
        frame.to_csv(path, index=False, columns=BEAT_COLUMNS)
    except OSError as e:
        raise FileWriteError(f"Cannot write PPG beats to '{path}': {e}")


def read_beats(path: str, params: PpgParams = PpgParams()) -> PpgBeats:
    if not Path(path).exists():
        raise MissingFileError(f"PPG beat file not found: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    return _beats_from_peaks(frame["peak_time_s"].to_numpy(dtype=float), params)

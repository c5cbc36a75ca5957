"""
IIR filter design, zero-phase filtering and anti-aliased decimation shared by
the EEG, GSR and PPG chains.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy import signal

from .data import ChannelStream
from .error_handler import (
    ErrorHandler,
    FilterDesignError,
    SignalTooShortError,
    DecimationError,
)

# Initialize Error Handling
error_handler = ErrorHandler()

POLE_RADIUS_LIMIT = 1.0 - 1e-6


class FilterFamily(str, Enum):
    BUTTERWORTH = "butterworth"
    CHEBYSHEV2 = "chebyshev2"


class FilterKind(str, Enum):
    LOWPASS = "lowpass"
    BANDPASS = "bandpass"


@dataclass(frozen=True)
class FilterSpec:
    family: FilterFamily
    kind: FilterKind
    order: int
    cutoffs_hz: Tuple[float, ...]
    fs: float
    stopband_atten_db: Optional[float] = None

    def validate(self) -> None:
        """
        Check the design constraints.

        Raises:
            FilterDesignError: If an edge is outside (0, fs/2), the band edges
                are not increasing, the order is not positive or a Chebyshev-II
                design lacks a positive stopband attenuation.
        """
        if self.fs <= 0:
            raise FilterDesignError(f"Sampling rate must be positive, got {self.fs}")
        if self.order < 1:
            raise FilterDesignError(f"Filter order must be >= 1, got {self.order}")

        expected = 1 if self.kind == FilterKind.LOWPASS else 2
        if len(self.cutoffs_hz) != expected:
            raise FilterDesignError(
                f"A {self.kind.value} filter takes {expected} edge(s), "
                f"got {len(self.cutoffs_hz)}"
            )

        nyquist = self.fs / 2.0
        for edge in self.cutoffs_hz:
            if not 0 < edge < nyquist:
                raise FilterDesignError(
                    f"Edge {edge} Hz must lie strictly between 0 and the "
                    f"Nyquist frequency {nyquist} Hz"
                )
        if self.kind == FilterKind.BANDPASS and not self.cutoffs_hz[0] < self.cutoffs_hz[1]:
            raise FilterDesignError(
                f"Band edges must increase, got {self.cutoffs_hz}"
            )

        if self.family == FilterFamily.CHEBYSHEV2:
            if self.stopband_atten_db is None or self.stopband_atten_db <= 0:
                raise FilterDesignError(
                    "Chebyshev-II designs need a positive stopband attenuation"
                )


@dataclass(frozen=True)
class FilterRealization:
    """Second-order-section cascade, one row per section."""

    spec: FilterSpec
    sos: np.ndarray

    @property
    def n_sections(self) -> int:
        return int(self.sos.shape[0])

    @property
    def padlen(self) -> int:
        return 3 * (2 * self.n_sections)

    def pole_radius(self) -> float:
        _, poles, _ = signal.sos2zpk(self.sos)
        return float(np.max(np.abs(poles))) if poles.size else 0.0

    def response_db(self, freqs_hz: np.ndarray) -> np.ndarray:
        """Magnitude response in dB at the given frequencies."""
        _, h = signal.sosfreqz(self.sos, worN=np.asarray(freqs_hz, dtype=float), fs=self.spec.fs)
        return 20.0 * np.log10(np.maximum(np.abs(h), 1e-300))


def butterworth_lowpass(cutoff_hz: float, fs: float, order: int = 4) -> FilterSpec:
    return FilterSpec(FilterFamily.BUTTERWORTH, FilterKind.LOWPASS, order, (cutoff_hz,), fs)


def butterworth_bandpass(low_hz: float, high_hz: float, fs: float, order: int = 2) -> FilterSpec:
    return FilterSpec(FilterFamily.BUTTERWORTH, FilterKind.BANDPASS, order, (low_hz, high_hz), fs)


def chebyshev2_bandpass(
    low_hz: float, high_hz: float, fs: float, order: int = 4, atten_db: float = 40.0
) -> FilterSpec:
    return FilterSpec(
        FilterFamily.CHEBYSHEV2, FilterKind.BANDPASS, order, (low_hz, high_hz), fs, atten_db
    )


def design_filter(spec: FilterSpec) -> FilterRealization:
    """
    Realize a filter specification as second-order sections.

    Butterworth edges are the -3 dB points. Chebyshev-II edges are the
    stopband edges, where the attenuation first reaches stopband_atten_db.

    Raises:
        FilterDesignError: If the spec is invalid or the design is unstable.
    """
    spec.validate()
    edges = spec.cutoffs_hz[0] if spec.kind == FilterKind.LOWPASS else list(spec.cutoffs_hz)
    btype = "lowpass" if spec.kind == FilterKind.LOWPASS else "bandpass"

    if spec.family == FilterFamily.BUTTERWORTH:
        sos = signal.butter(spec.order, edges, btype=btype, fs=spec.fs, output="sos")
    else:
        sos = signal.cheby2(
            spec.order, spec.stopband_atten_db, edges, btype=btype, fs=spec.fs, output="sos"
        )

    realization = FilterRealization(spec=spec, sos=np.asarray(sos, dtype=float))
    if not np.all(np.isfinite(realization.sos)):
        raise FilterDesignError(f"Non-finite coefficients for {spec}")
    radius = realization.pole_radius()
    if radius >= POLE_RADIUS_LIMIT:
        raise FilterDesignError(f"Unstable design, pole radius {radius:.9f} for {spec}")

    error_handler.debug(
        f"Designed {spec.family.value} {spec.kind.value} order {spec.order} "
        f"edges {spec.cutoffs_hz} Hz at {spec.fs} Hz ({realization.n_sections} sections)"
    )
    return realization


def filtfilt_array(f: FilterRealization, x: np.ndarray, axis: int = 0) -> np.ndarray:
    """Zero-phase forward-backward filtering with odd-reflection padding."""
    x = np.asarray(x, dtype=float)
    if x.shape[axis] <= f.padlen:
        raise SignalTooShortError(
            f"Signal of {x.shape[axis]} samples is too short for edge padding of "
            f"{f.padlen} samples"
        )
    return signal.sosfiltfilt(f.sos, x, axis=axis, padtype="odd", padlen=f.padlen)


def filtfilt(f: FilterRealization, x: ChannelStream) -> ChannelStream:
    """
    Apply a realization to a stream without phase shift.

    Raises:
        SignalTooShortError: If the stream cannot be edge padded.
        FilterDesignError: If the stream rate differs from the design rate.
    """
    if not math.isclose(x.fs, f.spec.fs):
        raise FilterDesignError(
            f"Filter designed for {f.spec.fs} Hz applied to '{x.name}' at {x.fs} Hz"
        )
    return x.with_samples(filtfilt_array(f, x.samples))


def decimation_factor(org_fs: float, tar_fs: float) -> int:
    """
    Integer factor Org_fs / Tar_fs.

    Raises:
        DecimationError: If the ratio is not a positive integer.
    """
    if tar_fs <= 0 or org_fs <= 0:
        raise DecimationError(f"Sampling rates must be positive ({org_fs} -> {tar_fs})")
    ratio = org_fs / tar_fs
    factor = int(round(ratio))
    if factor < 1 or abs(ratio - factor) > 1e-9:
        raise DecimationError(
            f"Cannot decimate {org_fs} Hz to {tar_fs} Hz: factor {ratio:g} is not an integer"
        )
    return factor


def decimate(
    x: ChannelStream, target_fs: float, cutoff_hz: float = 14.0, order: int = 4
) -> ChannelStream:
    """
    Anti-alias low-pass (Butterworth, zero phase) then keep every factor-th
    sample. The output has ceil(len(x) / factor) samples.
    """
    factor = decimation_factor(x.fs, target_fs)
    if factor == 1:
        return x.with_samples(np.array(x.samples, copy=True), fs=target_fs)

    anti_alias = design_filter(butterworth_lowpass(cutoff_hz, x.fs, order))
    smoothed = filtfilt_array(anti_alias, x.samples)
    error_handler.debug(f"Decimating '{x.name}' {x.fs} Hz -> {target_fs} Hz (factor {factor})")
    return x.with_samples(smoothed[::factor], fs=float(target_fs))

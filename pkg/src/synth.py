"""
Synthetic multimodal sessions with known ground truth.

EEG is five channels of pink noise plus a posterior alpha source and a
frontal theta source. ERP events add a theta/alpha burst to the alpha source
followed by a slow positive wave, an SCR after a coupling delay and a transient
heart-rate rise. Artifact events add a short frontal spike to the EEG only.
Both devices carry a NOD start marker and a WAVE end marker framing the
session.
"""

import json
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from .data import (
    Annotation,
    ChannelStream,
    Modality,
    SessionRecording,
    SyncMarker,
    VideoMeta,
)
from .error_handler import ErrorHandler, SynthSpecError, MissingFileError

# Initialize Error Handling
error_handler = ErrorHandler()

EEG_CHANNELS = ("AF3", "T7", "Pz", "T8", "AF4")
EEG_DEVICE = "emotiv"
SHIMMER_DEVICE = "shimmer"
EVENT_KINDS = ("erp", "artifact")
RNG_NAME = "numpy.random.Philox"

# Spatial patterns over EEG_CHANNELS
ALPHA_PATTERN = np.array([0.4, 0.6, 1.0, 0.6, 0.4])
THETA_PATTERN = np.array([1.0, 0.6, 0.3, 0.6, 1.0])
ARTIFACT_PATTERN = np.array([1.0, 0.3, 0.1, 0.3, 1.0])

# Seconds recorded before the start marker and after the end marker
LEAD_S = 2.0
TAIL_S = 1.0
EEG_LEAD_S = 1.0
CANONICAL_MIN_GAP_S = 2.5
SLOW_RAMP_S = 0.1


@dataclass(frozen=True)
class SynthEvent:
    time_s: float
    kind: str


@dataclass(frozen=True)
class SynthSpec:
    duration_s: float = 60.0
    seed: int = 0
    events: Tuple[SynthEvent, ...] = ()
    eeg_fs: float = 128.0
    shimmer_fs: float = 128.0
    min_spacing_s: float = 2.0
    # EEG
    pink_std_uv: float = 1.0
    pink_exponent: float = 1.0
    alpha_hz: float = 10.0
    alpha_amplitude_uv: float = 10.0
    theta_hz: float = 6.0
    theta_amplitude_uv: float = 10.0
    erp_band_hz: Tuple[float, float] = (4.0, 13.0)
    erp_amplitude_uv: float = 10.0
    erp_duration_s: float = 0.3
    erp_deflection_uv: float = 5.0
    erp_slow_s: float = 1.0
    artifact_factor: float = 5.0
    artifact_width_s: float = 0.1
    # GSR
    tonic_us: float = 2.0
    tonic_drift_us: float = 0.1
    scr_delay_s: float = 1.0
    scr_amplitude_us: float = 0.5
    scr_tau0: float = 2.0
    scr_tau1: float = 0.7
    gsr_noise_us: float = 0.005
    # PPG
    hr_baseline_bpm: float = 70.0
    hr_delta_bpm: float = 8.0
    hr_delay_s: float = 0.3
    hr_bump_s: float = 2.0
    ppg_noise: float = 0.02
    # Video
    fps: float = 30.0

    def validate(self) -> None:
        """
        Raises:
            SynthSpecError: If the schedule is infeasible or a rate is not positive.
        """
        if self.duration_s <= 0:
            raise SynthSpecError(f"duration_s must be positive, got {self.duration_s}")
        if self.eeg_fs <= 0 or self.shimmer_fs <= 0 or self.fps <= 0:
            raise SynthSpecError("Sampling rates and fps must be positive")
        if self.erp_slow_s < 0:
            raise SynthSpecError(f"erp_slow_s must be >= 0, got {self.erp_slow_s}")
        times = sorted(e.time_s for e in self.events)
        for e in self.events:
            if e.kind not in EVENT_KINDS:
                raise SynthSpecError(f"Unknown event kind '{e.kind}' at {e.time_s} s")
            if not 0 <= e.time_s <= self.duration_s - self.erp_duration_s:
                raise SynthSpecError(
                    f"Event at {e.time_s} s outside [0, {self.duration_s - self.erp_duration_s}] s"
                )
        for a, b in zip(times, times[1:]):
            if b - a < self.min_spacing_s:
                raise SynthSpecError(
                    f"Events at {a} s and {b} s are closer than {self.min_spacing_s} s"
                )

    def erp_times(self) -> List[float]:
        return [e.time_s for e in self.events if e.kind == "erp"]

    def artifact_times(self) -> List[float]:
        return [e.time_s for e in self.events if e.kind == "artifact"]


def canonical_spec(seed: int = 0, duration_s: float = 180.0) -> SynthSpec:
    """Eight ERP and fourteen artifact events, evenly spaced."""
    margin = min(10.0, (duration_s - 21 * CANONICAL_MIN_GAP_S) / 2.0)
    spacing = (duration_s - 2 * margin) / 21.0
    erp_slots = {1, 4, 7, 10, 13, 16, 19, 21}
    events = tuple(
        SynthEvent(round(margin + i * spacing, 3), "erp" if i in erp_slots else "artifact")
        for i in range(22)
    )
    return SynthSpec(duration_s=duration_s, seed=seed, events=events)


def pink_noise(rng: np.random.Generator, n: int, exponent: float = 1.0) -> np.ndarray:
    """Unit-variance noise with a 1/f^exponent power spectrum."""
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n)
    freqs[0] = freqs[1] if n > 1 else 1.0
    shaped = np.fft.irfft(spectrum / freqs ** (exponent / 2.0), n)
    shaped -= shaped.mean()
    std = shaped.std()
    return shaped / std if std > 0 else shaped


def bateman(t: np.ndarray, tau0: float, tau1: float) -> np.ndarray:
    """Bateman response normalized to a unit peak, zero before t = 0."""
    out = np.where(t >= 0, np.exp(-np.clip(t, 0, None) / tau0) - np.exp(-np.clip(t, 0, None) / tau1), 0.0)
    peak = out.max()
    return out / peak if peak > 0 else out


def _raised_cosine(t: np.ndarray, width: float) -> np.ndarray:
    x = t / width
    return np.where((x >= 0) & (x <= 1), 0.5 * (1.0 - np.cos(2.0 * np.pi * x)), 0.0)


def _plateau(t: np.ndarray, width: float, ramp: float) -> np.ndarray:
    """Unit plateau on [0, width] with raised-cosine ramps of length ramp."""
    edge = np.clip(np.minimum(t, width - t) / ramp, 0.0, 1.0)
    return 0.5 * (1.0 - np.cos(np.pi * edge))


def _eeg(spec: SynthSpec, rng: np.random.Generator, times: np.ndarray) -> np.ndarray:
    n = times.size
    source = spec.alpha_amplitude_uv * np.sin(2.0 * np.pi * spec.alpha_hz * times + rng.uniform(0, 2 * np.pi))

    burst_hz = float(np.mean(spec.erp_band_hz))
    sigma = spec.erp_duration_s / 6.0
    for t in spec.erp_times():
        center = LEAD_S + t + spec.erp_duration_s / 2.0
        envelope = np.exp(-0.5 * ((times - center) / sigma) ** 2)
        source += spec.erp_amplitude_uv * envelope * np.cos(2.0 * np.pi * burst_hz * (times - center))
        slow_start = LEAD_S + t + spec.erp_duration_s
        source += spec.erp_deflection_uv * _plateau(times - slow_start, spec.erp_slow_s, SLOW_RAMP_S)

    theta = spec.theta_amplitude_uv * np.sin(2.0 * np.pi * spec.theta_hz * times + rng.uniform(0, 2 * np.pi))

    spikes = np.zeros(n)
    for t in spec.artifact_times():
        start = LEAD_S + t
        spikes[(times >= start) & (times < start + spec.artifact_width_s)] = (
            spec.artifact_factor * spec.erp_amplitude_uv
        )

    noise = np.stack(
        [spec.pink_std_uv * pink_noise(rng, n, spec.pink_exponent) for _ in EEG_CHANNELS], axis=1
    )
    return (
        noise
        + np.outer(source, ALPHA_PATTERN)
        + np.outer(theta, THETA_PATTERN)
        + np.outer(spikes, ARTIFACT_PATTERN)
    )


def _gsr(spec: SynthSpec, rng: np.random.Generator, times: np.ndarray) -> np.ndarray:
    span = times[-1] - times[0] if times.size > 1 else 1.0
    sc = spec.tonic_us + spec.tonic_drift_us * (times - times[0]) / span
    for t in spec.erp_times():
        onset = LEAD_S + t + spec.scr_delay_s
        sc = sc + spec.scr_amplitude_us * bateman(times - onset, spec.scr_tau0, spec.scr_tau1)
    return sc + spec.gsr_noise_us * rng.standard_normal(times.size)


def _heart_rate(spec: SynthSpec, times: np.ndarray) -> np.ndarray:
    hr = np.full(times.size, spec.hr_baseline_bpm)
    for t in spec.erp_times():
        hr += spec.hr_delta_bpm * _raised_cosine(times - (LEAD_S + t + spec.hr_delay_s), spec.hr_bump_s)
    return hr


def ppg_waveform(hr_bpm: np.ndarray, fs: float, t0: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pulse train following a heart-rate trace. Each beat is a systolic
    Gaussian followed by a smaller diastolic one. Returns (waveform, beat times).
    """
    times = t0 + np.arange(hr_bpm.size) / fs
    phase = np.cumsum(hr_bpm / 60.0) / fs
    crossings = np.flatnonzero(np.diff(np.floor(phase)) > 0) + 1
    beats = times[crossings]
    wave = np.zeros(hr_bpm.size)
    for beat in beats:
        wave += np.exp(-0.5 * ((times - beat) / 0.08) ** 2)
        wave += 0.4 * np.exp(-0.5 * ((times - beat - 0.3) / 0.1) ** 2)
    return wave, beats


def _memorability(spec: SynthSpec, rng: np.random.Generator, frame_count: int) -> np.ndarray:
    scores = rng.uniform(0.0, 0.7, frame_count)
    frame_times = np.arange(frame_count) / spec.fps
    for t in spec.erp_times():
        near = (frame_times >= t) & (frame_times <= t + 2.0)
        scores[near] = rng.uniform(0.6, 1.0, int(near.sum()))
    return scores


def generate(spec: SynthSpec) -> SessionRecording:
    """
    Build an unaligned session recording for a spec. Identical specs give
    identical recordings.

    Raises:
        SynthSpecError: If the spec is infeasible.
    """
    spec.validate()
    rng = np.random.Generator(np.random.Philox(spec.seed))

    start, end = LEAD_S, LEAD_S + spec.duration_s
    eeg_n = int(round((end + TAIL_S - EEG_LEAD_S) * spec.eeg_fs))
    eeg_times = EEG_LEAD_S + np.arange(eeg_n) / spec.eeg_fs
    eeg = _eeg(spec, rng, eeg_times)

    shimmer_n = int(round((end + TAIL_S) * spec.shimmer_fs))
    shimmer_times = np.arange(shimmer_n) / spec.shimmer_fs
    gsr = _gsr(spec, rng, shimmer_times)
    ppg, _ = ppg_waveform(_heart_rate(spec, shimmer_times), spec.shimmer_fs)
    ppg = ppg + spec.ppg_noise * rng.standard_normal(shimmer_n)

    channels = [
        ChannelStream(Modality.EEG, name, spec.eeg_fs, "µV", eeg[:, i], EEG_LEAD_S, EEG_DEVICE)
        for i, name in enumerate(EEG_CHANNELS)
    ]
    channels.append(ChannelStream(Modality.GSR, "GSR", spec.shimmer_fs, "µS", gsr, 0.0, SHIMMER_DEVICE))
    channels.append(ChannelStream(Modality.PPG, "PPG", spec.shimmer_fs, "a.u.", ppg, 0.0, SHIMMER_DEVICE))

    markers = []
    for device in (EEG_DEVICE, SHIMMER_DEVICE):
        markers.append(SyncMarker("NOD", start, device, "start"))
        markers.append(SyncMarker("WAVE", end, device, "end"))

    annotations = []
    for e in sorted(spec.events, key=lambda e: e.time_s):
        if e.kind == "erp":
            annotations.append(Annotation(start + e.time_s, start + e.time_s + spec.erp_duration_s, "attention"))
        else:
            annotations.append(Annotation(start + e.time_s, start + e.time_s + spec.artifact_width_s, "artifact"))

    frame_count = int(spec.duration_s * spec.fps)
    meta: Dict[str, object] = {
        "subject": "synthetic",
        "session": f"seed-{spec.seed}",
        "rng": RNG_NAME,
        "seed": spec.seed,
    }
    error_handler.info(
        f"Generated synthetic session: {spec.duration_s} s, {len(spec.erp_times())} ERP and "
        f"{len(spec.artifact_times())} artifact events (seed {spec.seed})"
    )
    return SessionRecording(
        channels=channels,
        markers=markers,
        video=VideoMeta(fps=spec.fps, frame_count=frame_count),
        annotations=annotations,
        meta=meta,
        memorability=_memorability(spec, rng, frame_count),
    )


def spec_from_dict(raw: dict) -> SynthSpec:
    """
    Raises:
        SynthSpecError: For unknown keys or malformed events.
    """
    known = {f.name for f in fields(SynthSpec)}
    unknown = set(raw) - known
    if unknown:
        raise SynthSpecError(f"Unknown synthetic spec keys: {sorted(unknown)}")
    values = dict(raw)
    try:
        values["events"] = tuple(
            SynthEvent(float(e["time_s"]), str(e["kind"])) for e in raw.get("events", [])
        )
    except (KeyError, TypeError, ValueError) as e:
        raise SynthSpecError(f"Malformed event list: {e}")
    if "erp_band_hz" in values:
        values["erp_band_hz"] = tuple(values["erp_band_hz"])
    spec = replace(SynthSpec(), **values)
    spec.validate()
    return spec


def spec_to_dict(spec: SynthSpec) -> dict:
    out = {f.name: getattr(spec, f.name) for f in fields(spec)}
    out["events"] = [{"time_s": e.time_s, "kind": e.kind} for e in spec.events]
    out["erp_band_hz"] = list(spec.erp_band_hz)
    return out


def load_synth_spec(path: str) -> SynthSpec:
    spec_path = Path(path)
    if not spec_path.exists():
        raise MissingFileError(f"Synthetic spec not found: {path}")
    try:
        raw = json.loads(spec_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SynthSpecError(f"{path} line {e.lineno}: {e.msg}")
    if not isinstance(raw, dict):
        raise SynthSpecError(f"{path}: expected a JSON object")
    return spec_from_dict(raw)


def write_synth_spec(spec: SynthSpec, path: str) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2), encoding="utf-8")

"""
Episode extraction from a fused matrix.

Sliding-window change point detection over the EEG columns proposes
candidate times. Each merged candidate span is then classified by a Morlet
scalogram of its EEG columns: an ERP episode carries most of its wavelet
energy in the theta/alpha band and, when peripheral modalities are fused, is
corroborated by an SCR onset or a heart-rate rise following it. Everything
else is an artifact.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import signal

from .data import Annotation, Modality
from .eda import ScrEvent
from .error_handler import (
    ErrorHandler,
    WindowError,
    ConfigError,
    FileWriteError,
    MissingFileError,
)
from .fusion import FusedMatrix
from .metrics import detection_f1
from .ppg import PpgBeats

# Initialize Error Handling
error_handler = ErrorHandler()

EPISODE_COLUMNS = ["onset_s", "offset_s", "score", "label", "band_ratio", "corroboration"]
HR_COLUMN_NAME = "HR"


class EpisodeLabel(str, Enum):
    ERP = "ERP"
    ARTIFACT = "artifact"


@dataclass(frozen=True)
class CpdConfig:
    window_s: float = 0.75
    step_s: float = 0.25
    k: float = 3.0  # threshold = mean + k * std of the score trace
    gap_s: float = 0.5

    def validate(self, allow_any_window: bool = False) -> None:
        if self.window_s <= 0 or self.step_s <= 0:
            raise ConfigError("cpd.window_s and cpd.step_s must be positive")
        if not allow_any_window and not 0.1 - 1e-9 <= self.window_s <= 1.0 + 1e-9:
            raise ConfigError(f"cpd.window_s must be in [0.1, 1.0], got {self.window_s}")
        if self.step_s > self.window_s:
            raise ConfigError(
                f"cpd.step_s ({self.step_s}) must not exceed cpd.window_s ({self.window_s})"
            )
        if self.gap_s < 0:
            raise ConfigError("cpd.gap_s must be >= 0")


@dataclass(frozen=True)
class ClassifierConfig:
    band_low_hz: float = 4.0
    band_high_hz: float = 13.0
    ratio_threshold: float = 0.6
    corroboration_s: float = 2.0
    hr_delta_bpm: float = 3.0
    scr_amp_threshold_us: float = 0.01
    omega0: float = 6.0
    n_scales: int = 24
    f_min_hz: float = 1.0
    f_max_hz: float = 16.0

    def validate(self) -> None:
        if not 0 < self.band_low_hz < self.band_high_hz:
            raise ConfigError("classifier band edges must satisfy 0 < low < high")
        if not 0 <= self.ratio_threshold <= 1:
            raise ConfigError("classifier.ratio_threshold must be in [0, 1]")
        if self.n_scales < 2 or not 0 < self.f_min_hz < self.f_max_hz:
            raise ConfigError("classifier scale grid is invalid")


@dataclass(frozen=True)
class ChangePoint:
    time_s: float
    score: float
    index: int


@dataclass(frozen=True)
class Scalogram:
    coefficients: np.ndarray  # (channels, scales, samples), complex
    scales: np.ndarray  # in samples
    frequencies_hz: np.ndarray
    t_start: float
    fs: float

    def magnitude(self) -> np.ndarray:
        """Mean magnitude over channels, (scales, samples)."""
        return np.abs(self.coefficients).mean(axis=0)

    def energy_per_scale(self) -> np.ndarray:
        return (np.abs(self.coefficients) ** 2).sum(axis=2).mean(axis=0)


@dataclass(frozen=True)
class Episode:
    onset_s: float
    offset_s: float
    score: float
    label: EpisodeLabel
    band_energy_ratio: float
    corroborating_modalities: Tuple[Modality, ...] = ()
    cpd_scores: Tuple[float, ...] = ()


@dataclass
class EpisodeSet:
    episodes: List[Episode] = field(default_factory=list)
    config: Dict[str, dict] = field(default_factory=dict)

    @property
    def n_total(self) -> int:
        return len(self.episodes)

    @property
    def n_erp(self) -> int:
        return sum(1 for e in self.episodes if e.label == EpisodeLabel.ERP)

    @property
    def n_artifact(self) -> int:
        return self.n_total - self.n_erp

    def erp(self) -> List[Episode]:
        return [e for e in self.episodes if e.label == EpisodeLabel.ERP]

    def totals(self) -> Dict[str, int]:
        return {"n_total": self.n_total, "n_erp": self.n_erp, "n_artifact": self.n_artifact}


@dataclass(frozen=True)
class PeripheralEvents:
    """SCR onsets and a heart-rate trace used to corroborate EEG episodes."""

    scr_onsets_s: np.ndarray = field(default_factory=lambda: np.zeros(0))
    hr_times_s: np.ndarray = field(default_factory=lambda: np.zeros(0))
    hr_bpm: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def from_detections(
        cls, scr_events: Optional[Sequence[ScrEvent]] = None, beats: Optional[PpgBeats] = None
    ) -> "PeripheralEvents":
        onsets = np.array([e.onset_s for e in scr_events or []], dtype=float)
        if beats is None or beats.n_peaks < 2:
            return cls(scr_onsets_s=onsets)
        return cls(
            scr_onsets_s=onsets,
            hr_times_s=beats.peak_times_s[1:][beats.valid],
            hr_bpm=beats.instantaneous_hr_bpm[beats.valid],
        )


def segment_cost(y: np.ndarray) -> float:
    """Sum over samples of the L1 distance to the per-column mean."""
    y = np.asarray(y, dtype=float)
    if y.shape[0] == 0:
        raise WindowError("Cost of an empty slice")
    if y.ndim == 1:
        y = y[:, None]
    return float(np.abs(y - y.mean(axis=0)).sum())


def discrepancy(y: np.ndarray, u: int, v: int, r: int) -> float:
    """Cost gain of splitting y[u:r] at v."""
    n = np.asarray(y).shape[0]
    if not 0 <= u < v < r <= n:
        raise WindowError(f"Split indices must satisfy 0 <= u < v < r <= {n}, got ({u}, {v}, {r})")
    return segment_cost(y[u:r]) - segment_cost(y[u:v]) - segment_cost(y[v:r])


def _window_samples(seconds: float, fs: float) -> int:
    return max(int(round(seconds * fs)), 1)


def _eeg_columns(F: FusedMatrix) -> List[int]:
    return F.columns_of(Modality.EEG) or list(range(F.n_columns))


def score_trace(
    F: FusedMatrix, cfg: CpdConfig, columns: Optional[Sequence[int]] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Discrepancy of adjacent windows at every grid index, over the EEG columns
    unless columns are given. Returns (indices, scores).
    """
    w = _window_samples(cfg.window_s, F.fs)
    step = _window_samples(cfg.step_s, F.fs)
    if F.n_rows < 2 * w:
        raise WindowError(
            f"Fused matrix of {F.n_rows} rows is shorter than two windows of {w} samples"
        )
    y = F.data[:, _eeg_columns(F) if columns is None else list(columns)]
    grid = np.arange(w, F.n_rows - w + 1, step)
    scores = np.array([discrepancy(y, v - w, v, v + w) for v in grid])
    return grid, scores


def sliding_window_cpd(
    F: FusedMatrix, cfg: CpdConfig = CpdConfig(), columns: Optional[Sequence[int]] = None
) -> List[ChangePoint]:
    """
    Candidate change points: local maxima of the score trace above
    mean + k * std, keeping only the strongest within one window. Earlier
    candidates win ties. Peripheral columns never propose candidates unless
    passed in columns.
    """
    grid, scores = score_trace(F, cfg, columns)
    if scores.size == 0 or np.ptp(scores) <= 1e-12:
        return []
    threshold = scores.mean() + cfg.k * scores.std()

    padded = np.r_[-np.inf, scores, -np.inf]
    is_peak = (padded[1:-1] > padded[:-2]) & (padded[1:-1] >= padded[2:])
    peaks = [i for i in np.flatnonzero(is_peak) if scores[i] > threshold]

    w = _window_samples(cfg.window_s, F.fs)
    kept: List[int] = []
    for i in sorted(peaks, key=lambda i: (-scores[i], grid[i])):
        if all(abs(grid[i] - grid[j]) > w for j in kept):
            kept.append(i)

    points = [
        ChangePoint(time_s=grid[i] / F.fs, score=float(scores[i]), index=int(grid[i]))
        for i in sorted(kept)
    ]
    error_handler.debug(f"CPD: {len(points)} candidates above {threshold:.4f}")
    return points


def default_scales(
    fs: float = 32.0,
    n_scales: int = 24,
    f_min_hz: float = 1.0,
    f_max_hz: float = 16.0,
    omega0: float = 6.0,
) -> np.ndarray:
    """Logarithmic scale grid (in samples), smallest scale first."""
    freqs = np.geomspace(f_max_hz, f_min_hz, n_scales)
    if freqs[0] > fs / 2.0 + 1e-9:
        error_handler.warning(
            f"CWT scales reach {freqs[0]} Hz, above the Nyquist frequency {fs / 2.0} Hz"
        )
    return scale_for_frequency(freqs, fs, omega0)


def scale_for_frequency(freqs_hz, fs: float, omega0: float = 6.0):
    return fs * omega0 / (2.0 * np.pi * np.asarray(freqs_hz, dtype=float))


def frequency_for_scale(scales, fs: float, omega0: float = 6.0):
    return fs * omega0 / (2.0 * np.pi * np.asarray(scales, dtype=float))


def morlet_kernel(scale: float, omega0: float = 6.0) -> np.ndarray:
    """(1/sqrt(a)) psi(n/a) sampled over +-5 scales, psi the complex Morlet."""
    half = max(int(math.ceil(5.0 * scale)), 1)
    t = np.arange(-half, half + 1) / scale
    psi = np.pi**-0.25 * np.exp(1j * omega0 * t) * np.exp(-0.5 * t**2)
    return psi / np.sqrt(scale)


def morlet_cwt(x: np.ndarray, scales: np.ndarray, omega0: float = 6.0) -> np.ndarray:
    """Complex CWT of a 1-D signal, (scales, samples); zero outside the signal."""
    x = np.asarray(x, dtype=float)
    out = np.empty((len(scales), x.size), dtype=complex)
    for k, a in enumerate(scales):
        kernel = np.conj(morlet_kernel(a, omega0))[::-1]
        full = signal.fftconvolve(x, kernel, mode="full")
        start = (kernel.size - 1) // 2
        out[k] = full[start : start + x.size]
    return out


def windowed_cwt(
    F: FusedMatrix,
    t_i: float,
    w: float,
    scales: Optional[np.ndarray] = None,
    columns: Optional[Sequence[int]] = None,
    omega0: float = 6.0,
) -> Scalogram:
    """
    Per-column Morlet CWT of F restricted to [t_i, t_i + w].

    Raises:
        WindowError: If the window leaves the matrix.
    """
    start = int(round(t_i * F.fs))
    stop = start + _window_samples(w, F.fs)
    if t_i < 0 or w <= 0 or stop > F.n_rows:
        raise WindowError(
            f"Window [{t_i}, {t_i + w}] s outside the fused matrix of {F.n_rows / F.fs:.3f} s"
        )
    if scales is None:
        scales = default_scales(F.fs, omega0=omega0)
    cols = list(range(F.n_columns)) if columns is None else list(columns)
    block = F.data[start:stop, cols]
    return _scalogram(block, scales, F.fs, start / F.fs, omega0)


def _scalogram(block: np.ndarray, scales: np.ndarray, fs: float, t_start: float, omega0: float) -> Scalogram:
    coefficients = np.stack([morlet_cwt(block[:, j], scales, omega0) for j in range(block.shape[1])])
    return Scalogram(
        coefficients=coefficients,
        scales=np.asarray(scales, dtype=float),
        frequencies_hz=frequency_for_scale(scales, fs, omega0),
        t_start=t_start,
        fs=fs,
    )


def band_energy_ratio(
    F: FusedMatrix, onset_s: float, offset_s: float, cfg: ClassifierConfig = ClassifierConfig()
) -> float:
    """Share of scalogram energy in the ERP band over the demeaned EEG columns."""
    columns = _eeg_columns(F)
    start = max(int(math.floor(onset_s * F.fs)), 0)
    stop = min(int(math.ceil(offset_s * F.fs)), F.n_rows)
    block = F.data[start:stop, columns]
    if block.shape[0] < 2:
        return 0.0
    block = block - block.mean(axis=0)

    scales = default_scales(F.fs, cfg.n_scales, cfg.f_min_hz, cfg.f_max_hz, cfg.omega0)
    energy = _scalogram(block, scales, F.fs, start / F.fs, cfg.omega0).energy_per_scale()
    total = energy.sum()
    if total <= 0:
        return 0.0
    freqs = frequency_for_scale(scales, F.fs, cfg.omega0)
    in_band = (freqs >= cfg.band_low_hz) & (freqs <= cfg.band_high_hz)
    return float(energy[in_band].sum() / total)


def peripheral_from_fused(F: FusedMatrix, cfg: ClassifierConfig = ClassifierConfig()) -> PeripheralEvents:
    """Recover SCR onsets and the HR trace from the unscaled peripheral columns."""
    times = np.arange(F.n_rows) / F.fs
    onsets = np.zeros(0)
    for j in F.columns_of(Modality.GSR):
        phasic = F.inverse(j)
        _, props = signal.find_peaks(phasic, prominence=cfg.scr_amp_threshold_us)
        onsets = np.r_[onsets, times[props["left_bases"]]]

    hr_times, hr = np.zeros(0), np.zeros(0)
    for j in F.columns_of(Modality.PPG):
        if F.channel_tags[j].name == HR_COLUMN_NAME:
            hr_times, hr = times, F.inverse(j)
    return PeripheralEvents(scr_onsets_s=np.sort(onsets), hr_times_s=hr_times, hr_bpm=hr)


def _corroboration(
    onset_s: float,
    offset_s: float,
    included: Sequence[Modality],
    events: PeripheralEvents,
    cfg: ClassifierConfig,
) -> Tuple[Modality, ...]:
    """
    Peripheral modalities responding to an episode: an SCR onset, or a heart
    rate rising by hr_delta_bpm over its last value before the onset. Both
    must fall between the onset and corroboration_s after the offset.
    """
    hi = offset_s + cfg.corroboration_s
    found = []
    if Modality.GSR in included:
        if np.any((events.scr_onsets_s >= onset_s) & (events.scr_onsets_s <= hi)):
            found.append(Modality.GSR)
    if Modality.PPG in included and events.hr_times_s.size:
        after = (events.hr_times_s >= onset_s) & (events.hr_times_s <= hi)
        before = np.flatnonzero(events.hr_times_s < onset_s)
        if after.any():
            baseline = events.hr_bpm[before[-1]] if before.size else events.hr_bpm[after][0]
            if events.hr_bpm[after].max() - baseline >= cfg.hr_delta_bpm:
                found.append(Modality.PPG)
    return tuple(found)


def _merge_spans(points: List[ChangePoint], half_w: float, gap_s: float, duration: float):
    spans: List[Tuple[float, float, List[float]]] = []
    for p in points:
        lo, hi = max(p.time_s - half_w, 0.0), min(p.time_s + half_w, duration)
        if spans and lo - spans[-1][1] < gap_s:
            prev_lo, _, scores = spans[-1]
            spans[-1] = (prev_lo, max(hi, spans[-1][1]), scores + [p.score])
        else:
            spans.append((lo, hi, [p.score]))
    return spans


def extract_episodes(
    F: FusedMatrix,
    cpd: CpdConfig = CpdConfig(),
    classifier: ClassifierConfig = ClassifierConfig(),
    peripheral: Optional[PeripheralEvents] = None,
) -> EpisodeSet:
    """
    Detect and label episodes in a fused matrix.

    Peripheral events default to those recovered from the fused GSR and HR
    columns when those modalities are present.
    """
    config = {"cpd": asdict(cpd), "classifier": asdict(classifier)}
    points = sliding_window_cpd(F, cpd)
    if not points:
        return EpisodeSet(episodes=[], config=config)

    peripheral_included = [m for m in F.included_modalities if m != Modality.EEG]
    if peripheral_included and peripheral is None:
        peripheral = peripheral_from_fused(F, classifier)

    episodes = []
    duration = F.n_rows / F.fs
    for lo, hi, scores in _merge_spans(points, cpd.window_s / 2.0, cpd.gap_s, duration):
        ratio = band_energy_ratio(F, lo, hi, classifier)
        corroborated: Tuple[Modality, ...] = ()
        if peripheral_included and peripheral is not None:
            corroborated = _corroboration(lo, hi, peripheral_included, peripheral, classifier)
        is_erp = ratio >= classifier.ratio_threshold and (
            not peripheral_included or bool(corroborated)
        )
        episodes.append(
            Episode(
                onset_s=lo,
                offset_s=hi,
                score=max(scores),
                label=EpisodeLabel.ERP if is_erp else EpisodeLabel.ARTIFACT,
                band_energy_ratio=ratio,
                corroborating_modalities=corroborated,
                cpd_scores=tuple(scores),
            )
        )

    result = EpisodeSet(episodes=episodes, config=config)
    error_handler.info(
        f"Extracted {result.n_total} episodes ({result.n_erp} ERP, {result.n_artifact} artifact)"
    )
    return result


def episodes_to_frames(
    E: EpisodeSet, fps: float, frame_count: int, labels: Optional[Sequence[EpisodeLabel]] = None
) -> List[int]:
    """Sorted frames covered by [floor(onset * fps), ceil(offset * fps)) of each episode."""
    if fps <= 0:
        raise WindowError(f"fps must be positive, got {fps}")
    frames = set()
    for episode in E.episodes:
        if labels is not None and episode.label not in labels:
            continue
        first = max(int(math.floor(episode.onset_s * fps)), 0)
        last = min(int(math.ceil(episode.offset_s * fps)), frame_count)
        frames.update(range(first, last))
    return sorted(frames)


def grid_search_window(
    F: FusedMatrix,
    annotations: List[Annotation],
    windows: Optional[Sequence[float]] = None,
    cpd: CpdConfig = CpdConfig(),
    classifier: ClassifierConfig = ClassifierConfig(),
    tol_s: float = 2.0,
    peripheral: Optional[PeripheralEvents] = None,
) -> Tuple[float, Dict[float, float]]:
    """
    F1 of the extracted episodes against the annotations for each window
    length. Returns the best window and every score. Among windows with the
    best F1 the one closest to the median attention interval length wins,
    then the shorter one.
    """
    if windows is None:
        windows = np.round(np.arange(0.1, 1.0 + 1e-9, 0.05), 2)
    scores: Dict[float, float] = {}
    for window in windows:
        step = min(cpd.step_s, float(window))
        cfg = CpdConfig(window_s=float(window), step_s=step, k=cpd.k, gap_s=cpd.gap_s)
        try:
            episodes = extract_episodes(F, cfg, classifier, peripheral)
        except WindowError:
            continue
        scores[float(window)] = detection_f1(episodes, annotations, tol_s).f1
    if not scores:
        raise WindowError("No window length fits the fused matrix")

    target = float(np.median([a.end_s - a.start_s for a in annotations if a.label == "attention"]))
    top = max(scores.values())
    tied = [w for w in scores if math.isclose(scores[w], top, abs_tol=1e-9)]
    best = min(tied, key=lambda w: (abs(w - target), w))
    error_handler.info(f"Window grid search: best {best} s (F1 {scores[best]:.3f})")
    return best, scores


def write_episodes_csv(E: EpisodeSet, path: str) -> None:
    rows = [
        [
            e.onset_s,
            e.offset_s,
            e.score,
            e.label.value,
            e.band_energy_ratio,
            ";".join(m.value for m in e.corroborating_modalities),
        ]
        for e in E.episodes
    ]
    try:
        pd.DataFrame(rows, columns=EPISODE_COLUMNS).to_csv(path, index=False)
    except OSError as e:
        raise FileWriteError(f"Cannot write episodes to '{path}': {e}")


def read_episodes_csv(path: str) -> EpisodeSet:
    if not Path(path).exists():
        raise MissingFileError(f"Episode file not found: {path}")
    frame = pd.read_csv(path, float_precision="round_trip", keep_default_na=False)
    episodes = [
        Episode(
            onset_s=float(row.onset_s),
            offset_s=float(row.offset_s),
            score=float(row.score),
            label=EpisodeLabel(row.label),
            band_energy_ratio=float(row.band_ratio),
            corroborating_modalities=tuple(
                Modality(m) for m in str(row.corroboration).split(";") if m
            ),
        )
        for row in frame.itertuples(index=False)
    ]
    return EpisodeSet(episodes=episodes)


def episodes_to_dict(E: EpisodeSet) -> dict:
    return {
        "totals": E.totals(),
        "config": E.config,
        "episodes": [
            {
                "onset_s": e.onset_s,
                "offset_s": e.offset_s,
                "score": e.score,
                "label": e.label.value,
                "band_ratio": e.band_energy_ratio,
                "corroboration": [m.value for m in e.corroborating_modalities],
                "cpd_scores": list(e.cpd_scores),
            }
            for e in E.episodes
        ],
    }


def write_episodes_json(E: EpisodeSet, path: str) -> None:
    try:
        Path(path).write_text(json.dumps(episodes_to_dict(E), indent=2), encoding="utf-8")
    except OSError as e:
        raise FileWriteError(f"Cannot write episodes to '{path}': {e}")


def write_frames(frames: Sequence[int], path: str) -> None:
    try:
        Path(path).write_text("".join(f"{i}\n" for i in frames), encoding="utf-8")
    except OSError as e:
        raise FileWriteError(f"Cannot write frame list to '{path}': {e}")


def read_frames(path: str) -> List[int]:
    if not Path(path).exists():
        raise MissingFileError(f"Frame list not found: {path}")
    return [int(line) for line in Path(path).read_text(encoding="utf-8").split()]

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np


class Modality(str, Enum):
    EEG = "EEG"
    GSR = "GSR"
    PPG = "PPG"


# Block order of the fused matrix
MODALITY_ORDER: Tuple[Modality, ...] = (Modality.EEG, Modality.GSR, Modality.PPG)

ANNOTATION_LABELS = ("attention", "artifact")


@dataclass(frozen=True)
class ChannelStream:
    """
    A uniformly sampled channel. Sample i is taken at t0 + i / fs on the
    session clock.
    """

    modality: Modality
    name: str
    fs: float
    units: str
    samples: np.ndarray
    t0: float = 0.0
    device: str = ""

    def __post_init__(self) -> None:
        data = np.asarray(self.samples, dtype=float)
        data.setflags(write=False)
        object.__setattr__(self, "samples", data)

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration_s(self) -> float:
        return len(self) / self.fs

    @property
    def t_end(self) -> float:
        return self.t0 + self.duration_s

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self)) / self.fs

    def with_samples(self, samples: np.ndarray, fs: Optional[float] = None) -> "ChannelStream":
        """Copy of this stream carrying new samples (and optionally a new rate)."""
        return replace(self, samples=samples, fs=self.fs if fs is None else fs)


@dataclass(frozen=True)
class SyncMarker:
    label: str
    time_s: float
    stream: str
    role: Optional[str] = None  # "start", "end" or inferred from order


@dataclass(frozen=True)
class Annotation:
    start_s: float
    end_s: float
    label: str


@dataclass(frozen=True)
class VideoMeta:
    fps: float
    frame_count: int


@dataclass(frozen=True)
class SessionRecording:
    channels: List[ChannelStream]
    markers: List[SyncMarker] = field(default_factory=list)
    video: Optional[VideoMeta] = None
    annotations: Optional[List[Annotation]] = None
    meta: Dict[str, Any] = field(default_factory=dict)
    memorability: Optional[np.ndarray] = None

    def by_modality(self, modality: Modality) -> List[ChannelStream]:
        return [c for c in self.channels if c.modality == modality]

    def devices(self) -> List[str]:
        seen: List[str] = []
        for channel in self.channels:
            if channel.device not in seen:
                seen.append(channel.device)
        return seen

    def interval(self) -> Tuple[float, float]:
        """Span covered by at least one channel."""
        starts = [c.t0 for c in self.channels]
        ends = [c.t_end for c in self.channels]
        return min(starts), max(ends)

    def common_interval(self) -> Tuple[float, float]:
        """Span covered by every channel."""
        starts = [c.t0 for c in self.channels]
        ends = [c.t_end for c in self.channels]
        return max(starts), min(ends)

    def attention_intervals(self) -> List[Annotation]:
        return [a for a in (self.annotations or []) if a.label == "attention"]

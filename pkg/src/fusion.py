"""
Min-max normalization and incremental feature-level fusion.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .data import ChannelStream, Modality, MODALITY_ORDER
from .error_handler import ErrorHandler, FusionError, FileWriteError, MissingFileError

# Initialize Error Handling
error_handler = ErrorHandler()

COMMON_FS = 32.0
TAG_SEPARATOR = ":"


@dataclass(frozen=True)
class ChannelTag:
    modality: Modality
    name: str

    def __str__(self) -> str:
        return f"{self.modality.value}{TAG_SEPARATOR}{self.name}"

    @classmethod
    def parse(cls, text: str) -> "ChannelTag":
        modality, _, name = text.partition(TAG_SEPARATOR)
        try:
            return cls(Modality(modality), name)
        except ValueError:
            raise FusionError(f"Invalid fused column tag '{text}'")


@dataclass(frozen=True)
class FusedMatrix:
    data: np.ndarray  # (R, C), entries in [0, 1]
    channel_tags: List[ChannelTag]
    fs: float
    included_modalities: Tuple[Modality, ...]
    scaling_ranges: List[Tuple[float, float]]
    meta: Dict[str, str] = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return int(self.data.shape[0])

    @property
    def n_columns(self) -> int:
        return int(self.data.shape[1])

    def columns_of(self, modality: Modality) -> List[int]:
        return [i for i, tag in enumerate(self.channel_tags) if tag.modality == modality]

    def inverse(self, column: int) -> np.ndarray:
        """Undo the scaling of one column (constant columns come back as their value)."""
        lo, hi = self.scaling_ranges[column]
        return self.data[:, column] * (hi - lo) + lo


def minmax_array(x: np.ndarray) -> Tuple[np.ndarray, Tuple[float, float]]:
    x = np.asarray(x, dtype=float)
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi == lo:
        return np.zeros_like(x), (lo, hi)
    return (x - lo) / (hi - lo), (lo, hi)


def minmax_scale(x: ChannelStream) -> ChannelStream:
    """Scale to [0, 1]; a constant stream maps to zeros."""
    scaled, _ = minmax_array(x.samples)
    return x.with_samples(scaled)


def fuse(
    streams: Dict[Modality, List[ChannelStream]],
    modality_set: Sequence[Modality],
    fs: float = COMMON_FS,
    meta: Optional[Dict[str, str]] = None,
) -> FusedMatrix:
    """
    Concatenate the requested modality blocks in EEG, GSR, PPG order and
    scale each column on its own.

    Raises:
        FusionError: If a requested modality has no stream, a stream is not
            at the common rate or the lengths differ by more than one sample.
    """
    wanted = set(Modality(m) for m in modality_set)
    if not wanted:
        raise FusionError("No modality requested")
    included = tuple(m for m in MODALITY_ORDER if m in wanted)

    columns: List[ChannelStream] = []
    for modality in included:
        block = streams.get(modality) or []
        if not block:
            raise FusionError(f"Modality {modality.value} requested but not provided")
        for stream in block:
            if not math.isclose(stream.fs, fs):
                raise FusionError(
                    f"'{stream.name}' is at {stream.fs} Hz, fusion requires {fs} Hz"
                )
            columns.append(stream)

    lengths = [len(c) for c in columns]
    if max(lengths) - min(lengths) > 1:
        raise FusionError(
            f"Stream lengths differ by more than one sample: {min(lengths)}..{max(lengths)}"
        )
    n_rows = min(lengths)

    data = np.empty((n_rows, len(columns)))
    ranges: List[Tuple[float, float]] = []
    for j, stream in enumerate(columns):
        data[:, j], bounds = minmax_array(stream.samples[:n_rows])
        ranges.append(bounds)

    tags = [ChannelTag(c.modality, c.name) for c in columns]
    error_handler.info(
        f"Fused {len(columns)} columns ({'+'.join(m.value for m in included)}) x {n_rows} rows"
    )
    return FusedMatrix(
        data=data,
        channel_tags=tags,
        fs=float(fs),
        included_modalities=included,
        scaling_ranges=ranges,
        meta=dict(meta or {}),
    )


def write_fused(fused: FusedMatrix, path: str) -> None:
    """CSV with a time_s column and one MODALITY:name column per feature."""
    frame = pd.DataFrame(fused.data, columns=[str(t) for t in fused.channel_tags])
    frame.insert(0, "time_s", np.arange(fused.n_rows) / fused.fs)
    try:
        frame.to_csv(path, index=False)
    except OSError as e:
        raise FileWriteError(f"Cannot write fused matrix to '{path}': {e}")


def read_fused(
    path: str, scaling_ranges: Optional[List[Tuple[float, float]]] = None
) -> FusedMatrix:
    if not Path(path).exists():
        raise MissingFileError(f"Fused matrix not found: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    if frame.columns[0] != "time_s" or len(frame) < 2:
        raise FusionError(f"'{path}' is not a fused matrix export")
    times = frame["time_s"].to_numpy(dtype=float)
    tags = [ChannelTag.parse(c) for c in frame.columns[1:]]
    included = tuple(m for m in MODALITY_ORDER if any(t.modality == m for t in tags))
    ranges = list(scaling_ranges) if scaling_ranges else [(0.0, 1.0)] * len(tags)
    return FusedMatrix(
        data=frame.iloc[:, 1:].to_numpy(dtype=float),
        channel_tags=tags,
        fs=float(round(1.0 / (times[1] - times[0]), 6)),
        included_modalities=included,
        scaling_ranges=[(float(lo), float(hi)) for lo, hi in ranges],
    )

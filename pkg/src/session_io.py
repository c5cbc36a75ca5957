"""
Session manifests: loading, validation, marker alignment and persistence.

A manifest (``session.json``) lists channels, sync markers, optional video
metadata, an optional annotation CSV and an optional memorability CSV. All
paths are relative to the manifest directory. Each channel CSV starts with a
``time_s`` column followed by one column per channel.
"""

# Third-Party Library Imports
import json
import math
import os
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

# Local Imports
from .cueing import load_memorability, write_memorability
from .data import (
    ANNOTATION_LABELS,
    Annotation,
    ChannelStream,
    Modality,
    SessionRecording,
    SyncMarker,
    VideoMeta,
)
from .error_handler import (
    ErrorHandler,
    SessionLoadError,
    MissingFileError,
    AlignmentError,
    FileWriteError,
)

# Initialize Error Handling
error_handler = ErrorHandler()

MANIFEST_NAME = "session.json"
ANNOTATION_COLUMNS = ["start_s", "end_s", "label"]
MAX_JITTER_FRACTION = 0.1
MAX_LOADERS = 8
MARKER_KEYS = ("label", "time_s", "stream")


def _read_manifest(manifest_path: Path) -> Dict[str, Any]:
    if not manifest_path.exists():
        raise MissingFileError(f"Manifest not found: {manifest_path}")
    if not os.access(manifest_path, os.R_OK):
        raise SessionLoadError(f"Manifest exists but is not readable: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SessionLoadError(f"{manifest_path} line {e.lineno}: {e.msg}")
    if not isinstance(manifest, dict):
        raise SessionLoadError(f"{manifest_path}: top level must be an object")
    return manifest


def _channel_entries(manifest: Dict[str, Any], where: str) -> List[Dict[str, Any]]:
    entries = manifest.get("channels") or []
    if not entries:
        raise SessionLoadError(f"{where}: empty session")

    seen = set()
    for idx, entry in enumerate(entries):
        ctx = f"{where} channels[{idx}]"
        for key in ("path", "name", "modality", "fs"):
            if key not in entry:
                raise SessionLoadError(f"{ctx}: missing '{key}'")
        if entry["name"] in seen:
            raise SessionLoadError(f"{ctx}: duplicate channel name '{entry['name']}'")
        seen.add(entry["name"])
        try:
            Modality(entry["modality"])
        except ValueError:
            raise SessionLoadError(f"{ctx}: unknown modality '{entry['modality']}'")
        fs = float(entry["fs"])
        if not math.isfinite(fs) or fs <= 0:
            raise SessionLoadError(f"{ctx}: fs must be positive, got {entry['fs']}")
    return entries


def _read_channel_csv(path: Path, columns: List[str], fs: float) -> Dict[str, np.ndarray]:
    """
    Read the requested columns of one device CSV.

    The time column is only checked against fs (jitter at most 10% of one
    sample period); the returned samples are implicitly uniform.
    """
    if not path.exists():
        raise MissingFileError(f"Channel file not found: {path}")
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.ParserError as e:
        raise SessionLoadError(f"{path}: malformed CSV ({e})")
    except pd.errors.EmptyDataError:
        raise SessionLoadError(f"{path}: file is empty")

    if list(frame.columns[:1]) != ["time_s"]:
        raise SessionLoadError(f"{path} line 1: first column must be 'time_s'")
    if frame.shape[0] == 0:
        raise SessionLoadError(f"{path}: no samples")

    loaded: Dict[str, np.ndarray] = {}
    for column in ["time_s"] + columns:
        if column not in frame.columns:
            raise SessionLoadError(f"{path} line 1: missing column '{column}'")
        values = pd.to_numeric(frame[column], errors="coerce").to_numpy(dtype=float)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            row = int(bad[0])
            raise SessionLoadError(
                f"{path} line {row + 2}: non-finite sample in column '{column}' (row {row})"
            )
        loaded[column] = values

    times = loaded.pop("time_s")
    expected = times[0] + np.arange(times.size) / fs
    jitter = np.abs(times - expected)
    worst = int(np.argmax(jitter))
    if jitter[worst] > MAX_JITTER_FRACTION / fs:
        raise SessionLoadError(
            f"{path} line {worst + 2}: time stamp {times[worst]} deviates from uniform "
            f"sampling at {fs} Hz"
        )
    return loaded


def read_annotations(path: Union[str, Path]) -> List[Annotation]:
    """Annotations from a CSV with start_s,end_s,label columns."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"Annotation file not found: {path}")
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        return []
    except pd.errors.ParserError as e:
        raise SessionLoadError(f"{path}: malformed CSV ({e})")

    if list(frame.columns) != ANNOTATION_COLUMNS:
        raise SessionLoadError(f"{path} line 1: header must be {','.join(ANNOTATION_COLUMNS)}")

    annotations = []
    for row, record in enumerate(frame.itertuples(index=False)):
        start, end, label = float(record.start_s), float(record.end_s), str(record.label)
        if not (math.isfinite(start) and math.isfinite(end)) or end <= start:
            raise SessionLoadError(f"{path} line {row + 2}: degenerate interval [{start}, {end}]")
        if label not in ANNOTATION_LABELS:
            raise SessionLoadError(f"{path} line {row + 2}: unknown label '{label}'")
        annotations.append(Annotation(start, end, label))
    return annotations


def clip_annotations(
    annotations: List[Annotation], start: float, end: float, shift: float = 0.0
) -> List[Annotation]:
    """Shift by -shift, clip to [start, end] and drop intervals that collapse."""
    clipped = []
    for a in annotations:
        lo = max(a.start_s - shift, start)
        hi = min(a.end_s - shift, end)
        if hi > lo:
            clipped.append(Annotation(lo, hi, a.label))
        else:
            error_handler.warning(
                f"Dropping annotation [{a.start_s}, {a.end_s}] outside the session interval"
            )
    return clipped


def load_session(manifest_path: str) -> SessionRecording:
    """
    Load and validate a session described by a manifest.

    Args:
        manifest_path (str): Path to session.json.

    Returns:
        SessionRecording: Channels in manifest order, markers, video
            metadata, annotations and memorability scores when present.

    Raises:
        MissingFileError: If the manifest or a referenced file is missing.
        SessionLoadError: On malformed content, each message naming the file
            and line.
    """
    path = Path(manifest_path)
    manifest = _read_manifest(path)
    base = path.parent
    entries = _channel_entries(manifest, str(path))

    # One read per device file, all requested columns at once
    files: "OrderedDict[str, Tuple[float, List[str]]]" = OrderedDict()
    for idx, entry in enumerate(entries):
        fs = float(entry["fs"])
        fs_known, columns = files.setdefault(entry["path"], (fs, []))
        if fs_known != fs:
            raise SessionLoadError(
                f"{path} channels[{idx}]: '{entry['path']}' already declared at {fs_known} Hz"
            )
        columns.append(entry["name"])

    with ThreadPoolExecutor(max_workers=min(MAX_LOADERS, len(files))) as pool:
        results = list(
            pool.map(
                lambda item: _read_channel_csv(base / item[0], item[1][1], item[1][0]),
                files.items(),
            )
        )
    payloads = dict(zip(files.keys(), results))

    channels = [
        ChannelStream(
            modality=Modality(entry["modality"]),
            name=entry["name"],
            fs=float(entry["fs"]),
            units=str(entry.get("units", "a.u.")),
            samples=payloads[entry["path"]][entry["name"]],
            t0=float(entry.get("t0", 0.0)),
            device=str(entry["device"]) if "device" in entry else Path(entry["path"]).stem,
        )
        for entry in entries
    ]

    markers = []
    for idx, m in enumerate(manifest.get("markers") or []):
        for key in MARKER_KEYS:
            if key not in m:
                raise SessionLoadError(f"{path} markers[{idx}]: missing key '{key}'")
        time_s = float(m["time_s"])
        if time_s < 0:
            raise SessionLoadError(f"{path} markers[{idx}]: time_s must be >= 0")
        role = m.get("role")
        if role not in (None, "start", "end"):
            raise SessionLoadError(f"{path} markers[{idx}]: unknown role '{role}'")
        markers.append(SyncMarker(str(m["label"]), time_s, str(m["stream"]), role))

    video = None
    if manifest.get("video"):
        fps = float(manifest["video"]["fps"])
        frame_count = int(manifest["video"]["frame_count"])
        if fps <= 0 or frame_count < 0:
            raise SessionLoadError(f"{path} video: fps must be positive")
        video = VideoMeta(fps, frame_count)

    recording = SessionRecording(channels=channels, markers=markers, video=video)

    annotations = None
    if manifest.get("annotations"):
        lo, hi = recording.interval()
        annotations = clip_annotations(read_annotations(base / manifest["annotations"]), lo, hi)

    memorability = None
    if manifest.get("memorability"):
        if video is None:
            raise SessionLoadError(f"{path}: memorability scores need video metadata")
        memorability = load_memorability(str(base / manifest["memorability"]), video.frame_count)

    recording = replace(
        recording,
        annotations=annotations,
        meta=dict(manifest.get("meta") or {}),
        memorability=memorability,
    )
    error_handler.info(
        f"Loaded session '{path}' with {len(channels)} channels from {len(files)} file(s)"
    )
    return recording


def _device_bounds(rec: SessionRecording, device: str) -> Tuple[float, float]:
    markers = [m for m in rec.markers if m.stream == device]
    starts = [m.time_s for m in markers if m.role == "start"]
    ends = [m.time_s for m in markers if m.role == "end"]
    unroled = sorted(m.time_s for m in markers if m.role is None)

    if not starts and unroled:
        starts = [unroled.pop(0)]
    if not ends and unroled:
        ends = [unroled[-1]]
    if not starts:
        raise AlignmentError(f"Device '{device}' has no start marker")
    if not ends:
        raise AlignmentError(f"Device '{device}' has no end marker")
    return min(starts), max(ends)


def align_streams(rec: SessionRecording) -> SessionRecording:
    """
    Trim every channel to [latest start marker, earliest end marker] and
    rebase the session clock to the start of that interval.

    Raises:
        AlignmentError: If a device lacks a start or end marker, the common
            interval is empty, or a channel does not cover it.
    """
    bounds = [_device_bounds(rec, device) for device in rec.devices()]
    t_start = max(b[0] for b in bounds)
    t_end = min(b[1] for b in bounds)
    if not t_end - t_start > 0:
        raise AlignmentError(f"empty common interval [{t_start}, {t_end}]")

    span = t_end - t_start
    channels = []
    for channel in rec.channels:
        first = max(0, math.ceil((t_start - channel.t0) * channel.fs - 1e-9))
        count = math.floor(span * channel.fs + 1e-9)
        if channel.t0 > t_start + 1e-9:
            raise AlignmentError(
                f"Channel '{channel.name}' starts at {channel.t0} s, after the common "
                f"interval start {t_start} s"
            )
        if first + count > len(channel):
            raise AlignmentError(
                f"Channel '{channel.name}' ends at {channel.t_end} s, before the common "
                f"interval end {t_end} s"
            )
        # first sample lies within one period of t_start
        channels.append(replace(channel, samples=channel.samples[first : first + count], t0=0.0))

    markers = [replace(m, time_s=max(0.0, m.time_s - t_start)) for m in rec.markers]
    annotations = None
    if rec.annotations is not None:
        annotations = clip_annotations(rec.annotations, 0.0, span, shift=t_start)

    error_handler.info(f"Aligned {len(channels)} channels to [{t_start}, {t_end}] ({span:.3f} s)")
    return replace(rec, channels=channels, markers=markers, annotations=annotations)


def write_annotations(annotations: List[Annotation], path: Path) -> None:
    frame = pd.DataFrame(
        [(a.start_s, a.end_s, a.label) for a in annotations], columns=ANNOTATION_COLUMNS
    )
    frame.to_csv(path, index=False)


def _group_for_files(rec: SessionRecording) -> "OrderedDict[str, List[ChannelStream]]":
    """One CSV per device when the device channels share rate, start and length."""
    groups: "OrderedDict[str, List[ChannelStream]]" = OrderedDict()
    for channel in rec.channels:
        groups.setdefault(channel.device or channel.modality.value.lower(), []).append(channel)

    files: "OrderedDict[str, List[ChannelStream]]" = OrderedDict()
    for device, members in groups.items():
        shape = {(c.fs, c.t0, len(c)) for c in members}
        if len(shape) == 1:
            files[f"{device}.csv"] = members
        else:
            for c in members:
                files[f"{device}_{c.name}.csv"] = [c]
    return files


def write_session(rec: SessionRecording, directory: str) -> str:
    """
    Persist a session so that load_session reproduces it exactly.

    Returns:
        str: Path of the written manifest.

    Raises:
        FileWriteError: If the directory cannot be created or written.
    """
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
        entries = []
        for filename, members in _group_for_files(rec).items():
            first = members[0]
            frame = pd.DataFrame({"time_s": first.times()})
            for c in members:
                frame[c.name] = c.samples
                entries.append(
                    {
                        "path": filename,
                        "name": c.name,
                        "modality": c.modality.value,
                        "fs": c.fs,
                        "units": c.units,
                        "t0": c.t0,
                        "device": c.device,
                    }
                )
            frame.to_csv(out / filename, index=False)

        manifest: Dict[str, Any] = {
            "meta": rec.meta,
            "channels": entries,
            "markers": [
                {"label": m.label, "time_s": m.time_s, "stream": m.stream, "role": m.role}
                for m in rec.markers
            ],
            "video": None,
            "annotations": None,
            "memorability": None,
        }
        if rec.video is not None:
            manifest["video"] = {"fps": rec.video.fps, "frame_count": rec.video.frame_count}
        if rec.annotations is not None:
            write_annotations(rec.annotations, out / "annotations.csv")
            manifest["annotations"] = "annotations.csv"
        if rec.memorability is not None:
            write_memorability(rec.memorability, out / "memorability.csv")
            manifest["memorability"] = "memorability.csv"

        manifest_path = out / MANIFEST_NAME
        manifest_path.write_text(
            json.dumps(manifest, indent=2, ensure_ascii=False), encoding="utf-8"
        )
    except OSError as e:
        raise FileWriteError(f"Cannot write session to '{directory}': {e}")

    error_handler.info(f"Session written to '{manifest_path}'")
    return str(manifest_path)

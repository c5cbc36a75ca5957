import json
import logging
from dataclasses import replace

import numpy as np
import pytest

from src.data import Annotation, ChannelStream, Modality, SessionRecording, SyncMarker
from src.error_handler import AlignmentError, MissingFileError, SessionLoadError
from src.session_io import (
    align_streams,
    clip_annotations,
    load_session,
    read_annotations,
    write_session,
)
from src.synth import SynthEvent, SynthSpec, generate

logger = logging.getLogger(__name__)


def write_manifest(directory, manifest):
    path = directory / "session.json"
    path.write_text(json.dumps(manifest), encoding="utf-8")
    return str(path)


@pytest.fixture
def session_dir(tmp_path):
    fs = 4.0
    times = np.arange(12) / fs
    lines = ["time_s,AF3,T7"] + [f"{t},{i},{-i}" for i, t in enumerate(times)]
    (tmp_path / "emotiv.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    lines = ["time_s,GSR"] + [f"{t},{2.0 + 0.1 * i}" for i, t in enumerate(times)]
    (tmp_path / "shimmer.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (tmp_path / "annotations.csv").write_text(
        "start_s,end_s,label\n0.5,1.0,attention\n2.5,9.0,artifact\n", encoding="utf-8"
    )
    manifest = {
        "channels": [
            {"path": "emotiv.csv", "name": "AF3", "modality": "EEG", "fs": fs, "units": "µV"},
            {"path": "emotiv.csv", "name": "T7", "modality": "EEG", "fs": fs, "units": "µV"},
            {"path": "shimmer.csv", "name": "GSR", "modality": "GSR", "fs": fs, "t0": 0.5},
        ],
        "markers": [
            {"label": "NOD", "time_s": 0.5, "stream": "emotiv"},
            {"label": "WAVE", "time_s": 2.5, "stream": "emotiv"},
            {"label": "NOD", "time_s": 0.25, "stream": "shimmer", "role": "start"},
            {"label": "WAVE", "time_s": 3.0, "stream": "shimmer", "role": "end"},
        ],
        "video": {"fps": 30, "frame_count": 60},
        "annotations": "annotations.csv",
    }
    return tmp_path, manifest


def test_load_session(session_dir):
    directory, manifest = session_dir
    session = load_session(write_manifest(directory, manifest))
    assert [c.name for c in session.channels] == ["AF3", "T7", "GSR"]
    af3 = session.channels[0]
    assert af3.fs == 4.0 and af3.units == "µV" and af3.device == "emotiv"
    np.testing.assert_array_equal(af3.samples, np.arange(12))
    assert session.channels[2].t0 == 0.5
    assert session.channels[2].units == "a.u."
    assert session.video.frame_count == 60
    # annotations are clipped to the span covered by any channel
    assert session.annotations == [
        Annotation(0.5, 1.0, "attention"),
        Annotation(2.5, 3.5, "artifact"),
    ]
    assert session.memorability is None


def test_missing_manifest(tmp_path):
    with pytest.raises(MissingFileError):
        load_session(str(tmp_path / "session.json"))


def test_malformed_manifest_names_line(tmp_path):
    path = tmp_path / "session.json"
    path.write_text('{\n  "channels": [\n    {"path": "a.csv",}\n  ]\n}', encoding="utf-8")
    with pytest.raises(SessionLoadError, match="line 3"):
        load_session(str(path))


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda m: m.update(channels=[]), "empty session"),
        (lambda m: m["channels"][0].update(modality="ECG"), "unknown modality"),
        (lambda m: m["channels"][0].pop("fs"), "missing 'fs'"),
        (lambda m: m["channels"][1].update(name="AF3"), "duplicate channel"),
        (lambda m: m["channels"][0].update(fs=-1), "fs must be positive"),
        (lambda m: m["markers"][0].update(role="middle"), "unknown role"),
        (lambda m: m["channels"][2].update(name="EDA"), "missing column 'EDA'"),
    ],
)
def test_invalid_manifests(session_dir, mutate, message):
    directory, manifest = session_dir
    mutate(manifest)
    with pytest.raises(SessionLoadError, match=message):
        load_session(write_manifest(directory, manifest))


def test_non_finite_sample_names_line(session_dir):
    directory, manifest = session_dir
    lines = (directory / "shimmer.csv").read_text(encoding="utf-8").splitlines()
    lines[4] = "0.75,nan"
    (directory / "shimmer.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(SessionLoadError, match="line 5"):
        load_session(write_manifest(directory, manifest))


def test_irregular_time_column(session_dir):
    directory, manifest = session_dir
    lines = (directory / "shimmer.csv").read_text(encoding="utf-8").splitlines()
    lines[6] = "1.5,2.5"
    (directory / "shimmer.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(SessionLoadError, match="uniform"):
        load_session(write_manifest(directory, manifest))


def test_missing_channel_file(session_dir):
    directory, manifest = session_dir
    (directory / "shimmer.csv").unlink()
    with pytest.raises(MissingFileError):
        load_session(write_manifest(directory, manifest))


def test_read_annotations_errors(tmp_path):
    path = tmp_path / "annotations.csv"
    path.write_text("start_s,end_s,label\n1.0,0.5,attention\n", encoding="utf-8")
    with pytest.raises(SessionLoadError, match="line 2"):
        read_annotations(path)
    path.write_text("start_s,end_s,label\n1.0,2.0,boredom\n", encoding="utf-8")
    with pytest.raises(SessionLoadError, match="unknown label"):
        read_annotations(path)
    path.write_text("start,end\n1,2\n", encoding="utf-8")
    with pytest.raises(SessionLoadError):
        read_annotations(str(path))


def test_clip_annotations(caplog):
    caplog.set_level(logging.WARNING)
    clipped = clip_annotations(
        [Annotation(1.0, 3.0, "attention"), Annotation(12.0, 13.0, "artifact")], 0.0, 10.0, shift=2.0
    )
    assert clipped == [Annotation(0.0, 1.0, "attention")]
    assert "Dropping annotation" in caplog.text


def test_align_streams(session_dir):
    directory, manifest = session_dir
    aligned = align_streams(load_session(write_manifest(directory, manifest)))
    # emotiv [0.5, 2.5] (inferred roles), shimmer [0.25, 3.0] -> [0.5, 2.5]
    for channel in aligned.channels:
        assert len(channel) == 8
        assert channel.t0 == 0.0
    np.testing.assert_array_equal(aligned.channels[0].samples, np.arange(2, 10))
    np.testing.assert_allclose(aligned.channels[2].samples, 2.0 + 0.1 * np.arange(0, 8))
    assert min(m.time_s for m in aligned.markers) == 0.0
    # the artifact interval starts at the new end and is dropped
    assert aligned.annotations == [Annotation(0.0, 0.5, "attention")]


def eeg(t0, n, device):
    return ChannelStream(Modality.EEG, device, 10.0, "µV", np.zeros(n), t0, device)


def test_align_empty_interval():
    rec = SessionRecording(
        channels=[eeg(0.0, 100, "a"), eeg(0.0, 100, "b")],
        markers=[
            SyncMarker("NOD", 1.0, "a", "start"),
            SyncMarker("WAVE", 3.0, "a", "end"),
            SyncMarker("NOD", 4.0, "b", "start"),
            SyncMarker("WAVE", 8.0, "b", "end"),
        ],
    )
    with pytest.raises(AlignmentError, match="empty common interval"):
        align_streams(rec)


def test_align_missing_end_marker():
    rec = SessionRecording(
        channels=[eeg(0.0, 100, "a")], markers=[SyncMarker("NOD", 1.0, "a", "start")]
    )
    with pytest.raises(AlignmentError, match="no end marker"):
        align_streams(rec)


def test_align_channel_not_covering_interval():
    rec = SessionRecording(
        channels=[eeg(0.0, 20, "a")],
        markers=[SyncMarker("NOD", 1.0, "a"), SyncMarker("WAVE", 5.0, "a")],
    )
    with pytest.raises(AlignmentError):
        align_streams(rec)


def test_write_session_roundtrip(tmp_path):
    spec = SynthSpec(duration_s=12.0, seed=2, events=(SynthEvent(3.0, "erp"),))
    session = generate(spec)
    manifest = write_session(session, str(tmp_path / "out"))
    loaded = load_session(manifest)
    assert [(c.name, c.device, c.fs, c.t0) for c in loaded.channels] == [
        (c.name, c.device, c.fs, c.t0) for c in session.channels
    ]
    for a, b in zip(loaded.channels, session.channels):
        np.testing.assert_array_equal(a.samples, b.samples)
    assert loaded.markers == session.markers
    assert loaded.annotations == session.annotations
    assert loaded.video == session.video
    np.testing.assert_allclose(loaded.memorability, session.memorability)
    assert loaded.meta["seed"] == 2


@pytest.mark.parametrize("key", ["label", "time_s", "stream"])
def test_marker_missing_key(session_dir, key):
    directory, manifest = session_dir
    manifest["markers"][1].pop(key)
    with pytest.raises(SessionLoadError, match=rf"markers\[1\]: missing key '{key}'"):
        load_session(write_manifest(directory, manifest))


def test_align_channel_one_sample_short():
    # [1, 5] s at 10 Hz needs samples 10..49, 49 samples stop at index 48
    rec = SessionRecording(
        channels=[eeg(0.0, 49, "a")],
        markers=[SyncMarker("NOD", 1.0, "a"), SyncMarker("WAVE", 5.0, "a")],
    )
    with pytest.raises(AlignmentError, match="ends at"):
        align_streams(rec)

    exact = replace(rec, channels=[eeg(0.0, 50, "a")])
    assert len(align_streams(exact).channels[0]) == 40


def test_align_channel_starting_late():
    rec = SessionRecording(
        channels=[eeg(0.0, 100, "a"), eeg(1.5, 100, "b")],
        markers=[
            SyncMarker("NOD", 1.0, "a", "start"),
            SyncMarker("WAVE", 6.0, "a", "end"),
            SyncMarker("NOD", 0.5, "b", "start"),
            SyncMarker("WAVE", 6.0, "b", "end"),
        ],
    )
    with pytest.raises(AlignmentError, match="starts at 1.5"):
        align_streams(rec)


def test_align_streams_idempotent(session_dir):
    directory, manifest = session_dir
    once = align_streams(load_session(write_manifest(directory, manifest)))
    twice = align_streams(once)
    for a, b in zip(once.channels, twice.channels):
        assert a.t0 == b.t0 == 0.0
        np.testing.assert_array_equal(a.samples, b.samples)
    assert twice.markers == once.markers
    assert twice.annotations == once.annotations


def test_write_session_keeps_empty_device(tmp_path):
    channel = ChannelStream(Modality.EEG, "Pz", 10.0, "µV", np.arange(20.0), 0.0, "")
    manifest = write_session(SessionRecording(channels=[channel], markers=[]), str(tmp_path / "out"))
    entry = json.loads((tmp_path / "out" / "session.json").read_text(encoding="utf-8"))["channels"][0]
    assert entry["device"] == ""
    assert load_session(manifest).channels[0].device == ""

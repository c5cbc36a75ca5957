import json
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from src.data import Modality
from src.error_handler import MissingFileError, SynthSpecError
from src.synth import (
    EEG_CHANNELS,
    LEAD_S,
    SynthEvent,
    SynthSpec,
    bateman,
    canonical_spec,
    generate,
    load_synth_spec,
    pink_noise,
    ppg_waveform,
    spec_from_dict,
    write_synth_spec,
)

logger = logging.getLogger(__name__)

SCENARIOS = Path(__file__).resolve().parents[2] / "scenarios"


@pytest.fixture
def short_spec():
    return SynthSpec(
        duration_s=30.0,
        seed=4,
        events=(SynthEvent(8.0, "erp"), SynthEvent(16.0, "artifact"), SynthEvent(22.0, "erp")),
    )


def test_canonical_schedule():
    spec = canonical_spec(0)
    assert len(spec.erp_times()) == 8
    assert len(spec.artifact_times()) == 14
    times = sorted(e.time_s for e in spec.events)
    assert min(b - a for a, b in zip(times, times[1:])) >= spec.min_spacing_s
    spec.validate()


def test_one_minute_canonical_session():
    spec = canonical_spec(1, duration_s=60.0)
    spec.validate()
    session = generate(spec)
    assert len(session.annotations) == 22
    assert sum(a.label == "attention" for a in session.annotations) == 8


def test_canonical_scenario_file_matches_generator():
    assert load_synth_spec(str(SCENARIOS / "canonical.json")) == canonical_spec(0)
    assert load_synth_spec(str(SCENARIOS / "empty.json")).events == ()


@pytest.mark.parametrize(
    "events",
    [
        (SynthEvent(5.0, "erp"), SynthEvent(6.0, "artifact")),
        (SynthEvent(5.0, "blink"),),
        (SynthEvent(29.9, "erp"),),
        (SynthEvent(-1.0, "artifact"),),
    ],
)
def test_infeasible_schedules(events):
    with pytest.raises(SynthSpecError):
        SynthSpec(duration_s=30.0, events=events).validate()


def test_bateman_unit_peak():
    t = np.arange(0, 20, 1 / 32.0)
    b = bateman(t - 2.0, 2.0, 0.7)
    assert b.max() == pytest.approx(1.0)
    assert np.all(b[t < 2.0] == 0.0)
    assert t[int(np.argmax(b))] > 2.0


def test_pink_noise_is_standardized():
    x = pink_noise(np.random.default_rng(0), 4096)
    assert x.mean() == pytest.approx(0.0, abs=1e-12)
    assert x.std() == pytest.approx(1.0)
    spectrum = np.abs(np.fft.rfft(x)) ** 2
    assert spectrum[1:50].mean() > spectrum[-500:].mean()


def test_ppg_waveform_beat_rate():
    wave, beats = ppg_waveform(np.full(64 * 60, 75.0), 64.0)
    assert wave.size == 64 * 60
    assert len(beats) in (74, 75)
    assert np.diff(beats).mean() == pytest.approx(0.8, abs=0.02)


def test_generate_structure(short_spec):
    session = generate(short_spec)
    eeg = session.by_modality(Modality.EEG)
    assert [c.name for c in eeg] == list(EEG_CHANNELS)
    assert [c.name for c in session.by_modality(Modality.GSR)] == ["GSR"]
    assert [c.name for c in session.by_modality(Modality.PPG)] == ["PPG"]
    assert session.devices() == ["emotiv", "shimmer"]
    assert len(session.markers) == 4
    assert {m.role for m in session.markers} == {"start", "end"}
    assert session.video.frame_count == 900
    assert session.memorability.shape == (900,)

    labels = [(a.start_s, a.label) for a in session.annotations]
    assert labels == [
        (LEAD_S + 8.0, "attention"),
        (LEAD_S + 16.0, "artifact"),
        (LEAD_S + 22.0, "attention"),
    ]
    start, end = session.common_interval()
    assert start <= LEAD_S and end >= LEAD_S + short_spec.duration_s


def test_generate_is_deterministic(short_spec):
    a, b = generate(short_spec), generate(short_spec)
    for x, y in zip(a.channels, b.channels):
        assert np.array_equal(x.samples, y.samples)
    c = generate(replace(short_spec, seed=5))
    assert not np.array_equal(a.channels[0].samples, c.channels[0].samples)


def test_generated_scr_follows_erp(short_spec):
    session = generate(short_spec)
    gsr = session.by_modality(Modality.GSR)[0]
    t = gsr.times()
    onset = LEAD_S + 8.0 + short_spec.scr_delay_s
    before = gsr.samples[(t > onset - 1.0) & (t < onset)].mean()
    after = gsr.samples[(t > onset + 1.0) & (t < onset + 3.0)].max()
    assert after - before > 0.5 * short_spec.scr_amplitude_us


def test_slow_wave_follows_erp_burst(short_spec):
    session = generate(short_spec)
    pz = session.by_modality(Modality.EEG)[EEG_CHANNELS.index("Pz")]
    t = pz.times()
    start = LEAD_S + 8.0 + short_spec.erp_duration_s
    # both spans hold whole alpha and theta cycles
    during = pz.samples[(t >= start + 0.25) & (t < start + 0.75)].mean()
    baseline = pz.samples[(t >= LEAD_S + 6.5) & (t < LEAD_S + 7.5)].mean()
    assert during - baseline == pytest.approx(short_spec.erp_deflection_uv, abs=2.0)


def test_negative_slow_wave_rejected():
    with pytest.raises(SynthSpecError):
        SynthSpec(erp_slow_s=-1.0).validate()


def test_spec_from_dict_errors():
    with pytest.raises(SynthSpecError):
        spec_from_dict({"duration": 10})
    with pytest.raises(SynthSpecError):
        spec_from_dict({"events": [{"time_s": 1.0}]})


def test_spec_file_roundtrip(tmp_path, short_spec):
    path = tmp_path / "spec.json"
    write_synth_spec(short_spec, str(path))
    assert json.loads(path.read_text(encoding="utf-8"))["events"][0] == {"time_s": 8.0, "kind": "erp"}
    assert load_synth_spec(str(path)) == short_spec


def test_spec_file_errors(tmp_path):
    with pytest.raises(MissingFileError):
        load_synth_spec(str(tmp_path / "nope.json"))
    broken = tmp_path / "broken.json"
    broken.write_text("{\n  \"seed\": 1,,\n}", encoding="utf-8")
    with pytest.raises(SynthSpecError, match="line 2"):
        load_synth_spec(str(broken))

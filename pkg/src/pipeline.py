"""
Preprocessing orchestration for the four modality configurations, the
on-disk layout of a preprocessed session, runtime profiling and the
configuration ablation.
"""

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from .config import CONFIGURATIONS, CONFIGURATION_LABELS, PipelineConfig, write_effective
from .cueing import load_memorability, write_memorability
from .data import Annotation, ChannelStream, Modality, SessionRecording, VideoMeta
from .dsp import butterworth_bandpass, decimate, design_filter, filtfilt
from .eda import (
    EdaDecomposition,
    ScrEvent,
    SolverReport,
    decompose_eda,
    detect_scr_events,
    read_scr_events,
    write_scr_events,
)
from .eeg_recon import (
    IcaModel,
    ReconReport,
    RejectionCriterion,
    fit_ica,
    load_model,
    reconstruct,
    save_model,
)
from .episodes import HR_COLUMN_NAME, EpisodeSet, PeripheralEvents, extract_episodes
from .error_handler import (
    ErrorHandler,
    ConfigError,
    FileWriteError,
    FusionError,
    MissingFileError,
    SignalTooShortError,
)
from .fusion import FusedMatrix, fuse, read_fused, write_fused
from .metrics import DetectionScore, detection_accuracy
from .ppg import PpgBeats, clean_ppg, detect_systolic_peaks, hr_step_series, read_beats, write_beats
from .session_io import align_streams, write_annotations, read_annotations

# Initialize Error Handling
error_handler = ErrorHandler()

EEG_FILE = "eeg.csv"
EDA_FILE = "eda.csv"
SCR_FILE = "scr_events.csv"
BEATS_FILE = "ppg_beats.csv"
FUSED_FILE = "fused.csv"
RECON_FILE = "recon_report.json"
MODEL_FILE = "ica_model.json"
ANNOTATIONS_FILE = "annotations.csv"
META_FILE = "session_meta.json"
MEMORABILITY_FILE = "memorability.csv"


@dataclass
class Preprocessed:
    configuration: str
    fused: FusedMatrix
    eeg: List[ChannelStream] = field(default_factory=list)
    recon_report: Optional[ReconReport] = None
    ica_model: Optional[IcaModel] = None
    eda: Optional[EdaDecomposition] = None
    scr_events: List[ScrEvent] = field(default_factory=list)
    beats: Optional[PpgBeats] = None
    annotations: Optional[List[Annotation]] = None
    video: Optional[VideoMeta] = None
    memorability: Optional[np.ndarray] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def peripheral(self) -> PeripheralEvents:
        return PeripheralEvents.from_detections(self.scr_events, self.beats)


@dataclass(frozen=True)
class RuntimeStat:
    mean_s: float
    std_s: float
    repetitions: int


@dataclass(frozen=True)
class AblationRow:
    configuration: str
    label: str
    runtime: Optional[RuntimeStat]
    n_erp: int
    n_artifact: int
    score: DetectionScore


def _modalities(configuration: str):
    if configuration not in CONFIGURATIONS:
        raise ConfigError(
            f"Unknown configuration '{configuration}', expected one of {list(CONFIGURATIONS)}"
        )
    return CONFIGURATIONS[configuration]


def _check_session(session: SessionRecording) -> None:
    if not session.channels or any(len(c) == 0 for c in session.channels):
        raise SignalTooShortError("The session has no samples")


def _preprocess_eeg(rec: SessionRecording, cfg: PipelineConfig, recon: bool):
    channels = rec.by_modality(Modality.EEG)
    if not channels:
        raise FusionError("The session has no EEG channels")
    decimated = [
        decimate(c, cfg.dsp.target_fs, cfg.dsp.anti_alias_cutoff_hz, cfg.dsp.anti_alias_order)
        for c in channels
    ]
    if not recon:
        return decimated, None, None

    n = min(len(c) for c in decimated)
    X = np.column_stack([c.samples[:n] for c in decimated])
    if cfg.eeg.model_path:
        model = load_model(cfg.eeg.model_path)
    else:
        model = fit_ica(X, cfg.eeg.n_components, cfg.seed, cfg.eeg.max_iter, cfg.eeg.tol)
    rejection = RejectionCriterion(
        kurtosis_threshold=cfg.eeg.kurtosis_threshold,
        variance_share_threshold=cfg.eeg.variance_share_threshold,
        similarity_floor=cfg.eeg.similarity_floor,
        exclude=cfg.eeg.exclude,
    )
    X_recon, report = reconstruct(X, model, rejection)
    streams = [c.with_samples(X_recon[:, i]) for i, c in enumerate(decimated)]
    return streams, model, report


def _preprocess_gsr(rec: SessionRecording, cfg: PipelineConfig):
    channels = rec.by_modality(Modality.GSR)
    if not channels:
        raise FusionError("GSR requested but the session has no GSR channel")
    raw = channels[0]
    band = design_filter(
        butterworth_bandpass(cfg.dsp.gsr_low_hz, cfg.dsp.gsr_high_hz, raw.fs, cfg.dsp.gsr_order)
    )
    sc = decimate(
        filtfilt(band, raw), cfg.dsp.target_fs, cfg.dsp.anti_alias_cutoff_hz, cfg.dsp.anti_alias_order
    )
    decomposition = decompose_eda(sc, cfg.eda)
    events = detect_scr_events(decomposition, cfg.eda.amp_threshold_us, cfg.eda.onset_fraction)
    return decomposition, events


def _preprocess_ppg(rec: SessionRecording, cfg: PipelineConfig):
    channels = rec.by_modality(Modality.PPG)
    if not channels:
        raise FusionError("PPG requested but the session has no PPG channel")
    cleaned = clean_ppg(channels[0], cfg.ppg)
    beats = detect_systolic_peaks(cleaned, cfg.ppg)
    waveform = decimate(
        cleaned, cfg.dsp.target_fs, cfg.dsp.anti_alias_cutoff_hz, cfg.dsp.anti_alias_order
    )
    hr = hr_step_series(beats, len(waveform), waveform.fs, waveform.t0)
    hr_stream = replace(waveform, name=HR_COLUMN_NAME, units="bpm").with_samples(hr)
    return beats, [waveform, hr_stream]


def preprocess(
    session: SessionRecording, cfg: PipelineConfig, configuration: Optional[str] = None
) -> Preprocessed:
    """
    Align the session and run the chains its configuration needs, then fuse.

    EEG is decimated to the common rate and, unless raw, reconstructed by
    ICA. GSR is band-passed, decimated and decomposed; its phasic part is
    fused. PPG is cleaned at its native rate for beat detection; the cleaned
    waveform and the held heart rate are fused.
    """
    configuration = configuration or cfg.fusion.configuration
    modalities, recon = _modalities(configuration)
    _check_session(session)
    rec = align_streams(session) if session.markers else session

    eeg, model, report = _preprocess_eeg(rec, cfg, recon)
    streams: Dict[Modality, List[ChannelStream]] = {Modality.EEG: eeg}

    decomposition, events, beats = None, [], None
    if Modality.GSR in modalities:
        decomposition, events = _preprocess_gsr(rec, cfg)
        streams[Modality.GSR] = [replace(decomposition.phasic, name="GSR_phasic")]
    if Modality.PPG in modalities:
        beats, streams[Modality.PPG] = _preprocess_ppg(rec, cfg)

    meta = {str(k): str(v) for k, v in rec.meta.items()}
    fused = fuse(streams, modalities, cfg.dsp.target_fs, meta)
    return Preprocessed(
        configuration=configuration,
        fused=fused,
        eeg=eeg,
        recon_report=report,
        ica_model=model,
        eda=decomposition,
        scr_events=events,
        beats=beats,
        annotations=rec.annotations,
        video=rec.video,
        memorability=rec.memorability,
        meta=dict(rec.meta),
    )


def extract(pre: Preprocessed, cfg: PipelineConfig) -> EpisodeSet:
    return extract_episodes(pre.fused, cfg.cpd, cfg.classifier, pre.peripheral())


def _streams_frame(streams: List[ChannelStream], names: Optional[List[str]] = None) -> pd.DataFrame:
    n = min(len(s) for s in streams)
    frame = pd.DataFrame({"time_s": streams[0].times()[:n]})
    for i, s in enumerate(streams):
        frame[names[i] if names else s.name] = s.samples[:n]
    return frame


def write_preprocessed(pre: Preprocessed, cfg: PipelineConfig, directory: str) -> str:
    """
    Write every product of preprocess to directory and return it. EEG-only
    configurations write no EDA or PPG files.
    """
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _streams_frame(pre.eeg).to_csv(out / EEG_FILE, index=False)
        if pre.eda is not None:
            _streams_frame(
                [pre.eda.phasic, pre.eda.tonic, pre.eda.residual], ["phasic", "tonic", "residual"]
            ).to_csv(out / EDA_FILE, index=False)
            write_scr_events(pre.scr_events, str(out / SCR_FILE))
        if pre.beats is not None:
            write_beats(pre.beats, str(out / BEATS_FILE))
        write_fused(pre.fused, str(out / FUSED_FILE))
        if pre.recon_report is not None:
            (out / RECON_FILE).write_text(json.dumps(pre.recon_report.to_dict(), indent=2), encoding="utf-8")
        if pre.ica_model is not None:
            save_model(pre.ica_model, str(out / MODEL_FILE))
        if pre.annotations is not None:
            write_annotations(pre.annotations, out / ANNOTATIONS_FILE)
        if pre.memorability is not None:
            write_memorability(pre.memorability, out / MEMORABILITY_FILE)

        meta = {
            "configuration": pre.configuration,
            "modalities": [m.value for m in pre.fused.included_modalities],
            "fs": pre.fused.fs,
            "n_rows": pre.fused.n_rows,
            "scaling_ranges": [list(r) for r in pre.fused.scaling_ranges],
            "video": None
            if pre.video is None
            else {"fps": pre.video.fps, "frame_count": pre.video.frame_count},
            "eda_solver": None if pre.eda is None else vars(pre.eda.report),
            "meta": pre.meta,
        }
        (out / META_FILE).write_text(
            json.dumps(meta, indent=2, ensure_ascii=False, default=str), encoding="utf-8"
        )
    except OSError as e:
        raise FileWriteError(f"Cannot write preprocessed session to '{directory}': {e}")
    write_effective(cfg, directory)
    error_handler.info(f"Preprocessed session ({pre.configuration}) written to '{directory}'")
    return str(out)


def load_preprocessed(directory: str) -> Preprocessed:
    """Read back what write_preprocessed stored; enough to extract and evaluate."""
    src = Path(directory)
    meta_path = src / META_FILE
    if not meta_path.exists():
        raise MissingFileError(f"Not a preprocessed session directory: {directory}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))

    fused = read_fused(str(src / FUSED_FILE), [tuple(r) for r in meta["scaling_ranges"]])
    fused = replace(fused, fs=float(meta["fs"]))

    eeg_frame = pd.read_csv(src / EEG_FILE, float_precision="round_trip")
    eeg = [
        ChannelStream(Modality.EEG, name, fused.fs, "µV", eeg_frame[name].to_numpy())
        for name in eeg_frame.columns[1:]
    ]

    eda = None
    if (src / EDA_FILE).exists():
        frame = pd.read_csv(src / EDA_FILE, float_precision="round_trip")
        parts = {
            col: ChannelStream(Modality.GSR, col, fused.fs, "µS", frame[col].to_numpy())
            for col in ("phasic", "tonic", "residual")
        }
        solver = meta.get("eda_solver") or {}
        eda = EdaDecomposition(
            phasic=parts["phasic"],
            tonic=parts["tonic"],
            residual=parts["residual"],
            report=SolverReport(
                iterations=int(solver.get("iterations", 0)),
                objective=float(solver.get("objective", 0.0)),
                converged=bool(solver.get("converged", True)),
                status=str(solver.get("status", "optimal")),
            ),
        )
    scr_events = read_scr_events(str(src / SCR_FILE)) if (src / SCR_FILE).exists() else []
    beats = read_beats(str(src / BEATS_FILE)) if (src / BEATS_FILE).exists() else None
    annotations = (
        read_annotations(src / ANNOTATIONS_FILE) if (src / ANNOTATIONS_FILE).exists() else None
    )
    video = VideoMeta(**meta["video"]) if meta.get("video") else None
    memorability = None
    if video is not None and (src / MEMORABILITY_FILE).exists():
        memorability = load_memorability(str(src / MEMORABILITY_FILE), video.frame_count)
    model = load_model(str(src / MODEL_FILE)) if (src / MODEL_FILE).exists() else None
    recon_report = None
    if (src / RECON_FILE).exists():
        recon_report = ReconReport.from_dict(
            json.loads((src / RECON_FILE).read_text(encoding="utf-8"))
        )

    return Preprocessed(
        configuration=meta["configuration"],
        fused=fused,
        eeg=eeg,
        recon_report=recon_report,
        ica_model=model,
        eda=eda,
        scr_events=scr_events,
        beats=beats,
        annotations=annotations,
        video=video,
        memorability=memorability,
        meta=meta.get("meta", {}),
    )


def profile_runtime(
    session: SessionRecording, cfg: PipelineConfig, repetitions: Optional[int] = None
) -> Dict[str, RuntimeStat]:
    """
    Wall-clock mean and standard deviation of preprocessing plus extraction
    for every configuration, on the same in-memory session.
    """
    _check_session(session)
    reps = repetitions if repetitions is not None else cfg.metrics.profile_repetitions
    if reps < 5:
        raise ConfigError(f"Profiling needs at least 5 repetitions, got {reps}")

    stats: Dict[str, RuntimeStat] = {}
    for configuration in CONFIGURATIONS:
        samples = []
        for _ in range(reps):
            start = time.perf_counter()
            extract(preprocess(session, cfg, configuration), cfg)
            samples.append(time.perf_counter() - start)
        stats[configuration] = RuntimeStat(float(np.mean(samples)), float(np.std(samples)), reps)
        error_handler.info(
            f"{CONFIGURATION_LABELS[configuration]}: {stats[configuration].mean_s:.3f} "
            f"± {stats[configuration].std_s:.3f} s"
        )
    return stats


def run_ablation(
    session: SessionRecording, cfg: PipelineConfig, repetitions: int = 0
) -> List[AblationRow]:
    """
    Detection accuracy of every configuration on one annotated session, with
    runtimes when repetitions is at least 5.
    """
    runtimes = profile_runtime(session, cfg, repetitions) if repetitions else {}
    rows = []
    for configuration in CONFIGURATIONS:
        pre = preprocess(session, cfg, configuration)
        episodes = extract(pre, cfg)
        score = detection_accuracy(episodes, pre.annotations or [], cfg.metrics.tol_s)
        rows.append(
            AblationRow(
                configuration=configuration,
                label=CONFIGURATION_LABELS[configuration],
                runtime=runtimes.get(configuration),
                n_erp=episodes.n_erp,
                n_artifact=episodes.n_artifact,
                score=score,
            )
        )
    return rows

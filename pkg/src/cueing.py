"""
Cue frame selection for the review treatments.

A treatment decides which video frames are replayed to a participant:
nothing, everything, a random sample, frames an external vision model scored
as memorable, frames covered by ERP episodes, or the intersection of the
last two.
"""

from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from .episodes import EpisodeLabel, EpisodeSet, episodes_to_frames
from .error_handler import (
    ErrorHandler,
    SessionLoadError,
    MissingFileError,
    FileWriteError,
    UsageError,
)

# Initialize Error Handling
error_handler = ErrorHandler()

MEMORABILITY_THRESHOLD = 0.677


class Treatment(str, Enum):
    NO_AID = "no_aid"
    ALL_FRAMES = "all_frames"
    RANDOM = "random"
    CV = "cv"
    CV_EEG = "cv_eeg"
    CV_ALL = "cv_all"
    PHYSIO_EEG = "physio_eeg"
    PHYSIO_ALL = "physio_all"


CV_TREATMENTS = (Treatment.CV, Treatment.CV_EEG, Treatment.CV_ALL)


def load_memorability(path: str, frame_count: int) -> np.ndarray:
    """
    Per-frame memorability scores from a CSV with `frame,score` columns.
    Frames without a score get 0.

    Raises:
        MissingFileError: If the file does not exist.
        SessionLoadError: If the header is wrong or a frame index falls
            outside [0, frame_count).
    """
    if not Path(path).exists():
        raise MissingFileError(f"Memorability file not found: {path}")
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise SessionLoadError(f"{path}: {e}")
    if list(frame.columns[:2]) != ["frame", "score"]:
        raise SessionLoadError(f"{path} line 1: expected header 'frame,score'")

    scores = np.zeros(frame_count)
    for row, (index, score) in enumerate(zip(frame["frame"], frame["score"])):
        if not 0 <= int(index) < frame_count:
            raise SessionLoadError(
                f"{path} line {row + 2}: frame {index} outside [0, {frame_count})"
            )
        scores[int(index)] = float(score)
    return scores


def write_memorability(scores: np.ndarray, path: Path) -> None:
    try:
        pd.DataFrame({"frame": np.arange(len(scores)), "score": scores}).to_csv(path, index=False)
    except OSError as e:
        raise FileWriteError(f"Cannot write memorability scores to '{path}': {e}")


def select_cue_frames(
    treatment: str,
    frame_count: int,
    episodes_eeg: Optional[EpisodeSet] = None,
    episodes_all: Optional[EpisodeSet] = None,
    scores: Optional[np.ndarray] = None,
    fps: float = 30.0,
    seed: int = 0,
    random_fraction: Optional[float] = None,
) -> List[int]:
    """
    Sorted frame indices replayed under a treatment.

    Only ERP-labeled episodes contribute frames. The random treatment samples
    random_fraction of the frames, by default as many as the full-fusion
    selection holds.

    Raises:
        UsageError: For an unknown treatment, a memorability treatment
            without scores or an episode treatment without episodes.
    """
    try:
        kind = Treatment(treatment)
    except ValueError:
        raise UsageError(
            f"Unknown treatment '{treatment}', expected one of {[t.value for t in Treatment]}"
        )

    def episode_frames(episodes: Optional[EpisodeSet], which: str) -> List[int]:
        if episodes is None:
            raise UsageError(f"Treatment '{kind.value}' needs {which} episodes")
        return episodes_to_frames(episodes, fps, frame_count, labels=[EpisodeLabel.ERP])

    if kind in CV_TREATMENTS:
        if scores is None:
            raise UsageError(f"Treatment '{kind.value}' needs memorability scores")
        memorable = set(np.flatnonzero(np.asarray(scores) >= MEMORABILITY_THRESHOLD).tolist())

    if kind == Treatment.NO_AID:
        return []
    if kind == Treatment.ALL_FRAMES:
        return list(range(frame_count))
    if kind == Treatment.RANDOM:
        if random_fraction is None:
            n = len(episode_frames(episodes_all, "full-fusion"))
        else:
            n = int(round(random_fraction * frame_count))
        rng = np.random.Generator(np.random.Philox(seed))
        return sorted(rng.choice(frame_count, size=min(n, frame_count), replace=False).tolist())
    if kind == Treatment.CV:
        return sorted(memorable)
    if kind == Treatment.CV_EEG:
        return sorted(memorable.intersection(episode_frames(episodes_eeg, "EEG-only")))
    if kind == Treatment.CV_ALL:
        return sorted(memorable.intersection(episode_frames(episodes_all, "full-fusion")))
    if kind == Treatment.PHYSIO_EEG:
        return episode_frames(episodes_eeg, "EEG-only")
    return episode_frames(episodes_all, "full-fusion")


def review_load(frames: List[int], frame_count: int) -> Dict[str, float]:
    fraction = len(frames) / frame_count if frame_count else 0.0
    return {"n_frames": len(frames), "fraction": fraction}


def load_reduction(selected: List[int], reference: List[int]) -> float:
    """Relative drop in frame count of selected against reference."""
    if not reference:
        return 0.0
    return 1.0 - len(selected) / len(reference)

"""
Evaluation metrics: detection accuracy against annotated attention, frame
similarity (SSIM, intensity-histogram EMD, FastDTW, Pearson correlation) and
one-way ANOVA over grouped questionnaire scores.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image, UnidentifiedImageError
from scipy import stats
from scipy.spatial.distance import cdist

from .data import Annotation
from .error_handler import (
    ErrorHandler,
    EvaluationError,
    DimensionMismatchError,
    MissingFileError,
)

if TYPE_CHECKING:
    from .episodes import EpisodeSet

# Initialize Error Handling
error_handler = ErrorHandler()

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff")
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = 8


@dataclass(frozen=True)
class DetectionScore:
    n_valid: int
    n_total: int
    d_acc: float
    n_p: float
    tolerance_s: float


@dataclass(frozen=True)
class DetectionF1:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class AnovaResult:
    f: float
    p: float
    df_between: int
    df_within: int


@dataclass
class SimilarityReport:
    ssim: float
    emd: float
    dtw_distance: float
    pcc: float
    pairs: List[Dict[str, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "ssim": self.ssim,
            "emd": self.emd,
            "dtw_distance": self.dtw_distance,
            "pcc": self.pcc,
            "pairs": self.pairs,
        }


def _onset_matches(onset_s: float, interval: Annotation, tol_s: float) -> bool:
    return interval.start_s - tol_s <= onset_s <= interval.end_s + tol_s


def _attention(annotations: Sequence[Annotation]) -> List[Annotation]:
    attention = [a for a in annotations if a.label == "attention"]
    if not attention:
        raise EvaluationError("No attention annotations to evaluate against")
    return attention


def detection_accuracy(
    episodes: "EpisodeSet", annotations: Sequence[Annotation], tol_s: float = 2.0
) -> DetectionScore:
    """
    Share of detected episodes whose onset falls inside an attention
    interval or within tol_s of its boundaries. Every episode counts,
    whatever its label. With no episodes d_acc is 0 and n_p is 1.
    """
    attention = _attention(annotations)
    n_total = len(episodes.episodes)
    n_valid = sum(
        1 for e in episodes.episodes if any(_onset_matches(e.onset_s, a, tol_s) for a in attention)
    )
    d_acc = n_valid / n_total if n_total else 0.0
    return DetectionScore(
        n_valid=n_valid, n_total=n_total, d_acc=d_acc, n_p=1.0 - d_acc, tolerance_s=tol_s
    )


def detection_f1(
    episodes: "EpisodeSet", annotations: Sequence[Annotation], tol_s: float = 2.0
) -> DetectionF1:
    attention = _attention(annotations)
    precision = detection_accuracy(episodes, attention, tol_s).d_acc
    hit = sum(
        1 for a in attention if any(_onset_matches(e.onset_s, a, tol_s) for e in episodes.episodes)
    )
    recall = hit / len(attention)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return DetectionF1(precision=precision, recall=recall, f1=f1)


def ssim(img_a: np.ndarray, img_b: np.ndarray, data_range: float = 255.0) -> float:
    """
    Mean SSIM over all 8x8 windows with uniform weights.

    Raises:
        DimensionMismatchError: If the images differ in shape.
    """
    a = np.asarray(img_a, dtype=float)
    b = np.asarray(img_b, dtype=float)
    if a.shape != b.shape or a.ndim != 2:
        raise DimensionMismatchError(f"SSIM needs equal 2-D images, got {a.shape} and {b.shape}")
    win = (min(SSIM_WINDOW, a.shape[0]), min(SSIM_WINDOW, a.shape[1]))
    wa = sliding_window_view(a, win)
    wb = sliding_window_view(b, win)

    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    var_a = wa.var(axis=(-2, -1))
    var_b = wb.var(axis=(-2, -1))
    cov = (wa * wb).mean(axis=(-2, -1)) - mu_a * mu_b

    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    ssim_map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )
    return float(ssim_map.mean())


def emd_1d(h_a: Sequence[float], h_b: Sequence[float]) -> float:
    """
    Earth mover's distance between two normalized histograms on the same
    unit-spaced bins.

    Raises:
        EvaluationError: If a histogram does not sum to 1.
        DimensionMismatchError: If the bin counts differ.
    """
    a = np.asarray(h_a, dtype=float)
    b = np.asarray(h_b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"Histograms have {a.size} and {b.size} bins")
    for name, h in (("first", a), ("second", b)):
        if abs(h.sum() - 1.0) > 1e-9 or np.any(h < 0):
            raise EvaluationError(f"The {name} histogram is not normalized (sum {h.sum()})")
    bins = np.arange(a.size, dtype=float)
    return float(stats.wasserstein_distance(bins, bins, u_weights=a, v_weights=b))


def intensity_histogram(img: np.ndarray, bins: int = 256) -> np.ndarray:
    counts, _ = np.histogram(np.asarray(img, dtype=float), bins=bins, range=(0, bins))
    return counts / counts.sum()


def _as_sequence(seq) -> np.ndarray:
    arr = np.asarray(seq, dtype=float)
    if arr.shape[0] == 0:
        raise EvaluationError("DTW of an empty sequence")
    return arr.reshape(arr.shape[0], -1)


def _dtw_window(
    a: np.ndarray, b: np.ndarray, window: Optional[Set[Tuple[int, int]]] = None
) -> Tuple[float, List[Tuple[int, int]]]:
    n, m = a.shape[0], b.shape[0]
    cost = cdist(a, b)
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    cells = sorted(window) if window is not None else [(i, j) for i in range(n) for j in range(m)]
    for i, j in cells:
        acc[i + 1, j + 1] = cost[i, j] + min(acc[i, j + 1], acc[i + 1, j], acc[i, j])

    path = [(n - 1, m - 1)]
    i, j = n, m
    while (i, j) != (1, 1):
        steps = {(i - 1, j - 1): acc[i - 1, j - 1], (i - 1, j): acc[i - 1, j], (i, j - 1): acc[i, j - 1]}
        i, j = min(steps, key=steps.get)
        path.append((i - 1, j - 1))
    return float(acc[n, m]), path[::-1]


def dtw(seq_a, seq_b) -> float:
    """Exact DTW with Euclidean ground cost (absolute difference for scalars)."""
    distance, _ = _dtw_window(_as_sequence(seq_a), _as_sequence(seq_b))
    return distance


def _coarsen(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    pairs = (x[: n - n % 2 : 2] + x[1 : n - n % 2 : 2]) / 2.0
    return np.vstack([pairs, x[-1:]]) if n % 2 else pairs


def _expand_window(path, n: int, m: int, radius: int) -> Set[Tuple[int, int]]:
    neighborhood = {
        (i + di, j + dj)
        for i, j in path
        for di in range(-radius, radius + 1)
        for dj in range(-radius, radius + 1)
    }
    return {
        (2 * i + di, 2 * j + dj)
        for i, j in neighborhood
        for di in (0, 1)
        for dj in (0, 1)
        if 0 <= 2 * i + di < n and 0 <= 2 * j + dj < m
    }


def _fast_dtw(a: np.ndarray, b: np.ndarray, radius: int):
    min_size = radius + 2
    if a.shape[0] <= min_size or b.shape[0] <= min_size:
        return _dtw_window(a, b)
    _, coarse_path = _fast_dtw(_coarsen(a), _coarsen(b), radius)
    window = _expand_window(coarse_path, a.shape[0], b.shape[0], radius)
    return _dtw_window(a, b, window)


def fast_dtw(seq_a, seq_b, radius: int = 1) -> float:
    """
    Multiresolution DTW: the path found on half-resolution copies, widened
    by radius cells, bounds the search at full resolution. Never below the
    exact distance; equal to it when the radius covers the sequences.
    """
    if radius < 0:
        raise EvaluationError(f"radius must be >= 0, got {radius}")
    distance, _ = _fast_dtw(_as_sequence(seq_a), _as_sequence(seq_b), int(radius))
    return distance


def pcc(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise DimensionMismatchError(f"PCC inputs differ in length: {x.size} vs {y.size}")
    if x.size < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        raise EvaluationError("PCC is undefined for constant input")
    r, _ = stats.pearsonr(x, y)
    return float(np.clip(r, -1.0, 1.0))


def one_way_anova(groups: Sequence[Sequence[float]]) -> AnovaResult:
    """
    Raises:
        EvaluationError: With fewer than two groups or a group of fewer
            than two observations.
    """
    if len(groups) < 2:
        raise EvaluationError(f"ANOVA needs at least two groups, got {len(groups)}")
    arrays = [np.asarray(g, dtype=float) for g in groups]
    if any(g.size < 2 for g in arrays):
        raise EvaluationError("Every ANOVA group needs at least two observations")
    f, p = stats.f_oneway(*arrays)
    n = sum(g.size for g in arrays)
    return AnovaResult(f=float(f), p=float(p), df_between=len(arrays) - 1, df_within=n - len(arrays))


def load_groups(path: str) -> Dict[str, List[float]]:
    """Questionnaire scores from a CSV with `group,value` columns."""
    if not Path(path).exists():
        raise MissingFileError(f"Score file not found: {path}")
    frame = pd.read_csv(path)
    if list(frame.columns[:2]) != ["group", "value"]:
        raise EvaluationError(f"{path}: expected header 'group,value'")
    return {str(k): g["value"].astype(float).tolist() for k, g in frame.groupby("group", sort=True)}


def load_frames(directory: str, size: int = 64) -> List[np.ndarray]:
    """Images of a directory in file-name order as size x size 8-bit grayscale."""
    folder = Path(directory)
    if not folder.is_dir():
        raise MissingFileError(f"Frame directory not found: {directory}")
    frames = []
    for path in sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES):
        try:
            with Image.open(path) as img:
                gray = img.convert("L").resize((size, size))
        except (UnidentifiedImageError, OSError) as e:
            raise EvaluationError(f"Cannot read frame '{path}': {e}")
        frames.append(np.asarray(gray, dtype=float))
    if not frames:
        raise EvaluationError(f"No image frames in '{directory}'")
    error_handler.debug(f"Loaded {len(frames)} frames from '{directory}'")
    return frames


def frame_features(frame: np.ndarray, grid: int = 8) -> np.ndarray:
    """Mean intensity of each cell of a grid x grid partition."""
    rows = np.array_split(np.asarray(frame, dtype=float), grid, axis=0)
    return np.array([[c.mean() for c in np.array_split(r, grid, axis=1)] for r in rows]).ravel()


def _paired(frames_a: Sequence[np.ndarray], frames_b: Sequence[np.ndarray]):
    n = min(len(frames_a), len(frames_b))
    if n == 0:
        raise EvaluationError("No frame pairs to compare")
    return list(zip(frames_a[:n], frames_b[:n]))


def retrace_accuracy_case1(
    frames_a: Sequence[np.ndarray], frames_b: Sequence[np.ndarray]
) -> Dict[str, float]:
    """Mean SSIM and histogram EMD of frames paired at the same timeline index."""
    pairs = _paired(frames_a, frames_b)
    ssims = [ssim(a, b) for a, b in pairs]
    emds = [emd_1d(intensity_histogram(a), intensity_histogram(b)) for a, b in pairs]
    return {"ssim": float(np.mean(ssims)), "emd": float(np.mean(emds))}


def retrace_accuracy_case2(
    frames_a: Sequence[np.ndarray], frames_b: Sequence[np.ndarray], radius: int = 1
) -> float:
    """FastDTW between the grid-feature sequences of two frame sequences."""
    if not frames_a or not frames_b:
        raise EvaluationError("No frames to align")
    return fast_dtw(
        np.stack([frame_features(f) for f in frames_a]),
        np.stack([frame_features(f) for f in frames_b]),
        radius,
    )


def cue_similarity(
    cue_frames: Sequence[np.ndarray], retrace_frames: Sequence[np.ndarray], radius: int = 1
) -> SimilarityReport:
    pairs = _paired(cue_frames, retrace_frames)
    breakdown = []
    for a, b in pairs:
        row = {
            "ssim": ssim(a, b),
            "emd": emd_1d(intensity_histogram(a), intensity_histogram(b)),
        }
        breakdown.append(row)
    flat_a = np.concatenate([a.ravel() for a, _ in pairs])
    flat_b = np.concatenate([b.ravel() for _, b in pairs])
    return SimilarityReport(
        ssim=float(np.mean([r["ssim"] for r in breakdown])),
        emd=float(np.mean([r["emd"] for r in breakdown])),
        dtw_distance=retrace_accuracy_case2(list(cue_frames), list(retrace_frames), radius),
        pcc=pcc(flat_a, flat_b),
        pairs=breakdown,
    )

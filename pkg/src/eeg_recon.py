"""
EEG reconstruction by independent component analysis.

Channels are whitened by an eigendecomposition of their covariance, rotated by
fixed-point ICA (tanh nonlinearity, symmetric decorrelation), and artifact
components are removed before remixing. Reconstruction quality is scored per
channel with the cosine similarity between reconstructed and original signals.
"""

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, stats
from sklearn.decomposition import fastica
from sklearn.exceptions import ConvergenceWarning

from .error_handler import (
    ErrorHandler,
    IcaConvergenceError,
    RankDeficientError,
    ReconstructionError,
    CosineSimilarityError,
    SignalTooShortError,
    FileWriteError,
    MissingFileError,
)

# Initialize Error Handling
error_handler = ErrorHandler()

RANK_TOLERANCE = 1e-10


@dataclass(frozen=True)
class IcaModel:
    n_channels: int
    n_components: int
    unmixing: np.ndarray  # (n_components, n_channels)
    mixing: np.ndarray  # (n_channels, n_components)
    means: np.ndarray  # (n_channels,)
    rotation: np.ndarray  # orthonormal unmixing in whitened space
    iterations: int
    final_delta: float
    converged: bool
    seed: int = 0

    def sources(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.means) @ self.unmixing.T

    def to_dict(self) -> dict:
        return {
            "n_channels": self.n_channels,
            "n_components": self.n_components,
            "unmixing": self.unmixing.tolist(),
            "mixing": self.mixing.tolist(),
            "means": self.means.tolist(),
            "rotation": self.rotation.tolist(),
            "iterations": self.iterations,
            "final_delta": self.final_delta,
            "converged": self.converged,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "IcaModel":
        return cls(
            n_channels=int(raw["n_channels"]),
            n_components=int(raw["n_components"]),
            unmixing=np.asarray(raw["unmixing"], dtype=float),
            mixing=np.asarray(raw["mixing"], dtype=float),
            means=np.asarray(raw["means"], dtype=float),
            rotation=np.asarray(raw["rotation"], dtype=float),
            iterations=int(raw["iterations"]),
            final_delta=float(raw["final_delta"]),
            converged=bool(raw["converged"]),
            seed=int(raw.get("seed", 0)),
        )


@dataclass(frozen=True)
class RejectionCriterion:
    """
    Which components to drop. An explicit exclusion list overrides the
    kurtosis and variance-share thresholds.
    """

    kurtosis_threshold: float = 8.0
    variance_share_threshold: float = 0.6
    similarity_floor: float = 0.7
    exclude: Optional[Tuple[int, ...]] = None

    @classmethod
    def keep_all(cls) -> "RejectionCriterion":
        return cls(exclude=(), similarity_floor=-1.0)


@dataclass
class ReconReport:
    cosine_similarity: List[float]
    cosine_distance: List[float]
    rejected: List[int]
    kurtosis: List[float]
    variance_share: List[float]
    fallback_channels: List[int] = field(default_factory=list)
    component_similarity: List[List[float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "cosine_similarity": self.cosine_similarity,
            "cosine_distance": self.cosine_distance,
            "rejected": self.rejected,
            "kurtosis": self.kurtosis,
            "variance_share": self.variance_share,
            "fallback_channels": self.fallback_channels,
            "component_similarity": self.component_similarity,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ReconReport":
        return cls(
            cosine_similarity=[float(v) for v in raw["cosine_similarity"]],
            cosine_distance=[float(v) for v in raw["cosine_distance"]],
            rejected=[int(i) for i in raw["rejected"]],
            kurtosis=[float(v) for v in raw["kurtosis"]],
            variance_share=[float(v) for v in raw["variance_share"]],
            fallback_channels=[int(i) for i in raw.get("fallback_channels", [])],
            component_similarity=[
                [float(v) for v in row] for row in raw.get("component_similarity", [])
            ],
        )


def cosine_similarity(t: Sequence[float], e: Sequence[float]) -> float:
    """
    (t . e) / (|t| |e|).

    Raises:
        CosineSimilarityError: If either vector has zero norm.
    """
    t = np.asarray(t, dtype=float).ravel()
    e = np.asarray(e, dtype=float).ravel()
    if t.shape != e.shape:
        raise CosineSimilarityError(f"Vectors differ in length: {t.size} vs {e.size}")
    norm_t = np.linalg.norm(t)
    norm_e = np.linalg.norm(e)
    if norm_t == 0 or norm_e == 0:
        raise CosineSimilarityError()
    return float(np.clip(np.dot(t, e) / (norm_t * norm_e), -1.0, 1.0))


def cosine_distance(t: Sequence[float], e: Sequence[float]) -> float:
    return 1.0 - cosine_similarity(t, e)


def _sym_decorrelation(W: np.ndarray) -> np.ndarray:
    s, u = linalg.eigh(W @ W.T)
    s = np.clip(s, np.finfo(W.dtype).tiny, None)
    return (u * (1.0 / np.sqrt(s))) @ u.T @ W


def _fixed_point_delta(W: np.ndarray, Z: np.ndarray) -> float:
    """Change of the unmixing rows after one more tanh fixed-point step."""
    n = Z.shape[0]
    gwtx = np.tanh(Z @ W.T)  # (n, k)
    g_wtx = (1.0 - gwtx**2).mean(axis=0)
    W1 = _sym_decorrelation(gwtx.T @ Z / n - g_wtx[:, None] * W)
    return float(np.max(np.abs(np.abs(np.einsum("ij,ij->i", W1, W)) - 1.0)))


def fit_ica(
    X: np.ndarray,
    n_components: Optional[int] = None,
    seed: int = 0,
    max_iter: int = 200,
    tol: float = 1e-4,
    gaussian_kurtosis_tol: float = 0.5,
) -> IcaModel:
    """
    Fit fixed-point ICA on a (samples, channels) matrix.

    Args:
        X (np.ndarray): EEG matrix, one column per channel.
        n_components (int): Number of components, at most the channel count.
        seed (int): Seed of the initial rotation; identical seeds give
            bit-identical models.

    Returns:
        IcaModel: The fitted model.

    Raises:
        RankDeficientError: If a channel is a linear copy of the others.
        IcaConvergenceError: If the rotation does not converge and the mixture
            is otherwise identifiable.
    """
    X = np.asarray(X, dtype=float)
    n_samples, n_channels = X.shape
    k = n_channels if n_components is None else int(n_components)
    if not 1 <= k <= n_channels:
        raise ReconstructionError(f"n_components must be in [1, {n_channels}], got {k}")
    if n_samples < 10 * k:
        raise SignalTooShortError(f"ICA needs at least {10 * k} samples, got {n_samples}")

    means = X.mean(axis=0)
    Xc = X - means
    eigvals, eigvecs = linalg.eigh(Xc.T @ Xc / n_samples)
    if eigvals[-1] <= 0 or eigvals[0] <= RANK_TOLERANCE * eigvals[-1]:
        raise RankDeficientError(
            f"Channel covariance is singular (eigenvalue ratio {eigvals[0] / max(eigvals[-1], 1e-300):.3e})"
        )

    order = np.argsort(eigvals)[::-1][:k]
    whitening = (eigvecs[:, order] / np.sqrt(eigvals[order])).T  # (k, n_channels)
    Z = Xc @ whitening.T

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        _, rotation, sources, n_iter = fastica(
            Z,
            algorithm="parallel",
            whiten=False,
            fun="logcosh",
            max_iter=max_iter,
            tol=tol,
            random_state=seed,
            return_n_iter=True,
        )
    converged = not any(issubclass(w.category, ConvergenceWarning) for w in caught)
    final_delta = _fixed_point_delta(rotation, Z)

    kurt = stats.kurtosis(sources, axis=0, fisher=True)
    n_gaussian = int(np.sum(np.abs(kurt) < gaussian_kurtosis_tol))
    if n_gaussian >= 2:
        error_handler.warning(
            f"ICA: unidentifiable mixture, {n_gaussian} of {k} components are near-Gaussian"
        )
    elif not converged:
        raise IcaConvergenceError(
            f"ICA did not converge after {max_iter} iterations (delta {final_delta:.2e})"
        )

    unmixing = rotation @ whitening
    model = IcaModel(
        n_channels=n_channels,
        n_components=k,
        unmixing=unmixing,
        mixing=linalg.pinv(unmixing),
        means=means,
        rotation=rotation,
        iterations=int(n_iter),
        final_delta=final_delta,
        converged=converged,
        seed=seed,
    )
    error_handler.info(
        f"ICA fitted: {k} components, {n_iter} iterations, delta {final_delta:.2e}"
    )
    return model


def component_similarity(X: np.ndarray, model: IcaModel) -> np.ndarray:
    """|cos| between every component time course and every centered channel."""
    S = model.sources(X)
    Xc = np.asarray(X, dtype=float) - model.means
    scores = np.zeros((model.n_components, model.n_channels))
    for i in range(model.n_components):
        for c in range(model.n_channels):
            if np.any(S[:, i]) and np.any(Xc[:, c]):
                scores[i, c] = abs(cosine_similarity(S[:, i], Xc[:, c]))
    return scores


def reconstruct(
    X: np.ndarray, model: IcaModel, rejection: RejectionCriterion = RejectionCriterion()
) -> Tuple[np.ndarray, ReconReport]:
    """
    Remove rejected components and remix.

    The contribution of every rejected component is subtracted from X, so
    that rejecting nothing returns X unchanged.

    Raises:
        ReconstructionError: If the layout differs from the model or every
            component would be rejected.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_channels:
        raise ReconstructionError(
            f"Model expects {model.n_channels} channels, got shape {X.shape}"
        )

    S = model.sources(X)
    kurt = stats.kurtosis(S, axis=0, fisher=True)
    energy = S.var(axis=0) * np.sum(model.mixing**2, axis=0)
    share = energy / energy.sum() if energy.sum() > 0 else np.zeros_like(energy)

    if rejection.exclude is not None:
        rejected = sorted(set(int(i) for i in rejection.exclude))
        if any(not 0 <= i < model.n_components for i in rejected):
            raise ReconstructionError(f"Component index out of range in {rejected}")
    else:
        rejected = [
            i
            for i in range(model.n_components)
            if kurt[i] > rejection.kurtosis_threshold
            or share[i] > rejection.variance_share_threshold
        ]
    if len(rejected) == model.n_components:
        raise ReconstructionError("Rejection would remove all components")

    X_recon = X - S[:, rejected] @ model.mixing[:, rejected].T

    similarity = []
    fallback = []
    for c in range(model.n_channels):
        try:
            sim = cosine_similarity(X_recon[:, c], X[:, c])
        except CosineSimilarityError:
            error_handler.warning(f"Channel {c}: zero-norm signal, similarity taken as 0")
            sim = 0.0
        similarity.append(sim)
        if sim < rejection.similarity_floor:
            error_handler.warning(
                f"Channel {c}: reconstruction similarity {sim:.3f} below floor "
                f"{rejection.similarity_floor}, keeping the original channel"
            )
            X_recon[:, c] = X[:, c]
            fallback.append(c)

    report = ReconReport(
        cosine_similarity=similarity,
        cosine_distance=[1.0 - s for s in similarity],
        rejected=rejected,
        kurtosis=[float(v) for v in kurt],
        variance_share=[float(v) for v in share],
        fallback_channels=fallback,
        component_similarity=component_similarity(X, model).tolist(),
    )
    error_handler.info(f"Reconstruction rejected components {rejected}")
    return X_recon, report


def save_model(model: IcaModel, path: str) -> None:
    try:
        Path(path).write_text(json.dumps(model.to_dict(), indent=2), encoding="utf-8")
    except OSError as e:
        raise FileWriteError(f"Cannot write ICA model to '{path}': {e}")


def load_model(path: str) -> IcaModel:
    model_path = Path(path)
    if not model_path.exists():
        raise MissingFileError(f"ICA model not found: {path}")
    return IcaModel.from_dict(json.loads(model_path.read_text(encoding="utf-8")))

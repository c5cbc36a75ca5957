import logging
import numpy as np
import pytest
from scipy import signal

from src.eeg_recon import (
    IcaModel,
    RejectionCriterion,
    cosine_distance,
    cosine_similarity,
    fit_ica,
    load_model,
    reconstruct,
    save_model,
)
from src.error_handler import (
    CosineSimilarityError,
    RankDeficientError,
    ReconstructionError,
    SignalTooShortError,
)

logger = logging.getLogger(__name__)

FS = 128.0


def matched_similarity(sources: np.ndarray, recovered: np.ndarray) -> list:
    """Greedy max-|cos| assignment of recovered components to true sources."""
    free = list(range(recovered.shape[1]))
    scores = []
    for i in range(sources.shape[1]):
        best = max(free, key=lambda j: abs(cosine_similarity(sources[:, i], recovered[:, j])))
        scores.append(abs(cosine_similarity(sources[:, i], recovered[:, best])))
        free.remove(best)
    return scores


@pytest.fixture
def two_source_mixture():
    t = np.arange(0, 20.0, 1.0 / 100.0)
    S = np.column_stack([np.sin(2 * np.pi * 1.0 * t), signal.square(2 * np.pi * 0.3 * t)])
    S = S - S.mean(axis=0)
    A = np.array([[1.0, 0.5], [0.5, 1.0]])
    return S, S @ A.T


@pytest.fixture
def blink_mixture():
    rng = np.random.default_rng(7)
    t = np.arange(int(20 * FS)) / FS
    alpha = np.sin(2 * np.pi * 10.0 * t)
    phase = np.mod(t, 1.0)
    blink = np.where(phase < 0.4, np.sin(np.pi * phase / 0.4), 0.0) * 3.0
    background = rng.laplace(size=t.size) * 0.5
    S = np.column_stack([alpha, blink, background])
    A = np.array([[1.0, 2.0, 0.3], [0.8, 1.5, 0.5], [0.6, 0.4, 1.0]])
    return t, S, A


@pytest.mark.parametrize(
    "t, e, expected",
    [
        ([1, 2, 3], [2, 4, 6], 1.0),
        ([1, 0], [0, 1], 0.0),
        ([1, 1], [1, 0], 0.70710678),
    ],
)
def test_cosine_similarity_values(t, e, expected):
    assert cosine_similarity(t, e) == pytest.approx(expected, abs=1e-8)
    assert cosine_similarity(e, t) == pytest.approx(expected, abs=1e-8)
    assert cosine_distance(t, e) == 1.0 - cosine_similarity(t, e)


def test_cosine_similarity_scale_invariant():
    t, e = [0.3, -1.2, 4.0], [1.0, 0.5, 2.0]
    assert cosine_similarity(np.multiply(t, 7.5), e) == pytest.approx(cosine_similarity(t, e))


def test_cosine_similarity_zero_norm():
    with pytest.raises(CosineSimilarityError):
        cosine_similarity([0, 0], [1, 2])


def test_fit_ica_recovers_sources(two_source_mixture):
    S, X = two_source_mixture
    model = fit_ica(X, 2, seed=0)
    scores = matched_similarity(S, model.sources(X))
    logger.info(f"Matched |cos|: {scores}")
    assert min(scores) >= 0.95
    assert model.converged


def five_source_mixture(seed: int):
    rng = np.random.default_rng(seed)
    t = np.arange(0, 20.0, 1.0 / 100.0)
    S = np.column_stack(
        [
            np.sin(2 * np.pi * 1.3 * t),
            signal.square(2 * np.pi * 0.7 * t),
            signal.sawtooth(2 * np.pi * 0.45 * t),
            rng.laplace(size=t.size),
            rng.uniform(-1.0, 1.0, t.size),
        ]
    )
    S = S - S.mean(axis=0)
    A = np.eye(5) + 0.5 * rng.uniform(-1.0, 1.0, (5, 5))
    return S, S @ A.T


@pytest.mark.parametrize("n_mixtures", [10, pytest.param(100, marks=pytest.mark.slow)])
def test_fit_ica_recovers_seeded_mixtures(n_mixtures):
    means = []
    for seed in range(n_mixtures):
        S, X = five_source_mixture(seed)
        means.append(np.mean(matched_similarity(S, fit_ica(X, seed=seed).sources(X))))
    logger.info(f"Worst mixture mean |cos|: {min(means):.4f}")
    assert np.mean(means) >= 0.95


def test_fit_ica_model_invariants(two_source_mixture):
    _, X = two_source_mixture
    model = fit_ica(X, 2, seed=0)
    np.testing.assert_allclose(model.unmixing @ model.mixing, np.eye(2), atol=1e-6)
    np.testing.assert_allclose(np.linalg.norm(model.rotation, axis=1), 1.0, atol=1e-6)
    corr = np.corrcoef(model.sources(X).T)
    assert abs(corr[0, 1]) < 1e-3


def test_fit_ica_seed_deterministic(two_source_mixture):
    _, X = two_source_mixture
    a = fit_ica(X, 2, seed=3)
    b = fit_ica(X, 2, seed=3)
    assert np.array_equal(a.unmixing, b.unmixing)


def test_fit_ica_rank_deficient(two_source_mixture):
    _, X = two_source_mixture
    X3 = np.column_stack([X, X[:, 0] * 2.0 - X[:, 1]])
    with pytest.raises(RankDeficientError):
        fit_ica(X3, seed=0)


def test_fit_ica_too_few_samples():
    with pytest.raises(SignalTooShortError):
        fit_ica(np.random.default_rng(0).standard_normal((15, 2)), 2)


def test_fit_ica_gaussian_warning(caplog):
    caplog.set_level(logging.WARNING)
    X = np.random.default_rng(11).standard_normal((4000, 2))
    fit_ica(X, 2, seed=0)
    assert "unidentifiable mixture" in caplog.text


def test_reconstruct_keep_all_is_identity(two_source_mixture):
    _, X = two_source_mixture
    model = fit_ica(X, 2, seed=0)
    X_recon, report = reconstruct(X, model, RejectionCriterion.keep_all())
    np.testing.assert_allclose(X_recon, X, atol=1e-9)
    assert report.rejected == []
    np.testing.assert_allclose(report.cosine_similarity, 1.0, atol=1e-12)
    assert all(d == 1.0 - s for d, s in zip(report.cosine_distance, report.cosine_similarity))


def test_reconstruct_reject_all_fails(two_source_mixture):
    _, X = two_source_mixture
    model = fit_ica(X, 2, seed=0)
    with pytest.raises(ReconstructionError):
        reconstruct(X, model, RejectionCriterion(exclude=(0, 1)))


def test_reconstruct_wrong_layout(two_source_mixture):
    _, X = two_source_mixture
    model = fit_ica(X, 2, seed=0)
    with pytest.raises(ReconstructionError):
        reconstruct(np.column_stack([X, X[:, :1]]), model)


def test_reconstruct_removes_blink(blink_mixture):
    t, S, A = blink_mixture
    X = S @ A.T
    blink_part = np.outer(S[:, 1], A[:, 1])
    clean = X - blink_part

    model = fit_ica(X, seed=0)
    blink = S[:, 1] - S[:, 1].mean()
    blink_component = int(
        np.argmax([abs(cosine_similarity(blink, s)) for s in model.sources(X).T])
    )
    X_recon, report = reconstruct(
        X, model, RejectionCriterion(exclude=(blink_component,), similarity_floor=-1.0)
    )
    assert report.rejected == [blink_component]
    assert len(report.component_similarity) == model.n_components

    # Only the centered part of a component is removed
    residual = np.linalg.norm(X_recon - clean - blink_part.mean(axis=0))
    logger.info(f"Residual blink energy ratio: {residual / np.linalg.norm(blink_part):.3f}")
    assert residual <= 0.2 * np.linalg.norm(blink_part)

    reference = np.sin(2 * np.pi * 10.0 * t)
    before = np.dot(clean[:, 0], reference)
    after = np.dot(X_recon[:, 0], reference)
    assert after == pytest.approx(before, rel=0.1)


def test_reconstruct_similarity_floor_fallback(blink_mixture, caplog):
    _, S, A = blink_mixture
    X = S @ A.T
    model = fit_ica(X, seed=0)
    dominant = int(np.argmax(reconstruct(X, model, RejectionCriterion.keep_all())[1].variance_share))
    caplog.set_level(logging.WARNING)
    X_recon, report = reconstruct(
        X, model, RejectionCriterion(exclude=(dominant,), similarity_floor=0.999)
    )
    assert report.fallback_channels
    for c in report.fallback_channels:
        np.testing.assert_array_equal(X_recon[:, c], X[:, c])
    assert "below floor" in caplog.text


def test_model_roundtrip(tmp_path, two_source_mixture):
    _, X = two_source_mixture
    model = fit_ica(X, 2, seed=0)
    path = tmp_path / "ica.json"
    save_model(model, str(path))
    loaded = load_model(str(path))
    assert isinstance(loaded, IcaModel)
    np.testing.assert_allclose(loaded.unmixing, model.unmixing, rtol=0, atol=0)
    assert loaded.iterations == model.iterations


def test_reconstruct_zeroed_channel_scores_zero(caplog):
    rng = np.random.default_rng(5)
    X = rng.laplace(size=(500, 2))
    eye = np.eye(2)
    model = IcaModel(2, 2, eye, eye, np.zeros(2), eye, 1, 0.0, True)
    caplog.set_level(logging.WARNING)
    # channel 0 is exactly component 0, so rejecting it leaves a zero channel
    X_recon, report = reconstruct(X, model, RejectionCriterion(exclude=(0,)))
    assert report.cosine_similarity[0] == 0.0
    assert report.cosine_distance[0] == 1.0
    assert report.cosine_similarity[1] == pytest.approx(1.0)
    assert report.fallback_channels == [0]
    np.testing.assert_array_equal(X_recon[:, 0], X[:, 0])
    assert "zero-norm" in caplog.text

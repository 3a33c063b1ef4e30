"""
Evaluation Metrics - Frechet distance and onset synchronization

Frechet distance between Gaussian fits of two feature sets, a spectral-flux
onset detector for generated spectrograms, tolerance-based onset matching with
precision/recall/F1, average precision and mean timing offset.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from scipy import linalg

from flowalign.alignment import TeacherEncoder
from flowalign.errors import EvalError
from flowalign.utils import to_tensor

logger = logging.getLogger(__name__)

PSD_TOLERANCE = 1e-8
DEFAULT_THRESHOLD = 0.3

ArrayLike = Union[np.ndarray, Sequence[float]]


@dataclass
class FeatureStats:
    """
    Gaussian fit of a feature set.

    Attributes:
        mean (np.ndarray): Mean vector (d,).
        covariance (np.ndarray): Symmetric (d, d) sample covariance.
        count (int): Number of feature rows, at least 2.
    """

    mean: np.ndarray
    covariance: np.ndarray
    count: int

    def __post_init__(self) -> None:
        if self.count < 2:
            raise EvalError("insufficient_samples", {"count": self.count})
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        if cov.shape != (self.dim, self.dim):
            raise EvalError("dimension_mismatch", {"a": self.dim, "b": cov.shape})
        self.covariance = 0.5 * (cov + cov.T)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def from_features(cls, features: np.ndarray) -> "FeatureStats":
        """Fit mean and unbiased covariance to rows of an (n, d) array."""
        features = np.asarray(features, dtype=np.float64)
        if features.ndim == 1:
            features = features[:, None]
        count = features.shape[0]
        if count < 2:
            raise EvalError("insufficient_samples", {"count": count})
        return cls(features.mean(axis=0), np.cov(features, rowvar=False), count)


def _psd_sqrt(matrix: np.ndarray, check: bool = True) -> np.ndarray:
    """Symmetric square root via eigendecomposition, clipping tiny negative eigenvalues."""
    eigvals, eigvecs = linalg.eigh(0.5 * (matrix + matrix.T))
    floor = -PSD_TOLERANCE * max(1.0, float(np.abs(eigvals).max(initial=0.0)))
    if check and eigvals.min(initial=0.0) < floor:
        raise EvalError("not_psd", {"min_eigenvalue": float(eigvals.min())})
    return (eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))) @ eigvecs.T


def frechet_distance(a: FeatureStats, b: FeatureStats) -> float:
    """
    Frechet distance between two Gaussian fits.

    ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2), with both
    square roots from symmetric eigendecompositions.

    Raises:
        EvalError: On a dimension mismatch or a covariance that is not PSD.
    """
    if a.dim != b.dim:
        raise EvalError("dimension_mismatch", {"a": a.dim, "b": b.dim})
    root_a = _psd_sqrt(a.covariance)
    _psd_sqrt(b.covariance)
    inner = root_a @ b.covariance @ root_a
    inner_eigvals = linalg.eigvalsh(0.5 * (inner + inner.T))
    cross = float(np.sqrt(np.clip(inner_eigvals, 0.0, None)).sum())
    diff = a.mean - b.mean
    value = float(diff @ diff) + float(np.trace(a.covariance) + np.trace(b.covariance)) - 2 * cross
    return max(value, 0.0)


def onset_strength(spec: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """
    Frame energy and its first difference.

    Args:
        spec: Spectrogram (..., T'); every leading axis is summed into the energy.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (energy, flux) of length T', with flux[0] = 0.
    """
    spec = np.asarray(spec, dtype=np.float64)
    energy = spec.reshape(-1, spec.shape[-1]).sum(axis=0)
    flux = np.zeros_like(energy)
    flux[1:] = np.diff(energy)
    return energy, flux


def detect_onsets(spec: ArrayLike, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """
    Spectral-flux onset detector.

    Frame tau >= 1 is an onset when its flux exceeds ``threshold`` times the
    largest flux and is a local flux maximum. Frame 0 is an onset when its energy
    exceeds ``threshold`` times the largest energy and falls afterwards.

    Returns:
        np.ndarray: Binary int8 vector of length T'.
    """
    energy, flux = onset_strength(spec)
    length = energy.shape[0]
    onsets = np.zeros(length, dtype=np.int8)
    max_flux = flux.max(initial=0.0)
    if max_flux > 0:
        for tau in range(1, length):
            if flux[tau] <= threshold * max_flux:
                continue
            if tau > 1 and flux[tau] < flux[tau - 1]:
                continue
            if tau + 1 < length and flux[tau] <= flux[tau + 1]:
                continue
            onsets[tau] = 1
    max_energy = energy.max(initial=0.0)
    if length and max_energy > 0 and energy[0] > threshold * max_energy:
        if length == 1 or energy[0] > energy[1]:
            onsets[0] = 1
    return onsets


def match_onsets(
    pred_frames: Sequence[int], ref_frames: Sequence[int], tol: int
) -> List[Tuple[int, int]]:
    """
    Greedy one-to-one matching within +-tol frames.

    Candidate pairs are taken in order of (distance, predicted frame, reference
    frame), so the result does not depend on the order of the inputs.
    """
    candidates = sorted(
        (abs(p - r), p, r) for p in set(pred_frames) for r in set(ref_frames) if abs(p - r) <= tol
    )
    used_pred, used_ref = set(), set()
    pairs = []
    for _, p, r in candidates:
        if p in used_pred or r in used_ref:
            continue
        used_pred.add(p)
        used_ref.add(r)
        pairs.append((p, r))
    return pairs


def _frames(vector: ArrayLike) -> List[int]:
    return [int(i) for i in np.flatnonzero(np.asarray(vector))]


def _check_lengths(pred: ArrayLike, ref: ArrayLike) -> None:
    if len(pred) != len(ref):
        raise EvalError("length_mismatch", {"pred": len(pred), "ref": len(ref)})


def _prf(matched: int, n_pred: int, n_ref: int) -> Tuple[float, float, float]:
    if n_pred == 0 and n_ref == 0:
        return 1.0, 1.0, 1.0
    precision = matched / n_pred if n_pred else 0.0
    recall = matched / n_ref if n_ref else 0.0
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


def onset_f1(pred: ArrayLike, ref: ArrayLike, tol: int = 1) -> Tuple[float, float, float]:
    """
    Precision, recall and F1 of predicted onsets against reference onsets.

    Empty prediction with non-empty reference gives (0, 0, 0); both empty give
    (1, 1, 1).
    """
    _check_lengths(pred, ref)
    pred_frames, ref_frames = _frames(pred), _frames(ref)
    pairs = match_onsets(pred_frames, ref_frames, tol)
    return _prf(len(pairs), len(pred_frames), len(ref_frames))


def onset_average_precision(strength: ArrayLike, ref: ArrayLike, tol: int = 1) -> float:
    """
    Average precision of frames ranked by onset strength.

    Frames with positive strength are visited in descending order (ties by frame
    index); each is a hit when an unmatched reference onset lies within +-tol.
    """
    _check_lengths(strength, ref)
    strength = np.asarray(strength, dtype=np.float64)
    ref_frames = _frames(ref)
    ranked = [int(i) for i in np.argsort(-strength, kind="stable") if strength[i] > 0]
    if not ref_frames:
        return 1.0 if not ranked else 0.0
    unmatched = set(ref_frames)
    hits = 0
    total = 0.0
    for rank, frame in enumerate(ranked, start=1):
        near = [r for r in unmatched if abs(r - frame) <= tol]
        if not near:
            continue
        unmatched.remove(min(near, key=lambda r: (abs(r - frame), r)))
        hits += 1
        total += hits / rank
    return total / len(ref_frames)


def temporal_offset(pred: ArrayLike, ref: ArrayLike, tol: int = 1) -> float:
    """Mean absolute frame offset over matched onset pairs; NaN when none match."""
    _check_lengths(pred, ref)
    pairs = match_onsets(_frames(pred), _frames(ref), tol)
    if not pairs:
        return float("nan")
    return float(np.mean([abs(p - r) for p, r in pairs]))


def teacher_features(spectrograms: np.ndarray, teacher: TeacherEncoder) -> np.ndarray:
    """Teacher features mean-pooled over rows, (N, D_a)."""
    with torch.no_grad():
        feats = teacher.encode(to_tensor(spectrograms, torch.float64))
    return feats.mean(dim=-2).numpy()


def evaluate_samples(
    generated: np.ndarray,
    reference: np.ndarray,
    reference_onsets: np.ndarray,
    teacher: Optional[TeacherEncoder] = None,
    tol: int = 1,
    threshold: float = DEFAULT_THRESHOLD,
) -> Dict[str, float]:
    """
    Score generated spectrograms against a reference set.

    Args:
        generated (np.ndarray): Generated latents (N, C, F', T').
        reference (np.ndarray): Reference latents (M, C, F', T').
        reference_onsets (np.ndarray): Ground-truth onsets (N, T') for the clips the
            generated rows were conditioned on.
        teacher (Optional[TeacherEncoder]): Feature extractor for ``fd``; omitted
            means ``fd`` is not reported.
        tol (int): Onset matching tolerance in frames.
        threshold (float): Onset detector threshold.

    Returns:
        Dict[str, float]: ``fd``, ``fd_raw``, ``onset_precision``, ``onset_recall``,
        ``onset_f1`` (pooled over all clips), ``onset_ap`` (mean over clips) and
        ``onset_offset`` (mean over all matched pairs).
    """
    generated = np.asarray(generated, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if generated.shape[0] != len(reference_onsets):
        raise EvalError(
            "length_mismatch", {"pred": generated.shape[0], "ref": len(reference_onsets)}
        )
    metrics: Dict[str, float] = {}
    if teacher is not None:
        metrics["fd"] = frechet_distance(
            FeatureStats.from_features(teacher_features(generated, teacher)),
            FeatureStats.from_features(teacher_features(reference, teacher)),
        )
    metrics["fd_raw"] = frechet_distance(
        FeatureStats.from_features(generated.reshape(generated.shape[0], -1)),
        FeatureStats.from_features(reference.reshape(reference.shape[0], -1)),
    )

    matched = n_pred = n_ref = 0
    offsets: List[int] = []
    precisions: List[float] = []
    for spec, ref in zip(generated, reference_onsets):
        pred_frames = _frames(detect_onsets(spec, threshold))
        ref_frames = _frames(ref)
        pairs = match_onsets(pred_frames, ref_frames, tol)
        matched += len(pairs)
        n_pred += len(pred_frames)
        n_ref += len(ref_frames)
        offsets.extend(abs(p - r) for p, r in pairs)
        energy, flux = onset_strength(spec)
        strength = np.maximum(flux, 0.0)
        # silence before the clip
        strength[0] = max(energy[0], 0.0)
        precisions.append(onset_average_precision(strength, ref, tol))

    precision, recall, f1 = _prf(matched, n_pred, n_ref)
    metrics.update(
        onset_precision=precision,
        onset_recall=recall,
        onset_f1=f1,
        onset_ap=float(np.mean(precisions)),
        onset_offset=float(np.mean(offsets)) if offsets else float("nan"),
    )
    logger.debug("Evaluated %d clips: %s", generated.shape[0], metrics)
    return metrics

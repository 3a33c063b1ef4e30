"""
Synthetic Data - onset-driven toy spectrograms and the Gaussian oracle

Generates clips whose spectrogram is a sum of decaying class-band events, paired
with frame-level visual features that lead the audio by a few frames and with an
onset cue vector. Also provides the closed-form minimizer of the flow matching
loss for Gaussian data, used to validate samplers and training.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from scipy import linalg
from torch import Tensor

from flowalign.enum_utils import LabeledEnum
from flowalign.errors import DataError
from flowalign.interpolant import InterpolantSchedule
from flowalign.utils import RngStreams, to_tensor

logger = logging.getLogger(__name__)

# Feature channels appended after the class one-hot: envelope, motion, two distractors.
EXTRA_VISUAL_DIMS = 4
COARSE_BLOCK = 4


class TemporalFeature(LabeledEnum):
    """What fills the onset cue vector c_o."""

    ONSET = ("onset", "Onset")
    ENERGY = ("energy", "Energy")
    DOWNSAMPLED_MEL = ("downsampled_mel", "Downsampled mel")


@dataclass
class ToyConfig:
    """
    Toy onset dataset configuration.

    Attributes:
        freq_bins (int): Frequency bins F'.
        time_frames (int): Time frames T'; also the onset cue length.
        classes (int): Number of sound classes, each owning a frequency band.
        min_onsets (int): Fewest onsets per clip.
        max_onsets (int): Most onsets per clip.
        min_gap (int): Minimum distance between two onsets, in frames.
        decay (float): Per-frame energy decay of an event, in (0, 1).
        amplitude (float): Peak amplitude A of an event.
        band_width (float): Standard deviation of the class band, in bins.
        noise_floor (float): Scale of the additive |N(0, 1)| floor.
        lead_lag (int): Frames by which visual activity precedes the audio.
        visual_downsample (int): Audio frames per visual frame; L_v = T' / visual_downsample.
        visual_noise (float): Standard deviation of the visual feature noise.
        temporal_feature (TemporalFeature): Cue written to c_o.
            - ONSET: binary onset vector.
            - ENERGY: frame energy normalized to [0, 1].
            - DOWNSAMPLED_MEL: normalized energy averaged over blocks of 4 frames.
        seed (int): Dataset seed.
    """

    freq_bins: int = 16
    time_frames: int = 64
    classes: int = 4
    min_onsets: int = 1
    max_onsets: int = 4
    min_gap: int = 4
    decay: float = 0.7
    amplitude: float = 1.0
    band_width: float = 1.0
    noise_floor: float = 0.01
    lead_lag: int = 2
    visual_downsample: int = 4
    visual_noise: float = 0.05
    temporal_feature: TemporalFeature = TemporalFeature.ONSET
    seed: int = 0

    def __post_init__(self) -> None:
        self.temporal_feature = TemporalFeature.from_code(self.temporal_feature)
        checks = [
            ("freq_bins", self.freq_bins >= self.classes),
            ("time_frames", self.time_frames >= 1),
            ("classes", self.classes >= 1),
            ("min_onsets", 1 <= self.min_onsets <= self.max_onsets),
            ("max_onsets", self.max_onsets <= 4),
            ("min_gap", self.min_gap >= 1),
            ("decay", 0.0 < self.decay < 1.0),
            ("amplitude", self.amplitude > 0),
            ("band_width", self.band_width > 0),
            ("noise_floor", self.noise_floor >= 0),
            ("lead_lag", 0 <= self.lead_lag < self.time_frames),
            (
                "visual_downsample",
                self.visual_downsample >= 1 and self.time_frames % self.visual_downsample == 0,
            ),
            ("visual_noise", self.visual_noise >= 0),
        ]
        for name, ok in checks:
            if not ok:
                raise DataError("invalid_toy_config", {"field": name, "value": getattr(self, name)})
        if (self.max_onsets - 1) * self.min_gap >= self.time_frames:
            raise DataError(
                "invalid_toy_config", {"field": "max_onsets", "value": self.max_onsets}
            )

    @property
    def visual_len(self) -> int:
        return self.time_frames // self.visual_downsample

    @property
    def visual_dim(self) -> int:
        return self.classes + EXTRA_VISUAL_DIMS

    def band(self, class_id: int) -> np.ndarray:
        """Gaussian frequency profile of a class, peak 1 at its centre bin."""
        centre = int((class_id + 0.5) * self.freq_bins / self.classes)
        bins = np.arange(self.freq_bins, dtype=np.float64)
        return np.exp(-0.5 * ((bins - centre) / self.band_width) ** 2)


@dataclass
class ToySample:
    """
    One synthetic clip.

    Attributes:
        x_star (np.ndarray): Spectrogram of shape (1, F', T').
        onsets (np.ndarray): Binary onset indicator of length T'.
        class_id (int): Sound class.
        c_v (np.ndarray): Visual features (L_v, D_v).
        c_o (np.ndarray): Onset cue of length T', values in [0, 1].
    """

    x_star: np.ndarray
    onsets: np.ndarray
    class_id: int
    c_v: np.ndarray
    c_o: np.ndarray

    @property
    def onset_frames(self) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.onsets)]


@dataclass
class ToyDataset:
    """Column-stacked clips; iterating yields ``ToySample`` objects."""

    x_star: np.ndarray
    onsets: np.ndarray
    class_ids: np.ndarray
    c_v: np.ndarray
    c_o: np.ndarray
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        count = self.x_star.shape[0]
        for name in ("onsets", "class_ids", "c_v", "c_o"):
            if getattr(self, name).shape[0] != count:
                raise DataError("invalid_sample_count", {"n": getattr(self, name).shape[0]})

    def __len__(self) -> int:
        return self.x_star.shape[0]

    def __getitem__(self, index: int) -> ToySample:
        return ToySample(
            self.x_star[index],
            self.onsets[index],
            int(self.class_ids[index]),
            self.c_v[index],
            self.c_o[index],
        )

    def __iter__(self) -> Iterator[ToySample]:
        for index in range(len(self)):
            yield self[index]

    @classmethod
    def from_samples(
        cls, samples: Sequence[ToySample], meta: Optional[Dict[str, object]] = None
    ) -> "ToyDataset":
        if not samples:
            raise DataError("invalid_sample_count", {"n": 0})
        return cls(
            np.stack([s.x_star for s in samples]),
            np.stack([s.onsets for s in samples]),
            np.array([s.class_id for s in samples], dtype=np.int64),
            np.stack([s.c_v for s in samples]),
            np.stack([s.c_o for s in samples]),
            dict(meta or {}),
        )

    def subset(self, rows: Union[Sequence[int], np.ndarray]) -> "ToyDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return ToyDataset(
            self.x_star[rows],
            self.onsets[rows],
            self.class_ids[rows],
            self.c_v[rows],
            self.c_o[rows],
            dict(self.meta),
        )

    def arrays(self) -> Dict[str, np.ndarray]:
        """Float32 columns for the tensor container."""
        return {
            "x_star": self.x_star.astype(np.float32),
            "onsets": self.onsets.astype(np.float32),
            "class_ids": self.class_ids.astype(np.float32),
            "c_v": self.c_v.astype(np.float32),
            "c_o": self.c_o.astype(np.float32),
        }

    @classmethod
    def from_arrays(
        cls, arrays: Dict[str, np.ndarray], meta: Optional[Dict[str, object]] = None
    ) -> "ToyDataset":
        return cls(
            arrays["x_star"],
            arrays["onsets"],
            arrays["class_ids"].astype(np.int64),
            arrays["c_v"],
            arrays["c_o"],
            dict(meta or {}),
        )

    def tensors(
        self, rows: Optional[np.ndarray] = None, dtype: torch.dtype = torch.float32
    ) -> Tuple[Tensor, Tensor, Tensor]:
        """(x_star, c_v, c_o) tensors for the selected rows."""
        data = self if rows is None else self.subset(rows)
        return (
            to_tensor(data.x_star, dtype),
            to_tensor(data.c_v, dtype),
            to_tensor(data.c_o, dtype),
        )


def draw_onsets(cfg: ToyConfig, rng: np.random.Generator) -> np.ndarray:
    """Sorted onset frames respecting ``min_gap``."""
    count = int(rng.integers(cfg.min_onsets, cfg.max_onsets + 1))
    slack = cfg.time_frames - (count - 1) * (cfg.min_gap - 1)
    base = np.sort(rng.choice(slack, size=count, replace=False))
    return base + np.arange(count) * (cfg.min_gap - 1)


def envelope(onset_frames: Sequence[int], length: int, decay: float) -> np.ndarray:
    """Sum of geometric decays starting at each onset frame."""
    frames = np.arange(length)
    env = np.zeros(length, dtype=np.float64)
    for onset in onset_frames:
        active = frames >= onset
        env[active] += decay ** (frames[active] - onset)
    return env


def render_spectrogram(
    cfg: ToyConfig,
    class_id: int,
    onset_frames: Sequence[int],
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    Render x_star[f, tau] = A * envelope(tau) * band(f) plus the noise floor.

    Returns:
        np.ndarray: Shape (1, F', T'), float32.
    """
    env = envelope(onset_frames, cfg.time_frames, cfg.decay)
    spec = cfg.amplitude * np.outer(cfg.band(class_id), env)
    if cfg.noise_floor > 0 and rng is not None:
        spec = spec + cfg.noise_floor * np.abs(rng.standard_normal(spec.shape))
    return spec[None].astype(np.float32)


def temporal_cue(cfg: ToyConfig, onsets: np.ndarray, spec: np.ndarray) -> np.ndarray:
    """Onset cue vector c_o for the configured temporal feature."""
    if cfg.temporal_feature == TemporalFeature.ONSET:
        return onsets.astype(np.float32)
    energy = spec.reshape(-1, cfg.time_frames).sum(axis=0).astype(np.float64)
    peak = energy.max()
    energy = energy / peak if peak > 0 else np.zeros_like(energy)
    if cfg.temporal_feature == TemporalFeature.ENERGY:
        return energy.astype(np.float32)
    blocks = -(-cfg.time_frames // COARSE_BLOCK)
    padded = np.pad(energy, (0, blocks * COARSE_BLOCK - cfg.time_frames), mode="edge")
    coarse = padded.reshape(blocks, COARSE_BLOCK).mean(axis=1)
    return np.repeat(coarse, COARSE_BLOCK)[: cfg.time_frames].astype(np.float32)


def visual_features(
    cfg: ToyConfig, class_id: int, env: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """
    Frame-level visual features leading the audio by ``lead_lag`` frames.

    Visual frame j looks at audio frame j * visual_downsample + lead_lag (clipped);
    channels are the class one-hot scaled by the envelope, the envelope itself,
    its positive difference and two noise-only distractors.
    """
    peak = env.max()
    env = env / peak if peak > 0 else env
    frames = np.minimum(
        np.arange(cfg.visual_len) * cfg.visual_downsample + cfg.lead_lag, cfg.time_frames - 1
    )
    seen = env[frames]
    motion = np.maximum(np.diff(seen, prepend=0.0), 0.0)
    features = np.zeros((cfg.visual_len, cfg.visual_dim), dtype=np.float64)
    features[:, class_id] = seen
    features[:, cfg.classes] = seen
    features[:, cfg.classes + 1] = motion
    features += cfg.visual_noise * rng.standard_normal(features.shape)
    return features.astype(np.float32)


def toy_sample(cfg: ToyConfig, index: int) -> ToySample:
    """Generate clip ``index`` from its own substream of the dataset seed."""
    rng = RngStreams(cfg.seed).fresh("data", index)
    class_id = int(rng.integers(cfg.classes))
    onset_frames = draw_onsets(cfg, rng)
    onsets = np.zeros(cfg.time_frames, dtype=np.float32)
    onsets[onset_frames] = 1.0
    spec = render_spectrogram(cfg, class_id, onset_frames, rng)
    env = envelope(onset_frames, cfg.time_frames, cfg.decay)
    c_v = visual_features(cfg, class_id, env, rng)
    return ToySample(spec, onsets, class_id, c_v, temporal_cue(cfg, onsets, spec))


def gen_toy_dataset(cfg: ToyConfig, n: int, start: int = 0) -> ToyDataset:
    """
    Generate ``n`` clips.

    Args:
        cfg (ToyConfig): Dataset configuration.
        n (int): Number of clips, at least 1.
        start (int): Index of the first clip; disjoint ranges give disjoint clips.

    Raises:
        DataError: If ``n`` < 1.
    """
    if n < 1:
        raise DataError("invalid_sample_count", {"n": n})
    logger.debug("Generating %d toy clips from index %d (seed %d)", n, start, cfg.seed)
    samples = [toy_sample(cfg, start + i) for i in range(n)]
    return ToyDataset.from_samples(
        samples, {"kind": "onset_toy", "seed": cfg.seed, "start": start}
    )


def _coefficient_arrays(
    schedule: InterpolantSchedule, t: Union[float, np.ndarray]
) -> Tuple[np.ndarray, ...]:
    values = schedule.coefficients(torch.as_tensor(np.atleast_1d(t), dtype=torch.float64))
    return tuple(v.numpy() for v in values)


class GaussianOracle:
    """
    Exact velocity field for data x_star ~ N(mean, cov).

    Conditioning x_t = alpha x_star + sigma eps on x_t is a Gaussian computation;
    with S = alpha^2 cov + sigma^2 I,
        E[x_star | x] = mean + alpha cov S^-1 (x - alpha mean)
        E[eps | x]    = sigma S^-1 (x - alpha mean)
    and the velocity is d alpha E[x_star | x] + d sigma E[eps | x]. The second form
    equals (x - alpha E[x_star | x]) / sigma but stays finite at sigma = 0.
    ``cov`` is diagonalized once so per-sample times cost no extra solves.
    """

    def __init__(
        self,
        mean: np.ndarray,
        cov: np.ndarray,
        schedule: Optional[InterpolantSchedule] = None,
    ):
        self.mean = np.asarray(mean, dtype=np.float64).reshape(-1)
        self.cov = np.asarray(cov, dtype=np.float64)
        dim = self.mean.shape[0]
        if self.cov.shape != (dim, dim):
            raise DataError("invalid_toy_config", {"field": "cov", "value": self.cov.shape})
        self.schedule = schedule or InterpolantSchedule.linear()
        self.cov = 0.5 * (self.cov + self.cov.T)
        eigvals, self._basis = linalg.eigh(self.cov)
        self._eigvals = np.clip(eigvals, 0.0, None)

    @classmethod
    def standard(
        cls, dim: int, schedule: Optional[InterpolantSchedule] = None
    ) -> "GaussianOracle":
        return cls(np.zeros(dim), np.eye(dim), schedule)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def posterior(
        self, x: np.ndarray, t: Union[float, np.ndarray]
    ) -> Tuple[np.ndarray, np.ndarray]:
        """(E[x_star | x_t], E[eps | x_t]) for rows of ``x`` (n, d)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        alpha, sigma, _, _ = _coefficient_arrays(self.schedule, t)
        alpha = alpha[:, None]
        sigma = sigma[:, None]
        # S = V diag(alpha^2 lambda + sigma^2) V^T
        spectrum = alpha**2 * self._eigvals[None, :] + sigma**2
        if np.any(spectrum <= 1e-14 * max(1.0, float(self._eigvals.max(initial=1.0)))):
            raise DataError("singular_covariance", {"t": t})
        centred = (x - alpha * self.mean[None, :]) @ self._basis
        solved = centred / spectrum
        eps_hat = sigma * (solved @ self._basis.T)
        x_hat = self.mean[None, :] + alpha * ((solved * self._eigvals[None, :]) @ self._basis.T)
        return x_hat, eps_hat

    def velocity(self, x: np.ndarray, t: Union[float, np.ndarray]) -> np.ndarray:
        """Oracle velocity v*(x, t); ``t`` is a scalar or one value per row."""
        _, _, dalpha, dsigma = _coefficient_arrays(self.schedule, t)
        x_hat, eps_hat = self.posterior(x, t)
        return dalpha[:, None] * x_hat + dsigma[:, None] * eps_hat

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n rows from N(mean, cov)."""
        if n < 1:
            raise DataError("invalid_sample_count", {"n": n})
        factor = self._basis * np.sqrt(self._eigvals)[None, :]
        return self.mean[None, :] + rng.standard_normal((n, self.dim)) @ factor.T

    def cfm_residual(self, n: int, rng: np.random.Generator) -> float:
        """Monte-Carlo flow matching loss of the oracle itself, the irreducible floor."""
        x_star = self.sample(n, rng)
        eps = rng.standard_normal(x_star.shape)
        t = rng.uniform(0.0, 1.0, size=n)
        alpha, sigma, dalpha, dsigma = _coefficient_arrays(self.schedule, t)
        x_t = alpha[:, None] * x_star + sigma[:, None] * eps
        target = dalpha[:, None] * x_star + dsigma[:, None] * eps
        return float(np.mean((self.velocity(x_t, t) - target) ** 2))

    def velocity_fn(self, dtype: torch.dtype = torch.float64) -> Callable[[Tensor, float], Tensor]:
        """Adapter giving the oracle the sampler's (x, t) -> v tensor interface."""

        def fn(x: Tensor, t: float) -> Tensor:
            flat = x.detach().cpu().numpy().reshape(x.shape[0], -1)
            v = self.velocity(flat, float(t))
            return torch.from_numpy(v.reshape(x.shape)).to(dtype)

        return fn

    def dataset(
        self,
        n: int,
        rng: np.random.Generator,
        latent_shape: Tuple[int, ...],
        visual_shape: Tuple[int, int],
        onset_len: int,
    ) -> ToyDataset:
        """Gaussian draws laid out as latents, paired with all-zero conditions."""
        if int(np.prod(latent_shape)) != self.dim:
            raise DataError(
                "invalid_toy_config", {"field": "latent_shape", "value": latent_shape}
            )
        x_star = self.sample(n, rng).reshape((n,) + tuple(latent_shape)).astype(np.float32)
        zeros_t = np.zeros((n, onset_len), dtype=np.float32)
        return ToyDataset(
            x_star,
            zeros_t.copy(),
            np.full(n, -1, dtype=np.int64),
            np.zeros((n,) + tuple(visual_shape), dtype=np.float32),
            zeros_t,
            {"kind": "gaussian"},
        )


def gaussian_oracle_velocity(
    x: np.ndarray,
    t: Union[float, np.ndarray],
    mean: np.ndarray,
    cov: np.ndarray,
    schedule: Optional[InterpolantSchedule] = None,
) -> np.ndarray:
    """Functional form of ``GaussianOracle(mean, cov, schedule).velocity(x, t)``."""
    return GaussianOracle(mean, cov, schedule).velocity(x, t)

"""
Representation Alignment - teacher targets, projection head and matchers

Aligns the transformer's hidden state at the injection block with features of
a frozen teacher encoder. The alignment term is a cosine distance between the
projected hidden state and the teacher features, reconciled in sequence length
by one of three matchers and scaled by the interpolant's timestep weight.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, Dict, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

from flowalign.enum_utils import LabeledEnum
from flowalign.errors import AlignmentError
from flowalign.interpolant import InterpolantSchedule
from flowalign.utils import RngStreams

if TYPE_CHECKING:
    from flowalign.network import ModelConfig

NORM_FLOOR = 1e-8


class MatcherKind(LabeledEnum):
    """Sequence-length matcher between hidden tokens and teacher rows."""

    POOL = ("pool", "Global pooling")
    INTERP = ("interp", "Interpolation")
    CONV = ("conv", "Convolution projection")


class TeacherKind(LabeledEnum):
    """Teacher encoder family."""

    FROZEN_RANDOM = ("frozen_random", "Frozen random features")
    SPECTRAL = ("spectral", "Fixed spectral features")


class TeacherEncoder:
    """
    Frozen, deterministic feature extractor producing alignment targets.

    The clean latent is cut into ``out_len`` contiguous time chunks and each
    chunk becomes one unit-norm row of width ``out_dim``, so row j depends only
    on the frames of chunk j. The fixed arrays are derived from ``seed`` and are
    not torch parameters, so no optimizer can reach them.

    Kinds:
        - FROZEN_RANDOM: the flattened chunk goes through a random linear map and
          ``tanh``, then a second random map mixes it to ``out_dim``.
        - SPECTRAL: the chunk is summarized by its band profile (mean over
          frames), its frame energies (mean over channels and bins) and the
          positive energy rise between consecutive frames of the chunk; a random
          map mixes the summary to ``out_dim``.

    Args:
        latent_shape (Tuple[int, int, int]): (C, F', T') of the inputs.
        out_len (int): Output rows L_a; must divide T'.
        out_dim (int): Output width D_a.
        seed (int): Seed of the fixed arrays.
        hidden_dim (Optional[int]): Width after the random chunk map (default ``out_dim``).
        kind (TeacherKind): Feature family.
    """

    def __init__(
        self,
        latent_shape: Tuple[int, int, int],
        out_len: int,
        out_dim: int,
        seed: int,
        hidden_dim: Optional[int] = None,
        kind: TeacherKind = TeacherKind.FROZEN_RANDOM,
    ):
        channels, freq, frames = latent_shape
        if out_len < 1 or frames % out_len:
            raise AlignmentError("teacher_chunking", {"frames": frames, "chunks": out_len})
        self.kind = TeacherKind.from_code(kind)
        self.latent_shape = (channels, freq, frames)
        self.out_len = out_len
        self.out_dim = out_dim
        self.seed = seed
        self.chunk_frames = frames // out_len

        rng = RngStreams(seed).fresh("teacher")
        self._arrays: Dict[str, Tensor] = {}
        if self.kind == TeacherKind.SPECTRAL:
            summary_dim = channels * freq + 2 * self.chunk_frames
            self._arrays["mix"] = _random_map(rng, summary_dim, out_dim)
        else:
            chunk_dim = channels * freq * self.chunk_frames
            hidden = hidden_dim or out_dim
            self._arrays["chunk_map"] = _random_map(rng, chunk_dim, hidden)
            self._arrays["mix"] = _random_map(rng, hidden, out_dim)

    @classmethod
    def from_config(
        cls,
        config: "ModelConfig",
        seed: int,
        kind: TeacherKind = TeacherKind.FROZEN_RANDOM,
    ) -> "TeacherEncoder":
        return cls(config.latent_shape, config.teacher_len, config.teacher_dim, seed, kind=kind)

    def encode(self, x_star: Tensor) -> Tensor:
        """
        Compute teacher features y_a.

        Args:
            x_star (Tensor): Clean latents (B, C, F', T') or a single (C, F', T').

        Returns:
            Tensor: Unit-norm rows, shape (B, L_a, D_a) (or (L_a, D_a) for one sample),
            in the dtype of ``x_star``.

        Raises:
            AlignmentError: If the input shape differs from ``latent_shape``.
        """
        single = x_star.dim() == 3
        x = x_star.unsqueeze(0) if single else x_star
        if x.dim() != 4 or tuple(x.shape[1:]) != self.latent_shape:
            raise AlignmentError(
                "shape_mismatch",
                {"left": tuple(x_star.shape), "right": self.latent_shape},
            )
        batch, channels, freq, _ = x.shape
        # (B, L_a, C, F', frames per chunk)
        chunks = (
            x.detach()
            .to(torch.float64)
            .reshape(batch, channels, freq, self.out_len, self.chunk_frames)
            .permute(0, 3, 1, 2, 4)
        )
        if self.kind == TeacherKind.SPECTRAL:
            features = self._spectral_summary(chunks) @ self._arrays["mix"]
        else:
            flat = chunks.reshape(batch, self.out_len, -1)
            features = torch.tanh(flat @ self._arrays["chunk_map"]) @ self._arrays["mix"]
        features = F.normalize(features, dim=-1, eps=NORM_FLOOR).to(x_star.dtype)
        return features[0] if single else features

    @staticmethod
    def _spectral_summary(chunks: Tensor) -> Tensor:
        batch, rows = chunks.shape[:2]
        bands = chunks.mean(dim=-1).reshape(batch, rows, -1)
        energy = chunks.mean(dim=(2, 3))
        rise = F.pad(torch.relu(energy[..., 1:] - energy[..., :-1]), (1, 0))
        return torch.cat([bands, energy, rise], dim=-1)

    def arrays(self) -> Dict[str, np.ndarray]:
        """Copies of the fixed arrays."""
        return {name: array.numpy().copy() for name, array in self._arrays.items()}


def _random_map(rng: np.random.Generator, rows: int, cols: int) -> Tensor:
    return torch.from_numpy(rng.standard_normal((rows, cols)) / math.sqrt(rows))


class ProjectionHead(nn.Module):
    """Three-layer per-token MLP from D_z to D_a."""

    def __init__(self, in_dim: int, hidden_dim: int, out_dim: int):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(in_dim, hidden_dim),
            nn.SiLU(),
            nn.Linear(hidden_dim, hidden_dim),
            nn.SiLU(),
            nn.Linear(hidden_dim, out_dim),
        )

    def forward(self, tap: Tensor) -> Tensor:
        return self.mlp(tap)


def match_sequence(
    kind: MatcherKind,
    proj: Tensor,
    y_a: Tensor,
    conv: Optional[nn.Conv1d] = None,
) -> Tuple[Tensor, Tensor]:
    """
    Reconcile L_z projected tokens with L_a teacher rows.

    Args:
        kind (MatcherKind): Matching strategy.
            - POOL: both sides averaged over the sequence axis (K = 1).
            - INTERP: projected rows linearly resampled from L_z to L_a, endpoints
              mapped to endpoints (K = L_a).
            - CONV: kernel-size-1 convolution treating the L_z tokens as input
              channels, i.e. a learned (L_a, L_z) mixing matrix plus bias (K = L_a).
        proj (Tensor): Projected tokens (B, L_z, D_a).
        y_a (Tensor): Teacher features (B, L_a, D_a).
        conv (Optional[nn.Conv1d]): The learned convolution, required for CONV.

    Returns:
        Tuple[Tensor, Tensor]: (s, y), both (B, K, D_a).

    Raises:
        AlignmentError: For an unknown kind or a missing convolution.
    """
    if kind == MatcherKind.POOL:
        return proj.mean(dim=-2, keepdim=True), y_a.mean(dim=-2, keepdim=True)
    if kind == MatcherKind.INTERP:
        target_len = y_a.shape[-2]
        resampled = F.interpolate(
            proj.transpose(-1, -2), size=target_len, mode="linear", align_corners=True
        )
        return resampled.transpose(-1, -2), y_a
    if kind == MatcherKind.CONV and conv is not None:
        return conv(proj), y_a
    raise AlignmentError("unknown_matcher", {"kind": kind})


def cosine_distance(s: Tensor, y: Tensor) -> Tensor:
    """Per-sample 1 - mean row cosine, rows normalized with a norm floor."""
    s_unit = F.normalize(s, dim=-1, eps=NORM_FLOOR)
    y_unit = F.normalize(y, dim=-1, eps=NORM_FLOOR)
    return 1.0 - (s_unit * y_unit).sum(dim=-1).mean(dim=-1)


def alignment_loss(
    s: Tensor,
    y: Tensor,
    t: Union[float, Tensor],
    schedule: InterpolantSchedule,
    weighted: bool = True,
) -> Tensor:
    """
    Timestep-weighted cosine alignment loss, averaged over the batch.

    Each sample contributes w(t_i) * (1 - mean_k cos(s_ik, y_ik)); with
    ``weighted=False`` every weight is 1.
    """
    per_sample = cosine_distance(s, y)
    if not weighted:
        return per_sample.mean()
    weight = schedule.tra_weight(t)
    if isinstance(weight, Tensor):
        weight = weight.to(per_sample.dtype)
    return (weight * per_sample).mean()


class AlignmentHead(nn.Module):
    """
    Trainable side of the alignment: projection head plus sequence matcher.

    Args:
        config (ModelConfig): Supplies D_z, D_a, L_z, L_a, the projector width
            and the matcher kind.
    """

    def __init__(self, config: "ModelConfig"):
        super().__init__()
        self.kind = config.matcher
        self.projector = ProjectionHead(
            config.hidden_dim, config.projector_dim, config.teacher_dim
        )
        self.conv: Optional[nn.Conv1d] = None
        if self.kind == MatcherKind.CONV:
            self.conv = nn.Conv1d(config.num_tokens, config.teacher_len, kernel_size=1)

    def forward(self, tap: Tensor, y_a: Tensor) -> Tuple[Tensor, Tensor]:
        """Project the tap and match it against the teacher rows."""
        return match_sequence(self.kind, self.projector(tap), y_a, self.conv)

    def loss(
        self,
        tap: Tensor,
        y_a: Tensor,
        t: Union[float, Tensor],
        schedule: InterpolantSchedule,
        weighted: bool = True,
    ) -> Tensor:
        s, y = self(tap, y_a)
        return alignment_loss(s, y, t, schedule, weighted)

    @torch.no_grad()
    def matched_cosine(self, tap: Tensor, y_a: Tensor) -> float:
        """Mean cosine similarity between matched rows; 1 is perfect alignment."""
        s, y = self(tap, y_a)
        return float(1.0 - cosine_distance(s, y).mean())

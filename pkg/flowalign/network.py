"""
Flow Transformer - dual-stream modulated transformer

Patchifies spectrogram latents into audio tokens, projects frame-level visual
features into visual tokens, conditions every block on the sum of a timestep
embedding and an onset embedding through per-stream AdaLN modulation, and lets
both streams interact through joint attention. The audio stream output after
the injection block is exposed as the alignment tap.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from scipy import stats
from torch import Tensor

from flowalign.alignment import MatcherKind
from flowalign.enum_utils import LabeledEnum
from flowalign.errors import ConfigError, NetworkError

logger = logging.getLogger(__name__)

INIT_STD = 0.02


class Stream(LabeledEnum):
    """Token stream of the joint transformer."""

    AUDIO = ("audio", "Audio")
    VISUAL = ("visual", "Visual")


@dataclass
class ModelConfig:
    """
    Architecture hyperparameters.

    Attributes:
        depth (int): Number of transformer blocks N.
        hidden_dim (int): Token width D_z.
        num_heads (int): Attention heads; 0 selects hidden_dim // 16 (at least 1).
        patch_size (int): Patch size p along both grid axes.
        latent_channels (int): Channels C of the spectrogram latent.
        freq_bins (int): Frequency bins F'; must be divisible by patch_size.
        time_frames (int): Time frames T'; must be divisible by patch_size.
        visual_len (int): Visual feature frames L_v.
        visual_dim (int): Visual feature width D_v.
        onset_len (int): Onset cue length L_o.
        teacher_len (int): Teacher feature rows L_a.
        teacher_dim (int): Teacher feature width D_a.
        injection_depth (int): Block (1-based) whose audio output feeds the alignment head.
        matcher (MatcherKind): Sequence-length matcher between L_z and L_a.
        lambda_align (float): Weight of the alignment loss in the total loss.
        cfg_drop_prob (float): Probability of dropping both conditions during training.
        mlp_ratio (float): Width multiplier of the block MLPs.
        projector_dim (int): Hidden width of the alignment projection head.
        frequency_embedding_dim (int): Width of the sinusoidal timestep features.
    """

    depth: int = 4
    hidden_dim: int = 64
    num_heads: int = 0
    patch_size: int = 2
    latent_channels: int = 1
    freq_bins: int = 16
    time_frames: int = 64
    visual_len: int = 16
    visual_dim: int = 8
    onset_len: int = 64
    teacher_len: int = 16
    teacher_dim: int = 32

    # Alignment
    injection_depth: int = 4
    matcher: MatcherKind = MatcherKind.CONV
    lambda_align: float = 0.5

    # Guidance
    cfg_drop_prob: float = 0.1

    mlp_ratio: float = 4.0
    projector_dim: int = 128
    frequency_embedding_dim: int = 256

    def __post_init__(self) -> None:
        self.matcher = MatcherKind.from_code(self.matcher)
        for name in (
            "depth",
            "hidden_dim",
            "patch_size",
            "latent_channels",
            "freq_bins",
            "time_frames",
            "visual_dim",
            "onset_len",
            "teacher_len",
            "teacher_dim",
            "projector_dim",
            "frequency_embedding_dim",
        ):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(
                    "invalid_config_value",
                    {"field": name, "value": value, "reason": "must be a positive integer"},
                )
        if self.visual_len < 0:
            raise ConfigError(
                "invalid_config_value",
                {"field": "visual_len", "value": self.visual_len, "reason": "must be >= 0"},
            )
        for size in (self.freq_bins, self.time_frames):
            if size % self.patch_size:
                raise NetworkError(
                    "indivisible_grid", {"size": size, "patch": self.patch_size}
                )
        if self.time_frames % self.teacher_len:
            raise ConfigError(
                "invalid_config_value",
                {
                    "field": "teacher_len",
                    "value": self.teacher_len,
                    "reason": f"must divide time_frames={self.time_frames}",
                },
            )
        if self.hidden_dim % self.heads:
            raise NetworkError(
                "head_divisibility", {"hidden": self.hidden_dim, "heads": self.heads}
            )
        if not (1 <= self.injection_depth <= self.depth):
            raise NetworkError(
                "invalid_injection_depth",
                {"depth": self.injection_depth, "max_depth": self.depth},
            )
        if not (0.0 <= self.cfg_drop_prob <= 1.0):
            raise ConfigError(
                "invalid_config_value",
                {
                    "field": "cfg_drop_prob",
                    "value": self.cfg_drop_prob,
                    "reason": "must lie in [0, 1]",
                },
            )
        if self.lambda_align < 0 or self.mlp_ratio <= 0:
            raise ConfigError(
                "invalid_config_value",
                {
                    "field": "lambda_align/mlp_ratio",
                    "value": (self.lambda_align, self.mlp_ratio),
                    "reason": "lambda_align must be >= 0 and mlp_ratio > 0",
                },
            )

    @classmethod
    def large(cls) -> "ModelConfig":
        """Full-size configuration: 12 blocks of width 768 over 8-channel latents."""
        return cls(
            depth=12,
            hidden_dim=768,
            latent_channels=8,
            freq_bins=16,
            time_frames=64,
            teacher_dim=768,
            projector_dim=2048,
        )

    @property
    def heads(self) -> int:
        if self.num_heads > 0:
            return self.num_heads
        return max(1, self.hidden_dim // 16)

    @property
    def grid(self) -> Tuple[int, int]:
        return self.freq_bins // self.patch_size, self.time_frames // self.patch_size

    @property
    def num_tokens(self) -> int:
        grid_f, grid_t = self.grid
        return grid_f * grid_t

    @property
    def patch_dim(self) -> int:
        return self.latent_channels * self.patch_size * self.patch_size

    @property
    def latent_shape(self) -> Tuple[int, int, int]:
        return self.latent_channels, self.freq_bins, self.time_frames


@dataclass
class ConditionInputs:
    """
    Per-sample conditions, batched along the first axis.

    Attributes:
        c_v (Tensor): Visual features of shape (B, L_v, D_v).
        c_o (Tensor): Onset cues of shape (B, L_o), values in [0, 1].
        dropped (Tensor): Boolean (B,) flags; dropped rows have all-zero c_v and c_o.
    """

    c_v: Tensor
    c_o: Tensor
    dropped: Tensor = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.c_v.dim() != 3 or self.c_o.dim() != 2:
            raise NetworkError(
                "input_shape_mismatch",
                {
                    "name": "conditions",
                    "expected": "(B, L_v, D_v) and (B, L_o)",
                    "actual": (tuple(self.c_v.shape), tuple(self.c_o.shape)),
                },
            )
        if self.c_v.shape[0] != self.c_o.shape[0]:
            raise NetworkError(
                "input_shape_mismatch",
                {
                    "name": "c_o",
                    "expected": self.c_v.shape[0],
                    "actual": self.c_o.shape[0],
                },
            )
        if self.dropped is None:
            self.dropped = torch.zeros(self.c_v.shape[0], dtype=torch.bool)
            return
        if bool(self.dropped.any()):
            residue = self.c_v.detach().flatten(1).ne(0).any(dim=1)
            residue |= self.c_o.detach().ne(0).any(dim=1)
            bad = residue & self.dropped
            if bool(bad.any()):
                raise NetworkError(
                    "dropped_not_zero", {"rows": bad.nonzero().flatten().tolist()}
                )

    @classmethod
    def zeros(
        cls, batch: int, config: ModelConfig, dtype: torch.dtype = torch.float32
    ) -> "ConditionInputs":
        """All-zero conditions marked as dropped; the unconditional branch."""
        return cls(
            torch.zeros(batch, config.visual_len, config.visual_dim, dtype=dtype),
            torch.zeros(batch, config.onset_len, dtype=dtype),
            torch.ones(batch, dtype=torch.bool),
        )

    def __len__(self) -> int:
        return self.c_v.shape[0]

    def unconditional(self) -> "ConditionInputs":
        return ConditionInputs(
            torch.zeros_like(self.c_v),
            torch.zeros_like(self.c_o),
            torch.ones_like(self.dropped),
        )

    def to(self, dtype: torch.dtype) -> "ConditionInputs":
        return ConditionInputs(self.c_v.to(dtype), self.c_o.to(dtype), self.dropped)

    def index(self, rows: Union[slice, Tensor]) -> "ConditionInputs":
        return ConditionInputs(self.c_v[rows], self.c_o[rows], self.dropped[rows])


def patchify(latent: Tensor, patch_size: int) -> Tensor:
    """
    Cut a latent into non-overlapping p x p patches.

    Args:
        latent (Tensor): Shape (..., C, F', T').
        patch_size (int): Patch size p.

    Returns:
        Tensor: Shape (..., (F'/p)(T'/p), C p p); patches are ordered frequency-major,
        then time, and each patch is flattened channel-major.

    Raises:
        NetworkError: If F' or T' is not divisible by p.
    """
    *lead, channels, freq, time = latent.shape
    p = patch_size
    for size in (freq, time):
        if size % p:
            raise NetworkError("indivisible_grid", {"size": size, "patch": p})
    n = len(lead)
    x = latent.reshape(*lead, channels, freq // p, p, time // p, p)
    x = x.permute(*range(n), n + 1, n + 3, n, n + 2, n + 4)
    return x.reshape(*lead, (freq // p) * (time // p), channels * p * p)


def unpatchify(tokens: Tensor, config: ModelConfig) -> Tensor:
    """
    Exact layout inverse of ``patchify``.

    Args:
        tokens (Tensor): Shape (..., L_z, C p p).
        config (ModelConfig): Supplies C, F', T' and p.

    Returns:
        Tensor: Shape (..., C, F', T').
    """
    *lead, count, width = tokens.shape
    grid_f, grid_t = config.grid
    p = config.patch_size
    if count != grid_f * grid_t:
        raise NetworkError(
            "token_count_mismatch", {"expected": grid_f * grid_t, "actual": count}
        )
    if width != config.patch_dim:
        raise NetworkError(
            "input_shape_mismatch",
            {"name": "tokens", "expected": config.patch_dim, "actual": width},
        )
    n = len(lead)
    x = tokens.reshape(*lead, grid_f, grid_t, config.latent_channels, p, p)
    x = x.permute(*range(n), n + 2, n, n + 3, n + 1, n + 4)
    return x.reshape(*lead, *config.latent_shape)


def sincos_1d(length: int, dim: int) -> Tensor:
    """Fixed 1-D sinusoidal position table of shape (length, dim)."""
    half = dim // 2
    positions = torch.arange(length, dtype=torch.float64)
    omega = 1.0 / (10000.0 ** (torch.arange(half, dtype=torch.float64) / max(half, 1)))
    angles = positions[:, None] * omega[None, :]
    table = torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)
    if dim % 2:
        table = F.pad(table, (0, 1))
    return table.float()


def sincos_2d(grid_f: int, grid_t: int, dim: int) -> Tensor:
    """Fixed 2-D table over a (grid_f, grid_t) grid, flattened frequency-major."""
    dim_f = dim // 2
    table_f = sincos_1d(grid_f, dim_f)
    table_t = sincos_1d(grid_t, dim - dim_f)
    rows = table_f[:, None, :].expand(grid_f, grid_t, dim_f)
    cols = table_t[None, :, :].expand(grid_f, grid_t, dim - dim_f)
    return torch.cat([rows, cols], dim=-1).reshape(grid_f * grid_t, dim)


def timestep_features(t: Tensor, dim: int, max_period: float = 10000.0) -> Tensor:
    """Sinusoidal features of 1000 t at log-spaced frequencies, shape (B, dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(max_period) * torch.arange(half, dtype=torch.float64) / half
    ).to(t.dtype)
    args = (t * 1000.0)[:, None] * freqs[None, :]
    features = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        features = F.pad(features, (0, 1))
    return features


def layer_norm(x: Tensor) -> Tensor:
    """Layer normalization over the last axis without a learned affine."""
    return F.layer_norm(x, (x.shape[-1],), eps=1e-6)


def adaln(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """
    Adaptive layer normalization: gamma * LN(x) + beta.

    Args:
        x (Tensor): Tokens of shape (B, L, D).
        gamma (Tensor): Scale of shape (B, D), broadcast over L.
        beta (Tensor): Shift of shape (B, D), broadcast over L.
    """
    return gamma.unsqueeze(-2) * layer_norm(x) + beta.unsqueeze(-2)


class TimestepEmbedder(nn.Module):
    """Sinusoidal timestep features followed by a two-layer SiLU MLP."""

    def __init__(self, dim: int, frequency_dim: int = 256):
        super().__init__()
        self.frequency_dim = frequency_dim
        self.mlp = nn.Sequential(
            nn.Linear(frequency_dim, dim), nn.SiLU(), nn.Linear(dim, dim)
        )

    def forward(self, t: Tensor) -> Tensor:
        return self.mlp(timestep_features(t, self.frequency_dim))


class OnsetEmbedder(nn.Module):
    """Two-layer MLP mapping the onset cue vector to the block width."""

    def __init__(self, onset_len: int, dim: int):
        super().__init__()
        self.mlp = nn.Sequential(nn.Linear(onset_len, dim), nn.SiLU(), nn.Linear(dim, dim))

    def forward(self, c_o: Tensor) -> Tensor:
        return self.mlp(c_o)

    def zero_init(self) -> None:
        nn.init.zeros_(self.mlp[-1].weight)
        nn.init.zeros_(self.mlp[-1].bias)


class Modulation(nn.Module):
    """
    SiLU + linear map from the condition vector to ``chunks`` modulation vectors.

    Chunks listed in ``gate_chunks`` start at exactly zero.
    """

    def __init__(self, dim: int, chunks: int, gate_chunks: Iterable[int] = ()):
        super().__init__()
        self.chunks = chunks
        self.gate_chunks = tuple(gate_chunks)
        self.proj = nn.Linear(dim, chunks * dim)

    def forward(self, cond: Tensor) -> Tuple[Tensor, ...]:
        return self.proj(F.silu(cond)).chunk(self.chunks, dim=-1)

    def zero_init(self) -> None:
        dim = self.proj.in_features
        with torch.no_grad():
            for index in self.gate_chunks:
                self.proj.weight[index * dim : (index + 1) * dim].zero_()
                self.proj.bias[index * dim : (index + 1) * dim].zero_()


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(F.gelu(self.fc1(x), approximate="tanh"))


class JointAttention(nn.Module):
    """
    Multi-head attention over the concatenation of two token streams.

    Each stream has its own Q/K/V and output projections; queries, keys and values
    are concatenated along the sequence axis (audio first), attended jointly and
    split back at the audio length.
    """

    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads:
            raise NetworkError("head_divisibility", {"hidden": dim, "heads": heads})
        self.heads = heads
        self.head_dim = dim // heads
        self.audio_qkv = nn.Linear(dim, 3 * dim)
        self.visual_qkv = nn.Linear(dim, 3 * dim)
        self.audio_out = nn.Linear(dim, dim)
        self.visual_out = nn.Linear(dim, dim)

    def forward(
        self, audio: Tensor, visual: Tensor, return_weights: bool = False
    ) -> Union[Tuple[Tensor, Tensor], Tuple[Tensor, Tensor, Tensor]]:
        """
        Args:
            audio (Tensor): Audio tokens (B, L_z, D).
            visual (Tensor): Visual tokens (B, L_v, D); L_v may be 0.
            return_weights (bool): Also return the (B, H, L, L) softmax matrix.

        Returns:
            Tuple: (audio_out, visual_out) or (audio_out, visual_out, weights).
        """
        batch, audio_len, dim = audio.shape
        qkv = torch.cat([self.audio_qkv(audio), self.visual_qkv(visual)], dim=-2)
        total = qkv.shape[-2]
        qkv = qkv.reshape(batch, total, 3, self.heads, self.head_dim)
        q, k, v = qkv.permute(2, 0, 3, 1, 4).unbind(0)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        weights = torch.softmax(scores, dim=-1)
        mixed = (weights @ v).transpose(1, 2).reshape(batch, total, dim)
        audio_out = self.audio_out(mixed[:, :audio_len])
        visual_out = self.visual_out(mixed[:, audio_len:])
        if return_weights:
            return audio_out, visual_out, weights
        return audio_out, visual_out


class MMDiTBlock(nn.Module):
    """
    Dual-stream block with per-stream adaLN-zero modulation.

    Per stream: x <- x + gate_1 * Attn(adaln_1(x)), then x <- x + gate_2 * MLP(adaln_2(x)),
    with (beta_1, gamma_1, gate_1, beta_2, gamma_2, gate_2) produced from the condition.
    """

    def __init__(self, dim: int, heads: int, mlp_ratio: float = 4.0):
        super().__init__()
        hidden = int(dim * mlp_ratio)
        self.audio_mod = Modulation(dim, 6, gate_chunks=(2, 5))
        self.visual_mod = Modulation(dim, 6, gate_chunks=(2, 5))
        self.attn = JointAttention(dim, heads)
        self.audio_mlp = Mlp(dim, hidden)
        self.visual_mlp = Mlp(dim, hidden)

    def forward(self, audio: Tensor, visual: Tensor, cond: Tensor) -> Tuple[Tensor, Tensor]:
        a_shift1, a_scale1, a_gate1, a_shift2, a_scale2, a_gate2 = self.audio_mod(cond)
        v_shift1, v_scale1, v_gate1, v_shift2, v_scale2, v_gate2 = self.visual_mod(cond)

        a_attn, v_attn = self.attn(
            adaln(audio, 1 + a_scale1, a_shift1), adaln(visual, 1 + v_scale1, v_shift1)
        )
        audio = audio + a_gate1.unsqueeze(-2) * a_attn
        visual = visual + v_gate1.unsqueeze(-2) * v_attn

        audio = audio + a_gate2.unsqueeze(-2) * self.audio_mlp(
            adaln(audio, 1 + a_scale2, a_shift2)
        )
        visual = visual + v_gate2.unsqueeze(-2) * self.visual_mlp(
            adaln(visual, 1 + v_scale2, v_shift2)
        )
        return audio, visual


class FinalLayer(nn.Module):
    """Modulated normalization followed by a zero-initialized patch projection."""

    def __init__(self, dim: int, patch_dim: int):
        super().__init__()
        self.modulation = Modulation(dim, 2)
        self.linear = nn.Linear(dim, patch_dim)

    def forward(self, x: Tensor, cond: Tensor) -> Tensor:
        shift, scale = self.modulation(cond)
        return self.linear(adaln(x, 1 + scale, shift))

    def zero_init(self) -> None:
        nn.init.zeros_(self.linear.weight)
        nn.init.zeros_(self.linear.bias)


class FlowTransformer(nn.Module):
    """
    Velocity network v(x_t, t, c_v, c_o).

    Args:
        config (ModelConfig): Architecture hyperparameters.
        use_oac (bool): Whether onset cues are embedded and added to the timestep
            embedding. When False the onset cue is ignored.
    """

    def __init__(self, config: ModelConfig, use_oac: bool = True):
        super().__init__()
        self.config = config
        self.use_oac = use_oac
        dim = config.hidden_dim

        self.audio_embed = nn.Linear(config.patch_dim, dim)
        self.visual_embed = nn.Linear(config.visual_dim, dim)
        self.time_embed = TimestepEmbedder(dim, config.frequency_embedding_dim)
        self.onset_embed = OnsetEmbedder(config.onset_len, dim) if use_oac else None
        self.blocks = nn.ModuleList(
            [MMDiTBlock(dim, config.heads, config.mlp_ratio) for _ in range(config.depth)]
        )
        self.final = FinalLayer(dim, config.patch_dim)

        self.register_buffer("audio_pos", sincos_2d(*config.grid, dim), persistent=False)
        self.register_buffer(
            "visual_pos", sincos_1d(config.visual_len, dim), persistent=False
        )

    def condition(self, t: Tensor, c_o: Tensor) -> Tensor:
        """Block-conditioning vector: timestep embedding plus onset embedding."""
        cond = self.time_embed(t)
        if self.onset_embed is not None:
            cond = cond + self.onset_embed(c_o)
        return cond

    def forward(
        self, x_t: Tensor, t: Union[float, Tensor], cond: ConditionInputs
    ) -> Tuple[Tensor, Tensor]:
        """
        Predict the velocity field.

        Args:
            x_t (Tensor): Noisy latents of shape (B, C, F', T').
            t (float | Tensor): Time, scalar or shape (B,).
            cond (ConditionInputs): Visual features and onset cues.

        Returns:
            Tuple[Tensor, Tensor]: Velocity (B, C, F', T') and the audio hidden state
            (B, L_z, D_z) after block ``injection_depth``.

        Raises:
            NetworkError: If input shapes disagree with the configuration.
        """
        config = self.config
        expected = tuple(config.latent_shape)
        if x_t.dim() != 4 or tuple(x_t.shape[1:]) != expected:
            raise NetworkError(
                "input_shape_mismatch",
                {"name": "x_t", "expected": expected, "actual": tuple(x_t.shape)},
            )
        batch = x_t.shape[0]
        if tuple(cond.c_v.shape[1:]) != (config.visual_len, config.visual_dim):
            raise NetworkError(
                "input_shape_mismatch",
                {
                    "name": "c_v",
                    "expected": (config.visual_len, config.visual_dim),
                    "actual": tuple(cond.c_v.shape),
                },
            )
        if cond.c_o.shape[1] != config.onset_len or len(cond) != batch:
            raise NetworkError(
                "input_shape_mismatch",
                {
                    "name": "c_o",
                    "expected": (batch, config.onset_len),
                    "actual": tuple(cond.c_o.shape),
                },
            )
        if not isinstance(t, Tensor):
            t = torch.full((batch,), float(t), dtype=x_t.dtype)
        elif t.dim() == 0:
            t = t.expand(batch)
        t = t.to(x_t.dtype)

        audio = self.audio_embed(patchify(x_t, config.patch_size)) + self.audio_pos.to(
            x_t.dtype
        )
        visual = self.visual_embed(cond.c_v.to(x_t.dtype)) + self.visual_pos.to(x_t.dtype)
        c = self.condition(t, cond.c_o.to(x_t.dtype))

        tap = audio
        for depth, block in enumerate(self.blocks, start=1):
            audio, visual = block(audio, visual, c)
            if depth == config.injection_depth:
                tap = audio

        velocity = unpatchify(self.final(audio, c), config)
        return velocity, tap


def truncated_normal(
    rng: np.random.Generator, shape: Tuple[int, ...], std: float = INIT_STD
) -> np.ndarray:
    """Normal draws truncated to two standard deviations."""
    return stats.truncnorm.rvs(-2.0, 2.0, scale=std, size=shape, random_state=rng)


def init_parameters(module: nn.Module, rng: np.random.Generator, std: float = INIT_STD) -> None:
    """
    Initialize every linear and convolution weight from ``rng``.

    Weights get truncated-normal draws, biases zeros; modules exposing
    ``zero_init`` (gates, the final projection, the onset output layer) are then
    reset to exact zeros. The traversal order is the module registration order,
    so equal seeds give bit-identical parameters.
    """
    with torch.no_grad():
        for sub in module.modules():
            if isinstance(sub, (nn.Linear, nn.Conv1d)):
                values = truncated_normal(rng, tuple(sub.weight.shape), std)
                sub.weight.copy_(torch.from_numpy(values).to(sub.weight.dtype))
                if sub.bias is not None:
                    sub.bias.zero_()
        for sub in module.modules():
            zero_init = getattr(sub, "zero_init", None)
            if callable(zero_init):
                zero_init()


def parameter_store(module: nn.Module) -> Dict[str, np.ndarray]:
    """Ordered name -> float32 array view of all trainable parameters."""
    return {
        name: param.detach().cpu().numpy().astype(np.float32, copy=True)
        for name, param in module.named_parameters()
    }


def count_parameters(module: nn.Module) -> int:
    return sum(param.numel() for param in module.parameters())


def describe(config: ModelConfig, module: Optional[nn.Module] = None) -> str:
    """One-line architecture summary for logs."""
    text = (
        f"depth={config.depth} hidden={config.hidden_dim} heads={config.heads} "
        f"tokens={config.num_tokens} inject={config.injection_depth} "
        f"matcher={config.matcher.code}"
    )
    if module is not None:
        text += f" params={count_parameters(module)}"
    return text

"""
Samplers - ODE Euler and SDE Euler-Maruyama with classifier-free guidance

Integrates from t_start = 1 (pure noise) down to t_end on a uniform grid. The
stochastic sampler converts the guided velocity into a score through the
interpolant and adds diffusion w_t = sigma_t; its last step is deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import Tensor

from flowalign.enum_utils import LabeledEnum
from flowalign.errors import InterpolantError, SamplerError
from flowalign.interpolant import InterpolantSchedule
from flowalign.network import ConditionInputs
from flowalign.utils import standard_normal

logger = logging.getLogger(__name__)

VelocityFn = Callable[[Tensor, float], Tensor]

MAX_T_END = 0.05
SIGMA_FLOOR = 1e-12


class SamplerKind(LabeledEnum):
    ODE = ("ode", "ODE Euler")
    SDE = ("sde", "SDE Euler-Maruyama")


class DiffusionKind(LabeledEnum):
    SIGMA_T = ("sigma_t", "w_t = sigma_t")


@dataclass
class SamplerSpec:
    """
    Sampler settings.

    Attributes:
        kind (SamplerKind): ODE Euler or SDE Euler-Maruyama.
        steps (int): Number of integration steps.
        cfg_scale (float): Guidance scale s; 1 disables guidance, 0 is unconditional.
        t_start (float): Initial time, where x is standard normal.
        t_end (float): Final time in (0, 0.05]; keeps the score away from sigma = 0.
        diffusion (DiffusionKind): Diffusion coefficient of the SDE.
    """

    kind: SamplerKind = SamplerKind.SDE
    steps: int = 25
    cfg_scale: float = 8.0
    t_start: float = 1.0
    t_end: float = 0.004
    diffusion: DiffusionKind = DiffusionKind.SIGMA_T

    def __post_init__(self) -> None:
        self.kind = SamplerKind.from_code(self.kind)
        self.diffusion = DiffusionKind.from_code(self.diffusion)
        if not isinstance(self.steps, int) or self.steps < 1:
            raise SamplerError("invalid_sampler_spec", {"field": "steps", "value": self.steps})
        if self.cfg_scale < 0:
            raise SamplerError(
                "invalid_sampler_spec", {"field": "cfg_scale", "value": self.cfg_scale}
            )
        if not (0.0 < self.t_end <= MAX_T_END):
            raise SamplerError("invalid_sampler_spec", {"field": "t_end", "value": self.t_end})
        if not (self.t_end < self.t_start <= 1.0):
            raise SamplerError(
                "invalid_sampler_spec", {"field": "t_start", "value": self.t_start}
            )

    def grid(self) -> np.ndarray:
        """Uniform time grid from t_start down to t_end, ``steps + 1`` points."""
        return np.linspace(self.t_start, self.t_end, self.steps + 1)


def cfg_velocity(v_cond: Tensor, v_uncond: Tensor, s: float) -> Tensor:
    """
    Guided velocity v_uncond + s (v_cond - v_uncond).

    s = 1 and s = 0 return the corresponding input unchanged so the identities hold
    bit-exactly.
    """
    if tuple(v_cond.shape) != tuple(v_uncond.shape):
        raise InterpolantError(
            "shape_mismatch", {"left": tuple(v_cond.shape), "right": tuple(v_uncond.shape)}
        )
    if s == 1.0:
        return v_cond
    if s == 0.0:
        return v_uncond
    return v_uncond + s * (v_cond - v_uncond)


def guided_velocity(
    model: torch.nn.Module, cond: ConditionInputs, scale: float
) -> VelocityFn:
    """
    Wrap a network as a guided velocity function.

    The unconditional branch uses all-zero conditions, mirroring training
    dropout. Only the branches the scale needs are evaluated.
    """
    uncond = cond.unconditional()

    def fn(x: Tensor, t: float) -> Tensor:
        if scale == 0.0:
            return model(x, t, uncond.to(x.dtype))[0]
        v_cond = model(x, t, cond.to(x.dtype))[0]
        if scale == 1.0:
            return v_cond
        v_uncond = model(x, t, uncond.to(x.dtype))[0]
        return cfg_velocity(v_cond, v_uncond, scale)

    return fn


def sample(
    velocity_fn: VelocityFn,
    shape: Sequence[int],
    spec: SamplerSpec,
    schedule: InterpolantSchedule,
    rng: np.random.Generator,
    dtype: torch.dtype = torch.float32,
    x_init: Optional[Tensor] = None,
) -> Tensor:
    """
    Integrate from noise to data.

    Args:
        velocity_fn (VelocityFn): (x, t) -> v, already guided.
        shape (Sequence[int]): Output shape (B, C, F', T').
        spec (SamplerSpec): Sampler settings.
        schedule (InterpolantSchedule): Interpolant for the score conversion.
        rng (np.random.Generator): Source of the initial draw and SDE noise.
        dtype (torch.dtype): Working precision.
        x_init (Optional[Tensor]): Initial state; drawn from ``rng`` when omitted.

    Returns:
        Tensor: Samples at t_end.

    Raises:
        SamplerError: If sigma_t underflows on a stochastic step.
    """
    x = standard_normal(rng, shape, dtype) if x_init is None else x_init.to(dtype)
    times = spec.grid()
    stochastic = spec.kind == SamplerKind.SDE
    last = len(times) - 2

    with torch.no_grad():
        for index, (t, t_next) in enumerate(zip(times[:-1], times[1:])):
            t, dt = float(t), float(t_next - t)
            v = velocity_fn(x, t)
            if not stochastic or index == last:
                x = x + v * dt
                continue
            _, sigma, _, _ = schedule.coefficients(t)
            if sigma <= SIGMA_FLOOR:
                raise SamplerError("sigma_underflow", {"t": t})
            score = schedule.velocity_to_score(x, v, t)
            diffusion = sigma
            drift = v - 0.5 * diffusion * score
            noise = standard_normal(rng, x.shape, dtype)
            x = x + drift * dt + float(np.sqrt(diffusion * abs(dt))) * noise
    return x


def sample_model(
    model: torch.nn.Module,
    cond: ConditionInputs,
    spec: SamplerSpec,
    schedule: InterpolantSchedule,
    rng: np.random.Generator,
    latent_shape: Tuple[int, int, int],
    dtype: torch.dtype = torch.float32,
) -> Tensor:
    """Generate one latent per condition row with a trained network."""
    model.eval()
    logger.debug(
        "Sampling %d latents: %s, %d steps, cfg %.3g",
        len(cond),
        spec.kind.code,
        spec.steps,
        spec.cfg_scale,
    )
    fn = guided_velocity(model, cond, spec.cfg_scale)
    return sample(fn, (len(cond),) + tuple(latent_shape), spec, schedule, rng, dtype)

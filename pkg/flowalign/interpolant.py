"""
Interpolant Schedules - InterpolantSchedule implementation

Provides the (alpha_t, sigma_t) noise schedules, the perturbation and velocity
target of flow matching, the velocity/noise/score conversions used by the
samplers, and the timestep weight of representation alignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple, Union

import torch
from torch import Tensor

from flowalign.enum_utils import LabeledEnum
from flowalign.errors import InterpolantError

TimeLike = Union[float, Tensor]


class ScheduleKind(LabeledEnum):
    """Interpolant family."""

    LINEAR = ("linear", "Linear")
    VP = ("vp", "Variance preserving")


@dataclass(frozen=True)
class InterpolantSchedule:
    """
    Continuous-time interpolant x_t = alpha_t * x_star + sigma_t * eps.

    Attributes:
        kind (ScheduleKind): Interpolant family.
            - LINEAR: alpha_t = 1 - t, sigma_t = t.
            - VP: alpha_t = cos(pi t / 2), sigma_t = sin(pi t / 2).
        eps_div (float): Guard added to sigma_t in the alignment weight ratio.
        ratio_clamp (Tuple[float, float]): Bounds applied to alpha_t / (sigma_t + eps_div)
            before the logarithm.
    """

    kind: ScheduleKind = ScheduleKind.LINEAR
    eps_div: float = 1e-5
    ratio_clamp: Tuple[float, float] = (1e-12, 1e12)

    def __post_init__(self) -> None:
        if not isinstance(self.kind, ScheduleKind):
            object.__setattr__(self, "kind", ScheduleKind.from_code(self.kind))
        if not self.eps_div > 0:
            raise InterpolantError(
                "invalid_schedule", {"field": "eps_div", "value": self.eps_div}
            )
        lower, upper = self.ratio_clamp
        if not (0 < lower < upper):
            raise InterpolantError(
                "invalid_schedule", {"field": "ratio_clamp", "value": self.ratio_clamp}
            )
        object.__setattr__(self, "ratio_clamp", (float(lower), float(upper)))

    @classmethod
    def linear(cls, eps_div: float = 1e-5) -> "InterpolantSchedule":
        return cls(ScheduleKind.LINEAR, eps_div)

    @classmethod
    def vp(cls, eps_div: float = 1e-5) -> "InterpolantSchedule":
        return cls(ScheduleKind.VP, eps_div)

    def coefficients(
        self, t: TimeLike
    ) -> Tuple[TimeLike, TimeLike, TimeLike, TimeLike]:
        """
        Evaluate (alpha_t, sigma_t, d alpha_t / dt, d sigma_t / dt).

        Args:
            t (float | Tensor): Time in [0, 1]; tensors are evaluated elementwise.

        Returns:
            Tuple: Four values of the same kind as ``t`` (floats for a float input).

        Raises:
            InterpolantError: If any t lies outside [0, 1].
        """
        if isinstance(t, Tensor):
            _check_time_tensor(t)
            if self.kind == ScheduleKind.LINEAR:
                return 1 - t, t.clone(), -torch.ones_like(t), torch.ones_like(t)
            half_pi = math.pi / 2
            return (
                torch.cos(half_pi * t),
                torch.sin(half_pi * t),
                -half_pi * torch.sin(half_pi * t),
                half_pi * torch.cos(half_pi * t),
            )

        t = float(t)
        if not (0.0 <= t <= 1.0):
            raise InterpolantError("time_out_of_range", {"t": t})
        if self.kind == ScheduleKind.LINEAR:
            return 1.0 - t, t, -1.0, 1.0
        half_pi = math.pi / 2
        return (
            math.cos(half_pi * t),
            math.sin(half_pi * t),
            -half_pi * math.sin(half_pi * t),
            half_pi * math.cos(half_pi * t),
        )

    def perturb(self, x_star: Tensor, eps: Tensor, t: TimeLike) -> Tensor:
        """
        Perturb clean data toward noise: x_t = alpha_t * x_star + sigma_t * eps.

        ``t`` may be a scalar or a per-sample tensor of shape (B,) broadcast over
        the trailing dimensions of ``x_star``.
        """
        _check_same_shape(x_star, eps)
        alpha, sigma, _, _ = self.coefficients(t)
        return _bcast(alpha, x_star) * x_star + _bcast(sigma, x_star) * eps

    def velocity_target(self, x_star: Tensor, eps: Tensor, t: TimeLike) -> Tensor:
        """Flow matching regression target d alpha_t * x_star + d sigma_t * eps."""
        _check_same_shape(x_star, eps)
        _, _, dalpha, dsigma = self.coefficients(t)
        return _bcast(dalpha, x_star) * x_star + _bcast(dsigma, x_star) * eps

    def tra_weight(self, t: TimeLike) -> TimeLike:
        """
        Timestep weight of the alignment loss.

        w(t) = sigmoid(log(clamp(alpha_t / (sigma_t + eps_div)))). The clamp keeps
        the logarithm finite at t = 1 where alpha_t vanishes.
        """
        alpha, sigma, _, _ = self.coefficients(t)
        lower, upper = self.ratio_clamp
        if isinstance(alpha, Tensor):
            ratio = torch.clamp(alpha / (sigma + self.eps_div), lower, upper)
            return torch.sigmoid(torch.log(ratio))
        ratio = min(max(alpha / (sigma + self.eps_div), lower), upper)
        log_ratio = math.log(ratio)
        # numerically stable sigmoid
        if log_ratio >= 0:
            return 1.0 / (1.0 + math.exp(-log_ratio))
        z = math.exp(log_ratio)
        return z / (1.0 + z)

    def velocity_to_noise(self, x: Tensor, v: Tensor, t: TimeLike) -> Tensor:
        """
        Recover the noise estimate implied by a velocity prediction.

        eps_hat = (alpha_t * v - d alpha_t * x) / (alpha_t * d sigma_t - d alpha_t * sigma_t)

        Raises:
            InterpolantError: If the denominator vanishes.
        """
        _check_same_shape(x, v)
        alpha, sigma, dalpha, dsigma = self.coefficients(t)
        denom = alpha * dsigma - dalpha * sigma
        smallest = float(torch.min(torch.abs(denom))) if isinstance(denom, Tensor) else abs(denom)
        if smallest < 1e-12:
            raise InterpolantError("degenerate_denominator", {"t": _describe(t)})
        return (_bcast(alpha, x) * v - _bcast(dalpha, x) * x) / _bcast(denom, x)

    def velocity_to_score(self, x: Tensor, v: Tensor, t: TimeLike) -> Tensor:
        """Score estimate -eps_hat / sigma_t; requires sigma_t > 0."""
        _, sigma, _, _ = self.coefficients(t)
        smallest = float(torch.min(sigma)) if isinstance(sigma, Tensor) else sigma
        if smallest <= 0:
            raise InterpolantError("degenerate_denominator", {"t": _describe(t)})
        return -self.velocity_to_noise(x, v, t) / _bcast(sigma, x)


def _check_time_tensor(t: Tensor) -> None:
    if t.numel() == 0:
        return
    low = float(torch.min(t))
    high = float(torch.max(t))
    if low < 0.0 or high > 1.0 or math.isnan(low) or math.isnan(high):
        raise InterpolantError("time_out_of_range", {"t": low if low < 0.0 else high})


def _check_same_shape(left: Tensor, right: Tensor) -> None:
    if tuple(left.shape) != tuple(right.shape):
        raise InterpolantError(
            "shape_mismatch", {"left": tuple(left.shape), "right": tuple(right.shape)}
        )


def _bcast(value: TimeLike, like: Tensor) -> TimeLike:
    """Reshape a per-sample (B,) tensor to broadcast against ``like``."""
    if not isinstance(value, Tensor) or value.dim() == 0:
        return value
    value = value.to(like.dtype)
    return value.reshape(value.shape + (1,) * (like.dim() - value.dim()))


def _describe(t: TimeLike) -> str:
    if isinstance(t, Tensor):
        return str(t.tolist())
    return str(t)

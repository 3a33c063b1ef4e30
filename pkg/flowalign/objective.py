"""
Training Objective - flow matching loss, alignment term and the training step

Bundles the velocity network with the trainable alignment head, draws training
batches, applies classifier-free guidance dropout and performs one AdamW update
on cfm + lambda_align * align.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

from flowalign.alignment import AlignmentHead, TeacherEncoder
from flowalign.errors import InterpolantError, ObjectiveError
from flowalign.interpolant import InterpolantSchedule
from flowalign.network import (
    ConditionInputs,
    FlowTransformer,
    ModelConfig,
    init_parameters,
)
from flowalign.utils import RngStreams, standard_normal, to_tensor

logger = logging.getLogger(__name__)


class FlowAlignModel(nn.Module):
    """
    Everything the optimizer updates: the velocity transformer plus, when
    alignment is enabled, the projection head and its sequence matcher.

    Args:
        config (ModelConfig): Architecture hyperparameters.
        use_oac (bool): Enable onset-aware conditioning.
        use_tra (bool): Attach the alignment head.
    """

    def __init__(self, config: ModelConfig, use_oac: bool = True, use_tra: bool = True):
        super().__init__()
        self.config = config
        self.transformer = FlowTransformer(config, use_oac=use_oac)
        self.align_head: Optional[AlignmentHead] = AlignmentHead(config) if use_tra else None

    @classmethod
    def build(
        cls, config: ModelConfig, seed: int, use_oac: bool = True, use_tra: bool = True
    ) -> "FlowAlignModel":
        """Construct and initialize from the ``init`` stream of ``seed``."""
        model = cls(config, use_oac=use_oac, use_tra=use_tra)
        init_parameters(model, RngStreams(seed).fresh("init"))
        return model

    @property
    def use_oac(self) -> bool:
        return self.transformer.use_oac

    @property
    def use_tra(self) -> bool:
        return self.align_head is not None

    def forward(
        self, x_t: Tensor, t: Union[float, Tensor], cond: ConditionInputs
    ) -> Tuple[Tensor, Tensor]:
        return self.transformer(x_t, t, cond)

    def trainable_names(self) -> List[str]:
        return [name for name, param in self.named_parameters() if param.requires_grad]


@dataclass
class TrainBatch:
    """
    One minibatch of the flow matching expectation.

    Attributes:
        x_star (Tensor): Clean latents (B, C, F', T').
        cond (ConditionInputs): Conditions after dropout.
        t (Tensor): Per-sample times (B,) in [0, 1].
        eps (Tensor): Standard normal noise, same shape as ``x_star``.
    """

    x_star: Tensor
    cond: ConditionInputs
    t: Tensor
    eps: Tensor

    def __post_init__(self) -> None:
        if self.x_star.shape[0] < 1:
            raise ObjectiveError("empty_batch")
        if tuple(self.eps.shape) != tuple(self.x_star.shape):
            raise InterpolantError(
                "shape_mismatch",
                {"left": tuple(self.x_star.shape), "right": tuple(self.eps.shape)},
            )
        batch = self.x_star.shape[0]
        if tuple(self.t.shape) != (batch,) or len(self.cond) != batch:
            raise InterpolantError(
                "shape_mismatch",
                {"left": (tuple(self.t.shape), len(self.cond)), "right": (batch,)},
            )
        low, high = float(self.t.min()), float(self.t.max())
        if low < 0.0 or high > 1.0:
            raise InterpolantError("time_out_of_range", {"t": low if low < 0.0 else high})

    def __len__(self) -> int:
        return self.x_star.shape[0]

    @classmethod
    def draw(
        cls,
        x_star: Tensor,
        cond: ConditionInputs,
        rng: np.random.Generator,
    ) -> "TrainBatch":
        """Draw t ~ U[0, 1] per sample, then the noise, from ``rng``."""
        batch = x_star.shape[0]
        if batch < 1:
            raise ObjectiveError("empty_batch")
        t = to_tensor(rng.uniform(0.0, 1.0, size=batch), x_star.dtype)
        eps = standard_normal(rng, x_star.shape, x_star.dtype)
        return cls(x_star, cond, t, eps)

    def to(self, dtype: torch.dtype) -> "TrainBatch":
        return TrainBatch(
            self.x_star.to(dtype), self.cond.to(dtype), self.t.to(dtype), self.eps.to(dtype)
        )


def cfm_loss(v_pred: Tensor, u_target: Tensor) -> Tensor:
    """Mean squared error over the batch and every element."""
    if tuple(v_pred.shape) != tuple(u_target.shape):
        raise InterpolantError(
            "shape_mismatch", {"left": tuple(v_pred.shape), "right": tuple(u_target.shape)}
        )
    return F.mse_loss(v_pred, u_target)


def cfg_dropout(
    cond: ConditionInputs, prob: float, rng: np.random.Generator
) -> ConditionInputs:
    """
    Jointly zero both conditions of each row with probability ``prob``.

    One uniform draw per row decides; a dropped row has all-zero c_v and c_o and
    ``dropped`` set. Rows already dropped stay dropped.

    Raises:
        ObjectiveError: If ``prob`` is outside [0, 1].
    """
    if not (0.0 <= prob <= 1.0):
        raise ObjectiveError("invalid_probability", {"prob": prob})
    mask = torch.from_numpy(rng.random(len(cond)) < prob)
    if not bool(mask.any()):
        return cond
    keep_v = (~mask).to(cond.c_v.dtype).reshape(-1, 1, 1)
    keep_o = (~mask).to(cond.c_o.dtype).reshape(-1, 1)
    return ConditionInputs(cond.c_v * keep_v, cond.c_o * keep_o, cond.dropped | mask)


def total_loss(
    model: FlowAlignModel,
    batch: TrainBatch,
    schedule: InterpolantSchedule,
    teacher: Optional[TeacherEncoder],
    lambda_align: Optional[float] = None,
    use_weighting: bool = True,
) -> Tuple[Tensor, Dict[str, Tensor]]:
    """
    Total loss cfm + lambda_align * align for one batch.

    Args:
        model (FlowAlignModel): Network and alignment head.
        batch (TrainBatch): Samples, conditions, times and noise.
        schedule (InterpolantSchedule): Interpolant.
        teacher (Optional[TeacherEncoder]): Alignment targets; ignored when the
            model has no alignment head.
        lambda_align (Optional[float]): Alignment weight; defaults to the model config.
        use_weighting (bool): Apply the timestep weight w(t) to the alignment term.

    Returns:
        Tuple[Tensor, Dict[str, Tensor]]: The scalar total and its parts
        ``cfm``, ``align`` and ``weight`` (batch mean of w(t)).
    """
    weight = lambda_align if lambda_align is not None else model.config.lambda_align
    x_t = schedule.perturb(batch.x_star, batch.eps, batch.t)
    u_target = schedule.velocity_target(batch.x_star, batch.eps, batch.t)
    v_pred, tap = model(x_t, batch.t, batch.cond)
    cfm = cfm_loss(v_pred, u_target)

    if model.align_head is not None and teacher is not None:
        y_a = teacher.encode(batch.x_star).to(tap.dtype)
        align = model.align_head.loss(tap, y_a, batch.t, schedule, weighted=use_weighting)
    else:
        align = torch.zeros((), dtype=cfm.dtype)

    total = cfm + weight * align
    w_mean = schedule.tra_weight(batch.t).mean().detach()
    return total, {"cfm": cfm.detach(), "align": align.detach(), "weight": w_mean}


def make_optimizer(
    model: nn.Module,
    lr: float = 1e-4,
    betas: Tuple[float, float] = (0.9, 0.999),
    weight_decay: float = 0.0,
) -> torch.optim.AdamW:
    return torch.optim.AdamW(
        [p for p in model.parameters() if p.requires_grad],
        lr=lr,
        betas=betas,
        weight_decay=weight_decay,
    )


def gradient_norm(model: nn.Module) -> float:
    norms = [p.grad.detach().norm() for p in model.parameters() if p.grad is not None]
    if not norms:
        return 0.0
    return float(torch.linalg.vector_norm(torch.stack(norms)))


def train_step(
    model: FlowAlignModel,
    optimizer: torch.optim.Optimizer,
    batch: TrainBatch,
    schedule: InterpolantSchedule,
    teacher: Optional[TeacherEncoder],
    lambda_align: Optional[float] = None,
    use_weighting: bool = True,
    grad_clip: Optional[float] = None,
) -> Dict[str, float]:
    """
    One optimizer update on the total loss.

    Returns:
        Dict[str, float]: ``total``, ``cfm``, ``align``, ``weight`` and ``grad_norm``
        (global norm before clipping).

    Raises:
        ObjectiveError: If any gradient is non-finite; parameters and optimizer
            state are left untouched.
    """
    model.train()
    optimizer.zero_grad(set_to_none=False)
    total, parts = total_loss(model, batch, schedule, teacher, lambda_align, use_weighting)
    total.backward()

    bad = [
        name
        for name, param in model.named_parameters()
        if param.grad is not None and not bool(torch.isfinite(param.grad).all())
    ]
    if bad:
        logger.error("Aborting step: %d parameters have non-finite gradients", len(bad))
        optimizer.zero_grad(set_to_none=False)
        raise ObjectiveError("non_finite_gradient", {"names": ", ".join(bad[:8])})

    grad_norm = gradient_norm(model)
    if grad_clip is not None and grad_clip > 0:
        torch.nn.utils.clip_grad_norm_(model.parameters(), grad_clip)
    optimizer.step()

    return {
        "total": float(total.detach()),
        "cfm": float(parts["cfm"]),
        "align": float(parts["align"]),
        "weight": float(parts["weight"]),
        "grad_norm": grad_norm,
    }

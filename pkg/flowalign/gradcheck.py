"""Finite-difference verification of the backward pass at 64-bit precision."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import torch
from torch import Tensor

from flowalign.alignment import TeacherEncoder
from flowalign.config import RunConfig
from flowalign.enum_utils import LabeledEnum
from flowalign.network import ConditionInputs
from flowalign.objective import FlowAlignModel, TrainBatch, total_loss
from flowalign.utils import RngStreams, standard_normal, to_tensor

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
RELATIVE_FLOOR = 1e-5
PARAM_STD = 0.1


class GradcheckTarget(LabeledEnum):
    TOTAL = ("total", "Total loss")
    VELOCITY_NORM = ("velocity_norm", "Squared velocity norm")


@dataclass
class GradcheckReport:
    """Outcome of a finite-difference sweep."""

    max_rel_error: float
    checked: int
    worst: str
    errors: List[Tuple[str, float]] = field(default_factory=list)

    def passed(self, tolerance: float = 1e-4) -> bool:
        return self.max_rel_error < tolerance


def relative_error(analytic: float, numeric: float, floor: float = RELATIVE_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _gradcheck_inputs(
    run: RunConfig, streams: RngStreams, batch_size: int
) -> Tuple[FlowAlignModel, TrainBatch, TeacherEncoder]:
    config = run.model
    model = FlowAlignModel.build(
        config, run.training.seed, use_oac=run.switches.use_oac, use_tra=run.switches.use_tra
    ).double()
    # Random parameters everywhere so zero-initialized gates do not hide paths.
    rng = streams.fresh("init", 1)
    with torch.no_grad():
        for param in model.parameters():
            param.copy_(standard_normal(rng, param.shape, torch.float64) * PARAM_STD)

    data_rng = streams.fresh("data", 1)
    x_star = standard_normal(data_rng, (batch_size,) + config.latent_shape, torch.float64)
    c_v = standard_normal(
        data_rng, (batch_size, config.visual_len, config.visual_dim), torch.float64
    )
    c_o = to_tensor(data_rng.random((batch_size, config.onset_len)), torch.float64)
    batch = TrainBatch.draw(x_star, ConditionInputs(c_v, c_o), streams.fresh("noise", 1))
    teacher = run.switches.teacher(config)
    return model, batch, teacher


def gradcheck(
    run: Optional[RunConfig] = None,
    num_params: int = 200,
    step: float = DEFAULT_STEP,
    target: GradcheckTarget = GradcheckTarget.TOTAL,
    batch_size: int = 2,
) -> GradcheckReport:
    """
    Compare backward-pass gradients with central differences.

    ``num_params`` scalar entries are drawn uniformly over all trainable
    parameters; each is perturbed by +-``step`` and the relative error is
    |a - n| / max(|a|, |n|, 1e-5).

    Args:
        run (Optional[RunConfig]): Configuration; defaults to ``RunConfig.tiny()``.
        num_params (int): Number of sampled scalar parameters.
        step (float): Finite-difference step.
        target (GradcheckTarget): TOTAL checks cfm + lambda * align; VELOCITY_NORM
            checks the squared norm of the predicted velocity.
        batch_size (int): Clips in the fixed batch.
    """
    run = run or RunConfig.tiny()
    target = GradcheckTarget.from_code(target)
    streams = RngStreams(run.training.seed)
    model, batch, teacher = _gradcheck_inputs(run, streams, batch_size)
    schedule = run.schedule

    def loss_fn() -> Tensor:
        if target == GradcheckTarget.VELOCITY_NORM:
            x_t = schedule.perturb(batch.x_star, batch.eps, batch.t)
            v_pred, _ = model(x_t, batch.t, batch.cond)
            return (v_pred**2).sum()
        loss, _ = total_loss(
            model, batch, schedule, teacher, use_weighting=run.switches.use_weighting
        )
        return loss

    model.zero_grad(set_to_none=True)
    loss_fn().backward()

    named = [(name, p) for name, p in model.named_parameters() if p.grad is not None]
    sizes = np.array([p.numel() for _, p in named], dtype=np.float64)
    picks = streams.fresh("eval", 1).choice(
        int(sizes.sum()), size=min(num_params, int(sizes.sum())), replace=False
    )
    bounds = np.cumsum(sizes).astype(np.int64)

    errors: List[Tuple[str, float]] = []
    with torch.no_grad():
        for flat in np.sort(picks):
            which = int(np.searchsorted(bounds, flat, side="right"))
            name, param = named[which]
            local = int(flat - (bounds[which - 1] if which else 0))
            view = param.view(-1)
            analytic = float(param.grad.view(-1)[local])
            original = float(view[local])
            view[local] = original + step
            plus = float(loss_fn())
            view[local] = original - step
            minus = float(loss_fn())
            view[local] = original
            numeric = (plus - minus) / (2 * step)
            errors.append((f"{name}[{local}]", relative_error(analytic, numeric)))

    worst_name, worst = max(errors, key=lambda item: item[1])
    logger.info(
        "Gradient check over %d parameters: max relative error %.3g at %s",
        len(errors),
        worst,
        worst_name,
    )
    return GradcheckReport(worst, len(errors), worst_name, errors)


def check_function(
    fn: Callable[[Tensor], Tensor], x: Tensor, step: float = DEFAULT_STEP
) -> float:
    """Max relative error of d fn(x).sum() / dx against central differences."""
    x = x.detach().to(torch.float64).clone().requires_grad_(True)
    fn(x).sum().backward()
    analytic = x.grad.detach().clone()
    worst = 0.0
    with torch.no_grad():
        flat = x.view(-1)
        for index in range(flat.numel()):
            original = float(flat[index])
            flat[index] = original + step
            plus = float(fn(x).sum())
            flat[index] = original - step
            minus = float(fn(x).sum())
            flat[index] = original
            numeric = (plus - minus) / (2 * step)
            worst = max(worst, relative_error(float(analytic.view(-1)[index]), numeric))
    return worst

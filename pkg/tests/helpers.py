"""Shared test helpers."""

from typing import Tuple

import numpy as np
import torch

from flowalign.alignment import TeacherEncoder
from flowalign.config import RunConfig
from flowalign.network import ConditionInputs, ModelConfig
from flowalign.objective import FlowAlignModel, TrainBatch
from flowalign.utils import RngStreams


def tiny_run(**sections) -> RunConfig:
    run = RunConfig.tiny()
    return run.replace(**sections) if sections else run


def tiny_model_config(**overrides) -> ModelConfig:
    return tiny_run(model=overrides).model if overrides else tiny_run().model


def random_conditions(
    config: ModelConfig, batch: int, seed: int = 0, dtype: torch.dtype = torch.float32
) -> ConditionInputs:
    gen = torch.Generator().manual_seed(seed)
    c_v = torch.randn(batch, config.visual_len, config.visual_dim, generator=gen, dtype=dtype)
    c_o = (torch.rand(batch, config.onset_len, generator=gen) < 0.2).to(dtype)
    return ConditionInputs(c_v, c_o)


def random_latents(
    config: ModelConfig, batch: int, seed: int = 0, dtype: torch.dtype = torch.float32
) -> torch.Tensor:
    gen = torch.Generator().manual_seed(seed)
    return torch.randn((batch,) + config.latent_shape, generator=gen, dtype=dtype)


def randomize_parameters(model: torch.nn.Module, std: float = 0.1, seed: int = 0) -> None:
    """Overwrite every parameter so zero-initialized gates stop masking paths."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for param in model.parameters():
            param.copy_(torch.randn(param.shape, generator=gen, dtype=param.dtype) * std)


def tiny_setup(
    batch: int = 4, seed: int = 0, **flags
) -> Tuple[RunConfig, FlowAlignModel, TrainBatch, TeacherEncoder]:
    run = tiny_run()
    model = FlowAlignModel.build(run.model, seed, **flags)
    x_star = random_latents(run.model, batch, seed)
    cond = random_conditions(run.model, batch, seed)
    train_batch = TrainBatch.draw(x_star, cond, RngStreams(seed).fresh("noise"))
    teacher = run.switches.teacher(run.model)
    return run, model, train_batch, teacher


def onset_vector(length: int, frames) -> np.ndarray:
    vector = np.zeros(length, dtype=np.int8)
    vector[list(frames)] = 1
    return vector

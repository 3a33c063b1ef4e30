"""
Training Loop - Trainer and ablation runner

Builds the datasets, model, teacher and optimizer described by a RunConfig,
runs the seeded training loop with metrics logging and checkpoints, evaluates
trained models on held-out clips and sweeps ablation matrices.
"""

from __future__ import annotations

import itertools
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from tqdm import tqdm

from flowalign.alignment import MatcherKind, TeacherEncoder, TeacherKind
from flowalign.checkpoint import save_checkpoint
from flowalign.config import DataKind, RunConfig
from flowalign.enum_utils import LabeledEnum
from flowalign.errors import ConfigError
from flowalign.evaluation import evaluate_samples
from flowalign.network import ConditionInputs, describe
from flowalign.objective import (
    FlowAlignModel,
    TrainBatch,
    cfg_dropout,
    make_optimizer,
    train_step,
)
from flowalign.sampler import sample_model
from flowalign.synthdata import GaussianOracle, TemporalFeature, ToyDataset, gen_toy_dataset
from flowalign.utils import RngStreams, format_metrics, to_tensor

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.log"
FINAL_CHECKPOINT = "final.ckpt"
LOSS_KEYS = ("total", "cfm", "align")
EVAL_KEYS = ("fd", "fd_raw", "onset_f1", "onset_ap", "onset_offset")


def checkpoint_name(step: int) -> str:
    return f"step_{step:07d}.ckpt"


def gaussian_oracle(run: RunConfig) -> GaussianOracle:
    dim = int(np.prod(run.model.latent_shape))
    return GaussianOracle.standard(dim, run.schedule)


def _gaussian_dataset(run: RunConfig, n: int, rng: np.random.Generator) -> ToyDataset:
    model = run.model
    return gaussian_oracle(run).dataset(
        n, rng, model.latent_shape, (model.visual_len, model.visual_dim), model.onset_len
    )


def training_dataset(run: RunConfig) -> ToyDataset:
    """Training clips: toy indices [0, dataset_size) or Gaussian draws."""
    size = run.training.dataset_size
    if run.data == DataKind.GAUSSIAN:
        return _gaussian_dataset(run, size, RngStreams(run.toy.seed).fresh("data"))
    return gen_toy_dataset(run.toy, size)


def evaluation_dataset(run: RunConfig) -> ToyDataset:
    """Held-out clips, disjoint from the training indices."""
    size = run.training.eval_size
    if run.data == DataKind.GAUSSIAN:
        return _gaussian_dataset(run, size, RngStreams(run.toy.seed).fresh("eval"))
    return gen_toy_dataset(run.toy, size, start=run.training.dataset_size)


def conditions(dataset: ToyDataset, dtype: torch.dtype = torch.float32) -> ConditionInputs:
    _, c_v, c_o = dataset.tensors(dtype=dtype)
    return ConditionInputs(c_v, c_o)


class Trainer:
    """
    Seeded training loop.

    Every step draws its batch rows, dropout mask, times and noise from fresh
    substreams keyed by the step index, so a run is a pure function of its
    configuration.

    Args:
        run (RunConfig): Run configuration.
        out_dir (Optional[Path]): Directory for ``metrics.log`` and checkpoints;
            nothing is written when omitted.
        progress (bool): Show a progress bar.
        dataset (Optional[ToyDataset]): Training clips; generated from the
            configuration when omitted.
    """

    def __init__(
        self,
        run: RunConfig,
        out_dir: Optional[Union[str, Path]] = None,
        progress: bool = False,
        dataset: Optional[ToyDataset] = None,
    ):
        self.run = run
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.progress = progress
        self.streams = RngStreams(run.training.seed)
        self.schedule = run.schedule
        switches = run.switches
        self.model = FlowAlignModel.build(
            run.model, run.training.seed, use_oac=switches.use_oac, use_tra=switches.use_tra
        )
        self.teacher = switches.teacher(run.model)
        training = run.training
        self.optimizer = make_optimizer(
            self.model, training.lr, training.betas, training.weight_decay
        )
        self.dataset = dataset if dataset is not None else training_dataset(run)
        self.step = 0
        self.history: List[Dict[str, float]] = []
        logger.info("Model: %s", describe(run.model, self.model))

    def batch(self, step: int) -> TrainBatch:
        """The batch of ``step``; identical for every call with the same step."""
        size = self.run.training.batch_size
        count = len(self.dataset)
        rows = self.streams.fresh("batch", step).choice(count, size=size, replace=size > count)
        x_star, c_v, c_o = self.dataset.tensors(rows)
        cond = cfg_dropout(
            ConditionInputs(c_v, c_o),
            self.run.model.cfg_drop_prob,
            self.streams.fresh("dropout", step),
        )
        return TrainBatch.draw(x_star, cond, self.streams.fresh("noise", step))

    def train_step(self) -> Dict[str, float]:
        metrics = train_step(
            self.model,
            self.optimizer,
            self.batch(self.step),
            self.schedule,
            self.teacher,
            use_weighting=self.run.switches.use_weighting,
            grad_clip=self.run.training.grad_clip,
        )
        self.step += 1
        self.history.append(metrics)
        return metrics

    def train(self, steps: Optional[int] = None) -> List[Dict[str, float]]:
        """
        Run ``steps`` optimizer steps (default: the configured count).

        Appends a metrics line every ``log_every`` steps, a checkpoint every
        ``ckpt_every`` steps and ``final.ckpt`` at the end when an output
        directory is set. A run starting at step 0 truncates ``metrics.log``;
        later calls continue it.
        """
        training = self.run.training
        steps = training.steps if steps is None else steps
        log_file = None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            self.run.save(self.out_dir / "config.json")
            mode = "w" if self.step == 0 else "a"
            log_file = open(self.out_dir / METRICS_FILE, mode, encoding="utf-8")
        try:
            bar = tqdm(range(steps), desc="train", disable=not self.progress, leave=False)
            for index in bar:
                metrics = self.train_step()
                if self.step % training.log_every == 0 or index == steps - 1:
                    line = format_metrics({"step": self.step, **metrics})
                    logger.debug(line)
                    if log_file is not None:
                        log_file.write(line + "\n")
                    bar.set_postfix(total=f"{metrics['total']:.4f}")
                if (
                    self.out_dir is not None
                    and training.ckpt_every
                    and self.step % training.ckpt_every == 0
                ):
                    save_checkpoint(
                        self.out_dir / checkpoint_name(self.step), self.model, self.run, self.step
                    )
        finally:
            if log_file is not None:
                log_file.close()
        if self.out_dir is not None:
            save_checkpoint(self.out_dir / FINAL_CHECKPOINT, self.model, self.run, self.step)
        if self.history:
            logger.info("Finished %d steps: %s", self.step, format_metrics(self.history[-1]))
        return self.history

    def final_losses(self, window: int = 10) -> Dict[str, float]:
        """Loss parts averaged over the last ``window`` steps."""
        recent = self.history[-window:]
        if not recent:
            return {key: float("nan") for key in LOSS_KEYS}
        return {key: float(np.mean([m[key] for m in recent])) for key in LOSS_KEYS}

    def evaluate(self, reference: Optional[ToyDataset] = None) -> Dict[str, float]:
        return evaluate_model(self.model, self.run, self.teacher, reference)


def generate(
    model: FlowAlignModel,
    run: RunConfig,
    cond: ConditionInputs,
    seed_index: int = 0,
) -> np.ndarray:
    """Sample one latent per condition row with the configured sampler."""
    rng = RngStreams(run.training.seed).fresh("sampler", seed_index)
    samples = sample_model(model, cond, run.sampler, run.schedule, rng, run.model.latent_shape)
    return samples.numpy()


def alignment_cosine(
    model: FlowAlignModel,
    teacher: TeacherEncoder,
    dataset: ToyDataset,
    run: RunConfig,
) -> float:
    """Mean matched cosine between projected taps and teacher rows at random t."""
    if model.align_head is None:
        return float("nan")
    rng = RngStreams(run.training.seed).fresh("eval", 0)
    x_star, c_v, c_o = dataset.tensors()
    batch = TrainBatch.draw(x_star, ConditionInputs(c_v, c_o), rng)
    x_t = run.schedule.perturb(batch.x_star, batch.eps, batch.t)
    model.eval()
    with torch.no_grad():
        _, tap = model(x_t, batch.t, batch.cond)
    return model.align_head.matched_cosine(tap, teacher.encode(x_star))


def oracle_velocity_error(
    model: FlowAlignModel, run: RunConfig, count: int = 1024
) -> Dict[str, float]:
    """
    Mean squared gap between the network and the Gaussian oracle velocity on
    held-out interpolant draws, next to the oracle's own flow matching residual.
    """
    oracle = gaussian_oracle(run)
    rng = RngStreams(run.training.seed).fresh("eval", 1)
    x_star = oracle.sample(count, rng)
    eps = rng.standard_normal(x_star.shape)
    t = rng.uniform(0.0, 1.0, size=count)
    x_t = run.schedule.perturb(
        to_tensor(x_star, torch.float64), to_tensor(eps, torch.float64), to_tensor(t, torch.float64)
    ).numpy()
    target = oracle.velocity(x_t, t)
    latent = (count,) + tuple(run.model.latent_shape)
    cond = ConditionInputs.zeros(count, run.model)
    model.eval()
    with torch.no_grad():
        v_pred, _ = model(to_tensor(x_t.reshape(latent)), to_tensor(t), cond)
    gap = float(np.mean((v_pred.numpy().reshape(count, -1) - target) ** 2))
    return {
        "oracle_velocity_mse": gap,
        "oracle_cfm_residual": oracle.cfm_residual(count, rng),
    }


def metric_teacher(run: RunConfig) -> TeacherEncoder:
    """Frozen random teacher behind the FD features, whichever teacher the run aligns to."""
    return TeacherEncoder.from_config(run.model, run.switches.teacher_seed)


def evaluate_model(
    model: FlowAlignModel,
    run: RunConfig,
    teacher: Optional[TeacherEncoder] = None,
    reference: Optional[ToyDataset] = None,
) -> Dict[str, float]:
    """Sample from the reference conditions and score against the reference clips."""
    reference = reference if reference is not None else evaluation_dataset(run)
    teacher = teacher or run.switches.teacher(run.model)
    scorer = teacher if teacher.kind == TeacherKind.FROZEN_RANDOM else metric_teacher(run)
    generated = generate(model, run, conditions(reference))
    metrics = evaluate_samples(
        generated,
        reference.x_star,
        reference.onsets,
        scorer,
        tol=run.training.onset_tolerance,
    )
    if model.align_head is not None:
        metrics["align_cosine"] = alignment_cosine(model, teacher, reference, run)
    if run.data == DataKind.GAUSSIAN:
        metrics.update(oracle_velocity_error(model, run))
    return metrics


class AblationAxis(LabeledEnum):
    """Axes of the ablation matrix."""

    OAC = ("oac", "OAC")
    TRA = ("tra", "TRA")
    WEIGHTING = ("weighting", "Weighting")
    MATCHER = ("matcher", "Matcher")
    DEPTH = ("depth", "Depth")
    TEMPORAL = ("temporal", "Temporal")
    TEACHER = ("teacher", "Teacher")


Override = Dict[str, Dict[str, Any]]


def axis_values(axis: AblationAxis, run: RunConfig) -> List[Tuple[str, Override]]:
    """(label, config override) pairs of one axis."""
    if axis == AblationAxis.OAC:
        return [("on", {"switches": {"use_oac": True}}), ("off", {"switches": {"use_oac": False}})]
    if axis == AblationAxis.TRA:
        return [("on", {"switches": {"use_tra": True}}), ("off", {"switches": {"use_tra": False}})]
    if axis == AblationAxis.WEIGHTING:
        return [
            ("on", {"switches": {"use_weighting": True}}),
            ("off", {"switches": {"use_weighting": False}}),
        ]
    if axis == AblationAxis.MATCHER:
        return [(kind.code, {"model": {"matcher": kind.code}}) for kind in MatcherKind]
    if axis == AblationAxis.DEPTH:
        return [
            (str(depth), {"model": {"injection_depth": depth}})
            for depth in range(1, run.model.depth + 1)
        ]
    if axis == AblationAxis.TEACHER:
        return [(kind.code, {"switches": {"teacher_kind": kind.code}}) for kind in TeacherKind]
    return [
        (feature.code, {"toy": {"temporal_feature": feature.code}})
        for feature in TemporalFeature
    ]


def parse_axes(text: Union[str, Sequence[str]]) -> List[AblationAxis]:
    names = text.split(",") if isinstance(text, str) else list(text)
    axes = [AblationAxis.from_code(name.strip()) for name in names if name.strip()]
    if not axes or len(set(axes)) != len(axes):
        raise ConfigError(
            "invalid_config_value",
            {"field": "axes", "value": text, "reason": "need distinct axes"},
        )
    return axes


def ablation_cells(
    run: RunConfig, axes: Sequence[AblationAxis]
) -> List[Tuple[Dict[str, str], RunConfig]]:
    """Cartesian product of the axes, in axis order with the first axis slowest."""
    cells = []
    for combo in itertools.product(*(axis_values(axis, run) for axis in axes)):
        merged: Override = {}
        labels = {}
        for axis, (label, override) in zip(axes, combo):
            labels[axis.code] = label
            for section, values in override.items():
                merged.setdefault(section, {}).update(values)
        cells.append((labels, run.replace(**merged)))
    return cells


def run_ablation(
    run: RunConfig,
    axes: Sequence[AblationAxis],
    out_dir: Optional[Union[str, Path]] = None,
    progress: bool = False,
) -> List[Dict[str, Any]]:
    """
    Train and evaluate every cell with the same seed.

    Returns:
        List[Dict[str, Any]]: One row per cell: axis labels, final losses and
        held-out metrics.
    """
    rows = []
    cells = ablation_cells(run, axes)
    for index, (labels, cell) in enumerate(cells):
        logger.info("Ablation cell %d/%d: %s", index + 1, len(cells), labels)
        cell_dir = None
        if out_dir is not None:
            cell_dir = Path(out_dir) / "_".join(f"{k}-{v}" for k, v in labels.items())
        trainer = Trainer(cell, cell_dir, progress=progress)
        trainer.train()
        row: Dict[str, Any] = dict(labels)
        row.update(trainer.final_losses())
        row.update(trainer.evaluate())
        rows.append(row)
    return rows


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.4f}"
    return str(value)


def format_table(rows: Sequence[Dict[str, Any]], axes: Sequence[AblationAxis]) -> str:
    """Aligned text table: axis labels first, then losses and metrics."""
    columns = [axis.code for axis in axes] + list(LOSS_KEYS)
    columns += [key for key in EVAL_KEYS if any(key in row for row in rows)]
    headers = [axis.label for axis in axes] + columns[len(axes) :]
    body = [[_cell(row.get(column, "")) for column in columns] for row in rows]
    widths = [max([len(headers[i])] + [len(line[i]) for line in body]) for i in range(len(columns))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.rjust(w) for c, w in zip(line, widths)) for line in body]
    return "\n".join(lines)

"""
Run Configuration - RunConfig

Composes the per-module configurations of a run, loads and saves them as JSON
with strict key checking, and provides the desk and tiny presets.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Type, TypeVar, Union

from flowalign.alignment import TeacherEncoder, TeacherKind
from flowalign.enum_utils import LabeledEnum
from flowalign.errors import ConfigError, FlowAlignError
from flowalign.interpolant import InterpolantSchedule
from flowalign.network import ModelConfig
from flowalign.sampler import SamplerKind, SamplerSpec
from flowalign.synthdata import ToyConfig

T = TypeVar("T")


class DataKind(LabeledEnum):
    """Training data source."""

    ONSET_TOY = ("onset_toy", "Onset toy")
    GAUSSIAN = ("gaussian", "Gaussian")


@dataclass
class TrainingConfig:
    """
    Optimization and bookkeeping settings.

    Attributes:
        lr (float): AdamW learning rate.
        betas (Tuple[float, float]): AdamW moment coefficients.
        weight_decay (float): Decoupled weight decay.
        batch_size (int): Clips per step.
        steps (int): Optimizer steps.
        seed (int): Seed of every per-run random stream.
        log_every (int): Metrics log interval in steps.
        ckpt_every (int): Checkpoint interval in steps; 0 writes only the final one.
        dataset_size (int): Training clips.
        eval_size (int): Held-out clips for evaluation and ablations.
        onset_tolerance (int): Onset matching tolerance in frames.
        grad_clip (Optional[float]): Global gradient norm bound; None disables clipping.
    """

    lr: float = 1e-4
    betas: Tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.0
    batch_size: int = 32
    steps: int = 1000
    seed: int = 0

    log_every: int = 10
    ckpt_every: int = 0

    dataset_size: int = 512
    eval_size: int = 64
    onset_tolerance: int = 1

    grad_clip: Optional[float] = None

    def __post_init__(self) -> None:
        self.betas = (float(self.betas[0]), float(self.betas[1]))
        positive = ("batch_size", "log_every", "dataset_size")
        for name in positive:
            if getattr(self, name) < 1:
                _invalid(name, getattr(self, name), "must be >= 1")
        for name in ("steps", "ckpt_every", "onset_tolerance"):
            if getattr(self, name) < 0:
                _invalid(name, getattr(self, name), "must be >= 0")
        if self.eval_size < 2:
            _invalid("eval_size", self.eval_size, "needs at least 2 clips")
        if not self.lr > 0:
            _invalid("lr", self.lr, "must be > 0")
        if not all(0.0 <= b < 1.0 for b in self.betas):
            _invalid("betas", self.betas, "must lie in [0, 1)")
        if self.weight_decay < 0:
            _invalid("weight_decay", self.weight_decay, "must be >= 0")
        if self.grad_clip is not None and not self.grad_clip > 0:
            _invalid("grad_clip", self.grad_clip, "must be > 0 or null")


@dataclass
class AblationSwitches:
    """
    Component switches.

    Attributes:
        use_oac (bool): Onset-aware conditioning.
        use_tra (bool): Representation alignment term.
        use_weighting (bool): Timestep weight w(t) on the alignment term; off uses 1.
        teacher_seed (int): Seed of the frozen teacher encoder.
        teacher_kind (TeacherKind): Feature family of the teacher encoder.
    """

    use_oac: bool = True
    use_tra: bool = True
    use_weighting: bool = True
    teacher_seed: int = 1234
    teacher_kind: TeacherKind = TeacherKind.FROZEN_RANDOM

    def __post_init__(self) -> None:
        self.teacher_kind = TeacherKind.from_code(self.teacher_kind)

    def teacher(self, model: ModelConfig) -> TeacherEncoder:
        """The frozen teacher these switches select for ``model``."""
        return TeacherEncoder.from_config(model, self.teacher_seed, self.teacher_kind)


@dataclass
class RunConfig:
    """
    Everything that determines a run.

    The matcher and the injection depth are ablation axes but live in
    ``model`` because they change the parameter set.
    """

    model: ModelConfig = field(default_factory=ModelConfig)
    toy: ToyConfig = field(default_factory=ToyConfig)
    schedule: InterpolantSchedule = field(default_factory=InterpolantSchedule)
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    switches: AblationSwitches = field(default_factory=AblationSwitches)
    data: DataKind = DataKind.ONSET_TOY

    def __post_init__(self) -> None:
        self.data = DataKind.from_code(self.data)
        if self.data == DataKind.ONSET_TOY:
            self._check_toy_shapes()

    def _check_toy_shapes(self) -> None:
        model, toy = self.model, self.toy
        expected = {
            "latent_channels": 1,
            "freq_bins": toy.freq_bins,
            "time_frames": toy.time_frames,
            "visual_len": toy.visual_len,
            "visual_dim": toy.visual_dim,
            "onset_len": toy.time_frames,
        }
        for name, value in expected.items():
            if getattr(model, name) != value:
                _invalid(
                    f"model.{name}", getattr(model, name), f"toy data requires {value}"
                )

    @classmethod
    def desk(cls) -> "RunConfig":
        """Desk-scale defaults: 4 blocks of width 64 on 16 x 64 toy spectrograms."""
        return cls()

    @classmethod
    def tiny(cls) -> "RunConfig":
        """Gradient-check scale: 2 blocks of width 16 on 8 x 8 spectrograms."""
        toy = ToyConfig(
            freq_bins=8,
            time_frames=8,
            classes=4,
            max_onsets=2,
            min_gap=3,
            lead_lag=1,
        )
        model = ModelConfig(
            depth=2,
            hidden_dim=16,
            freq_bins=8,
            time_frames=8,
            visual_len=toy.visual_len,
            visual_dim=toy.visual_dim,
            onset_len=8,
            teacher_len=4,
            teacher_dim=8,
            injection_depth=2,
            projector_dim=32,
            frequency_embedding_dim=32,
        )
        training = TrainingConfig(batch_size=8, steps=50, dataset_size=32, eval_size=8)
        return cls(model=model, toy=toy, training=training)

    def with_overrides(
        self,
        seed: Optional[int] = None,
        steps: Optional[int] = None,
        cfg_scale: Optional[float] = None,
        sampler: Optional[Union[str, SamplerKind]] = None,
        sampler_steps: Optional[int] = None,
    ) -> "RunConfig":
        """Copy with command-line overrides applied and re-validated."""
        data = self.to_dict()
        if seed is not None:
            data["training"]["seed"] = seed
        if steps is not None:
            data["training"]["steps"] = steps
        if cfg_scale is not None:
            data["sampler"]["cfg_scale"] = cfg_scale
        if sampler is not None:
            data["sampler"]["kind"] = SamplerKind.from_code(sampler).code
        if sampler_steps is not None:
            data["sampler"]["steps"] = sampler_steps
        return RunConfig.from_dict(data)

    def replace(self, **sections: Any) -> "RunConfig":
        """Copy with whole sections or section fields replaced, e.g. ``model={"depth": 2}``."""
        data = self.to_dict()
        for section, values in sections.items():
            if isinstance(values, Mapping):
                if section not in data or not isinstance(data[section], dict):
                    raise ConfigError("unknown_config_key", {"key": section, "section": "run"})
                data[section].update(_jsonable(dict(values)))
            else:
                data[section] = _jsonable(values)
        return RunConfig.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": _jsonable(dataclasses.asdict(self.model)),
            "toy": _jsonable(dataclasses.asdict(self.toy)),
            "schedule": _jsonable(dataclasses.asdict(self.schedule)),
            "sampler": _jsonable(dataclasses.asdict(self.sampler)),
            "training": _jsonable(dataclasses.asdict(self.training)),
            "switches": _jsonable(dataclasses.asdict(self.switches)),
            "data": self.data.code,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        """
        Build and validate a run configuration.

        Missing keys take their defaults; unknown keys are rejected.

        Raises:
            ConfigError: On an unknown key or an invalid value. Validation errors
                from the component modules are re-raised as ``ConfigError``.
        """
        if not isinstance(data, Mapping):
            _invalid("run", type(data).__name__, "top level must be an object")
        sections: Dict[str, Type[Any]] = {
            "model": ModelConfig,
            "toy": ToyConfig,
            "schedule": InterpolantSchedule,
            "sampler": SamplerSpec,
            "training": TrainingConfig,
            "switches": AblationSwitches,
        }
        for key in data:
            if key not in sections and key != "data":
                raise ConfigError("unknown_config_key", {"key": key, "section": "run"})
        try:
            built = {
                name: _build_section(kind, data.get(name, {}), name)
                for name, kind in sections.items()
            }
            return cls(data=data.get("data", DataKind.ONSET_TOY.code), **built)
        except ConfigError:
            raise
        except FlowAlignError as error:
            raise ConfigError(
                "invalid_config_value",
                {"field": error.code, "value": dict(error.params), "reason": error.en},
            ) from error

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as error:
            raise ConfigError(
                "config_not_readable", {"path": str(path), "reason": error}
            ) from error
        return cls.from_dict(data)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _build_section(kind: Type[T], values: Any, section: str) -> T:
    if not isinstance(values, Mapping):
        raise ConfigError("unknown_config_key", {"key": section, "section": "run"})
    names = {f.name for f in dataclasses.fields(kind)}  # type: ignore[arg-type]
    for key in values:
        if key not in names:
            raise ConfigError("unknown_config_key", {"key": key, "section": section})
    kwargs = {
        key: tuple(value) if isinstance(value, list) else value for key, value in values.items()
    }
    try:
        return kind(**kwargs)
    except TypeError as error:
        raise ConfigError(
            "invalid_config_value", {"field": section, "value": values, "reason": error}
        ) from error


def _jsonable(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {key: _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    return value


def _invalid(name: str, value: Any, reason: str) -> None:
    raise ConfigError("invalid_config_value", {"field": name, "value": value, "reason": reason})

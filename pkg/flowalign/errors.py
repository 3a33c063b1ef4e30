"""Coded exception types for flowalign."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Mapping


ERROR_MESSAGES: Dict[str, Dict[str, str]] = {
    # interpolant
    "time_out_of_range": {
        "en": "Time must lie in [0, 1]; got {t}",
        "zh": "時間必須介於 [0, 1]，得到 {t}",
    },
    "shape_mismatch": {
        "en": "Shape mismatch: {left} vs {right}",
        "zh": "形狀不一致：{left} 與 {right}",
    },
    "degenerate_denominator": {
        "en": "Velocity-to-noise conversion is degenerate at t={t}",
        "zh": "在 t={t} 時速度轉噪聲的分母退化",
    },
    "invalid_schedule": {
        "en": "Invalid interpolant schedule field {field}: {value}",
        "zh": "插值排程欄位 {field} 無效：{value}",
    },
    # network
    "indivisible_grid": {
        "en": "Grid size {size} is not divisible by patch size {patch}",
        "zh": "網格大小 {size} 無法被區塊大小 {patch} 整除",
    },
    "token_count_mismatch": {
        "en": "Expected {expected} tokens, got {actual}",
        "zh": "預期 {expected} 個 token，得到 {actual}",
    },
    "head_divisibility": {
        "en": "Hidden size {hidden} is not divisible by {heads} heads",
        "zh": "隱藏維度 {hidden} 無法被 {heads} 個注意力頭整除",
    },
    "invalid_injection_depth": {
        "en": "Injection depth must be between 1 and {max_depth}; got {depth}",
        "zh": "注入深度必須介於 1 到 {max_depth}，得到 {depth}",
    },
    "input_shape_mismatch": {
        "en": "Input {name} has shape {actual}; expected {expected}",
        "zh": "輸入 {name} 形狀為 {actual}，預期 {expected}",
    },
    "dropped_not_zero": {
        "en": "Dropped condition rows {rows} must have all-zero c_v and c_o",
        "zh": "被丟棄的條件列 {rows} 的 c_v 與 c_o 必須全為零",
    },
    # alignment
    "unknown_matcher": {
        "en": "Unknown sequence matcher: {kind}",
        "zh": "未知的序列匹配方式：{kind}",
    },
    "teacher_chunking": {
        "en": "Cannot split {frames} frames into {chunks} equal chunks",
        "zh": "無法將 {frames} 個時間幀平均切成 {chunks} 段",
    },
    # objective
    "non_finite_gradient": {
        "en": "Non-finite gradient in parameters: {names}",
        "zh": "參數出現非有限梯度：{names}",
    },
    "invalid_probability": {
        "en": "Probability must lie in [0, 1]; got {prob}",
        "zh": "機率必須介於 [0, 1]，得到 {prob}",
    },
    "empty_batch": {
        "en": "A training batch needs at least one sample",
        "zh": "訓練批次至少需要一個樣本",
    },
    # sampler
    "invalid_sampler_spec": {
        "en": "Invalid sampler setting {field}: {value}",
        "zh": "採樣器設定 {field} 無效：{value}",
    },
    "sigma_underflow": {
        "en": "Noise level underflows at t={t}; raise t_end",
        "zh": "在 t={t} 時噪聲係數下溢，請提高 t_end",
    },
    # synthdata
    "invalid_toy_config": {
        "en": "Invalid toy data setting {field}: {value}",
        "zh": "玩具資料設定 {field} 無效：{value}",
    },
    "invalid_sample_count": {
        "en": "Sample count must be at least 1; got {n}",
        "zh": "樣本數至少為 1，得到 {n}",
    },
    "singular_covariance": {
        "en": "Oracle covariance system is singular at t={t}",
        "zh": "在 t={t} 時預言機共變異數系統為奇異矩陣",
    },
    # eval
    "dimension_mismatch": {
        "en": "Feature dimensions differ: {a} vs {b}",
        "zh": "特徵維度不同：{a} 與 {b}",
    },
    "not_psd": {
        "en": "Covariance is not positive semidefinite (min eigenvalue {min_eigenvalue})",
        "zh": "共變異數矩陣非半正定（最小特徵值 {min_eigenvalue}）",
    },
    "insufficient_samples": {
        "en": "Feature statistics need at least 2 samples; got {count}",
        "zh": "特徵統計至少需要 2 個樣本，得到 {count}",
    },
    "length_mismatch": {
        "en": "Onset vectors differ in length: {pred} vs {ref}",
        "zh": "起始點向量長度不同：{pred} 與 {ref}",
    },
    # config
    "unknown_config_key": {
        "en": "Unknown key {key} in config section {section}",
        "zh": "設定區段 {section} 含未知鍵 {key}",
    },
    "invalid_config_value": {
        "en": "Invalid config value {field}={value}: {reason}",
        "zh": "設定值 {field}={value} 無效：{reason}",
    },
    "unknown_choice": {
        "en": "Unknown {enum} value: {value}",
        "zh": "未知的 {enum} 值：{value}",
    },
    "config_not_readable": {
        "en": "Cannot read config {path}: {reason}",
        "zh": "無法讀取設定檔 {path}：{reason}",
    },
    # checkpoint
    "bad_magic": {
        "en": "{path} is not a flowalign container",
        "zh": "{path} 不是 flowalign 容器檔",
    },
    "unsupported_version": {
        "en": "Unsupported container version {version}",
        "zh": "不支援的容器版本 {version}",
    },
    "truncated_file": {
        "en": "Container {path} is truncated",
        "zh": "容器檔 {path} 已截斷",
    },
    "invalid_manifest": {
        "en": "Container manifest is invalid: {reason}",
        "zh": "容器清單無效：{reason}",
    },
    "tensor_out_of_bounds": {
        "en": "Tensor {name} lies outside the payload",
        "zh": "張量 {name} 超出資料區範圍",
    },
    "tensor_overlap": {
        "en": "Tensor {name} overlaps a previous tensor",
        "zh": "張量 {name} 與前一個張量重疊",
    },
    "checksum_mismatch": {
        "en": "Checksum mismatch for tensor {name}",
        "zh": "張量 {name} 的校驗碼不符",
    },
    "parameter_mismatch": {
        "en": "Parameter {name} has shape {actual}; model expects {expected}",
        "zh": "參數 {name} 形狀為 {actual}，模型預期 {expected}",
    },
    "missing_parameters": {
        "en": "Checkpoint is missing parameters: {names}",
        "zh": "檢查點缺少參數：{names}",
    },
    "unexpected_parameters": {
        "en": "Checkpoint has unexpected parameters: {names}",
        "zh": "檢查點含有多餘參數：{names}",
    },
}


@dataclass
class FlowAlignError(ValueError):
    """Base exception carrying catalogued error messages."""

    code: str
    params: Mapping[str, Any] = field(default_factory=dict)
    default_locale: str = "en"

    def __post_init__(self) -> None:
        ValueError.__init__(self, self.message(self.default_locale))

    def message(self, locale: str = "en") -> str:
        translations = ERROR_MESSAGES.get(self.code)
        if translations is None:
            return self.code
        template = translations.get(locale) or translations["en"]
        return template.format(**self.params)

    @property
    def en(self) -> str:
        return self.message("en")

    @property
    def zh(self) -> str:
        return self.message("zh")

    def __str__(self) -> str:
        return self.message(self.default_locale)


class InterpolantError(FlowAlignError):
    """Noise schedule and interpolant validation error."""


class NetworkError(FlowAlignError):
    """Transformer shape and configuration error."""


class AlignmentError(FlowAlignError):
    """Representation alignment error."""


class ObjectiveError(FlowAlignError):
    """Loss and training step error."""


class SamplerError(FlowAlignError):
    """Sampler configuration or integration error."""


class DataError(FlowAlignError):
    """Synthetic data generation error."""


class EvalError(FlowAlignError):
    """Metric computation error."""


class ConfigError(FlowAlignError):
    """Run configuration error."""


class CheckpointError(FlowAlignError):
    """Tensor container read/write error."""

"""Pydantic models describing configuration, dataset records and model artifacts.

所有向外暴露的数据契约（TOML/CLI 配置、JSONL 数据集、模型文件）均在此校验。标签索引从 0 开始，
基数支持 ``m ∈ {0, …, M}``；浮点数一律按双精度处理。
"""

from __future__ import annotations

from typing import List, Literal, Optional

from pydantic import BaseModel, Field, StrictInt, conint, root_validator, validator

from .config import MODEL_DEFAULTS, SYNTH_DEFAULTS, TRAIN_DEFAULTS


class Architecture(BaseModel):
    """Shared feed-forward network shape.

    Attributes
    ----------
    input_dim : int
        输入特征维度 l。
    hidden_widths : list[int]
        隐藏层宽度序列，可为空（此时退化为线性模型）。
    num_labels : int
        标签数 M。输出头共 ``M + (M + 1)`` 个单元：M 个标签 logit 与 M+1 个基数预激活。
    dropout_rate : float
        隐藏层 dropout 比例，范围 ``[0, 1)``。
    """

    input_dim: int = Field(..., ge=1)
    hidden_widths: List[int] = Field(default_factory=lambda: list(MODEL_DEFAULTS.hidden_widths))
    num_labels: int = Field(..., ge=1)
    dropout_rate: float = Field(MODEL_DEFAULTS.dropout_rate, ge=0.0, lt=1.0)

    class Config:
        allow_mutation = False

    @validator("hidden_widths")
    def validate_widths(cls, value: List[int]) -> List[int]:
        if any(width < 1 for width in value):
            raise ValueError("hidden layer widths must be >= 1")
        return value

    @property
    def output_dim(self) -> int:
        """Head width ``2M + 1``."""
        return 2 * self.num_labels + 1

    @property
    def layer_sizes(self) -> List[int]:
        """Return ``[l, *hidden, 2M + 1]``."""
        return [self.input_dim, *self.hidden_widths, self.output_dim]


class TrainConfig(BaseModel):
    """Optimisation settings for one training run.

    ``objective`` 选择训练目标：``joint`` 为 BCE + DC 联合目标；``labels_only`` 仅训练分类项；
    ``cardinality_only`` 仅训练 DC 基数项（用于独立基数网络的两阶段基线）。
    """

    gamma: float = Field(TRAIN_DEFAULTS.gamma, ge=0.0)
    bce_mode: Literal["full", "positive_only"] = "full"
    base_lr: float = Field(TRAIN_DEFAULTS.base_lr, gt=0.0)
    lr_decay: float = Field(TRAIN_DEFAULTS.lr_decay, gt=0.0, le=1.0)
    momentum: float = Field(TRAIN_DEFAULTS.momentum, ge=0.0, lt=1.0)
    epochs: int = Field(TRAIN_DEFAULTS.epochs, ge=1)
    batch_size: int = Field(TRAIN_DEFAULTS.batch_size, ge=1)
    seed: int = Field(0, ge=0)
    objective: Literal["joint", "labels_only", "cardinality_only"] = "joint"


class SynthConfig(BaseModel):
    """Synthetic multi-label generator settings.

    Attributes
    ----------
    input_dim, num_labels : int
        特征维度 l 与标签数 M。
    num_samples : int
        样本数量。
    max_cardinality : int
        最大基数，不得超过 M。
    prototype_scale : float
        标签原型向量范数。
    noise_scale : float
        高斯噪声标准差，``0`` 表示无噪声。
    orthogonal_prototypes : bool
        是否使用正交原型（要求 ``l >= M``）；无噪声时特征可唯一确定标签集合。
    cardinality_pmf : list[float] | None
        自定义基数分布（长度 ``max_cardinality + 1``），缺省使用偏向 1~3 的默认分布。
    """

    input_dim: int = Field(SYNTH_DEFAULTS.input_dim, ge=1)
    num_labels: int = Field(SYNTH_DEFAULTS.num_labels, ge=1)
    num_samples: int = Field(SYNTH_DEFAULTS.num_samples, ge=1)
    max_cardinality: int = Field(SYNTH_DEFAULTS.max_cardinality, ge=0)
    prototype_scale: float = Field(SYNTH_DEFAULTS.prototype_scale, gt=0.0)
    noise_scale: float = Field(SYNTH_DEFAULTS.noise_scale, ge=0.0)
    orthogonal_prototypes: bool = True
    cardinality_pmf: Optional[List[float]] = None
    seed: int = Field(0, ge=0)

    @root_validator(skip_on_failure=True)
    def validate_dimensions(cls, values: dict) -> dict:
        num_labels = values["num_labels"]
        max_card = values["max_cardinality"]
        if max_card > num_labels:
            raise ValueError(
                f"max_cardinality ({max_card}) must not exceed the number of labels M ({num_labels})"
            )
        if values["orthogonal_prototypes"] and values["input_dim"] < num_labels:
            raise ValueError("orthogonal prototypes require input_dim (l) >= num_labels (M)")
        pmf = values.get("cardinality_pmf")
        if pmf is not None:
            if len(pmf) != max_card + 1:
                raise ValueError("cardinality_pmf must have max_cardinality + 1 entries")
            if any(p < 0.0 for p in pmf) or sum(pmf) <= 0.0:
                raise ValueError("cardinality_pmf entries must be non-negative with a positive sum")
        return values


class DatasetHeader(BaseModel):
    """First line of a JSONL dataset file: ``{"l": …, "M": …}``."""

    l: conint(strict=True, ge=1)
    M: conint(strict=True, ge=1)


class SampleRecord(BaseModel):
    """One dataset line: ``{"x": […], "labels": […]}``."""

    x: List[float]
    labels: List[StrictInt] = Field(default_factory=list)

    @validator("labels")
    def validate_labels(cls, value: List[int]) -> List[int]:
        if any(label < 0 for label in value):
            raise ValueError("label indices must be non-negative")
        if len(set(value)) != len(value):
            raise ValueError("label indices must be distinct")
        return value


class ModelArtifact(BaseModel):
    """Persisted model: network weights, cardinality histogram and hyper-volume unit.

    推理阶段需要同时使用网络参数 w、训练集基数直方图 C_m 与超体积单位 U，因此三者存放在同一文档中。
    """

    format_version: Literal[1] = 1
    architecture: Architecture
    weights: List[List[List[float]]]
    biases: List[List[float]]
    cardinality_counts: List[StrictInt]
    u: float = Field(MODEL_DEFAULTS.hyper_volume_unit, gt=0.0)
    train_config: TrainConfig
    seed: int = Field(0, ge=0)
    selected_epoch: int = Field(0, ge=0)
    train_objective: float
    val_objective: Optional[float] = None

    @root_validator(skip_on_failure=True)
    def validate_shapes(cls, values: dict) -> dict:
        arch: Architecture = values["architecture"]
        sizes = arch.layer_sizes
        weights = values["weights"]
        biases = values["biases"]
        if len(weights) != len(sizes) - 1 or len(biases) != len(sizes) - 1:
            raise ValueError(f"artifact must contain {len(sizes) - 1} layers")
        for idx, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            if len(weights[idx]) != fan_in or any(len(row) != fan_out for row in weights[idx]):
                raise ValueError(f"layer {idx} weight shape must be ({fan_in}, {fan_out})")
            if len(biases[idx]) != fan_out:
                raise ValueError(f"layer {idx} bias length must be {fan_out}")
        counts = values["cardinality_counts"]
        if len(counts) != arch.num_labels + 1 or any(c < 0 for c in counts):
            raise ValueError("cardinality_counts must hold M + 1 non-negative integers")
        return values

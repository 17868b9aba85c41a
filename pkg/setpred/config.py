"""Centralized configuration defaults for set prediction.

配置项覆盖网络结构、训练超参数、合成数据生成以及校验容差，CLI 与 TOML 配置文件在此基础上覆盖。
所有训练计算使用双精度浮点；概率以自然对数域表示。
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class ModelDefaults:
    """Default model and decoding configuration.

    Attributes
    ----------
    alpha_floor : float
        Dirichlet 浓度参数下限，``α = softplus(a) + alpha_floor`` 保证严格为正。
    hidden_widths : tuple[int, ...]
        共享主干 MLP 的隐藏层宽度（ReLU 激活）。
    dropout_rate : float
        隐藏层 inverted dropout 比例。
    hyper_volume_unit : float
        超体积单位 U（无量纲标量），推理时用于比较不同基数集合的密度，可在验证集上重新调节。
    u_candidates : tuple[float, ...]
        在验证集上调节 U 时搜索的候选值。
    tie_tolerance : float
        解码平局容差：得分或扫描目标相差不超过该值视为相同，MAP 解码与暴力枚举共用。
    """

    alpha_floor: float = 1e-6
    hidden_widths: tuple[int, ...] = (64, 64)
    dropout_rate: float = 0.5
    hyper_volume_unit: float = 2.36
    u_candidates: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0, 2.36, 3.0, 4.0, 6.0, 10.0)
    tie_tolerance: float = 1e-12


@dataclass(frozen=True)
class TrainDefaults:
    """Default optimisation hyper-parameters.

    Attributes
    ----------
    gamma : float
        L2 正则系数 γ（仅作用于权重矩阵，不作用于偏置）。
    base_lr : float
        初始学习率。
    lr_decay : float
        每个 epoch 的学习率衰减因子，``lr = base_lr · lr_decay^epoch``。
    momentum : float
        SGD 动量系数。
    epochs : int
        训练轮数。
    batch_size : int
        小批量大小，损失按批次取平均。
    bce_mode : str
        ``"full"`` 为完整二元交叉熵；``"positive_only"`` 仅保留正标签项。
    """

    gamma: float = 5e-4
    base_lr: float = 1e-3
    lr_decay: float = 0.95
    momentum: float = 0.9
    epochs: int = 60
    batch_size: int = 32
    bce_mode: str = "full"


@dataclass(frozen=True)
class SynthDefaults:
    """Default synthetic multi-label dataset configuration.

    Attributes
    ----------
    input_dim : int
        特征维度 l。
    num_labels : int
        标签总数 M。
    num_samples : int
        样本总数。
    max_cardinality : int
        单个样本最多包含的标签数。
    prototype_scale : float
        每个标签原型向量的范数。
    noise_scale : float
        特征上叠加的高斯噪声标准差。
    cardinality_weights : tuple[float, ...]
        基数 0,1,2,... 的未归一化权重，大部分质量集中在 1~3 个标签；超出部分按 ``tail_weight`` 补齐。
    tail_weight : float
        ``max_cardinality`` 超出 ``cardinality_weights`` 长度时，其余每个基数使用的未归一化权重。
    split_fractions : tuple[float, float, float]
        训练/验证/测试划分比例。
    """

    input_dim: int = 20
    num_labels: int = 10
    num_samples: int = 6000
    max_cardinality: int = 4
    prototype_scale: float = 3.0
    noise_scale: float = 0.25
    cardinality_weights: tuple[float, ...] = (0.04, 0.36, 0.30, 0.18, 0.08, 0.04)
    tail_weight: float = 0.02
    split_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)


@dataclass(frozen=True)
class VerifyDefaults:
    """Tolerances and volumes used by the oracle checks."""

    trials: int = 1000
    max_enumeration_labels: int = 20
    map_tolerance: float = 1e-9
    fd_step: float = 1e-5
    end_to_end_rel_tol: float = 1e-4
    dc_grad_rel_tol: float = 1e-6
    normalization_tol: float = 1e-12
    u_grid: tuple[float, ...] = (0.5, 1.0, 2.36, 10.0)


MODEL_DEFAULTS = ModelDefaults()
TRAIN_DEFAULTS = TrainDefaults()
SYNTH_DEFAULTS = SynthDefaults()
VERIFY_DEFAULTS = VerifyDefaults()

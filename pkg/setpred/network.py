"""Shared feed-forward network with a dual label/cardinality head.

单一参数集 w 同时输出 M 个标签 logit ``O^ℓ`` 与 ``M + 1`` 个基数预激活 ``a``，后者经 softplus
映射为 Dirichlet 参数 α。前向/反向传播与 SGD（动量 + 权重衰减）均以 numpy 手工实现，全部采用双精度。

权重矩阵按 ``(fan_in, fan_out)`` 存放，输入既可为单个特征向量 ``(l,)`` 也可为批量 ``(B, l)``。
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Literal, Optional

import numpy as np

from .api_models import Architecture
from .config import MODEL_DEFAULTS, TRAIN_DEFAULTS
from .set_model import AlphaVector
from .utils import make_rng, softplus

Mode = Literal["train", "eval"]


@dataclass
class ModelParams:
    """Weights and biases of every layer; the last layer is the ``2M + 1`` wide head.

    Attributes
    ----------
    arch : Architecture
        网络结构。
    weights : list[np.ndarray]
        每层权重，形状 ``(fan_in, fan_out)``。
    biases : list[np.ndarray]
        每层偏置，长度 ``fan_out``。
    """

    arch: Architecture
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self) -> None:
        sizes = self.arch.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError(f"expected {len(sizes) - 1} layers for architecture {sizes}")
        for idx, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            if self.weights[idx].shape != (fan_in, fan_out) or self.biases[idx].shape != (fan_out,):
                raise ValueError(f"layer {idx} must have weight ({fan_in}, {fan_out}) and bias ({fan_out},)")

    @property
    def num_labels(self) -> int:
        return self.arch.num_labels

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "ModelParams":
        return ModelParams(self.arch, [np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases])

    def weight_sq_norm(self) -> float:
        """``‖W‖²`` over weight matrices only (biases are not regularised)."""
        return float(sum(np.sum(w * w) for w in self.weights))

    def arrays(self) -> List[np.ndarray]:
        """All parameter arrays in a fixed order: weights then biases."""
        return [*self.weights, *self.biases]

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def unflatten(self, flat: np.ndarray) -> "ModelParams":
        """Inverse of :meth:`flatten` for the same architecture."""
        flat = np.asarray(flat, dtype=float)
        out, offset = [], 0
        for template in self.arrays():
            out.append(flat[offset : offset + template.size].reshape(template.shape).copy())
            offset += template.size
        if offset != flat.size:
            raise ValueError(f"flat vector has {flat.size} entries, expected {offset}")
        depth = len(self.weights)
        return ModelParams(self.arch, out[:depth], out[depth:])


@dataclass
class DualOutput:
    """Per-sample (or per-batch) network outputs.

    Attributes
    ----------
    label_logits : np.ndarray
        标签 logit，形状 ``(M,)`` 或 ``(B, M)``。
    card_preacts : np.ndarray
        基数预激活，形状 ``(M + 1,)`` 或 ``(B, M + 1)``。
    """

    label_logits: np.ndarray
    card_preacts: np.ndarray

    def __post_init__(self) -> None:
        self.label_logits = np.asarray(self.label_logits, dtype=float)
        self.card_preacts = np.asarray(self.card_preacts, dtype=float)
        if self.card_preacts.shape[-1] != self.label_logits.shape[-1] + 1:
            raise ValueError("card_preacts must have exactly one more entry than label_logits")

    @property
    def num_labels(self) -> int:
        return int(self.label_logits.shape[-1])

    @property
    def is_batch(self) -> bool:
        return self.label_logits.ndim == 2

    def __len__(self) -> int:
        return int(self.label_logits.shape[0]) if self.is_batch else 1

    def row(self, index: int) -> "DualOutput":
        """Single-sample view of a batched output."""
        if not self.is_batch:
            raise ValueError("row() requires a batched DualOutput")
        return DualOutput(self.label_logits[index], self.card_preacts[index])

    def alpha(self) -> AlphaVector:
        return alpha_link(self.card_preacts)


@dataclass
class ActivationCache:
    """Intermediate values of one forward call, consumed by :func:`backward`."""

    params: ModelParams
    inputs: List[np.ndarray]
    preacts: List[np.ndarray]
    masks: List[Optional[np.ndarray]]
    single: bool


@dataclass
class OptimizerState:
    """Momentum buffers plus the schedule position.

    Attributes
    ----------
    velocity : ModelParams
        与参数同形状的动量缓冲。
    lr : float
        当前学习率。
    epoch : int
        当前 epoch 计数。
    """

    velocity: ModelParams
    lr: float
    epoch: int = 0

    @classmethod
    def initial(cls, params: ModelParams, lr: float) -> "OptimizerState":
        return cls(velocity=params.zeros_like(), lr=lr, epoch=0)


def init_params(arch: Architecture, seed: int) -> ModelParams:
    """Draw weights from ``N(0, 1/fan_in)``; biases start at zero.

    同一 ``(arch, seed)`` 生成逐位一致的参数。
    """
    rng = make_rng(seed, "init")
    sizes = arch.layer_sizes
    weights = [
        rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:])
    ]
    biases = [np.zeros(fan_out) for fan_out in sizes[1:]]
    return ModelParams(arch, weights, biases)


def alpha_values(card_preacts: np.ndarray) -> np.ndarray:
    """Array form of :func:`alpha_link`; works on any shape."""
    return softplus(card_preacts) + MODEL_DEFAULTS.alpha_floor


def alpha_link(card_preacts: np.ndarray) -> AlphaVector:
    """Map pre-activations to Dirichlet parameters: ``α_j = softplus(a_j) + 1e-6``.

    softplus 光滑、单调且梯度有界；下限 1e-6 保证 α 严格为正。
    """
    preacts = np.asarray(card_preacts, dtype=float)
    if preacts.ndim != 1:
        raise ValueError("alpha_link expects a single pre-activation vector; use alpha_values for batches")
    if not np.all(np.isfinite(preacts)):
        raise ValueError("cardinality pre-activations must be finite")
    return AlphaVector(alpha_values(preacts))


def forward(
    params: ModelParams,
    x: np.ndarray,
    mode: Mode = "eval",
    rng: Optional[np.random.Generator] = None,
) -> tuple[DualOutput, ActivationCache]:
    """Run the network on one sample or a batch.

    参数
    ----
    params : ModelParams
        网络参数。
    x : np.ndarray
        特征，形状 ``(l,)`` 或 ``(B, l)``。
    mode : {"train", "eval"}
        ``eval`` 为确定性前向且不使用 dropout；``train`` 在隐藏层上施加 inverted dropout。
    rng : np.random.Generator, 可选
        train 模式且 dropout 比例大于 0 时必须提供。

    返回
    ----
    tuple[DualOutput, ActivationCache]
        网络输出以及反向传播所需的缓存。
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    features = np.asarray(x, dtype=float)
    single = features.ndim == 1
    batch = np.atleast_2d(features)
    if batch.ndim != 2 or batch.shape[1] != params.arch.input_dim:
        raise ValueError(f"expected features of dimension {params.arch.input_dim}, got shape {features.shape}")

    rate = params.arch.dropout_rate
    use_dropout = mode == "train" and rate > 0.0
    if use_dropout and rng is None:
        raise ValueError("train mode with dropout requires a random generator")

    inputs: List[np.ndarray] = []
    preacts: List[np.ndarray] = []
    masks: List[Optional[np.ndarray]] = []
    hidden = batch
    for weight, bias in zip(params.weights[:-1], params.biases[:-1]):
        inputs.append(hidden)
        z = hidden @ weight + bias
        preacts.append(z)
        hidden = np.maximum(z, 0.0)
        mask = None
        if use_dropout:
            mask = (rng.random(z.shape) >= rate) / (1.0 - rate)
            hidden = hidden * mask
        masks.append(mask)
    inputs.append(hidden)
    head = hidden @ params.weights[-1] + params.biases[-1]

    num_labels = params.num_labels
    logits, card = head[:, :num_labels], head[:, num_labels:]
    if single:
        logits, card = logits[0], card[0]
    cache = ActivationCache(params=params, inputs=inputs, preacts=preacts, masks=masks, single=single)
    return DualOutput(logits, card), cache


def backward(params: ModelParams, cache: ActivationCache, grad_dual: DualOutput) -> ModelParams:
    """Backpropagate output gradients to parameter gradients.

    ``grad_dual`` 给出目标函数对 ``label_logits`` 与 ``card_preacts`` 的偏导；批量输入时各样本的梯度
    相加。dropout 掩码沿用前向缓存。
    """
    if cache.params is not params:
        raise ValueError("activation cache was produced by a different parameter set")
    head_grad = np.concatenate(
        [np.atleast_2d(grad_dual.label_logits), np.atleast_2d(grad_dual.card_preacts)], axis=1
    )
    expected = (cache.inputs[-1].shape[0], params.arch.output_dim)
    if head_grad.shape != expected:
        raise ValueError(f"output gradient shape {head_grad.shape} does not match cache {expected}")

    depth = len(params.weights)
    grad_w: List[np.ndarray] = [np.empty(0)] * depth
    grad_b: List[np.ndarray] = [np.empty(0)] * depth
    grad_w[-1] = cache.inputs[-1].T @ head_grad
    grad_b[-1] = head_grad.sum(axis=0)
    delta = head_grad @ params.weights[-1].T
    for layer in reversed(range(depth - 1)):
        mask = cache.masks[layer]
        if mask is not None:
            delta = delta * mask
        delta = delta * (cache.preacts[layer] > 0.0)
        grad_w[layer] = cache.inputs[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = delta @ params.weights[layer].T
    return ModelParams(params.arch, grad_w, grad_b)


def sgd_step(
    params: ModelParams,
    grads: ModelParams,
    state: OptimizerState,
    lr: float,
    momentum: float,
    weight_decay: float,
) -> tuple[ModelParams, OptimizerState]:
    """One momentum-SGD update.

    ``v ← μ·v + g + λ·w``，``w ← w − lr·v``；权重衰减 λ 只作用于权重矩阵。返回新的参数与状态，
    输入对象保持不变。
    """
    if grads.arch.layer_sizes != params.arch.layer_sizes or state.velocity.arch.layer_sizes != params.arch.layer_sizes:
        raise ValueError("parameter, gradient and momentum shapes disagree")
    new_weights, new_biases, vel_weights, vel_biases = [], [], [], []
    for w, g, v in zip(params.weights, grads.weights, state.velocity.weights):
        v_new = momentum * v + g + weight_decay * w
        vel_weights.append(v_new)
        new_weights.append(w - lr * v_new)
    for b, g, v in zip(params.biases, grads.biases, state.velocity.biases):
        v_new = momentum * v + g
        vel_biases.append(v_new)
        new_biases.append(b - lr * v_new)
    velocity = ModelParams(params.arch, vel_weights, vel_biases)
    return ModelParams(params.arch, new_weights, new_biases), OptimizerState(velocity, lr, state.epoch)


def lr_schedule(epoch: int, base_lr: float, decay: float = TRAIN_DEFAULTS.lr_decay) -> float:
    """Exponential per-epoch decay ``base_lr · decay^epoch``."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return float(base_lr * decay**epoch)

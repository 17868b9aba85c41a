"""Joint MAP training objective and its analytic gradients.

每个样本的负对数后验由两部分组成：标签的二元交叉熵项与 Dirichlet-Categorical 基数项。
``m·log U`` 对固定训练集是与 w 无关的常数，因此不进入训练目标，U 只影响推理。
批次损失取样本平均，再加上 ``γ·‖W‖²``（仅权重，不含偏置）。
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .api_models import TrainConfig
from .data import Sample
from .network import DualOutput, ModelParams, alpha_link, alpha_values, backward, forward
from .set_model import CardinalityStats, LabelSet, dc_grad_alpha, dc_grad_alphas, dc_log_likelihood, dc_log_pmf
from .utils import log_sigmoid, sigmoid


@dataclass(frozen=True)
class SampleLossBreakdown:
    """Per-sample loss split into its classification and cardinality parts."""

    bce_term: float
    cardinality_term: float

    @property
    def total(self) -> float:
        return self.bce_term + self.cardinality_term


def _term_weights(cfg: TrainConfig) -> tuple[float, float]:
    """Return ``(bce_weight, cardinality_weight)`` for the configured objective."""
    if cfg.objective == "labels_only":
        return 1.0, 0.0
    if cfg.objective == "cardinality_only":
        return 0.0, 1.0
    return 1.0, 1.0


def _check_sample(out: DualOutput, labels: LabelSet, stats: CardinalityStats) -> None:
    if out.is_batch:
        raise ValueError("sample-level loss expects a single-sample DualOutput")
    if out.num_labels != labels.num_labels or stats.num_labels != labels.num_labels:
        raise ValueError(
            f"dimension mismatch: logits M={out.num_labels}, labels M={labels.num_labels}, "
            f"histogram M={stats.num_labels}"
        )


def bce_terms(logits: np.ndarray, indicators: np.ndarray, bce_mode: str) -> np.ndarray:
    """Per-sample ``−Σ_ℓ log p(z^ℓ | O^ℓ)``; rows of ``logits`` are samples."""
    positive = indicators * log_sigmoid(logits)
    if bce_mode == "positive_only":
        return -np.sum(positive, axis=-1)
    negative = (1.0 - indicators) * log_sigmoid(-logits)
    return -np.sum(positive + negative, axis=-1)


def bce_grad(logits: np.ndarray, indicators: np.ndarray, bce_mode: str) -> np.ndarray:
    """Gradient of :func:`bce_terms` with respect to the logits."""
    probs = sigmoid(logits)
    if bce_mode == "positive_only":
        return indicators * (probs - 1.0)
    return probs - indicators


def sample_loss(out: DualOutput, labels: LabelSet, stats: CardinalityStats, cfg: TrainConfig) -> SampleLossBreakdown:
    """Negative log-posterior contribution of one sample.

    参数
    ----
    out : DualOutput
        单样本网络输出。
    labels : LabelSet
        真实标签集合，``z^ℓ`` 为其指示向量。
    stats : CardinalityStats
        训练集基数直方图。
    cfg : TrainConfig
        ``bce_mode`` 决定使用完整 BCE 还是仅正标签项；``objective`` 为 ``labels_only`` 或
        ``cardinality_only`` 时另一项记为 0。

    返回
    ----
    SampleLossBreakdown
        ``bce_term`` 与 ``cardinality_term = −log DC(m; α, C)``，二者均非负。
    """
    _check_sample(out, labels, stats)
    w_bce, w_card = _term_weights(cfg)
    bce = float(bce_terms(out.label_logits, labels.indicator(), cfg.bce_mode))
    card = -dc_log_pmf(labels.cardinality, alpha_link(out.card_preacts), stats)
    return SampleLossBreakdown(bce_term=w_bce * bce, cardinality_term=w_card * card)


def sample_loss_grad(out: DualOutput, labels: LabelSet, stats: CardinalityStats, cfg: TrainConfig) -> DualOutput:
    """Gradient of ``sample_loss(...).total`` with respect to both output blocks.

    ``∂/∂O^ℓ = σ(O^ℓ) − z^ℓ``（完整 BCE）；``∂/∂a_j = −∂log DC/∂α_j · σ(a_j)``，σ 为 softplus 的导数。
    """
    _check_sample(out, labels, stats)
    w_bce, w_card = _term_weights(cfg)
    grad_logits = w_bce * bce_grad(out.label_logits, labels.indicator(), cfg.bce_mode)
    alpha = alpha_link(out.card_preacts)
    grad_card = -w_card * dc_grad_alpha(labels.cardinality, alpha, stats) * sigmoid(out.card_preacts)
    return DualOutput(grad_logits, grad_card)


def batch_terms(
    out: DualOutput, indicators: np.ndarray, cardinalities: np.ndarray, stats: CardinalityStats, cfg: TrainConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised per-sample ``(bce_term, cardinality_term)`` arrays for a batched output."""
    bce = bce_terms(out.label_logits, indicators, cfg.bce_mode)
    card = -dc_log_likelihood(cardinalities, alpha_values(out.card_preacts), stats)
    return bce, card


def batch_output_grad(
    out: DualOutput, indicators: np.ndarray, cardinalities: np.ndarray, stats: CardinalityStats, cfg: TrainConfig
) -> DualOutput:
    """Gradient of the *mean* weighted data loss with respect to a batched output."""
    w_bce, w_card = _term_weights(cfg)
    scale = 1.0 / out.label_logits.shape[0]
    grad_logits = w_bce * scale * bce_grad(out.label_logits, indicators, cfg.bce_mode)
    dc_grad = dc_grad_alphas(cardinalities, alpha_values(out.card_preacts), stats)
    grad_card = -w_card * scale * dc_grad * sigmoid(out.card_preacts)
    return DualOutput(grad_logits, grad_card)


def data_loss_and_grad(
    params: ModelParams,
    features: np.ndarray,
    indicators: np.ndarray,
    cardinalities: np.ndarray,
    stats: CardinalityStats,
    cfg: TrainConfig,
    mode: str = "eval",
    rng: Optional[np.random.Generator] = None,
) -> tuple[float, ModelParams]:
    """Mean weighted data loss of a batch and its parameter gradient (no regulariser)."""
    if features.shape[0] == 0:
        raise ValueError("batch must contain at least one sample")
    out, cache = forward(params, features, mode=mode, rng=rng)
    bce, card = batch_terms(out, indicators, cardinalities, stats, cfg)
    w_bce, w_card = _term_weights(cfg)
    loss = float(np.mean(w_bce * bce + w_card * card))
    grads = backward(params, cache, batch_output_grad(out, indicators, cardinalities, stats, cfg))
    return loss, grads


def objective_from_arrays(
    params: ModelParams,
    features: np.ndarray,
    indicators: np.ndarray,
    cardinalities: np.ndarray,
    stats: CardinalityStats,
    cfg: TrainConfig,
) -> float:
    """Eval-mode objective ``mean(loss) + γ·‖W‖²`` on pre-stacked arrays."""
    if features.shape[0] == 0:
        raise ValueError("batch must contain at least one sample")
    out, _ = forward(params, features, mode="eval")
    bce, card = batch_terms(out, indicators, cardinalities, stats, cfg)
    w_bce, w_card = _term_weights(cfg)
    return float(np.mean(w_bce * bce + w_card * card)) + cfg.gamma * params.weight_sq_norm()


def _stack(batch: Iterable[Sample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    samples = list(batch)
    if not samples:
        raise ValueError("batch must contain at least one sample")
    features = np.stack([s.features for s in samples])
    indicators = np.stack([s.labels.indicator() for s in samples])
    cardinalities = np.array([s.labels.cardinality for s in samples], dtype=np.int64)
    return features, indicators, cardinalities


def batch_objective(params: ModelParams, batch: Iterable[Sample], stats: CardinalityStats, cfg: TrainConfig) -> float:
    """Mean sample loss over ``batch`` plus ``gamma·‖W‖²``."""
    return objective_from_arrays(params, *_stack(batch), stats, cfg)


def batch_objective_grad(
    params: ModelParams, batch: Iterable[Sample], stats: CardinalityStats, cfg: TrainConfig
) -> tuple[float, ModelParams]:
    """Exact eval-mode gradient of :func:`batch_objective`, including ``2γW``."""
    features, indicators, cardinalities = _stack(batch)
    loss, grads = data_loss_and_grad(params, features, indicators, cardinalities, stats, cfg)
    grads.weights = [g + 2.0 * cfg.gamma * w for g, w in zip(grads.weights, params.weights)]
    return loss + cfg.gamma * params.weight_sq_norm(), grads

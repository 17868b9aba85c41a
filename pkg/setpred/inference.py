"""Set decoders: exact MAP over (cardinality, labels), fixed top-k, and sequential cardinality-first decoding.

MAP 推理把集合选择写成二元线性规划：每个标签得分 ``c^ℓ = log U + log σ(O^ℓ)``，另加只依赖被选数量 m
的高阶项 ``f(m) = log DC(m; α, C)``。对固定 m，最优解就是得分最高的 m 个标签，因此只需对 c 排序后
扫描全部 ``m ∈ {0, …, M}`` 即可得到精确解，复杂度 ``O(M log M)``。

平局规则全局固定：得分相差不超过 ``tie_tolerance`` 时取较小的标签索引；扫描目标相差不超过该容差时取较小的 m。
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import MODEL_DEFAULTS
from .network import DualOutput
from .set_model import CardinalityStats, HyperVolumeUnit, LabelSet, dc_pmf, set_log_density
from .utils import log_sigmoid


@dataclass(frozen=True)
class MapResult:
    """Decoded set with its cardinality and unnormalised log-density.

    Attributes
    ----------
    labels : LabelSet
        MAP 标签集合 Z*。
    m_star : int
        MAP 基数 m*，等于 ``len(labels)``。
    log_score : float
        ``set_log_density(labels, …)``。
    """

    labels: LabelSet
    m_star: int
    log_score: float

    def __post_init__(self) -> None:
        if self.labels.cardinality != self.m_star:
            raise ValueError(f"m_star ({self.m_star}) must equal the number of labels ({self.labels.cardinality})")


def _single(out: DualOutput, stats: CardinalityStats) -> None:
    if out.is_batch:
        raise ValueError("decoders operate on one sample at a time; use DualOutput.row()")
    if stats.num_labels != out.num_labels:
        raise ValueError(f"cardinality histogram covers M={stats.num_labels} but the output has M={out.num_labels}")


def _descending(scores: np.ndarray) -> np.ndarray:
    # stable sort on the negated scores keeps equal scores in index order
    return np.argsort(-scores, kind="stable")


def _first_within(values: np.ndarray, tolerance: float) -> int:
    return int(np.flatnonzero(values >= values.max() - tolerance)[0])


def _top_labels(scores: np.ndarray, order: np.ndarray, m: int, tolerance: float) -> np.ndarray:
    """The ``m`` best labels, filling near-tied boundary slots by index."""
    if m == 0:
        return order[:0]
    boundary = scores[order[m - 1]]
    sure = np.flatnonzero(scores > boundary + tolerance)
    tied = np.flatnonzero(np.abs(scores - boundary) <= tolerance)
    return np.concatenate([sure, tied[: m - sure.size]])


def label_scores(label_logits: np.ndarray, u: HyperVolumeUnit) -> np.ndarray:
    """Per-label linear scores ``c^ℓ = log u + log σ(O^ℓ)``; each ``c^ℓ ≤ log u``."""
    logits = np.asarray(label_logits, dtype=float).reshape(-1)
    if not np.all(np.isfinite(logits)):
        raise ValueError("label logits must be finite")
    return u.log_u + log_sigmoid(logits)


def map_set(out: DualOutput, stats: CardinalityStats, u: HyperVolumeUnit) -> MapResult:
    """Exact MAP label set for one sample.

    参数
    ----
    out : DualOutput
        单样本网络输出（标签 logit 与基数预激活）。
    stats : CardinalityStats
        训练集基数直方图。
    u : HyperVolumeUnit
        超体积单位。

    返回
    ----
    MapResult
        ``m* = argmax_m [f(m) + Σ_{i≤m} c_(i)]``，集合为得分最高的 m* 个标签；空集是合法输出。

    说明
    ----
    扫描目标与最大值相差不超过 ``tie_tolerance`` 时取最小的 m；边界处得分在容差内的标签按索引从小到大补齐。
    该规则与 :func:`setpred.oracle.brute_force_map` 一致。
    """
    _single(out, stats)
    scores = label_scores(out.label_logits, u)
    order = _descending(scores)
    prefix = np.concatenate([[0.0], np.cumsum(scores[order])])
    alpha = out.alpha()
    sweep = np.log(dc_pmf(alpha, stats)) + prefix
    m_star = _first_within(sweep, MODEL_DEFAULTS.tie_tolerance)
    labels = LabelSet.of(_top_labels(scores, order, m_star, MODEL_DEFAULTS.tie_tolerance), out.num_labels)
    return MapResult(labels, m_star, set_log_density(labels, out.label_logits, alpha, stats, u))


def topk_set(label_logits: np.ndarray, k: int) -> LabelSet:
    """The ``k`` labels with the highest logits (ties → lower index)."""
    logits = np.asarray(label_logits, dtype=float).reshape(-1)
    if not 0 <= k <= logits.size:
        raise ValueError(f"k must lie in [0, {logits.size}], got {k}")
    return LabelSet.of(_descending(logits)[:k], logits.size)


def sequential_set(out: DualOutput, stats: CardinalityStats) -> LabelSet:
    """Cardinality-first decoding: ``m̂ = argmax DC`` then the top-``m̂`` labels.

    U 不参与该解码；当 m̂ 与联合 MAP 的 m* 相同时，两者输出相同集合。
    """
    _single(out, stats)
    m_hat = int(np.argmax(dc_pmf(out.alpha(), stats)))
    return topk_set(out.label_logits, m_hat)

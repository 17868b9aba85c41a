"""Finite-set statistics core: Dirichlet-Categorical cardinality and set log-density.

集合密度由三部分组成：基数分布 ``DC(m; α, C)``、超体积单位项 ``m·log U`` 以及被选标签的
logistic 概率 ``Σ log σ(O^ℓ)``。Dirichlet 事件概率 ρ 已被解析积分掉，只通过闭式
``(α_m + C_m) / (Σα + C)`` 出现，不在运行时表示。

基数支持 ``m ∈ {0, …, M}``，因此 α 与直方图长度均为 ``M + 1``。本模块所有函数均为纯函数，
数据类型在构造后不可变，可在多线程中共享。
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

import numpy as np

from .utils import log_sigmoid


def _readonly(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class LabelSet:
    """Unordered collection of distinct label indices in ``{0, …, M-1}``.

    Attributes
    ----------
    members : frozenset[int]
        标签索引集合。
    num_labels : int
        标签总数 M，用于校验索引范围。
    """

    members: frozenset[int]
    num_labels: int

    def __post_init__(self) -> None:
        if self.num_labels < 1:
            raise ValueError(f"num_labels must be >= 1, got {self.num_labels}")
        for label in self.members:
            if not 0 <= label < self.num_labels:
                raise ValueError(f"label index {label} outside [0, {self.num_labels})")

    @classmethod
    def of(cls, labels: Iterable[int], num_labels: int) -> "LabelSet":
        """Build a set from any iterable of indices; duplicates are rejected."""
        items = [int(label) for label in labels]
        if len(set(items)) != len(items):
            raise ValueError(f"duplicate label indices in {items}")
        return cls(frozenset(items), int(num_labels))

    @property
    def cardinality(self) -> int:
        return len(self.members)

    def sorted(self) -> list[int]:
        return sorted(self.members)

    def indicator(self) -> np.ndarray:
        """Binary vector ``z`` of length M."""
        z = np.zeros(self.num_labels, dtype=float)
        z[list(self.members)] = 1.0
        return z

    def relabel(self, permutation: np.ndarray) -> "LabelSet":
        """Map every member ``ℓ`` to ``permutation[ℓ]``."""
        return LabelSet.of((int(permutation[label]) for label in self.members), self.num_labels)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[int]:
        return iter(self.sorted())

    def __contains__(self, label: object) -> bool:
        return label in self.members


@dataclass(frozen=True, eq=False)
class CardinalityStats:
    """Training-set cardinality histogram ``C_m`` and total ``C``.

    Attributes
    ----------
    counts : np.ndarray
        长度 ``M + 1`` 的非负整数数组，``counts[m]`` 为基数为 m 的训练样本数。
    total : int
        样本总数，必须等于 ``counts.sum()``。``total = 0`` 合法，此时 DC 退化为 ``α_m / Σα``。
    """

    counts: np.ndarray
    total: Optional[int] = None

    def __post_init__(self) -> None:
        counts = np.array(self.counts, dtype=np.int64).reshape(-1)
        if counts.size < 2:
            raise ValueError("cardinality counts need at least M + 1 = 2 entries")
        if np.any(counts < 0):
            raise ValueError("cardinality counts must be non-negative")
        total = int(counts.sum()) if self.total is None else int(self.total)
        if total != int(counts.sum()):
            raise ValueError(f"total ({total}) must equal the sum of counts ({int(counts.sum())})")
        object.__setattr__(self, "counts", _readonly(counts))
        object.__setattr__(self, "total", total)

    @classmethod
    def from_cardinalities(cls, cardinalities: Iterable[int], num_labels: int) -> "CardinalityStats":
        """Histogram a sequence of set sizes."""
        sizes = np.fromiter((int(m) for m in cardinalities), dtype=np.int64)
        if sizes.size and (sizes.min() < 0 or sizes.max() > num_labels):
            raise ValueError(f"cardinalities must lie in [0, {num_labels}]")
        return cls(np.bincount(sizes, minlength=num_labels + 1))

    @property
    def num_labels(self) -> int:
        return int(self.counts.size - 1)

    def modal_cardinality(self) -> int:
        """Most frequent cardinality (ties → smaller m)."""
        return int(np.argmax(self.counts))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CardinalityStats):
            return NotImplemented
        return self.total == other.total and np.array_equal(self.counts, other.counts)


@dataclass(frozen=True, eq=False)
class AlphaVector:
    """Dirichlet concentration parameters over ``m ∈ {0, …, M}``; every entry finite and > 0."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise ValueError("alpha entries must be finite")
        if np.any(values <= 0.0):
            raise ValueError("alpha entries must be strictly positive")
        object.__setattr__(self, "values", _readonly(values))

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class HyperVolumeUnit:
    """Unit of hyper-volume ``U``; makes densities of different cardinalities comparable."""

    u: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.u) or self.u <= 0.0:
            raise ValueError(f"hyper-volume unit must be positive and finite, got {self.u}")

    @property
    def log_u(self) -> float:
        return float(np.log(self.u))


def _check_consistent(alpha: AlphaVector, stats: CardinalityStats) -> None:
    if len(alpha) != stats.counts.size:
        raise ValueError(
            f"alpha has {len(alpha)} entries but the cardinality histogram has {stats.counts.size}"
        )


def _check_cardinality(m: int, num_labels: int) -> None:
    if not 0 <= m <= num_labels:
        raise ValueError(f"cardinality {m} outside [0, {num_labels}]")


def dc_pmf(alpha: AlphaVector, stats: CardinalityStats) -> np.ndarray:
    """Dirichlet-Categorical probabilities over every cardinality.

    返回
    ----
    np.ndarray
        长度 ``M + 1`` 的概率向量，``(α_m + C_m) / (Σα + C)``，各项为正且和为 1。
    """
    _check_consistent(alpha, stats)
    return (alpha.values + stats.counts) / (alpha.values.sum() + stats.total)


def dc_log_pmf(m: int, alpha: AlphaVector, stats: CardinalityStats) -> float:
    """``log DC(m; α, C)`` computed directly in the log domain."""
    _check_consistent(alpha, stats)
    _check_cardinality(m, stats.num_labels)
    return float(np.log(alpha.values[m] + stats.counts[m]) - np.log(alpha.values.sum() + stats.total))


def dc_grad_alpha(m: int, alpha: AlphaVector, stats: CardinalityStats) -> np.ndarray:
    """Gradient of ``log DC(m; α, C)`` with respect to every ``α_j``.

    ``∂/∂α_j = δ_{jm} / (α_m + C_m) − 1 / (Σα + C)``。
    """
    _check_consistent(alpha, stats)
    _check_cardinality(m, stats.num_labels)
    grad = np.full(len(alpha), -1.0 / (alpha.values.sum() + stats.total))
    grad[m] += 1.0 / (alpha.values[m] + stats.counts[m])
    return grad


def dc_log_likelihood(cardinalities: np.ndarray, alphas: np.ndarray, stats: CardinalityStats) -> np.ndarray:
    """Batched ``log DC(m_i; α_i, C)`` for rows of ``alphas`` (shape ``(B, M + 1)``)."""
    rows = np.arange(alphas.shape[0])
    picked = alphas[rows, cardinalities] + stats.counts[cardinalities]
    return np.log(picked) - np.log(alphas.sum(axis=1) + stats.total)


def dc_grad_alphas(cardinalities: np.ndarray, alphas: np.ndarray, stats: CardinalityStats) -> np.ndarray:
    """Batched :func:`dc_grad_alpha`; returns an array shaped like ``alphas``."""
    rows = np.arange(alphas.shape[0])
    grad = np.repeat(-1.0 / (alphas.sum(axis=1, keepdims=True) + stats.total), alphas.shape[1], axis=1)
    grad[rows, cardinalities] += 1.0 / (alphas[rows, cardinalities] + stats.counts[cardinalities])
    return grad


def set_log_density(
    labels: LabelSet,
    label_logits: np.ndarray,
    alpha: AlphaVector,
    stats: CardinalityStats,
    u: HyperVolumeUnit,
) -> float:
    """Unnormalised log-density of a label set.

    参数
    ----
    labels : LabelSet
        候选标签集合 𝒴。
    label_logits : np.ndarray
        长度 M 的标签 logit ``O^ℓ``。
    alpha : AlphaVector
        长度 ``M + 1`` 的 Dirichlet 参数。
    stats : CardinalityStats
        训练集基数直方图。
    u : HyperVolumeUnit
        超体积单位。

    返回
    ----
    float
        ``log DC(m) + m·log U + Σ_{ℓ∈𝒴} log σ(O^ℓ)``。

    说明
    ----
    logistic 概率的乘积在全部子集上并不归一，因此该值只作为推理目标与诊断使用。
    """
    logits = np.asarray(label_logits, dtype=float).reshape(-1)
    if logits.size != labels.num_labels:
        raise ValueError(f"expected {labels.num_labels} label logits, got {logits.size}")
    if stats.num_labels != labels.num_labels:
        raise ValueError(
            f"cardinality histogram covers M={stats.num_labels} but the label set has M={labels.num_labels}"
        )
    members = labels.sorted()
    label_term = float(np.sum(log_sigmoid(logits[members]))) if members else 0.0
    return dc_log_pmf(labels.cardinality, alpha, stats) + labels.cardinality * u.log_u + label_term

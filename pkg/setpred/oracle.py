"""Brute-force and numerical oracles for testing the fast paths.

本模块刻意不复用 ``set_model`` / ``inference`` 中的计算：集合密度、logistic 项与 DC 概率均在此重新
按定义实现，穷举顺序为标签位掩码的二进制计数，平局规则也独立实现，因此一致性测试同时覆盖规则本身。
所有函数为指数复杂度，仅用于 ``M ≤ 20`` 的校验。
"""

from __future__ import annotations

from typing import Callable, Iterator

import numpy as np

from .config import MODEL_DEFAULTS, VERIFY_DEFAULTS
from .inference import MapResult
from .network import DualOutput
from .set_model import CardinalityStats, HyperVolumeUnit, LabelSet

_CHUNK_BITS = 16


def _check_size(out: DualOutput, stats: CardinalityStats) -> int:
    if out.is_batch:
        raise ValueError("oracles operate on one sample at a time")
    num_labels = out.num_labels
    if num_labels > VERIFY_DEFAULTS.max_enumeration_labels:
        raise ValueError(
            f"refusing to enumerate 2^{num_labels} subsets; M must be <= {VERIFY_DEFAULTS.max_enumeration_labels}"
        )
    if stats.counts.size != num_labels + 1:
        raise ValueError(f"histogram has {stats.counts.size} bins, expected M + 1 = {num_labels + 1}")
    return num_labels


def _naive_alpha(card_preacts: np.ndarray) -> np.ndarray:
    a = np.asarray(card_preacts, dtype=float)
    soft = np.where(a > 30.0, a, np.log1p(np.exp(np.minimum(a, 30.0))))
    return soft + MODEL_DEFAULTS.alpha_floor


def _naive_log_cardinality(out: DualOutput, stats: CardinalityStats) -> np.ndarray:
    alpha = _naive_alpha(out.card_preacts)
    counts = stats.counts.astype(float)
    return np.log((alpha + counts) / (alpha.sum() + counts.sum()))


def _naive_log_sigmoid(logits: np.ndarray) -> np.ndarray:
    o = np.asarray(logits, dtype=float)
    return o - np.logaddexp(0.0, o)


def _subset_chunks(num_labels: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(masks, membership)`` blocks in binary-counting order."""
    total = 1 << num_labels
    step = 1 << _CHUNK_BITS
    bit_values = np.arange(num_labels)
    for start in range(0, total, step):
        masks = np.arange(start, min(start + step, total), dtype=np.int64)
        yield masks, ((masks[:, None] >> bit_values) & 1).astype(bool)


def _subset_scores(
    out: DualOutput, stats: CardinalityStats, u: HyperVolumeUnit
) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    num_labels = _check_size(out, stats)
    log_card = _naive_log_cardinality(out, stats)
    log_sig = _naive_log_sigmoid(out.label_logits)
    log_u = np.log(u.u)
    for masks, member in _subset_chunks(num_labels):
        sizes = member.sum(axis=1)
        label_term = np.where(member, log_sig, 0.0).sum(axis=1)
        yield masks, sizes, log_card[sizes] + sizes * log_u + label_term


def naive_set_log_density(labels: LabelSet, out: DualOutput, stats: CardinalityStats, u: HyperVolumeUnit) -> float:
    """Score one subset directly from the definition."""
    _check_size(out, stats)
    members = labels.sorted()
    log_card = _naive_log_cardinality(out, stats)[len(members)]
    return float(log_card + len(members) * np.log(u.u) + _naive_log_sigmoid(out.label_logits)[members].sum())


def _mask_labels(mask: int, num_labels: int) -> tuple[int, ...]:
    return tuple(bit for bit in range(num_labels) if mask >> bit & 1)


def brute_force_map(out: DualOutput, stats: CardinalityStats, u: HyperVolumeUnit) -> MapResult:
    """Maximise the set log-density over all ``2^M`` subsets.

    说明
    ----
    与最大值相差不超过 ``tie_tolerance`` 的子集视为平局：先取基数最小者，再取排序后索引元组字典序最小者。
    """
    num_labels = _check_size(out, stats)
    all_masks, all_sizes, all_scores = [], [], []
    for masks, sizes, scores in _subset_scores(out, stats, u):
        all_masks.append(masks)
        all_sizes.append(sizes)
        all_scores.append(scores)
    masks = np.concatenate(all_masks)
    sizes = np.concatenate(all_sizes)
    scores = np.concatenate(all_scores)

    top = scores.max()
    tied = np.flatnonzero(scores >= top - MODEL_DEFAULTS.tie_tolerance)
    smallest = sizes[tied].min()
    candidates = [_mask_labels(int(masks[i]), num_labels) for i in tied if sizes[i] == smallest]
    chosen = min(candidates)
    winner = next(i for i in tied if _mask_labels(int(masks[i]), num_labels) == chosen)
    return MapResult(LabelSet.of(chosen, num_labels), len(chosen), float(scores[winner]))


def enumerate_set_mass(out: DualOutput, stats: CardinalityStats, u: HyperVolumeUnit) -> float:
    """``Σ_Z exp(set_log_density(Z))`` over all subsets; reported, not expected to equal 1."""
    log_mass = -np.inf
    for _, _, scores in _subset_scores(out, stats, u):
        log_mass = np.logaddexp(log_mass, np.logaddexp.reduce(scores))
    return float(np.exp(log_mass))


def finite_diff_grad(
    fn: Callable[[np.ndarray], float], point: np.ndarray, step: float = VERIFY_DEFAULTS.fd_step
) -> np.ndarray:
    """Central-difference gradient estimate ``(f(x+h·e_j) − f(x−h·e_j)) / 2h``.

    参数
    ----
    fn : Callable[[np.ndarray], float]
        标量函数。
    point : np.ndarray
        求导位置，任意形状。
    step : float
        差分步长 h，须为正。
    """
    if step <= 0.0:
        raise ValueError(f"finite-difference step must be positive, got {step}")
    x = np.array(point, dtype=float)
    grad = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_grad = grad.reshape(-1)
    for j in range(flat_x.size):
        original = flat_x[j]
        flat_x[j] = original + step
        upper = float(fn(x.copy()))
        flat_x[j] = original - step
        lower = float(fn(x.copy()))
        flat_x[j] = original
        if not (np.isfinite(upper) and np.isfinite(lower)):
            raise ValueError(f"non-finite function value while probing coordinate {j}")
        flat_grad[j] = (upper - lower) / (2.0 * step)
    return grad

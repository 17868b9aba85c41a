"""Multi-label evaluation: per-class (C), overall (O) and per-instance (I) precision/recall/F1.

三类指标的 F1 均为聚合后 P 与 R 的调和平均（P+R=0 时为 0），而非逐项 F1 的平均。

空分母约定：
* 逐类：只在预测或真值中出现过的类别参与平均；无预测的类别 P=0，无真值的类别 R=0。
* 逐样本：预测与真值均为空时 P=R=1；仅一方为空时 P=R=0。
* 总体：既无预测也无真值时 P=R=1；否则无预测时 P=0，无真值时 R=0。
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .inference import topk_set
from .set_model import LabelSet

TARGETS = ("c", "o", "i")


def harmonic_mean(precision: float, recall: float) -> float:
    total = precision + recall
    return 0.0 if total <= 0.0 else 2.0 * precision * recall / total


@dataclass(frozen=True)
class EvalReport:
    """Nine precision/recall/F1 scores plus cardinality error.

    Attributes
    ----------
    c_p, c_r, c_f1 : float
        逐类平均的精确率、召回率与 F1。
    o_p, o_r, o_f1 : float
        所有决策汇总（micro）的精确率、召回率与 F1。
    i_p, i_r, i_f1 : float
        逐样本平均的精确率、召回率与 F1。
    cardinality_mae, cardinality_sd : float
        预测基数绝对误差的均值与总体标准差。
    """

    c_p: float
    c_r: float
    c_f1: float
    o_p: float
    o_r: float
    o_f1: float
    i_p: float
    i_r: float
    i_f1: float
    cardinality_mae: float
    cardinality_sd: float

    def f1(self, target: str) -> float:
        """F1 of one family: ``"c"``, ``"o"`` or ``"i"``."""
        if target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}, got {target!r}")
        return getattr(self, f"{target}_f1")

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    def format_text(self) -> str:
        return "\n".join(f"{key}={value:.6f}" for key, value in self.as_dict().items())


def _check_pairs(predictions: Sequence[LabelSet], ground_truth: Sequence[LabelSet]) -> None:
    if len(predictions) != len(ground_truth):
        raise ValueError(f"got {len(predictions)} predictions for {len(ground_truth)} ground-truth sets")
    if not predictions:
        raise ValueError("evaluation needs at least one sample")


def _indicator_matrix(sets: Sequence[LabelSet], num_labels: int) -> np.ndarray:
    matrix = np.zeros((len(sets), num_labels), dtype=bool)
    for row, labels in enumerate(sets):
        if labels.num_labels != num_labels:
            raise ValueError(f"label set uses M={labels.num_labels}, expected {num_labels}")
        matrix[row, labels.sorted()] = True
    return matrix


def _ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    out = np.zeros(numerator.shape, dtype=float)
    np.divide(numerator, denominator, out=out, where=denominator > 0)
    return out


def cardinality_error(predictions: Sequence[LabelSet], ground_truth: Sequence[LabelSet]) -> tuple[float, float]:
    """Mean and population standard deviation of ``| |pred_i| − |gt_i| |``."""
    _check_pairs(predictions, ground_truth)
    diffs = np.abs(
        np.array([len(p) for p in predictions], dtype=float) - np.array([len(g) for g in ground_truth], dtype=float)
    )
    return float(diffs.mean()), float(diffs.std())


def constant_cardinality_mae(cardinality: int, ground_truth: Sequence[LabelSet]) -> float:
    """MAE of a predictor that always outputs ``cardinality`` labels."""
    if not ground_truth:
        raise ValueError("evaluation needs at least one sample")
    sizes = np.array([len(g) for g in ground_truth], dtype=float)
    return float(np.mean(np.abs(sizes - cardinality)))


def evaluate(predictions: Sequence[LabelSet], ground_truth: Sequence[LabelSet], num_labels: int) -> EvalReport:
    """Score predicted label sets against ground truth.

    参数
    ----
    predictions, ground_truth : Sequence[LabelSet]
        等长的预测与真值集合列表。
    num_labels : int
        标签数 M，所有集合的索引须小于 M。

    返回
    ----
    EvalReport
        九项指标与基数误差；样本顺序与类别重排均不改变结果。
    """
    _check_pairs(predictions, ground_truth)
    pred = _indicator_matrix(predictions, num_labels)
    gt = _indicator_matrix(ground_truth, num_labels)
    hits = pred & gt

    tp_class = hits.sum(axis=0)
    pred_class = pred.sum(axis=0)
    gt_class = gt.sum(axis=0)
    active = (pred_class > 0) | (gt_class > 0)
    if np.any(active):
        c_p = float(_ratio(tp_class, pred_class)[active].mean())
        c_r = float(_ratio(tp_class, gt_class)[active].mean())
    else:
        c_p = c_r = 1.0

    tp_all, pred_all, gt_all = int(hits.sum()), int(pred.sum()), int(gt.sum())
    if pred_all == 0 and gt_all == 0:
        o_p = o_r = 1.0
    else:
        o_p = tp_all / pred_all if pred_all else 0.0
        o_r = tp_all / gt_all if gt_all else 0.0

    tp_img = hits.sum(axis=1)
    pred_img = pred.sum(axis=1)
    gt_img = gt.sum(axis=1)
    both_empty = (pred_img == 0) & (gt_img == 0)
    img_p = np.where(both_empty, 1.0, _ratio(tp_img, pred_img))
    img_r = np.where(both_empty, 1.0, _ratio(tp_img, gt_img))
    i_p, i_r = float(img_p.mean()), float(img_r.mean())

    mae, sd = cardinality_error(predictions, ground_truth)
    return EvalReport(
        c_p=c_p,
        c_r=c_r,
        c_f1=harmonic_mean(c_p, c_r),
        o_p=o_p,
        o_r=o_r,
        o_f1=harmonic_mean(o_p, o_r),
        i_p=i_p,
        i_r=i_r,
        i_f1=harmonic_mean(i_p, i_r),
        cardinality_mae=mae,
        cardinality_sd=sd,
    )


def k_sweep(
    score_matrix: np.ndarray, ground_truth: Sequence[LabelSet], num_labels: int
) -> list[tuple[int, EvalReport]]:
    """Evaluate fixed top-k decoding for every ``k ∈ {1, …, M}``.

    返回的序列即精确率-召回率曲线上的各点。
    """
    scores = np.asarray(score_matrix, dtype=float)
    if scores.ndim != 2 or scores.shape[0] == 0:
        raise ValueError("score matrix must be a non-empty (n, M) array")
    if scores.shape[1] != num_labels:
        raise ValueError(f"score matrix has {scores.shape[1]} columns, expected M={num_labels}")
    sweep = []
    for k in range(1, num_labels + 1):
        predictions = [topk_set(row, k) for row in scores]
        sweep.append((k, evaluate(predictions, ground_truth, num_labels)))
    return sweep


def best_k(
    score_matrix: np.ndarray, ground_truth: Sequence[LabelSet], num_labels: int, target: str = "o"
) -> tuple[int, EvalReport]:
    """``k*`` maximising the chosen F1 family (ties → smaller k) and its report."""
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}, got {target!r}")
    best = None
    for k, report in k_sweep(score_matrix, ground_truth, num_labels):
        if best is None or report.f1(target) > best[1].f1(target):
            best = (k, report)
    return best

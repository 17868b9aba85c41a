"""Application-facing prediction service.

对网络、基数直方图与超体积单位 U 的高层封装，供 CLI 与基准流程复用：
1. 批量前向并按所选解码器（jds / ds / gt / topk:k / topk:best）输出集合
2. 计算评估报告
3. 在验证集上调节 U

该层无状态（除持有的模型外），结果按样本顺序返回，可安全复用。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .api_models import ModelArtifact
from .config import MODEL_DEFAULTS
from .data import Dataset
from .inference import MapResult, map_set, sequential_set, topk_set
from .io_artifact import artifact_params, artifact_stats
from .metrics import EvalReport, best_k, evaluate
from .network import DualOutput, ModelParams, forward
from .set_model import CardinalityStats, HyperVolumeUnit, LabelSet, set_log_density

logger = logging.getLogger(__name__)

FIXED_DECODERS = ("jds", "ds", "gt")


def parse_decoder(name: str, num_labels: int) -> tuple[str, Optional[int]]:
    """Split a decoder name into ``(kind, k)``; ``k`` is only set for ``topk:<k>``."""
    if name in FIXED_DECODERS:
        return name, None
    if name == "topk:best":
        return "topk", None
    if name.startswith("topk:"):
        try:
            k = int(name.split(":", 1)[1])
        except ValueError as exc:
            raise ValueError(f"invalid decoder {name!r}; expected topk:<k> or topk:best") from exc
        if not 0 <= k <= num_labels:
            raise ValueError(f"topk k must lie in [0, {num_labels}], got {k}")
        return "topk", k
    raise ValueError(f"unknown decoder {name!r}; choose from jds, ds, gt, topk:<k>, topk:best")


@dataclass
class Prediction:
    """One decoded sample.

    Attributes
    ----------
    labels : LabelSet
        预测标签集合。
    log_score : float
        该集合在联合模型下的集合对数密度。
    """

    labels: LabelSet
    log_score: float

    @property
    def cardinality(self) -> int:
        return self.labels.cardinality


@dataclass
class EvaluationOutcome:
    """Report plus per-sample predictions of one decoder run."""

    decoder: str
    report: EvalReport
    predictions: List[Prediction]
    k: Optional[int] = None


class SetPredictor:
    """Facade bundling network parameters, cardinality histogram and ``U``.

    ``card_params`` 可选：提供时 ``ds`` 解码器的基数分布来自这一独立网络（两阶段基线），
    标签 logit 与集合得分仍来自主网络。
    """

    def __init__(
        self,
        params: ModelParams,
        stats: CardinalityStats,
        u: float = MODEL_DEFAULTS.hyper_volume_unit,
        card_params: Optional[ModelParams] = None,
    ) -> None:
        if stats.num_labels != params.num_labels:
            raise ValueError(f"cardinality histogram covers M={stats.num_labels}, network has M={params.num_labels}")
        if card_params is not None and card_params.arch.layer_sizes != params.arch.layer_sizes:
            raise ValueError("cardinality network must share the classifier architecture")
        self.params = params
        self.stats = stats
        self.u = HyperVolumeUnit(float(u))
        self.card_params = card_params

    @classmethod
    def from_artifact(cls, artifact: ModelArtifact, u: Optional[float] = None) -> "SetPredictor":
        """Build a predictor from a loaded artifact; ``u`` overrides the stored unit."""
        return cls(artifact_params(artifact), artifact_stats(artifact), artifact.u if u is None else u)

    @property
    def num_labels(self) -> int:
        return self.params.num_labels

    def with_u(self, u: float) -> "SetPredictor":
        return SetPredictor(self.params, self.stats, u, self.card_params)

    def outputs(self, features: np.ndarray) -> DualOutput:
        """Eval-mode outputs for a feature matrix ``(n, l)``."""
        batch = np.atleast_2d(np.asarray(features, dtype=float))
        if batch.shape[1] != self.params.arch.input_dim:
            raise ValueError(f"features have dimension {batch.shape[1]}, model expects {self.params.arch.input_dim}")
        out, _ = forward(self.params, batch, mode="eval")
        return out

    def _check_dataset(self, dataset: Dataset) -> None:
        if dataset.num_labels != self.num_labels:
            raise ValueError(f"dataset has M={dataset.num_labels} labels but the model has M={self.num_labels}")
        if dataset.input_dim != self.params.arch.input_dim:
            raise ValueError(f"dataset has l={dataset.input_dim} features but the model expects {self.params.arch.input_dim}")

    def infer(self, features: np.ndarray) -> List[MapResult]:
        """Exact MAP set for every row of ``features``."""
        out = self.outputs(features)
        return [map_set(out.row(i), self.stats, self.u) for i in range(len(out))]

    def _score(self, labels: LabelSet, row: DualOutput) -> Prediction:
        return Prediction(labels, set_log_density(labels, row.label_logits, row.alpha(), self.stats, self.u))

    def decode(
        self,
        dataset: Dataset,
        decoder: str,
        target: str = "o",
    ) -> tuple[List[Prediction], Optional[int]]:
        """Decode every sample of ``dataset``.

        参数
        ----
        dataset : Dataset
            待解码数据；``gt`` 与 ``topk:best`` 解码器需要其中的真值集合。
        decoder : str
            ``jds``、``ds``、``gt``、``topk:<k>`` 或 ``topk:best``。
        target : str
            ``topk:best`` 选择 k* 时最大化的 F1 类别（``c`` / ``o`` / ``i``）。

        返回
        ----
        tuple[list[Prediction], int | None]
            预测序列以及 top-k 解码使用的 k（其他解码器为 ``None``）。
        """
        self._check_dataset(dataset)
        kind, k = parse_decoder(decoder, self.num_labels)
        if len(dataset) == 0:
            return [], k
        out = self.outputs(dataset.features)
        rows = [out.row(i) for i in range(len(out))]

        if kind == "topk" and k is None:
            k, _ = best_k(out.label_logits, dataset.label_sets, self.num_labels, target)
        if kind == "jds":
            results = [map_set(row, self.stats, self.u) for row in rows]
            return [Prediction(r.labels, r.log_score) for r in results], None
        if kind == "ds":
            card_out = out
            if self.card_params is not None:
                card_out, _ = forward(self.card_params, dataset.features, mode="eval")
            sets = [
                sequential_set(DualOutput(row.label_logits, card_out.card_preacts[i]), self.stats)
                for i, row in enumerate(rows)
            ]
        elif kind == "gt":
            sets = [topk_set(row.label_logits, sample.labels.cardinality) for row, sample in zip(rows, dataset)]
        else:
            sets = [topk_set(row.label_logits, k) for row in rows]
        return [self._score(labels, row) for labels, row in zip(sets, rows)], k

    def evaluate(self, dataset: Dataset, decoder: str, target: str = "o") -> EvaluationOutcome:
        """Decode ``dataset`` and score the predictions against its label sets."""
        predictions, k = self.decode(dataset, decoder, target)
        report = evaluate([p.labels for p in predictions], dataset.label_sets, self.num_labels)
        logger.info("decoder %s: c_f1=%.4f o_f1=%.4f i_f1=%.4f", decoder, report.c_f1, report.o_f1, report.i_f1)
        return EvaluationOutcome(decoder, report, predictions, k)

    def tune_u(
        self,
        val: Dataset,
        candidates: Sequence[float] = MODEL_DEFAULTS.u_candidates,
        target: str = "o",
    ) -> tuple[float, List[tuple[float, float]]]:
        """Pick the ``U`` maximising JDS F1 on validation data (ties → earlier candidate).

        返回最优 U 以及每个候选值对应的 F1。
        """
        if not candidates:
            raise ValueError("at least one candidate u is required")
        if len(val) == 0:
            raise ValueError("tuning u needs a non-empty validation set")
        scores = []
        best_u, best_f1 = None, -np.inf
        for u in candidates:
            f1 = self.with_u(u).evaluate(val, "jds").report.f1(target)
            scores.append((float(u), f1))
            if f1 > best_f1:
                best_u, best_f1 = float(u), f1
        logger.info("tuned u=%.4g (%s-F1 %.4f on validation)", best_u, target.upper(), best_f1)
        return best_u, scores

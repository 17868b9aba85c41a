"""Synthetic comparison of joint decoding against cardinality-first and top-k baselines.

比较流程：
1. 训练联合模型（BCE + DC，同一组参数）
2. 训练仅分类网络（BCE），再以其权重初始化并单独训练基数网络（仅 DC），构成两阶段基线
3. 在测试集上评估 BCE topk:best、DS(BCE-DC)、JDS，以及使用真值基数的上界行

每行给出九项 F1 相关指标与基数 MAE；另附恒定众数基数预测器的 MAE 与两种分类器的 top-k 扫描曲线。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

from .api_models import Architecture, TrainConfig
from .config import MODEL_DEFAULTS
from .data import Dataset, cardinality_stats
from .engine import TrainingEngine, TrainingResult
from .metrics import EvalReport, constant_cardinality_mae, k_sweep
from .service import SetPredictor

logger = logging.getLogger(__name__)


@dataclass
class BenchmarkRow:
    """One table row: a (model, decoder) pair and its report."""

    name: str
    decoder: str
    report: EvalReport
    k: Optional[int] = None

    def as_dict(self) -> dict:
        payload = {"name": self.name, "decoder": self.decoder, "k": self.k}
        payload.update(self.report.as_dict())
        return payload


@dataclass
class BenchmarkResult:
    """Full comparison output.

    Attributes
    ----------
    rows : list[BenchmarkRow]
        各方法的评估行。
    modal_cardinality_mae : float
        恒定预测训练集众数基数时的 MAE。
    u : float
        联合解码使用的超体积单位（可能已在验证集上调节）。
    sweeps : dict[str, list[dict]]
        分类器独立训练与联合训练两种 logit 的 top-k 扫描（精确率-召回率曲线）。
    """

    rows: List[BenchmarkRow]
    modal_cardinality_mae: float
    u: float
    sweeps: dict = field(default_factory=dict)

    def row(self, name: str) -> BenchmarkRow:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "u": self.u,
            "modal_cardinality_mae": self.modal_cardinality_mae,
            "rows": [row.as_dict() for row in self.rows],
            "sweeps": self.sweeps,
        }

    def format_table(self) -> str:
        header = (
            f"{'method':<22}{'C-P':>8}{'C-R':>8}{'C-F1':>8}{'O-P':>8}{'O-R':>8}{'O-F1':>8}"
            f"{'I-P':>8}{'I-R':>8}{'I-F1':>8}  card MAE ± SD"
        )
        lines = [header, "-" * len(header)]
        for row in self.rows:
            r = row.report
            scores = (r.c_p, r.c_r, r.c_f1, r.o_p, r.o_r, r.o_f1, r.i_p, r.i_r, r.i_f1)
            cells = "".join(f"{100.0 * value:>8.1f}" for value in scores)
            name = row.name if row.k is None else f"{row.name} (k={row.k})"
            lines.append(f"{name:<22}{cells}  {r.cardinality_mae:.2f} ± {r.cardinality_sd:.2f}")
        lines.append(f"modal-cardinality MAE: {self.modal_cardinality_mae:.2f}")
        lines.append(f"u: {self.u:.6g}")
        return "\n".join(lines)


def _sweep_payload(predictor: SetPredictor, dataset: Dataset) -> list:
    logits = predictor.outputs(dataset.features).label_logits
    return [
        {"k": k, "o_p": rep.o_p, "o_r": rep.o_r, "o_f1": rep.o_f1, "c_f1": rep.c_f1, "i_f1": rep.i_f1}
        for k, rep in k_sweep(logits, dataset.label_sets, dataset.num_labels)
    ]


def train_baselines(
    train: Dataset, val: Dataset, arch: Architecture, config: TrainConfig
) -> tuple[TrainingResult, TrainingResult, TrainingResult]:
    """Train the joint model, the classifier-only model and the separate cardinality network."""
    stats = cardinality_stats(train)
    logger.info("training joint model")
    joint = TrainingEngine(arch, config.copy(update={"objective": "joint"})).fit(train, val, stats)
    logger.info("training classifier-only model")
    classifier = TrainingEngine(arch, config.copy(update={"objective": "labels_only"})).fit(train, val, stats)
    logger.info("training cardinality network from classifier weights")
    cardinality = TrainingEngine(arch, config.copy(update={"objective": "cardinality_only"})).fit(
        train, val, stats, init=classifier.params
    )
    return joint, classifier, cardinality


def run_benchmark(
    train: Dataset,
    val: Dataset,
    test: Dataset,
    arch: Architecture,
    config: TrainConfig,
    u: float = MODEL_DEFAULTS.hyper_volume_unit,
    tune_u: bool = False,
    target: str = "o",
) -> BenchmarkResult:
    """Train every model and evaluate all decoders on ``test``.

    参数
    ----
    train, val, test : Dataset
        训练、验证与测试集。
    arch : Architecture
        三个网络共享的结构。
    config : TrainConfig
        训练超参数；``objective`` 字段会按模型被覆盖。
    u : float
        联合解码的超体积单位。
    tune_u : bool
        为真时在验证集上从候选值中选择 U。
    target : str
        ``topk:best`` 与 U 调节时最大化的 F1 类别。
    """
    stats = cardinality_stats(train)
    joint, classifier, cardinality = train_baselines(train, val, arch, config)

    joint_model = SetPredictor(joint.params, stats, u)
    if tune_u:
        u, _ = joint_model.tune_u(val, target=target)
        joint_model = joint_model.with_u(u)
    classifier_model = SetPredictor(classifier.params, stats, u, card_params=cardinality.params)

    plan = [
        ("BCE topk:best", classifier_model, "topk:best"),
        ("DS (BCE-DC)", classifier_model, "ds"),
        ("JDS topk:best", joint_model, "topk:best"),
        ("JDS", joint_model, "jds"),
        ("BCE GT-cardinality", classifier_model, "gt"),
        ("JDS GT-cardinality", joint_model, "gt"),
    ]
    rows = []
    for name, model, decoder in plan:
        outcome = model.evaluate(test, decoder, target)
        rows.append(BenchmarkRow(name, decoder, outcome.report, outcome.k))
        logger.info("%s: O-F1 %.4f", name, outcome.report.o_f1)

    modal_mae = constant_cardinality_mae(stats.modal_cardinality(), test.label_sets)
    sweeps = {
        "classifier": _sweep_payload(classifier_model, test),
        "joint": _sweep_payload(joint_model, test),
    }
    return BenchmarkResult(rows=rows, modal_cardinality_mae=modal_mae, u=float(u), sweeps=sweeps)

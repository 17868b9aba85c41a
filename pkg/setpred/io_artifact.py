"""Model artifact, training log, report and prediction-table persistence.

模型文件为单个 JSON 文档（浮点数 17 位有效数字，读入再写出字节一致），同时保存网络参数 w、
训练集基数直方图 C_m 与超体积单位 U。训练日志写为 CSV 旁路文件，逐样本预测诊断写为 Parquet。
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from pydantic import ValidationError

from .api_models import ModelArtifact, TrainConfig
from .network import ModelParams
from .set_model import CardinalityStats, LabelSet
from .utils import dumps_exact, format_float

LOG_COLUMNS = ("epoch", "lr", "train_objective", "val_objective")


def build_artifact(
    params: ModelParams,
    stats: CardinalityStats,
    u: float,
    train_config: TrainConfig,
    selected_epoch: int,
    train_objective: float,
    val_objective: Optional[float] = None,
) -> ModelArtifact:
    """Assemble a :class:`ModelArtifact` from in-memory training outputs."""
    return ModelArtifact(
        architecture=params.arch,
        weights=[w.tolist() for w in params.weights],
        biases=[b.tolist() for b in params.biases],
        cardinality_counts=[int(c) for c in stats.counts],
        u=float(u),
        train_config=train_config,
        seed=train_config.seed,
        selected_epoch=selected_epoch,
        train_objective=float(train_objective),
        val_objective=None if val_objective is None else float(val_objective),
    )


def artifact_params(artifact: ModelArtifact) -> ModelParams:
    weights = [np.array(w, dtype=float) for w in artifact.weights]
    biases = [np.array(b, dtype=float) for b in artifact.biases]
    return ModelParams(artifact.architecture, weights, biases)


def artifact_stats(artifact: ModelArtifact) -> CardinalityStats:
    return CardinalityStats(np.array(artifact.cardinality_counts, dtype=np.int64))


def artifact_to_text(artifact: ModelArtifact) -> str:
    return dumps_exact(artifact.dict()) + "\n"


def save_artifact(artifact: ModelArtifact, path: Path) -> None:
    """Write the artifact JSON; parent directories are created on demand."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(artifact_to_text(artifact), encoding="utf-8")


def load_artifact(path: Path) -> ModelArtifact:
    """Read and validate an artifact; shape errors are reported with the file name."""
    path = Path(path)
    try:
        return ModelArtifact.parse_raw(path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise ValueError(f"{path}: invalid model artifact: {exc}") from exc


def write_training_log(history: Sequence, path: Path) -> None:
    """Write per-epoch objectives as CSV (``epoch,lr,train_objective,val_objective``)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for record in history:
            val = "" if record.val_objective is None else format_float(record.val_objective)
            writer.writerow([record.epoch, format_float(record.lr), format_float(record.train_objective), val])


def write_report_json(payload: dict, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_exact(payload) + "\n", encoding="utf-8")


def write_report_text(text: str, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text.rstrip("\n") + "\n", encoding="utf-8")


def write_predictions_parquet(
    path: Path,
    predictions: Sequence[LabelSet],
    ground_truth: Sequence[LabelSet],
    log_scores: Sequence[float],
) -> None:
    """Write per-sample predictions into a columnar Parquet file.

    参数
    ----
    path : Path
        输出文件路径。
    predictions, ground_truth : Sequence[LabelSet]
        预测集合与真值集合（等长）。
    log_scores : Sequence[float]
        每个预测集合的集合对数密度。

    说明
    ----
    输出列为 ``sample``、``predicted``、``ground_truth``、``m_pred``、``m_true``、``log_score``；
    没有样本时同样写出带表结构的空表，方便下游流水线处理。
    """
    import pyarrow as pa
    import pyarrow.parquet as pq

    if not len(predictions) == len(ground_truth) == len(log_scores):
        raise ValueError("predictions, ground truth and log scores must have equal length")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    label_list = pa.list_(pa.int32())
    table = pa.table(
        {
            "sample": pa.array(np.arange(len(predictions), dtype=np.int32)),
            "predicted": pa.array([p.sorted() for p in predictions], type=label_list),
            "ground_truth": pa.array([g.sorted() for g in ground_truth], type=label_list),
            "m_pred": pa.array([p.cardinality for p in predictions], type=pa.int16()),
            "m_true": pa.array([g.cardinality for g in ground_truth], type=pa.int16()),
            "log_score": pa.array([float(s) for s in log_scores], type=pa.float64()),
        }
    )
    pq.write_table(table, path)

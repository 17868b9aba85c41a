"""Training engine for the shared label/cardinality network.

训练流程：
1. 按种子派生 ``init``、``shuffle``、``dropout`` 三个独立随机流
2. 每个 epoch 以 ``base_lr · decay^epoch`` 的学习率执行小批量动量 SGD（train 模式，含 dropout）
3. epoch 结束后以 eval 模式计算训练集与验证集目标值，保留验证目标最低的 epoch（平局取较早者）

目标值出现 NaN/Inf 时立即中止并抛出 ``FloatingPointError``，消息中给出 epoch 与步数。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .api_models import Architecture, TrainConfig
from .data import Dataset
from .loss import data_loss_and_grad, objective_from_arrays
from .network import ModelParams, OptimizerState, init_params, lr_schedule, sgd_step
from .set_model import CardinalityStats
from .utils import make_rng

logger = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    """Objective values after one epoch (eval mode, regulariser included)."""

    epoch: int
    lr: float
    train_objective: float
    val_objective: Optional[float] = None


@dataclass
class TrainingResult:
    """Outcome of :meth:`TrainingEngine.fit`.

    Attributes
    ----------
    params : ModelParams
        选中 epoch 结束时的参数。
    history : list[EpochRecord]
        每个 epoch 的目标值记录。
    selected_epoch : int
        验证目标最低的 epoch（无验证集时按训练目标选择）。
    """

    params: ModelParams
    history: List[EpochRecord] = field(default_factory=list)
    selected_epoch: int = 0

    @property
    def selected(self) -> EpochRecord:
        return self.history[self.selected_epoch]


@dataclass
class DescentTrace:
    """Objective trajectory of a full-batch descent run; ``objectives[0]`` is the starting value."""

    params: ModelParams
    objectives: List[float]


def _arrays(dataset: Dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return dataset.features, dataset.indicators(), dataset.cardinalities()


def _require_finite(value: float, where: str) -> float:
    if not np.isfinite(value):
        raise FloatingPointError(f"non-finite objective {value!r} at {where}")
    return value


class TrainingEngine:
    """Mini-batch trainer for one architecture and training configuration."""

    def __init__(self, arch: Architecture, config: TrainConfig) -> None:
        self.arch = arch
        self.config = config

    def _initial(self, init: Optional[ModelParams]) -> ModelParams:
        if init is None:
            return init_params(self.arch, self.config.seed)
        if init.arch.layer_sizes != self.arch.layer_sizes:
            raise ValueError(f"initial parameters have layers {init.arch.layer_sizes}, expected {self.arch.layer_sizes}")
        return ModelParams(self.arch, [w.copy() for w in init.weights], [b.copy() for b in init.biases])

    def _check_dims(self, dataset: Dataset, stats: CardinalityStats) -> None:
        if dataset.input_dim != self.arch.input_dim or dataset.num_labels != self.arch.num_labels:
            raise ValueError(
                f"dataset (l={dataset.input_dim}, M={dataset.num_labels}) does not match the network "
                f"(l={self.arch.input_dim}, M={self.arch.num_labels})"
            )
        if stats.num_labels != self.arch.num_labels:
            raise ValueError(f"cardinality histogram covers M={stats.num_labels}, expected {self.arch.num_labels}")

    def fit(
        self,
        train: Dataset,
        val: Optional[Dataset],
        stats: CardinalityStats,
        init: Optional[ModelParams] = None,
    ) -> TrainingResult:
        """Train and return the parameters of the best epoch.

        参数
        ----
        train : Dataset
            训练集，不可为空。
        val : Dataset, 可选
            验证集；为空或缺省时按训练目标选择 epoch。
        stats : CardinalityStats
            训练集基数直方图（DC 项的伪计数）。
        init : ModelParams, 可选
            初始参数；缺省时由 ``seed`` 的 ``init`` 流抽取。

        返回
        ----
        TrainingResult
            选中 epoch 的参数以及完整的逐 epoch 记录。
        """
        if len(train) == 0:
            raise ValueError("training set must contain at least one sample")
        self._check_dims(train, stats)
        cfg = self.config
        params = self._initial(init)
        x_train, z_train, m_train = _arrays(train)
        has_val = val is not None and len(val) > 0
        if has_val:
            self._check_dims(val, stats)
            x_val, z_val, m_val = _arrays(val)

        shuffle_rng = make_rng(cfg.seed, "shuffle")
        dropout_rng = make_rng(cfg.seed, "dropout")
        state = OptimizerState.initial(params, cfg.base_lr)
        result = TrainingResult(params=params.copy())
        best_score = np.inf

        for epoch in range(cfg.epochs):
            lr = lr_schedule(epoch, cfg.base_lr, cfg.lr_decay)
            order = shuffle_rng.permutation(len(train))
            for step, start in enumerate(range(0, len(train), cfg.batch_size)):
                idx = order[start : start + cfg.batch_size]
                loss, grads = data_loss_and_grad(
                    params, x_train[idx], z_train[idx], m_train[idx], stats, cfg, mode="train", rng=dropout_rng
                )
                _require_finite(loss, f"epoch {epoch}, step {step}")
                params, state = sgd_step(params, grads, state, lr, cfg.momentum, 2.0 * cfg.gamma)
            state = OptimizerState(state.velocity, lr, epoch + 1)

            train_obj = _require_finite(
                objective_from_arrays(params, x_train, z_train, m_train, stats, cfg), f"epoch {epoch} (train objective)"
            )
            val_obj = None
            if has_val:
                val_obj = _require_finite(
                    objective_from_arrays(params, x_val, z_val, m_val, stats, cfg), f"epoch {epoch} (val objective)"
                )
            result.history.append(EpochRecord(epoch, lr, train_obj, val_obj))
            logger.info(
                "epoch %d lr=%.6g train_objective=%.6f val_objective=%s",
                epoch,
                lr,
                train_obj,
                "n/a" if val_obj is None else f"{val_obj:.6f}",
            )

            score = val_obj if val_obj is not None else train_obj
            if score < best_score:
                best_score = score
                result.params = params.copy()
                result.selected_epoch = epoch

        logger.info("selected epoch %d (objective %.6f)", result.selected_epoch, best_score)
        return result

    def full_batch_descent(
        self,
        dataset: Dataset,
        stats: CardinalityStats,
        iterations: int = 100,
        lr: float = 1e-4,
        init: Optional[ModelParams] = None,
    ) -> DescentTrace:
        """Plain gradient descent on the whole dataset with dropout off.

        每次迭代使用 eval 模式的精确梯度（含 ``2γW``），不使用动量；用于验证目标值单调下降的合理性检查。
        """
        if len(dataset) == 0:
            raise ValueError("descent needs at least one sample")
        if iterations < 0 or lr <= 0.0:
            raise ValueError(f"iterations must be >= 0 and lr > 0, got {iterations}, {lr}")
        self._check_dims(dataset, stats)
        cfg = self.config
        params = self._initial(init)
        features, indicators, cardinalities = _arrays(dataset)
        state = OptimizerState.initial(params, lr)
        objectives = []
        for iteration in range(iterations + 1):
            loss, grads = data_loss_and_grad(params, features, indicators, cardinalities, stats, cfg)
            objective = _require_finite(loss + cfg.gamma * params.weight_sq_norm(), f"iteration {iteration}")
            objectives.append(objective)
            if iteration == iterations:
                break
            params, state = sgd_step(params, grads, state, lr, 0.0, 2.0 * cfg.gamma)
        return DescentTrace(params, objectives)

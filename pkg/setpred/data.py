"""Synthetic multi-label data, JSONL dataset files, deterministic splits and cardinality histograms.

合成数据生成过程：为每个标签抽取原型向量 ``p_ℓ ∈ ℝ^l``；每个样本先从偏态类别分布中抽取基数 m，
再无放回抽取 m 个不同标签，特征为被选原型之和加高斯噪声。无噪声极限下标签集合可由特征恢复。

数据集文件格式（JSON Lines）：首行为表头 ``{"l": …, "M": …}``，其后每行一个样本
``{"x": […], "labels": […]}``，浮点数以 17 位有效数字写出以保证精确往返。
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from pydantic import ValidationError

from .api_models import DatasetHeader, SampleRecord, SynthConfig
from .config import SYNTH_DEFAULTS
from .set_model import CardinalityStats, LabelSet
from .utils import dumps_exact, make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Sample:
    """One ``(x, 𝒴)`` training pair."""

    features: np.ndarray
    labels: LabelSet

    def __post_init__(self) -> None:
        features = np.array(self.features, dtype=float).reshape(-1)
        features.setflags(write=False)
        object.__setattr__(self, "features", features)


class Dataset:
    """Immutable list of samples sharing a header ``(l, M)``.

    Attributes
    ----------
    input_dim : int
        特征维度 l。
    num_labels : int
        标签数 M。
    samples : tuple[Sample, ...]
        样本序列。
    """

    def __init__(self, input_dim: int, num_labels: int, samples: Sequence[Sample]) -> None:
        self.input_dim = int(input_dim)
        self.num_labels = int(num_labels)
        self.samples = tuple(samples)
        for idx, sample in enumerate(self.samples):
            if sample.features.size != self.input_dim:
                raise ValueError(f"sample {idx} has {sample.features.size} features, expected {self.input_dim}")
            if sample.labels.num_labels != self.num_labels:
                raise ValueError(f"sample {idx} uses M={sample.labels.num_labels}, expected {self.num_labels}")
        self._features = None

    @property
    def features(self) -> np.ndarray:
        """Stacked feature matrix ``(n, l)``."""
        if self._features is None:
            if self.samples:
                stacked = np.stack([s.features for s in self.samples])
            else:
                stacked = np.zeros((0, self.input_dim))
            stacked.setflags(write=False)
            self._features = stacked
        return self._features

    @property
    def label_sets(self) -> list[LabelSet]:
        return [s.labels for s in self.samples]

    def indicators(self) -> np.ndarray:
        """Binary label matrix ``(n, M)``."""
        z = np.zeros((len(self.samples), self.num_labels))
        for row, sample in enumerate(self.samples):
            z[row, sample.labels.sorted()] = 1.0
        return z

    def cardinalities(self) -> np.ndarray:
        return np.array([s.labels.cardinality for s in self.samples], dtype=np.int64)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(self.input_dim, self.num_labels, [self.samples[int(i)] for i in indices])

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    def __getitem__(self, index: int) -> Sample:
        return self.samples[index]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.input_dim == other.input_dim
            and self.num_labels == other.num_labels
            and len(self) == len(other)
            and np.array_equal(self.features, other.features)
            and self.label_sets == other.label_sets
        )


def default_cardinality_pmf(max_cardinality: int) -> np.ndarray:
    """Skewed cardinality distribution over ``{0, …, max_cardinality}`` (mass mostly on 1–3)."""
    weights = list(SYNTH_DEFAULTS.cardinality_weights)
    weights += [SYNTH_DEFAULTS.tail_weight] * max(0, max_cardinality + 1 - len(weights))
    head = np.array(weights[: max_cardinality + 1], dtype=float)
    return head / head.sum()


def _prototypes(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.orthogonal_prototypes:
        basis, _ = np.linalg.qr(rng.normal(size=(cfg.input_dim, cfg.num_labels)))
        return basis.T * cfg.prototype_scale
    raw = rng.normal(size=(cfg.num_labels, cfg.input_dim))
    return raw * cfg.prototype_scale / np.sqrt(cfg.input_dim)


def generate(cfg: SynthConfig) -> Dataset:
    """Draw a synthetic multi-label dataset; deterministic in ``cfg.seed``.

    参数
    ----
    cfg : SynthConfig
        生成配置（维度、样本数、最大基数、原型尺度、噪声、种子）。

    返回
    ----
    Dataset
        ``cfg.num_samples`` 个样本。
    """
    rng = make_rng(cfg.seed, "synth")
    prototypes = _prototypes(cfg, rng)
    if cfg.cardinality_pmf is not None:
        pmf = np.asarray(cfg.cardinality_pmf, dtype=float)
        pmf = pmf / pmf.sum()
    else:
        pmf = default_cardinality_pmf(cfg.max_cardinality)
    sizes = rng.choice(cfg.max_cardinality + 1, size=cfg.num_samples, p=pmf)

    samples = []
    for m in sizes:
        chosen = rng.choice(cfg.num_labels, size=int(m), replace=False)
        noise = rng.normal(size=cfg.input_dim) * cfg.noise_scale
        features = prototypes[chosen].sum(axis=0) + noise
        samples.append(Sample(features, LabelSet.of(chosen, cfg.num_labels)))
    logger.debug("generated %d samples (l=%d, M=%d)", cfg.num_samples, cfg.input_dim, cfg.num_labels)
    return Dataset(cfg.input_dim, cfg.num_labels, samples)


def cardinality_stats(dataset: Dataset) -> CardinalityStats:
    """Histogram ``C_m`` of label-set sizes; ``total`` equals the dataset size."""
    return CardinalityStats.from_cardinalities(dataset.cardinalities(), dataset.num_labels)


def split(dataset: Dataset, fractions: Sequence[float], seed: int) -> tuple[Dataset, Dataset, Dataset]:
    """Shuffle deterministically, then cut into train/val/test parts.

    ``fractions`` 必须为三个正数且和为 1；前两部分按 ``floor(f·n)`` 取整，余下归入测试集。
    """
    fracs = [float(f) for f in fractions]
    if len(fracs) != 3 or any(f <= 0.0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be three positive numbers summing to 1, got {fracs}")
    n = len(dataset)
    order = make_rng(seed, "split").permutation(n)
    n_train = int(np.floor(fracs[0] * n + 1e-9))
    n_val = int(np.floor(fracs[1] * n + 1e-9))
    return (
        dataset.subset(order[:n_train]),
        dataset.subset(order[n_train : n_train + n_val]),
        dataset.subset(order[n_train + n_val :]),
    )


def write_dataset(dataset: Dataset, path: Path) -> None:
    """Write ``dataset`` as JSON Lines with exact float formatting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [dumps_exact({"l": dataset.input_dim, "M": dataset.num_labels})]
    for sample in dataset:
        lines.append(dumps_exact({"x": sample.features.tolist(), "labels": sample.labels.sorted()}))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_dataset(path: Path) -> Dataset:
    """Parse a JSONL dataset file.

    说明
    ----
    格式错误、特征维度与表头不符、特征含 NaN/Infinity 或标签索引 ``>= M`` 时抛出 ``ValueError``，消息中包含 ``文件:行号``。
    """
    path = Path(path)
    header = None
    samples = []
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
                if header is None:
                    header = DatasetHeader.parse_obj(payload)
                    continue
                record = SampleRecord.parse_obj(payload)
            except (json.JSONDecodeError, ValidationError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed line: {exc}") from exc
            if len(record.x) != header.l:
                raise ValueError(f"{path}:{lineno}: expected {header.l} features, got {len(record.x)}")
            x = np.array(record.x, dtype=float)
            if not np.all(np.isfinite(x)):
                raise ValueError(f"{path}:{lineno}: non-finite feature value")
            bad = [label for label in record.labels if label >= header.M]
            if bad:
                raise ValueError(f"{path}:{lineno}: label index {bad[0]} >= M={header.M}")
            samples.append(Sample(x, LabelSet.of(record.labels, header.M)))
    if header is None:
        raise ValueError(f"{path}: missing dataset header")
    return Dataset(header.l, header.M, samples)

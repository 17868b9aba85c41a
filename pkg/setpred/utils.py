"""Utility helpers for numerically stable activations and seeded random streams.

包含 log-sigmoid、softplus 等数值稳定函数，以及按名称派生的确定性随机数流，贯穿训练、推理与校验流程。
"""

from __future__ import annotations

import json
import zlib

import numpy as np
from scipy.special import expit, log_expit


def log_sigmoid(x: np.ndarray | float) -> np.ndarray | float:
    """Numerically stable ``log σ(x)``; no overflow for large ``|x|``."""
    return log_expit(np.asarray(x, dtype=float))


def sigmoid(x: np.ndarray | float) -> np.ndarray | float:
    """Logistic function ``σ(x)``."""
    return expit(np.asarray(x, dtype=float))


def softplus(x: np.ndarray | float) -> np.ndarray | float:
    """Stable ``log(1 + exp(x))``; its derivative is :func:`sigmoid`."""
    return np.logaddexp(0.0, np.asarray(x, dtype=float))


def make_rng(seed: int, *stream: str) -> np.random.Generator:
    """Derive an independent PCG64 generator for a named stream.

    参数
    ----
    seed : int
        全局 64 位种子。
    *stream : str
        流名称（如 ``"init"``、``"dropout"``），每个名称经 CRC32 转为整数后并入 SeedSequence 熵。

    返回
    ----
    np.random.Generator
        PCG64 生成器。相同 ``(seed, stream)`` 在任意平台上产生相同序列。
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    words = [zlib.crc32(name.encode("utf-8")) for name in stream]
    sequence = np.random.SeedSequence([int(seed), *words])
    return np.random.Generator(np.random.PCG64(sequence))


def format_float(value: float) -> str:
    """Format a float with 17 significant digits, keeping it a JSON float literal."""
    if not np.isfinite(value):
        raise ValueError(f"cannot serialise non-finite value {value!r}")
    text = format(float(value), ".17g")
    if "." not in text and "e" not in text:
        text += ".0"
    return text


def dumps_exact(obj) -> str:
    """Serialise nested dict/list/scalar data as compact JSON with exact floats.

    ``json`` 标准库对浮点数使用最短表示，这里统一输出 17 位有效数字，保证读取后再写出字节一致。
    """
    if isinstance(obj, dict):
        items = ",".join(f"{json.dumps(str(key))}:{dumps_exact(val)}" for key, val in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps_exact(val) for val in obj) + "]"
    if isinstance(obj, np.ndarray):
        return dumps_exact(obj.tolist())
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(bool(obj) if obj is not None else None)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    return json.dumps(obj)

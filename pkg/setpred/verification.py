"""Oracle verification suite behind ``set-predict verify``.

每项检查使用独立的 ``verify/<name>`` 随机流生成随机实例，并与暴力枚举或有限差分对照：

* ``map_oracle``：M = 1…12 上精确 MAP 与全子集枚举一致（集合相同、对数得分差 ≤ 1e-9）
* ``gradient``：端到端解析梯度与中心差分一致（相对误差 ≤ 1e-4）
* ``dc``：DC 概率归一、严格为正，梯度与差分一致（相对误差 ≤ 1e-6）
* ``threshold``：均匀基数分布下 MAP 集合等于 ``{ℓ : u·σ(O^ℓ) > 1}``
* ``invariance``：标签重排不变性与提高已选标签得分后的稳定性

``perturb_gradient`` 仅用于负对照：在解析梯度的一个分量上加 1e-3，梯度检查应当失败。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List

import numpy as np

from .api_models import Architecture, TrainConfig
from .config import VERIFY_DEFAULTS
from .data import Sample
from .inference import map_set
from .loss import batch_objective, batch_objective_grad
from .metrics import evaluate
from .network import DualOutput, init_params
from .oracle import brute_force_map, finite_diff_grad
from .set_model import (
    AlphaVector,
    CardinalityStats,
    HyperVolumeUnit,
    LabelSet,
    dc_grad_alpha,
    dc_log_pmf,
    dc_pmf,
    set_log_density,
)
from .utils import make_rng

logger = logging.getLogger(__name__)

MAX_ORACLE_LABELS = 12
GRADIENT_PERTURBATION = 1e-3


@dataclass
class CheckResult:
    """Outcome of one check: trial count, failures and the largest observed error."""

    name: str
    trials: int = 0
    failures: int = 0
    max_error: float = 0.0

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def record(self, ok: bool, error: float = 0.0) -> None:
        self.trials += 1
        self.failures += 0 if ok else 1
        self.max_error = max(self.max_error, float(error))


@dataclass
class VerifyReport:
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def format_text(self) -> str:
        lines = [
            f"check={c.name} trials={c.trials} failures={c.failures} max_error={c.max_error:.3e} "
            f"status={'PASS' if c.passed else 'FAIL'}"
            for c in self.checks
        ]
        lines.append(f"overall={'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _random_output(rng: np.random.Generator, num_labels: int) -> DualOutput:
    return DualOutput(rng.normal(0.0, 2.0, size=num_labels), rng.normal(0.0, 1.5, size=num_labels + 1))


def _random_stats(rng: np.random.Generator, num_labels: int) -> CardinalityStats:
    return CardinalityStats(rng.integers(0, 30, size=num_labels + 1))


def _random_u(rng: np.random.Generator) -> HyperVolumeUnit:
    return HyperVolumeUnit(float(rng.choice(VERIFY_DEFAULTS.u_grid)))


def _random_set(rng: np.random.Generator, num_labels: int) -> LabelSet:
    size = int(rng.integers(0, num_labels + 1))
    return LabelSet.of(rng.choice(num_labels, size=size, replace=False), num_labels)


def _permute_output(out: DualOutput, permutation: np.ndarray) -> DualOutput:
    logits = np.empty_like(out.label_logits)
    logits[permutation] = out.label_logits
    return DualOutput(logits, out.card_preacts.copy())


def check_map_oracle(seed: int, trials: int) -> CheckResult:
    result = CheckResult("map_oracle")
    rng = make_rng(seed, "verify/map_oracle")
    for num_labels in range(1, MAX_ORACLE_LABELS + 1):
        for _ in range(trials):
            out, stats, u = _random_output(rng, num_labels), _random_stats(rng, num_labels), _random_u(rng)
            fast = map_set(out, stats, u)
            slow = brute_force_map(out, stats, u)
            error = abs(fast.log_score - slow.log_score)
            result.record(fast.labels == slow.labels and error <= VERIFY_DEFAULTS.map_tolerance, error)
    return result


def fd_noise_floor(value: float, step: float) -> float:
    """Round-off bound of a central difference at a point where the function equals ``value``."""
    return 4.0 * np.finfo(float).eps * max(1.0, abs(value)) / step


def relative_errors(analytic: np.ndarray, numeric: np.ndarray, floor: float) -> np.ndarray:
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    considered = scale > 1e-6
    errors = np.zeros_like(analytic)
    diff = np.abs(analytic - numeric)
    errors[considered] = np.where(diff[considered] <= floor, 0.0, diff[considered] / scale[considered])
    return errors


def check_gradient(seed: int, trials: int, perturb_gradient: bool = False) -> CheckResult:
    result = CheckResult("gradient")
    rng = make_rng(seed, "verify/gradient")
    for _ in range(trials):
        input_dim = int(rng.integers(1, 11))
        num_labels = int(rng.integers(1, 7))
        widths = [int(w) for w in rng.integers(1, 17, size=int(rng.integers(0, 3)))]
        arch = Architecture(input_dim=input_dim, hidden_widths=widths, num_labels=num_labels, dropout_rate=0.0)
        params = init_params(arch, int(rng.integers(0, 2**31)))
        params.biases = [rng.normal(0.0, 0.1, size=b.shape) for b in params.biases]
        cfg = TrainConfig(
            gamma=float(rng.uniform(0.0, 1e-2)),
            bce_mode=str(rng.choice(["full", "positive_only"])),
        )
        m = int(rng.integers(0, num_labels + 1))
        labels = LabelSet.of(rng.choice(num_labels, size=m, replace=False), num_labels)
        batch = [Sample(rng.normal(size=input_dim), labels)]
        stats = _random_stats(rng, num_labels)

        objective, grads = batch_objective_grad(params, batch, stats, cfg)
        analytic = grads.flatten()
        if perturb_gradient:
            analytic[0] += GRADIENT_PERTURBATION
        numeric = finite_diff_grad(
            lambda flat: batch_objective(params.unflatten(flat), batch, stats, cfg),
            params.flatten(),
            VERIFY_DEFAULTS.fd_step,
        )
        errors = relative_errors(analytic, numeric, floor=fd_noise_floor(objective, VERIFY_DEFAULTS.fd_step))
        worst = float(errors.max()) if errors.size else 0.0
        result.record(worst <= VERIFY_DEFAULTS.end_to_end_rel_tol, worst)
    return result


def check_dc(seed: int, trials: int) -> CheckResult:
    result = CheckResult("dc")
    rng = make_rng(seed, "verify/dc")
    for _ in range(trials):
        num_labels = int(rng.integers(1, 13))
        alpha = AlphaVector(np.exp(rng.uniform(-2.0, 2.0, size=num_labels + 1)))
        stats = _random_stats(rng, num_labels)
        pmf = dc_pmf(alpha, stats)
        norm_error = abs(float(pmf.sum()) - 1.0)
        m = int(rng.integers(0, num_labels + 1))
        analytic = dc_grad_alpha(m, alpha, stats)
        numeric = finite_diff_grad(lambda a: dc_log_pmf(m, AlphaVector(a), stats), alpha.values)
        grad_error = float(relative_errors(analytic, numeric, floor=1e-11).max())
        ok = (
            norm_error <= VERIFY_DEFAULTS.normalization_tol
            and bool(np.all(pmf > 0.0))
            and grad_error <= VERIFY_DEFAULTS.dc_grad_rel_tol
        )
        result.record(ok, max(norm_error, grad_error))
    return result


def check_threshold(seed: int, trials: int) -> CheckResult:
    result = CheckResult("threshold")
    rng = make_rng(seed, "verify/threshold")
    for trial in range(trials):
        num_labels = int(rng.integers(1, MAX_ORACLE_LABELS + 1))
        out = DualOutput(rng.normal(0.0, 2.0, size=num_labels), np.full(num_labels + 1, rng.normal()))
        stats = CardinalityStats(np.full(num_labels + 1, int(rng.integers(0, 20))))
        # every fourth trial pins the default unit
        u = HyperVolumeUnit(2.36) if trial % 4 == 0 else _random_u(rng)
        expected = LabelSet.of(np.flatnonzero(u.u / (1.0 + np.exp(-out.label_logits)) > 1.0), num_labels)
        fast = map_set(out, stats, u).labels
        slow = brute_force_map(out, stats, u).labels
        result.record(fast == expected and slow == expected)
    return result


def check_invariance(seed: int, trials: int) -> CheckResult:
    result = CheckResult("invariance")
    rng = make_rng(seed, "verify/invariance")
    for _ in range(trials):
        num_labels = int(rng.integers(1, 9))
        out, stats, u = _random_output(rng, num_labels), _random_stats(rng, num_labels), _random_u(rng)
        perm = rng.permutation(num_labels)
        moved = _permute_output(out, perm)
        ok = True
        error = 0.0

        m = int(rng.integers(0, num_labels + 1))
        subset = LabelSet.of(rng.choice(num_labels, size=m, replace=False), num_labels)
        before = set_log_density(subset, out.label_logits, out.alpha(), stats, u)
        after = set_log_density(subset.relabel(perm), moved.label_logits, moved.alpha(), stats, u)
        error = max(error, abs(before - after))
        ok &= error <= 1e-12

        original = map_set(out, stats, u)
        ok &= map_set(moved, stats, u).labels == original.labels.relabel(perm)

        preds = [_random_set(rng, num_labels) for _ in range(4)]
        truth = [_random_set(rng, num_labels) for _ in range(4)]
        plain = np.array(list(evaluate(preds, truth, num_labels).as_dict().values()))
        relabeled = evaluate([p.relabel(perm) for p in preds], [t.relabel(perm) for t in truth], num_labels)
        metric_error = float(np.max(np.abs(plain - np.array(list(relabeled.as_dict().values())))))
        error = max(error, metric_error)
        ok &= metric_error <= 1e-12

        if original.m_star > 0:
            label = int(rng.choice(original.labels.sorted()))
            raised = out.label_logits.copy()
            raised[label] += float(rng.uniform(0.1, 3.0))
            ok &= label in brute_force_map(DualOutput(raised, out.card_preacts), stats, u).labels
        result.record(bool(ok), error)
    return result


def run_verify(
    seed: int = 0,
    trials: int = VERIFY_DEFAULTS.trials,
    perturb_gradient: bool = False,
) -> VerifyReport:
    """Run every check and collect the results.

    参数
    ----
    seed : int
        随机实例的根种子。
    trials : int
        每项检查的试验规模：MAP 对照为每个 M 的实例数，梯度检查取其十分之一（至少 1），
        不变性检查至少 500 次。
    perturb_gradient : bool
        负对照开关，见模块说明。
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    plan: list[tuple[str, Callable[[], CheckResult]]] = [
        ("map_oracle", lambda: check_map_oracle(seed, trials)),
        ("gradient", lambda: check_gradient(seed, max(1, trials // 10), perturb_gradient)),
        ("dc", lambda: check_dc(seed, trials)),
        ("threshold", lambda: check_threshold(seed, trials)),
        ("invariance", lambda: check_invariance(seed, max(500, trials // 2))),
    ]
    report = VerifyReport()
    for name, run in plan:
        check = run()
        logger.info("%s: %d trials, %d failures, max error %.3e", name, check.trials, check.failures, check.max_error)
        report.checks.append(check)
    return report

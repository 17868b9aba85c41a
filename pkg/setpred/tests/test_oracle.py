import numpy as np
import pytest

from setpred.network import DualOutput
from setpred.oracle import brute_force_map, enumerate_set_mass, finite_diff_grad, naive_set_log_density
from setpred.set_model import CardinalityStats, HyperVolumeUnit, LabelSet, set_log_density


def _logit(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.log(p / (1.0 - p))


def test_brute_force_single_label_prefers_empty_set():
    out = DualOutput(_logit([0.9]), np.full(2, -40.0))
    result = brute_force_map(out, CardinalityStats([500, 500]), HyperVolumeUnit(1.0))
    assert result.labels == LabelSet.of([], 1)
    assert result.log_score == pytest.approx(np.log(0.5), abs=1e-8)


def test_brute_force_dominates_every_subset():
    rng = np.random.default_rng(0)
    num_labels = 5
    out = DualOutput(rng.normal(size=num_labels), rng.normal(size=num_labels + 1))
    stats = CardinalityStats(rng.integers(0, 10, size=num_labels + 1))
    u = HyperVolumeUnit(2.36)
    best = brute_force_map(out, stats, u)
    for mask in range(1 << num_labels):
        labels = LabelSet.of([b for b in range(num_labels) if mask >> b & 1], num_labels)
        assert best.log_score >= naive_set_log_density(labels, out, stats, u) - 1e-12


def test_brute_force_tie_break_prefers_small_then_lexicographic():
    out = DualOutput(np.zeros(3), np.zeros(4))
    stats = CardinalityStats([0, 10, 0, 0])
    result = brute_force_map(out, stats, HyperVolumeUnit(1.0))
    assert result.labels == LabelSet.of([0], 3)


def test_naive_density_agrees_with_set_model():
    rng = np.random.default_rng(1)
    for _ in range(50):
        num_labels = int(rng.integers(1, 7))
        out = DualOutput(rng.normal(0.0, 3.0, size=num_labels), rng.normal(size=num_labels + 1))
        stats = CardinalityStats(rng.integers(0, 10, size=num_labels + 1))
        labels = LabelSet.of(rng.choice(num_labels, size=int(rng.integers(0, num_labels + 1)), replace=False), num_labels)
        u = HyperVolumeUnit(float(rng.uniform(0.2, 5.0)))
        fast = set_log_density(labels, out.label_logits, out.alpha(), stats, u)
        assert naive_set_log_density(labels, out, stats, u) == pytest.approx(fast, abs=1e-10)


def test_enumerate_set_mass_examples():
    out = DualOutput(np.zeros(2), np.zeros(3))
    stats = CardinalityStats([1, 1, 1])
    assert enumerate_set_mass(out, stats, HyperVolumeUnit(1.0)) == pytest.approx(0.75, abs=1e-12)

    masses = [enumerate_set_mass(out, stats, HyperVolumeUnit(u)) for u in (0.5, 1.0, 2.36, 10.0)]
    assert all(m > 0.0 and np.isfinite(m) for m in masses)
    assert all(b > a for a, b in zip(masses, masses[1:]))


def test_oracles_refuse_large_label_counts():
    out = DualOutput(np.zeros(21), np.zeros(22))
    stats = CardinalityStats(np.ones(22, dtype=int))
    with pytest.raises(ValueError, match="refusing"):
        brute_force_map(out, stats, HyperVolumeUnit(1.0))
    with pytest.raises(ValueError, match="refusing"):
        enumerate_set_mass(out, stats, HyperVolumeUnit(1.0))


def test_finite_diff_grad_examples():
    grad = finite_diff_grad(lambda x: float(x[0] ** 2), np.array([3.0]), 1e-5)
    assert grad[0] == pytest.approx(6.0, abs=1e-8)

    slope = np.array([1.5, -2.0, 0.25])
    for step in (1e-3, 1e-1, 1.0):
        assert np.allclose(finite_diff_grad(lambda x: float(slope @ x), np.zeros(3), step), slope, atol=1e-9)


def test_finite_diff_grad_rejects_non_finite_evaluations():
    with pytest.raises(ValueError, match="positive"):
        finite_diff_grad(lambda x: float(x.sum()), np.zeros(2), 0.0)
    with pytest.raises(ValueError, match="non-finite"):
        finite_diff_grad(lambda x: float("nan") if x[0] < 0.0 else float(x[0]), np.zeros(1), 1e-5)

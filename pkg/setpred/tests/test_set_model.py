import numpy as np
import pytest

from setpred.set_model import (
    AlphaVector,
    CardinalityStats,
    HyperVolumeUnit,
    LabelSet,
    dc_grad_alpha,
    dc_log_pmf,
    dc_pmf,
    set_log_density,
)
from setpred.oracle import finite_diff_grad


def _skewed_case() -> tuple[AlphaVector, CardinalityStats]:
    return AlphaVector([0.5, 2.0, 1.5]), CardinalityStats([10, 30, 60], total=100)


def _logit(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.log(p / (1.0 - p))


def test_label_set_rejects_duplicates_and_out_of_range():
    with pytest.raises(ValueError, match="duplicate"):
        LabelSet.of([1, 1], 3)
    with pytest.raises(ValueError, match="outside"):
        LabelSet.of([3], 3)
    labels = LabelSet.of([2, 0], 3)
    assert labels.sorted() == [0, 2]
    assert labels.cardinality == 2
    assert np.array_equal(labels.indicator(), [1.0, 0.0, 1.0])


def test_cardinality_stats_total_must_match_counts():
    with pytest.raises(ValueError, match="total"):
        CardinalityStats([1, 2, 3], total=5)
    stats = CardinalityStats.from_cardinalities([1, 2, 2, 0], 3)
    assert stats.counts.tolist() == [1, 1, 2, 0]
    assert stats.total == 4


def test_alpha_vector_rejects_non_positive_and_non_finite():
    with pytest.raises(ValueError):
        AlphaVector([1.0, 0.0])
    with pytest.raises(ValueError):
        AlphaVector([1.0, np.inf])


def test_dc_log_pmf_examples():
    uniform = dc_log_pmf(1, AlphaVector([1.0, 1.0, 1.0]), CardinalityStats([1, 1, 1]))
    assert uniform == pytest.approx(np.log(1.0 / 3.0), abs=1e-12)

    alpha, stats = _skewed_case()
    assert dc_log_pmf(1, alpha, stats) == pytest.approx(np.log(32.0 / 104.0), abs=1e-12)
    assert dc_log_pmf(1, alpha, stats) == pytest.approx(-1.178655, abs=1e-6)

    eps = 1e-6
    degenerate = dc_log_pmf(0, AlphaVector([eps, eps, eps]), CardinalityStats([100, 0, 0]))
    assert degenerate == pytest.approx(np.log((eps + 100.0) / (3 * eps + 100.0)), abs=1e-13)
    assert degenerate < 0.0


def test_dc_log_pmf_out_of_range_cardinality():
    alpha, stats = _skewed_case()
    with pytest.raises(ValueError, match="cardinality"):
        dc_log_pmf(3, alpha, stats)
    with pytest.raises(ValueError, match="cardinality"):
        dc_log_pmf(-1, alpha, stats)


def test_dc_pmf_values_and_consistency():
    alpha, stats = _skewed_case()
    pmf = dc_pmf(alpha, stats)
    assert np.allclose(pmf, [10.5 / 104, 32.0 / 104, 61.5 / 104], atol=1e-15)
    assert np.allclose(pmf, [0.100962, 0.307692, 0.591346], atol=1e-6)
    assert np.allclose(np.exp([dc_log_pmf(m, alpha, stats) for m in range(3)]), pmf, atol=1e-15)
    assert np.allclose(dc_pmf(AlphaVector([1.0, 1.0, 1.0]), CardinalityStats([1, 1, 1])), 1.0 / 3.0)


def test_dc_pmf_with_empty_histogram_reduces_to_alpha_ratio():
    alpha = AlphaVector([1.0, 3.0])
    assert np.allclose(dc_pmf(alpha, CardinalityStats([0, 0])), [0.25, 0.75])


def test_dc_pmf_normalised_on_random_inputs():
    rng = np.random.default_rng(3)
    for _ in range(200):
        size = int(rng.integers(2, 10))
        alpha = AlphaVector(np.exp(rng.normal(size=size)))
        stats = CardinalityStats(rng.integers(0, 50, size=size))
        pmf = dc_pmf(alpha, stats)
        assert abs(pmf.sum() - 1.0) <= 1e-12
        assert np.all(pmf > 0.0)


def test_dc_grad_alpha_examples():
    alpha, stats = _skewed_case()
    grad = dc_grad_alpha(1, alpha, stats)
    assert np.allclose(grad, [-1 / 104, 1 / 32 - 1 / 104, -1 / 104], atol=1e-15)
    assert grad.sum() == pytest.approx(1 / 32 - 3 / 104, abs=1e-15)

    symmetric = dc_grad_alpha(2, AlphaVector([2.0] * 4), CardinalityStats([5] * 4))
    off = np.delete(symmetric, 2)
    assert np.allclose(off, off[0])


def test_dc_grad_alpha_matches_finite_differences():
    rng = np.random.default_rng(11)
    for _ in range(50):
        size = int(rng.integers(2, 8))
        alpha = AlphaVector(np.exp(rng.uniform(-1.0, 1.0, size=size)))
        stats = CardinalityStats(rng.integers(0, 20, size=size))
        m = int(rng.integers(0, size))
        numeric = finite_diff_grad(lambda a: dc_log_pmf(m, AlphaVector(a), stats), alpha.values)
        analytic = dc_grad_alpha(m, alpha, stats)
        assert np.allclose(analytic, numeric, rtol=1e-6, atol=1e-9)


def test_set_log_density_examples():
    stats = CardinalityStats([1, 2, 5, 2])
    alpha = AlphaVector([1e-9] * 4)
    logits = _logit([0.9, 0.6, 0.2])
    u = HyperVolumeUnit(1.0)

    empty = set_log_density(LabelSet.of([], 3), logits, alpha, stats, u)
    assert empty == pytest.approx(dc_log_pmf(0, alpha, stats))

    value = set_log_density(LabelSet.of([0, 1], 3), logits, alpha, stats, u)
    assert value == pytest.approx(np.log(0.5) + np.log(0.9) + np.log(0.6), abs=1e-7)
    assert value == pytest.approx(-1.30933, abs=1e-5)


def test_set_log_density_dimension_mismatch():
    stats = CardinalityStats([1, 1, 1])
    alpha = AlphaVector([1.0, 1.0, 1.0])
    with pytest.raises(ValueError, match="logits"):
        set_log_density(LabelSet.of([0], 2), np.zeros(3), alpha, stats, HyperVolumeUnit(1.0))
    with pytest.raises(ValueError, match="histogram"):
        set_log_density(LabelSet.of([0], 3), np.zeros(3), alpha, stats, HyperVolumeUnit(1.0))


def test_set_log_density_permutation_invariance_and_u_monotonicity():
    rng = np.random.default_rng(5)
    for _ in range(100):
        num_labels = int(rng.integers(1, 8))
        logits = rng.normal(size=num_labels)
        alpha = AlphaVector(np.exp(rng.normal(size=num_labels + 1)))
        stats = CardinalityStats(rng.integers(0, 10, size=num_labels + 1))
        size = int(rng.integers(0, num_labels + 1))
        labels = LabelSet.of(rng.choice(num_labels, size=size, replace=False), num_labels)
        perm = rng.permutation(num_labels)
        moved = np.empty_like(logits)
        moved[perm] = logits
        u = HyperVolumeUnit(2.36)
        base = set_log_density(labels, logits, alpha, stats, u)
        assert set_log_density(labels.relabel(perm), moved, alpha, stats, u) == pytest.approx(base, abs=1e-12)

        bigger = set_log_density(labels, logits, alpha, stats, HyperVolumeUnit(3.0))
        if labels.cardinality:
            assert bigger > base
        else:
            assert bigger == base


def test_hyper_volume_unit_must_be_positive():
    with pytest.raises(ValueError):
        HyperVolumeUnit(0.0)
    with pytest.raises(ValueError):
        HyperVolumeUnit(float("nan"))

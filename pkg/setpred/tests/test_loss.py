import numpy as np
import pytest

from setpred.api_models import Architecture, TrainConfig
from setpred.data import Sample
from setpred.loss import batch_objective, batch_objective_grad, sample_loss, sample_loss_grad
from setpred.network import DualOutput, forward, init_params
from setpred.oracle import finite_diff_grad
from setpred.set_model import CardinalityStats, LabelSet, dc_log_pmf


def _random_instance(rng: np.random.Generator, num_labels: int):
    out = DualOutput(rng.normal(size=num_labels), rng.normal(size=num_labels + 1))
    size = int(rng.integers(0, num_labels + 1))
    labels = LabelSet.of(rng.choice(num_labels, size=size, replace=False), num_labels)
    stats = CardinalityStats(rng.integers(0, 20, size=num_labels + 1))
    return out, labels, stats


def test_sample_loss_bce_all_zero_logits():
    out = DualOutput(np.zeros(3), np.zeros(4))
    breakdown = sample_loss(out, LabelSet.of([0], 3), CardinalityStats([1, 1, 1, 1]), TrainConfig())
    assert breakdown.bce_term == pytest.approx(3 * np.log(2.0), abs=1e-12)
    assert breakdown.cardinality_term == pytest.approx(np.log(4.0), abs=1e-12)
    assert breakdown.total == pytest.approx(breakdown.bce_term + breakdown.cardinality_term)


def test_sample_loss_positive_only_counts_selected_labels():
    out = DualOutput(np.zeros(3), np.zeros(4))
    cfg = TrainConfig(bce_mode="positive_only")
    breakdown = sample_loss(out, LabelSet.of([0, 2], 3), CardinalityStats([1, 1, 1, 1]), cfg)
    assert breakdown.bce_term == pytest.approx(2 * np.log(2.0), abs=1e-12)


def test_sample_loss_matches_compositional_reevaluation():
    rng = np.random.default_rng(0)
    for _ in range(50):
        num_labels = int(rng.integers(1, 7))
        out, labels, stats = _random_instance(rng, num_labels)
        z = labels.indicator()
        p = 1.0 / (1.0 + np.exp(-out.label_logits))
        bce = -np.sum(z * np.log(p) + (1.0 - z) * np.log(1.0 - p))
        card = -dc_log_pmf(labels.cardinality, out.alpha(), stats)
        breakdown = sample_loss(out, labels, stats, TrainConfig())
        assert breakdown.total == pytest.approx(bce + card, rel=1e-10)
        assert breakdown.bce_term >= 0.0
        assert breakdown.cardinality_term >= 0.0


def test_sample_loss_rejects_dimension_mismatch():
    out = DualOutput(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError, match="dimension mismatch"):
        sample_loss(out, LabelSet.of([0], 2), CardinalityStats([1, 1, 1]), TrainConfig())


def test_sample_loss_grad_examples():
    out = DualOutput(np.zeros(2), np.zeros(3))
    grad = sample_loss_grad(out, LabelSet.of([0], 2), CardinalityStats([1, 1, 1]), TrainConfig())
    assert grad.label_logits[0] == pytest.approx(-0.5)
    assert grad.label_logits[1] == pytest.approx(0.5)


def test_sample_loss_grad_matches_finite_differences():
    rng = np.random.default_rng(1)
    for mode in ("full", "positive_only"):
        cfg = TrainConfig(bce_mode=mode)
        for _ in range(30):
            num_labels = int(rng.integers(1, 6))
            out, labels, stats = _random_instance(rng, num_labels)
            grad = sample_loss_grad(out, labels, stats, cfg)

            numeric_logits = finite_diff_grad(
                lambda o: sample_loss(DualOutput(o, out.card_preacts), labels, stats, cfg).total, out.label_logits
            )
            numeric_card = finite_diff_grad(
                lambda a: sample_loss(DualOutput(out.label_logits, a), labels, stats, cfg).total, out.card_preacts
            )
            assert np.allclose(grad.label_logits, numeric_logits, rtol=1e-5, atol=1e-8)
            assert np.allclose(grad.card_preacts, numeric_card, rtol=1e-5, atol=1e-8)


def test_bce_vanishes_for_confident_correct_logits():
    labels = LabelSet.of([1], 3)
    out = DualOutput(np.array([-40.0, 40.0, -40.0]), np.zeros(4))
    assert sample_loss(out, labels, CardinalityStats([0, 1, 0, 0]), TrainConfig()).bce_term < 1e-15


def _network_batch(rng: np.random.Generator, size: int = 3):
    arch = Architecture(input_dim=4, hidden_widths=[6], num_labels=3, dropout_rate=0.0)
    params = init_params(arch, 2)
    params.biases = [rng.normal(0.0, 0.1, size=b.shape) for b in params.biases]
    batch = []
    for _ in range(size):
        m = int(rng.integers(0, 4))
        batch.append(Sample(rng.normal(size=4), LabelSet.of(rng.choice(3, size=m, replace=False), 3)))
    return params, batch, CardinalityStats([2, 5, 3, 1])


@pytest.mark.parametrize("objective", ["joint", "labels_only", "cardinality_only"])
def test_batch_objective_single_sample_equals_sample_loss(objective):
    rng = np.random.default_rng(4)
    params, batch, stats = _network_batch(rng, size=1)
    cfg = TrainConfig(gamma=0.0, objective=objective)
    out, _ = forward(params, batch[0].features)
    expected = sample_loss(out, batch[0].labels, stats, cfg).total
    assert batch_objective(params, batch, stats, cfg) == pytest.approx(expected, rel=1e-10)


def test_sample_loss_respects_objective_selection():
    out, labels, stats = _random_instance(np.random.default_rng(12), 4)
    joint = sample_loss(out, labels, stats, TrainConfig())
    labels_only = sample_loss(out, labels, stats, TrainConfig(objective="labels_only"))
    card_only = sample_loss(out, labels, stats, TrainConfig(objective="cardinality_only"))
    assert labels_only.bce_term == joint.bce_term and labels_only.cardinality_term == 0.0
    assert card_only.cardinality_term == joint.cardinality_term and card_only.bce_term == 0.0

    grad = sample_loss_grad(out, labels, stats, TrainConfig(objective="labels_only"))
    assert np.all(grad.card_preacts == 0.0)
    grad = sample_loss_grad(out, labels, stats, TrainConfig(objective="cardinality_only"))
    assert np.all(grad.label_logits == 0.0)
    assert np.allclose(grad.card_preacts, sample_loss_grad(out, labels, stats, TrainConfig()).card_preacts)


def test_batch_objective_is_linear_in_gamma():
    rng = np.random.default_rng(5)
    params, batch, stats = _network_batch(rng)
    low = batch_objective(params, batch, stats, TrainConfig(gamma=1e-3))
    high = batch_objective(params, batch, stats, TrainConfig(gamma=2e-3))
    assert high - low == pytest.approx(1e-3 * params.weight_sq_norm(), rel=1e-9)


def test_batch_objective_rejects_empty_batch():
    rng = np.random.default_rng(6)
    params, _, stats = _network_batch(rng)
    with pytest.raises(ValueError, match="at least one sample"):
        batch_objective(params, [], stats, TrainConfig())


def test_batch_objective_grad_matches_finite_differences():
    rng = np.random.default_rng(7)
    params, batch, stats = _network_batch(rng)
    for cfg in (TrainConfig(gamma=5e-3), TrainConfig(objective="labels_only"), TrainConfig(objective="cardinality_only")):
        value, grads = batch_objective_grad(params, batch, stats, cfg)
        assert value == pytest.approx(batch_objective(params, batch, stats, cfg), rel=1e-12)
        numeric = finite_diff_grad(lambda flat: batch_objective(params.unflatten(flat), batch, stats, cfg), params.flatten())
        assert np.allclose(grads.flatten(), numeric, rtol=1e-4, atol=1e-8)

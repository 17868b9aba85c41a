import numpy as np
import pytest

from setpred.api_models import Architecture, SynthConfig, TrainConfig
from setpred.data import cardinality_stats, generate, split
from setpred.engine import TrainingEngine
from setpred.network import init_params
from setpred.service import SetPredictor


def _datasets(num_samples: int = 200, noise: float = 0.25, seed: int = 1):
    cfg = SynthConfig(input_dim=8, num_labels=4, num_samples=num_samples, max_cardinality=3, noise_scale=noise, seed=seed)
    return split(generate(cfg), (0.8, 0.1, 0.1), seed=seed)


def _arch(dropout: float = 0.5) -> Architecture:
    return Architecture(input_dim=8, hidden_widths=[16], num_labels=4, dropout_rate=dropout)


def test_single_epoch_selects_epoch_zero():
    train, val, _ = _datasets()
    engine = TrainingEngine(_arch(), TrainConfig(epochs=1, seed=2))
    result = engine.fit(train, val, cardinality_stats(train))
    assert result.selected_epoch == 0
    assert len(result.history) == 1
    assert result.selected.val_objective is not None
    assert np.isfinite(result.selected.train_objective)


def test_fit_is_deterministic_in_seed():
    train, val, _ = _datasets()
    stats = cardinality_stats(train)
    cfg = TrainConfig(epochs=3, seed=5)
    first = TrainingEngine(_arch(), cfg).fit(train, val, stats)
    second = TrainingEngine(_arch(), cfg).fit(train, val, stats)
    assert all(np.array_equal(a, b) for a, b in zip(first.params.arrays(), second.params.arrays()))
    assert [r.val_objective for r in first.history] == [r.val_objective for r in second.history]


def test_fit_selects_lowest_validation_objective():
    train, val, _ = _datasets()
    result = TrainingEngine(_arch(), TrainConfig(epochs=6, base_lr=0.01, seed=0)).fit(train, val, cardinality_stats(train))
    values = [r.val_objective for r in result.history]
    assert result.selected_epoch == int(np.argmin(values))
    assert result.selected.val_objective <= values[0]
    assert [r.lr for r in result.history][:2] == pytest.approx([0.01, 0.0095])


def test_fit_without_validation_uses_training_objective():
    train, _, _ = _datasets()
    result = TrainingEngine(_arch(), TrainConfig(epochs=3, seed=0)).fit(train, None, cardinality_stats(train))
    assert all(r.val_objective is None for r in result.history)
    assert result.selected_epoch == int(np.argmin([r.train_objective for r in result.history]))


def test_fit_rejects_mismatched_dimensions():
    train, val, _ = _datasets()
    engine = TrainingEngine(Architecture(input_dim=5, hidden_widths=[4], num_labels=4), TrainConfig(epochs=1))
    with pytest.raises(ValueError, match="does not match the network"):
        engine.fit(train, val, cardinality_stats(train))


def test_fit_aborts_on_non_finite_objective():
    train, val, _ = _datasets()
    init = init_params(_arch(), 0)
    init.weights[0][0, 0] = np.nan
    with np.errstate(invalid="ignore"):
        with pytest.raises(FloatingPointError, match="epoch 0"):
            TrainingEngine(_arch(), TrainConfig(epochs=2)).fit(train, val, cardinality_stats(train), init=init)


def test_full_batch_descent_decreases_objective():
    train, _, _ = _datasets(num_samples=40)
    subset = train.subset(range(32))
    engine = TrainingEngine(_arch(dropout=0.0), TrainConfig(seed=3))
    trace = engine.full_batch_descent(subset, cardinality_stats(subset), iterations=100, lr=1e-4)
    assert len(trace.objectives) == 101
    assert all(np.isfinite(trace.objectives))
    assert trace.objectives[-1] < trace.objectives[0]
    assert all(b <= a + 1e-12 for a, b in zip(trace.objectives, trace.objectives[1:]))


def test_trained_model_recovers_low_noise_labels():
    train, val, test = _datasets(num_samples=1000, noise=0.1, seed=4)
    stats = cardinality_stats(train)
    cfg = TrainConfig(epochs=40, base_lr=0.01, gamma=1e-4, seed=4)
    result = TrainingEngine(_arch(dropout=0.0), cfg).fit(train, val, stats)
    predictor = SetPredictor(result.params, stats, u=2.36)
    assert predictor.evaluate(test, "jds").report.o_f1 > 0.9

import numpy as np
import pytest

from setpred.api_models import Architecture
from setpred.network import (
    DualOutput,
    ModelParams,
    OptimizerState,
    alpha_link,
    backward,
    forward,
    init_params,
    lr_schedule,
    sgd_step,
)
from setpred.oracle import finite_diff_grad
from setpred.utils import make_rng, softplus


def _arch(**overrides) -> Architecture:
    values = {"input_dim": 4, "hidden_widths": [8, 8], "num_labels": 3, "dropout_rate": 0.0}
    values.update(overrides)
    return Architecture(**values)


def _reference_forward(params: ModelParams, x: np.ndarray) -> np.ndarray:
    hidden = x
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        hidden = hidden @ w + b
        if layer < len(params.weights) - 1:
            hidden = np.where(hidden > 0.0, hidden, 0.0)
    return hidden


def test_init_is_deterministic_and_seed_dependent():
    arch = _arch()
    first = init_params(arch, seed=7)
    second = init_params(arch, seed=7)
    other = init_params(arch, seed=8)
    assert all(np.array_equal(a, b) for a, b in zip(first.arrays(), second.arrays()))
    assert not np.array_equal(first.weights[0], other.weights[0])
    assert all(np.all(b == 0.0) for b in first.biases)
    assert first.weights[-1].shape == (8, 7)
    assert arch.output_dim == 7


def test_forward_zero_params_gives_half_probabilities():
    arch = _arch()
    params = init_params(arch, 0).zeros_like()
    out, _ = forward(params, np.array([1.0, -2.0, 3.0, 0.5]))
    assert np.array_equal(out.label_logits, np.zeros(3))
    assert out.card_preacts.shape == (4,)


def test_forward_matches_reference_and_is_deterministic():
    rng = np.random.default_rng(0)
    arch = _arch(hidden_widths=[5, 6])
    params = init_params(arch, 3)
    x = rng.normal(size=(6, 4))
    out, _ = forward(params, x)
    again, _ = forward(params, x)
    head = _reference_forward(params, x)
    assert np.allclose(out.label_logits, head[:, :3], atol=1e-13)
    assert np.allclose(out.card_preacts, head[:, 3:], atol=1e-13)
    assert np.array_equal(out.label_logits, again.label_logits)
    assert np.all(np.isfinite(out.label_logits))


def test_forward_rejects_wrong_dimension_and_missing_rng():
    params = init_params(_arch(dropout_rate=0.5), 0)
    with pytest.raises(ValueError, match="dimension"):
        forward(params, np.zeros(5))
    with pytest.raises(ValueError, match="random generator"):
        forward(params, np.zeros(4), mode="train")


def test_alpha_link_examples():
    alpha = alpha_link(np.array([0.0, 20.0, -40.0]))
    assert alpha.values[0] == pytest.approx(np.log(2.0) + 1e-6, abs=1e-12)
    # the 1e-6 floor is added on top of the softplus asymptote
    assert alpha.values[1] == pytest.approx(softplus(20.0) + 1e-6, rel=1e-15)
    assert alpha.values[1] - 1e-6 == pytest.approx(20.0, rel=1e-8)
    assert alpha.values[2] == pytest.approx(1e-6, rel=1e-6)
    assert np.all(alpha.values > 0.0)


def test_backward_zero_gradient_gives_zero():
    params = init_params(_arch(), 1)
    x = np.ones((2, 4))
    _, cache = forward(params, x)
    grads = backward(params, cache, DualOutput(np.zeros((2, 3)), np.zeros((2, 4))))
    assert all(np.all(g == 0.0) for g in grads.arrays())


def test_backward_rejects_stale_cache():
    params = init_params(_arch(), 1)
    _, cache = forward(params, np.ones(4))
    with pytest.raises(ValueError, match="different parameter set"):
        backward(params.copy(), cache, DualOutput(np.zeros(3), np.zeros(4)))


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(2)
    arch = _arch(hidden_widths=[5])
    params = init_params(arch, 4)
    params.biases = [rng.normal(0.0, 0.1, size=b.shape) for b in params.biases]
    x = rng.normal(size=(3, 4))
    upstream_logits = rng.normal(size=(3, 3))
    upstream_card = rng.normal(size=(3, 4))

    def scalar(flat: np.ndarray) -> float:
        out, _ = forward(params.unflatten(flat), x)
        return float(np.sum(out.label_logits * upstream_logits) + np.sum(out.card_preacts * upstream_card))

    _, cache = forward(params, x)
    analytic = backward(params, cache, DualOutput(upstream_logits, upstream_card)).flatten()
    numeric = finite_diff_grad(scalar, params.flatten())
    assert np.allclose(analytic, numeric, rtol=1e-4, atol=1e-7)


def test_backward_with_dropout_matches_finite_differences_under_frozen_mask():
    rng = np.random.default_rng(3)
    arch = _arch(hidden_widths=[5, 6], dropout_rate=0.5)
    params = init_params(arch, 6)
    params.biases = [rng.normal(0.0, 0.1, size=b.shape) for b in params.biases]
    x = rng.normal(size=(3, 4))
    upstream_logits = rng.normal(size=(3, 3))
    upstream_card = rng.normal(size=(3, 4))

    # a fresh stream with the same seed replays the same masks for same-shaped activations
    def scalar(flat: np.ndarray) -> float:
        out, _ = forward(params.unflatten(flat), x, mode="train", rng=make_rng(1, "dropout"))
        return float(np.sum(out.label_logits * upstream_logits) + np.sum(out.card_preacts * upstream_card))

    _, cache = forward(params, x, mode="train", rng=make_rng(1, "dropout"))
    assert all(mask is not None and np.any(mask == 0.0) for mask in cache.masks)
    analytic = backward(params, cache, DualOutput(upstream_logits, upstream_card)).flatten()
    numeric = finite_diff_grad(scalar, params.flatten())
    assert np.allclose(analytic, numeric, rtol=1e-4, atol=1e-7)


def test_backward_is_additive_over_samples():
    rng = np.random.default_rng(9)
    params = init_params(_arch(), 5)
    x = rng.normal(size=(2, 4))
    g_logits, g_card = rng.normal(size=(2, 3)), rng.normal(size=(2, 4))
    _, cache = forward(params, x)
    joint = backward(params, cache, DualOutput(g_logits, g_card)).flatten()
    parts = []
    for i in range(2):
        _, single = forward(params, x[i])
        parts.append(backward(params, single, DualOutput(g_logits[i], g_card[i])).flatten())
    assert np.allclose(joint, parts[0] + parts[1], atol=1e-12)


def test_inverted_dropout_matches_eval_in_expectation():
    arch = Architecture(input_dim=3, hidden_widths=[4], num_labels=2, dropout_rate=0.5)
    params = init_params(arch, 0)
    params.biases[0] = np.ones(4)
    x = np.tile(np.array([0.5, -0.2, 0.8]), (400000, 1))
    train_out, _ = forward(params, x, mode="train", rng=make_rng(0, "dropout"))
    eval_out, _ = forward(params, x[:1], mode="eval")
    mean_logits = train_out.label_logits.mean(axis=0)
    assert np.allclose(mean_logits, eval_out.label_logits[0], rtol=0.01, atol=0.01)


def test_sgd_step_examples():
    arch = Architecture(input_dim=1, hidden_widths=[], num_labels=1, dropout_rate=0.0)
    params = ModelParams(arch, [np.ones((1, 3))], [np.zeros(3)])
    zeros = params.zeros_like()
    state = OptimizerState.initial(params, 0.1)

    decayed, _ = sgd_step(params, zeros, state, lr=0.1, momentum=0.0, weight_decay=5e-4)
    assert np.allclose(decayed.weights[0], 0.99995)
    assert np.array_equal(decayed.biases[0], params.biases[0])

    grads = ModelParams(arch, [np.full((1, 3), 2.0)], [np.full(3, -1.0)])
    plain, _ = sgd_step(params, grads, state, lr=0.5, momentum=0.0, weight_decay=0.0)
    assert np.allclose(plain.weights[0], 0.0)
    assert np.allclose(plain.biases[0], 0.5)

    unchanged, _ = sgd_step(params, zeros, state, lr=0.5, momentum=0.9, weight_decay=0.0)
    assert np.array_equal(unchanged.weights[0], params.weights[0])


def test_sgd_step_accumulates_momentum():
    arch = Architecture(input_dim=1, hidden_widths=[], num_labels=1, dropout_rate=0.0)
    params = ModelParams(arch, [np.zeros((1, 3))], [np.zeros(3)])
    grads = ModelParams(arch, [np.ones((1, 3))], [np.ones(3)])
    state = OptimizerState.initial(params, 0.1)
    params, state = sgd_step(params, grads, state, lr=0.1, momentum=0.9, weight_decay=0.0)
    params, state = sgd_step(params, grads, state, lr=0.1, momentum=0.9, weight_decay=0.0)
    assert np.allclose(state.velocity.weights[0], 1.9)
    assert np.allclose(params.weights[0], -0.1 - 0.19)


def test_lr_schedule():
    assert lr_schedule(0, 0.001) == pytest.approx(0.001)
    assert lr_schedule(1, 0.001) == pytest.approx(0.00095)
    values = [lr_schedule(epoch, 0.001) for epoch in range(60)]
    assert all(b <= a for a, b in zip(values, values[1:]))
    with pytest.raises(ValueError):
        lr_schedule(-1, 0.001)

import copy
import random

import numpy as np
import pytest

from clustersmith.errors import (
    DimensionMismatch,
    EmptyDataset,
    NonSymmetricInput,
)
from clustersmith.gnn import (
    FEATURE_DIM,
    GnnModel,
    TrainConfig,
    forward,
    generate_dataset,
    gradients,
    init_model,
    load_model,
    node_features,
    normalized_adjacency,
    predict_seconds,
    save_model,
    train,
    validation_mape,
)
from clustersmith.parallelism import comm_time


def test_normalized_adjacency_isolated_node():
    assert normalized_adjacency(np.zeros((1, 1))).tolist() == [[1.0]]


def test_normalized_adjacency_single_edge():
    a = np.array([[0, 1], [1, 0]])
    assert normalized_adjacency(a) == pytest.approx(np.full((2, 2), 0.5))


def test_normalized_adjacency_path_graph_oracle():
    a = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    # independent dense evaluation
    ai = a + np.eye(3)
    d = np.diag(1.0 / np.sqrt(ai.sum(axis=1)))
    expected = d @ ai @ d
    assert normalized_adjacency(a) == pytest.approx(expected)


def test_normalized_adjacency_k_regular_diagonal():
    # ring of 5 nodes is 2-regular: diagonal 1/(k+1)
    a = np.zeros((5, 5))
    for i in range(5):
        a[i, (i + 1) % 5] = a[(i + 1) % 5, i] = 1
    norm = normalized_adjacency(a)
    assert np.diag(norm) == pytest.approx(np.full(5, 1 / 3))


def test_normalized_adjacency_rejects_asymmetric():
    with pytest.raises(NonSymmetricInput):
        normalized_adjacency(np.array([[0, 1], [0, 0]]))
    with pytest.raises(NonSymmetricInput):
        normalized_adjacency(np.array([[1.0]]))


# ---------------------------------------------------------------------------
# forward / gradients


def _random_instance(seed=0):
    sample = generate_dataset(seed=seed, count=1)[0]
    a_hat = normalized_adjacency(sample.graph.adjacency)
    h = node_features(sample.graph, sample.level)
    return sample, a_hat, h


def test_forward_zero_model_predicts_zero():
    _, a_hat, h = _random_instance()
    model = init_model(seed=0)
    for w in model.weights:
        w[:] = 0
    model.head_w[:] = 0
    assert forward(model, a_hat, h) == 0.0


def test_forward_single_node_identity():
    model = GnnModel(weights=[np.eye(FEATURE_DIM)],
                     biases=[np.zeros(FEATURE_DIM)],
                     head_w=np.ones(FEATURE_DIM), head_b=0.0)
    h = np.abs(np.random.default_rng(1).normal(size=(1, FEATURE_DIM)))
    # single node: A_hat = [[1]], relu is identity on nonnegative input
    assert forward(model, np.array([[1.0]]), h) == pytest.approx(float(h.sum()))


def test_forward_dimension_mismatch():
    model = init_model(seed=0)
    with pytest.raises(DimensionMismatch):
        forward(model, np.eye(2), np.zeros((2, 3)))
    with pytest.raises(DimensionMismatch):
        forward(model, np.eye(3), np.zeros((2, FEATURE_DIM)))


def test_forward_permutation_invariance():
    rng = np.random.default_rng(9)
    for seed in range(5):
        _, a_hat, h = _random_instance(seed)
        model = init_model(seed=seed)
        base = forward(model, a_hat, h)
        perm = rng.permutation(h.shape[0])
        assert forward(model, a_hat[np.ix_(perm, perm)], h[perm]) == \
            pytest.approx(base, abs=1e-12)


def test_gradients_zero_at_optimum():
    _, a_hat, h = _random_instance()
    model = init_model(seed=3)
    target = forward(model, a_hat, h)
    grad = gradients(model, a_hat, h, target)
    assert grad.head_b == 0.0
    assert np.allclose(grad.head_w, 0.0)
    for gw in grad.weights:
        assert np.allclose(gw, 0.0)


def _flatten(model):
    return np.concatenate([w.ravel() for w in model.weights]
                          + [b.ravel() for b in model.biases]
                          + [model.head_w, [model.head_b]])


def _unflatten_into(model, vec):
    i = 0
    for w in model.weights:
        w[:] = vec[i:i + w.size].reshape(w.shape)
        i += w.size
    for b in model.biases:
        b[:] = vec[i:i + b.size]
        i += b.size
    model.head_w[:] = vec[i:i + model.head_w.size]
    i += model.head_w.size
    model.head_b = float(vec[i])


def test_gradients_match_central_finite_differences():
    step = 1e-5
    rng = np.random.default_rng(12)
    for seed in range(8):
        _, a_hat, h = _random_instance(seed)
        model = init_model(seed=seed + 100)
        target = forward(model, a_hat, h) + rng.normal()
        grad = gradients(model, a_hat, h, target)
        analytic = _flatten(GnnModel(
            weights=grad.weights, biases=grad.biases,
            head_w=grad.head_w, head_b=grad.head_b))
        theta = _flatten(model)
        probe = copy.deepcopy(model)
        idx = rng.choice(theta.size, size=25, replace=False)
        for j in idx:
            for sign, store in ((1, "plus"), (-1, "minus")):
                vec = theta.copy()
                vec[j] += sign * step
                _unflatten_into(probe, vec)
                val = (forward(probe, a_hat, h) - target) ** 2
                if sign == 1:
                    plus = val
                else:
                    minus = val
            numeric = (plus - minus) / (2 * step)
            scale = max(abs(numeric), abs(analytic[j]), 1e-8)
            assert abs(numeric - analytic[j]) / scale < 1e-4


def test_head_bias_gradient_with_zero_features():
    model = init_model(seed=4)
    a_hat = np.array([[1.0]])
    h = np.zeros((1, FEATURE_DIM))
    target = -1.5
    pred = forward(model, a_hat, h)
    grad = gradients(model, a_hat, h, target)
    assert grad.head_b == pytest.approx(2 * (pred - target))


# ---------------------------------------------------------------------------
# dataset


def test_dataset_deterministic():
    a = generate_dataset(seed=5, count=10)
    b = generate_dataset(seed=5, count=10)
    assert len(a) == len(b) == 10
    for x, y in zip(a, b):
        assert x.graph == y.graph
        assert x.level == y.level
        assert x.label_seconds == y.label_seconds


def test_dataset_single_sample():
    assert len(generate_dataset(seed=1, count=1)) == 1
    with pytest.raises(EmptyDataset):
        generate_dataset(seed=1, count=0)


def test_dataset_labels_match_analytic_reevaluation():
    for s in generate_dataset(seed=8, count=20):
        assert s.label_seconds == sum(comm_time(s.level, s.graph))


# ---------------------------------------------------------------------------
# training


def test_zero_learning_rate_keeps_weights():
    samples = generate_dataset(seed=2, count=20)
    model = init_model(seed=2)
    before = _flatten(model).copy()
    mu, sigma = model.label_mu, model.label_sigma
    model, _, _ = train(model, samples,
                        TrainConfig(learning_rate=0.0, epochs=5, seed=2))
    after = _flatten(model)
    assert np.array_equal(before, after)


def test_training_deterministic():
    samples = generate_dataset(seed=6, count=30)
    runs = []
    for _ in range(2):
        model = init_model(seed=6)
        model, history, _ = train(model, samples,
                                  TrainConfig(seed=6, epochs=40))
        runs.append((save_model(model), tuple(history)))
    assert runs[0] == runs[1]


def test_training_empty_dataset():
    with pytest.raises(EmptyDataset):
        train(init_model(seed=0), [], TrainConfig())


def test_default_config_reaches_mape_gate():
    samples = generate_dataset(seed=0, count=200)
    model = init_model(seed=0)
    model, history, val_idx = train(model, samples, TrainConfig(seed=0))
    assert history[-1] < history[0]
    assert validation_mape(model, samples, val_idx) <= 0.25


def test_model_round_trip():
    samples = generate_dataset(seed=3, count=10)
    model = init_model(seed=3)
    model, _, _ = train(model, samples, TrainConfig(seed=3, epochs=10))
    text = save_model(model)
    loaded = load_model(text)
    assert save_model(loaded) == text
    s = samples[0]
    assert predict_seconds(loaded, s.graph, s.level) == \
        predict_seconds(model, s.graph, s.level)


def test_load_model_rejects_garbage():
    with pytest.raises(DimensionMismatch):
        load_model("not a model\n")

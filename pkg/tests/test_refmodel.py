import numpy as np
import pytest

from adequacy_lab import refmodel
from adequacy_lab.errors import DomainError
from adequacy_lab.refmodel import (
    LabeledDataset,
    ModelConfig,
    TrainConfig,
    accuracy,
    extract_traces,
    init_model,
    layer_activations,
    load_model,
    loss_and_grads,
    make_dataset,
    predict,
    save_model,
    train,
)


def two_blobs(n=200, seed=0):
    rng = np.random.default_rng(seed)
    half = n // 2
    a = rng.normal((-2, -2), 1.0, size=(half, 2))
    b = rng.normal((2, 2), 1.0, size=(half, 2))
    inputs = np.vstack([a, b])
    inputs = (inputs - inputs.min()) / (inputs.max() - inputs.min())
    labels = np.array([0] * half + [1] * half)
    return LabeledDataset(inputs, labels, 2)


def tiny_model(seed=0, **kw):
    cfg = ModelConfig(layer_sizes=kw.pop("layer_sizes", [2, 2, 2]), seed=seed, **kw)
    return init_model(cfg, TrainConfig())


class TestTrain:
    def test_separable_blobs_reach_95pct(self):
        data = two_blobs()
        model = train(data, ModelConfig([2, 8, 2], seed=1),
                      TrainConfig(epochs=40, batch_size=16, learning_rate=0.05, seed=2))
        assert accuracy(model, data) >= 0.95

    def test_zero_epochs_returns_initialization(self):
        data = two_blobs()
        m_cfg = ModelConfig([2, 4, 2], seed=3)
        t_cfg = TrainConfig(epochs=0, seed=4)
        trained = train(data, m_cfg, t_cfg)
        fresh = init_model(m_cfg, t_cfg)
        for a, b in zip(trained.weights, fresh.weights):
            np.testing.assert_array_equal(a, b)

    def test_same_seed_bitwise_identical(self):
        data = two_blobs()
        kw = dict(epochs=10, batch_size=16, learning_rate=0.05, seed=5)
        m1 = train(data, ModelConfig([2, 6, 2], seed=6), TrainConfig(**kw))
        m2 = train(data, ModelConfig([2, 6, 2], seed=6), TrainConfig(**kw))
        for a, b in zip(m1.weights + m1.biases, m2.weights + m2.biases):
            np.testing.assert_array_equal(a, b)

    def test_dropout_zero_is_exact_noop(self):
        data = two_blobs()
        kw = dict(epochs=8, batch_size=16, learning_rate=0.05, seed=7)
        m1 = train(data, ModelConfig([2, 6, 2], dropout_rate=0.0, seed=8),
                   TrainConfig(**kw))
        m2 = train(data, ModelConfig([2, 6, 2], seed=8), TrainConfig(**kw))
        for a, b in zip(m1.weights + m1.biases, m2.weights + m2.biases):
            np.testing.assert_array_equal(a, b)

    def test_loss_trend_non_increasing_on_average(self):
        data = two_blobs()
        model = train(data, ModelConfig([2, 8, 2], seed=9),
                      TrainConfig(epochs=30, batch_size=16, learning_rate=0.05, seed=10))
        losses = model.history["train_loss"]
        first = np.mean(losses[: len(losses) // 3])
        last = np.mean(losses[-len(losses) // 3:])
        assert last < first

    def test_shape_mismatch_rejected(self):
        data = two_blobs()
        with pytest.raises(Exception):
            train(data, ModelConfig([3, 4, 2], seed=0), TrainConfig(epochs=1))


class TestPredict:
    def test_argmax(self):
        model = tiny_model(layer_sizes=[2, 2])
        model.weights[0] = np.array([[0.0, 0.0], [0.0, 0.0]])
        model.biases[0] = np.array([0.1, 0.9])
        assert predict(model, [[1.0, 0.0]])[0] == 1

    def test_tie_breaks_to_lowest_class(self):
        model = tiny_model(layer_sizes=[2, 2])
        model.weights[0] = np.zeros((2, 2))
        model.biases[0] = np.array([0.5, 0.5])
        assert predict(model, [[1.0, 0.0]])[0] == 0

    def test_matches_manual_forward_pass(self):
        model = tiny_model(layer_sizes=[2, 2, 2])
        model.weights[0] = np.array([[1.0, -1.0], [0.5, 2.0]])
        model.biases[0] = np.array([0.1, -0.2])
        model.weights[1] = np.array([[2.0, 0.0], [-1.0, 1.0]])
        model.biases[1] = np.array([0.0, 0.3])
        x = np.array([0.7, 0.4])
        h = np.maximum(0.0, x @ model.weights[0] + model.biases[0])
        logits = h @ model.weights[1] + model.biases[1]
        got = refmodel.logits(model, [x])[0]
        np.testing.assert_allclose(got, logits, atol=1e-15)
        assert predict(model, [x])[0] == np.argmax(logits)


class TestExtractTraces:
    def test_latent_dim_equals_class_count(self):
        data = two_blobs(40)
        model = tiny_model(layer_sizes=[2, 4, 2])
        ts = extract_traces(model, data, "test")
        assert ts.latent_dim == data.class_count

    def test_predicted_equals_argmax_of_latent(self):
        data = two_blobs(40)
        model = tiny_model(layer_sizes=[2, 4, 2], seed=11)
        ts = extract_traces(model, data, "test")
        for t in ts.traces:
            assert t.predicted == int(np.argmax(t.latent))

    def test_single_layer_latent_matches_manual(self):
        model = tiny_model(layer_sizes=[2, 2])
        model.weights[0] = np.array([[1.0, 2.0], [3.0, 4.0]])
        model.biases[0] = np.array([0.0, 0.0])
        data = LabeledDataset(np.array([[1.0, 0.0]]), np.array([0]), 2)
        ts = extract_traces(model, data, "test")
        np.testing.assert_allclose(ts.traces[0].latent, [1.0, 2.0], atol=1e-15)


class TestLayerActivations:
    def test_zero_input_zero_bias_relu(self):
        model = tiny_model(layer_sizes=[2, 3, 2])
        for b in model.biases:
            b[:] = 0.0
        acts = layer_activations(model, np.zeros(2))
        for a in acts:
            np.testing.assert_array_equal(a, np.zeros_like(a))

    def test_activation_count(self):
        model = tiny_model(layer_sizes=[2, 5, 3, 2])
        acts = layer_activations(model, np.array([0.2, 0.8]))
        assert [len(a) for a in acts] == [5, 3, 2]

    def test_matches_manual_2_2_2(self):
        model = tiny_model(layer_sizes=[2, 2, 2])
        model.weights[0] = np.array([[1.0, 0.0], [0.0, 1.0]])
        model.biases[0] = np.array([0.5, -0.5])
        model.weights[1] = np.array([[1.0, 1.0], [1.0, -1.0]])
        model.biases[1] = np.array([0.0, 0.0])
        x = np.array([0.3, 0.2])
        h = np.maximum(0.0, x + np.array([0.5, -0.5]))
        logits = h @ model.weights[1]
        acts = layer_activations(model, x)
        np.testing.assert_allclose(acts[0], h, atol=1e-15)
        np.testing.assert_allclose(acts[1], logits, atol=1e-15)


class TestGradients:
    def test_analytic_matches_finite_differences(self):
        rng = np.random.default_rng(12)
        model = tiny_model(layer_sizes=[2, 2, 2], seed=13)
        x = rng.uniform(0, 1, size=(5, 2))
        y = rng.integers(0, 2, size=5)
        _, gw, gb = loss_and_grads(model, x, y)
        h = 1e-5
        for kind, grads, params in (("w", gw, model.weights), ("b", gb, model.biases)):
            for li, (g, p) in enumerate(zip(grads, params)):
                it = np.nditer(p, flags=["multi_index"])
                for _ in it:
                    ix = it.multi_index
                    orig = p[ix]
                    p[ix] = orig + h
                    lp, _, _ = loss_and_grads(model, x, y)
                    p[ix] = orig - h
                    lm, _, _ = loss_and_grads(model, x, y)
                    p[ix] = orig
                    fd = (lp - lm) / (2 * h)
                    denom = max(abs(fd), abs(g[ix]), 1e-8)
                    assert abs(fd - g[ix]) / denom < 1e-4, (kind, li, ix)

    def test_gradient_check_all_activations(self):
        rng = np.random.default_rng(14)
        x = rng.uniform(0, 1, size=(4, 3))
        y = rng.integers(0, 2, size=4)
        for act in refmodel.ACTIVATIONS:
            model = init_model(ModelConfig([3, 3, 2], activation=act, seed=15),
                               TrainConfig())
            _, gw, _ = loss_and_grads(model, x, y)
            h = 1e-6
            p = model.weights[0]
            orig = p[0, 0]
            p[0, 0] = orig + h
            lp, _, _ = loss_and_grads(model, x, y)
            p[0, 0] = orig - h
            lm, _, _ = loss_and_grads(model, x, y)
            p[0, 0] = orig
            fd = (lp - lm) / (2 * h)
            assert fd == pytest.approx(gw[0][0, 0], rel=1e-3, abs=1e-8), act


class TestAdamBehavior:
    def test_first_step_moves_against_gradient_sign(self):
        data = two_blobs(40)
        m_cfg = ModelConfig([2, 2], seed=16)
        t_cfg = TrainConfig(epochs=1, batch_size=40, learning_rate=0.01,
                            adam_beta1=1e-6, adam_beta2=1e-6, seed=17,
                            use_scheduler=False)
        before = init_model(m_cfg, t_cfg)
        _, gw, gb = loss_and_grads(before, data.inputs, data.labels)
        after = train(data, m_cfg, t_cfg)
        # single batch, single epoch: one Adam step from zero moments
        step = after.weights[0] - before.weights[0]
        moved = np.abs(gw[0]) > 1e-12
        assert np.all(np.sign(step[moved]) == -np.sign(gw[0][moved]))


class TestPersistence:
    def test_round_trip(self):
        data = two_blobs(60)
        model = train(data, ModelConfig([2, 5, 2], seed=18),
                      TrainConfig(epochs=5, seed=19))
        blob = save_model(model)
        assert blob[:4] == b"LMDL"
        loaded = load_model(blob)
        for a, b in zip(model.weights + model.biases,
                        loaded.weights + loaded.biases):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(predict(model, data.inputs),
                                      predict(loaded, data.inputs))


class TestMakeDataset:
    def test_blobs_split_arithmetic(self):
        splits = make_dataset("blobs", {"classes": 3, "samples": 300}, seed=20)
        assert len(splits.train) == 210
        assert len(splits.validation) == 30
        assert len(splits.test) == 60
        for c in range(3):
            counts = [int(np.sum(s.labels == c))
                      for s in (splits.train, splits.validation, splits.test)]
            assert abs(counts[0] - 70) <= 1
            assert abs(counts[1] - 10) <= 1
            assert abs(counts[2] - 20) <= 1

    def test_same_seed_identical(self):
        s1 = make_dataset("blobs", {"classes": 3, "samples": 300}, seed=21)
        s2 = make_dataset("blobs", {"classes": 3, "samples": 300}, seed=21)
        np.testing.assert_array_equal(s1.train.inputs, s2.train.inputs)
        np.testing.assert_array_equal(s1.test.labels, s2.test.labels)

    def test_rings_not_linearly_separable(self):
        splits = make_dataset("rings", {"classes": 2, "samples": 400, "noise": 0.015},
                              seed=22)
        linear = train(splits.train, ModelConfig([2, 2], seed=23),
                       TrainConfig(epochs=60, learning_rate=0.05, seed=24))
        hidden = train(splits.train, ModelConfig([2, 24, 2], seed=25),
                       TrainConfig(epochs=60, learning_rate=0.05, seed=26))
        assert accuracy(linear, splits.test) < 0.8
        assert accuracy(hidden, splits.test) > 0.9

    def test_digits_file_missing(self):
        with pytest.raises(DomainError):
            make_dataset("digits_file", {"path": "/nonexistent/file.csv"}, seed=0)

    def test_digits_file_round_trip(self, tmp_path):
        rng = np.random.default_rng(27)
        rows = np.hstack([rng.integers(0, 3, size=(60, 1)),
                          rng.uniform(0, 255, size=(60, 4))])
        path = tmp_path / "digits.csv"
        np.savetxt(path, rows, delimiter=",")
        splits = make_dataset("digits_file", {"path": str(path)}, seed=28)
        assert splits.train.class_count == 3
        assert splits.train.inputs.min() >= 0.0
        assert splits.train.inputs.max() <= 1.0

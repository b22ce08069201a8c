import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adequacy_lab import mutation
from adequacy_lab.errors import DomainError, EmptyInputError
from adequacy_lab.mutation import (
    OPERATORS,
    MutantSpec,
    apply_operator,
    build_mutants,
    catalogue_from_json,
    default_catalogue,
    mutation_score,
    prediction_disagreement,
)
from adequacy_lab.refmodel import (
    LabeledDataset,
    ModelConfig,
    TrainConfig,
    predict,
    train,
)


@pytest.fixture(scope="module")
def base():
    rng = np.random.default_rng(0)
    n = 60
    a = np.clip(rng.normal((0.25, 0.25), 0.05, size=(n, 2)), 0, 1)
    b = np.clip(rng.normal((0.75, 0.75), 0.05, size=(n, 2)), 0, 1)
    data = LabeledDataset(np.vstack([a, b]), np.array([0] * n + [1] * n), 2)
    model_cfg = ModelConfig([2, 8, 2], seed=1)
    train_cfg = TrainConfig(epochs=15, batch_size=16, learning_rate=0.05, seed=2)
    model = train(data, model_cfg, train_cfg)
    return data, model_cfg, train_cfg, model


def spec_for(op):
    """A valid spec for any operator."""
    needs = {
        "add_training_noise": {"fraction": 0.3},
        "remove_samples": {"fraction": 0.3},
        "make_classes_overlap": {"fraction": 0.3},
        "change_labels": {"percent": 20},
        "change_activation": {"activation": "tanh"},
        "layer_size": {"scale": 0.5},
        "add_dropout": {"rate": 0.3},
    }
    return MutantSpec(op, needs.get(op, {}), seed=9)


class TestSpecValidation:
    def test_unknown_operator(self):
        with pytest.raises(DomainError):
            MutantSpec("delete_everything")

    @pytest.mark.parametrize("op,params", [
        ("add_training_noise", {}),
        ("add_training_noise", {"fraction": 1.5}),
        ("remove_samples", {"fraction": 0.0}),
        ("change_labels", {"percent": 100}),
        ("change_activation", {"activation": "swish"}),
        ("layer_size", {"scale": 0}),
        ("add_dropout", {"rate": 1.0}),
        ("increase_batch", {"batch_size": -4}),
        ("increase_lr", {"learning_rate": 0.0}),
    ])
    def test_bad_params_rejected(self, op, params):
        with pytest.raises(DomainError):
            MutantSpec(op, params)

    def test_mutant_id_is_deterministic_and_distinct(self):
        a = MutantSpec("add_dropout", {"rate": 0.3}, seed=1)
        b = MutantSpec("add_dropout", {"rate": 0.3}, seed=2)
        assert a.mutant_id == MutantSpec("add_dropout", {"rate": 0.3}, seed=1).mutant_id
        assert a.mutant_id != b.mutant_id


class TestApplyOperator:
    def test_each_operator_changes_exactly_one_aspect(self, base):
        data, model_cfg, train_cfg, _ = base
        for op in OPERATORS:
            m_cfg, t_cfg, m_data = apply_operator(model_cfg, train_cfg, data,
                                                  spec_for(op))
            model_diff = [f.name for f in dataclasses.fields(ModelConfig)
                          if getattr(m_cfg, f.name) != getattr(model_cfg, f.name)]
            train_diff = [f.name for f in dataclasses.fields(TrainConfig)
                          if getattr(t_cfg, f.name) != getattr(train_cfg, f.name)]
            data_changed = m_data is not data
            aspects = (len(model_diff) > 0) + (len(train_diff) > 0) + data_changed
            assert aspects == 1, (op, model_diff, train_diff, data_changed)
            assert len(model_diff) <= 1 and len(train_diff) <= 1, op

    def test_base_configs_never_mutated_in_place(self, base):
        data, model_cfg, train_cfg, _ = base
        before_m = dataclasses.asdict(model_cfg)
        before_t = dataclasses.asdict(train_cfg)
        before_labels = data.labels.copy()
        for op in OPERATORS:
            apply_operator(model_cfg, train_cfg, data, spec_for(op))
        assert dataclasses.asdict(model_cfg) == before_m
        assert dataclasses.asdict(train_cfg) == before_t
        np.testing.assert_array_equal(data.labels, before_labels)

    def test_batch_and_lr_defaults(self, base):
        data, model_cfg, train_cfg, _ = base
        _, t, _ = apply_operator(model_cfg, train_cfg, data, MutantSpec("increase_batch"))
        assert t.batch_size == 256
        _, t, _ = apply_operator(model_cfg, train_cfg, data, MutantSpec("decrease_batch"))
        assert t.batch_size == 4
        _, t, _ = apply_operator(model_cfg, train_cfg, data, MutantSpec("decrease_lr"))
        assert t.learning_rate == 1e-5
        _, t, _ = apply_operator(model_cfg, train_cfg, data, MutantSpec("increase_lr"))
        assert t.learning_rate == 0.5

    def test_layer_size_scales_hidden_only(self, base):
        data, _, train_cfg, _ = base
        model_cfg = ModelConfig([2, 8, 6, 2], seed=0)
        m, _, _ = apply_operator(model_cfg, train_cfg, data,
                                 MutantSpec("layer_size", {"scale": 0.5}))
        assert m.layer_sizes == [2, 4, 3, 2]

    def test_remove_bias_disables_all_layers(self, base):
        data, model_cfg, train_cfg, _ = base
        m, _, _ = apply_operator(model_cfg, train_cfg, data, MutantSpec("remove_bias"))
        assert m.use_bias_per_layer == [False, False]

    def test_remove_call_disables_scheduler(self, base):
        data, model_cfg, train_cfg, _ = base
        _, t, _ = apply_operator(model_cfg, train_cfg, data, MutantSpec("remove_call"))
        assert t.use_scheduler is False

    def test_remove_zero_grad_sets_flag(self, base):
        data, model_cfg, train_cfg, _ = base
        _, t, _ = apply_operator(model_cfg, train_cfg, data,
                                 MutantSpec("remove_zero_grad"))
        assert t.skip_zero_grad is True


class TestDataMutations:
    def test_change_labels_flips_exact_count_to_different_labels(self, base):
        data, model_cfg, train_cfg, _ = base
        spec = MutantSpec("change_labels", {"percent": 25}, seed=3)
        _, _, mutated = apply_operator(model_cfg, train_cfg, data, spec)
        flipped = int(np.sum(mutated.labels != data.labels))
        assert flipped == int(len(data) * 0.25)

    def test_change_labels_deterministic(self, base):
        data, model_cfg, train_cfg, _ = base
        spec = MutantSpec("change_labels", {"percent": 25}, seed=3)
        _, _, m1 = apply_operator(model_cfg, train_cfg, data, spec)
        _, _, m2 = apply_operator(model_cfg, train_cfg, data, spec)
        np.testing.assert_array_equal(m1.labels, m2.labels)

    def test_remove_samples_shrinks_per_class(self, base):
        data, model_cfg, train_cfg, _ = base
        spec = MutantSpec("remove_samples", {"fraction": 0.5}, seed=4)
        _, _, mutated = apply_operator(model_cfg, train_cfg, data, spec)
        for c in range(2):
            n_before = int(np.sum(data.labels == c))
            n_after = int(np.sum(mutated.labels == c))
            assert n_after == n_before - int(round(n_before * 0.5))

    def test_remove_samples_keeps_at_least_one_per_class(self):
        data = LabeledDataset(np.array([[0.1], [0.9]]), np.array([0, 1]), 2)
        spec = MutantSpec("remove_samples", {"fraction": 0.99}, seed=5)
        _, _, mutated = apply_operator(ModelConfig([1, 2], seed=0), TrainConfig(),
                                       data, spec)
        assert set(mutated.labels.tolist()) == {0, 1}

    def test_overlap_moves_labels_from_adjacent_class(self, base):
        data, model_cfg, train_cfg, _ = base
        spec = MutantSpec("make_classes_overlap", {"fraction": 0.5,
                                                   "class_index": 0}, seed=6)
        _, _, mutated = apply_operator(model_cfg, train_cfg, data, spec)
        changed = mutated.labels != data.labels
        # only class-1 samples were relabeled, all of them to class 0
        assert np.all(data.labels[changed] == 1)
        assert np.all(mutated.labels[changed] == 0)
        assert int(changed.sum()) == int(round(np.sum(data.labels == 1) * 0.5))

    def test_noise_stays_in_unit_interval(self, base):
        data, model_cfg, train_cfg, _ = base
        spec = MutantSpec("add_training_noise", {"fraction": 0.9}, seed=7)
        _, _, mutated = apply_operator(model_cfg, train_cfg, data, spec)
        assert mutated.inputs.min() >= 0.0
        assert mutated.inputs.max() <= 1.0
        assert not np.array_equal(mutated.inputs, data.inputs)
        np.testing.assert_array_equal(mutated.labels, data.labels)


class TestDisagreement:
    def test_identical_is_zero(self):
        assert prediction_disagreement([0, 1, 2], [0, 1, 2]) == 0.0

    def test_all_different_is_one(self):
        assert prediction_disagreement([0, 0], [1, 1]) == 1.0

    def test_half(self):
        assert prediction_disagreement([0, 1, 0, 1], [0, 1, 1, 0]) == 0.5

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            prediction_disagreement([0, 1], [0, 1, 2])

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            prediction_disagreement([], [])

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(0, 3), min_size=1, max_size=60), st.integers(0, 1000))
    def test_matches_looped_count(self, preds, seed):
        rng = np.random.default_rng(seed)
        other = rng.integers(0, 4, size=len(preds))
        expected = sum(1 for a, b in zip(preds, other) if a != b) / len(preds)
        assert prediction_disagreement(preds, other) == pytest.approx(expected)

    def test_symmetric(self):
        a = [0, 1, 2, 1]
        b = [2, 1, 0, 1]
        assert prediction_disagreement(a, b) == prediction_disagreement(b, a)


class TestMutationScore:
    def test_model_against_itself_is_zero(self, base):
        data, _, _, model = base
        assert mutation_score(model, model, data) == 0.0

    def test_matches_manual_disagreement(self, base):
        data, model_cfg, train_cfg, model = base
        m_cfg, t_cfg, m_data = apply_operator(model_cfg, train_cfg, data,
                                              MutantSpec("change_labels",
                                                         {"percent": 60}, seed=8))
        m_cfg.seed, t_cfg.seed = 8, 9
        mutant = train(m_data, m_cfg, t_cfg)
        score = mutation_score(model, mutant, data)
        manual = float(np.mean(predict(model, data.inputs)
                               != predict(mutant, data.inputs)))
        assert score == manual
        assert 0.0 <= score <= 1.0


class TestBuildMutants:
    def test_trains_catalogue_and_is_deterministic(self, base):
        data, model_cfg, train_cfg, _ = base
        cat = [MutantSpec("increase_lr", seed=10),
               MutantSpec("change_labels", {"percent": 30}, seed=11)]
        r1 = build_mutants(cat, model_cfg, train_cfg, data)
        r2 = build_mutants(cat, model_cfg, train_cfg, data)
        assert len(r1) == 2
        for a, b in zip(r1, r2):
            assert a.model is not None
            for wa, wb in zip(a.model.weights, b.model.weights):
                np.testing.assert_array_equal(wa, wb)

    def test_empty_catalogue_rejected(self, base):
        data, model_cfg, train_cfg, _ = base
        with pytest.raises(EmptyInputError):
            build_mutants([], model_cfg, train_cfg, data)

    def test_mutant_seeds_derive_from_spec(self, base):
        data, model_cfg, train_cfg, _ = base
        results = build_mutants([MutantSpec("remove_call", seed=77)],
                                model_cfg, train_cfg, data)
        assert results[0].model.config.seed == 77
        assert results[0].model.train_config.seed == 78


class TestCatalogue:
    def test_default_covers_all_operators(self):
        cat = default_catalogue()
        assert {s.operator for s in cat} == set(OPERATORS)
        assert len(cat) >= 15

    def test_default_seeds_distinct(self):
        seeds = [s.seed for s in default_catalogue()]
        assert len(seeds) == len(set(seeds))

    def test_json_round_trip(self):
        cat = default_catalogue()
        text = json.dumps([{"operator": s.operator, "params": s.params,
                            "seed": s.seed} for s in cat])
        parsed = catalogue_from_json(text)
        assert [(s.operator, s.params, s.seed) for s in parsed] == \
            [(s.operator, s.params, s.seed) for s in cat]

    def test_json_rejects_non_array(self):
        with pytest.raises(DomainError):
            catalogue_from_json('{"operator": "remove_call"}')

    def test_json_rejects_unknown_operator(self):
        with pytest.raises(DomainError):
            catalogue_from_json('[{"operator": "nope"}]')

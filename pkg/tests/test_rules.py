"""Relevance propagation rules: hand values, conservation, and oracles."""

import numpy as np
import pytest

from relprop import (
    Dense,
    InvalidConfig,
    Model,
    ReLU,
    RuleConfig,
    ShapeMismatch,
    TraceMismatch,
    forward_traced,
    linear_decompose,
    propagate,
    sensitivity_map,
)
from conftest import assert_conserving, naive_alphabeta_dense, random_input, random_model


def relu_neuron(w, b=0.0):
    w = np.asarray(w, dtype=np.float64).reshape(-1, 1)
    return Model(input_shape=(w.shape[0],), layers=[Dense(w, np.array([b])), ReLU()])


def propagate_on(model, x, config, target=0):
    _, trace = forward_traced(model, x)
    return propagate(model, trace, target, config)


class TestPropagateHandValues:
    """Single ReLU neuron, x=(1,1), w=(2,-1), b=0, so R_j = f(x) = 1."""

    def test_alpha1_beta0(self):
        rmap = propagate_on(relu_neuron([2.0, -1.0]), np.array([1.0, 1.0]),
                            RuleConfig.alpha_beta(1.0, 0.0))
        np.testing.assert_allclose(rmap.pixel_scores, [1.0, 0.0], atol=1e-15)

    def test_alpha2_beta1_conserves(self):
        rmap = propagate_on(relu_neuron([2.0, -1.0]), np.array([1.0, 1.0]),
                            RuleConfig.alpha_beta(2.0, 1.0))
        np.testing.assert_allclose(rmap.pixel_scores, [2.0, -1.0], atol=1e-15)
        assert rmap.pixel_scores.sum() == pytest.approx(1.0, abs=1e-15)

    def test_zplus_matches_alpha1_beta0_for_nonneg_input(self):
        rmap = propagate_on(relu_neuron([2.0, -1.0]), np.array([1.0, 1.0]),
                            RuleConfig.zplus())
        np.testing.assert_allclose(rmap.pixel_scores, [1.0, 0.0], atol=1e-15)

    def test_all_negative_contributions_absorb(self):
        model = Model(input_shape=(2,),
                      layers=[Dense(np.array([[-1.0], [-2.0]]), np.zeros(1))])
        rmap = propagate_on(model, np.array([1.0, 1.0]), RuleConfig.alpha_beta(1.0, 0.0))
        np.testing.assert_array_equal(rmap.pixel_scores, [0.0, 0.0])
        # the whole logit value (-3) was dropped by the degenerate positive pool
        assert rmap.initial_relevance == pytest.approx(-3.0)
        assert rmap.total_absorbed == pytest.approx(-3.0)

    def test_invalid_alpha_beta(self):
        with pytest.raises(InvalidConfig):
            RuleConfig.alpha_beta(2.0, 0.5)

    def test_sensitivity_config_rejected_by_propagate(self):
        model = relu_neuron([1.0, 1.0])
        _, trace = forward_traced(model, np.array([1.0, 1.0]))
        with pytest.raises(InvalidConfig):
            propagate(model, trace, 0, RuleConfig.sensitivity())

    def test_foreign_trace_rejected(self):
        model = relu_neuron([1.0, 1.0])
        other = relu_neuron([1.0, 2.0])
        _, trace = forward_traced(other, np.array([1.0, 1.0]))
        with pytest.raises(TraceMismatch):
            propagate(model, trace, 0, RuleConfig.zplus())

    def test_relevance_shapes_match_activations(self):
        rng = np.random.default_rng(21)
        model = random_model(rng)
        x = random_input(rng, model)
        rmap = propagate_on(model, x, RuleConfig.alpha_beta(2.0, 1.0))
        assert len(rmap.layer_relevance) == len(model.layers) + 1
        for rel, shape in zip(rmap.layer_relevance, model.activation_shapes):
            assert rel.shape == shape


class TestConservation:
    def test_random_models_alphabeta(self):
        rng = np.random.default_rng(100)
        for _ in range(30):
            model = random_model(rng)
            x = random_input(rng, model)
            assert_conserving(model, x, RuleConfig.alpha_beta(2.0, 1.0))
            assert_conserving(model, x, RuleConfig.alpha_beta(1.5, 0.5))

    def test_random_models_zplus(self):
        rng = np.random.default_rng(101)
        for _ in range(30):
            model = random_model(rng, always_relu=True)
            x = random_input(rng, model)
            assert_conserving(model, x, RuleConfig.zplus())

    def test_absorbed_matches_shortfall_in_degenerate_case(self):
        # neuron 0 gets only positive contributions, neuron 1 only negative:
        # under alpha=2, beta=1 each degenerate pool leaves a known imbalance
        weights = np.array([[1.0, -1.0], [2.0, -2.0]])
        model = Model(input_shape=(2,), layers=[Dense(weights, np.zeros(2))])
        x = np.array([1.0, 1.0])
        _, trace = forward_traced(model, x)
        for target, cfg in [(0, RuleConfig.alpha_beta(2.0, 1.0)),
                            (1, RuleConfig.alpha_beta(2.0, 1.0))]:
            rmap = propagate(model, trace, target, cfg)
            shortfall = rmap.initial_relevance - rmap.pixel_scores.sum()
            assert shortfall == pytest.approx(rmap.total_absorbed, abs=1e-12)


class TestPoolingRules:
    def test_maxpool_winner_take_all_routing(self):
        from relprop import Flatten, MaxPool2D

        model = Model(input_shape=(1, 2, 2),
                      layers=[MaxPool2D((2, 2), 2), Flatten(),
                              Dense(np.array([[1.0]]), np.zeros(1))])
        x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        rmap = propagate_on(model, x, RuleConfig.zplus())
        np.testing.assert_array_equal(rmap.pixel_scores, [[[0.0, 0.0], [0.0, 4.0]]])

    def test_sumpool_redistributes_by_positive_part(self):
        from relprop import Flatten, SumPool2D

        model = Model(input_shape=(1, 2, 2),
                      layers=[SumPool2D((2, 2), 2), Flatten(),
                              Dense(np.array([[1.0]]), np.zeros(1))])
        x = np.array([[[3.0, 1.0], [-2.0, 0.0]]])
        rmap = propagate_on(model, x, RuleConfig.zplus())
        # f(x) = 2; redistribution follows x+ = (3, 1, 0, 0) within the window
        np.testing.assert_allclose(rmap.pixel_scores, [[[1.5, 0.5], [0.0, 0.0]]],
                                   atol=1e-15)

    def test_conv_zplus_matches_gradient_formulation(self):
        # independent path: S = R / conv+(x), then x * vjp(S) with the clamped kernel
        from relprop import Conv2D, Flatten

        rng = np.random.default_rng(107)
        for _ in range(10):
            kernel = rng.uniform(-1.0, 1.0, (2, 1, 2, 2))
            conv = Conv2D(kernel, rng.uniform(-0.2, 0.2, 2), stride=1)
            width = 2 * 3 * 3
            model = Model(input_shape=(1, 4, 4),
                          layers=[conv, Flatten(),
                                  Dense(rng.uniform(-1, 1, (width, 2)), np.zeros(2))])
            x = rng.uniform(0.0, 1.0, (1, 4, 4))
            logits, trace = forward_traced(model, x)
            target = int(np.argmax(np.abs(logits)))
            rmap = propagate(model, trace, target, RuleConfig.zplus())

            clamped = Conv2D(np.maximum(kernel, 0.0), np.zeros(2), stride=1)
            z = clamped.forward(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                s = np.where(z != 0.0, rmap.layer_relevance[1] / z, 0.0)
            expected = x * clamped.input_gradient(x, s)
            np.testing.assert_allclose(rmap.pixel_scores, expected, rtol=1e-10, atol=1e-12)


class TestRuleEquivalence:
    def test_zplus_equals_alpha1_beta0_on_nonneg_activations(self):
        rng = np.random.default_rng(102)
        for _ in range(30):
            model = random_model(rng, always_relu=True)
            x = random_input(rng, model)
            logits, trace = forward_traced(model, x)
            target = int(np.argmax(np.abs(logits)))
            a = propagate(model, trace, target, RuleConfig.alpha_beta(1.0, 0.0))
            b = propagate(model, trace, target, RuleConfig.zplus())
            for ra, rb in zip(a.layer_relevance, b.layer_relevance):
                np.testing.assert_allclose(ra, rb, rtol=1e-12, atol=1e-12)


class TestBruteForceOracle:
    def test_dense_layers_match_triple_loop(self):
        rng = np.random.default_rng(103)
        checked = 0
        while checked < 25:
            model = random_model(rng)
            x = random_input(rng, model)
            logits, trace = forward_traced(model, x)
            target = int(np.argmax(np.abs(logits)))
            for alpha, beta in ((1.0, 0.0), (2.0, 1.0)):
                rmap = propagate(model, trace, target, RuleConfig.alpha_beta(alpha, beta))
                for k, layer in enumerate(model.layers):
                    if not isinstance(layer, Dense) or layer.weights.shape[0] > 4:
                        continue
                    expected = naive_alphabeta_dense(
                        trace.steps[k].input, layer.weights,
                        rmap.layer_relevance[k + 1], alpha, beta,
                    )
                    np.testing.assert_allclose(rmap.layer_relevance[k], expected,
                                               rtol=1e-12, atol=1e-12)
                    checked += 1


class TestSensitivity:
    def test_linear_model_ignores_activation(self):
        model = Model(input_shape=(2,), layers=[Dense(np.array([[0.5], [-1.0]]), np.zeros(1))])
        for x in ([1.0, 2.0], [100.0, -7.0]):
            np.testing.assert_array_equal(sensitivity_map(model, np.array(x), 0), [0.25, 1.0])

    def test_inactive_relu_path_scores_zero(self):
        model = relu_neuron([1.0, 1.0], b=-10.0)
        np.testing.assert_array_equal(sensitivity_map(model, np.array([1.0, 1.0]), 0), [0.0, 0.0])

    def test_scores_nonnegative(self):
        rng = np.random.default_rng(104)
        for _ in range(10):
            model = random_model(rng)
            scores = sensitivity_map(model, random_input(rng, model), 0)
            assert np.all(scores >= 0.0)

    def test_shape_invariant_under_input_scaling(self):
        model = Model(input_shape=(3,), layers=[Dense(np.array([[1.0], [2.0], [-3.0]]), np.zeros(1))])
        x = np.array([0.3, -0.4, 0.9])
        np.testing.assert_array_equal(
            sensitivity_map(model, x, 0), sensitivity_map(model, 5.0 * x, 0)
        )


class TestLinearDecompose:
    def test_hand_example(self):
        r = linear_decompose(np.array([0.5, -1.0]), 0.0, np.array([1.0, 2.0]))
        np.testing.assert_array_equal(r, [0.5, -2.0])
        assert r.sum() == -1.5

    def test_zero_input(self):
        np.testing.assert_array_equal(
            linear_decompose(np.array([3.0, 5.0]), 0.0, np.zeros(2)), [0.0, 0.0]
        )

    def test_masked_input(self):
        np.testing.assert_array_equal(
            linear_decompose(np.array([3.0, 5.0]), 0.0, np.array([1.0, 0.0])), [3.0, 0.0]
        )

    def test_sum_plus_bias_is_score(self):
        rng = np.random.default_rng(105)
        for _ in range(50):
            n = int(rng.integers(1, 9))
            w = rng.normal(size=n)
            x = rng.normal(size=n)
            b = float(rng.normal())
            r = linear_decompose(w, b, x)
            score = float((x * w).sum() + b)
            assert float(r.sum() + b) == score

    def test_scale_covariance(self):
        rng = np.random.default_rng(106)
        w = rng.normal(size=5)
        x = rng.normal(size=5)
        for c in (2.0, -0.5, 10.0):
            np.testing.assert_allclose(
                linear_decompose(w, 0.0, c * x), c * linear_decompose(w, 0.0, x),
                rtol=1e-15,
            )

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            linear_decompose(np.ones(3), 0.0, np.ones(4))

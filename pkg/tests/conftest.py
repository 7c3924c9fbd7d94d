"""Shared test utilities: random model sampling and finite differences."""

import numpy as np
import pytest

from relprop import Conv2D, Dense, Flatten, MaxPool2D, Model, ReLU, SumPool2D, forward, forward_traced


def random_vector_model(rng, always_relu=False):
    """Stack of 2-4 dense layers on a small vector input."""
    width = int(rng.integers(2, 6))
    input_shape = (width,)
    n_linear = int(rng.integers(2, 5))
    layers = []
    for k in range(n_linear):
        out = int(rng.integers(2, 6)) if k < n_linear - 1 else int(rng.integers(2, 4))
        layers.append(Dense(rng.uniform(-1.0, 1.0, (width, out)), rng.uniform(-0.5, 0.5, out)))
        width = out
        if k < n_linear - 1 and (always_relu or rng.random() < 0.7):
            layers.append(ReLU())
    return Model(input_shape=input_shape, layers=layers)


def random_image_model(rng, always_relu=False):
    """Conv/pool stack on a small single- or two-channel image, then dense logits."""
    channels = int(rng.integers(1, 3))
    side = int(rng.integers(5, 8))
    input_shape = (channels, side, side)
    layers = []
    cur_ch, cur = channels, side
    for _ in range(int(rng.integers(1, 3))):
        ksize = int(rng.integers(2, 4))
        if cur - ksize + 1 < 2:
            break
        out_ch = int(rng.integers(1, 4))
        fan = cur_ch * ksize * ksize
        layers.append(Conv2D(rng.uniform(-1.0, 1.0, (out_ch, cur_ch, ksize, ksize)) / fan,
                             rng.uniform(-0.2, 0.2, out_ch)))
        cur = cur - ksize + 1
        cur_ch = out_ch
        if always_relu or rng.random() < 0.7:
            layers.append(ReLU())
        if cur >= 3 and rng.random() < 0.5:
            pool = MaxPool2D((2, 2), 2) if rng.random() < 0.5 else SumPool2D((2, 2), 2)
            layers.append(pool)
            cur = (cur - 2) // 2 + 1
    layers.append(Flatten())
    n_logits = int(rng.integers(2, 4))
    width = cur_ch * cur * cur
    layers.append(Dense(rng.uniform(-1.0, 1.0, (width, n_logits)) / width,
                        rng.uniform(-0.5, 0.5, n_logits)))
    return Model(input_shape=input_shape, layers=layers)


def random_model(rng, always_relu=False):
    if rng.random() < 0.5:
        return random_vector_model(rng, always_relu=always_relu)
    return random_image_model(rng, always_relu=always_relu)


def random_input(rng, model):
    return rng.uniform(0.0, 1.0, size=model.input_shape)


def finite_difference_gradient(model, x, output_index, h=1e-5):
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    base = x.copy().reshape(-1)
    for i in range(base.size):
        for sign in (+1.0, -1.0):
            bumped = base.copy()
            bumped[i] += sign * h
            flat[i] += sign * forward(model, bumped.reshape(x.shape))[output_index]
        flat[i] /= 2.0 * h
    return grad


def near_nondifferentiable_point(model, x, relu_margin=1e-6, pool_margin=1e-3):
    """True when the input sits too close to a ReLU kink or a pooling tie.

    Finite differences step across such points, so gradient checks skip them.
    """
    _, trace = forward_traced(model, x)
    for layer, step in zip(model.layers, trace.steps):
        if isinstance(layer, ReLU) and np.abs(step.input).min() < relu_margin:
            return True
        if isinstance(layer, MaxPool2D):
            ph, pw = layer.window
            from numpy.lib.stride_tricks import sliding_window_view
            win = sliding_window_view(step.input, (ph, pw), axis=(1, 2))[:, ::layer.stride, ::layer.stride]
            flat = np.sort(win.reshape(win.shape[:3] + (-1,)), axis=-1)
            if flat.shape[-1] > 1 and (flat[..., -1] - flat[..., -2]).min() < pool_margin:
                return True
    return False


def naive_alphabeta_dense(x, weights, upper, alpha, beta):
    """Independent triple-loop evaluation of the alpha-beta redistribution."""
    n_in, n_out = weights.shape
    lower = [0.0] * n_in
    for j in range(n_out):
        pos_sum = 0.0
        neg_sum = 0.0
        for i in range(n_in):
            z = x[i] * weights[i][j]
            if z > 0.0:
                pos_sum += z
            elif z < 0.0:
                neg_sum += z
        for i in range(n_in):
            z = x[i] * weights[i][j]
            coeff = 0.0
            if pos_sum != 0.0 and z > 0.0:
                coeff += alpha * z / pos_sum
            if neg_sum != 0.0 and z < 0.0:
                coeff -= beta * z / neg_sum
            lower[i] += coeff * upper[j]
    return np.array(lower)


def assert_conserving(model, x, config, rel_tol=1e-9):
    """Layer-wise and global conservation with explicit absorbed accounting.

    Where no degenerate denominator fired the sums match directly; where one
    did, the shortfall must equal the bookkept absorbed relevance, and the
    lower sum may not exceed the upper one whenever the absorbed mass is
    nonnegative.
    """
    from relprop import propagate

    logits, trace = forward_traced(model, x)
    target = int(np.argmax(np.abs(logits)))
    rmap = propagate(model, trace, target, config)
    f = rmap.initial_relevance
    scale = max(1.0, abs(f))
    sums = rmap.layer_sums()
    for k, absorbed in enumerate(rmap.absorbed):
        residual = abs(sums[k] + absorbed - sums[k + 1])
        assert residual <= rel_tol * scale, f"layer {k}: residual {residual}"
        if absorbed >= 0.0:
            assert sums[k] <= sums[k + 1] + rel_tol * scale
    global_residual = abs(rmap.pixel_scores.sum() + rmap.total_absorbed - f)
    assert global_residual <= rel_tol * scale
    if rmap.total_absorbed == 0.0:
        assert rmap.conservation_residual <= rel_tol * scale
    return rmap


@pytest.fixture(scope="session")
def trained_mlp_setup():
    """Default noisy fixture dataset plus a trained MLP, shared across tests."""
    from relprop import SyntheticSpec, TrainConfig, generate_dataset, train_toy

    dataset = generate_dataset(SyntheticSpec(noise_level=0.1))
    model = train_toy(dataset, TrainConfig())
    return model, dataset


@pytest.fixture(scope="session")
def trained_noiseless_setup():
    """Noiseless fixture dataset plus a trained MLP for context checks."""
    from relprop import SyntheticSpec, TrainConfig, generate_dataset, train_toy

    dataset = generate_dataset(SyntheticSpec(noise_level=0.0))
    model = train_toy(dataset, TrainConfig())
    return model, dataset

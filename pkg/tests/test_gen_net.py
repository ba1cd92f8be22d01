import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blinddemod.gen_net import (
    GeneratorNetwork,
    activation_masks,
    apply_masked,
    apply_masked_transpose,
    cascade,
    derive_seed,
    forward,
    rectified_rows,
    sample_gaussian_network,
    sample_network,
    sample_truncated_last_layer,
)
from oracles import naive_forward, naive_rectified_rows

HAND = GeneratorNetwork(([[1.0, 0.0], [0.0, -1.0]],))


def test_forward_hand_case():
    np.testing.assert_array_equal(forward(HAND, [1.0, 1.0]), [1.0, 0.0])


def test_forward_zero_input():
    net = sample_gaussian_network((3, 7, 20), 0)
    np.testing.assert_array_equal(forward(net, np.zeros(3)), np.zeros(20))


def test_forward_matches_naive():
    net = sample_gaussian_network((4, 9, 30), 1)
    z = np.random.default_rng(2).standard_normal(4)
    np.testing.assert_allclose(forward(net, z), naive_forward(net.layers, z), rtol=1e-13, atol=1e-15)


def test_forward_batch_columns():
    net = sample_gaussian_network((3, 8, 16), 3)
    Z = np.random.default_rng(4).standard_normal((3, 5))
    out = forward(net, Z)
    for j in range(5):
        np.testing.assert_allclose(out[:, j], forward(net, Z[:, j]))


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        forward(HAND, [1.0, 2.0, 3.0])


def test_rectified_rows_hand_case():
    np.testing.assert_array_equal(rectified_rows([[1, 0], [0, -1]], [1, 1]), [[1, 0], [0, 0]])


def test_rectified_rows_all_positive_keeps_w():
    W = np.array([[1.0, 2.0], [3.0, 0.5], [0.1, 0.1]])
    np.testing.assert_array_equal(rectified_rows(W, [1.0, 1.0]), W)


def test_rectified_rows_zero_preactivation_is_inactive():
    W = np.array([[1.0, -1.0], [2.0, 0.0]])
    out = rectified_rows(W, [1.0, 1.0])
    np.testing.assert_array_equal(out, [[0.0, 0.0], [2.0, 0.0]])


def test_rectified_rows_matches_loop():
    rng = np.random.default_rng(5)
    W = rng.standard_normal((40, 6))
    h = rng.standard_normal(6)
    np.testing.assert_array_equal(rectified_rows(W, h), naive_rectified_rows(W, h))


def test_rectified_rows_shape_error():
    with pytest.raises(ValueError):
        rectified_rows(np.ones((3, 2)), np.ones(3))


def test_cascade_all_active_is_plain_product():
    W1 = np.array([[1.0, 0.5], [0.2, 1.0], [1.0, 1.0]])
    W2 = np.abs(np.random.default_rng(0).standard_normal((5, 3))) + 0.1
    net = GeneratorNetwork((W1, W2))
    c = cascade(net, [1.0, 2.0])
    np.testing.assert_allclose(c.effective_matrix, W2 @ W1)


def test_cascade_single_layer_is_rectified_rows():
    W = np.random.default_rng(1).standard_normal((7, 3))
    h = np.array([0.3, -1.0, 0.5])
    c = cascade(GeneratorNetwork((W,)), h)
    np.testing.assert_array_equal(c.effective_matrix, rectified_rows(W, h))


def test_cascade_reproduces_forward():
    net = sample_gaussian_network((4, 10, 30, 90), 7)
    h = np.random.default_rng(8).standard_normal(4)
    c = cascade(net, h)
    assert c.effective_matrix.shape == (90, 4)
    y = forward(net, h)
    np.testing.assert_allclose(c.effective_matrix @ h, y, rtol=1e-12, atol=1e-14 * np.linalg.norm(y))
    np.testing.assert_allclose(c.output, y, rtol=1e-12, atol=1e-14 * np.linalg.norm(y))


def test_matrix_free_cascade_products():
    net = sample_gaussian_network((3, 12, 40), 9)
    rng = np.random.default_rng(10)
    h, v, u = rng.standard_normal(3), rng.standard_normal(3), rng.standard_normal(40)
    lam = cascade(net, h).effective_matrix
    masks = activation_masks(net, h)
    np.testing.assert_allclose(apply_masked(net, masks, v), lam @ v, atol=1e-13)
    np.testing.assert_allclose(apply_masked_transpose(net, masks, u), lam.T @ u, atol=1e-13)


def test_gaussian_sample_variance():
    net = sample_gaussian_network((10, 250), 11)
    var = net.layers[0].var()
    assert abs(var - 1 / 250) <= 0.2 / 250


def test_sampling_is_deterministic():
    assert sample_gaussian_network((3, 5, 9), 4) == sample_gaussian_network((3, 5, 9), 4)
    a = sample_truncated_last_layer(50, 5, 4)
    np.testing.assert_array_equal(a, sample_truncated_last_layer(50, 5, 4))
    assert sample_network((3, 5, 9), 4, "truncated_last") == sample_network((3, 5, 9), 4, "truncated_last")


def test_non_expansive_rejected():
    with pytest.raises(ValueError):
        sample_gaussian_network((10, 5), 0)
    with pytest.raises(ValueError):
        sample_network((4, 4, 8), 0)


def test_unknown_variance_rule():
    with pytest.raises(ValueError):
        sample_network((2, 4), 0, "uniform")


def test_truncated_rows_within_radius():
    W = sample_truncated_last_layer(2000, 10, 12)
    norms = np.linalg.norm(W, axis=1)
    assert np.all(norms <= 3 * np.sqrt(10 / 2000))


def test_truncated_zeroed_fraction_small():
    # the norm of a row exceeds three times its rms value with probability ~1e-15 at k=10
    zeroed = 0
    total = 0
    for s in range(100):
        W = sample_truncated_last_layer(1000, 10, s)
        zeroed += int(np.sum(~W.any(axis=1)))
        total += 1000
    assert zeroed / total < 1e-3


def test_truncated_rejects_wide():
    with pytest.raises(ValueError):
        sample_truncated_last_layer(5, 10, 0)


def test_network_validation():
    with pytest.raises(ValueError):
        GeneratorNetwork(())
    with pytest.raises(ValueError):
        GeneratorNetwork((np.ones((3, 2)), np.ones((4, 2))))
    with pytest.raises(ValueError):
        GeneratorNetwork(([[np.nan, 1.0]],))


def test_network_is_read_only():
    net = sample_gaussian_network((2, 4), 0)
    with pytest.raises(ValueError):
        net.layers[0][0, 0] = 1.0


def test_derive_seed_distinct_and_stable():
    a = derive_seed(5, 0)
    assert a == derive_seed(5, 0)
    assert len({derive_seed(5, k) for k in range(50)}) == 50
    assert a != derive_seed(6, 0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), c=st.floats(1e-3, 1e3))
def test_positive_homogeneity(seed, c):
    net = sample_gaussian_network((3, 7, 15), seed % 1000)
    h = np.random.default_rng(seed).standard_normal(3)
    y = forward(net, h)
    np.testing.assert_allclose(forward(net, c * h), c * y, rtol=1e-12, atol=1e-300)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), c=st.floats(1e-3, 1e3))
def test_masks_scale_invariant(seed, c):
    net = sample_gaussian_network((3, 7, 15), seed % 1000)
    h = np.random.default_rng(seed).standard_normal(3)
    for a, b in zip(activation_masks(net, h), activation_masks(net, c * h)):
        np.testing.assert_array_equal(a, b)


def test_half_isometry_wide_nets():
    for seed in range(20):
        net = sample_gaussian_network((10, 500, 5000), seed)
        h = np.random.default_rng(100 + seed).standard_normal(10)
        ratio = np.sum(forward(net, h) ** 2) / (np.sum(h**2) / 4)
        assert abs(ratio - 1) <= 0.25

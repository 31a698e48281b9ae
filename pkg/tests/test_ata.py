import numpy as np
import pytest

from deepselective.ata import (
    AtaConfig,
    attention,
    decode,
    encode,
    init_ata_params,
    masked_attention,
    reconstruction_loss,
)
from deepselective.diffcore import Tensor, gradient_check, l2_norm, parameter, tsum
from deepselective.errors import DimensionError, ParameterError, SelectionError

RNG = np.random.default_rng(7)

TINY = AtaConfig(n_features=6, latent_dim=4, n_heads=1, n_encoder_layers=1, n_decoder_layers=1)


def tiny_params(seed=0):
    raw = init_ata_params(TINY, np.random.default_rng(seed))
    return {k: parameter(v) for k, v in raw.items()}


def test_config_validates_divisibility():
    with pytest.raises(ParameterError):
        AtaConfig(n_features=4, latent_dim=6, n_heads=4)
    with pytest.raises(ParameterError):
        AtaConfig(n_features=0, latent_dim=4, n_heads=1)


def test_attention_single_token_returns_value():
    q = Tensor(RNG.standard_normal((1, 3)))
    k = Tensor(RNG.standard_normal((1, 3)))
    v = Tensor(RNG.standard_normal((1, 5)))
    np.testing.assert_allclose(attention(q, k, v).values, v.values, rtol=0, atol=1e-15)


def test_attention_uniform_when_query_orthogonal():
    # q orthogonal to every key row -> all scores 0 -> mean of values
    q = Tensor([[0.0, 0.0, 1.0]])
    k = Tensor([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    v = Tensor(RNG.standard_normal((4, 2)))
    np.testing.assert_allclose(
        attention(q, k, v).values, v.values.mean(axis=0, keepdims=True), rtol=0, atol=1e-12
    )


def test_attention_matches_direct_evaluation():
    import mpmath

    mpmath.mp.dps = 40
    q = RNG.standard_normal((2, 4))
    k = RNG.standard_normal((3, 4))
    v = RNG.standard_normal((3, 2))
    expected = np.zeros((2, 2))
    for i in range(2):
        scores = [sum(mpmath.mpf(q[i, d]) * mpmath.mpf(k[j, d]) for d in range(4)) / mpmath.sqrt(4) for j in range(3)]
        weights = [mpmath.exp(s) for s in scores]
        total = sum(weights)
        for j in range(3):
            for d in range(2):
                expected[i, d] += float(weights[j] / total) * v[j, d]
    got = attention(Tensor(q), Tensor(k), Tensor(v)).values
    np.testing.assert_allclose(got, expected, rtol=0, atol=1e-10)


def test_attention_rows_are_probability_vectors():
    from deepselective.diffcore import softmax, matmul, swapaxes
    import math

    q = Tensor(RNG.standard_normal((5, 4)))
    k = Tensor(RNG.standard_normal((6, 4)))
    rows = softmax(matmul(q * (1.0 / math.sqrt(4)), swapaxes(k, -1, -2)), axis=-1).values
    np.testing.assert_allclose(rows.sum(axis=-1), 1.0, rtol=0, atol=1e-10)


def test_attention_shape_checks():
    with pytest.raises(DimensionError):
        attention(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4))), Tensor(np.ones((2, 2))))
    with pytest.raises(DimensionError):
        attention(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 3))), Tensor(np.ones((3, 2))))


def test_masked_attention_full_support_equals_attention():
    q = Tensor(RNG.standard_normal((4, 3)))
    k = Tensor(RNG.standard_normal((4, 3)))
    v = Tensor(RNG.standard_normal((4, 2)))
    full = attention(q, k, v).values
    masked = masked_attention(q, k, v, (0, 1, 2, 3)).values
    np.testing.assert_array_equal(full, masked)


def test_masked_attention_single_token_takes_own_value():
    q = Tensor(RNG.standard_normal((4, 3)))
    k = Tensor(RNG.standard_normal((4, 3)))
    v = Tensor(RNG.standard_normal((4, 2)))
    out = masked_attention(q, k, v, (2,)).values
    np.testing.assert_allclose(out, v.values[2:3], rtol=0, atol=1e-15)


def test_masked_attention_empty_support_rejected():
    q = Tensor(RNG.standard_normal((4, 3)))
    with pytest.raises(SelectionError):
        masked_attention(q, q, q, ())


def test_masked_attention_ignores_rows_outside_support():
    support = (0, 2)
    q = RNG.standard_normal((4, 3))
    k = RNG.standard_normal((4, 3))
    v = RNG.standard_normal((4, 2))
    base = masked_attention(Tensor(q), Tensor(k), Tensor(v), support).values
    q2, k2, v2 = q.copy(), k.copy(), v.copy()
    for row in (1, 3):
        q2[row] = RNG.standard_normal(3) * 100
        k2[row] = RNG.standard_normal(3) * 100
        v2[row] = RNG.standard_normal(2) * 100
    again = masked_attention(Tensor(q2), Tensor(k2), Tensor(v2), support).values
    np.testing.assert_array_equal(base, again)


def test_encode_deterministic():
    params = tiny_params()
    x = Tensor(RNG.standard_normal(6))
    support = (1, 3, 4)
    a = encode(x, support, params, TINY).values
    b = encode(x, support, params, TINY).values
    np.testing.assert_array_equal(a, b)
    assert a.shape == (4,)


def test_encode_invariant_to_unselected_coordinates():
    params = tiny_params()
    support = (0, 2)
    x = RNG.standard_normal(6)
    masked = x.copy()
    masked[[1, 3, 4, 5]] = 0.0
    base = encode(Tensor(masked), support, params, TINY).values
    shuffled = masked.copy()
    shuffled[[1, 3, 4, 5]] = RNG.standard_normal(4) * 50  # garbage outside S
    # the encoder gathers only supported columns, so this must be bit-identical
    again = encode(Tensor(shuffled), support, params, TINY).values
    np.testing.assert_array_equal(base, again)


def test_encoder_gradients_match_finite_differences():
    params = tiny_params(3)
    x = Tensor(RNG.standard_normal((2, 6)))
    support = (0, 2, 5)
    names = sorted(n for n in params if n.startswith(("ata.enc", "ata.embed", "ata.pool")))

    def loss_for(name):
        def f(w):
            trial = dict(params)
            trial[name] = w
            return l2_norm(encode(x, support, trial, TINY)) ** 2.0

        return f

    for name in names:
        err = gradient_check(loss_for(name), params[name].values)
        assert err < 1e-4, f"{name}: {err}"


def test_encode_gradient_wrt_input():
    params = tiny_params(4)
    support = (1, 2)

    def f(x):
        return l2_norm(encode(x, support, params, TINY)) ** 2.0

    err = gradient_check(f, RNG.standard_normal((3, 6)))
    assert err < 1e-4


def test_decode_shape_independent_of_support():
    params = tiny_params()
    for support in ((0,), (0, 1, 2, 3, 4, 5)):
        z = encode(Tensor(RNG.standard_normal(6)), support, params, TINY)
        assert decode(z, params, TINY).shape == (6,)


def test_decode_deterministic():
    params = tiny_params()
    z = Tensor(RNG.standard_normal(4))
    np.testing.assert_array_equal(decode(z, params, TINY).values, decode(z, params, TINY).values)


def test_reconstruction_loss_zero_iff_equal():
    x = Tensor(RNG.standard_normal((3, 4)))
    assert reconstruction_loss(x, x).item() == 0.0
    assert reconstruction_loss(Tensor([[3.0, 0.0], [0.0, 4.0]]), Tensor(np.zeros((2, 2)))).item() == pytest.approx(5.0, abs=1e-12)


def test_reconstruction_loss_matches_direct_formula():
    a = RNG.standard_normal((5, 7))
    b = RNG.standard_normal((5, 7))
    expected = float(np.sqrt(((a - b) ** 2).sum()))
    assert reconstruction_loss(Tensor(a), Tensor(b)).item() == pytest.approx(expected, abs=1e-12)


def test_reconstruction_loss_shape_mismatch():
    with pytest.raises(DimensionError):
        reconstruction_loss(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))


def test_autoencoder_overfits_small_batch():
    """500 adam steps on 16 samples cut the reconstruction loss by >= 90%."""
    from deepselective.dgfs import compute_selection, apply_mask
    from deepselective.model import Adam, ModelParams, TrainConfig

    cfg = TrainConfig(
        n_features=8, latent_dim=8, n_heads=2, n_encoder_layers=1, n_decoder_layers=1,
        learning_rate=3e-3, seed=0,
    )
    ata_cfg = cfg.ata_config
    raw = init_ata_params(ata_cfg, np.random.default_rng(0))
    params = ModelParams(config=cfg, tensors={k: parameter(v) for k, v in raw.items()}, tau=1.0)
    state = compute_selection(Tensor(np.zeros(8)), tau=1.0, seed=12)
    x = Tensor(RNG.standard_normal((16, 8)))
    x_masked = apply_mask(x, state)
    optim = Adam(params, lr=cfg.learning_rate)
    losses = []
    for _ in range(500):
        z = encode(x_masked, state.support, params.tensors, ata_cfg)
        x_hat = decode(z, params.tensors, ata_cfg)
        loss = reconstruction_loss(x_masked, apply_mask(x_hat, state))
        params.zero_grads()
        loss.backward()
        optim.step(params)
        losses.append(loss.item())
    assert losses[-1] <= 0.1 * losses[0], (losses[0], losses[-1])

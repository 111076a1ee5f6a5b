import numpy as np
import pytest

from addle import latent
from addle import tensor as T
from addle.latent import LatentCodebook, init_codes, prior_penalty


def test_init_codes_reproducible():
    a = init_codes(1, 10, 1.0, seed=7)
    b = init_codes(1, 10, 1.0, seed=7)
    assert np.array_equal(a.codes, b.codes)
    assert a.codes.shape == (1, 10)


def test_defaults_follow_reported_setup():
    assert latent.DEFAULT_LATENT_DIM == 10
    assert latent.DEFAULT_SIGMA2 == 1.0


def test_init_codes_moments():
    for seed in range(10):
        cb = init_codes(64, 10, 1.0, seed=seed)
        assert -0.15 < cb.codes.mean() < 0.15
        assert 0.8 < cb.codes.var(ddof=1) < 1.2


def test_init_codes_scale_follows_sigma2():
    cb = init_codes(400, 10, 4.0, seed=1)
    assert 3.6 < cb.codes.var() < 4.4


@pytest.mark.parametrize("s2", [0.0, -1.0])
def test_non_positive_sigma2_rejected(s2):
    with pytest.raises(ValueError):
        init_codes(2, 3, s2, seed=0)


def test_codebook_invariants():
    with pytest.raises(ValueError):
        LatentCodebook(np.zeros((2, 3)), rater_ids=("a", "a"))
    with pytest.raises(ValueError):
        LatentCodebook(np.array([[np.nan]]))
    cb = LatentCodebook(np.zeros((2, 3)), rater_ids=("b", "a"))
    assert cb.index_of("a") == 1


def test_prior_penalty_examples():
    assert prior_penalty(LatentCodebook(np.zeros((3, 4)))) == 0.0
    assert prior_penalty(LatentCodebook(np.array([[3.0, 4.0]]), 1.0)) == 25.0


def test_prior_penalty_gradient_is_2z_over_sigma2():
    rng = np.random.default_rng(0)
    Z = rng.uniform(-2, 2, size=(3, 4))
    assert T.grad_check(lambda z: latent.prior_penalty_tensor(z, 0.5), [Z]) < 1e-6
    z = T.Tensor(Z)
    with T.Tape() as tape:
        tape.watch(z)
        p = latent.prior_penalty_tensor(z, 0.5)
    np.testing.assert_allclose(tape.gradient(p, [z])[0], 2 * Z / 0.5, rtol=1e-14)


def test_prior_penalty_permutation_and_scaling():
    rng = np.random.default_rng(1)
    Z = rng.normal(size=(6, 5))
    p = prior_penalty(LatentCodebook(Z, 1.3))
    assert prior_penalty(LatentCodebook(Z[::-1], 1.3)) == pytest.approx(p, rel=1e-14)
    assert prior_penalty(LatentCodebook(Z, 2.6)) == pytest.approx(p / 2, rel=1e-14)


# -------------------------------------------------------------- injection


def _conv_case(rng, B=2, C_in=3, L=8, C=4, k=3, M=5):
    return (
        T.Tensor(rng.normal(size=(B, C_in, L))),
        T.Tensor(rng.normal(size=(C, C_in, k))),
        T.Tensor(rng.normal(size=C)),
        T.Tensor(rng.normal(size=(C, M))),
        T.Tensor(rng.normal(size=M)),
    )


def test_spatial_zero_code_is_exactly_plain_conv():
    rng = np.random.default_rng(0)
    a, K, b, A, _ = _conv_case(rng)
    out = latent.inject_spatial(a, K, b, A, T.Tensor(np.zeros(5)))
    assert np.array_equal(out.data, T.conv1d(a, K, b).data)


def test_spatial_injection_arithmetic():
    a = T.Tensor(np.zeros((1, 1, 4)))
    K = T.Tensor(np.zeros((2, 1, 2)))
    out = latent.inject_spatial(a, K, T.Tensor(np.zeros(2)), T.Tensor([[1.0], [2.0]]), T.Tensor([3.0]))
    assert out.data.tolist() == [[[3.0, 3.0, 3.0], [6.0, 6.0, 6.0]]]


def test_spatial_injection_equals_concatenated_convolution():
    """conv(a) + rep(Az) == one conv over [a; rep(z)] with block kernels."""
    for seed in range(100):
        rng = np.random.default_rng(seed)
        B, C_in, L, C, k, M = 2, int(rng.integers(1, 4)), int(rng.integers(4, 9)), int(rng.integers(1, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 6))
        a, K, b, A, z = _conv_case(rng, B, C_in, L, C, k, M)
        got = latent.inject_spatial(a, K, b, A, z).data
        # z enters through the first tap only, zeros elsewhere
        zk = np.zeros((C, M, k))
        zk[:, :, 0] = A.data
        big_kernel = np.concatenate([K.data, zk], axis=1)
        big_input = np.concatenate([a.data, np.broadcast_to(z.data[None, :, None], (B, M, L))], axis=1)
        want = T.conv1d(T.Tensor(big_input), T.Tensor(big_kernel), b).data
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-9)


def test_spatial_mixing_matrix_mismatch_rejected():
    rng = np.random.default_rng(0)
    a, K, b, _, z = _conv_case(rng)
    with pytest.raises(T.ShapeError, match="mixing matrix"):
        latent.inject_spatial(a, K, b, T.Tensor(np.zeros((3, 5))), z)


def test_dense_injection_examples():
    rng = np.random.default_rng(2)
    a, W, b = T.Tensor(rng.normal(size=(3, 4))), T.Tensor(rng.normal(size=(4, 2))), T.Tensor(rng.normal(size=2))
    plain = T.affine(a, W, b).data
    assert np.array_equal(latent.inject_dense(a, W, b, T.Tensor(rng.normal(size=(2, 5))), T.Tensor(np.zeros(5))).data, plain)
    v = np.array([0.5, -2.0])
    shifted = latent.inject_dense(a, W, b, T.Tensor(np.eye(2)), T.Tensor(v)).data
    np.testing.assert_allclose(shifted, plain + v, rtol=0, atol=1e-15)


def test_dense_injection_gradients():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        params = [rng.uniform(-2, 2, size=s) for s in [(3, 4), (4, 2), (2,), (2, 3), (3,)]]
        fn = lambda a, W, b, A, z: T.sq_norm(T.sigmoid(latent.inject_dense(a, W, b, A, z)))  # noqa: E731
        assert T.grad_check(fn, params) < 1e-4


def test_spatial_injection_gradients():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        params = [rng.uniform(-2, 2, size=s) for s in [(2, 2, 5), (3, 2, 2), (3,), (3, 2), (2,)]]
        fn = lambda a, K, b, A, z: T.sq_norm(T.sigmoid(latent.inject_spatial(a, K, b, A, z)))  # noqa: E731
        assert T.grad_check(fn, params) < 1e-4

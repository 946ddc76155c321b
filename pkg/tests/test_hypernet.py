import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from mohyper.core import Rng, ShapeError, dirichlet_sample
from mohyper.hypernet import (
    EPS_M,
    HypernetParams,
    HypernetSpec,
    features,
    hypernet_backward,
    hypernet_forward,
    init_hypernet,
)
from mohyper.nn import MlpSpec, critic_forward, mlp_backward, policy_forward

from .helpers import central_diff, rel_err


def small_spec(kind="critic", m=2, F=4):
    return HypernetSpec(m=m, F=F, target_spec=MlpSpec((3, 5, 2)), kind=kind, feature_hidden=(F, F))


def random_params(spec, gen, scale=0.5):
    return HypernetParams.from_flat(spec, gen.normal(scale=scale, size=spec.n_params))


class TestSpec:
    def test_sizes(self):
        spec = small_spec("actor")
        assert spec.target_size == MlpSpec((3, 5, 2)).n_params + 2
        assert spec.n_params == spec.feature_spec.n_params + spec.target_size * (spec.F + 1)

    def test_dict_roundtrip(self):
        spec = small_spec("actor", m=3, F=6)
        assert HypernetSpec.from_dict(spec.to_dict()) == spec

    def test_rejects_zero_features(self):
        with pytest.raises(ShapeError):
            HypernetSpec(m=2, F=0, target_spec=MlpSpec((1, 1)))

    def test_flat_roundtrip(self):
        spec = small_spec()
        v = np.random.default_rng(0).normal(size=spec.n_params)
        assert_array_equal(HypernetParams.from_flat(spec, v).flat(), v)

    def test_flat_length_checked(self):
        with pytest.raises(ShapeError):
            HypernetParams.from_flat(small_spec(), np.zeros(3))


class TestForward:
    def test_zero_M_gives_b(self):
        spec = small_spec()
        hp = random_params(spec, np.random.default_rng(1))
        hp.M[:] = 0.0
        w = dirichlet_sample(Rng(0), 2, 7)
        assert_array_equal(hypernet_forward(spec, hp, w), np.tile(hp.b, (7, 1)))

    def test_constant_features(self):
        spec = HypernetSpec(m=2, F=3, target_spec=MlpSpec((2, 2)))
        gen = np.random.default_rng(2)
        hp = random_params(spec, gen)
        hp.feature[:] = 0.0
        hp.feature[-3:] = [0.3, -0.2, 0.9]  # output-layer biases only
        a = hypernet_forward(spec, hp, np.array([1.0, 0.0]))
        b = hypernet_forward(spec, hp, np.array([0.2, 0.8]))
        assert_array_equal(a, b)

    @pytest.mark.parametrize("rank", [1, 2, 3])
    def test_low_rank_manifold(self, rank):
        spec = HypernetSpec(m=3, F=5, target_spec=MlpSpec((3, 6, 2)), feature_hidden=(5, 5))
        gen = np.random.default_rng(rank)
        hp = random_params(spec, gen, scale=1.0)
        hp.M = gen.normal(size=(spec.target_size, rank)) @ gen.normal(size=(rank, spec.F))
        theta = hypernet_forward(spec, hp, dirichlet_sample(Rng(rank), 3, 200))
        sv = np.linalg.svd(theta - hp.b, compute_uv=False)
        assert np.sum(sv > 1e-9 * sv[0]) == rank

    def test_affine_identity(self):
        spec = small_spec()
        hp = random_params(spec, np.random.default_rng(3))
        w1, w2 = np.array([0.3, 0.7]), np.array([0.9, 0.1])
        lhs = hypernet_forward(spec, hp, w1) - hypernet_forward(spec, hp, w2)
        rhs = hp.M @ (features(spec, hp, w1) - features(spec, hp, w2))
        assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-14)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32), n=st.integers(1, 12))
    def test_batch_equals_individual(self, seed, n):
        spec = small_spec("actor")
        hp = random_params(spec, np.random.default_rng(seed))
        w = dirichlet_sample(Rng(seed), 2, n)
        batch = hypernet_forward(spec, hp, w)
        for i in range(n):
            assert_allclose(batch[i], hypernet_forward(spec, hp, w[i]), rtol=1e-13, atol=1e-15)

    def test_wrong_m(self):
        spec = small_spec()
        hp = random_params(spec, np.random.default_rng(0))
        with pytest.raises(ShapeError):
            hypernet_forward(spec, hp, np.array([0.2, 0.3, 0.5]))


class TestBackward:
    def test_zero_grad(self):
        spec = small_spec()
        hp = random_params(spec, np.random.default_rng(0))
        g = hypernet_backward(spec, hp, np.array([0.5, 0.5]), np.zeros(spec.target_size))
        assert not np.any(g.flat())

    def test_bias_path_identity(self):
        spec = small_spec()
        gen = np.random.default_rng(1)
        hp = random_params(spec, gen)
        gt = gen.normal(size=spec.target_size)
        g = hypernet_backward(spec, hp, np.array([0.5, 0.5]), gt)
        assert_array_equal(g.b, gt)
        assert_allclose(g.M, np.outer(gt, features(spec, hp, np.array([0.5, 0.5]))), rtol=1e-14)

    def test_shape_checked(self):
        spec = small_spec()
        hp = random_params(spec, np.random.default_rng(0))
        with pytest.raises(ShapeError):
            hypernet_backward(spec, hp, np.array([0.5, 0.5]), np.zeros(3))

    @pytest.mark.parametrize("seed", range(10))
    def test_critic_composite_finite_differences(self, seed):
        gen = np.random.default_rng(seed)
        spec = small_spec(m=3, F=3)
        hp = random_params(spec, gen)
        w = dirichlet_sample(Rng(seed), 3, 5)
        obs = gen.normal(size=(5, 3))
        target = gen.normal(size=(5, 2))

        def loss(vec):
            h = HypernetParams.from_flat(spec, vec)
            v = critic_forward(spec.target_spec, hypernet_forward(spec, h, w), obs)
            return float(np.sum((v - target) ** 2))

        theta, hc = hypernet_forward(spec, hp, w, return_cache=True)
        v, cc = critic_forward(spec.target_spec, theta, obs, return_cache=True)
        gt = mlp_backward(spec.target_spec, cc, 2 * (v - target))
        g = hypernet_backward(spec, hp, w, gt, cache=hc).flat()
        assert rel_err(g, central_diff(loss, hp.flat())) < 1e-4

    def test_single_w_matches_batch_sum(self):
        spec = small_spec()
        gen = np.random.default_rng(4)
        hp = random_params(spec, gen)
        w = dirichlet_sample(Rng(4), 2, 3)
        gt = gen.normal(size=(3, spec.target_size))
        total = hypernet_backward(spec, hp, w, gt).flat()
        parts = sum(hypernet_backward(spec, hp, w[i], gt[i]).flat() for i in range(3))
        assert_allclose(total, parts, rtol=1e-12, atol=1e-14)


class TestInit:
    def test_repeatable(self):
        spec = small_spec("actor")
        assert_array_equal(init_hypernet(spec, Rng(5)).flat(), init_hypernet(spec, Rng(5)).flat())

    def test_log_std_tail_and_bias_layout(self):
        spec = small_spec("actor")
        hp = init_hypernet(spec, Rng(0), init_log_std=-0.7)
        assert_array_equal(hp.b[-2:], [-0.7, -0.7])

    def test_deviation_scale(self):
        # each component of M f(w) is a sum of F Gaussians of variance (eps/sqrt F)^2 f_j^2
        spec = HypernetSpec(m=2, F=16, target_spec=MlpSpec((4, 32, 32, 2)), feature_hidden=(16, 16))
        hp = init_hypernet(spec, Rng(1))
        w = np.array([0.3, 0.7])
        dev = hypernet_forward(spec, hp, w) - hp.b
        f_norm = np.linalg.norm(features(spec, hp, w))
        bound = EPS_M * f_norm / np.sqrt(spec.F)
        assert dev.std() <= bound * 1.05
        assert dev.std() >= bound * 0.9

    def test_policies_close_at_init(self):
        spec = HypernetSpec(m=2, F=16, target_spec=MlpSpec((4, 32, 32, 2)), kind="actor", feature_hidden=(16, 16))
        hp = init_hypernet(spec, Rng(2), output_scale=0.01)
        obs = np.random.default_rng(0).normal(size=(1000, 4))
        means = [policy_forward(spec.target_spec, hypernet_forward(spec, hp, w), obs).mean
                 for w in ([1.0, 0.0], [0.0, 1.0], [0.5, 0.5])]
        assert np.max(np.abs(means[0] - means[1])) < 0.05
        assert np.max(np.abs(means[0] - means[2])) < 0.05

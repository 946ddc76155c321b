import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy import integrate

from mohyper.core import NumericError, Rng, ShapeError
from mohyper.nn import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    TANH_EPS,
    GaussianAction,
    MlpSpec,
    critic_forward,
    flatten,
    gaussian_logprob,
    grad_wrt_params,
    init_mlp_params,
    mlp_backward,
    mlp_forward,
    policy_backward,
    policy_forward,
    sample_and_logprob,
    tanh_normal_logprob,
    tanh_normal_logprob_grads,
    unflatten,
)

from .helpers import central_diff, rel_err


def random_spec(gen, out_act=None):
    depth = gen.integers(1, 4)
    sizes = tuple(int(s) for s in gen.integers(1, 6, size=depth + 1))
    act = out_act or ("tanh" if gen.random() < 0.5 else "identity")
    return MlpSpec(sizes, act)


class TestMlpSpec:
    def test_param_count(self):
        assert MlpSpec((3, 4, 2)).n_params == (3 + 1) * 4 + (4 + 1) * 2
        assert MlpSpec((3, 4, 2)).n_policy_params == 26 + 2

    def test_rejects_single_layer(self):
        with pytest.raises(ShapeError):
            MlpSpec((3,))

    def test_rejects_zero_width(self):
        with pytest.raises(ShapeError):
            MlpSpec((3, 0, 1))

    def test_dict_roundtrip(self):
        s = MlpSpec((2, 5, 1), "tanh")
        assert MlpSpec.from_dict(s.to_dict()) == s


class TestMlpForward:
    def test_zero_params_zero_output(self):
        spec = MlpSpec((3, 5, 2))
        assert_array_equal(mlp_forward(spec, np.zeros(spec.n_params), np.array([1.0, -2.0, 3.0])), [0, 0])

    def test_single_affine(self):
        spec = MlpSpec((1, 1))
        assert mlp_forward(spec, np.array([2.0, 1.0]), np.array([3.0]))[0] == 7.0

    def test_single_tanh(self):
        spec = MlpSpec((1, 1), "tanh")
        assert mlp_forward(spec, np.array([1.0, 0.0]), np.array([0.0]))[0] == 0.0

    def test_layout_weights_row_major_then_bias(self):
        spec = MlpSpec((2, 2))
        # W = [[1, 2], [3, 4]], b = [10, 20]
        p = np.array([1.0, 2.0, 3.0, 4.0, 10.0, 20.0])
        assert_array_equal(mlp_forward(spec, p, np.array([1.0, 1.0])), [13.0, 27.0])

    def test_per_row_params_match_shared(self):
        gen = np.random.default_rng(0)
        spec = MlpSpec((3, 4, 2))
        p = gen.normal(size=spec.n_params)
        x = gen.normal(size=(5, 3))
        assert_allclose(mlp_forward(spec, np.tile(p, (5, 1)), x), mlp_forward(spec, p, x), rtol=1e-14)

    def test_shape_errors(self):
        spec = MlpSpec((3, 2))
        with pytest.raises(ShapeError):
            mlp_forward(spec, np.zeros(spec.n_params), np.zeros(4))
        with pytest.raises(ShapeError):
            mlp_forward(spec, np.zeros(spec.n_params + 1), np.zeros(3))
        with pytest.raises(ShapeError):
            mlp_forward(spec, np.zeros((2, spec.n_params)), np.zeros((3, 3)))

    def test_non_finite_params(self):
        spec = MlpSpec((1, 1))
        with pytest.raises(NumericError):
            mlp_forward(spec, np.array([np.nan, 0.0]), np.array([1.0]))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32))
    def test_flatten_unflatten_roundtrip(self, seed):
        gen = np.random.default_rng(seed)
        spec = random_spec(gen)
        p = gen.normal(size=spec.n_params)
        assert_array_equal(flatten(unflatten(spec, p)), p)
        pb = gen.normal(size=(3, spec.n_params))
        assert_array_equal(flatten(unflatten(spec, pb)), pb)


class TestPolicy:
    def test_zero_params(self):
        spec = MlpSpec((2, 3, 2))
        d = policy_forward(spec, np.zeros(spec.n_policy_params), np.array([0.3, -0.4]))
        assert_array_equal(d.mean, [0, 0])
        assert_array_equal(d.log_std, [0, 0])

    def test_saturated_mean(self):
        spec = MlpSpec((1, 1))
        d = policy_forward(spec, np.array([0.0, 10.0, 0.0]), np.array([0.0]))
        assert d.mean[0] == pytest.approx(math.tanh(10.0), abs=0)
        assert d.mean[0] == pytest.approx(0.99999997, abs=1e-7)
        assert d.mean[0] < 1.0

    def test_log_std_clamp(self):
        spec = MlpSpec((1, 1))
        assert policy_forward(spec, np.array([0.0, 0.0, -20.0]), np.array([0.0])).log_std[0] == LOG_STD_MIN
        assert policy_forward(spec, np.array([0.0, 0.0, 7.0]), np.array([0.0])).log_std[0] == LOG_STD_MAX

    def test_actor_length_checked(self):
        spec = MlpSpec((1, 1))
        with pytest.raises(ShapeError):
            policy_forward(spec, np.zeros(2), np.array([0.0]))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32), scale=st.floats(0.1, 50.0))
    def test_mean_strictly_inside(self, seed, scale):
        gen = np.random.default_rng(seed)
        spec = MlpSpec((2, 4, 2))
        p = gen.normal(scale=scale, size=spec.n_policy_params)
        d = policy_forward(spec, p, gen.normal(size=(6, 2)))
        assert np.all(np.abs(d.mean) <= 1.0)
        assert np.all((d.log_std >= LOG_STD_MIN) & (d.log_std <= LOG_STD_MAX))

    def test_deterministic_limit(self):
        d = GaussianAction(pre=np.array([[0.4, -1.2]]), log_std=np.full((1, 2), LOG_STD_MIN))
        a, _ = sample_and_logprob(Rng(0), d)
        assert_allclose(a, d.mean, atol=0.05)

    def test_symmetric_sample_mean(self):
        d = GaussianAction(pre=np.zeros((100_000, 1)), log_std=np.zeros((100_000, 1)))
        a, _ = sample_and_logprob(Rng(1), d)
        assert abs(a.mean()) < 0.01

    def test_logprob_of_sample_is_exact(self):
        gen = np.random.default_rng(3)
        d = GaussianAction(pre=gen.normal(size=(50, 3)), log_std=gen.uniform(-2, 0.5, size=(50, 3)))
        a, lp = sample_and_logprob(Rng(2), d)
        assert_array_equal(tanh_normal_logprob(d, a), lp)

    def test_change_of_variables_identity(self):
        gen = np.random.default_rng(4)
        d = GaussianAction(pre=gen.normal(size=(20, 2)), log_std=gen.uniform(-1, 0.5, size=(20, 2)))
        a = np.tanh(gen.normal(size=(20, 2)))
        expected = gaussian_logprob(d, np.arctanh(a)) - np.sum(np.log(1 - a * a + TANH_EPS), axis=-1)
        assert_allclose(tanh_normal_logprob(d, a), expected, rtol=1e-14)

    @pytest.mark.parametrize("pre, log_std", [(0.0, 0.0), (0.7, -0.5), (-1.5, -1.0), (2.0, -2.0)])
    def test_density_integrates_to_one(self, pre, log_std):
        d = GaussianAction(pre=np.array([[pre]]), log_std=np.array([[log_std]]))

        def density(z):
            # integrate in z = atanh(a) so the endpoint spikes are tame; da = (1 - a^2) dz
            a = np.tanh(z)
            return math.exp(tanh_normal_logprob(d, np.array([[a]]))[0]) * (1 - a * a)

        total, _ = integrate.quad(density, -30, 30, points=[pre], limit=200)
        assert abs(total - 1.0) < 1e-4


class TestGradients:
    def test_half_square_at_zero(self):
        spec = MlpSpec((3, 4, 2))

        def loss(out):
            return 0.5 * np.sum(out * out), out

        _, g = grad_wrt_params(spec, np.zeros(spec.n_params), loss, np.ones((5, 3)))
        assert_array_equal(g, 0.0)

    @pytest.mark.parametrize("seed", range(20))
    def test_mlp_matches_finite_differences(self, seed):
        gen = np.random.default_rng(seed)
        spec = random_spec(gen)
        p = gen.normal(size=spec.n_params)
        x = gen.normal(size=(4, spec.in_dim))
        target = gen.normal(size=(4, spec.out_dim))

        def loss(out):
            r = out - target
            return np.sum(r * r * r * r) / 4 + np.sum(np.log(1 + out * out)), r**3 + 2 * out / (1 + out * out)

        _, g = grad_wrt_params(spec, p, loss, x)
        fd = central_diff(lambda q: grad_wrt_params(spec, q, loss, x)[0], p)
        assert rel_err(g, fd) < 1e-4

    def test_per_row_gradient_rows_sum_to_shared(self):
        gen = np.random.default_rng(7)
        spec = MlpSpec((3, 5, 2), "tanh")
        p = gen.normal(size=spec.n_params)
        x = gen.normal(size=(6, 3))
        g_out = gen.normal(size=(6, 2))
        _, cs = mlp_forward(spec, p, x, return_cache=True)
        _, cb = mlp_forward(spec, np.tile(p, (6, 1)), x, return_cache=True)
        assert_allclose(mlp_backward(spec, cb, g_out).sum(axis=0), mlp_backward(spec, cs, g_out), rtol=1e-12)

    def test_linearity(self):
        gen = np.random.default_rng(8)
        spec = MlpSpec((2, 3, 2))
        p = gen.normal(size=spec.n_params)
        x = gen.normal(size=(4, 2))
        c1, c2 = gen.normal(size=(4, 2)), gen.normal(size=(4, 2))

        def lin(c):
            return lambda out: (np.sum(c * out), c)

        _, g1 = grad_wrt_params(spec, p, lin(c1), x)
        _, g2 = grad_wrt_params(spec, p, lin(c2), x)
        _, g12 = grad_wrt_params(spec, p, lin(2.0 * c1 - 3.0 * c2), x)
        assert_allclose(g12, 2.0 * g1 - 3.0 * g2, rtol=1e-12, atol=1e-13)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_activation_reports_layer(self):
        spec = MlpSpec((1, 1))
        with pytest.raises(NumericError, match="layer"):
            grad_wrt_params(spec, np.array([1e308, 0.0]), lambda o: (0.0, o), np.array([[1e308]]))

    @pytest.mark.parametrize("seed", range(10))
    def test_policy_logprob_gradient(self, seed):
        gen = np.random.default_rng(100 + seed)
        spec = MlpSpec((3, 4, 2))
        p = gen.normal(scale=0.5, size=spec.n_policy_params)
        p[-2:] = gen.uniform(-1.5, 0.5, size=2)  # away from the clamp kinks
        obs = gen.normal(size=(5, 3))
        act = np.tanh(gen.normal(size=(5, 2)))
        coef = gen.normal(size=5)

        def f(q):
            return float(np.sum(coef * tanh_normal_logprob(policy_forward(spec, q, obs), act)))

        dist, cache = policy_forward(spec, p, obs, return_cache=True)
        d_pre, d_ls = tanh_normal_logprob_grads(dist, act)
        g = policy_backward(spec, cache, coef[:, None] * d_pre, coef[:, None] * d_ls)
        assert rel_err(g, central_diff(f, p)) < 1e-4

    def test_clamped_log_std_has_no_gradient(self):
        spec = MlpSpec((1, 1))
        p = np.array([0.3, 0.1, -9.0])
        dist, cache = policy_forward(spec, p, np.array([[0.5]]), return_cache=True)
        g = policy_backward(spec, cache, np.ones((1, 1)), np.ones((1, 1)))
        assert g[-1] == 0.0


class TestCritic:
    def test_zero_params(self):
        spec = MlpSpec((4, 8, 3))
        assert_array_equal(critic_forward(spec, np.zeros(spec.n_params), np.ones(4)), np.zeros(3))

    def test_finite_outputs(self):
        spec = MlpSpec((4, 8, 1))
        p = init_mlp_params(spec, Rng(0))
        v = critic_forward(spec, p, np.random.default_rng(0).normal(size=(10, 4)))
        assert v.shape == (10, 1)
        assert np.all(np.isfinite(v))


def test_init_bounds_and_zero_bias():
    spec = MlpSpec((4, 16, 2))
    p = init_mlp_params(spec, Rng(0), output_scale=0.01)
    (W1, b1), (W2, b2) = unflatten(spec, p)
    assert np.all(np.abs(W1) <= 0.5)
    assert np.all(np.abs(W2) <= 0.01 / 4)
    assert_array_equal(b1, 0)
    assert_array_equal(b2, 0)

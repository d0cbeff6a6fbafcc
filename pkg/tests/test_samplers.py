import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import QuadraticLogit, random_net
from ope.nn import DenseNet, Layer, forward, init_dense_net
from ope.samplers import (
    BoxDomain,
    ChainState,
    GeneratorNet,
    SamplerConfig,
    generator_negative_phase,
    generator_objective,
    generator_train_step,
    hmc_step,
    init_chains,
    leapfrog,
    persistent_negative_phase,
    reflect,
    rmsprop_step,
    uniform_sample,
)

WIDE = BoxDomain([-10.0, -10.0], [10.0, 10.0])


class TestBoxDomain:
    def test_density(self):
        box = BoxDomain([0.0, -1.0], [2.0, 1.0])
        assert box.volume == 4.0
        assert box.density == pytest.approx(0.25, rel=1e-15)
        assert box.mean_edge == 2.0

    def test_around_uses_range_margin(self):
        box = BoxDomain.around(np.array([[0.0, 1.0], [10.0, 3.0]]))
        np.testing.assert_allclose(box.lo, [-1.0, 0.8])
        np.testing.assert_allclose(box.hi, [11.0, 3.2])

    def test_around_constant_feature(self):
        box = BoxDomain.around(np.array([[1.0, 0.0], [1.0, 1.0]]))
        assert box.widths[0] == pytest.approx(1.0)

    @pytest.mark.parametrize("lo,hi", [([0.0], [0.0]), ([1.0], [0.0]), ([0.0], [np.inf])])
    def test_degenerate_rejected(self, lo, hi):
        with pytest.raises(ValueError):
            BoxDomain(lo, hi)

    def test_round_trip(self):
        box = BoxDomain([0.1, -0.3], [0.7, 2.0])
        back = BoxDomain.from_dict(box.to_dict())
        np.testing.assert_array_equal(back.lo, box.lo)
        np.testing.assert_array_equal(back.hi, box.hi)


class TestUniformSample:
    def test_unit_square_mean(self, rng):
        x = uniform_sample(BoxDomain([0.0, 0.0], [1.0, 1.0]), 10_000, rng)
        # standard error of a U(0,1) mean over 1e4 draws is ~0.003
        np.testing.assert_allclose(x.mean(axis=0), 0.5, atol=0.01)

    def test_tiny_box(self, rng):
        box = BoxDomain([1.0], [1.0 + 1e-9])
        x = uniform_sample(box, 100, rng)
        assert np.all(box.contains(x))

    def test_deterministic(self):
        a = uniform_sample(WIDE, 5, np.random.default_rng(3))
        b = uniform_sample(WIDE, 5, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    def test_needs_samples(self, rng):
        with pytest.raises(ValueError):
            uniform_sample(WIDE, 0, rng)


class TestReflect:
    def test_values(self):
        lo, hi = np.array([0.0]), np.array([1.0])
        x, p = reflect(np.array([1.25, -0.25, 2.5, 0.5]), lo, hi, np.ones(4))
        np.testing.assert_allclose(x, [0.75, 0.25, 0.5, 0.5])
        np.testing.assert_array_equal(p, [-1.0, -1.0, 1.0, 1.0])

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=2))
    def test_lands_in_box(self, x):
        box = BoxDomain([-1.0, 0.5], [2.0, 0.75])
        assert box.contains(reflect(np.array(x), box.lo, box.hi))


class TestLeapfrog:
    def test_reversible(self, rng):
        net = random_net(rng, n_in=3)
        x0, p0 = rng.normal(size=(10, 3)), rng.normal(size=(10, 3))
        x1, p1, _ = leapfrog(net, x0, p0, 0.1, 20)
        x2, p2, _ = leapfrog(net, x1, -p1, 0.1, 20)
        assert np.max(np.abs(x2 - x0)) < 1e-8
        assert np.max(np.abs(-p2 - p0)) < 1e-8

    def test_reversible_with_reflection(self, rng):
        box = BoxDomain([-0.5, -0.5], [0.5, 0.5])
        net = random_net(rng, n_in=2)
        x0, p0 = uniform_sample(box, 10, rng), 3.0 * rng.normal(size=(10, 2))
        x1, p1, _ = leapfrog(net, x0, p0, 0.1, 10, box)
        x2, p2, _ = leapfrog(net, x1, -p1, 0.1, 10, box)
        assert np.max(np.abs(x2 - x0)) < 1e-8

    def test_energy_bookkeeping(self, rng):
        """The forward energy change is exactly undone by the reversed trajectory."""
        net = random_net(rng, n_in=2)
        x0, p0 = rng.normal(size=(10, 2)), rng.normal(size=(10, 2))

        def energy(x, p):
            return -forward(net, x) + 0.5 * np.sum(p * p, axis=1)

        x1, p1, _ = leapfrog(net, x0, p0, 0.2, 15)
        x2, p2, _ = leapfrog(net, x1, -p1, 0.2, 15)
        fwd = energy(x1, p1) - energy(x0, p0)
        back = energy(x2, p2) - energy(x1, -p1)
        assert np.max(np.abs(fwd + back)) < 1e-8

    def test_volume_preserving(self, rng):
        # finite-difference Jacobian of the (x, p) map has unit determinant
        net = random_net(rng, n_in=2)
        z0 = rng.normal(size=4)
        h = 1e-6

        def step(z):
            x, p, _ = leapfrog(net, z[None, :2], z[None, 2:], 0.3, 7)
            return np.concatenate([x[0], p[0]])

        jac = np.column_stack([(step(z0 + h * e) - step(z0 - h * e)) / (2 * h) for e in np.eye(4)])
        assert np.linalg.det(jac) == pytest.approx(1.0, abs=1e-6)

    def test_gaussian_energy_error_small(self):
        net = QuadraticLogit(1)
        x1, p1, g1 = leapfrog(net, np.array([[1.0]]), np.array([[0.0]]), 0.01, 100)
        # the harmonic oscillator conserves energy up to O(step^2)
        assert abs((-g1[0] + 0.5 * p1[0, 0] ** 2) - 0.5) < 1e-4


class TestHMC:
    @pytest.mark.parametrize("step_size,n_leapfrog", [(0.0, 5), (0.1, 0)])
    def test_identity_proposal(self, rng, step_size, n_leapfrog):
        state = init_chains(WIDE, 8, rng)
        new = hmc_step(random_net(rng, n_in=2), state, step_size, n_leapfrog, rng)
        np.testing.assert_array_equal(new.positions, state.positions)
        assert new.accept_rate == 1.0

    def test_gaussian_moments(self):
        """10^4 post-burn-in draws on N(0, I) restricted to a wide box."""
        rng = np.random.default_rng(7)
        net = QuadraticLogit(2)
        state = init_chains(WIDE, 100, rng)
        draws = []
        for it in range(300):
            state = hmc_step(net, state, 0.5, 5, rng, WIDE)
            if it >= 200:
                draws.append(state.positions)
        draws = np.concatenate(draws)
        assert draws.shape[0] == 10_000
        np.testing.assert_allclose(draws.mean(axis=0), 0.0, atol=0.05)
        np.testing.assert_allclose(draws.var(axis=0), 1.0, atol=0.1)

    def test_nonfinite_rejected(self, rng):
        # huge weights overflow g; such proposals are rejected, never accepted
        net = DenseNet([Layer(np.array([[1e308], [1e308]]), np.array([0.0]), "linear")])
        state = init_chains(WIDE, 4, rng)
        new = hmc_step(net, state, 0.1, 3, rng)
        np.testing.assert_array_equal(new.positions, state.positions)
        assert new.n_rejected_nonfinite == 4

    def test_deterministic(self, rng):
        net = random_net(rng, n_in=2)
        state = init_chains(WIDE, 6, rng)
        a = hmc_step(net, state, 0.3, 4, np.random.default_rng(1), WIDE)
        b = hmc_step(net, state, 0.3, 4, np.random.default_rng(1), WIDE)
        np.testing.assert_array_equal(a.positions, b.positions)


class TestRMSProp:
    def test_scalar_example(self, rng):
        net = DenseNet([Layer(np.array([[1.0]]), np.array([0.0]), "linear")])  # grad g = 1
        new = rmsprop_step(net, ChainState(np.array([[0.0]])), eta=0.01, rho=0.9, lam=0.0, rng=rng)
        assert new.rmsprop_m[0, 0] == pytest.approx(0.1, rel=1e-15)
        assert new.positions[0, 0] == pytest.approx(0.0316228, abs=1e-7)

    def test_zero_gradient(self, rng):
        net = DenseNet([Layer(np.zeros((2, 1)), np.array([0.3]), "linear")])
        state = ChainState(np.array([[0.5, -1.0]]), np.array([[2.0, 4.0]]))
        new = rmsprop_step(net, state, eta=0.1, rho=0.9, lam=0.0, rng=rng)
        np.testing.assert_array_equal(new.positions, state.positions)
        np.testing.assert_allclose(new.rmsprop_m, [[1.8, 3.6]], rtol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(1e-3, 0.5))
    def test_sign_ascent_without_memory_or_noise(self, seed, eta):
        rng = np.random.default_rng(seed)
        net = random_net(rng, n_in=3)
        x = rng.normal(size=(5, 3))
        new = rmsprop_step(net, ChainState(x), eta=eta, rho=0.0, lam=0.0, rng=rng)
        from ope.nn import input_grad
        grad = input_grad(net, x)
        moved = new.positions - x
        big = np.abs(grad) > 1e-3  # away from the 1e-8 floor
        np.testing.assert_allclose(moved[big], eta * np.sign(grad[big]), rtol=1e-9)

    def test_drift_to_mode(self):
        rng = np.random.default_rng(0)
        net = QuadraticLogit(2)
        state = init_chains(WIDE, 200, rng)
        start = np.linalg.norm(state.positions, axis=1).mean()
        for _ in range(100):
            state = rmsprop_step(net, state, eta=0.2, rho=0.9, lam=1.0, rng=rng, domain=WIDE)
        assert np.linalg.norm(state.positions, axis=1).mean() < start

    def test_invalid_rho(self, rng):
        with pytest.raises(ValueError):
            rmsprop_step(QuadraticLogit(1), ChainState(np.zeros((1, 1))), 0.1, 1.0, 0.0, rng)


class TestPersistentPhase:
    def test_no_steps_no_restart(self, rng):
        state = init_chains(WIDE, 10, rng)
        cfg = SamplerConfig(steps_per_update=0, restart_prob=0.0)
        x, new = persistent_negative_phase(random_net(rng, n_in=2), state, cfg, WIDE, rng)
        np.testing.assert_array_equal(x, state.positions)

    def test_full_restart_is_fresh_uniform(self):
        state = init_chains(WIDE, 50, np.random.default_rng(0))
        cfg = SamplerConfig(steps_per_update=0, restart_prob=1.0)
        x, new = persistent_negative_phase(QuadraticLogit(2), state, cfg, WIDE, np.random.default_rng(5))
        assert new.restarts == 50
        # the restart draws come from the same stream position as a direct uniform draw
        r = np.random.default_rng(5)
        r.random(50)
        np.testing.assert_array_equal(x, uniform_sample(WIDE, 50, r))

    @pytest.mark.parametrize("kind", ["hmc", "rmsprop"])
    def test_containment(self, rng, kind):
        box = BoxDomain([-0.3, -0.2], [0.4, 0.1])
        net = init_dense_net([2, 8, 1], rng)
        net.layers[0].weight *= 20.0  # steep logit pushes chains into the walls
        state = init_chains(box, 64, rng)
        cfg = SamplerConfig(kind=kind, step_size=0.5, eta=0.5)
        for _ in range(20):
            x, state = persistent_negative_phase(net, state, cfg, box, rng)
            assert np.all(box.contains(x))

    def test_chains_converge_to_target(self):
        """Defaults on the Gaussian logit: KS distance < 0.1 after 500 updates."""
        rng = np.random.default_rng(11)
        box = BoxDomain([-5.0, -5.0], [5.0, 5.0])
        net = QuadraticLogit(2)
        cfg = SamplerConfig()
        state = init_chains(box, 500, rng)
        for _ in range(500):
            x, state = persistent_negative_phase(net, state, cfg, box, rng)
        for j in range(2):
            assert stats.kstest(x[:, j], "norm").statistic < 0.1

    def test_uniform_kind_has_no_chains(self, rng):
        with pytest.raises(ValueError):
            persistent_negative_phase(QuadraticLogit(2), init_chains(WIDE, 2, rng),
                                      SamplerConfig(kind="uniform"), WIDE, rng)


def zero_generator(latent_dim, bias):
    gen = GeneratorNet.create(len(bias), np.random.default_rng(0), latent_dim, hidden=(4,))
    for layer in gen.net.layers:
        layer.weight[:] = 0.0
    gen.net.layers[-1].bias[:] = bias
    return gen


class TestGenerator:
    def test_zero_weights_give_bias_point(self, rng):
        box = BoxDomain([-1.0, -1.0], [1.0, 1.0])
        x = generator_negative_phase(random_net(rng, n_in=2), zero_generator(3, [0.25, -0.5]), 7, rng, box)
        np.testing.assert_array_equal(x, np.tile([0.25, -0.5], (7, 1)))

    def test_zero_weights_clamped_bias(self, rng):
        box = BoxDomain([-1.0, -1.0], [1.0, 1.0])
        x = generator_negative_phase(random_net(rng, n_in=2), zero_generator(3, [4.0, -0.5]), 3, rng, box)
        np.testing.assert_array_equal(x, np.tile([1.0, -0.5], (3, 1)))

    def test_clamping_puts_outliers_on_boundary(self, rng):
        box = BoxDomain([-0.1, -0.1], [0.1, 0.1])
        gen = GeneratorNet.create(2, rng)
        gen.net.layers[-1].weight *= 50.0
        x = generator_negative_phase(random_net(rng, n_in=2), gen, 200, rng, box)
        assert np.all(box.contains(x))
        on_wall = np.isin(x, [-0.1, 0.1])
        assert on_wall.any()

    def test_objective_gradient(self, rng):
        net = random_net(rng, n_in=2)
        X = rng.normal(size=(6, 2))
        _, grad = generator_objective(net, X, 2.0)
        h = 1e-6
        num = np.zeros_like(X)
        for i in range(6):
            for j in range(2):
                e = np.zeros_like(X)
                e[i, j] = h
                num[i, j] = (generator_objective(net, X + e, 2.0)[0] - generator_objective(net, X - e, 2.0)[0]) / (2 * h)
        np.testing.assert_allclose(grad, num, atol=1e-8)

    def test_train_step_ascends(self):
        """Mean g on a fresh latent batch does not fall after one step, averaged over 20 trials."""
        box = BoxDomain([-2.0, -2.0], [2.0, 2.0])
        gains = []
        for trial in range(20):
            rng = np.random.default_rng(trial)
            net = random_net(rng, n_in=2)
            gen = GeneratorNet.create(2, rng, lr=1e-2)
            eval_seed = 1000 + trial
            before = forward(net, generator_negative_phase(net, gen, 256, np.random.default_rng(eval_seed), box)).mean()
            generator_train_step(net, gen, 64, rng, box)
            after = forward(net, generator_negative_phase(net, gen, 256, np.random.default_rng(eval_seed), box)).mean()
            gains.append(after - before)
        assert np.mean(gains) >= 0.0

    def test_nonfinite_objective_reports_stats(self, rng):
        net = DenseNet([Layer(np.array([[np.inf], [0.0]]), np.array([0.0]), "linear")])
        with pytest.raises(FloatingPointError, match="sample mean"):
            generator_train_step(net, GeneratorNet.create(2, rng), 8, rng, WIDE)

    def test_output_dimension_checked(self, rng):
        with pytest.raises(ValueError):
            generator_negative_phase(random_net(rng, n_in=3), GeneratorNet.create(3, rng), 4, rng, WIDE)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["hmc", "rmsprop", "generator"]))
def test_negative_phase_always_inside_box(seed, kind):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-2, 0, size=2)
    box = BoxDomain(lo, lo + rng.uniform(0.01, 3, size=2))
    net = random_net(rng, n_in=2)
    if kind == "generator":
        gen = GeneratorNet.create(2, rng)
        gen.net.layers[-1].weight *= 10.0
        x = generator_negative_phase(net, gen, 32, rng, box)
    else:
        cfg = SamplerConfig(kind=kind, step_size=float(rng.uniform(0.01, 2.0)), eta=float(rng.uniform(0.01, 2.0)))
        x, _ = persistent_negative_phase(net, init_chains(box, 32, rng), cfg, box, rng)
    assert np.all(box.contains(x))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["hmc", "rmsprop"]))
def test_samplers_deterministic(seed, kind):
    rng = np.random.default_rng(seed)
    net = random_net(rng, n_in=2)
    state = init_chains(WIDE, 8, rng)
    cfg = SamplerConfig(kind=kind)
    a, _ = persistent_negative_phase(net, state, cfg, WIDE, np.random.default_rng(seed))
    b, _ = persistent_negative_phase(net, state, cfg, WIDE, np.random.default_rng(seed))
    np.testing.assert_array_equal(a, b)

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gradcheck import numeric_grads, relative_error
from wsis.errors import ConfigError, ContractError
from wsis.nn import MLP, Adam, apply_gradients, hard_update, soft_update


def random_net(rng, output="identity"):
    depth = int(rng.integers(1, 4))
    sizes = [int(rng.integers(1, 7))] + [int(rng.integers(1, 17)) for _ in range(depth)]
    sizes.append(int(rng.integers(1, 4)))
    return MLP(sizes, output, (-1.5, 2.0), rng=rng)


class TestForward:
    def test_zero_net(self):
        net = MLP([3, 4, 2], rng=np.random.default_rng(0))
        for p in net.params:
            p[...] = 0.0
        assert np.array_equal(net(np.ones(3)), np.zeros(2))

    def test_affine(self):
        net = MLP([1, 1])
        net.weights[0][...] = 2.5
        net.biases[0][...] = -1.0
        assert net(np.array([3.0]))[0] == 6.5

    def test_saturation(self):
        net = MLP([1, 1], "sigmoid", (0.0, 0.5))
        net.weights[0][...] = 1e6
        assert net(np.array([1e6]))[0] == 0.5
        assert net(np.array([-1e6]))[0] == 0.0

    @pytest.mark.parametrize("kind", ["sigmoid", "tanh"])
    def test_bounded_range(self, kind):
        rng = np.random.default_rng(1)
        net = MLP([2, 8, 3], kind, (np.array([-3.0, 0.0, 1.0]), np.array([3.0, 0.5, 2.0])), rng)
        for p in net.params:
            p *= 1e4
        out = net(rng.normal(0, 1e3, (500, 2)))
        assert np.all(out >= net.bounds[0]) and np.all(out <= net.bounds[1])

    def test_batch_matches_rows(self):
        rng = np.random.default_rng(2)
        net = random_net(rng)
        x = rng.normal(size=(5, net.n_in))
        batch = net(x)
        for i in range(5):
            np.testing.assert_array_equal(net(x[i]), batch[i])

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            MLP([3, 2])(np.ones(4))

    def test_deterministic(self):
        net = MLP([3, 5, 1], rng=np.random.default_rng(3))
        x = np.array([0.1, 0.2, 0.3])
        before = [p.copy() for p in net.params]
        assert np.array_equal(net(x), net(x))
        assert all(np.array_equal(a, b) for a, b in zip(before, net.params))

    def test_invalid(self):
        with pytest.raises(ConfigError):
            MLP([3])
        with pytest.raises(ConfigError):
            MLP([3, 1], "relu")
        with pytest.raises(ConfigError):
            MLP([3, 1], "sigmoid", (1.0, 0.0))


class TestBackward:
    def test_affine_weight_gradient(self):
        net = MLP([1, 1])
        x = np.array([3.0])
        _, cache = net.forward(x)
        grads, gx = net.backward(cache, np.array([1.0]))
        assert grads[0][0, 0] == 3.0 and grads[1][0] == 1.0
        assert gx[0] == net.weights[0][0, 0]

    def test_zero_output_gradient(self):
        net = MLP([3, 6, 2], rng=np.random.default_rng(4))
        _, cache = net.forward(np.ones(3))
        grads, gx = net.backward(cache, np.zeros(2))
        assert all(not np.any(g) for g in grads) and not np.any(gx)

    def test_stale_cache(self):
        net = MLP([2, 3, 1], rng=np.random.default_rng(5))
        _, cache = net.forward(np.ones(2))
        opt = Adam(net, 0.1)
        opt.step(net, [np.ones_like(p) for p in net.params])
        with pytest.raises(ContractError):
            net.backward(cache, np.ones(1))

    @pytest.mark.parametrize("output", ["identity", "sigmoid", "tanh"])
    def test_finite_differences(self, output):
        rng = np.random.default_rng(6)
        for _ in range(10):
            net = random_net(rng, output)
            x = rng.normal(size=(3, net.n_in))
            g_out = rng.normal(size=(3, net.n_out))
            _, cache = net.forward(x)
            grads, gx = net.backward(cache, g_out)
            num, num_x = numeric_grads(net, x, g_out)
            assert relative_error(grads + [gx], num + [num_x]) < 1e-5


class TestAdam:
    def test_zero_gradient(self):
        net = MLP([2, 3, 1], rng=np.random.default_rng(7))
        before = [p.copy() for p in net.params]
        opt = Adam(net, 0.01)
        apply_gradients(net, opt, [np.zeros_like(p) for p in net.params])
        assert all(np.array_equal(a, b) for a, b in zip(before, net.params))

    def test_monotone_descent_and_ascent(self):
        for maximize, sign in ((False, -1), (True, 1)):
            net = MLP([1, 1])
            net.weights[0][...] = 0.0
            opt = Adam(net, 0.01)
            trace = []
            for _ in range(50):
                apply_gradients(net, opt, [np.array([[2.0]]), np.array([0.0])], maximize=maximize)
                trace.append(net.weights[0][0, 0])
            steps = np.diff([0.0] + trace)
            assert np.all(sign * steps > 0)

    def test_first_step_size(self):
        # bias-corrected first step moves each parameter by lr * sign(g)
        net = MLP([1, 1])
        net.weights[0][...] = 1.0
        opt = Adam(net, 0.1)
        apply_gradients(net, opt, [np.array([[5.0]]), np.array([-3.0])])
        assert net.weights[0][0, 0] == pytest.approx(0.9, abs=1e-8)

    def test_shape_mismatch(self):
        net = MLP([2, 1])
        with pytest.raises(ContractError):
            Adam(net, 0.1).step(net, [np.zeros((3, 1)), np.zeros(1)])


class TestTargets:
    def _pair(self):
        rng = np.random.default_rng(8)
        src = MLP([2, 4, 1], rng=rng)
        tgt = MLP([2, 4, 1], rng=rng)
        return src, tgt

    def test_tau_one_copies(self):
        src, tgt = self._pair()
        soft_update(tgt, src, 1.0)
        assert all(np.array_equal(a, b) for a, b in zip(src.params, tgt.params))

    def test_small_tau(self):
        src, tgt = self._pair()
        for p in src.params:
            p[...] = 1.0
        for p in tgt.params:
            p[...] = 0.0
        soft_update(tgt, src, 0.001)
        assert all(np.allclose(p, 0.001, rtol=0, atol=1e-15) for p in tgt.params)
        soft_update(tgt, src, 0.001)
        assert all(np.allclose(p, 1 - 0.999**2, rtol=0, atol=1e-15) for p in tgt.params)

    @given(st.floats(1e-4, 1.0), st.integers(1, 30))
    def test_contraction(self, tau, k):
        src, tgt = self._pair()
        gap0 = [s - t for s, t in zip(src.params, tgt.params)]
        for _ in range(k):
            soft_update(tgt, src, tau)
        for g0, s, t in zip(gap0, src.params, tgt.params):
            np.testing.assert_allclose(s - t, (1 - tau) ** k * g0, rtol=1e-9, atol=1e-12)

    def test_architecture_mismatch(self):
        with pytest.raises(ContractError):
            soft_update(MLP([2, 1]), MLP([3, 1]), 0.5)
        with pytest.raises(ContractError):
            hard_update(MLP([2, 1]), MLP([2, 2]))

    def test_bad_tau(self):
        src, tgt = self._pair()
        with pytest.raises(ConfigError):
            soft_update(tgt, src, 0.0)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        net = MLP([3, 7, 2], "tanh", (np.array([-3.0, 0.0]), np.array([3.0, 0.5])),
                  np.random.default_rng(9))
        net.save(tmp_path / "n.npz")
        back = MLP.load(tmp_path / "n.npz")
        assert back.same_architecture(net)
        assert all(np.array_equal(a, b) for a, b in zip(net.params, back.params))
        x = np.linspace(-1, 1, 3)
        assert np.array_equal(net(x), back(x))

    def test_bad_version(self, tmp_path):
        d = MLP([2, 1]).state_dict()
        d["format_version"] = np.array(99)
        with pytest.raises(ContractError):
            MLP.from_state_dict(d)

    def test_adam_state(self):
        net = MLP([2, 3, 1], rng=np.random.default_rng(10))
        opt = Adam(net, 0.01)
        opt.step(net, [np.ones_like(p) for p in net.params])
        other = Adam(net, 0.5)
        other.load_state_dict(opt.state_dict())
        assert other.t == 1 and other.lr == 0.01
        assert all(np.array_equal(a, b) for a, b in zip(other.m, opt.m))

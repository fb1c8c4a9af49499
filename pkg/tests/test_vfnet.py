"""Vector field network tests.

The gradient oracle is central finite differences over every scalar
parameter; the forward oracle is a loop-based reimplementation of the
layer equations, kept deliberately dumb.
"""

import math

import numpy as np
import pytest

from motionflow import se3, vfnet

RNG = np.random.default_rng

SMALL_CONFIG = vfnet.NetConfig(
    cond_dim=5,
    time_embed_dim=4,
    state_embed_dim=6,
    cond_hidden_dim=8,
    cond_embed_dim=6,
    trunk_widths=(8, 8),
    head_widths=(8, 8),
)


def random_net(rng, config):
    """Fully random parameters, including the final head layers."""
    net = vfnet.init_params(rng, config)
    for _, arr in vfnet._named_arrays(net):
        arr[...] = rng.standard_normal(arr.shape) * 0.4
    return net


def naive_forward(net, state_vec, tau, cond_vec):
    """Scalar-loop re-evaluation of the network, used as a forward oracle."""
    cfg = net.config

    def linear(pair, x):
        w, b = pair
        out = np.zeros(w.shape[0])
        for i in range(w.shape[0]):
            acc = b[i]
            for j in range(w.shape[1]):
                acc += w[i, j] * x[j]
            out[i] = acc
        return out

    zt = np.zeros(cfg.time_embed_dim)
    for j in range(cfg.time_embed_dim // 2):
        zt[2 * j] = math.sin((2.0 ** j) * math.pi * tau)
        zt[2 * j + 1] = math.cos((2.0 ** j) * math.pi * tau)
    zs = linear(net.state_embed, state_vec)
    zc = linear(net.cond_embed[1], np.tanh(linear(net.cond_embed[0], cond_vec)))
    h = np.concatenate([zt, zs, zc])
    for pair in net.layers:
        h = np.tanh(linear(pair, h))
    rot = h.copy()
    for pair in net.head_rot[:-1]:
        rot = np.tanh(linear(pair, rot))
    rot = linear(net.head_rot[-1], rot)
    trans = h.copy()
    for pair in net.head_trans[:-1]:
        trans = np.tanh(linear(pair, trans))
    trans = linear(net.head_trans[-1], trans)
    return np.concatenate([rot, trans])


class TestTimeEmbedding:
    def test_tau_zero(self):
        emb = vfnet.time_embedding(0.0, 8)
        assert np.array_equal(emb, [0, 1, 0, 1, 0, 1, 0, 1])

    def test_known_values(self):
        emb = vfnet.time_embedding(0.5, 4)
        # sin(pi/2), cos(pi/2), sin(pi), cos(pi)
        want = [1.0, math.cos(math.pi / 2), math.sin(math.pi), -1.0]
        assert np.allclose(emb, want, atol=1e-15)

    def test_injective_on_grid(self):
        grid = np.linspace(0.0, 1.0, 1001)
        embs = {vfnet.time_embedding(t, 16).tobytes() for t in grid}
        assert len(embs) == grid.size

    def test_rejects_out_of_range(self):
        for bad in (-0.01, 1.01, float("nan")):
            with pytest.raises(ValueError):
                vfnet.time_embedding(bad, 8)

    def test_rejects_odd_dim(self):
        with pytest.raises(ValueError):
            vfnet.time_embedding(0.5, 7)


class TestConfigAndInit:
    def test_fused_dim(self):
        cfg = vfnet.NetConfig()
        assert cfg.fused_dim == 48
        assert SMALL_CONFIG.fused_dim == 16

    def test_rejects_bad_config(self):
        with pytest.raises(ValueError):
            vfnet.NetConfig(time_embed_dim=7)
        with pytest.raises(ValueError):
            vfnet.NetConfig(cond_dim=0)
        with pytest.raises(ValueError):
            vfnet.NetConfig(trunk_widths=())

    def test_parameter_count_matches_closed_form(self):
        cfg = vfnet.NetConfig()
        # linear layer cost: out*in + out
        def lin(o, i):
            return o * i + o

        want = (
            lin(16, 6)                      # state embed
            + lin(16, 16) + lin(16, 16)     # condition MLP
            + lin(64, 48) + lin(64, 64)     # trunk
            + 2 * (lin(32, 64) + lin(32, 32) + lin(3, 32))  # two heads
        )
        assert vfnet.parameter_count(cfg) == want

        assert vfnet.parameter_count(SMALL_CONFIG) == (
            lin(6, 6) + lin(8, 5) + lin(6, 8)
            + lin(8, 16) + lin(8, 8)
            + 2 * (lin(8, 8) + lin(8, 8) + lin(3, 8))
        )

    def test_init_bounds_and_zero_head(self):
        cfg = vfnet.NetConfig()
        net = vfnet.init_params(RNG(0), cfg)
        for name, arr in vfnet._named_arrays(net):
            assert np.all(np.isfinite(arr))
            if name.endswith(".b") or name == "state_embed.b":
                if not name.startswith(("head_rot.2", "head_trans.2")):
                    assert np.array_equal(arr, np.zeros_like(arr))
            if name.startswith(("head_rot.2", "head_trans.2")):
                assert np.array_equal(arr, np.zeros_like(arr))
        bound = math.sqrt(6.0 / 48)
        assert np.max(np.abs(net.layers[0][0])) <= bound

    def test_initial_velocity_is_exactly_zero(self):
        net = vfnet.init_params(RNG(1), vfnet.NetConfig())
        rng = RNG(2)
        for _ in range(10):
            out = vfnet.forward(
                net,
                rng.standard_normal(6),
                float(rng.uniform()),
                vfnet.ConditionVector(rng.standard_normal(16)),
            )
            assert np.array_equal(out, np.zeros(6))

    def test_init_is_deterministic(self):
        a = vfnet.init_params(RNG(3), SMALL_CONFIG)
        b = vfnet.init_params(RNG(3), SMALL_CONFIG)
        for (_, x), (_, y) in zip(vfnet._named_arrays(a), vfnet._named_arrays(b)):
            assert np.array_equal(x, y)


class TestForward:
    def test_matches_naive_oracle(self):
        rng = RNG(4)
        net = random_net(rng, SMALL_CONFIG)
        for _ in range(10):
            state = rng.standard_normal(6)
            tau = float(rng.uniform())
            cond = rng.standard_normal(5)
            got = vfnet.forward(net, state, tau, vfnet.ConditionVector(cond))
            want = naive_forward(net, state, tau, cond)
            assert np.max(np.abs(got - want)) < 1e-12

    def test_head_output_layout(self):
        # With all weights zero, output equals the final head biases:
        # rotation head owns components 0..2, translation head 3..5.
        net = vfnet._zero_net(SMALL_CONFIG)
        net.head_rot[-1][1][:] = [1.0, 2.0, 3.0]
        net.head_trans[-1][1][:] = [4.0, 5.0, 6.0]
        out = vfnet.forward(net, np.zeros(6), 0.5, vfnet.ConditionVector(np.zeros(5)))
        assert np.array_equal(out, [1, 2, 3, 4, 5, 6])

    def test_batch_matches_singles(self):
        rng = RNG(5)
        net = random_net(rng, SMALL_CONFIG)
        states = rng.standard_normal((7, 6))
        taus = rng.uniform(size=7)
        conds = rng.standard_normal((7, 5))
        batch = vfnet.forward_batch(net, states, taus, conds)
        for i in range(7):
            single = vfnet.forward(net, states[i], float(taus[i]),
                                   vfnet.ConditionVector(conds[i]))
            assert np.max(np.abs(batch[i] - single)) < 1e-12

    def test_accepts_motion_state(self):
        rng = RNG(6)
        net = random_net(rng, SMALL_CONFIG)
        state = se3.MotionState([0.1, 0.2, 0.3], [0.4, 0.5, 0.6])
        a = vfnet.forward(net, state, 0.3, vfnet.ConditionVector(np.ones(5)))
        b = vfnet.forward(net, state.as_vector(), 0.3, vfnet.ConditionVector(np.ones(5)))
        assert np.array_equal(a, b)

    def test_rejects_mismatched_condition(self):
        net = vfnet.init_params(RNG(7), SMALL_CONFIG)
        with pytest.raises(ValueError):
            vfnet.forward(net, np.zeros(6), 0.5, vfnet.ConditionVector(np.zeros(9)))

    def test_rejects_bad_tau(self):
        net = vfnet.init_params(RNG(8), SMALL_CONFIG)
        cond = vfnet.ConditionVector(np.zeros(5))
        for bad in (-0.1, 1.1, float("nan")):
            with pytest.raises(ValueError):
                vfnet.forward(net, np.zeros(6), bad, cond)


class TestBackward:
    def test_finite_difference_oracle(self):
        """Analytic gradients vs central differences, 20 random tuples."""
        rng = RNG(9)
        net = random_net(rng, SMALL_CONFIG)
        h = 1e-5
        worst = 0.0
        for _ in range(20):
            state = rng.standard_normal(6)
            tau = float(rng.uniform())
            cond = vfnet.ConditionVector(rng.standard_normal(5))
            upstream = rng.standard_normal(6)
            grads = vfnet.backward(net, state, tau, cond, upstream)
            for (_, param), (_, grad) in zip(
                vfnet._named_arrays(net), vfnet._named_arrays(grads)
            ):
                flat_p = param.reshape(-1)
                flat_g = grad.reshape(-1)
                for idx in range(flat_p.size):
                    orig = flat_p[idx]
                    flat_p[idx] = orig + h
                    up = float(vfnet.forward(net, state, tau, cond) @ upstream)
                    flat_p[idx] = orig - h
                    down = float(vfnet.forward(net, state, tau, cond) @ upstream)
                    flat_p[idx] = orig
                    fd = (up - down) / (2.0 * h)
                    rel = abs(flat_g[idx] - fd) / max(abs(flat_g[idx]), abs(fd), 1e-8)
                    worst = max(worst, rel)
        assert worst < 1e-4

    def test_batch_gradient_is_sum_of_singles(self):
        rng = RNG(10)
        net = random_net(rng, SMALL_CONFIG)
        states = rng.standard_normal((4, 6))
        taus = rng.uniform(size=4)
        conds = rng.standard_normal((4, 5))
        ups = rng.standard_normal((4, 6))
        _, cache = vfnet.forward_batch(net, states, taus, conds, keep_cache=True)
        batch_grads = vfnet.backward_batch(net, cache, ups)
        total = vfnet.zero_gradients(net)
        for i in range(4):
            single = vfnet.backward(net, states[i], float(taus[i]),
                                    vfnet.ConditionVector(conds[i]), ups[i])
            for (_, acc), (_, g) in zip(vfnet._named_arrays(total),
                                        vfnet._named_arrays(single)):
                acc += g
        for (_, a), (_, b) in zip(vfnet._named_arrays(total),
                                  vfnet._named_arrays(batch_grads)):
            assert np.max(np.abs(a - b)) < 1e-10


class TestCheckpoint:
    def test_round_trip_is_value_exact(self, tmp_path):
        rng = RNG(11)
        net = random_net(rng, SMALL_CONFIG)
        path = tmp_path / "ckpt.txt"
        vfnet.save_checkpoint(path, net)
        loaded = vfnet.load_checkpoint(path)
        assert loaded.config == net.config
        for (na, a), (nb, b) in zip(vfnet._named_arrays(net),
                                    vfnet._named_arrays(loaded)):
            assert na == nb
            assert np.array_equal(a, b), na

    def test_save_is_deterministic(self, tmp_path):
        net = random_net(RNG(12), SMALL_CONFIG)
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        vfnet.save_checkpoint(p1, net)
        vfnet.save_checkpoint(p2, net)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("something else\n")
        with pytest.raises(ValueError):
            vfnet.load_checkpoint(path)

    def test_rejects_missing_tensor(self, tmp_path):
        net = random_net(RNG(13), SMALL_CONFIG)
        path = tmp_path / "ckpt.txt"
        vfnet.save_checkpoint(path, net)
        lines = path.read_text().splitlines()
        cut = next(i for i, l in enumerate(lines) if l.startswith("tensor head_trans"))
        path.write_text("\n".join(lines[:cut]) + "\n")
        with pytest.raises(ValueError, match="missing"):
            vfnet.load_checkpoint(path)

    def test_rejects_shape_mismatch(self, tmp_path):
        net = random_net(RNG(14), SMALL_CONFIG)
        path = tmp_path / "ckpt.txt"
        vfnet.save_checkpoint(path, net)
        text = path.read_text().replace("tensor state_embed.w 6 6",
                                        "tensor state_embed.w 6 5")
        path.write_text(text)
        with pytest.raises(ValueError):
            vfnet.load_checkpoint(path)

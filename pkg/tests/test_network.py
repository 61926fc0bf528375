import numpy as np
import pytest

from hsr_zermelo.network import (CheckpointVersionError, CorruptCheckpointError, NetConfig,
                                 PolicyValueNet, ROLE_OP, ROLE_P, TrainingDivergedError)

TINY = dict(p_size=4, conv_channels=(3, 2, 3, 2), dense_width=5, dtype="float64")


def batch(rng, size=6, p_size=4):
    x = rng.uniform(-1, 1, size=(size, 5))
    role = np.array([ROLE_P, ROLE_OP] * (size // 2))
    pi = np.zeros((size, p_size))
    for i in range(size):
        width = p_size if role[i] == ROLE_P else 2
        pi[i, :width] = rng.dirichlet(np.ones(width))
    z = rng.choice([-1.0, 1.0], size=size)
    return x, role, pi, z


@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_gradients_match_central_differences(activation):
    rng = np.random.default_rng(3)
    net = PolicyValueNet(NetConfig(activation=activation, seed=4, **TINY))
    x, role, pi, z = batch(rng)
    _, grads, _ = net.loss_and_grads(x, role, pi, z)
    eps = 1e-6
    for name, param in net.params.items():
        numeric = np.zeros_like(param)
        flat = param.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = net.loss_and_grads(x, role, pi, z)[0]
            flat[i] = old - eps
            down = net.loss_and_grads(x, role, pi, z)[0]
            flat[i] = old
            numeric.reshape(-1)[i] = (up - down) / (2 * eps)
        denom = max(np.abs(numeric).max(), np.abs(grads[name]).max(), 1e-8)
        rel = np.abs(numeric - grads[name]).max() / denom
        assert rel < 1e-4, (name, rel)


def test_forward_properties():
    net = PolicyValueNet(NetConfig(p_size=23))
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.uniform(-1, 1, 5)
        pv = net.predict(x)
        assert np.all(pv.policy_p > 0) and np.all(pv.policy_op > 0)
        assert abs(pv.policy_p.sum() - 1) < 1e-6 and abs(pv.policy_op.sum() - 1) < 1e-6
        assert -1 < pv.value < 1
        again = net.predict(x)
        assert np.array_equal(again.policy_p, pv.policy_p) and again.value == pv.value
    a = net.predict([0.5, 0.5, 0.3, 0.0, 1.0])
    b = net.predict([0.5, 0.5, 0.3, 0.0, -1.0])
    assert not np.allclose(a.policy_p, b.policy_p)


def test_shape_mismatch_raises():
    net = PolicyValueNet(NetConfig(p_size=5))
    with pytest.raises(ValueError):
        net.forward(np.zeros((2, 4)))


def test_stationary_point_has_zero_gradient():
    net = PolicyValueNet(NetConfig(seed=1, **TINY))
    rng = np.random.default_rng(5)
    x, role, _, _ = batch(rng)
    pol_p, pol_op, v = net.predict_batch(x)
    pi = np.zeros((len(x), 4))
    pi[role == ROLE_P] = pol_p[role == ROLE_P]
    pi[role == ROLE_OP, :2] = pol_op[role == ROLE_OP]
    _, grads, _ = net.loss_and_grads(x, role, pi, v)
    norm = np.sqrt(sum((g ** 2).sum() for g in grads.values()))
    assert norm < 1e-10


def test_single_example_overfit():
    net = PolicyValueNet(NetConfig(p_size=8, seed=2))
    x = np.array([[0.5, 0.8, 0.4, 0.0, 1.0]])
    role = np.array([ROLE_P])
    pi = np.zeros((1, 8))
    pi[0, 3] = 1.0
    z = np.array([1.0])
    losses = [net.train_batch(x, role, pi, z)["loss"] for _ in range(1500)]
    assert losses[-1] < 1e-3
    # momentum may overshoot briefly; the trend must still be downhill
    assert max(losses[-100:]) <= losses[0]


def test_synthetic_dataset_loss_halves():
    rng = np.random.default_rng(11)
    x, role, pi, z = batch(rng, size=64, p_size=6)
    # make targets a deterministic function of the input
    z = np.sign(x[:, 0] + 1e-9)
    net = PolicyValueNet(NetConfig(p_size=6, seed=3))
    start = net.loss_and_grads(x.astype(np.float32), role, pi, z)[0]
    net.fit(x, role, pi, z, epochs=150, batch_size=16)
    end = net.loss_and_grads(x.astype(np.float32), role, pi, z)[0]
    entropy = -(pi * np.log(np.where(pi > 0, pi, 1))).sum(axis=1).mean()
    assert end - entropy <= 0.5 * (start - entropy)


def test_non_finite_loss_aborts():
    net = PolicyValueNet(NetConfig(p_size=4))
    with pytest.raises(TrainingDivergedError):
        net.train_batch(np.full((1, 5), np.nan), np.array([ROLE_P]), np.eye(4)[:1], np.array([1.0]))


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    net = PolicyValueNet(NetConfig(p_size=11, seed=9))
    rng = np.random.default_rng(0)
    x, role, pi, z = batch(rng, size=8, p_size=11)
    net.fit(x, role, pi, z, epochs=2, batch_size=4)
    path = tmp_path / "net.ckpt"
    net.save(path)
    loaded = PolicyValueNet.load(path)
    assert loaded.config == net.config and loaded.step == net.step
    probes = rng.uniform(-1, 1, size=(100, 5))
    for row in probes:
        a, b = net.predict(row), loaded.predict(row)
        assert np.array_equal(a.policy_p, b.policy_p)
        assert np.array_equal(a.policy_op, b.policy_op)
        assert a.value == b.value
    # training continues identically from the restored optimizer and RNG
    net.fit(x, role, pi, z, epochs=1, batch_size=4)
    loaded.fit(x, role, pi, z, epochs=1, batch_size=4)
    for name in net.params:
        assert np.array_equal(net.params[name], loaded.params[name])


def test_checkpoint_weights_are_little_endian_float32(tmp_path):
    net = PolicyValueNet(NetConfig(p_size=4))
    path = tmp_path / "n.ckpt"
    net.save(path, include_optimizer=False)
    blob = path.read_bytes()
    header_end = blob.index(b"\n", blob.index(b"\n", len(b"HSRZNET\n")) + 1) + 1
    payload = blob[header_end:]
    first = np.frombuffer(payload, dtype="<f4", count=net.params["conv0.w"].size)
    assert np.array_equal(first, net.params["conv0.w"].reshape(-1))


def test_checkpoint_version_mismatch(tmp_path):
    net = PolicyValueNet(NetConfig(p_size=4))
    path = tmp_path / "n.ckpt"
    net.save(path)
    path.write_bytes(path.read_bytes().replace(b"version 1\n", b"version 7\n", 1))
    with pytest.raises(CheckpointVersionError):
        PolicyValueNet.load(path)


def test_checkpoint_truncated(tmp_path):
    net = PolicyValueNet(NetConfig(p_size=4))
    path = tmp_path / "n.ckpt"
    net.save(path)
    path.write_bytes(path.read_bytes()[:-13])
    with pytest.raises(CorruptCheckpointError):
        PolicyValueNet.load(path)
    path.write_bytes(b"garbage")
    with pytest.raises(CorruptCheckpointError):
        PolicyValueNet.load(path)

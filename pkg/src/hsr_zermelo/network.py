"""Policy-value network: four 1-D convolutions, two dense layers, three heads.

The input is the normalised 5-tuple ``(k, q, n, m, r)`` treated as a
one-channel signal of length 5. The second dense layer emits the logits of
both policy heads and the pre-activation of the value head in one vector:
``[P logits (p_size) | OP logits (op_size) | value]``.

Gradients are written out by hand; ``tests/test_network.py`` checks every
tensor against central differences.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from . import kernels

FORMAT_MAGIC = b"HSRZNET\n"
FORMAT_VERSION = 1
INPUT_LEN = 5
ROLE_P = 0
ROLE_OP = 1


class CheckpointError(IOError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass(frozen=True)
class NetConfig:
    p_size: int
    op_size: int = 2
    conv_channels: Tuple[int, ...] = (16, 16, 16, 16)
    kernel_size: int = 3
    dense_width: int = 64
    activation: str = "relu"
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if len(self.conv_channels) != 4:
            raise ValueError("the network has exactly four convolution layers")
        if self.kernel_size % 2 != 1:
            raise ValueError("kernel_size must be odd for same padding")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"unsupported dtype {self.dtype!r}")
        if self.p_size < 2 or self.op_size < 2:
            raise ValueError("policy heads need at least two entries")

    @property
    def out_size(self) -> int:
        return self.p_size + self.op_size + 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        d = dict(d)
        d["conv_channels"] = tuple(d["conv_channels"])
        return cls(**d)


@dataclass
class PolicyValue:
    policy_p: np.ndarray
    policy_op: np.ndarray
    value: float


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    s = z - z.max(axis=-1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


class PolicyValueNet:
    def __init__(self, config: NetConfig):
        self.config = config
        self.dtype = np.dtype(config.dtype)
        self.rng = np.random.default_rng(config.seed)
        self.step = 0
        self.params: Dict[str, np.ndarray] = {}
        self.velocity: Dict[str, np.ndarray] = {}
        self._init_params()

    # -- parameters ---------------------------------------------------------

    def _init_params(self):
        cfg = self.config
        cin = 1
        for i, cout in enumerate(cfg.conv_channels):
            fan_in = cin * cfg.kernel_size
            self.params[f"conv{i}.w"] = self._he(fan_in, (cfg.kernel_size, cin, cout))
            self.params[f"conv{i}.b"] = np.zeros(cout, self.dtype)
            cin = cout
        flat = INPUT_LEN * cin
        self.params["dense0.w"] = self._he(flat, (flat, cfg.dense_width))
        self.params["dense0.b"] = np.zeros(cfg.dense_width, self.dtype)
        # small output layer keeps initial policies near uniform and values near 0
        self.params["dense1.w"] = (self._he(cfg.dense_width, (cfg.dense_width, cfg.out_size)) * 0.1).astype(self.dtype)
        self.params["dense1.b"] = np.zeros(cfg.out_size, self.dtype)
        self.velocity = {k: np.zeros_like(v) for k, v in self.params.items()}

    def _he(self, fan_in: int, shape) -> np.ndarray:
        bound = np.sqrt(6.0 / fan_in)
        return self.rng.uniform(-bound, bound, size=shape).astype(self.dtype)

    def param_names(self) -> List[str]:
        return list(self.params)

    def copy(self) -> "PolicyValueNet":
        other = PolicyValueNet.__new__(PolicyValueNet)
        other.config = self.config
        other.dtype = self.dtype
        other.rng = np.random.default_rng()
        other.rng.bit_generator.state = self.rng.bit_generator.state
        other.step = self.step
        other.params = {k: v.copy() for k, v in self.params.items()}
        other.velocity = {k: v.copy() for k, v in self.velocity.items()}
        return other

    # -- forward / backward -------------------------------------------------

    def _act(self, z):
        return np.maximum(z, 0) if self.config.activation == "relu" else np.tanh(z)

    def _act_grad(self, z, a, g):
        if self.config.activation == "relu":
            return g * (z > 0)
        return g * (1 - a * a)

    def forward(self, x: np.ndarray):
        """Returns ``(logits, value, cache)`` for a batch ``x`` of shape (B, 5)."""
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 2 or x.shape[1] != INPUT_LEN:
            raise ValueError(f"expected input of shape (B, {INPUT_LEN}), got {x.shape}")
        p = self.params
        h = x[:, :, None]
        cache = []
        for i in range(4):
            z = kernels.conv1d_forward(h, p[f"conv{i}.w"], p[f"conv{i}.b"])
            a = self._act(z)
            cache.append((h, z, a))
            h = a
        flat = h.reshape(h.shape[0], -1)
        z0 = flat @ p["dense0.w"] + p["dense0.b"]
        a0 = self._act(z0)
        out = a0 @ p["dense1.w"] + p["dense1.b"]
        value = np.tanh(out[:, -1])
        return out, value, (cache, flat, z0, a0)

    def predict(self, x: Sequence[float]) -> PolicyValue:
        out, value, _ = self.forward(np.asarray(x, dtype=self.dtype)[None, :])
        ps = self.config.p_size
        return PolicyValue(
            _softmax(out[0, :ps].astype(np.float64)),
            _softmax(out[0, ps:ps + self.config.op_size].astype(np.float64)),
            float(value[0]),
        )

    def predict_batch(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        out, value, _ = self.forward(x)
        ps = self.config.p_size
        out = out.astype(np.float64)
        return (_softmax(out[:, :ps]), _softmax(out[:, ps:ps + self.config.op_size]),
                value.astype(np.float64))

    def loss_and_grads(self, x, role, pi, z):
        """Mean per-example ``(z - V)^2 - sum_a pi(a) log P(a)`` and its gradient.

        ``pi`` has width ``p_size``; for OP examples only the first ``op_size``
        columns are read. Each example feeds only the head of its own role.
        """
        cfg = self.config
        ps, os_ = cfg.p_size, cfg.op_size
        role = np.asarray(role)
        pi = np.asarray(pi, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        bsz = x.shape[0]
        out, value, (cache, flat, z0, a0) = self.forward(x)
        out64 = out.astype(np.float64)
        v = value.astype(np.float64)
        is_p = role == ROLE_P
        is_op = ~is_p

        d_out = np.zeros((bsz, cfg.out_size))
        value_loss = (z - v) ** 2
        d_out[:, -1] = 2.0 * (v - z) * (1.0 - v * v)

        pol_p = np.zeros(bsz)
        pol_op = np.zeros(bsz)
        if is_p.any():
            logits = out64[is_p, :ps]
            target = pi[is_p, :ps]
            pol_p[is_p] = -(target * _log_softmax(logits)).sum(axis=1)
            d_out[is_p, :ps] = _softmax(logits) * target.sum(axis=1, keepdims=True) - target
        if is_op.any():
            logits = out64[is_op, ps:ps + os_]
            target = pi[is_op, :os_]
            pol_op[is_op] = -(target * _log_softmax(logits)).sum(axis=1)
            d_out[is_op, ps:ps + os_] = _softmax(logits) * target.sum(axis=1, keepdims=True) - target
        d_out /= bsz

        loss = float((value_loss + pol_p + pol_op).mean())
        stats = {
            "loss": loss,
            "value": float(value_loss.mean()),
            "policy_P": float(pol_p[is_p].mean()) if is_p.any() else 0.0,
            "policy_OP": float(pol_op[is_op].mean()) if is_op.any() else 0.0,
        }

        p = self.params
        dt = self.dtype
        d_out = d_out.astype(dt)
        grads = {}
        grads["dense1.w"] = a0.T @ d_out
        grads["dense1.b"] = d_out.sum(axis=0)
        d_a0 = d_out @ p["dense1.w"].T
        d_z0 = self._act_grad(z0, a0, d_a0)
        grads["dense0.w"] = flat.T @ d_z0
        grads["dense0.b"] = d_z0.sum(axis=0)
        d_h = (d_z0 @ p["dense0.w"].T).reshape(cache[-1][2].shape)
        for i in reversed(range(4)):
            h_in, zc, ac = cache[i]
            d_zc = np.ascontiguousarray(self._act_grad(zc, ac, d_h), dtype=dt)
            d_h, dw, db = kernels.conv1d_backward(np.ascontiguousarray(h_in), p[f"conv{i}.w"], d_zc)
            grads[f"conv{i}.w"] = dw
            grads[f"conv{i}.b"] = db
        return loss, grads, stats

    # -- training -----------------------------------------------------------

    def train_batch(self, x, role, pi, z, lr: float = 1e-2, momentum: float = 0.9,
                    weight_decay: float = 0.0) -> dict:
        loss, grads, stats = self.loss_and_grads(np.asarray(x, dtype=self.dtype), role, pi, z)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at step {self.step}: {stats}")
        for name, g in grads.items():
            if weight_decay:
                g = g + weight_decay * self.params[name]
            vel = self.velocity[name]
            vel *= momentum
            vel -= lr * g
            self.params[name] += vel
        self.step += 1
        return stats

    def fit(self, x, role, pi, z, epochs: int = 10, batch_size: int = 64,
            lr: float = 1e-2, momentum: float = 0.9) -> dict:
        """Several shuffled epochs over a dataset; returns mean stats of the last epoch."""
        count = len(z)
        if count == 0:
            return {}
        x = np.asarray(x, dtype=self.dtype)
        last: List[dict] = []
        for _ in range(epochs):
            order = self.rng.permutation(count)
            last = []
            for start in range(0, count, batch_size):
                idx = order[start:start + batch_size]
                last.append(self.train_batch(x[idx], role[idx], pi[idx], z[idx], lr, momentum))
        return {k: float(np.mean([s[k] for s in last])) for k in last[0]}

    # -- persistence --------------------------------------------------------

    def save(self, path, include_optimizer: bool = True) -> None:
        tensors = [(name, arr) for name, arr in self.params.items()]
        if include_optimizer:
            tensors += [("opt." + name, arr) for name, arr in self.velocity.items()]
        le = self.dtype.newbyteorder("<")
        payload = b"".join(np.ascontiguousarray(arr, dtype=le).tobytes() for _, arr in tensors)
        header = {
            "config": self.config.to_dict(),
            "step": self.step,
            "rng": self.rng.bit_generator.state,
            "dtype": le.str,
            "tensors": [[name, list(arr.shape)] for name, arr in tensors],
            "payload_bytes": len(payload),
            "crc32": zlib.crc32(payload),
        }
        blob = (FORMAT_MAGIC + f"version {FORMAT_VERSION}\n".encode()
                + json.dumps(header, sort_keys=True).encode() + b"\n" + payload)
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(blob)
        tmp.replace(path)

    @classmethod
    def load(cls, path) -> "PolicyValueNet":
        blob = Path(path).read_bytes()
        if not blob.startswith(FORMAT_MAGIC):
            raise CorruptCheckpointError(f"{path}: not a network checkpoint")
        rest = blob[len(FORMAT_MAGIC):]
        try:
            version_line, rest = rest.split(b"\n", 1)
            word, version = version_line.decode().split()
            version = int(version)
        except ValueError as exc:
            raise CorruptCheckpointError(f"{path}: unreadable version line") from exc
        if word != "version":
            raise CorruptCheckpointError(f"{path}: unreadable version line")
        if version != FORMAT_VERSION:
            raise CheckpointVersionError(
                f"{path}: checkpoint format version {version}, expected {FORMAT_VERSION}")
        try:
            header_line, payload = rest.split(b"\n", 1)
            header = json.loads(header_line)
        except ValueError as exc:
            raise CorruptCheckpointError(f"{path}: unreadable header") from exc
        if len(payload) != header["payload_bytes"]:
            raise CorruptCheckpointError(
                f"{path}: payload has {len(payload)} bytes, header declares {header['payload_bytes']}")
        if zlib.crc32(payload) != header["crc32"]:
            raise CorruptCheckpointError(f"{path}: payload checksum mismatch")
        config = NetConfig.from_dict(header["config"])
        net = cls.__new__(cls)
        net.config = config
        net.dtype = np.dtype(config.dtype)
        net.rng = np.random.default_rng()
        net.rng.bit_generator.state = header["rng"]
        net.step = header["step"]
        net.params, net.velocity = {}, {}
        le = np.dtype(header["dtype"])
        offset = 0
        for name, shape in header["tensors"]:
            size = int(np.prod(shape)) * le.itemsize
            arr = np.frombuffer(payload, dtype=le, count=int(np.prod(shape)), offset=offset)
            arr = arr.reshape(shape).astype(net.dtype)
            offset += size
            if name.startswith("opt."):
                net.velocity[name[4:]] = arr
            else:
                net.params[name] = arr
        for name, arr in net.params.items():
            net.velocity.setdefault(name, np.zeros_like(arr))
        return net

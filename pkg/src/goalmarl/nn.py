"""Small dense networks in numpy with hand-written backprop and Adam.

All parameters of a network live in one flat float64 vector
(``DenseNet.params``); per-layer weight matrices and bias vectors are views
into it. Layer ``k`` contributes ``W_k`` (shape ``(fan_in, fan_out)``,
row-major) followed by ``b_k``. Weight merging, soft updates and Adam all
operate on the flat vector directly.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"GMRL"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def param_count(layer_dims) -> int:
    return sum(a * b + b for a, b in zip(layer_dims[:-1], layer_dims[1:]))


class DenseNet:
    """Fully connected net: ReLU on hidden layers, linear output."""

    def __init__(self, layer_dims, params=None):
        dims = tuple(int(d) for d in layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"need at least two positive layer widths, got {layer_dims}")
        self.layer_dims = dims
        n = param_count(dims)
        if params is None:
            self.params = np.zeros(n)
        else:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (n,):
                raise ValueError(f"expected {n} parameters for dims {dims}, got {params.shape}")
            self.params = params.copy()
        self._bind()

    def _bind(self):
        self.weights, self.biases = [], []
        off = 0
        for a, b in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            self.weights.append(self.params[off:off + a * b].reshape(a, b))
            off += a * b
            self.biases.append(self.params[off:off + b])
            off += b

    @property
    def n_params(self) -> int:
        return self.params.size

    def copy(self) -> "DenseNet":
        return DenseNet(self.layer_dims, self.params)

    def set_params(self, values) -> None:
        """Overwrite parameters in place (views stay valid)."""
        self.params[...] = values

    def forward(self, x) -> np.ndarray:
        """Accepts a single input vector or a batch of row vectors."""
        h = np.asarray(x, dtype=np.float64)
        if h.shape[-1] != self.layer_dims[0]:
            raise ValueError(f"input width {h.shape[-1]} != {self.layer_dims[0]}")
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < last:
                np.maximum(h, 0.0, out=h)
        return h

    def forward_cached(self, x):
        """Forward pass that also returns the layer inputs needed by :meth:`backprop`."""
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if h.shape[-1] != self.layer_dims[0]:
            raise ValueError(f"input width {h.shape[-1]} != {self.layer_dims[0]}")
        acts = [h]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < last:
                np.maximum(h, 0.0, out=h)
                acts.append(h)
        return h, acts

    def backprop(self, acts, out_grad) -> np.ndarray:
        """Gradient of ``sum(out * out_grad)`` w.r.t. every parameter, flat.

        ``acts`` comes from :meth:`forward_cached`; ``out_grad`` has the
        output's shape (batched).
        """
        g = np.atleast_2d(np.asarray(out_grad, dtype=np.float64))
        grad = np.empty_like(self.params)
        off = self.params.size
        for k in range(len(self.weights) - 1, -1, -1):
            a, b = self.layer_dims[k], self.layer_dims[k + 1]
            off -= b
            grad[off:off + b] = g.sum(axis=0)
            off -= a * b
            np.matmul(acts[k].T, g, out=grad[off:off + a * b].reshape(a, b))
            if k > 0:
                g = g @ self.weights[k].T
                g *= acts[k] > 0.0
        return grad

    def __eq__(self, other):
        if not isinstance(other, DenseNet):
            return NotImplemented
        return self.layer_dims == other.layer_dims and np.array_equal(self.params, other.params)

    def __repr__(self):
        return f"DenseNet({list(self.layer_dims)})"


def init_network(seed, layer_dims) -> DenseNet:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    net = DenseNet(layer_dims)
    for w in net.weights:
        bound = 1.0 / np.sqrt(w.shape[0])
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    return net


def forward(net: DenseNet, x) -> np.ndarray:
    return net.forward(x)


def backprop(net: DenseNet, x, output_gradient) -> np.ndarray:
    _, acts = net.forward_cached(x)
    return net.backprop(acts, output_gradient)


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def entropy(p) -> float | np.ndarray:
    """Shannon entropy in nats along the last axis, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    logp = np.log(np.where(p > 0, p, 1.0))
    return -(p * logp).sum(axis=-1)


@dataclass
class AdamState:
    size: int
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)


def optimizer_step(params: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray:
    """One Adam step, in place on ``params`` (also returned)."""
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grad {grad.shape}, state {state.m.shape}")
    state.t += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    params -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


def flatten(net: DenseNet) -> np.ndarray:
    return net.params.copy()


def unflatten(layer_dims, values) -> DenseNet:
    return DenseNet(layer_dims, values)


def save_params(net: DenseNet, path) -> None:
    dims = net.layer_dims
    header = MAGIC + bytes([FORMAT_VERSION]) + struct.pack(f"<I{len(dims)}I", len(dims), *dims)
    Path(path).write_bytes(header + net.params.astype("<f8").tobytes())


def load_params(path, expected_dims=None) -> DenseNet:
    data = Path(path).read_bytes()
    if len(data) < 9 or data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if data[4] != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {data[4]}")
    (count,) = struct.unpack_from("<I", data, 5)
    body = 9 + 4 * count
    if count < 2 or len(data) < body:
        raise CheckpointError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{count}I", data, 9)
    if expected_dims is not None and tuple(expected_dims) != tuple(dims):
        raise CheckpointError(f"{path}: layer dims {list(dims)} != expected {list(expected_dims)}")
    n = param_count(dims)
    if len(data) != body + 8 * n:
        raise CheckpointError(f"{path}: expected {n} parameters, file holds {(len(data) - body) / 8:g}")
    params = np.frombuffer(data, dtype="<f8", count=n, offset=body).astype(np.float64)
    return DenseNet(dims, params)

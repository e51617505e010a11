"""Dense ReLU networks with hand-written backprop, Adam, and the distillation loss.

Weights are stored as ``(fan_in, fan_out)`` float64 matrices so a batch
``x`` of shape ``(B, fan_in)`` maps through ``x @ W + b``.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ModelFileError, TrainingError

STATE_DIM = 16
N_ACTIONS = 28

MODEL_MAGIC = b"LADN"
MODEL_VERSION = 1

TEACHER_DIMS = (STATE_DIM,) + (128,) * 7 + (N_ACTIONS,)
STUDENT_DIMS = {
    "4x64": (STATE_DIM,) + (64,) * 4 + (N_ACTIONS,),
    "4x32": (STATE_DIM,) + (32,) * 4 + (N_ACTIONS,),
    "3x32": (STATE_DIM,) + (32,) * 3 + (N_ACTIONS,),
}


def mlp_dims(n_layers: int, width: int) -> tuple[int, ...]:
    """Layer widths of an ``n_layers x width`` hidden stack between state and actions."""
    return (STATE_DIM,) + (width,) * n_layers + (N_ACTIONS,)


class DenseNet:
    def __init__(self, dims, weights, biases):
        self.dims = tuple(int(d) for d in dims)
        self.weights = weights
        self.biases = biases

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Q-values for one state ``(16,)`` or a batch ``(B, 16)``."""
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                np.maximum(h, 0.0, out=h)
        return h

    __call__ = forward

    def forward_cache(self, x: np.ndarray):
        """Forward pass keeping every layer input for :meth:`backward`."""
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return h, acts

    def backward(self, acts, grad_out: np.ndarray):
        """Gradients of a loss w.r.t. every weight and bias given dLoss/dOutput."""
        gw = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        g = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = acts[i]
            gw[i] = a_in.T @ g
            gb[i] = g.sum(axis=0)
            if i > 0:
                g = g @ self.weights[i].T
                g = g * (acts[i] > 0.0)
        return gw, gb

    def copy(self) -> "DenseNet":
        return DenseNet(self.dims, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat_params(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    def param_hash(self) -> str:
        h = hashlib.sha256()
        for w, b in zip(self.weights, self.biases):
            h.update(np.ascontiguousarray(w, dtype="<f8").tobytes())
            h.update(np.ascontiguousarray(b, dtype="<f8").tobytes())
        return h.hexdigest()

    def load_state(self, other: "DenseNet") -> None:
        """Copy parameters from ``other`` in place."""
        for w, b, w2, b2 in zip(self.weights, self.biases, other.weights, other.biases):
            w[...] = w2
            b[...] = b2


def param_count(dims) -> int:
    return sum((a + 1) * b for a, b in zip(dims[:-1], dims[1:]))


def init_net(dims, seed: int, check_io: bool = True) -> DenseNet:
    """He-normal weights, zero biases.

    With ``check_io`` the first and last widths must be 16 and 28.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ConfigurationError(f"invalid layer dims {dims}")
    if check_io and (dims[0] != STATE_DIM or dims[-1] != N_ACTIONS):
        raise ConfigurationError(f"dims must start with {STATE_DIM} and end with {N_ACTIONS}, got {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return DenseNet(dims, weights, biases)


# --------------------------------------------------------------------------
# softmax and KL distillation loss


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_temp(q: np.ndarray, tau: float = 1.0) -> np.ndarray:
    """Softmax of ``q / tau`` along the last axis."""
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    z = np.asarray(q, dtype=float) / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def kl_loss(q_teacher: np.ndarray, q_student: np.ndarray, tau: float):
    """KL(softmax(qT / tau) || softmax(qS)) and its gradient w.r.t. ``qS``.

    Works row-wise on ``(..., A)`` arrays; the loss has the leading shape
    (a float for single vectors). The teacher side is a constant target.
    """
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    log_p = _log_softmax(np.asarray(q_teacher, dtype=float) / tau)
    log_s = _log_softmax(np.asarray(q_student, dtype=float))
    p = np.exp(log_p)
    loss = (p * (log_p - log_s)).sum(axis=-1)
    grad = np.exp(log_s) - p
    if loss.ndim == 0:
        loss = float(loss)
    return loss, grad


# --------------------------------------------------------------------------
# optimisation


class Adam:
    """Adaptive-moment optimizer state for one :class:`DenseNet`."""

    def __init__(self, net: DenseNet, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in _params(net)]
        self.v = [np.zeros_like(p) for p in _params(net)]

    def step(self, net: DenseNet, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * np.sqrt(1.0 - b2**self.t) / (1.0 - b1**self.t)
        for p, g, m, v in zip(_params(net), grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= lr_t * m / (np.sqrt(v) + self.eps)


def _params(net: DenseNet):
    return [*net.weights, *net.biases]


def train_step(net: DenseNet, x: np.ndarray, loss_fn, optim: Adam) -> float:
    """One gradient step.

    ``loss_fn(q)`` maps the batch output to ``(mean_loss, dmean_loss/dq)``.
    Returns the batch loss evaluated before the update.
    """
    q, acts = net.forward_cache(x)
    loss, grad_q = loss_fn(q)
    if not np.isfinite(loss) or not np.all(np.isfinite(grad_q)):
        raise TrainingError(
            f"non-finite loss {loss!r} at optimizer step {optim.t} "
            f"(max |q| = {np.nanmax(np.abs(q)):.3g})"
        )
    gw, gb = net.backward(acts, grad_q)
    optim.step(net, [*gw, *gb])
    return float(loss)


def kl_batch_loss(q_teacher: np.ndarray, tau: float):
    """Mean KL loss over a batch, as a ``loss_fn`` for :func:`train_step`."""

    def fn(q):
        loss, grad = kl_loss(q_teacher, q, tau)
        n = q.shape[0]
        return float(loss.mean()), grad / n

    return fn


# --------------------------------------------------------------------------
# model files: magic, u32 version, u32 n_dims, u32 dims..., then f64 params
# (per layer: weights row-major then biases), all little-endian


def save_net(net: DenseNet, path) -> None:
    header = MODEL_MAGIC + struct.pack("<II", MODEL_VERSION, len(net.dims))
    header += struct.pack(f"<{len(net.dims)}I", *net.dims)
    with open(path, "wb") as fh:
        fh.write(header)
        for w, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_net(path, expected_dims=None) -> DenseNet:
    data = Path(path).read_bytes()
    if data[:4] != MODEL_MAGIC:
        raise ModelFileError(f"{path}: bad magic at offset 0")
    if len(data) < 12:
        raise ModelFileError(f"{path}: truncated header at offset {len(data)}")
    version, n_dims = struct.unpack_from("<II", data, 4)
    if version != MODEL_VERSION:
        raise ModelFileError(f"{path}: unsupported version {version} at offset 4")
    off = 12
    if n_dims < 2 or len(data) < off + 4 * n_dims:
        raise ModelFileError(f"{path}: bad layer count {n_dims} at offset 8")
    dims = struct.unpack_from(f"<{n_dims}I", data, off)
    off += 4 * n_dims
    if expected_dims is not None and tuple(expected_dims) != tuple(dims):
        raise ModelFileError(f"{path}: dims {dims} at offset 12 do not match expected {tuple(expected_dims)}")
    expected = off + 8 * param_count(dims)
    if len(data) != expected:
        raise ModelFileError(f"{path}: size {len(data)} != {expected}; payload starts at offset {off}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = np.frombuffer(data, dtype="<f8", count=fan_in * fan_out, offset=off).reshape(fan_in, fan_out)
        off += 8 * w.size
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=off)
        off += 8 * b.size
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    return DenseNet(dims, weights, biases)

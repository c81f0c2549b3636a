"""Small dense ReLU networks with exact backpropagation and Adam.

All arithmetic is float64. Parameters are held in one flat vector per
network (see :mod:`curiopath.kernels` for the layout), which keeps the
optimiser, snapshots and the compiled kernels trivially in sync.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels

HEADS = ("identity", "softmax")

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


def n_params(dims) -> int:
    dims = np.asarray(dims, dtype=np.int64)
    return int(np.sum(dims[:-1] * dims[1:] + dims[1:]))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass
class Mlp:
    """Feed-forward network: ReLU hidden layers, identity or softmax head.

    Attributes
    ----------
    dims : ndarray of int64
        Layer widths ``(input, hidden..., output)``.
    params : ndarray of float64
        Flat weights and biases.
    head : {"identity", "softmax"}
        Output transform applied by :meth:`forward`.
    """

    dims: np.ndarray
    params: np.ndarray
    head: str = "identity"

    def __post_init__(self):
        self.dims = np.ascontiguousarray(self.dims, dtype=np.int64)
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.dims.ndim != 1 or self.dims.size < 2 or np.any(self.dims < 1):
            raise ValueError(f"invalid layer widths {self.dims.tolist()}")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if self.params.shape != (n_params(self.dims),):
            raise ValueError(
                f"expected {n_params(self.dims)} parameters, got {self.params.shape}"
            )

    @classmethod
    def create(cls, dims, head: str = "identity", rng: np.random.Generator | None = None) -> "Mlp":
        """Glorot-uniform weights and zero biases."""
        rng = np.random.default_rng() if rng is None else rng
        dims = np.asarray(dims, dtype=np.int64)
        chunks = []
        for din, dout in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / (din + dout))
            chunks.append(rng.uniform(-limit, limit, size=din * dout))
            chunks.append(np.zeros(dout))
        return cls(dims, np.concatenate(chunks), head)

    @classmethod
    def zeros(cls, dims, head: str = "identity") -> "Mlp":
        return cls(np.asarray(dims), np.zeros(n_params(dims)), head)

    @property
    def n_inputs(self) -> int:
        return int(self.dims[0])

    @property
    def n_outputs(self) -> int:
        return int(self.dims[-1])

    def layer(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        """Views ``(weights, bias)`` of one layer into the flat vector."""
        off = 0
        for l in range(index):
            off += int(self.dims[l] * self.dims[l + 1] + self.dims[l + 1])
        din, dout = int(self.dims[index]), int(self.dims[index + 1])
        w = self.params[off : off + din * dout].reshape(din, dout)
        b = self.params[off + din * dout : off + din * dout + dout]
        return w, b

    def _batch(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x2 = np.ascontiguousarray(x.reshape(1, -1) if single else x)
        if x2.ndim != 2 or x2.shape[1] != self.dims[0]:
            raise ValueError(f"input width {x2.shape[-1]} does not match {self.dims[0]}")
        return x2, single

    def logits(self, x) -> np.ndarray:
        """Pre-head output."""
        x2, single = self._batch(x)
        out, _ = kernels.mlp_forward(self.params, self.dims, x2)
        return out[0] if single else out

    def forward(self, x) -> np.ndarray:
        """Output after the head; accepts a vector or a ``(batch, n_in)`` array."""
        z = self.logits(x)
        return softmax(z) if self.head == "softmax" else z

    def forward_cached(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Batch logits plus the activation buffer needed by :meth:`backward_cached`."""
        x2, _ = self._batch(x)
        return kernels.mlp_forward(self.params, self.dims, x2)

    def backward_cached(self, acts: np.ndarray, grad_logits) -> np.ndarray:
        grad_logits = np.ascontiguousarray(grad_logits, dtype=np.float64)
        if grad_logits.ndim != 2 or grad_logits.shape[1] != self.dims[-1]:
            raise ValueError("upstream gradient has the wrong shape")
        return kernels.mlp_backward(self.params, self.dims, acts, grad_logits)

    def backward(self, x, grad_logits) -> np.ndarray:
        """Gradient of a loss w.r.t. every parameter.

        ``grad_logits`` is the loss gradient w.r.t. the pre-head output, one
        row per input row. The result is summed over the batch and has the
        flat parameter layout. ReLU's subgradient at zero is taken as zero.
        """
        x2, single = self._batch(x)
        g = np.asarray(grad_logits, dtype=np.float64)
        if single:
            g = g.reshape(1, -1)
        if g.shape[0] != x2.shape[0]:
            raise ValueError("batch sizes of input and upstream gradient differ")
        _, acts = kernels.mlp_forward(self.params, self.dims, x2)
        return self.backward_cached(acts, g)

    def copy(self) -> "Mlp":
        return Mlp(self.dims.copy(), self.params.copy(), self.head)


@dataclass
class AdamState:
    """Bias-corrected Adam moments for one flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    learning_rate: float
    step: int = 0
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = EPSILON

    @classmethod
    def for_params(cls, params: np.ndarray, learning_rate: float) -> "AdamState":
        return cls(np.zeros_like(params), np.zeros_like(params), float(learning_rate))

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.learning_rate, self.step,
                         self.beta1, self.beta2, self.eps)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One descent step, in place. Pass the negated gradient to ascend."""
    grads = np.ascontiguousarray(grads, dtype=np.float64)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ValueError("parameter, gradient and moment shapes must match")
    state.step += 1
    kernels.adam_update(params, grads, state.m, state.v, state.step,
                        state.learning_rate, state.beta1, state.beta2, state.eps)
    return params, state


@dataclass
class Trainable:
    """A network bundled with its optimiser state."""

    net: Mlp
    opt: AdamState = field(repr=False)

    @classmethod
    def create(cls, dims, head: str, learning_rate: float, rng: np.random.Generator) -> "Trainable":
        net = Mlp.create(dims, head, rng)
        return cls(net, AdamState.for_params(net.params, learning_rate))

    def apply(self, grads: np.ndarray) -> None:
        adam_step(self.net.params, grads, self.opt)

    def copy(self) -> "Trainable":
        return Trainable(self.net.copy(), self.opt.copy())


def squared_error_grad(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Summed squared error and its gradient w.r.t. ``pred``."""
    diff = pred - target
    return float(np.sum(diff * diff)), 2.0 * diff


def save_snapshot(path, net: Mlp) -> None:
    """Write an architecture header plus the flat parameter vector (``.npz``)."""
    np.savez(Path(path), dims=net.dims, head=np.array(net.head), params=net.params)


def load_snapshot(path) -> Mlp:
    with np.load(Path(path)) as data:
        return Mlp(data["dims"], data["params"], str(data["head"]))

"""Minimal reverse-mode autodiff over dense float64 arrays.

Operations executed inside an active :class:`Tape` are recorded together with
a local backward rule; ``tape.backward(loss)`` replays the rules in reverse.
Outside a tape, operations only compute values, which is how evaluation runs.

    with Tape() as tape:
        loss = mse(mlp(x), target)
    tape.backward(loss)
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, OptimizerError

_local = threading.local()


class Tensor:
    """Dense array with a gradient slot of identical shape."""

    __slots__ = ("values", "grad", "requires_grad", "name")

    def __init__(self, values, requires_grad=False, name=None):
        self.values = np.array(values, dtype=np.float64)
        self.grad = np.zeros_like(self.values)
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.values)

    def item(self) -> float:
        return float(self.values)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class _Record:
    inputs: tuple
    output: Tensor
    backward: Callable[[np.ndarray], None]


@dataclass
class Tape:
    """Ordered record of executed operations for one optimization step."""

    records: list = field(default_factory=list)

    def __enter__(self):
        stack = _tape_stack()
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False

    def backward(self, loss: Tensor):
        if loss.values.size != 1:
            raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
        loss.grad = np.ones_like(loss.values)
        for rec in reversed(self.records):
            if rec.output.requires_grad:
                rec.backward(rec.output.grad)

    def clear(self):
        self.records.clear()

    def __len__(self):
        return len(self.records)


def _tape_stack():
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def current_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


def _emit(values, inputs: Sequence[Tensor], backward) -> Tensor:
    needs_grad = any(t.requires_grad for t in inputs)
    out = Tensor(values, requires_grad=needs_grad)
    tape = current_tape()
    if needs_grad and tape is not None:
        tape.records.append(_Record(tuple(inputs), out, backward))
    return out


def _accumulate(t: Tensor, g):
    if t.requires_grad:
        t.grad = t.grad + g


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- operations ---------------------------------------------------------------


def matmul_add(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight + bias`` with the bias broadcast over rows."""
    if x.values.ndim != 2:
        raise DimensionError(f"input must be 2-D [N x d_in], got shape {x.shape}")
    if weight.values.ndim != 2 or weight.shape[0] != x.shape[1]:
        raise DimensionError(
            f"weights shape {weight.shape} incompatible with input shape {x.shape}"
        )
    if bias.shape != (weight.shape[1],):
        raise DimensionError(
            f"bias shape {bias.shape} incompatible with weights shape {weight.shape}"
        )

    def backward(g):
        _accumulate(x, g @ weight.values.T)
        _accumulate(weight, x.values.T @ g)
        _accumulate(bias, g.sum(axis=0))

    return _emit(x.values @ weight.values + bias.values, (x, weight, bias), backward)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.values)

    def backward(g):
        _accumulate(x, g * (1.0 - y * y))

    return _emit(y, (x,), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _emit(a.values + b.values, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"sub: shapes {a.shape} and {b.shape} differ")

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _emit(a.values - b.values, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        _accumulate(a, c * g)

    return _emit(c * a.values, (a,), backward)


def total(a: Tensor) -> Tensor:
    """Sum of all elements (scalar)."""

    def backward(g):
        _accumulate(a, np.broadcast_to(g, a.shape))

    return _emit(a.values.sum(), (a,), backward)


def gather_rows(table: Tensor, indices) -> Tensor:
    """Rows ``table[indices]``; gradients scatter-add back into the table."""
    idx = np.asarray(indices, dtype=np.intp)

    def backward(g):
        if table.requires_grad:
            acc = np.zeros_like(table.values)
            np.add.at(acc, idx, g)
            table.grad = table.grad + acc

    return _emit(table.values[idx], (table,), backward)


def mse(pred: Tensor, target: Tensor) -> Tensor:
    """Mean over all elements of the squared difference."""
    if pred.shape != target.shape:
        raise DimensionError(f"mse: pred shape {pred.shape} != target shape {target.shape}")
    diff = pred.values - target.values
    n = diff.size

    def backward(g):
        d = (2.0 / n) * diff * g
        _accumulate(pred, d)
        _accumulate(target, -d)

    return _emit(np.mean(diff * diff), (pred, target), backward)


def stop_gradient(x: Tensor) -> Tensor:
    """Identity forward; contributes no gradient to ``x``."""
    # Output is a fresh constant: never recorded, so nothing flows back.
    return Tensor(x.values, requires_grad=False)


# -- MLP --------------------------------------------------------------------

ACTIVATIONS = ("tanh", "identity")


@dataclass
class Layer:
    weight: Tensor
    bias: Tensor
    activation: str


class Mlp:
    """Fully connected network; tanh hidden layers, identity output by default."""

    def __init__(self, widths: Sequence[int], rng: np.random.Generator,
                 activations: Sequence[str] | None = None, name: str = "mlp"):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise DimensionError(f"{name}: need at least two positive widths, got {widths}")
        n_layers = len(widths) - 1
        if activations is None:
            activations = ["tanh"] * (n_layers - 1) + ["identity"]
        if len(activations) != n_layers:
            raise DimensionError(
                f"{name}: {len(activations)} activations for {n_layers} layers"
            )
        self.name = name
        self.widths = widths
        self.layers: list[Layer] = []
        for i, (fan_in, fan_out, act) in enumerate(zip(widths[:-1], widths[1:], activations)):
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            self.layers.append(Layer(
                Tensor(w, requires_grad=True, name=f"{name}.{i}.weight"),
                Tensor(np.zeros(fan_out), requires_grad=True, name=f"{name}.{i}.bias"),
                act,
            ))

    @property
    def params(self) -> list[Tensor]:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def __call__(self, x: Tensor) -> Tensor:
        h = _as_tensor(x)
        for layer in self.layers:
            h = matmul_add(h, layer.weight, layer.bias)
            if layer.activation == "tanh":
                h = tanh(h)
        return h

    def state_dict(self) -> dict:
        return {
            "widths": list(self.widths),
            "activations": [l.activation for l in self.layers],
            "weights": [l.weight.values.tolist() for l in self.layers],
            "biases": [l.bias.values.tolist() for l in self.layers],
        }

    def load_state_dict(self, state: dict):
        if list(state["widths"]) != self.widths:
            raise DimensionError(
                f"{self.name}: stored widths {state['widths']} != model widths {self.widths}"
            )
        for layer, act, w, b in zip(self.layers, state["activations"],
                                    state["weights"], state["biases"]):
            w, b = np.array(w, dtype=np.float64), np.array(b, dtype=np.float64)
            if w.shape != layer.weight.shape or b.shape != layer.bias.shape:
                raise DimensionError(f"{self.name}: stored layer shape mismatch")
            layer.weight.values, layer.bias.values, layer.activation = w, b, act


# -- optimizer --------------------------------------------------------------


class Adam:
    """Adam with bias-corrected moments over a fixed list of tensors."""

    def __init__(self, params: Sequence[Tensor], lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.betas = (float(betas[0]), float(betas[1]))
        self.eps = float(eps)
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        for i, p in enumerate(self.params):
            if not np.all(np.isfinite(p.grad)):
                raise OptimizerError(f"non-finite gradient for parameter {p.name or i!r}")
        self.t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            # rebind rather than mutate so earlier snapshots keep their values
            p.values = p.values - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self) -> dict:
        return {
            "t": self.t,
            "m": [m.tolist() for m in self.m],
            "v": [v.tolist() for v in self.v],
        }

    def load_state_dict(self, state: dict):
        m = [np.array(a, dtype=np.float64).reshape(p.shape) for a, p in zip(state["m"], self.params)]
        v = [np.array(a, dtype=np.float64).reshape(p.shape) for a, p in zip(state["v"], self.params)]
        if len(m) != len(self.params) or len(v) != len(self.params):
            raise DimensionError("optimizer state does not match parameter list")
        self.m, self.v, self.t = m, v, int(state["t"])


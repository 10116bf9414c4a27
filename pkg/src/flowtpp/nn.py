"""Minimal reverse-mode autodiff core: tensors, layers, Adam.

Everything is float64 numpy. Gradients are computed over an explicit tape
(the object graph of Tensor parents) with no graph optimization. NaN/Inf is
a checked failure: `backward` refuses a non-finite loss, and `adam_step`
refuses non-finite gradients or updates, so numerical blowups surface as
NumericalError instead of propagating silently.
"""

from __future__ import annotations

import json
from typing import Callable, Optional

import numpy as np

from .errors import NumericalError, ValidationError

CHECKPOINT_VERSION = 1


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad over axes that were broadcast so it matches `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Node in the autodiff tape: float64 data, optional grad, parent links."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=(),
                 backward: Optional[Callable[[], None]] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    def _accum(self, grad: np.ndarray):
        grad = _unbroadcast(grad, self.data.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    # ---- arithmetic -------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data + other.data, parents=(self, other))

        def backward():
            self._accum(out.grad)
            other._accum(out.grad)

        out._backward = backward if out.requires_grad else None
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, parents=(self,))

        def backward():
            self._accum(-out.grad)

        out._backward = backward if out.requires_grad else None
        return out

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data * other.data, parents=(self, other))

        def backward():
            self._accum(out.grad * other.data)
            other._accum(out.grad * self.data)

        out._backward = backward if out.requires_grad else None
        return out

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data @ other.data, parents=(self, other))

        def backward():
            self._accum(out.grad @ other.data.T)
            other._accum(self.data.T @ out.grad)

        out._backward = backward if out.requires_grad else None
        return out

    # ---- nonlinearities ---------------------------------------------------

    def tanh(self):
        val = np.tanh(self.data)
        out = Tensor(val, parents=(self,))

        def backward():
            self._accum(out.grad * (1.0 - val * val))

        out._backward = backward if out.requires_grad else None
        return out

    def sigmoid(self):
        val = 1.0 / (1.0 + np.exp(-self.data))
        out = Tensor(val, parents=(self,))

        def backward():
            self._accum(out.grad * val * (1.0 - val))

        out._backward = backward if out.requires_grad else None
        return out

    def exp(self):
        val = np.exp(self.data)
        out = Tensor(val, parents=(self,))

        def backward():
            self._accum(out.grad * val)

        out._backward = backward if out.requires_grad else None
        return out

    def log(self):
        out = Tensor(np.log(self.data), parents=(self,))

        def backward():
            self._accum(out.grad / self.data)

        out._backward = backward if out.requires_grad else None
        return out

    def square(self):
        out = Tensor(self.data * self.data, parents=(self,))

        def backward():
            self._accum(out.grad * 2.0 * self.data)

        out._backward = backward if out.requires_grad else None
        return out

    # ---- reductions / reshaping ------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), parents=(self,))

        def backward():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accum(np.broadcast_to(g, self.data.shape))

        out._backward = backward if out.requires_grad else None
        return out

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def take_rows(self, idx: np.ndarray):
        """Row gather (embedding lookup); backward scatter-adds."""
        idx = np.asarray(idx, dtype=np.int64)
        out = Tensor(self.data[idx], parents=(self,))

        def backward():
            acc = np.zeros_like(self.data)
            np.add.at(acc, idx, out.grad)
            self._accum(acc)

        out._backward = backward if out.requires_grad else None
        return out

    def select_columns(self, idx: np.ndarray):
        """Per-row column pick: out[i] = self[i, idx[i]]."""
        idx = np.asarray(idx, dtype=np.int64)
        rows = np.arange(self.data.shape[0])
        out = Tensor(self.data[rows, idx], parents=(self,))

        def backward():
            acc = np.zeros_like(self.data)
            np.add.at(acc, (rows, idx), out.grad)
            self._accum(acc)

        out._backward = backward if out.requires_grad else None
        return out


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def concat(tensors, axis: int = 1) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis),
                 parents=tuple(parts))
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward():
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * out.grad.ndim
            sl[axis] = slice(lo, hi)
            part._accum(out.grad[tuple(sl)])

    out._backward = backward if out.requires_grad else None
    return out


def log_softmax(t: Tensor, axis: int = 1) -> Tensor:
    # max-shift is a detached constant; the gradient identity is unaffected
    shift = t - Tensor(t.data.max(axis=axis, keepdims=True))
    return shift - shift.exp().sum(axis=axis, keepdims=True).log()


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Plain-numpy softmax for inference paths (no tape)."""
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _toposort(root: Tensor):
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor):
    """Reverse-mode sweep from a scalar loss; grads accumulate on leaves."""
    if loss.data.size != 1:
        raise ValidationError(f"backward needs a scalar, got shape {loss.shape}")
    if not np.isfinite(loss.data).all():
        raise NumericalError("non-finite loss; aborting backward")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(_toposort(loss)):
        if node._backward is not None:
            node._backward()


class ParamStore:
    """Named parameter tensors plus per-parameter Adam state."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.moment1: dict[str, np.ndarray] = {}
        self.moment2: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, path: str, data) -> Tensor:
        if path in self.params:
            raise ValidationError(f"duplicate parameter path {path!r}")
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=True)
        self.params[path] = t
        self.moment1[path] = np.zeros_like(t.data)
        self.moment2[path] = np.zeros_like(t.data)
        return t

    def __getitem__(self, path: str) -> Tensor:
        try:
            return self.params[path]
        except KeyError:
            raise ValidationError(f"unknown parameter path {path!r}") from None

    def __contains__(self, path: str) -> bool:
        return path in self.params

    def zero_grads(self):
        for t in self.params.values():
            t.grad = None

    def state_dict(self) -> dict:
        return {
            path: {"shape": list(t.data.shape), "data": t.data.ravel().tolist()}
            for path, t in sorted(self.params.items())
        }

    def load_state(self, state: dict):
        missing = sorted(set(self.params) - set(state))
        extra = sorted(set(state) - set(self.params))
        if missing or extra:
            raise ValidationError(
                f"parameter mismatch: missing {missing}, unexpected {extra}"
            )
        for path, t in self.params.items():
            entry = state[path]
            shape = tuple(entry["shape"])
            if shape != t.data.shape:
                raise ValidationError(
                    f"shape mismatch for {path!r}: checkpoint {shape}, model {t.data.shape}"
                )
            flat = np.asarray(entry["data"], dtype=np.float64)
            if flat.size != t.data.size:
                raise ValidationError(f"data length mismatch for {path!r}")
            t.data = flat.reshape(shape)


def mlp_forward(params: ParamStore, input, layer_sizes, activation: str = "tanh",
                prefix: str = "mlp") -> Tensor:
    """Affine+activation stack; the final layer is linear.

    Expects parameters at `{prefix}.{i}.W` / `{prefix}.{i}.b` with shapes
    (layer_sizes[i], layer_sizes[i+1]) and (layer_sizes[i+1],).
    """
    if activation != "tanh":
        raise ValidationError(f"unsupported activation {activation!r}")
    h = as_tensor(input)
    n_layers = len(layer_sizes) - 1
    for i in range(n_layers):
        w = params[f"{prefix}.{i}.W"]
        b = params[f"{prefix}.{i}.b"]
        if h.data.shape[-1] != w.data.shape[0]:
            raise ValidationError(
                f"layer {prefix}.{i}: input dim {h.data.shape[-1]} "
                f"!= weight rows {w.data.shape[0]}"
            )
        h = h @ w + b
        if i < n_layers - 1:
            h = h.tanh()
    return h


def gru_step(params: ParamStore, input, hidden, prefix: str = "gru") -> Tensor:
    """One gated-recurrent update: gates z/r, candidate n, convex blend.

    With all-zero parameters and h=0 the gates sit at 0.5 and the candidate
    at tanh(0)=0, so the new hidden state is exactly 0.
    """
    x = as_tensor(input)
    h = as_tensor(hidden)
    wz, uz, bz = params[f"{prefix}.Wz"], params[f"{prefix}.Uz"], params[f"{prefix}.bz"]
    if x.data.shape[-1] != wz.data.shape[0] or h.data.shape[-1] != uz.data.shape[0]:
        raise ValidationError(
            f"gru {prefix}: input dim {x.data.shape[-1]} / hidden dim "
            f"{h.data.shape[-1]} do not match weights "
            f"({wz.data.shape[0]}, {uz.data.shape[0]})"
        )
    z = (x @ wz + h @ uz + bz).sigmoid()
    r = (x @ params[f"{prefix}.Wr"] + h @ params[f"{prefix}.Ur"]
         + params[f"{prefix}.br"]).sigmoid()
    n = (x @ params[f"{prefix}.Wh"] + (r * h) @ params[f"{prefix}.Uh"]
         + params[f"{prefix}.bh"]).tanh()
    one = Tensor(1.0)
    return (one - z) * h + z * n


def adam_step(store: ParamStore, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps_opt: float = 1e-8):
    """Bias-corrected Adam update in place; grads are zeroed afterwards."""
    for path, t in store.params.items():
        if t.grad is None:
            raise ValidationError(f"missing gradient for parameter {path!r}")
        if not np.isfinite(t.grad).all():
            raise NumericalError(f"non-finite gradient for parameter {path!r}")
    store.step_count += 1
    t_step = store.step_count
    for path, tensor in store.params.items():
        g = tensor.grad
        m = store.moment1[path]
        v = store.moment2[path]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t_step)
        v_hat = v / (1.0 - beta2 ** t_step)
        tensor.data = tensor.data - lr * m_hat / (np.sqrt(v_hat) + eps_opt)
        if not np.isfinite(tensor.data).all():
            raise NumericalError(f"non-finite value in parameter {path!r} after update")
    store.zero_grads()


def save_checkpoint(path, config: dict, store: ParamStore):
    doc = {
        "version": CHECKPOINT_VERSION,
        "config": config,
        "params": store.state_dict(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> tuple:
    """Returns (config dict, raw params state); shape checks happen on bind."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"checkpoint {path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("version") != CHECKPOINT_VERSION:
        raise ValidationError(
            f"checkpoint {path}: unsupported version {doc.get('version')!r}"
        )
    if "config" not in doc or "params" not in doc:
        raise ValidationError(f"checkpoint {path}: missing config or params")
    return doc["config"], doc["params"]

"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

The engine is deliberately small: a :class:`Tensor` wraps a 2-D (or 1-D /
scalar) float64 array, and a :class:`Tape` records every differentiable
operation executed while it is active.  Calling :func:`backward` on a scalar
loss replays the tape once in reverse execution order (which is a valid
reverse topological order, since an operation can only consume tensors that
already exist) and accumulates gradients additively into every tensor that
participates in the graph.

Broadcasting is intentionally restricted to the one pattern the model needs:
a row vector (shape ``(D,)``) against a matrix (shape ``(N, D)``).  Anything
fancier raises.  NaNs are never trapped; they propagate through forward and
backward values unchanged.

A tape and the tensors recorded on it belong to a single thread; nothing in
here is synchronized.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "tensor",
    "matmul",
    "transpose",
    "add",
    "sub",
    "mul",
    "sigmoid",
    "scale_shift",
    "softmax_rows",
    "tensor_sum",
    "gather_rows",
    "slice_cols",
    "concat_cols",
    "silu",
    "sum_squared_error",
    "zero_grad",
]

# The tape currently recording operations, or None when grads are not needed
# (e.g. during sampling).  One tape at a time per process; see module note on
# thread confinement.
_ACTIVE_TAPE: "Tape | None" = None


def _check_float64(arr: np.ndarray) -> np.ndarray:
    if arr.dtype != np.float64:
        raise TypeError(
            f"tensors are float64 only, got dtype {arr.dtype}; cast explicitly"
        )
    return arr


class Tensor:
    """A float64 array plus gradient bookkeeping.

    ``grad`` is ``None`` until a backward pass deposits something, after which
    it always has the same shape as ``data``.  Gradients accumulate across
    backward calls; use :func:`zero_grad` between optimizer steps.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype == np.float64:
            pass
        elif arr.dtype.kind in ("i", "u") and not isinstance(data, np.ndarray):
            # Plain python ints in a literal list are a convenience, not a
            # silent cast of a materialized array.
            arr = arr.astype(np.float64)
        else:
            raise TypeError(
                f"tensors are float64 only, got dtype {arr.dtype}; cast explicitly"
            )
        if arr.ndim > 2:
            raise ValueError(f"tensors are at most 2-D, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar.  All arithmetic routes through the module-level ops so
    # that recording happens in exactly one place.
    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    @property
    def T(self):
        return transpose(self)


def tensor(data, requires_grad: bool = False) -> Tensor:
    """Convenience constructor mirroring ``numpy.asarray`` semantics."""
    return Tensor(data, requires_grad=requires_grad)


class Tape:
    """Ordered record of executed differentiable operations.

    Used as a context manager::

        with Tape() as tape:
            loss = sum_squared_error(model(x), target)
        tape.backward(loss)

    Each entry holds the output tensor, the input tensors, and a closure that
    maps the output gradient to input gradients.  Replaying the entries in
    reverse visits each recorded node exactly once.
    """

    def __init__(self):
        self._entries = []
        self._closed = False

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a Tape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        self._closed = True
        return False

    def __len__(self):
        return len(self._entries)

    def record(self, out: Tensor, inputs, backward_fn):
        self._entries.append((out, tuple(inputs), backward_fn))

    def backward(self, loss: Tensor):
        """Populate ``.grad`` on every tensor reachable from ``loss``.

        ``loss`` must be a scalar (shape ``()`` or size 1) produced while this
        tape was active.
        """
        if loss.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not any(out is loss for out, _, _ in self._entries):
            raise ValueError("loss was not recorded on this tape")
        # Per-call gradient buffers keyed by tensor identity, so that stale
        # .grad contents from earlier passes never feed the chain rule.
        flowing: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for out, inputs, backward_fn in reversed(self._entries):
            gout = flowing.get(id(out))
            if gout is None:
                continue  # dead branch: nothing downstream used this value
            for inp, gin in zip(inputs, backward_fn(gout)):
                if gin is None or not inp.requires_grad:
                    continue
                buf = flowing.get(id(inp))
                if buf is None:
                    # Copy unconditionally: a closure may hand the same array
                    # (or a view of the output gradient) to several inputs.
                    flowing[id(inp)] = np.array(gin, dtype=np.float64)
                else:
                    buf += gin
        # Deposit: gradients accumulate additively across backward calls.
        seen = set()
        for out, inputs, _ in self._entries:
            for t in (out,) + inputs:
                if id(t) in seen:
                    continue
                seen.add(id(t))
                g = flowing.get(id(t))
                if g is None or not t.requires_grad:
                    continue
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)
                t.grad += g


def backward(loss: Tensor, tape: Tape) -> None:
    """Functional alias for :meth:`Tape.backward`."""
    tape.backward(loss)


def zero_grad(params) -> None:
    """Reset ``.grad`` to None on an iterable (or dict) of tensors."""
    values = params.values() if isinstance(params, dict) else params
    for p in values:
        p.grad = None


def _coerce(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (float, int)):
        return Tensor(np.float64(x))
    return Tensor(x)


def _record(out: Tensor, inputs, backward_fn) -> Tensor:
    out.requires_grad = any(t.requires_grad for t in inputs)
    if _ACTIVE_TAPE is not None and out.requires_grad:
        _ACTIVE_TAPE.record(out, inputs, backward_fn)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors."""
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(
            f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(
            f"matmul inner dimensions disagree: {a.data.shape} @ {b.data.shape}"
        )
    out = Tensor(a.data @ b.data)

    def back(g):
        return g @ b.data.T, a.data.T @ g

    return _record(out, (a, b), back)


def transpose(a: Tensor) -> Tensor:
    a = _coerce(a)
    if a.data.ndim != 2:
        raise ValueError(f"transpose expects a 2-D tensor, got shape {a.data.shape}")
    out = Tensor(a.data.T.copy())

    def back(g):
        return (g.T,)

    return _record(out, (a,), back)


def _broadcast_pair(a: Tensor, b: Tensor):
    """Classify the supported elementwise shape pairs.

    Returns 'same', 'row' (b is a row vector against matrix a), or raises.
    Scalars (0-d) against anything are treated as 'scalar'.
    """
    sa, sb = a.data.shape, b.data.shape
    if sa == sb:
        return "same"
    if b.data.ndim == 0 or a.data.ndim == 0:
        return "scalar"
    if a.data.ndim == 2 and sb == (sa[1],):
        return "row"
    raise ValueError(
        f"unsupported broadcast {sa} vs {sb}: only identical shapes, scalars, "
        f"or a row vector against a matrix are allowed"
    )


def _reduce_to(g: np.ndarray, target: Tensor, mode: str, side: str) -> np.ndarray:
    """Sum an output-shaped gradient down to the shape of one operand."""
    if mode == "same" or g.shape == target.data.shape:
        return g
    if mode == "row":
        return g.sum(axis=0)
    # scalar operand
    return np.asarray(g.sum())


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    mode = _broadcast_pair(a, b)
    out = Tensor(a.data + b.data)

    def back(g):
        return _reduce_to(g, a, mode, "a"), _reduce_to(g, b, mode, "b")

    return _record(out, (a, b), back)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    mode = _broadcast_pair(a, b)
    out = Tensor(a.data - b.data)

    def back(g):
        return _reduce_to(g, a, mode, "a"), _reduce_to(-g, b, mode, "b")

    return _record(out, (a, b), back)


def mul(a, b) -> Tensor:
    """Hadamard product (with row-vector or scalar broadcasting)."""
    a, b = _coerce(a), _coerce(b)
    mode = _broadcast_pair(a, b)
    out = Tensor(a.data * b.data)

    def back(g):
        return _reduce_to(g * b.data, a, mode, "a"), _reduce_to(g * a.data, b, mode, "b")

    return _record(out, (a, b), back)


def sigmoid(a: Tensor) -> Tensor:
    """Numerically stable logistic function, elementwise."""
    a = _coerce(a)
    x = a.data
    out_data = np.empty_like(x)
    pos = x >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out_data[~pos] = ex / (1.0 + ex)
    out = Tensor(out_data)

    def back(g):
        return (g * out_data * (1.0 - out_data),)

    return _record(out, (a,), back)


def scale_shift(x: Tensor, scale: Tensor, shift: Tensor) -> Tensor:
    """Gated residual modulation: ``x * scale + x + shift``.

    Composed from primitive ops, so it records and differentiates for free.
    With ``scale == shift == 0`` this is the identity.
    """
    return add(add(mul(x, scale), x), shift)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax of a 2-D tensor with max subtraction for stability."""
    a = _coerce(a)
    if a.data.ndim != 2:
        raise ValueError(f"softmax_rows expects a 2-D tensor, got {a.data.shape}")
    z = a.data - a.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    p = ez / ez.sum(axis=1, keepdims=True)
    out = Tensor(p)

    def back(g):
        # dL/dx = p * (g - sum(g * p, rowwise))
        dot = (g * p).sum(axis=1, keepdims=True)
        return (p * (g - dot),)

    return _record(out, (a,), back)


def tensor_sum(a: Tensor) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    a = _coerce(a)
    out = Tensor(np.asarray(a.data.sum()))

    def back(g):
        return (np.broadcast_to(g, a.data.shape).copy() if a.data.ndim else g,)

    return _record(out, (a,), back)


def gather_rows(a: Tensor, indices: np.ndarray) -> Tensor:
    """Select rows ``a[indices]``; the backward pass scatter-adds.

    Gradients flow only into the selected rows, which is exactly what a
    codebook lookup needs.
    """
    a = _coerce(a)
    idx = np.asarray(indices)
    if a.data.ndim != 2:
        raise ValueError("gather_rows expects a 2-D tensor")
    if idx.ndim != 1 or idx.dtype.kind not in ("i", "u"):
        raise ValueError("indices must be a 1-D integer array")
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise IndexError(
            f"row index out of range [0, {a.data.shape[0]}): {idx.min()}..{idx.max()}"
        )
    out = Tensor(a.data[idx])

    def back(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _record(out, (a,), back)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous column slice ``a[:, start:stop]`` of a 2-D tensor."""
    a = _coerce(a)
    if a.data.ndim != 2:
        raise ValueError("slice_cols expects a 2-D tensor")
    if not (0 <= start < stop <= a.data.shape[1]):
        raise ValueError(
            f"column slice [{start}:{stop}] out of range for shape {a.data.shape}"
        )
    out = Tensor(a.data[:, start:stop].copy())

    def back(g):
        ga = np.zeros_like(a.data)
        ga[:, start:stop] = g
        return (ga,)

    return _record(out, (a,), back)


def concat_cols(parts) -> Tensor:
    """Concatenate 2-D tensors along columns (inverse of head splitting)."""
    parts = [_coerce(p) for p in parts]
    if not parts:
        raise ValueError("concat_cols needs at least one tensor")
    rows = parts[0].data.shape[0]
    for p in parts:
        if p.data.ndim != 2 or p.data.shape[0] != rows:
            raise ValueError("concat_cols operands must be 2-D with equal row counts")
    widths = [p.data.shape[1] for p in parts]
    out = Tensor(np.concatenate([p.data for p in parts], axis=1))
    offsets = np.concatenate([[0], np.cumsum(widths)])

    def back(g):
        return tuple(
            g[:, offsets[i]:offsets[i + 1]] for i in range(len(parts))
        )

    return _record(out, tuple(parts), back)


def silu(a: Tensor) -> Tensor:
    """Smooth gated activation ``x * sigmoid(x)``, built from primitives."""
    return mul(a, sigmoid(a))


def sum_squared_error(pred: Tensor, target: Tensor) -> Tensor:
    """``sum((pred - target)^2)`` as a scalar tensor."""
    d = sub(pred, target)
    return tensor_sum(mul(d, d))

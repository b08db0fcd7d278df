"""Reverse-mode automatic differentiation over dense float64 arrays.

Forward operations build :class:`Tensor` values and, while a
:class:`Tape` is active, append one entry per operation. Entries are
appended in execution order, so the tape is already topologically
sorted; :func:`backward` replays it once in reverse, accumulating
gradients into every tensor that requires them.

Broadcasting is deliberately narrow: for ``add`` and ``mul`` the smaller
operand's shape must be a trailing suffix of the larger's (a bias of
shape (d,) against activations of shape (batch, seq, d), for example).
Anything else is a shape error, never a silent reshape. Matrix multiply
follows numpy's batched semantics with gradients reduced back onto the
original operand shapes.

Every forward op verifies its output is finite; NaN or inf anywhere is
raised immediately rather than propagated.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .exceptions import NumericError

Array = np.ndarray


class Tape:
    """Execution-ordered record of differentiable operations."""

    def __init__(self) -> None:
        self._entries: list[tuple[Tensor, tuple[Tensor, ...], Callable[[Array], tuple]]] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()

    def __len__(self) -> int:
        return len(self._entries)

    def record(
        self,
        out: "Tensor",
        parents: tuple["Tensor", ...],
        backward_fn: Callable[[Array], tuple],
    ) -> None:
        self._entries.append((out, parents, backward_fn))


_TAPE_STACK: list[Tape] = []


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tensor:
    """A float64 array plus an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False) -> None:
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Array | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; all defined in terms of the module-level ops
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _check_finite(data: Array) -> None:
    # sum-based probe: any nan/inf in the array makes the sum non-finite
    if not math.isfinite(float(np.sum(data))):
        raise NumericError("non-finite value produced by a forward op")


def record_op(
    out_data: Array,
    parents: tuple[Tensor, ...],
    backward_fn: Callable[[Array], tuple],
) -> Tensor:
    """Create the output tensor of an op and register it on the tape.

    ``backward_fn`` receives the upstream gradient and must return one
    gradient array (or None) per parent, in order. This is the extension
    point fused ops (for example an LSTM layer) use as well.
    """
    _check_finite(out_data)
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.record(out, parents, backward_fn)
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(tensor) into ``.grad`` for the whole tape."""
    if tape._consumed:
        raise RuntimeError("tape already consumed by a previous backward pass")
    if loss.data.ndim != 0:
        raise RuntimeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    tape._consumed = True
    loss.grad = np.ones((), dtype=np.float64)
    for out, parents, backward_fn in reversed(tape._entries):
        if out.grad is None:
            continue
        grads = backward_fn(out.grad)
        for parent, g in zip(parents, grads):
            if g is None or not parent.requires_grad:
                continue
            # accumulation always allocates, so aliasing g is harmless
            parent.grad = g if parent.grad is None else parent.grad + g


# ---------------------------------------------------------------------------
# shape helpers


def _suffix_check(a: tuple[int, ...], b: tuple[int, ...]) -> None:
    small, big = (a, b) if len(a) <= len(b) else (b, a)
    if small != big[len(big) - len(small) :]:
        raise ValueError(f"shapes {a} and {b} do not suffix-broadcast")


def _reduce_to(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum out the leading axes broadcasting introduced."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    # matmul-style broadcasting can also stretch size-1 leading dims
    for ax, (g, s) in enumerate(zip(grad.shape, shape)):
        if s == 1 and g != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitive ops


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _suffix_check(a.shape, b.shape)
    out = a.data + b.data

    def back(g: Array):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return record_op(out, (a, b), back)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return record_op(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _suffix_check(a.shape, b.shape)
    out = a.data * b.data

    def back(g: Array):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return record_op(out, (a, b), back)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    ad, bd = a.data, b.data

    if ad.ndim > 2 and bd.ndim == 2:
        # stacked-by-2D: one flat gemm instead of a loop over batch dims
        k = ad.shape[-1]
        flat = ad.reshape(-1, k)
        out = (flat @ bd).reshape(ad.shape[:-1] + (bd.shape[-1],))

        def back(g: Array):
            gf = g.reshape(-1, bd.shape[-1])
            ga = (gf @ bd.T).reshape(ad.shape)
            gb = flat.T @ gf
            return ga, gb

        return record_op(out, (a, b), back)

    out = ad @ bd

    def back(g: Array):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        if ga.shape != a.shape:
            ga = _reduce_to(ga, a.shape)
        if gb.shape != b.shape:
            gb = _reduce_to(gb, b.shape)
        return ga, gb

    return record_op(out, (a, b), back)


def sin(a) -> Tensor:
    a = _as_tensor(a)
    return record_op(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)
    return record_op(out, (a,), lambda g: (g * out,))


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))
    return record_op(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)
    return record_op(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    out = np.maximum(a.data, 0.0)
    return record_op(out, (a,), lambda g: (g * (a.data > 0.0),))


def softmax(a) -> Tensor:
    """Softmax over the last axis, stabilized by max subtraction."""
    a = _as_tensor(a)
    out = a.data - a.data.max(axis=-1, keepdims=True)
    np.exp(out, out=out)
    out /= out.sum(axis=-1, keepdims=True)

    def back(g: Array):
        gx = g * out
        gx -= out * gx.sum(axis=-1, keepdims=True)
        return (gx,)

    return record_op(out, (a,), back)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean and unit variance, then
    apply the learnable elementwise scale and shift."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    if gamma.shape != x.shape[-1:] or beta.shape != x.shape[-1:]:
        raise ValueError("layer_norm scale/shift must match the last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gamma.data + beta.data

    def back(g: Array):
        d = x.shape[-1]
        dxhat = g * gamma.data
        gx = inv / d * (
            d * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        axes = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return record_op(out, (x, gamma, beta), back)


def dropout(x, rate: float, rng: np.random.Generator) -> Tensor:
    """Zero each element with probability ``rate``; survivors are scaled
    by 1/(1-rate). The mask is drawn once and reused by backward. A rate
    of zero is the identity and draws nothing."""
    x = _as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return x
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep) / keep
    return record_op(x.data * mask, (x,), lambda g: (g * mask,))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g: Array):
        return tuple(np.split(g, splits, axis=axis))

    return record_op(out, tuple(tensors), back)


def slice_axis(x, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of ``length`` elements along one axis."""
    x = _as_tensor(x)
    dim = x.data.shape[axis]
    if start < 0 or length < 1 or start + length > dim:
        raise ValueError(f"slice [{start}:{start + length}] out of range for axis of {dim}")
    sl = [np.s_[:]] * x.data.ndim
    sl[axis] = np.s_[start : start + length]
    sl = tuple(sl)

    def back(g: Array):
        full = np.zeros_like(x.data)
        full[sl] = g
        return (full,)

    return record_op(x.data[sl].copy(), (x,), back)


def transpose_last2(x) -> Tensor:
    x = _as_tensor(x)
    out = np.swapaxes(x.data, -1, -2).copy()
    return record_op(out, (x,), lambda g: (np.swapaxes(g, -1, -2),))


def permute_axes(x, axes: tuple[int, ...]) -> Tensor:
    """Reorder all axes; the gradient applies the inverse permutation."""
    x = _as_tensor(x)
    if sorted(axes) != list(range(x.data.ndim)):
        raise ValueError(f"axes {axes!r} is not a permutation of {x.data.ndim} dims")
    inverse = tuple(int(i) for i in np.argsort(axes))
    # copy to contiguous: outputs usually feed matmul, which is slow on views
    out = np.ascontiguousarray(np.transpose(x.data, axes))

    def back(g: Array):
        return (np.ascontiguousarray(np.transpose(g, inverse)),)

    return record_op(out, (x,), back)


def reshape(x, shape: tuple[int, ...]) -> Tensor:
    x = _as_tensor(x)
    out = x.data.reshape(shape)

    def back(g: Array):
        return (g.reshape(x.data.shape),)

    return record_op(out, (x,), back)


def mean_all(x) -> Tensor:
    x = _as_tensor(x)
    n = x.data.size

    def back(g: Array):
        return (np.full_like(x.data, float(g) / n),)

    return record_op(np.asarray(x.data.mean()), (x,), back)


def sum_all(x) -> Tensor:
    x = _as_tensor(x)

    def back(g: Array):
        return (np.full_like(x.data, float(g)),)

    return record_op(np.asarray(x.data.sum()), (x,), back)


def huber_loss(pred: Tensor, target, delta: float = 1.0) -> Tensor:
    """Mean Huber loss: quadratic within ``delta`` of the target,
    linear beyond it."""
    pred, target = _as_tensor(pred), _as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"prediction {pred.shape} vs target {target.shape}")
    if delta <= 0:
        raise ValueError("delta must be positive")
    r = pred.data - target.data
    absr = np.abs(r)
    quad = absr <= delta
    loss = np.where(quad, 0.5 * r * r, delta * (absr - 0.5 * delta))
    n = r.size

    def back(g: Array):
        dr = np.clip(r, -delta, delta) * (float(g) / n)
        return dr, -dr

    return record_op(np.asarray(loss.mean()), (pred, target), back)


# ---------------------------------------------------------------------------
# parameters and the optimizer


class Parameter:
    """A trainable tensor with first/second Adam moment buffers."""

    def __init__(self, data: Array, name: str = "") -> None:
        self.name = name
        self.tensor = Tensor(np.array(data, dtype=np.float64), requires_grad=True)
        self.m = np.zeros_like(self.tensor.data)
        self.v = np.zeros_like(self.tensor.data)

    @property
    def data(self) -> Array:
        return self.tensor.data

    @data.setter
    def data(self, value: Array) -> None:
        self.tensor.data = np.asarray(value, dtype=np.float64)

    @property
    def grad(self) -> Array | None:
        return self.tensor.grad

    def zero_grad(self) -> None:
        self.tensor.grad = None

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def adam_step(
    params: Sequence[Parameter],
    lr: float,
    step: int,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update in place. ``step`` is 1-based.

    Parameters with no accumulated gradient are treated as having a zero
    gradient (their moments still decay).
    """
    if step < 1:
        raise ValueError("Adam step count is 1-based")
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not math.isfinite(float(np.sum(g))):
            raise NumericError(f"non-finite gradient for parameter {p.name!r}")
        p.m = beta1 * p.m + (1.0 - beta1) * g
        p.v = beta2 * p.v + (1.0 - beta2) * (g * g)
        mhat = p.m / bc1
        vhat = p.v / bc2
        p.tensor.data = p.data - lr * mhat / (np.sqrt(vhat) + eps)


# ---------------------------------------------------------------------------
# deterministic draw streams


class DrawStreams:
    """Named Philox-backed random streams for one model run.

    Philox is a counter-based generator, so every stream is fully
    determined by (seed, salt, purpose). Three purposes exist:

    * ``init``      - shared parameter initialization, consumed in
                      parameter declaration order;
    * ``encoding``  - parameters specific to the temporal encoding,
                      drawn after the shared stack so that swapping the
                      encoding never perturbs shared initialization;
    * ``train``     - one permutation per epoch, then dropout masks in
                      forward order within each batch.
    """

    _PURPOSES = ("init", "encoding", "train")

    def __init__(self, seed: int, salt: tuple[int, ...] = ()) -> None:
        self.seed = seed
        self.salt = tuple(int(s) for s in salt)
        self._gens = {
            name: np.random.Generator(
                np.random.Philox(np.random.SeedSequence(seed, spawn_key=self.salt + (k,)))
            )
            for k, name in enumerate(self._PURPOSES)
        }

    @property
    def init(self) -> np.random.Generator:
        return self._gens["init"]

    @property
    def encoding(self) -> np.random.Generator:
        return self._gens["encoding"]

    @property
    def train(self) -> np.random.Generator:
        return self._gens["train"]


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Array:
    """Uniform init on [-sqrt(1/fan_in), +sqrt(1/fan_in)]."""
    lim = math.sqrt(1.0 / fan_in)
    return rng.uniform(-lim, lim, size=shape)

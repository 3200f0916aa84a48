"""Dense float64 tensors with reverse-mode automatic differentiation.

Small by design: batched numpy arrays in the forward pass, a
vector-Jacobian closure per node in the backward pass, and exactly the
optimizer and schedule the training loops need.

Gradient contract: ``backward()`` computes this pass's gradients into a
scratch buffer and then adds them into each participating tensor's
``grad``, so repeated backward passes without ``zero_grad`` accumulate
additively. Forward evaluation is deterministic.

Shapes follow numpy broadcasting; gradients of broadcast operands are
summed back to the operand's shape.
"""

from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

__all__ = [
    "Tensor",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "maximum",
    "minimum",
    "relu",
    "gelu",
    "sigmoid",
    "softplus",
    "tanh",
    "exp",
    "log",
    "sqrt",
    "square",
    "absolute",
    "softmax",
    "layer_norm",
    "concat",
    "reshape",
    "transpose",
    "cumsum",
    "sum",
    "mean",
    "grad_check",
    "OptimizerState",
    "adam_step",
    "zero_grads",
    "lr_schedule",
    "save_checkpoint",
    "load_checkpoint",
]

_sorted = sorted

ArrayLike = Union[float, int, Sequence, np.ndarray, "Tensor"]


class Tensor:
    """A float64 array plus the bookkeeping for reverse-mode gradients."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data: ArrayLike, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags.c_contiguous:
            # ascontiguousarray would also promote 0-d to 1-d; avoid that.
            arr = arr.copy(order="C")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        # Maps the output gradient to per-parent contributions.
        self._vjp: Optional[Callable[[np.ndarray], tuple]] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """Same values, cut out of the graph."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate d(self)/d(node) into ``grad`` of every graph node.

        ``grad`` seeds the output cotangent and defaults to ones (the
        usual scalar-loss case).
        """
        if grad is None:
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(grad, dtype=np.float64)
            if seed.shape != self.data.shape:
                raise ValueError(
                    f"seed gradient shape {seed.shape} != tensor shape "
                    f"{self.data.shape}"
                )
        order = _toposort(self)
        scratch: dict[int, np.ndarray] = {id(self): seed}
        for node in order:
            g = scratch.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            if node._vjp is None:
                continue
            for parent, contrib in zip(node._parents, node._vjp(g)):
                if contrib is None or not _needs_grad(parent):
                    continue
                prev = scratch.get(id(parent))
                scratch[id(parent)] = contrib if prev is None else prev + contrib

    # Operator sugar; constants are wrapped as non-differentiable tensors.
    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return div(other, self)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, other)

    def __neg__(self) -> "Tensor":
        return mul(self, -1.0)

    def __abs__(self) -> "Tensor":
        return absolute(self)

    def __getitem__(self, key) -> "Tensor":
        return _getitem(self, key)

    def reshape(self, *shape: int) -> "Tensor":
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def transpose(self, *axes: int) -> "Tensor":
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)


def as_tensor(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _needs_grad(t: Tensor) -> bool:
    return t.requires_grad or t._vjp is not None


def _toposort(root: Tensor) -> list[Tensor]:
    """Nodes reachable from root, consumers before producers."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and _needs_grad(p):
                stack.append((p, False))
    order.reverse()
    return order


def _make(
    data: np.ndarray,
    parents: tuple[Tensor, ...],
    vjp: Callable[[np.ndarray], tuple],
) -> Tensor:
    out = Tensor(data)
    if any(_needs_grad(p) for p in parents):
        out._parents = parents
        out._vjp = vjp
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _binary(a: ArrayLike, b: ArrayLike, op: str):
    ta, tb = as_tensor(a), as_tensor(b)
    try:
        np.broadcast_shapes(ta.shape, tb.shape)
    except ValueError:
        raise ValueError(
            f"{op}: shapes {ta.shape} and {tb.shape} do not broadcast"
        ) from None
    return ta, tb


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    ta, tb = _binary(a, b, "add")
    return _make(
        ta.data + tb.data,
        (ta, tb),
        lambda g: (_unbroadcast(g, ta.shape), _unbroadcast(g, tb.shape)),
    )


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    ta, tb = _binary(a, b, "sub")
    return _make(
        ta.data - tb.data,
        (ta, tb),
        lambda g: (_unbroadcast(g, ta.shape), _unbroadcast(-g, tb.shape)),
    )


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    ta, tb = _binary(a, b, "mul")
    return _make(
        ta.data * tb.data,
        (ta, tb),
        lambda g: (
            _unbroadcast(g * tb.data, ta.shape),
            _unbroadcast(g * ta.data, tb.shape),
        ),
    )


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    ta, tb = _binary(a, b, "div")
    return _make(
        ta.data / tb.data,
        (ta, tb),
        lambda g: (
            _unbroadcast(g / tb.data, ta.shape),
            _unbroadcast(-g * ta.data / (tb.data * tb.data), tb.shape),
        ),
    )


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    if ta.ndim < 2 or tb.ndim < 2:
        raise ValueError(
            f"matmul needs ndim >= 2 operands, got {ta.shape} @ {tb.shape}"
        )
    if ta.shape[-1] != tb.shape[-2]:
        raise ValueError(f"matmul: shapes {ta.shape} and {tb.shape} mismatch")

    def vjp(g: np.ndarray) -> tuple:
        ga = _unbroadcast(g @ tb.data.swapaxes(-1, -2), ta.shape)
        gb = _unbroadcast(ta.data.swapaxes(-1, -2) @ g, tb.shape)
        return ga, gb

    return _make(ta.data @ tb.data, (ta, tb), vjp)


def maximum(a: ArrayLike, b: ArrayLike) -> Tensor:
    # Ties route the gradient to the first operand.
    ta, tb = _binary(a, b, "maximum")
    mask = ta.data >= tb.data
    return _make(
        np.maximum(ta.data, tb.data),
        (ta, tb),
        lambda g: (
            _unbroadcast(g * mask, ta.shape),
            _unbroadcast(g * ~mask, tb.shape),
        ),
    )


def minimum(a: ArrayLike, b: ArrayLike) -> Tensor:
    ta, tb = _binary(a, b, "minimum")
    mask = ta.data <= tb.data
    return _make(
        np.minimum(ta.data, tb.data),
        (ta, tb),
        lambda g: (
            _unbroadcast(g * mask, ta.shape),
            _unbroadcast(g * ~mask, tb.shape),
        ),
    )


def relu(x: ArrayLike) -> Tensor:
    tx = as_tensor(x)
    mask = tx.data > 0
    return _make(tx.data * mask, (tx,), lambda g: (g * mask,))


def _sigmoid_values(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: ArrayLike) -> Tensor:
    tx = as_tensor(x)
    s = _sigmoid_values(tx.data)
    return _make(s, (tx,), lambda g: (g * s * (1.0 - s),))


def softplus(x: ArrayLike) -> Tensor:
    """log(1 + exp(x)), overflow-safe."""
    tx = as_tensor(x)
    return _make(
        np.logaddexp(0.0, tx.data),
        (tx,),
        lambda g: (g * _sigmoid_values(tx.data),),
    )


def tanh(x: ArrayLike) -> Tensor:
    tx = as_tensor(x)
    t = np.tanh(tx.data)
    return _make(t, (tx,), lambda g: (g * (1.0 - t * t),))


def gelu(x: ArrayLike) -> Tensor:
    """Gaussian error linear unit, tanh approximation."""
    tx = as_tensor(x)
    c = math.sqrt(2.0 / math.pi)
    inner = mul(add(tx, mul(square(tx), mul(tx, 0.044715))), c)
    return mul(mul(tx, 0.5), add(tanh(inner), 1.0))


def exp(x: ArrayLike) -> Tensor:
    tx = as_tensor(x)
    e = np.exp(tx.data)
    return _make(e, (tx,), lambda g: (g * e,))


def log(x: ArrayLike) -> Tensor:
    tx = as_tensor(x)
    return _make(np.log(tx.data), (tx,), lambda g: (g / tx.data,))


def sqrt(x: ArrayLike) -> Tensor:
    tx = as_tensor(x)
    r = np.sqrt(tx.data)
    return _make(r, (tx,), lambda g: (g / (2.0 * r),))


def square(x: ArrayLike) -> Tensor:
    tx = as_tensor(x)
    return _make(tx.data * tx.data, (tx,), lambda g: (g * 2.0 * tx.data,))


def absolute(x: ArrayLike) -> Tensor:
    tx = as_tensor(x)
    sign = np.sign(tx.data)
    return _make(np.abs(tx.data), (tx,), lambda g: (g * sign,))


def softmax(x: ArrayLike, axis: int = -1) -> Tensor:
    tx = as_tensor(x)
    shifted = tx.data - tx.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def vjp(g: np.ndarray) -> tuple:
        dot = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - dot),)

    return _make(s, (tx,), vjp)


def layer_norm(
    x: ArrayLike,
    gamma: ArrayLike,
    beta: ArrayLike,
    axis: int = -1,
    eps: float = 1e-5,
) -> Tensor:
    """Normalize along ``axis`` to zero mean and unit variance, then scale."""
    tx = as_tensor(x)
    mu = mean(tx, axis=axis, keepdims=True)
    centered = sub(tx, mu)
    var = mean(square(centered), axis=axis, keepdims=True)
    normed = div(centered, sqrt(add(var, eps)))
    return add(mul(normed, gamma), beta)


def concat(tensors: Iterable[ArrayLike], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ValueError("concat of no tensors")
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def vjp(g: np.ndarray) -> tuple:
        return tuple(np.split(g, offsets, axis=axis))

    return _make(
        np.concatenate([p.data for p in parts], axis=axis), tuple(parts), vjp
    )


def reshape(x: ArrayLike, shape) -> Tensor:
    tx = as_tensor(x)
    old = tx.shape
    return _make(
        tx.data.reshape(shape),
        (tx,),
        lambda g: (g.reshape(old),),
    )


def transpose(x: ArrayLike, axes: Optional[Sequence[int]] = None) -> Tensor:
    tx = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(tx.ndim)))
    inv = tuple(np.argsort(axes))
    return _make(
        tx.data.transpose(axes),
        (tx,),
        lambda g: (g.transpose(inv),),
    )


def cumsum(x: ArrayLike, axis: int = -1) -> Tensor:
    tx = as_tensor(x)

    def vjp(g: np.ndarray) -> tuple:
        return (np.flip(np.cumsum(np.flip(g, axis), axis), axis),)

    return _make(np.cumsum(tx.data, axis=axis), (tx,), vjp)


def _getitem(x: Tensor, key) -> Tensor:
    # Copy so later in-place parameter updates cannot alias the slice.
    out = np.array(x.data[key], dtype=np.float64, order="C")
    shape = x.shape

    def vjp(g: np.ndarray) -> tuple:
        full = np.zeros(shape, dtype=np.float64)
        # add.at, not +=: fancy keys with repeated indices must accumulate.
        np.add.at(full, key, g)
        return (full,)

    return _make(out, (x,), vjp)


def _reduction_vjp(shape, axis, keepdims):
    if axis is None:
        axes: tuple[int, ...] = tuple(range(len(shape)))
    elif isinstance(axis, int):
        axes = (axis % len(shape),)
    else:
        axes = tuple(a % len(shape) for a in axis)

    def expand(g: np.ndarray) -> np.ndarray:
        if not keepdims:
            for a in _sorted(axes):
                g = np.expand_dims(g, a)
        return np.broadcast_to(g, shape)

    return axes, expand


def sum(x: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    tx = as_tensor(x)
    _, expand = _reduction_vjp(tx.shape, axis, keepdims)
    return _make(
        tx.data.sum(axis=axis, keepdims=keepdims),
        (tx,),
        lambda g: (expand(g).copy(),),
    )


def mean(x: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    tx = as_tensor(x)
    axes, expand = _reduction_vjp(tx.shape, axis, keepdims)
    count = 1
    for a in axes:
        count *= tx.shape[a]
    return _make(
        tx.data.mean(axis=axis, keepdims=keepdims),
        (tx,),
        lambda g: (expand(g) / count,),
    )


def grad_check(
    f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5
) -> float:
    """Max relative error of reverse-mode vs central finite differences.

    Relative error is max|ad - fd| / max(1e-8, max|ad|, max|fd|). The
    function must return a finite scalar in an eps-neighborhood of x.
    """
    y = f(x)
    if y.size != 1:
        raise ValueError(f"grad_check needs a scalar output, got {y.shape}")
    if not np.isfinite(y.data).all():
        raise ValueError("grad_check: non-finite function value")
    x.grad = None
    y.backward()
    ad = x.grad.copy() if x.grad is not None else np.zeros_like(x.data)
    x.grad = None

    fd = np.zeros_like(x.data)
    flat, fd_flat = x.data.reshape(-1), fd.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x).item()
        flat[i] = orig - eps
        lo = f(x).item()
        flat[i] = orig
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise ValueError("grad_check: non-finite probe value")
        fd_flat[i] = (hi - lo) / (2.0 * eps)

    denom = max(1e-8, float(np.abs(ad).max()), float(np.abs(fd).max()))
    return float(np.abs(ad - fd).max() / denom)


@dataclass
class OptimizerState:
    """Adam with decoupled weight decay.

    Moments are created lazily per parameter name on the first step.
    """

    lr: float = 5e-5
    weight_decay: float = 4e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.step < 0:
            raise ValueError(f"step must be >= 0, got {self.step}")


def adam_step(
    state: OptimizerState,
    params: Mapping[str, Tensor],
    grads: Optional[Mapping[str, np.ndarray]] = None,
) -> OptimizerState:
    """One in-place update of all parameters; increments state.step by 1.

    Decay is decoupled and applied before the moment update. Gradients
    default to each parameter's accumulated ``grad``.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name in _sorted(params):
        p = params[name]
        g = grads[name] if grads is not None else p.grad
        if g is None:
            raise ValueError(f"parameter {name!r} has no gradient")
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise ValueError(
                f"parameter {name!r}: gradient shape {g.shape} != {p.shape}"
            )
        if not np.isfinite(g).all():
            raise ValueError(f"parameter {name!r}: non-finite gradient")
        if state.weight_decay:
            p.data -= state.lr * state.weight_decay * p.data
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return state


def zero_grads(params: Mapping[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None


def lr_schedule(
    step: int,
    base: float = 5e-5,
    decay: float = 0.97,
    every: int = 100,
) -> float:
    """Step-function decay: base * decay^(step // every)."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    return base * decay ** (step // every)


_CKPT_MAGIC = b"TGZCKPT1"


def save_checkpoint(
    path: Union[str, os.PathLike],
    params: Mapping[str, Union[Tensor, np.ndarray]],
    state: Optional[OptimizerState] = None,
    meta: Optional[Mapping] = None,
) -> None:
    """Write a deterministic versioned checkpoint.

    Layout: 8-byte magic, little-endian u64 header length, JSON header
    with sorted keys, then each array's raw little-endian float64 bytes
    in header order. No timestamps; identical inputs give identical
    bytes.
    """
    arrays: list[tuple[str, np.ndarray]] = []
    for name in _sorted(params):
        val = params[name]
        arr = val.data if isinstance(val, Tensor) else np.asarray(val)
        arrays.append((name, np.ascontiguousarray(arr, dtype=np.float64)))
    optimizer = None
    if state is not None:
        optimizer = {
            "beta1": state.beta1,
            "beta2": state.beta2,
            "eps": state.eps,
            "lr": state.lr,
            "step": state.step,
            "weight_decay": state.weight_decay,
        }
        for prefix, moments in (("opt.m.", state.m), ("opt.v.", state.v)):
            for name in _sorted(moments):
                arrays.append(
                    (
                        prefix + name,
                        np.ascontiguousarray(moments[name], dtype=np.float64),
                    )
                )
    header = {
        "arrays": [[name, list(arr.shape)] for name, arr in arrays],
        "meta": dict(meta) if meta else {},
        "optimizer": optimizer,
        "version": 1,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    payload = [_CKPT_MAGIC, struct.pack("<Q", len(blob)), blob]
    payload.extend(arr.astype("<f8").tobytes(order="C") for _, arr in arrays)

    # Atomic replace so a crashed save never leaves a torn file.
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(b"".join(payload))
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def load_checkpoint(
    path: Union[str, os.PathLike],
) -> tuple[dict[str, np.ndarray], Optional[OptimizerState], dict]:
    """Read a checkpoint back into (params, optimizer state, meta)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint (magic {magic!r})")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen))
        if header.get("version") != 1:
            raise ValueError(f"{path}: unsupported version {header.get('version')}")
        arrays: dict[str, np.ndarray] = {}
        for name, shape in header["arrays"]:
            n = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * n)
            if len(buf) != 8 * n:
                raise ValueError(f"{path}: truncated array {name!r}")
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()

    params = {
        name: arr for name, arr in arrays.items() if not name.startswith("opt.")
    }
    state = None
    opt = header.get("optimizer")
    if opt is not None:
        state = OptimizerState(
            lr=opt["lr"],
            weight_decay=opt["weight_decay"],
            beta1=opt["beta1"],
            beta2=opt["beta2"],
            eps=opt["eps"],
            step=opt["step"],
            m={
                name[len("opt.m.") :]: arr
                for name, arr in arrays.items()
                if name.startswith("opt.m.")
            },
            v={
                name[len("opt.v.") :]: arr
                for name, arr in arrays.items()
                if name.startswith("opt.v.")
            },
        )
    return params, state, header.get("meta", {})

"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation records a node on an implicit per-expression tape; calling
``backward`` on a scalar result propagates adjoints back to every leaf
tensor created with ``requires_grad=True`` (weights or input features).
Tapes are single-use: a second backward on the same output raises.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    AuditSetupError,
    DimensionError,
    NumericOverflowError,
    TapeError,
)


def _as_array(data) -> np.ndarray:
    return np.asarray(data, dtype=np.float64)


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NumericOverflowError(f"{op} produced a non-finite value")


class Tensor:
    """A float64 array plus the tape bookkeeping needed for backward."""

    __slots__ = ("data", "requires_grad", "grad", "_op", "_parents",
                 "_backward_fn", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None
        self._consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def backward(self) -> None:
        """Populate ``grad`` on every contributing requires_grad leaf."""
        _backward_pass(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op!r})"

    # operator sugar; non-Tensor operands are lifted to constants
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(self, _lift(other))

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, _lift(other))


def _lift(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _node(data: np.ndarray, op: str, parents: tuple[Tensor, ...],
          backward_fn) -> Tensor:
    """Record an operation result; gradient tracking is contagious."""
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = any(p.requires_grad for p in parents)
    out.grad = None
    out._op = op
    out._parents = parents if out.requires_grad else ()
    out._backward_fn = backward_fn if out.requires_grad else None
    out._consumed = False
    return out


def _backward_pass(output: Tensor) -> dict[int, np.ndarray]:
    """Reverse-topological adjoint propagation from a scalar output.

    Returns the adjoint of every visited tensor keyed by id; leaves with
    requires_grad also get the adjoint accumulated into ``.grad``.
    """
    if output.data.size != 1:
        raise TapeError(
            f"backward requires a scalar output, got shape {output.shape}")
    if output._consumed:
        raise TapeError("tape already consumed by a previous backward")
    output._consumed = True

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited and p.requires_grad:
                stack.append((p, False))

    adjoint: dict[int, np.ndarray] = {
        id(output): np.ones_like(output.data)}
    for node in reversed(topo):
        g = adjoint.get(id(node))
        if g is None:
            continue
        if node._backward_fn is not None:
            for parent, pg in zip(node._parents, node._backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                acc = adjoint.get(id(parent))
                adjoint[id(parent)] = pg if acc is None else acc + pg
        if node.is_leaf and node.requires_grad:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad = node.grad + g
    return adjoint


def input_gradient(output: Tensor, x: Tensor) -> Tensor:
    """Gradient of a scalar model output with respect to input features."""
    if not x.requires_grad:
        raise AuditSetupError(
            "input tensor was not marked requires_grad before the forward pass")
    adjoint = _backward_pass(output)
    if id(x) not in adjoint:
        # recorded leaf detached from the output: gradient is exactly zero
        return Tensor(np.zeros_like(x.data))
    return Tensor(adjoint[id(x)].copy())


# ---------------------------------------------------------------------------
# forward operations


def _bias_reduce(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over broadcast leading axes down to ``shape``."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape and a.shape[len(a.shape) - len(b.shape):] != b.shape:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} do not conform")
    with np.errstate(over="ignore"):
        data = a.data + b.data

    def backward(g):
        return g, _bias_reduce(g, b.shape)

    return _node(data, "add", (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape and b.data.size != 1 and a.data.size != 1:
        raise DimensionError(f"sub: shapes {a.shape} and {b.shape} do not conform")
    with np.errstate(over="ignore"):
        data = a.data - b.data

    def backward(g):
        return _bias_reduce(g, a.shape), -_bias_reduce(g, b.shape)

    return _node(data, "sub", (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape and a.data.size != 1 and b.data.size != 1:
        raise DimensionError(f"mul: shapes {a.shape} and {b.shape} do not conform")
    with np.errstate(over="ignore"):
        data = a.data * b.data

    def backward(g):
        return (_bias_reduce(g * b.data, a.shape),
                _bias_reduce(g * a.data, b.shape))

    return _node(data, "mul", (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise DimensionError(
            f"matmul: only 1D/2D operands, got {a.shape} and {b.shape}")
    if a.data.shape[-1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions of {a.shape} and {b.shape} differ")
    with np.errstate(over="ignore"):
        data = a.data @ b.data

    def backward(g):
        ad, bd = a.data, b.data
        a2 = ad.reshape(1, -1) if ad.ndim == 1 else ad
        b2 = bd.reshape(-1, 1) if bd.ndim == 1 else bd
        g2 = g.reshape(a2.shape[0], b2.shape[1])
        ga = (g2 @ b2.T).reshape(ad.shape)
        gb = (a2.T @ g2).reshape(bd.shape)
        return ga, gb

    return _node(data, "matmul", (a, b), backward)


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0.0)

    def backward(g):
        return (g * (a.data > 0.0),)

    return _node(data, "relu", (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        return (g * data * (1.0 - data),)

    return _node(data, "sigmoid", (a,), backward)


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)

    def backward(g):
        return (g / a.data,)

    return _node(data, "log", (a,), backward)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient is passed through only inside (lo, hi)."""
    data = np.clip(a.data, lo, hi)
    inside = (a.data > lo) & (a.data < hi)

    def backward(g):
        return (g * inside,)

    return _node(data, "clip", (a,), backward)


def tsum(a: Tensor) -> Tensor:
    data = np.asarray(a.data.sum())

    def backward(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(data, "sum", (a,), backward)


def tmean(a: Tensor) -> Tensor:
    n = a.data.size
    data = np.asarray(a.data.mean())

    def backward(g):
        return (np.broadcast_to(g / n, a.shape).copy(),)

    return _node(data, "mean", (a,), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.shape),)

    return _node(data, "reshape", (a,), backward)


def conv1d(x: Tensor, kernel: Tensor, padding: str = "same") -> Tensor:
    """1D cross-correlation, stride 1.

    ``x`` is [channels, length]; ``kernel`` is [out_ch, in_ch, k].
    ``padding="same"`` zero-pads by (k-1)/2 (k must be odd) to preserve
    length; ``padding="valid"`` applies no padding and shortens the map.
    """
    if x.data.ndim != 2 or kernel.data.ndim != 3:
        raise DimensionError(
            f"conv1d: expected x [C,L] and kernel [O,C,K], got "
            f"{x.shape} and {kernel.shape}")
    cin, length = x.data.shape
    cout, kin, k = kernel.data.shape
    if kin != cin:
        raise DimensionError(
            f"conv1d: input channels {cin} != kernel channels {kin} "
            f"(shapes {x.shape}, {kernel.shape})")
    if padding == "same":
        if k % 2 == 0:
            raise DimensionError(
                f"conv1d: same-padding needs an odd kernel size, got {k}")
        pad = (k - 1) // 2
    elif padding == "valid":
        if k > length:
            raise DimensionError(
                f"conv1d: kernel size {k} exceeds input length {length}")
        pad = 0
    else:
        raise DimensionError(f"conv1d: unknown padding {padding!r}")
    xpad = np.pad(x.data, ((0, 0), (pad, pad)))
    windows = np.lib.stride_tricks.sliding_window_view(xpad, k, axis=1)
    # windows: [C, Lout, K]; out[o, l] = sum_{c,j} kernel[o,c,j]*windows[c,l,j]
    data = np.einsum("ocj,clj->ol", kernel.data, windows)

    def backward(g):
        gk = np.einsum("ol,clj->ocj", g, windows)
        # adjoint of a stride-1 correlation: correlate the (padded) output
        # gradient with the kernel flipped along K, channels swapped
        gpad = np.pad(g, ((0, 0), (k - 1 - pad, k - 1 - pad)))
        gwin = np.lib.stride_tricks.sliding_window_view(gpad, k, axis=1)
        kflip = kernel.data[:, :, ::-1]
        gx = np.einsum("ocj,olj->cl", kflip, gwin)
        return gx, gk

    return _node(data, "conv1d", (x, kernel), backward)


def global_average_pool(x: Tensor) -> Tensor:
    """Mean over the length axis of a [channels, length] map."""
    if x.data.ndim != 2:
        raise DimensionError(
            f"global-average-pool: expected [C,L], got {x.shape}")
    length = x.data.shape[1]
    data = x.data.mean(axis=1)

    def backward(g):
        return (np.repeat(g[:, None] / length, length, axis=1),)

    return _node(data, "global-average-pool", (x,), backward)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None,
            training: bool) -> Tensor:
    """Inverted dropout: active only when training, identity otherwise."""
    if not training or p == 0.0:
        return x
    if rng is None:
        raise TapeError("dropout in training mode requires an RNG")
    keep = (rng.random(x.data.shape) >= p) / (1.0 - p)
    data = x.data * keep

    def backward(g):
        return (g * keep,)

    return _node(data, "dropout", (x,), backward)

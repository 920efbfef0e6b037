# services/tensor_autodiff.py
"""
Dense float64 tensors, the differentiable primitives every layer is built
from, and a tape that replays them backwards.

Recording is opt-in: ops only land on a tape when one is active on the
calling thread (``with GradTape() as tape:``) and at least one operand
depends on a Parameter. Without an active tape every op is a plain numpy
computation, which is what inference uses.

Backward rules live in BACKWARD_RULES (op name -> rule), looked up when the
tape is replayed. Each rule receives the node and the upstream gradient and
returns one gradient (or None) per operand.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from services.errors import ConfigError, ContractError, DimensionError

DTYPE = np.float64
LOG_FLOOR = 1e-12


class Tensor:
    """Immutable dense array. ``data`` is row-major float64."""

    __slots__ = ("data", "name", "requires_grad")

    def __init__(self, data: Any, name: Optional[str] = None, requires_grad: bool = False):
        self.data = np.array(data, dtype=DTYPE)
        self.name = name
        self.requires_grad = requires_grad

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool) -> "Tensor":
        t = object.__new__(Tensor)
        arr = np.asarray(arr, dtype=DTYPE)
        arr.flags.writeable = False
        t.data = arr
        t.name = None
        t.requires_grad = requires_grad
        return t

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return np.array(self.data)

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"


class Parameter(Tensor):
    """Trainable leaf. Only the optimizer (or a gradient checker) writes ``data``, in place."""

    __slots__ = ()

    def __init__(self, data: Any, name: str):
        super().__init__(data, name=name, requires_grad=True)


def constant(data: Any) -> Tensor:
    return Tensor(data)


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------

@dataclass
class Node:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    ctx: Dict[str, Any] = field(default_factory=dict)


_LOCAL = threading.local()


def _tape_stack() -> List["GradTape"]:
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def active_tape() -> Optional["GradTape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class GradTape:
    """Append-only record of primitive applications. Single writer: one training step, one tape."""

    def __init__(self) -> None:
        self.nodes: List[Node] = []
        self._index: Dict[int, int] = {}

    def __enter__(self) -> "GradTape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc: Any) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, node: Node) -> None:
        self._index[id(node.output)] = len(self.nodes)
        self.nodes.append(node)

    def position_of(self, t: Tensor) -> Optional[int]:
        pos = self._index.get(id(t))
        if pos is None or self.nodes[pos].output is not t:
            return None
        return pos


def _emit(op: str, inputs: Sequence[Tensor], out: np.ndarray, **ctx: Any) -> Tensor:
    tracked = any(t.requires_grad for t in inputs)
    result = Tensor._wrap(out, tracked)
    tape = active_tape()
    if tape is not None and tracked:
        tape.record(Node(op, tuple(inputs), result, ctx))
    return result


BackwardRule = Callable[[Node, np.ndarray], Tuple[Optional[np.ndarray], ...]]
BACKWARD_RULES: Dict[str, BackwardRule] = {}


def rule(op: str) -> Callable[[BackwardRule], BackwardRule]:
    def register(fn: BackwardRule) -> BackwardRule:
        BACKWARD_RULES[op] = fn
        return fn
    return register


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {list(a.shape)} vs {list(b.shape)}")


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Contract the last axis of ``a`` with the first axis of a 1-D or 2-D ``b``."""
    if a.ndim < 1 or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {list(a.shape)} by {list(b.shape)}")
    return _emit("matmul", (a, b), np.matmul(a.data, b.data))


@rule("matmul")
def _matmul_back(node: Node, g: np.ndarray):
    a, b = node.inputs[0].data, node.inputs[1].data
    q = a.shape[-1]
    if b.ndim == 1:
        ga = g[..., None] * b
        gb = a.reshape(-1, q).T @ g.reshape(-1)
    else:
        ga = g @ b.T
        gb = a.reshape(-1, q).T @ g.reshape(-1, b.shape[1])
    return ga, gb


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _emit("add", (a, b), a.data + b.data)


@rule("add")
def _add_back(node: Node, g: np.ndarray):
    return g, g


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _emit("sub", (a, b), a.data - b.data)


@rule("sub")
def _sub_back(node: Node, g: np.ndarray):
    return g, -g


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    return _emit("mul", (a, b), a.data * b.data)


@rule("mul")
def _mul_back(node: Node, g: np.ndarray):
    a, b = node.inputs
    return g * b.data, g * a.data


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """The one sanctioned broadcast: a length-k vector added to every row of [..., k]."""
    if bias.ndim != 1 or x.ndim < 1 or x.shape[-1] != bias.shape[0]:
        raise DimensionError(f"add_bias: bias {list(bias.shape)} does not fit rows of {list(x.shape)}")
    return _emit("add_bias", (x, bias), x.data + bias.data)


@rule("add_bias")
def _add_bias_back(node: Node, g: np.ndarray):
    k = node.inputs[1].shape[0]
    return g, g.reshape(-1, k).sum(axis=0)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: Tensor) -> Tensor:
    return _emit("sigmoid", (x,), _stable_sigmoid(x.data))


@rule("sigmoid")
def _sigmoid_back(node: Node, g: np.ndarray):
    y = node.output.data
    return (g * y * (1.0 - y),)


def tanh(x: Tensor) -> Tensor:
    return _emit("tanh", (x,), np.tanh(x.data))


@rule("tanh")
def _tanh_back(node: Node, g: np.ndarray):
    y = node.output.data
    return (g * (1.0 - y * y),)


def relu(x: Tensor) -> Tensor:
    return _emit("relu", (x,), np.maximum(x.data, 0.0))


@rule("relu")
def _relu_back(node: Node, g: np.ndarray):
    return (g * (node.inputs[0].data > 0.0),)


ELEMENTWISE: Dict[str, Callable[..., Tensor]] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "relu": relu,
}


def elementwise(op: str, *args: Tensor) -> Tensor:
    fn = ELEMENTWISE.get(op)
    if fn is None:
        raise ContractError(f"elementwise: unknown op {op!r}")
    return fn(*args)


def scale(x: Tensor, c: float) -> Tensor:
    return _emit("scale", (x,), x.data * c, c=float(c))


@rule("scale")
def _scale_back(node: Node, g: np.ndarray):
    return (g * node.ctx["c"],)


def log(x: Tensor, floor: float = LOG_FLOOR) -> Tensor:
    """Natural log of max(x, floor); entries at the floor pass no gradient."""
    return _emit("log", (x,), np.log(np.maximum(x.data, floor)), floor=floor)


@rule("log")
def _log_back(node: Node, g: np.ndarray):
    x = node.inputs[0].data
    live = x > node.ctx["floor"]
    return (np.where(live, g / np.where(live, x, 1.0), 0.0),)


def reduce_sum(x: Tensor) -> Tensor:
    return _emit("reduce_sum", (x,), np.sum(x.data))


@rule("reduce_sum")
def _reduce_sum_back(node: Node, g: np.ndarray):
    return (np.full(node.inputs[0].shape, float(g)),)


def reduce_mean(x: Tensor) -> Tensor:
    if x.size == 0:
        raise DimensionError("reduce_mean: empty tensor")
    return _emit("reduce_mean", (x,), np.mean(x.data))


@rule("reduce_mean")
def _reduce_mean_back(node: Node, g: np.ndarray):
    x = node.inputs[0]
    return (np.full(x.shape, float(g) / x.size),)


def mean_axis(x: Tensor, axis: int) -> Tensor:
    if x.ndim == 0 or x.shape[axis] == 0:
        raise DimensionError(f"mean_axis: nothing to average along axis {axis} of {list(x.shape)}")
    return _emit("mean_axis", (x,), np.mean(x.data, axis=axis), axis=axis)


@rule("mean_axis")
def _mean_axis_back(node: Node, g: np.ndarray):
    x = node.inputs[0]
    axis = node.ctx["axis"]
    return (np.broadcast_to(np.expand_dims(g, axis), x.shape) / x.shape[axis],)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along ``axis``."""
    if x.ndim == 0 or x.shape[axis] == 0:
        raise DimensionError(f"softmax: empty input {list(x.shape)}")
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return _emit("softmax", (x,), e / np.sum(e, axis=axis, keepdims=True), axis=axis)


@rule("softmax")
def _softmax_back(node: Node, g: np.ndarray):
    y = node.output.data
    axis = node.ctx["axis"]
    return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)


def gather(table: Tensor, ids: np.ndarray) -> Tensor:
    """Rows of a 2-D table for an integer id array; result shape ids.shape + (m,)."""
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise DimensionError(f"gather: table must be 2-D, got {list(table.shape)}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ContractError(f"gather: id out of range [0, {table.shape[0]})")
    return _emit("gather", (table,), table.data[ids], ids=ids)


@rule("gather")
def _gather_back(node: Node, g: np.ndarray):
    table = node.inputs[0]
    grad = np.zeros(table.shape)
    np.add.at(grad, node.ctx["ids"].reshape(-1), g.reshape(-1, table.shape[1]))
    return (grad,)


def take(x: Tensor, index: np.ndarray) -> Tensor:
    """Pick one entry per row of the last axis: x[..., index[...]]."""
    index = np.asarray(index, dtype=np.int64)
    if index.shape != x.shape[:-1]:
        raise DimensionError(f"take: index shape {list(index.shape)} does not match {list(x.shape)}")
    if index.size and (index.min() < 0 or index.max() >= x.shape[-1]):
        raise ContractError(f"take: index out of range [0, {x.shape[-1]})")
    picked = np.take_along_axis(x.data, index[..., None], axis=-1)[..., 0]
    return _emit("take", (x,), picked, index=index)


@rule("take")
def _take_back(node: Node, g: np.ndarray):
    grad = np.zeros(node.inputs[0].shape)
    np.put_along_axis(grad, node.ctx["index"][..., None], np.asarray(g)[..., None], axis=-1)
    return (grad,)


def _axis_slicer(ndim: int, axis: int, key: Any) -> Tuple[Any, ...]:
    axis = axis % ndim
    return tuple(key if i == axis else slice(None) for i in range(ndim))


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= x.shape[axis]:
        raise DimensionError(f"slice_axis: [{start}:{stop}] outside extent {x.shape[axis]} of {list(x.shape)}")
    key = _axis_slicer(x.ndim, axis, slice(start, stop))
    return _emit("slice_axis", (x,), x.data[key], key=key)


@rule("slice_axis")
def _slice_axis_back(node: Node, g: np.ndarray):
    grad = np.zeros(node.inputs[0].shape)
    grad[node.ctx["key"]] = g
    return (grad,)


def select(x: Tensor, axis: int, index: int) -> Tensor:
    if not 0 <= index < x.shape[axis]:
        raise DimensionError(f"select: index {index} outside extent {x.shape[axis]} of {list(x.shape)}")
    key = _axis_slicer(x.ndim, axis, index)
    return _emit("select", (x,), x.data[key], key=key)


@rule("select")
def _select_back(node: Node, g: np.ndarray):
    grad = np.zeros(node.inputs[0].shape)
    grad[node.ctx["key"]] = g
    return (grad,)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise DimensionError("stack: nothing to stack")
    first = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != first:
            raise DimensionError(f"stack: shape mismatch {list(first)} vs {list(t.shape)}")
    return _emit("stack", tuple(tensors), np.stack([t.data for t in tensors], axis=axis), axis=axis)


@rule("stack")
def _stack_back(node: Node, g: np.ndarray):
    axis = node.ctx["axis"]
    return tuple(np.take(g, i, axis=axis) for i in range(len(node.inputs)))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise DimensionError("concat: nothing to concatenate")
    return _emit("concat", tuple(tensors), np.concatenate([t.data for t in tensors], axis=axis), axis=axis)


@rule("concat")
def _concat_back(node: Node, g: np.ndarray):
    axis = node.ctx["axis"]
    cuts = np.cumsum([t.shape[axis] for t in node.inputs])[:-1]
    return tuple(np.split(g, cuts, axis=axis))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != x.size:
        raise DimensionError(f"reshape: cannot view {list(x.shape)} as {list(shape)}")
    return _emit("reshape", (x,), x.data.reshape(shape))


@rule("reshape")
def _reshape_back(node: Node, g: np.ndarray):
    return (g.reshape(node.inputs[0].shape),)


def weighted_sum(weights: Tensor, states: Tensor) -> Tensor:
    """sum_t weights[..., t] * states[..., t, :]."""
    if states.ndim < 2 or weights.shape != states.shape[:-1]:
        raise DimensionError(f"weighted_sum: weights {list(weights.shape)} do not index states {list(states.shape)}")
    return _emit("weighted_sum", (weights, states), np.einsum("...t,...td->...d", weights.data, states.data))


@rule("weighted_sum")
def _weighted_sum_back(node: Node, g: np.ndarray):
    w, s = node.inputs[0].data, node.inputs[1].data
    gw = np.einsum("...td,...d->...t", s, g)
    gs = w[..., None] * g[..., None, :]
    return gw, gs


def dropout(x: Tensor, rate: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-rate) at train time, identity otherwise."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ContractError("dropout: training mode needs an rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, Tensor(mask))


# ---------------------------------------------------------------------------
# Reverse pass
# ---------------------------------------------------------------------------

def backward(
    tape: GradTape,
    loss: Tensor,
    params: Optional[Iterable[Parameter]] = None,
) -> Dict[Parameter, np.ndarray]:
    """
    d(loss)/d(p) for every Parameter the loss depends on. With ``params``,
    the result covers exactly those, zero-filled where the loss ignores them.
    """
    if loss.shape != ():
        raise ContractError(f"backward: loss must be a scalar, got shape {list(loss.shape)}")
    end = tape.position_of(loss)
    if end is None:
        raise ContractError("backward: loss was not produced on this tape")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones(())}
    found: Dict[int, Parameter] = {}
    for node in reversed(tape.nodes[: end + 1]):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        in_grads = BACKWARD_RULES[node.op](node, g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            grads[key] = grads[key] + gi if key in grads else gi
            if isinstance(t, Parameter):
                found[key] = t

    out = {p: np.asarray(grads[k], dtype=DTYPE).reshape(p.shape) for k, p in found.items()}
    if params is None:
        return out
    return {p: out.get(p, np.zeros(p.shape)) for p in params}

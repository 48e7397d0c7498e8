"""
Reverse-mode automatic differentiation over a recorded operation tape.

Every operation is evaluated eagerly on float64 numpy arrays and, when at
least one input lives on a tape, appended to that tape as a node. Backward
rules are themselves written with tape operations, so the backward pass can
be recorded too ("differentiable backward"). That is what
``input_gradient_as_node`` uses to make a gradient penalty differentiable
with respect to network parameters.
"""

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

L2NORM_EPS = 1e-12

OP_KINDS = (
    "add", "sub", "mul", "div", "matmul", "tanh", "sigmoid", "exp", "log", "neg",
    "sum", "mean", "square", "sqrt", "clamp", "min-elementwise", "l2norm-rows",
    "concat-columns", "slice-columns", "transpose", "scale",
)


class ShapeError(ValueError):
    """Raised when operand shapes do not conform to an op-kind."""

    def __init__(self, op: str, *shapes: Tuple[int, ...]):
        self.op = op
        self.shapes = shapes
        rendered = " and ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {rendered}")


class DomainError(ValueError):
    """Raised when an input lies outside an op's documented domain."""


ArrayLike = Union["Tensor", np.ndarray, float, int]


class Tensor:
    """A float64 array, optionally registered as a node of a tape."""

    __slots__ = ("data", "tape", "node_id")

    def __init__(self, data: Any, tape: Optional["Tape"] = None, node_id: Optional[int] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.tape = tape
        self.node_id = node_id

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def is_constant(self) -> bool:
        return self.node_id is None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        where = "const" if self.node_id is None else f"node={self.node_id}"
        return f"Tensor(shape={self.shape}, {where})"

    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        return div(self, other)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, other)

    def __neg__(self) -> "Tensor":
        return neg(self)


def constant(data: Any) -> Tensor:
    """Wrap an array as an off-tape tensor."""
    return Tensor(data)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


@dataclass
class Node:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    attrs: Dict[str, Any] = field(default_factory=dict)

    @property
    def input_ids(self) -> Tuple[Optional[int], ...]:
        return tuple(t.node_id for t in self.inputs)


class Tape:
    """Append-only record of operations in topological order."""

    def __init__(self):
        self.nodes: List[Node] = []
        self._recording = True

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def recording(self) -> bool:
        return self._recording

    @contextmanager
    def paused(self) -> Iterator[None]:
        """Evaluate operations without appending them to the tape."""
        previous = self._recording
        self._recording = False
        try:
            yield
        finally:
            self._recording = previous

    def variable(self, data: Any) -> Tensor:
        """Register a leaf tensor (an input or a parameter)."""
        tensor = Tensor(np.array(data, dtype=np.float64), self, len(self.nodes))
        self.nodes.append(Node("leaf", (), tensor))
        return tensor

    def _append(self, op: str, inputs: Tuple[Tensor, ...], value: np.ndarray,
                attrs: Dict[str, Any]) -> Tensor:
        tensor = Tensor(value, self, len(self.nodes))
        self.nodes.append(Node(op, inputs, tensor, attrs))
        return tensor

    def _ancestors(self, node_id: int) -> Set[int]:
        seen = {node_id}
        stack = [node_id]
        while stack:
            for parent in self.nodes[stack.pop()].input_ids:
                if parent is not None and parent not in seen:
                    seen.add(parent)
                    stack.append(parent)
        return seen

    def _descendants(self, node_id: int, limit: int) -> Set[int]:
        reached = {node_id}
        for nid in range(node_id + 1, limit + 1):
            if any(pid in reached for pid in self.nodes[nid].input_ids):
                reached.add(nid)
        return reached


# ---------------------------------------------------------------------------
# forward rules
# ---------------------------------------------------------------------------

def _broadcast_shape(op: str, a: Tuple[int, ...], b: Tuple[int, ...]) -> Tuple[int, ...]:
    if a == b:
        return a
    if a == ():
        return b
    if b == ():
        return a
    if len(a) == 2 and len(b) == 2 and a[1] == b[1]:
        if a[0] == 1:
            return b
        if b[0] == 1:
            return a
    raise ShapeError(op, a, b)


def _check_matrix(op: str, *tensors: Tensor) -> None:
    for t in tensors:
        if t.data.ndim != 2:
            raise ShapeError(op, *(x.shape for x in tensors))


def _forward(op: str, inputs: Tuple[Tensor, ...], attrs: Dict[str, Any]) -> np.ndarray:
    values = [t.data for t in inputs]
    if op == "concat-columns":
        if not inputs or any(v.ndim != 2 or v.shape[0] != values[0].shape[0] for v in values):
            raise ShapeError(op, *(t.shape for t in inputs))
        return np.concatenate(values, axis=1)

    if op in ("add", "sub", "mul", "div", "min-elementwise"):
        if len(values) != 2:
            raise ShapeError(op, *(t.shape for t in inputs))
        _broadcast_shape(op, inputs[0].shape, inputs[1].shape)
        a, b = values
        if op == "add":
            return a + b
        if op == "sub":
            return a - b
        if op == "mul":
            return a * b
        if op == "div":
            if np.any(b == 0.0):
                raise DomainError("div: divisor contains zero")
            return a / b
        return np.minimum(a, b)

    if op == "matmul":
        _check_matrix(op, *inputs)
        if inputs[0].shape[1] != inputs[1].shape[0]:
            raise ShapeError(op, inputs[0].shape, inputs[1].shape)
        return values[0] @ values[1]

    (x,) = values
    if op == "tanh":
        return np.tanh(x)
    if op == "sigmoid":
        return 0.5 * (np.tanh(0.5 * x) + 1.0)
    if op == "exp":
        return np.exp(x)
    if op == "log":
        if np.any(x <= 0.0):
            raise DomainError(f"log: non-positive input (min {x.min()!r}); clamp first")
        return np.log(x)
    if op == "sqrt":
        if np.any(x <= 0.0):
            raise DomainError(f"sqrt: non-positive input (min {x.min()!r}); clamp first")
        return np.sqrt(x)
    if op == "neg":
        return -x
    if op == "square":
        return x * x
    if op == "sum":
        return np.asarray(x.sum())
    if op == "mean":
        if x.size == 0:
            raise ShapeError(op, x.shape)
        return np.asarray(x.mean())
    if op == "scale":
        return x * attrs["factor"]
    if op == "clamp":
        return np.clip(x, attrs["low"], attrs["high"])
    if op == "transpose":
        _check_matrix(op, *inputs)
        return np.ascontiguousarray(x.T)
    if op == "l2norm-rows":
        _check_matrix(op, *inputs)
        return np.sqrt((x * x).sum(axis=1, keepdims=True) + L2NORM_EPS)
    if op == "slice-columns":
        _check_matrix(op, *inputs)
        start, stop = attrs["start"], attrs["stop"]
        if not 0 <= start < stop <= x.shape[1]:
            raise ShapeError(f"{op}[{start}:{stop}]", x.shape)
        return np.ascontiguousarray(x[:, start:stop])
    raise ValueError(f"unknown op-kind '{op}'")


# ---------------------------------------------------------------------------
# backward rules, written with tape ops so they can be recorded
# ---------------------------------------------------------------------------

VjpRule = Callable[[Tensor, Node, Sequence[bool]], List[Optional[Tensor]]]
_VJP: Dict[str, VjpRule] = {}


def _vjp(*ops: str) -> Callable[[VjpRule], VjpRule]:
    def register(rule: VjpRule) -> VjpRule:
        for op in ops:
            _VJP[op] = rule
        return rule
    return register


def _unbroadcast(grad: Tensor, shape: Tuple[int, ...]) -> Tensor:
    if grad.shape == shape:
        return grad
    if shape == ():
        return sum_(grad)
    rows = grad.shape[0]
    return matmul(constant(np.ones((1, rows))), grad)


def _expand_columns(column: Tensor, width: int) -> Tensor:
    return matmul(column, constant(np.ones((1, width))))


@_vjp("add")
def _vjp_add(g, node, needs):
    a, b = node.inputs
    return [_unbroadcast(g, a.shape) if needs[0] else None,
            _unbroadcast(g, b.shape) if needs[1] else None]


@_vjp("sub")
def _vjp_sub(g, node, needs):
    a, b = node.inputs
    return [_unbroadcast(g, a.shape) if needs[0] else None,
            _unbroadcast(neg(g), b.shape) if needs[1] else None]


@_vjp("mul")
def _vjp_mul(g, node, needs):
    a, b = node.inputs
    return [_unbroadcast(mul(g, b), a.shape) if needs[0] else None,
            _unbroadcast(mul(g, a), b.shape) if needs[1] else None]


@_vjp("div")
def _vjp_div(g, node, needs):
    a, b = node.inputs
    return [_unbroadcast(div(g, b), a.shape) if needs[0] else None,
            _unbroadcast(neg(div(mul(g, node.output), b)), b.shape) if needs[1] else None]


@_vjp("min-elementwise")
def _vjp_minimum(g, node, needs):
    a, b = node.inputs
    take_a = (a.data <= b.data).astype(np.float64)
    return [_unbroadcast(mul(g, constant(take_a)), a.shape) if needs[0] else None,
            _unbroadcast(mul(g, constant(1.0 - take_a)), b.shape) if needs[1] else None]


@_vjp("matmul")
def _vjp_matmul(g, node, needs):
    a, b = node.inputs
    return [matmul(g, transpose(b)) if needs[0] else None,
            matmul(transpose(a), g) if needs[1] else None]


@_vjp("tanh")
def _vjp_tanh(g, node, needs):
    return [mul(g, sub(1.0, square(node.output)))]


@_vjp("sigmoid")
def _vjp_sigmoid(g, node, needs):
    out = node.output
    return [mul(g, mul(out, sub(1.0, out)))]


@_vjp("exp")
def _vjp_exp(g, node, needs):
    return [mul(g, node.output)]


@_vjp("log")
def _vjp_log(g, node, needs):
    return [div(g, node.inputs[0])]


@_vjp("sqrt")
def _vjp_sqrt(g, node, needs):
    return [div(g, scale(node.output, 2.0))]


@_vjp("neg")
def _vjp_neg(g, node, needs):
    return [neg(g)]


@_vjp("square")
def _vjp_square(g, node, needs):
    return [scale(mul(g, node.inputs[0]), 2.0)]


@_vjp("sum")
def _vjp_sum(g, node, needs):
    return [mul(constant(np.ones(node.inputs[0].shape)), g)]


@_vjp("mean")
def _vjp_mean(g, node, needs):
    shape = node.inputs[0].shape
    return [mul(constant(np.full(shape, 1.0 / int(np.prod(shape)))), g)]


@_vjp("scale")
def _vjp_scale(g, node, needs):
    return [scale(g, node.attrs["factor"])]


@_vjp("clamp")
def _vjp_clamp(g, node, needs):
    x = node.inputs[0].data
    inside = ((x >= node.attrs["low"]) & (x <= node.attrs["high"])).astype(np.float64)
    return [mul(g, constant(inside))]


@_vjp("transpose")
def _vjp_transpose(g, node, needs):
    return [transpose(g)]


@_vjp("l2norm-rows")
def _vjp_l2norm_rows(g, node, needs):
    x = node.inputs[0]
    width = x.shape[1]
    return [mul(x, _expand_columns(div(g, node.output), width))]


@_vjp("concat-columns")
def _vjp_concat(g, node, needs):
    grads: List[Optional[Tensor]] = []
    start = 0
    for tensor, needed in zip(node.inputs, needs):
        stop = start + tensor.shape[1]
        grads.append(slice_columns(g, start, stop) if needed else None)
        start = stop
    return grads


@_vjp("slice-columns")
def _vjp_slice(g, node, needs):
    rows, width = node.inputs[0].shape
    start, stop = node.attrs["start"], node.attrs["stop"]
    parts = []
    if start > 0:
        parts.append(constant(np.zeros((rows, start))))
    parts.append(g)
    if stop < width:
        parts.append(constant(np.zeros((rows, width - stop))))
    return [concat_columns(parts) if len(parts) > 1 else g]


# ---------------------------------------------------------------------------
# recording
# ---------------------------------------------------------------------------

def _owning_tape(op: str, inputs: Sequence[Tensor]) -> Optional[Tape]:
    tape = None
    for t in inputs:
        if t.tape is None or t.node_id is None:
            continue
        if tape is None:
            tape = t.tape
        elif t.tape is not tape:
            raise ValueError(f"{op}: inputs belong to different tapes")
    return tape


def record(op: str, inputs: Sequence[ArrayLike], **attrs: Any) -> Tensor:
    """
    Evaluate ``op`` on ``inputs`` and register the result on their tape.

    Args:
        op: One of ``OP_KINDS``
        inputs: Operand tensors (numbers and arrays are lifted to constants)
        **attrs: Op attributes (``factor`` for scale, ``low``/``high`` for
            clamp, ``start``/``stop`` for slice-columns)

    Returns:
        The output tensor; a constant when no input is on a recording tape

    Raises:
        ShapeError: If operand shapes do not conform to the op-kind
        DomainError: For log/sqrt of non-positive input or division by zero
    """
    if op not in OP_KINDS:
        raise ValueError(f"unknown op-kind '{op}'")
    tensors = tuple(as_tensor(x) for x in inputs)
    value = _forward(op, tensors, attrs)
    tape = _owning_tape(op, tensors)
    if tape is None or not tape.recording:
        return Tensor(value)
    return tape._append(op, tensors, value, attrs)


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    return record("add", (a, b))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    return record("sub", (a, b))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    return record("mul", (a, b))


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    return record("div", (a, b))


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    return record("matmul", (a, b))


def minimum(a: ArrayLike, b: ArrayLike) -> Tensor:
    return record("min-elementwise", (a, b))


def tanh(x: ArrayLike) -> Tensor:
    return record("tanh", (x,))


def sigmoid(x: ArrayLike) -> Tensor:
    return record("sigmoid", (x,))


def exp(x: ArrayLike) -> Tensor:
    return record("exp", (x,))


def log(x: ArrayLike) -> Tensor:
    return record("log", (x,))


def sqrt(x: ArrayLike) -> Tensor:
    return record("sqrt", (x,))


def neg(x: ArrayLike) -> Tensor:
    return record("neg", (x,))


def square(x: ArrayLike) -> Tensor:
    return record("square", (x,))


def sum_(x: ArrayLike) -> Tensor:
    return record("sum", (x,))


def mean(x: ArrayLike) -> Tensor:
    return record("mean", (x,))


def scale(x: ArrayLike, factor: float) -> Tensor:
    return record("scale", (x,), factor=float(factor))


def clamp(x: ArrayLike, low: float, high: float) -> Tensor:
    return record("clamp", (x,), low=float(low), high=float(high))


def transpose(x: ArrayLike) -> Tensor:
    return record("transpose", (x,))


def l2norm_rows(x: ArrayLike) -> Tensor:
    return record("l2norm-rows", (x,))


def concat_columns(parts: Sequence[ArrayLike]) -> Tensor:
    return record("concat-columns", parts)


def slice_columns(x: ArrayLike, start: int, stop: int) -> Tensor:
    return record("slice-columns", (x,), start=int(start), stop=int(stop))


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

class GradMap:
    """Gradients of one scalar output, keyed by node id."""

    def __init__(self, tape: Tape, grads: Dict[int, Tensor]):
        self.tape = tape
        self._grads = grads

    def __contains__(self, key: Union[Tensor, int]) -> bool:
        return self._key(key) in self._grads

    def __getitem__(self, key: Union[Tensor, int]) -> Tensor:
        node_id = self._key(key)
        if node_id in self._grads:
            return self._grads[node_id]
        return constant(np.zeros(self.tape.nodes[node_id].output.shape))

    def arrays(self, tensors: Sequence[Tensor]) -> List[np.ndarray]:
        return [self[t].data for t in tensors]

    def _key(self, key: Union[Tensor, int]) -> int:
        if isinstance(key, Tensor):
            if key.tape is not self.tape or key.node_id is None:
                raise KeyError("tensor is not on this tape")
            return key.node_id
        return int(key)


def _check_scalar_output(tape: Tape, output: Tensor) -> None:
    if output.shape != ():
        raise ShapeError("backward (output must be scalar)", output.shape)
    if output.tape is not tape or output.node_id is None:
        raise ValueError("backward: output was not produced on this tape")


def _reverse_sweep(tape: Tape, output: Tensor, relevant: Set[int]) -> Dict[int, Tensor]:
    grads: Dict[int, Tensor] = {output.node_id: constant(np.ones(()))}
    for nid in range(output.node_id, -1, -1):
        g = grads.get(nid)
        if g is None:
            continue
        node = tape.nodes[nid]
        if node.op == "leaf":
            continue
        needs = [pid is not None and pid in relevant for pid in node.input_ids]
        if not any(needs):
            continue
        for parent, needed, grad in zip(node.inputs, needs, _VJP[node.op](g, node, needs)):
            if not needed or grad is None:
                continue
            prior = grads.get(parent.node_id)
            grads[parent.node_id] = grad if prior is None else add(prior, grad)
    return grads


def backward(tape: Tape, output: Tensor) -> GradMap:
    """
    Gradient of a scalar output with respect to every tensor on the tape.

    The tape is left intact, so backward may be called again.
    """
    _check_scalar_output(tape, output)
    with tape.paused():
        grads = _reverse_sweep(tape, output, tape._ancestors(output.node_id))
    return GradMap(tape, {nid: constant(g.data) for nid, g in grads.items()})


def input_gradient_as_node(tape: Tape, output: Tensor, wrt: Tensor) -> Tensor:
    """
    d(output)/d(wrt) as a tensor whose computation is recorded on the tape.

    Expressions built from the returned tensor stay differentiable with
    respect to every other tape tensor the gradient depends on (for example
    network weights). If ``wrt`` does not reach ``output`` a zero constant of
    ``wrt``'s shape is returned.
    """
    _check_scalar_output(tape, output)
    if wrt.tape is not tape or wrt.node_id is None:
        raise ValueError("input_gradient_as_node: wrt is not on this tape")
    if wrt.node_id > output.node_id:
        return constant(np.zeros(wrt.shape))
    relevant = tape._ancestors(output.node_id) & tape._descendants(wrt.node_id, output.node_id)
    if wrt.node_id not in relevant:
        return constant(np.zeros(wrt.shape))
    grads = _reverse_sweep(tape, output, relevant)
    return grads.get(wrt.node_id, constant(np.zeros(wrt.shape)))

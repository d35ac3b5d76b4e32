"""Reverse-mode autodiff on a recording tape, sized for small dense MLPs.

Every value is a 2-D float64 array; scalars are 1x1 matrices. The op set
is deliberately small: affine maps, ReLU, column concat/slice, sums,
elementwise multiply, square root and reciprocal. That is enough for the
critic and generator objectives, including the gradient-norm penalty.

Backward rules emit tape operations themselves, so the result of a
backward pass is just more graph: differentiating a computed input
gradient (double backprop) is an ordinary second backward pass. ReLU
activation masks are captured as constants of the first pass, which is
exact almost everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError, DataError, DimensionError, TrainingError


def as_matrix(value, name="matrix"):
    """Validate and return a 2-D, finite, float64, C-contiguous array."""
    arr = np.ascontiguousarray(value, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    return arr


class Tape:
    """Recorded computation graph; one forward/backward pair at a time."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.parameters: list[Node] = []

    def parameter(self, value, name="param"):
        node = Node(self, as_matrix(value, name), (), None, None, name)
        self.parameters.append(node)
        return node

    def constant(self, value, name="const"):
        return Node(self, as_matrix(value, name), (), None, None, name)

    def replay(self):
        """Recompute every node from its parents.

        Returns True when recomputation reproduces every cached value
        bit for bit.
        """
        fresh: dict[int, np.ndarray] = {}
        for node in self.nodes:
            if node._forward is None:
                fresh[id(node)] = node.value
                continue
            value = node._forward(*[fresh[id(p)] for p in node.parents])
            if not np.array_equal(value, node.value):
                return False
            fresh[id(node)] = value
        return True


class Node:
    """One recorded value: a 2-D float64 array plus its provenance."""

    __slots__ = ("tape", "value", "parents", "_forward", "_vjp", "name")

    def __init__(self, tape, value, parents, forward, vjp, name=""):
        self.tape = tape
        self.value = value
        self.parents = parents
        self._forward = forward
        self._vjp = vjp
        self.name = name
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node({self.name or 'op'}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(_coerce(self.tape, other), -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _coerce(tape, other):
    if isinstance(other, Node):
        return other
    arr = np.asarray(other, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    return tape.constant(arr)


def _node(name, parents, forward, vjp):
    tape = parents[0].tape
    for p in parents[1:]:
        if p.tape is not tape:
            raise ContractError("operands were recorded on different tapes")
    return Node(tape, forward(*[p.value for p in parents]), tuple(parents), forward, vjp, name)


def _check_broadcast(sa, sb, opname):
    for da, db in zip(sa, sb):
        if da != db and da != 1 and db != 1:
            raise DimensionError(f"{opname}: shapes {sa} and {sb} do not broadcast")


def _unbroadcast(g, shape):
    # reduce a broadcast gradient back to the operand's shape
    out = g
    if out.shape[0] != shape[0]:
        out = sum0(out)
    if out.shape[1] != shape[1]:
        out = sum1(out)
    return out


def add(a, b):
    b = _coerce(a.tape, b)
    _check_broadcast(a.shape, b.shape, "add")
    return _node(
        "add", (a, b), lambda x, y: x + y,
        lambda g, out: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def mul(a, b):
    b = _coerce(a.tape, b)
    _check_broadcast(a.shape, b.shape, "mul")
    return _node(
        "mul", (a, b), lambda x, y: x * y,
        lambda g, out: (_unbroadcast(mul(g, b), a.shape), _unbroadcast(mul(g, a), b.shape)),
    )


def matmul(a, b):
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not compose")
    return _node(
        "matmul", (a, b), lambda x, y: x @ y,
        lambda g, out: (matmul(g, transpose(b)), matmul(transpose(a), g)),
    )


def transpose(a):
    return _node(
        "transpose", (a,), lambda x: np.ascontiguousarray(x.T),
        lambda g, out: (transpose(g),),
    )


def relu(a):
    mask = (a.value > 0.0).astype(np.float64)
    return _node(
        "relu", (a,), lambda x: np.maximum(x, 0.0),
        lambda g, out: (mul(g, g.tape.constant(mask, "relu-mask")),),
    )


def sqrt(a):
    if np.any(a.value < 0.0):
        raise ContractError("sqrt of a negative entry")
    # subgradient 0 where the input is exactly zero
    nonzero = (a.value != 0.0).astype(np.float64)
    pad = 1.0 - nonzero
    def vjp(g, out):
        safe = add(out, g.tape.constant(pad, "sqrt-pad"))
        return (mul(mul(g, g.tape.constant(0.5 * nonzero, "sqrt-half")), reciprocal(safe)),)
    return _node("sqrt", (a,), np.sqrt, vjp)


def reciprocal(a):
    if np.any(a.value == 0.0):
        raise ContractError("reciprocal of a zero entry")
    return _node(
        "reciprocal", (a,), lambda x: 1.0 / x,
        lambda g, out: (mul(mul(g, mul(out, out)), -1.0),),
    )


def sum0(a):
    n = a.shape[0]
    return _node(
        "sum0", (a,), lambda x: x.sum(axis=0, keepdims=True),
        lambda g, out: (broadcast0(g, n),),
    )


def sum1(a):
    d = a.shape[1]
    return _node(
        "sum1", (a,), lambda x: x.sum(axis=1, keepdims=True),
        lambda g, out: (broadcast1(g, d),),
    )


def broadcast0(a, n):
    if a.shape[0] != 1:
        raise DimensionError(f"broadcast0 expects one row, got {a.shape}")
    return _node(
        "broadcast0", (a,), lambda x: np.ascontiguousarray(np.broadcast_to(x, (n, x.shape[1]))),
        lambda g, out: (sum0(g),),
    )


def broadcast1(a, d):
    if a.shape[1] != 1:
        raise DimensionError(f"broadcast1 expects one column, got {a.shape}")
    return _node(
        "broadcast1", (a,), lambda x: np.ascontiguousarray(np.broadcast_to(x, (x.shape[0], d))),
        lambda g, out: (sum1(g),),
    )


def concat_cols(a, b):
    if a.shape[0] != b.shape[0]:
        raise DimensionError(f"concat_cols: row counts {a.shape} vs {b.shape}")
    da = a.shape[1]
    db = b.shape[1]
    return _node(
        "concat", (a, b), lambda x, y: np.concatenate([x, y], axis=1),
        lambda g, out: (slice_cols(g, 0, da), slice_cols(g, da, da + db)),
    )


def slice_cols(a, j0, j1):
    if not (0 <= j0 <= j1 <= a.shape[1]):
        raise DimensionError(f"slice_cols [{j0}:{j1}] out of range for {a.shape}")
    total = a.shape[1]
    return _node(
        "slice", (a,), lambda x: np.ascontiguousarray(x[:, j0:j1]),
        lambda g, out: (embed_cols(g, j0, total),),
    )


def embed_cols(a, j0, total):
    w = a.shape[1]
    if j0 + w > total:
        raise DimensionError(f"embed_cols [{j0}:{j0 + w}] out of range for width {total}")
    def fwd(x):
        z = np.zeros((x.shape[0], total))
        z[:, j0:j0 + w] = x
        return z
    return _node("embed", (a,), fwd, lambda g, out: (slice_cols(g, j0, j0 + w),))


def total(a):
    return sum1(sum0(a))


def mean_all(a):
    return mul(total(a), 1.0 / a.value.size)


def grad_nodes(loss: Node, wrt: Sequence[Node]) -> list[Node]:
    """Gradients of a scalar node with respect to ``wrt``, as new nodes.

    Nodes unreachable from the loss get an exact-zero gradient.
    """
    if loss.shape != (1, 1):
        raise ContractError(f"loss must be a 1x1 scalar, got shape {loss.shape}")
    tape = loss.tape
    relevant: set[int] = set()
    stack = [loss]
    while stack:
        node = stack.pop()
        if id(node) in relevant:
            continue
        relevant.add(id(node))
        stack.extend(node.parents)
    order = [n for n in tape.nodes if id(n) in relevant]  # creation order is topological
    grads: dict[int, Node] = {id(loss): tape.constant(np.ones((1, 1)), "seed")}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node._vjp is None:
            continue
        for parent, pg in zip(node.parents, node._vjp(g, node)):
            cur = grads.get(id(parent))
            grads[id(parent)] = pg if cur is None else add(cur, pg)
    out = []
    for w in wrt:
        g = grads.get(id(w))
        out.append(g if g is not None else w.tape.constant(np.zeros(w.shape), "zero-grad"))
    return out


def backward(tape: Tape, loss: Node) -> list[np.ndarray]:
    """Gradient arrays of ``loss`` for every parameter registered on the tape."""
    return [g.value for g in grad_nodes(loss, tape.parameters)]


# ---------------------------------------------------------------------------
# Three-layer MLP (ReLU on hidden layers, identity output)
# ---------------------------------------------------------------------------


@dataclass
class MlpParams:
    """Weights and biases of a 3-layer perceptron; biases are 1-row matrices."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        names = ("w1", "b1", "w2", "b2", "w3", "b3")
        for name in names:
            setattr(self, name, as_matrix(getattr(self, name), name))
        pairs = [("w1", "b1"), ("w2", "b2"), ("w3", "b3")]
        for w, b in pairs:
            wv, bv = getattr(self, w), getattr(self, b)
            if bv.shape != (1, wv.shape[1]):
                raise DimensionError(f"{b} shape {bv.shape} does not match {w} shape {wv.shape}")
        if self.w1.shape[1] != self.w2.shape[0] or self.w2.shape[1] != self.w3.shape[0]:
            raise DimensionError(
                "layer shapes do not compose: "
                f"w1 {self.w1.shape}, w2 {self.w2.shape}, w3 {self.w3.shape}"
            )

    @property
    def in_dim(self):
        return self.w1.shape[0]

    @property
    def out_dim(self):
        return self.w3.shape[1]

    def to_list(self):
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]

    @classmethod
    def from_list(cls, arrays):
        return cls(*arrays)

    def copy(self):
        return MlpParams(*[a.copy() for a in self.to_list()])


def init_mlp(in_dim, hidden_dim, out_dim, rng) -> MlpParams:
    """Seeded uniform init in +-sqrt(6/(fan_in+fan_out)); zero biases."""
    def layer(fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))
    return MlpParams(
        layer(in_dim, hidden_dim), np.zeros((1, hidden_dim)),
        layer(hidden_dim, hidden_dim), np.zeros((1, hidden_dim)),
        layer(hidden_dim, out_dim), np.zeros((1, out_dim)),
    )


@dataclass
class MlpNodes:
    """The six parameter nodes of one MLP bound to a tape."""

    w1: Node
    b1: Node
    w2: Node
    b2: Node
    w3: Node
    b3: Node

    def to_list(self):
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]


def bind(tape: Tape, params: MlpParams, trainable=True) -> MlpNodes:
    """Register the parameters on a tape (as constants when not trainable)."""
    reg = tape.parameter if trainable else tape.constant
    arrays = params.to_list()
    names = ("w1", "b1", "w2", "b2", "w3", "b3")
    return MlpNodes(*[reg(a, n) for a, n in zip(arrays, names)])


def forward_nodes(nodes: MlpNodes, x: Node) -> Node:
    h1 = relu(add(matmul(x, nodes.w1), nodes.b1))
    h2 = relu(add(matmul(h1, nodes.w2), nodes.b2))
    return add(matmul(h2, nodes.w3), nodes.b3)


def mlp_forward(params: MlpParams, x, tape: Tape | None = None) -> np.ndarray:
    """Batch forward pass; rows of ``x`` are independent samples."""
    x = as_matrix(x, "input")
    if x.shape[1] != params.in_dim:
        raise DimensionError(f"input has {x.shape[1]} columns, net expects {params.in_dim}")
    if tape is None:
        h1 = np.maximum(x @ params.w1 + params.b1, 0.0)
        h2 = np.maximum(h1 @ params.w2 + params.b2, 0.0)
        return h2 @ params.w3 + params.b3
    return forward_nodes(bind(tape, params), tape.constant(x, "input")).value


def input_gradient_nodes(nodes: MlpNodes, x: Node, condition: Node | None) -> Node:
    """Per-row gradient of a scalar-output net with respect to ``x``.

    Rows are independent, so differentiating the sum of outputs stacks the
    per-row gradients. The returned node is differentiable further.
    """
    inp = x if condition is None else concat_cols(x, condition)
    out = forward_nodes(nodes, inp)
    if out.shape[1] != 1:
        raise ContractError(f"net output must be one column, got {out.shape}")
    return grad_nodes(total(out), [x])[0]


def input_gradient(params: MlpParams, x, condition=None, tape: Tape | None = None) -> np.ndarray:
    """Gradient of the net's scalar output with respect to the x-part of its input."""
    tape = tape if tape is not None else Tape()
    nodes = bind(tape, params)
    xn = tape.constant(as_matrix(x, "x"), "x")
    cn = None if condition is None else tape.constant(as_matrix(condition, "condition"), "condition")
    return input_gradient_nodes(nodes, xn, cn).value


@dataclass
class GradientPenalty:
    """Penalty value, per-parameter gradients, and the zero-gradient-row flag."""

    value: float
    grads: list[np.ndarray]  # aligned with MlpParams.to_list()
    zero_norm_rows: int


def penalty_nodes(nodes: MlpNodes, x_bar: Node, condition: Node | None, lam: float):
    """lam * mean over rows of (||d out / d x_bar||_2 - 1)^2, as a node.

    Rows with an exactly zero input gradient take the subgradient 0 of the
    norm; their count is returned for diagnostics.
    """
    g = input_gradient_nodes(nodes, x_bar, condition)
    sumsq = sum1(mul(g, g))
    zero_rows = int(np.count_nonzero(sumsq.value == 0.0))
    norm = sqrt(sumsq)
    diff = add(norm, -1.0)
    return mul(mean_all(mul(diff, diff)), lam), zero_rows


def gradient_penalty(params: MlpParams, x_bar, condition=None, lam=10.0) -> GradientPenalty:
    """Gradient-norm penalty and its parameter gradients via double backprop."""
    if lam < 0:
        raise ContractError(f"penalty weight must be >= 0, got {lam}")
    x_bar = as_matrix(x_bar, "x_bar")
    if x_bar.shape[0] == 0:
        raise ContractError("x_bar must be non-empty")
    tape = Tape()
    nodes = bind(tape, params)
    xn = tape.constant(x_bar, "x_bar")
    cn = None if condition is None else tape.constant(as_matrix(condition, "condition"), "condition")
    pen, zero_rows = penalty_nodes(nodes, xn, cn, lam)
    return GradientPenalty(float(pen.value[0, 0]), backward(tape, pen), zero_rows)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """Moment accumulators and hyper-parameters for one parameter list."""

    learning_rate: float
    beta1: float
    beta2: float
    eps: float
    m: list
    v: list
    step: int = 0


def adam_init(params, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    return AdamState(
        learning_rate, beta1, beta2, eps,
        [np.zeros_like(p) for p in params],
        [np.zeros_like(p) for p in params],
    )


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update; returns (new params, state)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError("parameter, gradient and state lists differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise DimensionError(f"gradient shape {g.shape} does not match parameter {p.shape}")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient", step=state.step + 1)
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    new_params = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        new_params.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps))
    return new_params, state

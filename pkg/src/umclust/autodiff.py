"""Reverse-mode differentiation over dense float64 matrices.

Every value in the graph is a 2-D, row-major ``numpy.float64`` array; scalars
are 1x1 matrices. Operations evaluate eagerly and record a node with the
vector-Jacobian products needed for the backward pass. ``backward`` walks the
tape once in reverse topological order, so each node is visited exactly once
and gradient accumulation is deterministic for a fixed graph.

Numerical conventions:

* every operation validates that its result is finite and raises
  ``NumericError`` otherwise;
* ``row_softmax`` subtracts the row maximum before exponentiating;
* ``log`` clamps its argument to ``LOG_FLOOR`` (1e-12) so that divergence
  terms stay finite, with subgradient 0 below the floor;
* ``sqrt`` uses subgradient 0 at exactly 0.
"""

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .util import NumericError

LOG_FLOOR = 1e-12


def as_value(x) -> np.ndarray:
    """Coerce scalars / vectors / matrices to a contiguous 2-D float64 array."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise ValueError(f"expected at most 2 dimensions, got {a.ndim}")
    return np.ascontiguousarray(a)


class Node:
    """One value in the computation graph.

    ``parents`` and ``vjps`` are aligned: ``vjps[i]`` maps the gradient at
    this node to the gradient contribution for ``parents[i]``.
    """

    __slots__ = ("value", "op", "parents", "vjps", "requires_grad", "grad")

    def __init__(self, value, op, parents=(), vjps=(), requires_grad=None):
        self.value = value
        self.op = op
        self.parents: tuple["Node", ...] = tuple(parents)
        self.vjps: tuple[Callable[[np.ndarray], np.ndarray], ...] = tuple(vjps)
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in self.parents)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ValueError(f"item() on non-scalar node of shape {self.value.shape}")
        return float(self.value[0, 0])

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape})"


def constant(x) -> Node:
    return Node(as_value(x), "const")


class Parameter:
    """Trainable leaf plus zero-initialized optimizer moment buffers.

    The buffers (``m`` for momentum / first moment, ``v`` for the second
    moment) share the leaf's shape and never change shape afterwards.
    """

    __slots__ = ("node", "m", "v")

    def __init__(self, value):
        self.node = Node(as_value(value).copy(), "param", requires_grad=True)
        self.m = np.zeros_like(self.node.value)
        self.v = np.zeros_like(self.node.value)

    @property
    def value(self) -> np.ndarray:
        return self.node.value

    @property
    def grad(self) -> np.ndarray | None:
        return self.node.grad


def zero_grad(params: Sequence[Parameter]) -> None:
    for p in params:
        p.node.grad = None


def _wrap(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def _make(op, value, parents, vjps) -> Node:
    if not np.isfinite(value).all():
        raise NumericError(f"non-finite result in operation '{op}'")
    return Node(value, op, parents, vjps)


# ---------------------------------------------------------------------------
# primitives


def matmul(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = a.value @ b.value
    return _make("matmul", out, (a, b),
                 (lambda g: g @ b.value.T, lambda g: a.value.T @ g))


def add(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return _make("add", a.value + b.value, (a, b), (lambda g: g, lambda g: g))


def subtract(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    if a.shape != b.shape:
        raise ValueError(f"subtract shape mismatch: {a.shape} vs {b.shape}")
    return _make("subtract", a.value - b.value, (a, b), (lambda g: g, lambda g: -g))


def multiply(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    if a.shape != b.shape:
        raise ValueError(f"multiply shape mismatch: {a.shape} vs {b.shape}")
    return _make("multiply", a.value * b.value, (a, b),
                 (lambda g: g * b.value, lambda g: g * a.value))


def broadcast_add_row(a, row) -> Node:
    """Add a 1 x c row vector to every row of an n x c matrix."""
    a, row = _wrap(a), _wrap(row)
    if row.shape[0] != 1 or row.shape[1] != a.shape[1]:
        raise ValueError(f"broadcast_add_row: {a.shape} + {row.shape}")
    return _make("broadcast_add_row", a.value + row.value, (a, row),
                 (lambda g: g, lambda g: g.sum(axis=0, keepdims=True)))


def relu(a) -> Node:
    a = _wrap(a)
    mask = a.value > 0.0
    return _make("relu", np.where(mask, a.value, 0.0), (a,), (lambda g: g * mask,))


def softmax_rows_value(x: np.ndarray) -> np.ndarray:
    """Row softmax of a raw array, stabilized by row-max subtraction."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def row_softmax(a) -> Node:
    a = _wrap(a)
    y = softmax_rows_value(a.value)

    def vjp(g, y=y):
        return y * (g - (g * y).sum(axis=1, keepdims=True))

    return _make("row_softmax", y, (a,), (vjp,))


def transpose(a) -> Node:
    a = _wrap(a)
    return _make("transpose", np.ascontiguousarray(a.value.T), (a,),
                 (lambda g: np.ascontiguousarray(g.T),))


def frobenius_sq(a) -> Node:
    a = _wrap(a)
    out = np.array([[float(np.sum(a.value * a.value))]])
    return _make("frobenius_sq", out, (a,), (lambda g: (2.0 * g[0, 0]) * a.value,))


def scale(a, s: float) -> Node:
    a = _wrap(a)
    s = float(s)
    return _make("scale", s * a.value, (a,), (lambda g: s * g,))


def mean_all(a) -> Node:
    a = _wrap(a)
    n = a.value.size
    out = np.array([[float(a.value.mean())]])
    return _make("mean_all", out, (a,),
                 (lambda g: np.full(a.shape, g[0, 0] / n),))


def sum_all(a) -> Node:
    a = _wrap(a)
    out = np.array([[float(a.value.sum())]])
    return _make("sum_all", out, (a,), (lambda g: np.full(a.shape, g[0, 0]),))


def sum_rows(a) -> Node:
    """Collapse the row dimension: column sums, result shape 1 x c."""
    a = _wrap(a)
    out = a.value.sum(axis=0, keepdims=True)
    return _make("sum_rows", out, (a,),
                 (lambda g: np.broadcast_to(g, a.shape).copy(),))


def log(a) -> Node:
    """Natural log with the argument clamped to LOG_FLOOR."""
    a = _wrap(a)
    clamped = np.maximum(a.value, LOG_FLOOR)
    above = a.value > LOG_FLOOR

    def vjp(g, clamped=clamped, above=above):
        return np.where(above, g / clamped, 0.0)

    return _make("log", np.log(clamped), (a,), (vjp,))


def sqrt(a) -> Node:
    a = _wrap(a)
    if (a.value < 0.0).any():
        raise ValueError("sqrt of negative entries")
    y = np.sqrt(a.value)

    def vjp(g, y=y):
        return np.where(y > 0.0, 0.5 * g / np.where(y > 0.0, y, 1.0), 0.0)

    return _make("sqrt", y, (a,), (vjp,))


def reciprocal(a) -> Node:
    a = _wrap(a)
    if (a.value <= 0.0).any():
        raise ValueError("reciprocal requires strictly positive entries")
    y = 1.0 / a.value
    return _make("reciprocal", y, (a,), (lambda g: -g * y * y,))


def sq_euclidean_to_rows(a, points: np.ndarray) -> Node:
    """Squared Euclidean distance of each row of ``a`` to each constant row.

    ``points`` is a k x d array treated as constant: the result is n x k and
    gradients flow only into ``a``.
    """
    a = _wrap(a)
    pts = as_value(points)
    if pts.shape[1] != a.shape[1]:
        raise ValueError(f"sq_euclidean_to_rows: {a.shape} vs points {pts.shape}")
    diff_sq = (a.value * a.value).sum(axis=1, keepdims=True) \
        - 2.0 * (a.value @ pts.T) + (pts * pts).sum(axis=1)[None, :]
    out = np.maximum(diff_sq, 0.0)

    def vjp(g, pts=pts):
        return 2.0 * (g.sum(axis=1, keepdims=True) * a.value - g @ pts)

    return _make("sq_euclidean_to_rows", out, (a,), (vjp,))


# ---------------------------------------------------------------------------
# backward pass


def _topo(root: Node) -> list[Node]:
    """Post-order over the subgraph that can reach a trainable leaf."""
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Node) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable trainable leaf.

    ``loss`` must be scalar (1x1). Non-trainable leaves are skipped entirely.
    """
    if loss.shape != (1, 1):
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topo(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones((1, 1))
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in zip(node.parents, node.vjps):
            if not parent.requires_grad:
                continue
            contrib = vjp(g)
            if contrib.shape != parent.shape:
                raise AssertionError(
                    f"vjp shape {contrib.shape} != parent shape {parent.shape} in '{node.op}'")
            if parent.grad is None:
                parent.grad = contrib.copy()
            else:
                parent.grad += contrib


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_param: int
    worst_index: int
    analytic: float
    numeric: float

    def __str__(self):
        return (f"max rel err {self.max_rel_err:.3e} at param {self.worst_param}"
                f"[{self.worst_index}] (analytic {self.analytic:.6e},"
                f" numeric {self.numeric:.6e})")


def grad_check(build_loss: Callable[[], Node], params: Sequence[Parameter],
               step: float = 1e-5) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``build_loss`` must be deterministic and rebuild the loss graph from the
    current values of ``params``. Entries where the analytic gradient is
    below 1e-8 in magnitude are compared by absolute error instead of
    relative error.
    """
    if not 1e-7 <= step <= 1e-3:
        raise ValueError(f"step {step} outside [1e-7, 1e-3]")
    zero_grad(params)
    loss = build_loss()
    backward(loss)
    analytic = [np.zeros_like(p.value) if p.grad is None else p.grad.copy()
                for p in params]

    def eval_loss() -> float:
        val = build_loss().item()
        if not np.isfinite(val):
            raise NumericError("non-finite loss during finite differencing")
        return val

    report = GradCheckReport(0.0, -1, -1, 0.0, 0.0)
    for pi, p in enumerate(params):
        flat = p.value.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            f_plus = eval_loss()
            flat[j] = orig - step
            f_minus = eval_loss()
            flat[j] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(analytic[pi].reshape(-1)[j])
            if abs(a) < 1e-8:
                err = abs(a - numeric)
            else:
                err = abs(a - numeric) / max(abs(a), abs(numeric))
            if err > report.max_rel_err:
                report = GradCheckReport(err, pi, j, a, numeric)
    zero_grad(params)
    return report

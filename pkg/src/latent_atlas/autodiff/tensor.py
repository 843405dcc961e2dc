"""Dense float64 tensors with a reverse-mode tape.

Every op that touches a tensor with ``requires_grad`` records a node holding
its parents and a closure mapping the output gradient to parent gradients.
Node ids come from a process-wide counter, so sorting the reachable nodes by
id gives a valid topological order without recursion. A backward pass frees
the closures of every interior node it visits; running it again on the same
graph raises :class:`TapeConsumed`.

Broadcasting is deliberately limited to adding a 1-D vector along the last
axis (bias-add) and multiplying by a Python scalar.
"""

import contextlib
import contextvars
import itertools

import numpy as np

from ..errors import NonFiniteError, NotScalar, ShapeError, TapeConsumed

_ids = itertools.count()
_grad_enabled = contextvars.ContextVar("grad_enabled", default=True)


class _Consumed:
    def __repr__(self):
        return "<consumed>"


_CONSUMED = _Consumed()


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled():
    return _grad_enabled.get()


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node_id", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.node_id = next(_ids) if requires_grad else None
        self.op = "leaf"
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data.copy())

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        if not np.isscalar(other):
            raise ShapeError("division is only supported by a Python scalar")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    @property
    def T(self):
        return transpose(self)

    def backward(self):
        return backward(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(op, out, parents, backward_fn):
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"non-finite value produced by {op}")
    t = Tensor.__new__(Tensor)
    t.data = out
    t.grad = None
    t.op = op
    if _grad_enabled.get() and any(p.requires_grad for p in parents):
        t.requires_grad = True
        t.node_id = next(_ids)
        t._parents = parents
        t._backward = backward_fn
    else:
        t.requires_grad = False
        t.node_id = None
        t._parents = ()
        t._backward = None
    return t


def _is_bias(a, b):
    return b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0] and a.shape != b.shape


def _reduce_bias(g):
    return g.reshape(-1, g.shape[-1]).sum(axis=0)


# -- elementwise arithmetic ---------------------------------------------------

def add(a, b):
    if np.isscalar(b):
        a = as_tensor(a)
        return _record("add", a.data + b, (a,), lambda g: (g,))
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        return _record("add", a.data + b.data, (a, b), lambda g: (g, g))
    if _is_bias(a, b):
        return _record("add", a.data + b.data, (a, b), lambda g: (g, _reduce_bias(g)))
    if _is_bias(b, a):
        return _record("add", a.data + b.data, (a, b), lambda g: (_reduce_bias(g), g))
    raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")


def sub(a, b):
    if np.isscalar(b):
        return add(a, -b)
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        return _record("sub", a.data - b.data, (a, b), lambda g: (g, -g))
    if _is_bias(a, b):
        return _record("sub", a.data - b.data, (a, b), lambda g: (g, -_reduce_bias(g)))
    raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}")


def mul(a, b):
    if np.isscalar(b):
        a = as_tensor(a)
        s = float(b)
        return _record("mul", a.data * s, (a,), lambda g: (g * s,))
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    return _record("mul", ad * bd, (a, b), lambda g: (g * bd, g * ad))


def matmul(a, b):
    """Matrix product of 2-D operands, or batched product of 3-D operands."""
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    ok = (ad.ndim == 2 and bd.ndim == 2 and ad.shape[1] == bd.shape[0]) or (
        ad.ndim == 3 and bd.ndim == 3 and ad.shape[0] == bd.shape[0] and ad.shape[2] == bd.shape[1]
    )
    if not ok:
        raise ShapeError(f"matmul: incompatible shapes {ad.shape} and {bd.shape}")

    def backward(g):
        return g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g

    return _record("matmul", ad @ bd, (a, b), backward)


# -- nonlinearities -----------------------------------------------------------

def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _record("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x):
    x = as_tensor(x)
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _record("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return _record("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def exp(x):
    x = as_tensor(x)
    with np.errstate(over="ignore"):  # overflow is reported by _record
        y = np.exp(x.data)
    return _record("exp", y, (x,), lambda g: (g * y,))


def softmax(x, axis=-1):
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _record("softmax", y, (x,), backward)


# -- shape manipulation -------------------------------------------------------

def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {[t.shape for t in tensors]}: {exc}") from None
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        return tuple(
            np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:])
        )

    return _record("concat", out, tuple(tensors), backward)


def stack(tensors, axis=0):
    expanded = []
    for t in tensors:
        t = as_tensor(t)
        shape = list(t.shape)
        shape.insert(axis if axis >= 0 else len(shape) + 1 + axis, 1)
        expanded.append(reshape(t, tuple(shape)))
    return concat(expanded, axis=axis)


def take(x, index):
    """Basic (slice/int) indexing."""
    x = as_tensor(x)
    out = x.data[index]
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        full[index] += g
        return (full,)

    return _record("slice", np.array(out), (x,), backward)


def transpose(x, axes=None):
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))
    return _record("transpose", np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def reshape(x, shape):
    x = as_tensor(x)
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {old} as {shape}") from None
    return _record("reshape", out, (x,), lambda g: (g.reshape(old),))


# -- reductions and losses ----------------------------------------------------

def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    x = as_tensor(x)
    shape = x.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record("sum", np.array(x.data.sum(axis=axis, keepdims=keepdims)), (x,), backward)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def mse(pred, target):
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse: prediction {pred.shape} vs target {target.shape}")
    diff = pred.data - target.data
    scale = 2.0 / diff.size

    def backward(g):
        gd = g * scale * diff
        return gd, -gd

    return _record("mse", np.array(np.mean(diff * diff)), (pred, target), backward)


def cosine_matrix(a, b, eps=1e-12):
    """Row-wise cosine similarities: ``out[i, j] = cos(a[i], b[j])``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"cosine_matrix: incompatible shapes {a.shape} and {b.shape}")
    na = np.linalg.norm(a.data, axis=1, keepdims=True)
    nb = np.linalg.norm(b.data, axis=1, keepdims=True)
    if na.min() < eps or nb.min() < eps:
        raise NonFiniteError("cosine_matrix: zero-norm row")
    ua, ub = a.data / na, b.data / nb
    c = ua @ ub.T

    def backward(g):
        ga = (g @ ub - ua * (g * c).sum(axis=1, keepdims=True)) / na
        gb = (g.T @ ua - ub * (g * c).sum(axis=0)[:, None]) / nb
        return ga, gb

    return _record("cosine_matrix", c, (a, b), backward)


# -- backward pass ------------------------------------------------------------

def backward(loss):
    """Propagate ``d loss / d loss = 1`` through the tape.

    Returns a dict mapping every reachable leaf with ``requires_grad`` to its
    gradient; the same array is stored on ``leaf.grad``.
    """
    if loss.size != 1:
        raise NotScalar(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._backward is _CONSUMED:
        raise TapeConsumed("this graph was already differentiated; run the forward pass again")
    if not loss.requires_grad:
        return {}

    nodes = {}
    stack_ = [loss]
    while stack_:
        node = stack_.pop()
        if node.node_id in nodes:
            continue
        if node._backward is _CONSUMED:
            raise TapeConsumed(f"graph contains a consumed node ({node.op})")
        nodes[node.node_id] = node
        stack_.extend(p for p in node._parents if p.requires_grad and p.node_id not in nodes)

    grads = {loss.node_id: np.ones_like(loss.data)}
    leaves = {}
    for node_id in sorted(nodes, reverse=True):
        node = nodes[node_id]
        g = grads.pop(node_id, None)
        if node._backward is None:
            leaf_grad = np.zeros_like(node.data) if g is None else g
            node.grad = leaf_grad
            leaves[node] = leaf_grad
            continue
        if g is not None:
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.node_id in grads:
                    grads[parent.node_id] = grads[parent.node_id] + pg
                else:
                    grads[parent.node_id] = pg
        node._parents = ()
        node._backward = _CONSUMED
    return leaves


def grad(loss, params):
    """Gradients of ``loss`` for each tensor in ``params`` (zeros when disconnected)."""
    leaves = backward(loss)
    return [leaves.get(p, np.zeros_like(p.data)) for p in params]

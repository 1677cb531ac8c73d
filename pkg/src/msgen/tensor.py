"""Dense tensors with a reverse-mode autodiff graph.

Every differentiable operation returns a new :class:`Tensor` that remembers its
parents and a closure mapping the output cotangent to parent cotangents. The
graph built during a forward pass is the tape; :func:`grad` walks it once in
reverse topological order.

Training runs in float32. Gradient checking switches to float64 through
:func:`precision`.
"""

import contextlib

import numpy as np
from scipy.special import expit

from .errors import ContractError, DomainError, NumericError, ShapeError

_DTYPES = {"f32": np.float32, "f64": np.float64}
_default_dtype = np.float32


def default_dtype():
    return _default_dtype


def set_precision(name):
    global _default_dtype
    if name not in _DTYPES:
        raise DomainError(f"unknown precision {name!r}; expected one of {sorted(_DTYPES)}")
    _default_dtype = _DTYPES[name]


@contextlib.contextmanager
def precision(name):
    """Temporarily change the dtype used for newly created tensors."""
    global _default_dtype
    previous = _default_dtype
    set_precision(name)
    try:
        yield
    finally:
        _default_dtype = previous


def _freeze(arr):
    arr.flags.writeable = False
    return arr


def _check_finite(out, op):
    if not np.isfinite(out).all():
        raise NumericError(f"{op} produced non-finite values")
    return out


class Tensor:
    """An immutable n-d array that can take part in a differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.array(data, dtype=dtype or _default_dtype)
        _check_finite(arr, "Tensor")
        self.data = _freeze(arr)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.op = "leaf"

    @classmethod
    def _result(cls, data, parents, backward, op):
        out = cls.__new__(cls)
        _check_finite(data, op)
        out.data = _freeze(np.asarray(data))
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        out.op = op
        return out

    # -- array protocol ---------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data, dtype=self.data.dtype)

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    # -- operators --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def softplus(self):
        return softplus(self)

    def square(self):
        return square(self)

    def sqrt(self):
        return sqrt(self)

    def backward(self):
        """Populate ``.grad`` on every leaf reachable from this scalar."""
        leaves = [n for n in _topo_order(self) if n.requires_grad and n._backward is None]
        for leaf, g in zip(leaves, grad(self, leaves)):
            leaf.grad = g


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- binary elementwise ---------------------------------------------------
def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return Tensor._result(a.data + b.data, (a, b), backward, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return Tensor._result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    ad, bd = a.data, b.data

    def backward(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return Tensor._result(ad * bd, (a, b), backward, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    if np.any(b.data == 0):
        raise DomainError("div: division by zero")
    ad, bd = a.data, b.data
    out = ad / bd

    def backward(g):
        return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)

    return Tensor._result(out, (a, b), backward, "div")


# -- unary elementwise ----------------------------------------------------
def neg(a):
    a = as_tensor(a)
    return Tensor._result(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a):
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return Tensor._result(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log of non-positive input")
    ad = a.data
    return Tensor._result(np.log(ad), (a,), lambda g: (g / ad,), "log")


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return Tensor._result(out, (a,), lambda g: (g * (1 - out * out),), "tanh")


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return Tensor._result(np.where(mask, a.data, 0).astype(a.dtype), (a,),
                          lambda g: (g * mask,), "relu")


def _sigmoid(x):
    return expit(x)


def sigmoid(a):
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return Tensor._result(out, (a,), lambda g: (g * out * (1 - out),), "sigmoid")


def softplus(a):
    """log(1 + e^x), stable for large |x|."""
    a = as_tensor(a)
    ad = a.data
    out = np.logaddexp(ad.dtype.type(0), ad)
    return Tensor._result(out, (a,), lambda g: (g * _sigmoid(ad),), "softplus")


def square(a):
    a = as_tensor(a)
    ad = a.data
    return Tensor._result(ad * ad, (a,), lambda g: (2 * g * ad,), "square")


def sqrt(a):
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("sqrt requires strictly positive input")
    out = np.sqrt(a.data)
    return Tensor._result(out, (a,), lambda g: (0.5 * g / out,), "sqrt")


def clip(a, lo, hi):
    """Clamp to [lo, hi]; gradient is zero where the clamp is active."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    out = np.clip(a.data, lo, hi)
    return Tensor._result(out, (a,), lambda g: (g * inside,), "clip")


# -- linear algebra and reductions ----------------------------------------
def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims differ ({a.shape} @ {b.shape})")
    ad, bd = a.data, b.data

    def backward(g):
        return g @ bd.T, ad.T @ g

    return Tensor._result(ad @ bd, (a, b), backward, "matmul")


def _normalize_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    axis = tuple(axis)
    if len(axis) == 0:
        raise DomainError("reduction over an empty axis set")
    out = []
    for ax in axis:
        if not -ndim <= ax < ndim:
            raise DomainError(f"axis {ax} out of range for rank {ndim}")
        out.append(ax % ndim)
    if len(set(out)) != len(out):
        raise DomainError(f"repeated axis in {axis}")
    return tuple(sorted(out))


def _expand_reduced(g, shape, axes, keepdims):
    if not keepdims:
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def reduce_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    shape = a.shape

    def backward(g):
        return (np.array(_expand_reduced(g, shape, axes, keepdims)),)

    return Tensor._result(a.data.sum(axis=axes, keepdims=keepdims), (a,), backward, "sum")


def reduce_mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    shape = a.shape
    n = int(np.prod([shape[i] for i in axes]))

    def backward(g):
        return (np.array(_expand_reduced(g, shape, axes, keepdims)) / n,)

    return Tensor._result(a.data.mean(axis=axes, keepdims=keepdims), (a,), backward, "mean")


def logsumexp(a, axis, keepdims=False):
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    ad = a.data
    m = ad.max(axis=axes, keepdims=True)
    s = np.exp(ad - m).sum(axis=axes, keepdims=True)
    out_k = m + np.log(s)
    soft = np.exp(ad - out_k)
    out = out_k if keepdims else np.squeeze(out_k, axis=axes)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (g * soft,)

    return Tensor._result(out, (a,), backward, "logsumexp")


# -- shape manipulation ---------------------------------------------------
def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {old} into {shape}") from None
    return Tensor._result(out, (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return Tensor._result(a.data.transpose(axes), (a,),
                          lambda g: (g.transpose(inverse),), "transpose")


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._result(out, tensors, backward, "concat")


def take(a, index):
    """Basic or advanced indexing; repeated indices accumulate gradient."""
    a = as_tensor(a)
    shape, dtype = a.shape, a.dtype
    if isinstance(index, Tensor):
        raise ShapeError("index with numpy arrays or slices, not tensors")

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, index, g)
        return (full,)

    return Tensor._result(a.data[index], (a,), backward, "take")


# -- reverse pass ---------------------------------------------------------
def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def grad(root, leaves):
    """Gradients of scalar ``root`` with respect to each tensor in ``leaves``.

    Leaves the graph never touched get zeros.
    """
    if root.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    order = _topo_order(root)
    wanted = {id(leaf) for leaf in leaves}
    grads = {id(root): np.ones_like(root.data)}
    found = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if id(node) in wanted:
            found[id(node)] = g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    out = []
    for leaf in leaves:
        g = found.get(id(leaf))
        if g is None:
            g = np.zeros(leaf.shape, dtype=leaf.dtype)
        out.append(_check_finite(np.asarray(g, dtype=leaf.dtype).reshape(leaf.shape), "backward"))
    return out


def backward(root, leaves):
    """Alias of :func:`grad` kept for symmetry with the forward API."""
    return grad(root, leaves)


def grad_check(f, x, h=1e-5, coords=None):
    """Max relative error between autodiff and central finite differences.

    ``f`` maps a float64 Tensor shaped like ``x`` to a scalar Tensor. The error
    per coordinate is ``|g_ad - g_fd| / max(1, |g_fd|)``. ``coords`` restricts
    the check to a subset of flat indices.
    """
    x = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    with precision("f64"):
        xt = Tensor(x, requires_grad=True)
        (g_ad,) = grad(f(xt), [xt])
        flat = x.ravel()
        idx = range(flat.size) if coords is None else coords
        worst = 0.0
        for i in idx:
            plus, minus = flat.copy(), flat.copy()
            plus[i] += h
            minus[i] -= h
            fp = f(Tensor(plus.reshape(x.shape))).item()
            fm = f(Tensor(minus.reshape(x.shape))).item()
            g_fd = (fp - fm) / (2 * h)
            if not np.isfinite(g_fd):
                raise NumericError(f"finite difference at coordinate {i} is not finite")
            err = abs(g_ad.ravel()[i] - g_fd) / max(1.0, abs(g_fd))
            worst = max(worst, err)
    return worst

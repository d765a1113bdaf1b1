"""Small reverse-mode automatic differentiation over float64 numpy arrays.

Graphs are built eagerly: every primitive computes its value when called
and records a closure that maps the upstream gradient to gradients for its
parents. ``backward`` walks the graph in reverse topological order.

Broadcasting is deliberately limited to adding (or scaling by) a vector
along the last axis; every other primitive wants matching shapes and
raises ``ShapeError`` naming itself otherwise.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, ShapeError

LN_EPS = 1e-5


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "parents", "op", "_backward", "name")

    def __init__(self, value, requires_grad=False, parents=(), op="leaf", backward=None, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.op = op
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, as_tensor(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def param(value, name=None) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


def _node(value, parents, op, backward):
    req = any(p.requires_grad for p in parents)
    return Tensor(value, requires_grad=req, parents=tuple(parents), op=op, backward=backward if req else None)


def _is_row_vector_of(b, a):
    return b.ndim == 1 and a.ndim >= 1 and b.shape[0] == a.shape[-1]


def _sum_to_row(g):
    return g.reshape(-1, g.shape[-1]).sum(axis=0)


# ---- elementwise -------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape == b.shape:
        return _node(a.value + b.value, (a, b), "add", lambda g: (g, g))
    if _is_row_vector_of(b.value, a.value):
        return _node(a.value + b.value, (a, b), "add", lambda g: (g, _sum_to_row(g)))
    raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}")
    return _node(a.value - b.value, (a, b), "sub", lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.value, b.value
    if a.shape == b.shape:
        return _node(av * bv, (a, b), "mul", lambda g: (g * bv, g * av))
    if _is_row_vector_of(bv, av):
        return _node(av * bv, (a, b), "mul", lambda g: (g * bv, _sum_to_row(g * av)))
    raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")


def scale(a: Tensor, c: float) -> Tensor:
    return _node(a.value * c, (a,), "scale", lambda g: (g * c,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    return _node(a.value + c, (a,), "add_scalar", lambda g: (g,))


def relu(a: Tensor) -> Tensor:
    pos = a.value > 0
    return _node(np.where(pos, a.value, 0.0), (a,), "relu", lambda g: (g * pos,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.value)
    return _node(out, (a,), "exp", lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    v = a.value
    return _node(np.log(v), (a,), "log", lambda g: (g / v,))


# ---- reductions and reshaping ------------------------------------------------

def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _node(np.array(a.value.sum()), (a,), "sum", lambda g: (np.broadcast_to(g, shape).copy(),))


def mean_all(a: Tensor) -> Tensor:
    shape, n = a.shape, a.value.size
    return _node(np.array(a.value.mean()), (a,), "mean", lambda g: (np.full(shape, g / n),))


def sum_last(a: Tensor) -> Tensor:
    shape = a.shape
    return _node(a.value.sum(axis=-1), (a,), "sum_last",
                 lambda g: (np.broadcast_to(g[..., None], shape).copy(),))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    try:
        out = a.value.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {old} to {shape}") from None
    return _node(out, (a,), "reshape", lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(a.value.ndim)):
        raise ShapeError(f"transpose: bad axes {axes} for shape {a.shape}")
    inv = tuple(np.argsort(axes))
    return _node(a.value.transpose(axes), (a,), "transpose", lambda g: (g.transpose(inv),))


def swap_last(a: Tensor) -> Tensor:
    nd = a.value.ndim
    return transpose(a, tuple(range(nd - 2)) + (nd - 1, nd - 2))


def index(a: Tensor, key) -> Tensor:
    shape = a.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, key, g)
        return (out,)

    return _node(a.value[key], (a,), "index", back)


# ---- linear algebra ----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(..., m, k) @ (k, n) or (..., m, k) @ (..., k, n) with identical batch dims."""
    av, bv = a.value, b.value
    if av.ndim < 2 or bv.ndim < 2 or av.shape[-1] != bv.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    if bv.ndim == 2:
        def back(g):
            ga = g @ bv.T
            gb = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb
    elif av.shape[:-2] == bv.shape[:-2]:
        def back(g):
            return g @ np.swapaxes(bv, -1, -2), np.swapaxes(av, -1, -2) @ g
    else:
        raise ShapeError(f"matmul: batch dims differ, {a.shape} vs {b.shape}")
    return _node(av @ bv, (a, b), "matmul", back)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return y if b is None else add(y, b)


# ---- normalisation / probabilities --------------------------------------------

def softmax(a: Tensor) -> Tensor:
    """Row softmax over the last axis; -inf entries get probability 0."""
    z = a.value - a.value.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _node(s, (a,), "softmax", back)


def log_softmax(a: Tensor) -> Tensor:
    z = a.value - a.value.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    s = np.exp(out)
    return _node(out, (a,), "log_softmax", lambda g: (g - s * g.sum(axis=-1, keepdims=True),))


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LN_EPS) -> Tensor:
    xv = x.value
    E = xv.shape[-1]
    if gamma.shape != (E,) or beta.shape != (E,):
        raise ShapeError(f"layer_norm: scale/shift must have shape ({E},), got {gamma.shape}, {beta.shape}")
    mu = xv.mean(axis=-1, keepdims=True)
    var = ((xv - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xv - mu) * inv
    gv = gamma.value

    def back(g):
        dxhat = g * gv
        dx = inv / E * (E * dxhat - dxhat.sum(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        return dx, _sum_to_row(g * xhat), _sum_to_row(g)

    return _node(xhat * gv + beta.value, (x, gamma, beta), "layer_norm", back)


def embedding(W: Tensor, ids) -> Tensor:
    """Gather rows of W; output shape ids.shape + (E,)."""
    ids = np.asarray(ids, dtype=np.int64)
    V = W.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        raise DomainError(f"embedding: token id outside [0, {V})")
    shape = W.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, shape[1]))
        return (out,)

    return _node(W.value[ids], (W,), "embedding", back)


def masked_mean(x: Tensor, mask) -> Tensor:
    """Mean over axis -2 of rows whose mask is 1: (..., T, E), (..., T) -> (..., E)."""
    m = np.asarray(mask, dtype=np.float64)
    if m.shape != x.shape[:-1]:
        raise ShapeError(f"masked_mean: mask shape {m.shape} does not match {x.shape[:-1]}")
    count = m.sum(axis=-1, keepdims=True)
    if np.any(count == 0):
        raise DomainError("masked_mean: empty mask")
    w = m / count

    def back(g):
        return (w[..., None] * g[..., None, :],)

    return _node((x.value * w[..., None]).sum(axis=-2), (x,), "masked_mean", back)


def mask_keys(scores: Tensor, key_mask) -> Tensor:
    """Set score columns of padded keys to -inf. scores (..., T, T), key_mask (B, T) or (T,)."""
    km = np.asarray(key_mask).astype(bool)
    T = scores.shape[-1]
    if km.shape[-1] != T or km.ndim > 2:
        raise ShapeError(f"mask_keys: mask shape {km.shape} does not fit scores {scores.shape}")
    keep = np.broadcast_to(_expand_mask(km, scores.value.ndim), scores.shape)
    out = np.where(keep, scores.value, -np.inf)
    return _node(out, (scores,), "mask_keys", lambda g: (np.where(keep, g, 0.0),))


def _expand_mask(km, ndim):
    if km.ndim == 1:
        return km.reshape((1,) * (ndim - 1) + km.shape)
    # batch mask (B, T) -> (B, 1, ..., 1, T)
    return km.reshape((km.shape[0],) + (1,) * (ndim - 2) + (km.shape[1],))


def cross_entropy(probs: Tensor, targets) -> Tensor:
    """Mean negative log probability of the target class; probs (n, K)."""
    t = np.asarray(targets, dtype=np.int64)
    p = probs.value
    if p.ndim != 2 or t.shape != (p.shape[0],):
        raise ShapeError(f"cross_entropy: probs {p.shape} vs targets {t.shape}")
    if t.size and (t.min() < 0 or t.max() >= p.shape[1]):
        raise DomainError("cross_entropy: target outside [0, K)")
    rows = np.arange(len(t))
    picked = np.maximum(p[rows, t], 1e-300)
    n = len(t)

    def back(g):
        out = np.zeros_like(p)
        out[rows, t] = -g / (n * picked)
        return (out,)

    return _node(np.array(-np.log(picked).mean()), (probs,), "cross_entropy", back)


def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Fused, numerically stable softmax + cross entropy (mean over rows)."""
    t = np.asarray(targets, dtype=np.int64)
    z = logits.value
    if z.ndim != 2 or t.shape != (z.shape[0],):
        raise ShapeError(f"softmax_cross_entropy: logits {z.shape} vs targets {t.shape}")
    if t.size and (t.min() < 0 or t.max() >= z.shape[1]):
        raise DomainError("softmax_cross_entropy: target outside [0, K)")
    zs = z - z.max(axis=1, keepdims=True)
    logp = zs - np.log(np.exp(zs).sum(axis=1, keepdims=True))
    rows = np.arange(len(t))
    n = len(t)

    def back(g):
        d = np.exp(logp)
        d[rows, t] -= 1.0
        return (d * (g / n),)

    return _node(np.array(-logp[rows, t].mean()), (logits,), "softmax_cross_entropy", back)


# ---- driver ------------------------------------------------------------------

def forward(root: Tensor) -> np.ndarray:
    """Values are computed eagerly while the graph is built; this just hands back the root's."""
    return root.value


def _topo(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
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


def backward(root: Tensor) -> None:
    if root.value.size != 1:
        raise DomainError(f"backward needs a scalar root, got shape {root.shape}")
    order = _topo(root)
    grads = {id(root): np.ones_like(root.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node.parents:
            node.grad = g
            continue
        node.grad = g
        for p, pg in zip(node.parents, node._backward(g)):
            if not p.requires_grad:
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg


def grad_check(f: Callable[[Tensor], Tensor], x: np.ndarray, h: float = 1e-5) -> float:
    """Max over coordinates of |analytic - central difference| / (|analytic| + |numeric| + 1e-12)."""
    x = np.array(x, dtype=np.float64)
    leaf = param(x.copy())
    out = f(leaf)
    backward(out)
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(x)
    numeric = np.zeros_like(x)
    flat = x.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = float(f(Tensor(x.copy())).value)
        flat[i] = old - h
        fm = float(f(Tensor(x.copy())).value)
        flat[i] = old
        numeric.reshape(-1)[i] = (fp - fm) / (2 * h)
    err = np.abs(analytic - numeric) / (np.abs(analytic) + np.abs(numeric) + 1e-12)
    return float(err.max()) if err.size else 0.0


def parameters_grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5) -> float:
    """grad_check generalised to several parameter tensors read by a closure."""
    out = f()
    backward(out)
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        num = np.zeros(flat.size)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = float(f().value)
            flat[i] = old - h
            fm = float(f().value)
            flat[i] = old
            num[i] = (fp - fm) / (2 * h)
        a = analytic.reshape(-1)
        err = np.abs(a - num) / (np.abs(a) + np.abs(num) + 1e-12)
        if err.size:
            worst = max(worst, float(err.max()))
    return worst

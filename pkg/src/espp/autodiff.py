"""A small reverse-mode differentiation engine.

Every tape node holds a float64 array (0-d for scalars).  Elementwise ops
require equal shapes, except that a 0-d operand may be combined with any
array.  Segment ops (``segment_sum``, ``softmin``/``softmax``/
``cosine_similarity`` with ``segments=``) reduce edge-indexed vectors into
node-indexed ones, which is all the graph losses need.

Example::

    tape = Tape()
    x = tape.variable([1.0, 2.0])
    y = ad.sum(ad.square(x))
    (gx,) = tape.gradient(y, [x])
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

Array = np.ndarray


class DomainError(ValueError):
    pass


class Segments:
    """Grouping of a length-m vector into ``n`` buckets given by ``ids``.

    Precomputes a stable sort so per-bucket max / sum run through
    ``reduceat``.  Empty buckets are allowed.
    """

    def __init__(self, ids: Sequence[int], n: int):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.n = int(n)
        self.counts = np.bincount(self.ids, minlength=self.n)
        self.nonempty = self.counts > 0
        self.order = np.argsort(self.ids, kind="stable")
        starts = np.concatenate(([0], np.cumsum(self.counts)[:-1]))
        self.starts = starts[self.nonempty]

    def sum(self, x: Array) -> Array:
        return np.bincount(self.ids, weights=x, minlength=self.n)

    def max(self, x: Array) -> Array:
        out = np.full(self.n, -np.inf)
        if len(x):
            out[self.nonempty] = np.maximum.reduceat(x[self.order], self.starts)
        return out


class Var:
    __slots__ = ("value", "parents", "vjp", "index", "requires_grad", "tape")
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, value, tape: Optional["Tape"] = None, parents=(), vjp=None, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.tape = tape
        self.index = -1
        if requires_grad and tape is not None:
            self.index = tape._record(self)

    @property
    def shape(self):
        return self.value.shape

    def __len__(self) -> int:
        return len(self.value)

    def item(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        return f"Var({self.value!r}, grad={self.requires_grad})"

    # operators
    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, idx):
        return gather(self, idx)


class Tape:
    """Append-only record of the operations that depend on a variable."""

    def __init__(self) -> None:
        self.nodes: list[Var] = []
        self.params: list[Var] = []

    def _record(self, v: Var) -> int:
        self.nodes.append(v)
        return len(self.nodes) - 1

    def variable(self, value) -> Var:
        v = Var(np.array(value, dtype=np.float64), self, requires_grad=True)
        self.params.append(v)
        return v

    def __len__(self) -> int:
        return len(self.nodes)

    def gradient(self, out: Var, wrt: Optional[Sequence[Var]] = None) -> list[Array]:
        """Reverse sweep from a 0-d ``out``; returns d out / d w for each ``w``."""
        wrt = self.params if wrt is None else wrt
        if out.value.ndim != 0:
            raise ValueError("gradient() needs a scalar output")
        grads: list[Optional[Array]] = [None] * len(self.nodes)
        if out.requires_grad:
            grads[out.index] = np.ones(())
        for i in range(len(self.nodes) - 1, -1, -1):
            g = grads[i]
            node = self.nodes[i]
            if g is None or node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.value.ndim == 0 and np.ndim(pg) != 0:
                    pg = np.sum(pg)
                j = parent.index
                grads[j] = pg if grads[j] is None else grads[j] + pg
        return [
            np.zeros_like(w.value) if (w.index < 0 or grads[w.index] is None) else grads[w.index]
            for w in wrt
        ]


def _lift(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _make(value, parents: tuple, vjp: Callable) -> Var:
    tape = None
    for p in parents:
        if p.requires_grad:
            tape = p.tape
            break
    if tape is None:
        return Var(value)
    return Var(value, tape, parents, vjp, requires_grad=True)


def _check_shapes(a: Var, b: Var) -> None:
    if a.value.ndim and b.value.ndim and a.value.shape != b.value.shape:
        raise ValueError(f"shape mismatch {a.value.shape} vs {b.value.shape} (no broadcasting)")


# elementwise -----------------------------------------------------------------


def add(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    _check_shapes(a, b)
    return _make(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    _check_shapes(a, b)
    return _make(a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    _check_shapes(a, b)
    av, bv = a.value, b.value
    return _make(av * bv, (a, b), lambda g: (g * bv, g * av))


def div(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    _check_shapes(a, b)
    av, bv = a.value, b.value
    out = av / bv
    return _make(out, (a, b), lambda g: (g / bv, -g * out / bv))


def neg(a) -> Var:
    a = _lift(a)
    return _make(-a.value, (a,), lambda g: (-g,))


def exp(a) -> Var:
    a = _lift(a)
    out = np.exp(a.value)
    return _make(out, (a,), lambda g: (g * out,))


def log(a) -> Var:
    a = _lift(a)
    if np.any(a.value <= 0):
        raise DomainError("log of a non-positive value")
    av = a.value
    return _make(np.log(av), (a,), lambda g: (g / av,))


def sqrt(a) -> Var:
    a = _lift(a)
    if np.any(a.value < 0):
        raise DomainError("sqrt of a negative value")
    out = np.sqrt(a.value)
    return _make(out, (a,), lambda g: (np.where(out > 0, g / (2.0 * np.where(out > 0, out, 1.0)), 0.0),))


def square(a) -> Var:
    a = _lift(a)
    av = a.value
    return _make(av * av, (a,), lambda g: (2.0 * g * av,))


def max0(a) -> Var:
    """max(0, x); the derivative at 0 is taken as 0."""
    a = _lift(a)
    mask = a.value > 0
    return _make(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def _sigmoid(x: Array) -> Array:
    # branch-wise so neither exp overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a) -> Var:
    a = _lift(a)
    out = _sigmoid(a.value)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def minimum(a, b) -> Var:
    """Pairwise min; ties send the gradient to ``a``."""
    a, b = _lift(a), _lift(b)
    _check_shapes(a, b)
    take_a = a.value <= b.value
    return _make(
        np.where(take_a, a.value, b.value), (a, b), lambda g: (g * take_a, g * ~take_a)
    )


# reductions and indexing -----------------------------------------------------


def sum(a) -> Var:  # noqa: A001 - mirrors numpy naming
    a = _lift(a)
    shape = a.value.shape
    return _make(np.sum(a.value), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def gather(a, idx) -> Var:
    a = _lift(a)
    idx = np.asarray(idx)
    n = len(a.value)
    if idx.dtype == bool:
        idx = np.flatnonzero(idx)
    return _make(
        a.value[idx], (a,), lambda g: (np.bincount(idx.ravel(), weights=np.ravel(g), minlength=n),)
    )


def segment_sum(a, segments: Segments) -> Var:
    a = _lift(a)
    ids = segments.ids
    return _make(segments.sum(a.value), (a,), lambda g: (g[ids],))


# composites with fused backward -------------------------------------------------


def _seg(segments: Optional[Segments], m: int) -> Segments:
    return segments if segments is not None else Segments(np.zeros(m, dtype=np.int64), 1)


def _check_tau(tau: float) -> None:
    if not tau > 0:
        raise ValueError("temperature must be positive")


def softmin(xs, tau: float = 1.0, segments: Optional[Segments] = None) -> Var:
    """-tau * log sum exp(-x / tau), per segment when ``segments`` is given.

    Without segments the result is 0-d.  Empty segments yield 0 and receive
    no gradient.
    """
    _check_tau(tau)
    xs = _lift(xs)
    x = xs.value
    if segments is None and x.size == 0:
        raise ValueError("softmin of an empty sequence")
    seg = _seg(segments, len(x))
    a = -x / tau
    top = seg.max(a)
    top_safe = np.where(seg.nonempty, top, 0.0)
    e = np.exp(a - top_safe[seg.ids])
    z = seg.sum(e)
    z_safe = np.where(seg.nonempty, z, 1.0)
    out = np.where(seg.nonempty, -tau * (top_safe + np.log(z_safe)), 0.0)
    weights = e / z_safe[seg.ids]

    def vjp(g):
        g = np.broadcast_to(g, out.shape)
        return (g[seg.ids] * weights,)

    res = _make(out, (xs,), vjp)
    return res if segments is not None else _squeeze(res)


def soft_bellman(
    d,
    weights: Array,
    heads: Array,
    segments: Segments,
    tau: float,
    mask: Array,
    offset: Array,
) -> Var:
    """Fused softened Bellman step: ``mask * softmin_seg(w + d[heads]) + offset``.

    Equivalent to composing gather, add, softmin, mul and add, but records a
    single tape node; the unrolled recursions call it many times per step.
    """
    _check_tau(tau)
    d = _lift(d)
    heads = np.asarray(heads)
    a = -(weights + d.value[heads]) / tau
    top = segments.max(a)
    top_safe = np.where(segments.nonempty, top, 0.0)
    e = np.exp(a - top_safe[segments.ids])
    z = segments.sum(e)
    z_safe = np.where(segments.nonempty, z, 1.0)
    m = np.where(segments.nonempty, -tau * (top_safe + np.log(z_safe)), 0.0)
    out = mask * m + offset
    share = e / z_safe[segments.ids]
    n = len(d.value)

    def vjp(g):
        g = np.broadcast_to(g, out.shape) * mask
        return (np.bincount(heads, weights=g[segments.ids] * share, minlength=n),)

    return _make(out, (d,), vjp)


def softmax(xs, tau: float = 1.0, segments: Optional[Segments] = None) -> Var:
    """exp(x / tau) normalised within each segment (or over the whole vector)."""
    _check_tau(tau)
    xs = _lift(xs)
    x = xs.value
    if segments is None and x.size == 0:
        raise ValueError("softmax of an empty sequence")
    seg = _seg(segments, len(x))
    a = x / tau
    top = seg.max(a)
    e = np.exp(a - top[seg.ids])
    q = e / seg.sum(e)[seg.ids]

    def vjp(g):
        inner = seg.sum(g * q)
        return (q * (g - inner[seg.ids]) / tau,)

    return _make(q, (xs,), vjp)


def cosine_similarity(xs, ys, segments: Optional[Segments] = None) -> Var:
    """Cosine similarity of ``xs`` and ``ys`` (per segment when given).

    A zero vector on either side gives similarity 0 with zero gradient.
    """
    xs, ys = _lift(xs), _lift(ys)
    _check_shapes(xs, ys)
    a, b = xs.value, ys.value
    seg = _seg(segments, len(a))
    dot = seg.sum(a * b)
    na = np.sqrt(seg.sum(a * a))
    nb = np.sqrt(seg.sum(b * b))
    ok = (na > 0) & (nb > 0)
    na_s, nb_s = np.where(ok, na, 1.0), np.where(ok, nb, 1.0)
    cos = np.where(ok, dot / (na_s * nb_s), 0.0)

    def vjp(g):
        g = np.broadcast_to(g, cos.shape) * ok
        gi = g[seg.ids]
        inv = (1.0 / (na_s * nb_s))[seg.ids]
        c = cos[seg.ids]
        ga = gi * (b * inv - c * a / (na_s**2)[seg.ids])
        gb = gi * (a * inv - c * b / (nb_s**2)[seg.ids])
        return ga, gb

    res = _make(cos, (xs, ys), vjp)
    return res if segments is not None else _squeeze(res)


def _squeeze(v: Var) -> Var:
    return _make(v.value.reshape(()), (v,), lambda g: (np.reshape(g, (1,)),))


def mean(a, mask: Optional[Array] = None) -> Var:
    a = _lift(a)
    if mask is None:
        return sum(a) / float(a.value.size)
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        return Var(0.0)
    return sum(gather(a, mask)) / float(count)


# checking ------------------------------------------------------------------------


def gradient_check(
    f: Callable[[Tape, Var], Var], x: Sequence[float], h: float = 1e-6
) -> float:
    """Max over coordinates of |g_ad - g_fd| / max(1, |g_fd|) with central differences.

    ``f(tape, param)`` must build a scalar from the parameter vector.
    """
    if not 1e-7 <= h <= 1e-4:
        raise ValueError("step h must lie in [1e-7, 1e-4]")
    x = np.array(x, dtype=np.float64)
    tape = Tape()
    p = tape.variable(x)
    (g_ad,) = tape.gradient(f(tape, p), [p])

    def value(z: Array) -> float:
        t = Tape()
        return float(f(t, t.variable(z)).value)

    err = 0.0
    for i in range(x.size):
        up, down = x.copy(), x.copy()
        up.flat[i] += h
        down.flat[i] -= h
        g_fd = (value(up) - value(down)) / (2.0 * h)
        err = max(err, abs(g_ad.flat[i] - g_fd) / max(1.0, abs(g_fd)))
    return err

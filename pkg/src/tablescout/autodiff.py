"""Minimal reverse-mode autodiff tape over numpy arrays.

Every op accepts plain ndarrays or Nodes and produces a Node only when at
least one input is a Node. Encoder forward code is therefore written once:
with plain parameter arrays it runs at numpy cost (inference, finite
differences), with Node-wrapped parameters it records the graph for
backprop. All values are float64.
"""

from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np

_ORDER = itertools.count()


class Node:
    """A graph value: parents are Node inputs, vjp maps the output gradient
    to one gradient per parent (constants captured in the closure)."""

    __slots__ = ("value", "parents", "vjp", "order")

    def __init__(self, value, parents=(), vjp=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = tuple(parents)
        self.vjp = vjp
        self.order = next(_ORDER)


def val(x):
    return x.value if isinstance(x, Node) else x


def _make(out, pairs):
    """Build a Node from (input, vjp_fn) pairs, keeping only Node inputs."""
    parents = tuple(p for p, _ in pairs if isinstance(p, Node))
    if not parents:
        return out
    fns = tuple(f for p, f in pairs if isinstance(p, Node))

    def vjp(g):
        return tuple(f(g) for f in fns)

    return Node(out, parents, vjp)


def add(a, b):
    return _make(val(a) + val(b), [(a, lambda g: g), (b, lambda g: g)])


def sub(a, b):
    return _make(val(a) - val(b), [(a, lambda g: g), (b, lambda g: -g)])


def csub(c: float, x):
    """Constant minus value."""
    return _make(c - val(x), [(x, lambda g: -g)])


def mul(a, b):
    av, bv = val(a), val(b)
    return _make(av * bv, [(a, lambda g: g * bv), (b, lambda g: g * av)])


def scale(x, c: float):
    return _make(val(x) * c, [(x, lambda g: g * c)])


def matvec(w, x):
    """Matrix-vector product; w is (out, in), x is (in,)."""
    wv, xv = val(w), val(x)
    out = wv @ xv
    return _make(out, [(w, lambda g: np.outer(g, xv)), (x, lambda g: wv.T @ g)])


def relu(x):
    xv = val(x)
    mask = xv > 0  # subgradient 0 at the kink
    return _make(np.where(mask, xv, 0.0), [(x, lambda g: g * mask)])


def sigmoid(x):
    # tanh form is overflow-free for any float input
    s = 0.5 * (1.0 + np.tanh(0.5 * val(x)))
    return _make(s, [(x, lambda g: g * s * (1.0 - s))])


def tanh(x):
    t = np.tanh(val(x))
    return _make(t, [(x, lambda g: g * (1.0 - t * t))])


def add_n(items: Sequence):
    """Sum a non-empty sequence of same-shape values."""
    if not items:
        raise ValueError("add_n: empty sequence")
    out = np.sum(np.stack([np.asarray(val(it), dtype=np.float64) for it in items]), axis=0)
    return _make(out, [(it, lambda g: g) for it in items])


def mean_n(items: Sequence):
    return scale(add_n(items), 1.0 / len(items))


def concat(parts: Sequence):
    vals = [np.atleast_1d(val(p)) for p in parts]
    out = np.concatenate(vals)
    pairs = []
    offset = 0
    for p, v in zip(parts, vals):
        start, stop = offset, offset + v.shape[0]
        pairs.append((p, lambda g, s=start, e=stop: g[s:e]))
        offset = stop
    return _make(out, pairs)


def l2_normalize(x):
    """x / ||x||_2; raises ValueError on the zero vector."""
    xv = val(x)
    r = float(np.sqrt(np.dot(xv, xv)))
    if r == 0.0:
        raise ValueError("cannot L2-normalize a zero vector")
    y = xv / r

    def vjp(g):
        return g / r - y * (float(np.dot(y, g)) / r)

    return _make(y, [(x, vjp)])


def sqdist(a, b):
    """Squared euclidean distance between two vectors (0-d output)."""
    d = val(a) - val(b)
    out = np.asarray(np.dot(d, d))
    return _make(out, [(a, lambda g: (2.0 * g) * d), (b, lambda g: (-2.0 * g) * d)])


def row(m, i: int):
    """Row i of a matrix; gradient scatters back into a zero matrix."""
    mv = val(m)

    def vjp(g):
        z = np.zeros_like(mv)
        z[i] = g
        return z

    return _make(mv[i], [(m, vjp)])


def backward(root: Node) -> dict[Node, np.ndarray]:
    """Accumulate gradients of `root` w.r.t. every reachable leaf Node.

    Creation order is a topological order, so nodes are processed in
    descending order; the returned dict maps leaf Nodes (vjp is None) to
    their gradients.
    """
    if not isinstance(root, Node):
        raise TypeError("backward: root is not a Node (no tracked inputs?)")
    seen: set[int] = set()
    nodes: list[Node] = []
    stack = [root]
    while stack:
        n = stack.pop()
        if id(n) in seen:
            continue
        seen.add(id(n))
        nodes.append(n)
        stack.extend(n.parents)
    nodes.sort(key=lambda n: n.order, reverse=True)

    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.value)}
    leaf_grads: dict[Node, np.ndarray] = {}
    for n in nodes:
        g = grads.pop(id(n), None)
        if g is None:
            continue
        if n.vjp is None:
            leaf_grads[n] = leaf_grads[n] + g if n in leaf_grads else g
            continue
        for p, pg in zip(n.parents, n.vjp(g)):
            acc = grads.get(id(p))
            grads[id(p)] = pg if acc is None else acc + pg
    return leaf_grads

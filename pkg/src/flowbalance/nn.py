"""Small dense-network substrate with hand-derived gradients.

Networks are stacks of affine layers, each followed by an activation.
Besides the usual parameter gradients, :meth:`Network.input_gradient` and
:meth:`Network.penalty_backward` implement the double backward pass needed
by gradient penalties: the gradient of a function of ``d out / d x`` with
respect to the parameters.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity")
CHECKPOINT_FORMAT = "flowbalance-tensors"
CHECKPOINT_VERSION = 1


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def activate(name, a):
    if name == "relu":
        return np.maximum(a, 0.0)
    if name == "tanh":
        return np.tanh(a)
    if name == "sigmoid":
        return _sigmoid(a)
    return a


def _d1(name, a, h):
    if name == "relu":
        return (a > 0).astype(a.dtype)
    if name == "tanh":
        return 1.0 - h * h
    if name == "sigmoid":
        return h * (1.0 - h)
    return np.ones_like(a)


def _d2(name, a, h):
    if name == "tanh":
        return -2.0 * h * (1.0 - h * h)
    if name == "sigmoid":
        return h * (1.0 - h) * (1.0 - 2.0 * h)
    return None  # piecewise linear: zero almost everywhere


@dataclass(frozen=True)
class NetSpec:
    sizes: tuple
    activations: tuple
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "activations", tuple(self.activations))
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"invalid layer sizes {self.sizes}")
        if len(self.activations) != len(self.sizes) - 1:
            raise ValueError("need one activation per layer")
        bad = [a for a in self.activations if a not in ACTIVATIONS]
        if bad:
            raise ValueError(f"unknown activations {bad}")

    @classmethod
    def mlp(cls, n_in, hidden, n_out, hidden_act="relu", out_act="identity", seed=0):
        sizes = (n_in, *hidden, n_out)
        return cls(sizes, (hidden_act,) * len(hidden) + (out_act,), seed)


class ParamStore:
    """Named parameters with gradient buffers and Adam moments."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name, value):
        if name in self.params:
            raise KeyError(f"duplicate parameter {name}")
        value = np.array(value, dtype=np.float64)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def adam_step(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.step += 1
        c1 = 1.0 - beta1 ** self.step
        c2 = 1.0 - beta2 ** self.step
        for name, p in self.params.items():
            g = self.grads[name]
            m, v = self.m[name], self.v[name]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)

    def tensors(self, prefix="") -> dict[str, np.ndarray]:
        return {prefix + k: v for k, v in self.params.items()}

    def load(self, tensors, prefix=""):
        for name in self.params:
            value = np.asarray(tensors[prefix + name], dtype=np.float64)
            if value.shape != self.params[name].shape:
                raise ValueError(f"shape mismatch for {name}: {value.shape} vs {self.params[name].shape}")
            self.params[name][...] = value


class _Cache:
    __slots__ = ("hs", "pre", "deltas", "uppers")

    def __init__(self, hs, pre):
        self.hs = hs
        self.pre = pre
        self.deltas = None
        self.uppers = None


class Network:
    """Feed-forward net defined by a :class:`NetSpec`, parameters in a ParamStore."""

    def __init__(self, spec: NetSpec, store: ParamStore | None = None, prefix: str = ""):
        self.spec = spec
        self.store = store if store is not None else ParamStore()
        self.prefix = prefix
        rng = np.random.default_rng(spec.seed)
        for l, (fan_in, fan_out) in enumerate(zip(spec.sizes[:-1], spec.sizes[1:])):
            bound = np.sqrt(6.0 / fan_in)
            self.store.add(self._w(l), rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.store.add(self._b(l), np.zeros(fan_out))

    def _w(self, l):
        return f"{self.prefix}W{l}"

    def _b(self, l):
        return f"{self.prefix}b{l}"

    @property
    def n_layers(self):
        return len(self.spec.activations)

    def W(self, l):
        return self.store.params[self._w(l)]

    def b(self, l):
        return self.store.params[self._b(l)]

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.spec.sizes[0]:
            raise ValueError(f"expected (n, {self.spec.sizes[0]}) input, got {x.shape}")
        hs, pre = [x], []
        h = x
        for l, act in enumerate(self.spec.activations):
            a = h @ self.W(l) + self.b(l)
            h = activate(act, a)
            pre.append(a)
            hs.append(h)
        return h, _Cache(hs, pre)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache: _Cache, upstream, accumulate_params=True):
        """Backpropagate ``upstream = dL/d out``; adds parameter grads, returns dL/d input."""
        g = np.asarray(upstream, dtype=np.float64)
        if g.shape != cache.hs[-1].shape:
            raise ValueError(f"upstream shape {g.shape} != output shape {cache.hs[-1].shape}")
        grads = self.store.grads
        for l in reversed(range(self.n_layers)):
            act = self.spec.activations[l]
            delta = g * _d1(act, cache.pre[l], cache.hs[l + 1])
            if accumulate_params:
                grads[self._w(l)] += cache.hs[l].T @ delta
                grads[self._b(l)] += delta.sum(axis=0)
            g = delta @ self.W(l).T
        return g

    def input_gradient(self, cache: _Cache, upstream):
        """``d <upstream, out> / d input`` without touching parameter grads.

        Keeps the intermediate quantities in ``cache`` for
        :meth:`penalty_backward`.
        """
        g = np.asarray(upstream, dtype=np.float64)
        deltas = [None] * self.n_layers
        uppers = [None] * self.n_layers
        for l in reversed(range(self.n_layers)):
            act = self.spec.activations[l]
            uppers[l] = g
            deltas[l] = g * _d1(act, cache.pre[l], cache.hs[l + 1])
            g = deltas[l] @ self.W(l).T
        cache.deltas, cache.uppers = deltas, uppers
        return g

    def penalty_backward(self, cache: _Cache, adj_input):
        """Add ``dP/dθ`` where ``P`` depends on the output of :meth:`input_gradient`.

        ``adj_input`` is ``dP / d(input gradient)``.  The input itself and the
        upstream vector are treated as constants.
        """
        if cache.deltas is None:
            raise RuntimeError("call input_gradient first")
        grads = self.store.grads
        L = self.n_layers
        adj_pre = [None] * L
        adj = np.asarray(adj_input, dtype=np.float64)
        for l in range(L):
            act = self.spec.activations[l]
            a, h = cache.pre[l], cache.hs[l + 1]
            grads[self._w(l)] += adj.T @ cache.deltas[l]
            adj_delta = adj @ self.W(l)
            d2 = _d2(act, a, h)
            if d2 is not None:
                adj_pre[l] = adj_delta * cache.uppers[l] * d2
            adj = adj_delta * _d1(act, a, h)
        carry = None
        for l in reversed(range(L)):
            act = self.spec.activations[l]
            total = adj_pre[l]
            if carry is not None:
                back = carry * _d1(act, cache.pre[l], cache.hs[l + 1])
                total = back if total is None else total + back
            if total is None:
                continue
            grads[self._w(l)] += cache.hs[l].T @ total
            grads[self._b(l)] += total.sum(axis=0)
            carry = total @ self.W(l).T


def mse(pred, target):
    """Mean squared error over all entries and its gradient w.r.t. ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def log_softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(np.asarray(logits, dtype=np.float64)))


def softmax_cross_entropy(logits, class_ids):
    """Mean cross-entropy of integer targets, stabilised with log-sum-exp."""
    logits = np.asarray(logits, dtype=np.float64)
    class_ids = np.asarray(class_ids, dtype=np.int64)
    if logits.ndim != 2 or class_ids.shape != (logits.shape[0],):
        raise ValueError(f"shape mismatch {logits.shape} vs {class_ids.shape}")
    n = logits.shape[0]
    logp = log_softmax(logits)
    loss = -float(logp[np.arange(n), class_ids].mean())
    grad = np.exp(logp)
    grad[np.arange(n), class_ids] -= 1.0
    return loss, grad / n


def gaussian_kl(mu, logvar):
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over dims, averaged over rows."""
    n = mu.shape[0]
    var = np.exp(logvar)
    per_row = 0.5 * np.sum(mu * mu + var - 1.0 - logvar, axis=1)
    return float(per_row.mean()), mu / n, 0.5 * (var - 1.0) / n


def one_hot(ids, k):
    out = np.zeros((len(ids), k))
    out[np.arange(len(ids)), ids] = 1.0
    return out


def save_tensors(path, tensors: dict, meta: dict | None = None):
    """Write tensors as JSON: a shape manifest plus flat row-major value lists."""
    manifest, data = [], {}
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        kind = "int64" if np.issubdtype(arr.dtype, np.integer) else "float64"
        manifest.append({"name": name, "shape": list(arr.shape), "dtype": kind})
        data[name] = arr.ravel().tolist()
    doc = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
           "meta": meta or {}, "manifest": manifest, "data": data}
    Path(path).write_text(json.dumps(doc))


def load_tensors(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    tensors = {}
    for entry in doc["manifest"]:
        arr = np.array(doc["data"][entry["name"]], dtype=entry["dtype"])
        tensors[entry["name"]] = arr.reshape(entry["shape"])
    return tensors, doc["meta"]

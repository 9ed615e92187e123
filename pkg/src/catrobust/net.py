"""Small differentiable classifier over per-feature embeddings.

``f(theta, Q @ x)``: each one-hot (or relaxed) block ``x_i`` is mapped to
``Q_i @ x_i`` (``Q_i`` is ``d x t_i``), the blocks are concatenated and fed to
a ReLU MLP producing one logit.  The loss is binary cross-entropy on the
logit.  Gradients are computed by hand for parameters, embeddings and input.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cost_model import BlockLayout


@dataclass
class EmbeddingSet:
    matrices: list[np.ndarray]
    cluster_maps: list[np.ndarray] | None = None

    def __post_init__(self):
        self.matrices = [np.asarray(Q, dtype=np.float64) for Q in self.matrices]
        widths = {Q.shape[0] for Q in self.matrices}
        if len(widths) != 1:
            raise ValueError("all embedding matrices must share the width d")
        if not all(np.all(np.isfinite(Q)) for Q in self.matrices):
            raise ValueError("embedding entries must be finite")
        if self.cluster_maps is not None:
            self.cluster_maps = [np.asarray(c, dtype=np.int64) for c in self.cluster_maps]

    @property
    def width(self) -> int:
        return self.matrices[0].shape[0]

    @property
    def cardinalities(self) -> list[int]:
        return [Q.shape[1] for Q in self.matrices]

    @property
    def layout(self) -> BlockLayout:
        return BlockLayout.from_cardinalities(self.cardinalities)

    def copy(self) -> "EmbeddingSet":
        maps = None if self.cluster_maps is None else [c.copy() for c in self.cluster_maps]
        return EmbeddingSet([Q.copy() for Q in self.matrices], maps)

    def embed_rows(self, rows) -> np.ndarray:
        """Embed integer rows directly by column lookup (no one-hot needed)."""
        rows = np.asarray(rows, dtype=np.int64)
        return np.concatenate([Q.T[rows[:, i]] for i, Q in enumerate(self.matrices)], axis=1)


@dataclass
class NetParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    def copy(self) -> "NetParams":
        return NetParams([W.copy() for W in self.weights], [b.copy() for b in self.biases])


@dataclass
class GradBundle:
    d_theta: NetParams
    d_Q: list[np.ndarray]
    d_input: np.ndarray = field(default_factory=lambda: np.zeros(0))


def init_embeddings(cards, d: int, rng: np.random.Generator) -> EmbeddingSet:
    return EmbeddingSet([rng.standard_normal((d, int(t))) / np.sqrt(d) for t in cards])


def init_net(n_inputs: int, hidden=(32, 32), rng: np.random.Generator | None = None) -> NetParams:
    rng = rng or np.random.default_rng(0)
    sizes = [n_inputs, *hidden, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetParams(weights, biases)


def embed(xtilde, Q: EmbeddingSet) -> np.ndarray:
    """Concatenate ``Q_i @ x_i`` over feature blocks; accepts one row or a batch."""
    X = np.asarray(xtilde, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    layout = Q.layout
    if X.shape[1] != layout.total:
        raise ValueError(f"input has {X.shape[1]} coordinates, embeddings expect {layout.total}")
    out = np.concatenate([X[:, layout.block(i)] @ Qi.T for i, Qi in enumerate(Q.matrices)], axis=1)
    return out[0] if single else out


def _bce_with_logits(z, y):
    # log(1 + exp(-|z|)) form avoids overflow
    return np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _layers(E, theta: NetParams):
    acts = [E]
    h = E
    last = len(theta.weights) - 1
    for k, (W, b) in enumerate(zip(theta.weights, theta.biases)):
        h = h @ W + b
        if k < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def logits(xtilde, Q: EmbeddingSet, theta: NetParams) -> np.ndarray:
    X = np.atleast_2d(np.asarray(xtilde, dtype=np.float64))
    return _layers(embed(X, Q), theta)[-1][:, 0]


def forward(xtilde, Q: EmbeddingSet, theta: NetParams, y=None, reduction: str = "mean"):
    """Return ``(logit, loss)``; ``loss`` is None when no label is given."""
    X = np.asarray(xtilde, dtype=np.float64)
    single = X.ndim == 1
    z = logits(X, Q, theta)
    loss = None
    if y is not None:
        per = _bce_with_logits(z, np.broadcast_to(np.asarray(y, dtype=np.float64), z.shape))
        loss = float(per.mean() if reduction == "mean" else per.sum()) if reduction != "none" else per
    return (float(z[0]) if single else z), loss


def backward(xtilde, Q: EmbeddingSet, theta: NetParams, y, reduction: str = "mean",
             need_params: bool = True) -> GradBundle:
    """Reverse-mode gradients of the BCE loss w.r.t. theta, Q and the input.

    With ``reduction="sum"`` each row of ``d_input`` is that example's own
    gradient, which is what the attack needs.
    """
    X = np.asarray(xtilde, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    layout = Q.layout
    E = embed(X, Q)
    acts = _layers(E, theta)
    z = acts[-1][:, 0]
    y = np.broadcast_to(np.asarray(y, dtype=np.float64), z.shape)
    g = (sigmoid(z) - y)[:, None]
    if reduction == "mean":
        g = g / len(z)
    dWs, dbs = [], []
    for k in range(len(theta.weights) - 1, -1, -1):
        if need_params:
            dWs.append(acts[k].T @ g)
            dbs.append(g.sum(axis=0))
        g = g @ theta.weights[k].T
        if k > 0:
            g = g * (acts[k] > 0)
    dE = g
    d = Q.width
    d_input = np.empty_like(X)
    dQ = []
    for i, Qi in enumerate(Q.matrices):
        blk = layout.block(i)
        dEi = dE[:, i * d:(i + 1) * d]
        d_input[:, blk] = dEi @ Qi
        if need_params:
            dQ.append(dEi.T @ X[:, blk])
    d_theta = NetParams(dWs[::-1], dbs[::-1]) if need_params else None
    return GradBundle(d_theta, dQ, d_input[0] if single else d_input)


def input_gradient(xtilde, Q: EmbeddingSet, theta: NetParams, y) -> np.ndarray:
    """Per-example gradient of the loss w.r.t. the (relaxed) input rows."""
    return backward(xtilde, Q, theta, y, reduction="sum", need_params=False).d_input


def predict_proba(xtilde, Q: EmbeddingSet, theta: NetParams) -> np.ndarray:
    return sigmoid(logits(xtilde, Q, theta))

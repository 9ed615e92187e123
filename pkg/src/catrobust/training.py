"""Training loops for the embedding network.

``train_clean``        plain minibatch SGD on binary cross-entropy.
``train_adversarial``  every minibatch is replaced by its relaxed adversarial
                       version before the step; theta and Q both move.
``train_bilevel``      alternates theta-steps on clean batches (Q frozen) with
                       Q-steps on adversarial batches (theta frozen) and
                       returns the embeddings.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attack_pgd import PgdConfig, perturb
from .cost_model import CostModel, Dataset, one_hot_batch
from .net import EmbeddingSet, NetParams, backward, forward, init_embeddings, init_net


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 128
    lr_theta: float = 0.1
    lr_q: float = 0.1
    theta_steps: int = 1
    q_steps: int = 1
    pgd: PgdConfig = field(default_factory=lambda: PgdConfig(eps=1.0))
    seed: int = 0
    hidden: tuple[int, ...] = (32, 32)
    width: int = 4
    theta_adv: bool = False

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.lr_theta <= 0 or self.lr_q <= 0:
            raise ValueError("learning rates must be positive")
        if self.theta_steps < 0 or self.q_steps < 0 or self.theta_steps + self.q_steps == 0:
            raise ValueError("need theta_steps + q_steps >= 1")


def _cards(dataset: Dataset, cost_model: CostModel | None):
    if cost_model is not None:
        return list(cost_model.cardinalities)
    if not dataset.feature_specs:
        raise ValueError("dataset carries no feature specs")
    return [f.cardinality for f in dataset.feature_specs]


def _init(cards, cfg: TrainConfig, rng):
    Q = init_embeddings(cards, cfg.width, rng)
    theta = init_net(len(cards) * cfg.width, cfg.hidden, rng)
    return Q, theta


def _batches(n: int, size: int, rng):
    order = rng.permutation(n)
    return [order[s:s + size] for s in range(0, n, size)]


def _step_theta(theta: NetParams, grads: NetParams, lr: float):
    for W, dW in zip(theta.weights, grads.weights):
        W -= lr * dW
    for b, db in zip(theta.biases, grads.biases):
        b -= lr * db


def _step_q(Q: EmbeddingSet, dQ, lr: float):
    for Qi, dQi in zip(Q.matrices, dQ):
        Qi -= lr * dQi


def _run(dataset, cost_model, cfg, adversarial: bool, log):
    cards = _cards(dataset, cost_model)
    rng = np.random.default_rng(cfg.seed)
    Q, theta = _init(cards, cfg, rng)
    for epoch in range(cfg.epochs):
        losses = []
        for idx in _batches(len(dataset), cfg.batch_size, rng):
            rows, y = dataset.rows[idx], dataset.labels[idx]
            if adversarial:
                X = perturb(rows, y, Q, theta, cost_model, cfg.pgd)
            else:
                X = one_hot_batch(rows, cards)
            g = backward(X, Q, theta, y)
            losses.append(forward(X, Q, theta, y)[1])
            _step_theta(theta, g.d_theta, cfg.lr_theta)
            _step_q(Q, g.d_Q, cfg.lr_q)
        if log is not None:
            log.append({"epoch": epoch, "loss": float(np.mean(losses)) if losses else 0.0})
    return Q, theta


def train_clean(dataset: Dataset, cfg: TrainConfig, cost_model: CostModel | None = None,
                log: list | None = None) -> tuple[EmbeddingSet, NetParams]:
    return _run(dataset, cost_model, cfg, False, log)


def train_adversarial(dataset: Dataset, cost_model: CostModel, cfg: TrainConfig,
                      log: list | None = None) -> tuple[EmbeddingSet, NetParams]:
    return _run(dataset, cost_model, cfg, True, log)


def train_bilevel_full(dataset: Dataset, cost_model: CostModel, cfg: TrainConfig,
                       log: list | None = None, trace: list | None = None
                       ) -> tuple[EmbeddingSet, NetParams]:
    """Bilevel alternation; returns both Q and the last theta.

    Batches of each shuffled epoch are consumed in cycles of ``theta_steps``
    theta-updates on clean one-hot inputs followed by ``q_steps`` Q-updates on
    relaxed adversarial inputs.  ``trace`` (if given) receives one
    ``(phase, theta_changed, q_changed)`` tuple per step.
    """
    cards = _cards(dataset, cost_model)
    rng = np.random.default_rng(cfg.seed)
    Q, theta = _init(cards, cfg, rng)
    cycle = ["theta"] * cfg.theta_steps + ["q"] * cfg.q_steps
    pos = 0
    for epoch in range(cfg.epochs):
        losses = {"theta": [], "q": []}
        for idx in _batches(len(dataset), cfg.batch_size, rng):
            phase = cycle[pos % len(cycle)]
            pos += 1
            rows, y = dataset.rows[idx], dataset.labels[idx]
            if phase == "theta" and not cfg.theta_adv:
                X = one_hot_batch(rows, cards)
            else:
                X = perturb(rows, y, Q, theta, cost_model, cfg.pgd)
            g = backward(X, Q, theta, y)
            losses[phase].append(forward(X, Q, theta, y)[1])
            if trace is not None:
                before = (theta.copy(), Q.copy())
            if phase == "theta":
                _step_theta(theta, g.d_theta, cfg.lr_theta)
            else:
                _step_q(Q, g.d_Q, cfg.lr_q)
            if trace is not None:
                t_changed = any(not np.array_equal(a, b) for a, b in
                                zip(before[0].weights + before[0].biases, theta.weights + theta.biases))
                q_changed = any(not np.array_equal(a, b) for a, b in
                                zip(before[1].matrices, Q.matrices))
                trace.append((phase, t_changed, q_changed))
        if log is not None:
            log.append({"epoch": epoch,
                        "loss_theta": float(np.mean(losses["theta"])) if losses["theta"] else None,
                        "loss_q": float(np.mean(losses["q"])) if losses["q"] else None})
    return Q, theta


def train_bilevel(dataset: Dataset, cost_model: CostModel, cfg: TrainConfig,
                  log: list | None = None) -> EmbeddingSet:
    """Universal robust embeddings via bilevel alternating minimization."""
    return train_bilevel_full(dataset, cost_model, cfg, log)[0]


def accuracy(dataset: Dataset, Q: EmbeddingSet, theta: NetParams) -> float:
    from .net import logits
    z = logits(one_hot_batch(dataset.rows, Q.cardinalities), Q, theta)
    return float(np.mean((z > 0).astype(np.int64) == dataset.labels))

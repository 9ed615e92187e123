"""Relaxed projected gradient attack on one-hot encoded categorical inputs.

Each step ascends the loss w.r.t. the perturbation ``delta`` and pulls it
back with Dykstra alternation onto the intersection of the per-feature
simplices and the weighted-l1 cost ball.  Only rows of the cost model's
target class are attacked.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import projections
from ._backend import num_threads
from .cost_model import MAX_COST, CostModel, Dataset, cost_weights_batch, one_hot_batch
from .net import EmbeddingSet, NetParams, forward, input_gradient

PGD_STEPS = 20


@dataclass(frozen=True)
class PgdConfig:
    eps: float
    pgd_steps: int = PGD_STEPS
    d_steps: int = projections.DYKSTRA_STEPS
    alpha: float | None = None  # None: see default_alpha

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.pgd_steps < 1 or self.d_steps < 1:
            raise ValueError("step counts must be >= 1")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError("alpha must be > 0")


@dataclass
class RelaxedAdvExample:
    xtilde_prime: np.ndarray
    spent_cost: float
    loss_before: float
    loss_after: float
    attacked: bool


def default_alpha(W: np.ndarray, eps: float, pgd_steps: int) -> np.ndarray:
    """Per-row step size ``2.5 * eps / (pgd_steps * cheapest live weight)``."""
    live = (W > 0) & (W < MAX_COST)
    cheapest = np.where(live, W, np.inf).min(axis=1)
    cheapest = np.where(np.isfinite(cheapest), cheapest, 1.0)
    return 2.5 * eps / (pgd_steps * cheapest)


def perturb(rows, labels, Q: EmbeddingSet, theta: NetParams, cost_model: CostModel,
            cfg: PgdConfig) -> np.ndarray:
    """Relaxed adversarial inputs for a batch of rows (non-target rows unchanged)."""
    rows = np.asarray(rows, dtype=np.int64)
    labels = np.asarray(labels)
    X = one_hot_batch(rows, cost_model)
    hit = labels == cost_model.target_class
    if cfg.eps == 0 or not np.any(hit):
        return X
    Xt = X[hit]
    y = labels[hit]
    W = cost_weights_batch(rows[hit], cost_model)
    off = cost_model.layout.offsets
    alpha = np.full(len(Xt), cfg.alpha) if cfg.alpha is not None else default_alpha(W, cfg.eps, cfg.pgd_steps)
    delta = np.zeros_like(Xt)
    for _ in range(cfg.pgd_steps):
        delta = delta + alpha[:, None] * input_gradient(Xt + delta, Q, theta, y)
        delta = projections.dykstra_project(Xt, delta, W, cfg.eps, off, cfg.d_steps)
    delta = projections.project_onehot_intersection(Xt, delta, W, cfg.eps, off)
    X[hit] = Xt + delta
    return X


def cat_pgd(row, y: int, Q: EmbeddingSet, theta: NetParams, cost_model: CostModel,
            cfg: PgdConfig) -> RelaxedAdvExample:
    rows = np.asarray(row, dtype=np.int64)[None]
    return _summarize(rows, np.array([y]), Q, theta, cost_model, cfg)[0]


def _summarize(rows, labels, Q, theta, cost_model, cfg) -> list[RelaxedAdvExample]:
    X0 = one_hot_batch(rows, cost_model)
    X1 = perturb(rows, labels, Q, theta, cost_model, cfg)
    W = cost_weights_batch(rows, cost_model)
    _, before = forward(X0, Q, theta, labels, reduction="none")
    _, after = forward(X1, Q, theta, labels, reduction="none")
    spent = np.sum(W * np.abs(X1 - X0), axis=1)
    hit = labels == cost_model.target_class
    return [
        RelaxedAdvExample(X1[i], float(spent[i]), float(before[i]), float(after[i]), bool(hit[i]))
        for i in range(len(rows))
    ]


def attack_batch(dataset: Dataset, Q: EmbeddingSet, theta: NetParams, cost_model: CostModel,
                 cfg: PgdConfig, chunk: int = 256, strict: bool = False) -> list[RelaxedAdvExample]:
    n = len(dataset)
    if n == 0:
        return []
    starts = range(0, n, chunk)

    def run(s):
        sl = slice(s, s + chunk)
        return _summarize(dataset.rows[sl], dataset.labels[sl], Q, theta, cost_model, cfg)

    workers = 1 if strict else num_threads()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return [ex for part in parts for ex in part]

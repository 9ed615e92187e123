"""Cost-bounded discrete attack by uniform-cost search.

Nodes are rows; an edge changes one still-untouched feature from its
original value ``j`` to another value ``k`` at price ``C_i[j, k]``, so the
path cost of a node equals its additive cost from the original row.  Features
are changed in increasing index order, which generates every reachable row
exactly once and makes a visited set unnecessary.  Nodes are popped
cheapest-first and scored in growing chunks; the first misclassified node in
pop order is a minimum-cost adversarial row.
"""
from __future__ import annotations

import heapq
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._backend import num_threads
from .cost_model import CostModel, Dataset, one_hot_batch
from .net import EmbeddingSet, NetParams, _layers

_COST_TOL = 1e-9


class NetScorer:
    """Scores integer rows with the embedding network."""

    def __init__(self, Q: EmbeddingSet, theta: NetParams):
        self.Q, self.theta = Q, theta

    def decision_function(self, rows) -> np.ndarray:
        E = self.Q.embed_rows(np.atleast_2d(rows))
        return _layers(E, self.theta)[-1][:, 0]

    score = decision_function

    def predict(self, rows) -> np.ndarray:
        return (self.decision_function(rows) > 0).astype(np.int64)


class TreeScorer:
    """Scores integer rows with a tree model on embedded or one-hot inputs."""

    def __init__(self, model, embeddings: EmbeddingSet | None = None, cards=None):
        if embeddings is None and cards is None:
            raise ValueError("one-hot tree input needs the feature cardinalities")
        self.model, self.embeddings, self.cards = model, embeddings, cards

    def features(self, rows) -> np.ndarray:
        rows = np.atleast_2d(rows)
        if self.embeddings is not None:
            return self.embeddings.embed_rows(rows)
        return one_hot_batch(rows, self.cards)

    def decision_function(self, rows) -> np.ndarray:
        return self.model.decision_function(self.features(rows))

    score = decision_function

    def predict(self, rows) -> np.ndarray:
        return self.model.predict(self.features(rows))


class TableScorer:
    """Looks predictions up in a dict keyed by row tuple (for tests)."""

    def __init__(self, table: dict):
        self.table = table

    def predict(self, rows) -> np.ndarray:
        return np.array([self.table[tuple(int(v) for v in r)] for r in np.atleast_2d(rows)])


@dataclass
class AttackResult:
    row: np.ndarray
    cost: float
    success: bool
    attacked: bool
    n_evaluated: int


def _moves(row, cost_model: CostModel, eps: float):
    out = []
    for i, (C, j) in enumerate(zip(cost_model.matrices, row)):
        prices = C.entries[j]
        ks = [k for k in np.argsort(prices, kind="stable")
              if k != j and np.isfinite(prices[k]) and prices[k] <= eps + _COST_TOL]
        out.append([(float(prices[k]), int(k)) for k in ks])
    return out


def graph_attack(row, y: int, scorer, cost_model: CostModel, eps: float, mode: str = "exact",
                 beam_width: int = 1000, first_chunk: int = 16, max_chunk: int = 4096) -> AttackResult:
    """Cheapest single-row perturbation within ``eps`` that flips the prediction.

    ``mode="exact"`` explores every row within budget; ``mode="beam"`` keeps
    only the ``beam_width`` cheapest frontier nodes.  Rows outside the target
    class are returned untouched.
    """
    if mode not in ("exact", "beam"):
        raise ValueError(f"unknown mode {mode!r}")
    row = np.asarray(row, dtype=np.int64)
    if y != cost_model.target_class:
        return AttackResult(row.copy(), 0.0, False, False, 0)
    moves = _moves(row, cost_model, eps)
    m = len(row)
    tie = itertools.count()
    heap = [(0.0, next(tie), tuple(int(v) for v in row), -1)]
    evaluated = 0
    chunk = first_chunk
    while heap:
        batch = []
        while heap and len(batch) < chunk:
            c, _, state, last = heapq.heappop(heap)
            batch.append((c, state))
            for f in range(last + 1, m):
                for price, k in moves[f]:
                    nc = c + price
                    if nc > eps + _COST_TOL:
                        break
                    nxt = list(state)
                    nxt[f] = k
                    heapq.heappush(heap, (nc, next(tie), tuple(nxt), f))
            if mode == "beam" and len(heap) > beam_width:
                heap = heapq.nsmallest(beam_width, heap)
                heapq.heapify(heap)
        preds = scorer.predict(np.array([s for _, s in batch], dtype=np.int64))
        evaluated += len(batch)
        wrong = np.flatnonzero(preds != y)
        if wrong.size:
            c, state = batch[int(wrong[0])]
            return AttackResult(np.array(state, dtype=np.int64), c, True, True, evaluated)
        chunk = min(chunk * 2, max_chunk)
    return AttackResult(row.copy(), 0.0, False, True, evaluated)


def attack_dataset(dataset: Dataset, scorer, cost_model: CostModel, eps: float,
                   mode: str = "exact", strict: bool = False, **kw) -> list[AttackResult]:
    def run(i):
        return graph_attack(dataset.rows[i], int(dataset.labels[i]), scorer, cost_model, eps,
                            mode, **kw)

    workers = 1 if strict else num_threads()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(run, range(len(dataset))))
    return [run(i) for i in range(len(dataset))]


def evaluate(dataset: Dataset, scorer, cost_model: CostModel, eps: float, mode: str = "exact",
             strict: bool = False, **kw) -> tuple[float, float]:
    """``(clean_accuracy, robust_accuracy)`` of ``scorer`` on ``dataset``."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    clean = scorer.predict(dataset.rows) == dataset.labels
    target = dataset.labels == cost_model.target_class
    robust = clean.copy()
    idx = np.flatnonzero(target & clean)
    sub = dataset.subset(idx)
    results = attack_dataset(sub, scorer, cost_model, eps, mode, strict, **kw)
    for i, res in zip(idx, results):
        robust[i] = not res.success
    return float(clean.mean()), float(robust.mean())


def robust_accuracy(dataset: Dataset, scorer, cost_model: CostModel, eps: float,
                    mode: str = "exact", **kw) -> float:
    return evaluate(dataset, scorer, cost_model, eps, mode, **kw)[1]

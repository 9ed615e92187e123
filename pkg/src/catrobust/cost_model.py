"""Threat model for categorical tabular data.

Each feature takes one of ``t_i`` discrete values and changing value ``j`` to
``k`` costs the adversary ``C_i[j, k]`` dollars.  Costs add up across
features.  Numeric columns are binned into categorical ones first.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MIN_COST = 0.1
MAX_COST = 10000.0
IMPOSSIBLE = math.inf


class InvalidInputError(ValueError):
    """Raised for rows, matrices or configs that violate the data contract."""


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    cardinality: int
    value_labels: tuple[str, ...]

    def __post_init__(self):
        if self.cardinality < 2:
            raise InvalidInputError(f"feature {self.name!r} needs at least 2 values")
        if len(self.value_labels) != self.cardinality:
            raise InvalidInputError(f"feature {self.name!r}: label count != cardinality")
        if len(set(self.value_labels)) != self.cardinality:
            raise InvalidInputError(f"feature {self.name!r}: duplicate value labels")

    def index_of(self, label: str) -> int:
        try:
            return self.value_labels.index(label)
        except ValueError:
            raise InvalidInputError(f"feature {self.name!r} has no value {label!r}") from None


def clamp_costs(matrix) -> np.ndarray:
    """Clamp finite off-diagonal entries into [MIN_COST, MAX_COST].

    ``inf`` entries stay impossible; the diagonal is forced to exactly 0.
    """
    C = np.array(matrix, dtype=np.float64)
    finite = np.isfinite(C)
    C[finite] = np.clip(C[finite], MIN_COST, MAX_COST)
    np.fill_diagonal(C, 0.0)
    return C


@dataclass(frozen=True)
class CostMatrix:
    entries: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.entries, dtype=np.float64)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise InvalidInputError("cost matrix must be square")
        if np.any(np.isnan(C)) or np.any(C < 0):
            raise InvalidInputError("cost matrix entries must be nonnegative")
        if np.any(np.diag(C) != 0):
            raise InvalidInputError("cost matrix diagonal must be zero")
        C = C.copy()
        C.setflags(write=False)
        object.__setattr__(self, "entries", C)

    @classmethod
    def from_raw(cls, matrix) -> "CostMatrix":
        """Build from raw dollar values (``None``/``inf`` = impossible), clamped."""
        raw = [[IMPOSSIBLE if v is None else float(v) for v in row] for row in matrix]
        return cls(clamp_costs(raw))

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def capped(self) -> np.ndarray:
        """Entries with impossible transitions replaced by the cap."""
        return np.where(np.isfinite(self.entries), self.entries, MAX_COST)


@dataclass(frozen=True)
class CostModel:
    features: tuple[FeatureSpec, ...]
    matrices: tuple[CostMatrix, ...]
    target_class: int = 1

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "matrices", tuple(self.matrices))
        if len(self.features) != len(self.matrices):
            raise InvalidInputError("one cost matrix per feature required")
        for spec, C in zip(self.features, self.matrices):
            if C.size != spec.cardinality:
                raise InvalidInputError(f"matrix for {spec.name!r} has wrong size")
        if self.target_class not in (0, 1):
            raise InvalidInputError("target_class must be 0 or 1")

    @property
    def cardinalities(self) -> np.ndarray:
        return np.array([f.cardinality for f in self.features], dtype=np.int64)

    @property
    def layout(self) -> "BlockLayout":
        return BlockLayout.from_cardinalities(self.cardinalities)

    @property
    def n_features(self) -> int:
        return len(self.features)


@dataclass(frozen=True)
class BlockLayout:
    """Offsets of the per-feature one-hot blocks inside a length-t vector."""

    offsets: np.ndarray

    @classmethod
    def from_cardinalities(cls, cards: Sequence[int]) -> "BlockLayout":
        offsets = np.concatenate([[0], np.cumsum(np.asarray(cards, dtype=np.int64))])
        offsets.setflags(write=False)
        return cls(offsets)

    @property
    def total(self) -> int:
        return int(self.offsets[-1])

    @property
    def n_blocks(self) -> int:
        return len(self.offsets) - 1

    def block(self, i: int) -> slice:
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))


@dataclass
class Dataset:
    rows: np.ndarray
    labels: np.ndarray
    feature_specs: tuple[FeatureSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        self.rows = rows.reshape(len(rows), -1) if rows.ndim != 2 else rows
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.feature_specs = tuple(self.feature_specs)
        if len(self.rows) != len(self.labels):
            raise InvalidInputError("rows and labels differ in length")
        if not np.all(np.isin(self.labels, (0, 1))):
            raise InvalidInputError("labels must be 0 or 1")
        if self.feature_specs and len(self.rows):
            cards = np.array([f.cardinality for f in self.feature_specs])
            if self.rows.shape[1] != len(cards):
                raise InvalidInputError("row width does not match feature specs")
            if np.any(self.rows < 0) or np.any(self.rows >= cards[None, :]):
                raise InvalidInputError("value index out of range")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.rows[idx], self.labels[idx], self.feature_specs)


def _check_row(row, cards) -> np.ndarray:
    row = np.asarray(row, dtype=np.int64)
    if row.shape != (len(cards),):
        raise InvalidInputError(f"row must have {len(cards)} entries")
    if np.any(row < 0) or np.any(row >= cards):
        raise InvalidInputError("value index out of range")
    return row


def _cards(specs) -> np.ndarray:
    if isinstance(specs, CostModel):
        return specs.cardinalities
    return np.array([s if isinstance(s, (int, np.integer)) else s.cardinality for s in specs])


def one_hot(row, specs) -> np.ndarray:
    """Concatenated one-hot encoding of a row of value indices."""
    cards = _cards(specs)
    row = _check_row(row, cards)
    layout = BlockLayout.from_cardinalities(cards)
    out = np.zeros(layout.total)
    out[layout.offsets[:-1] + row] = 1.0
    return out


def one_hot_batch(rows, specs) -> np.ndarray:
    cards = _cards(specs)
    rows = np.asarray(rows, dtype=np.int64).reshape(-1, len(cards))
    if np.any(rows < 0) or np.any(rows >= cards[None, :]):
        raise InvalidInputError("value index out of range")
    offsets = BlockLayout.from_cardinalities(cards).offsets
    out = np.zeros((len(rows), int(offsets[-1])))
    np.put_along_axis(out, rows + offsets[None, :-1], 1.0, axis=1)
    return out


def cost_weights(row, cost_model: CostModel) -> np.ndarray:
    """Per-coordinate prices of moving away from ``row`` (weights of the l1 cost).

    Block i holds row ``row[i]`` of ``C_i``, with impossible moves at the cap.
    """
    row = _check_row(row, cost_model.cardinalities)
    return np.concatenate([C.capped()[j] for C, j in zip(cost_model.matrices, row)])


def cost_weights_batch(rows, cost_model: CostModel) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.int64).reshape(-1, cost_model.n_features)
    return np.concatenate(
        [C.capped()[rows[:, i]] for i, C in enumerate(cost_model.matrices)], axis=1
    )


def cost(row, row_prime, cost_model: CostModel) -> float:
    """Total dollars to turn ``row`` into ``row_prime``; ``inf`` if impossible."""
    cards = cost_model.cardinalities
    a = _check_row(row, cards)
    b = _check_row(row_prime, cards)
    total = 0.0
    for C, j, k in zip(cost_model.matrices, a, b):
        total += C.entries[j, k]
    return float(total)


def relaxed_cost(xbar, xtilde, w) -> float:
    xbar, xtilde, w = (np.asarray(v, dtype=np.float64) for v in (xbar, xtilde, w))
    if not (xbar.shape == xtilde.shape == w.shape):
        raise InvalidInputError("vectors must share one length")
    return float(np.sum(w * np.abs(xbar - xtilde)))


@dataclass(frozen=True)
class Binner:
    """Bin edges for one numeric column (right-closed bins)."""

    edges: np.ndarray
    n_bins: int
    lo: float
    hi: float

    def midpoints(self) -> np.ndarray:
        bounds = np.concatenate([[self.lo], self.edges, [self.hi]])
        return (bounds[:-1] + bounds[1:]) / 2.0


def fit_bins(column, n_bins: int = 10) -> Binner:
    """Equal-frequency binning of one numeric column."""
    column = np.asarray(column, dtype=np.float64)
    if n_bins < 2:
        raise InvalidInputError("n_bins must be at least 2")
    if column.size == 0:
        raise InvalidInputError("cannot bin an empty column")
    qs = np.quantile(column, np.linspace(0, 1, n_bins + 1)[1:-1])
    # an edge at the max would leave the top bin empty
    edges = np.unique(qs)
    edges = edges[edges < column.max()]
    if edges.size == 0:
        warnings.warn("constant column: binned into a single usable bin", stacklevel=2)
        edges = np.array([column.max()])
    return Binner(edges, len(edges) + 1, float(column.min()), float(column.max()))


def apply_bins(column, binner: Binner) -> np.ndarray:
    """Bin index per value; values outside the fitted range land in the end bins."""
    column = np.asarray(column, dtype=np.float64)
    return np.searchsorted(binner.edges, column, side="left").astype(np.int64)


def per_unit_matrix(midpoints, per_unit: float) -> np.ndarray:
    mid = np.asarray(midpoints, dtype=np.float64)
    return clamp_costs(per_unit * np.abs(mid[:, None] - mid[None, :]))


def balance_undersample(dataset: Dataset, seed: int) -> Dataset:
    """Randomly drop majority-class rows until both classes have equal counts."""
    labels = dataset.labels
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise InvalidInputError("undersampling needs both classes present")
    rng = np.random.default_rng(seed)
    small, big = (pos, neg) if len(pos) <= len(neg) else (neg, pos)
    keep_big = np.sort(rng.choice(big, size=len(small), replace=False))
    keep = np.sort(np.concatenate([small, keep_big]))
    return dataset.subset(keep)

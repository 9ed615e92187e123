"""Desk-scale synthetic benchmark with a priced threat model.

Every feature value carries a hidden utility; the label thresholds the noisy
sum of utilities.  Categorical values fall into small groups: moves inside a
group are cheap, moves across groups are dear, and the utility is mostly a
group effect.  A small budget therefore buys many cheap within-group swaps,
which matter to a model that leans on within-group detail and not to one
that treats each group as a single value.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .cost_model import CostModel, Dataset
from .io import table_to_dataset


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int = 5000
    n_categorical: int = 8
    cardinality_range: tuple[int, int] = (3, 10)
    n_numeric: int = 4
    n_bins: int = 10
    price_range: tuple[float, float] = (0.1, 50.0)
    impossible_fraction: float = 0.1
    label_noise: float = 0.15
    group_size: int = 3
    cheap_ceiling: float = 1.0
    dear_floor: float = 5.0
    within_sd: float = 1.5
    label_seed: int | None = None

    def __post_init__(self):
        if self.n_samples < 1 or self.n_categorical < 0 or self.n_numeric < 0:
            raise ValueError("counts must be positive")
        if self.n_categorical + self.n_numeric == 0:
            raise ValueError("need at least one feature")
        lo, hi = self.cardinality_range
        if lo < 2 or hi < lo:
            raise ValueError("bad cardinality range")
        p_lo, p_hi = self.price_range
        if not 0 < p_lo <= self.cheap_ceiling <= self.dear_floor <= p_hi:
            raise ValueError("need price_lo <= cheap_ceiling <= dear_floor <= price_hi")
        if self.group_size < 1:
            raise ValueError("group_size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def _log_uniform(rng, lo: float, hi: float) -> float:
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def _price_matrix(groups: np.ndarray, spec: SyntheticSpec, rng) -> list:
    """Cheap moves inside a value group, dear moves across groups."""
    t = len(groups)
    lo, hi = spec.price_range
    cheap = _log_uniform(rng, lo, spec.cheap_ceiling)
    dear = _log_uniform(rng, spec.dear_floor, hi)
    same = groups[:, None] == groups[None, :]
    level = np.where(same, cheap, dear)
    C = np.round(np.clip(level * np.exp(rng.normal(0.0, 0.3, size=(t, t))), lo, hi), 2)
    impossible = rng.random((t, t)) < spec.impossible_fraction
    out = []
    for j in range(t):
        out.append([0.0 if j == k else (None if impossible[j, k] else float(C[j, k]))
                    for k in range(t)])
    return out


def synthetic_table(spec: SyntheticSpec, seed: int):
    """Raw ``(header, records, cost_config)``; records hold CSV strings."""
    rng = np.random.default_rng(seed)
    label_rng = np.random.default_rng(spec.label_seed if spec.label_seed is not None else seed + 1)
    n = spec.n_samples
    features, columns, utility = [], [], np.zeros(n)
    for i in range(spec.n_categorical):
        t = int(rng.integers(spec.cardinality_range[0], spec.cardinality_range[1] + 1))
        probs = rng.dirichlet(np.full(t, 2.0))
        vals = rng.choice(t, size=n, p=probs)
        groups = rng.permutation(np.arange(t) // spec.group_size)
        n_groups = int(groups.max()) + 1
        # the label mostly follows the group; the within-group part is what cheap moves exploit
        u_group = label_rng.normal(0.0, 1.0, size=n_groups)
        u = (u_group[groups] + label_rng.normal(0.0, spec.within_sd, size=t)) * label_rng.uniform(0.5, 1.5)
        utility += u[vals]
        labels = [f"c{i}v{k}" for k in range(t)]
        features.append({"name": f"cat{i}", "type": "categorical", "values": labels,
                         "cost_matrix": _price_matrix(groups, spec, rng)})
        columns.append([labels[v] for v in vals])
    for i in range(spec.n_numeric):
        scale = float(np.exp(rng.uniform(0.0, 4.0)))
        x = rng.lognormal(0.0, 0.75, size=n) * scale
        z = (np.log(x / scale)) / 0.75
        utility += label_rng.choice([-1.0, 1.0]) * label_rng.uniform(0.5, 1.5) * z
        level = _log_uniform(rng, spec.dear_floor, spec.price_range[1])
        # a one-standard-deviation move costs about ``level`` dollars
        per_unit = level / (scale * 0.75)
        features.append({"name": f"num{i}", "type": "numeric", "n_bins": spec.n_bins,
                         "per_unit_cost": float(np.round(per_unit, 6))})
        columns.append([repr(float(v)) for v in np.round(x, 6)])
    score = utility + label_rng.normal(0.0, spec.label_noise * np.std(utility), size=n)
    y = (score > np.median(score)).astype(int)
    header = [f["name"] for f in features] + ["label"]
    records = [[c[r] for c in columns] + [str(int(y[r]))] for r in range(n)]
    config = {"label_column": "label", "target_class": 1, "features": features,
              "synthetic_seed": seed}
    return header, records, config


def gen_synthetic(spec: SyntheticSpec | None = None, seed: int = 0) -> tuple[Dataset, CostModel]:
    spec = spec or SyntheticSpec()
    header, records, config = synthetic_table(spec, seed)
    ds, cm, _ = table_to_dataset(header, records, config)
    return ds, cm

"""Experiment orchestration and report emission.

Stages: ``clean``, ``adv``, ``bilevel``, ``merge``, ``trees``, ``attack-eval``.
Reported accuracies always come from the discrete graph attack.
"""
from __future__ import annotations

import csv
import io as _io
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .attack_graph import NetScorer, TreeScorer, evaluate
from .attack_pgd import PgdConfig
from .cost_model import CostModel, Dataset, balance_undersample, one_hot_batch
from .io import (
    ConfigError,
    binners_to_dict,
    config_hash,
    embeddings_to_dict,
    load_dataset,
    load_json,
    net_to_dict,
    save_json,
    table_to_dataset,
)
from .merging import merge_embeddings
from .net import EmbeddingSet
from .synthetic import SyntheticSpec, synthetic_table
from .training import TrainConfig, train_adversarial, train_bilevel_full, train_clean
from .trees import fit_boosted_trees, fit_forest, fit_gbs

STAGES = ("clean", "adv", "bilevel", "merge", "trees", "attack-eval")
TREE_MODELS = ("gbs", "gbt", "rf")
FORMATS = ("table", "csv", "json")
CSV_HEADER = ["model", "eps", "clean_acc", "robust_acc", "seconds"]

# budget used for training and for the synthetic acceptance checks
DEFAULT_EPS = 1.0
SYNTHETIC_EPS_GRID = (0.1, 0.3, 1.0, 3.0)
EPS_GRIDS = {
    "ieeecis": (0.1, 0.2, 0.3, 0.5, 1.0, 3.0, 5.0, 10.0, 30.0, 50.0, 100.0),
    "baf": (0.1, 0.2, 0.3, 0.5, 1.0, 3.0, 10.0, 30.0),
    "credit": (1.0, 10.0, 30.0, 100.0, 300.0),
    "synthetic": SYNTHETIC_EPS_GRID,
}
# bilevel Q-steps take larger steps than theta-steps on the synthetic benchmark
SYNTHETIC_TRAIN = TrainConfig(epochs=10, lr_q=1.0, pgd=PgdConfig(eps=DEFAULT_EPS))
SYNTHETIC_SPEC = SyntheticSpec()


@dataclass(frozen=True)
class ExperimentSpec:
    stages: tuple[str, ...] = STAGES
    eps_grid: tuple[float, ...] = SYNTHETIC_EPS_GRID
    seeds: tuple[int, ...] = (0,)
    train: TrainConfig = SYNTHETIC_TRAIN
    synthetic: SyntheticSpec | None = SYNTHETIC_SPEC
    data_seed: int | None = None
    dataset: str | None = None
    cost_config: str | None = None
    out_dir: str | None = None
    percentile: float = 0.1
    tree_model: str = "gbs"
    n_estimators: int = 100
    test_fraction: float = 0.2
    exact: bool = True
    beam_width: int = 1000
    strict: bool = False

    def validate(self) -> "ExperimentSpec":
        unknown = [s for s in self.stages if s not in STAGES]
        if unknown:
            raise ConfigError(f"unknown stage(s) {unknown}; choose from {list(STAGES)}")
        if "merge" in self.stages and "bilevel" not in self.stages:
            raise ConfigError("stage 'merge' needs stage 'bilevel'")
        models = {"clean", "adv", "trees"} & set(self.stages)
        if "attack-eval" in self.stages and not models:
            raise ConfigError("stage 'attack-eval' needs a model stage (clean, adv or trees)")
        grid = list(self.eps_grid)
        if not grid or any(e < 0 for e in grid) or grid != sorted(grid):
            raise ConfigError("eps grid must be non-empty, non-negative and ascending")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.tree_model not in TREE_MODELS:
            raise ConfigError(f"tree model must be one of {list(TREE_MODELS)}")
        if not 0 <= self.percentile <= 1:
            raise ConfigError("percentile must lie in [0, 1]")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.dataset is None and self.synthetic is None:
            raise ConfigError("need a dataset path or a synthetic spec")
        if self.dataset is not None:
            for p in (self.dataset, self.cost_config):
                if p is None or not Path(p).exists():
                    raise ConfigError(f"missing file: {p}")
        return self

    def echo(self) -> dict:
        d = asdict(self)
        d["stages"] = list(self.stages)
        d["eps_grid"] = list(self.eps_grid)
        d["seeds"] = list(self.seeds)
        return json.loads(json.dumps(d))


@dataclass
class ReportRow:
    model: str
    eps: float
    clean_acc: float
    robust_acc: float
    seconds: float

    def __post_init__(self):
        for v in (self.clean_acc, self.robust_acc):
            if not 0.0 <= v <= 1.0:
                raise ValueError("accuracies must lie in [0, 1]")


@dataclass
class Report:
    rows: list[ReportRow] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    per_seed: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "config": self.config,
                "per_seed": self.per_seed}

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        return cls([ReportRow(**r) for r in d["rows"]], d.get("config", {}), d.get("per_seed", []))

    def lookup(self, model: str, eps: float) -> ReportRow:
        for r in self.rows:
            if r.model == model and r.eps == eps:
                return r
        raise KeyError((model, eps))


def emit_report(report: Report, fmt: str = "table", path=None) -> str:
    """Render ``report`` as ``table``, ``csv`` or ``json``; also write it when ``path`` is given."""
    if fmt == "json":
        text = json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n"
    elif fmt == "csv":
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in report.rows:
            w.writerow([r.model, repr(float(r.eps)), f"{r.clean_acc:.6f}", f"{r.robust_acc:.6f}",
                        f"{r.seconds:.3f}"])
        text = buf.getvalue()
    elif fmt == "table":
        lines = [f"{'model':<22} {'eps':>8} {'clean':>7} {'robust':>7} {'sec':>8}"]
        for r in report.rows:
            lines.append(f"{r.model:<22} {r.eps:>8g} {100 * r.clean_acc:>7.1f} "
                         f"{100 * r.robust_acc:>7.1f} {r.seconds:>8.2f}")
        text = "\n".join(lines) + "\n"
    else:
        raise ConfigError(f"unknown report format {fmt!r}; choose from {list(FORMATS)}")
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text


def load_report(path) -> Report:
    return Report.from_dict(load_json(path))


def load_experiment_data(spec: ExperimentSpec, seed: int = 0):
    """``(Dataset, CostModel, binners, cost_config)`` for the experiment's data source.

    Synthetic data uses ``spec.data_seed``, or the run ``seed`` when that is None.
    """
    if spec.dataset is not None:
        config = load_json(spec.cost_config)
        ds, cm, binners = load_dataset(spec.dataset, config)
        return ds, cm, binners, config
    data_seed = seed if spec.data_seed is None else spec.data_seed
    header, records, config = synthetic_table(spec.synthetic, data_seed)
    ds, cm, binners = table_to_dataset(header, records, config)
    return ds, cm, binners, config


def split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded train/test split; both parts are class-balanced by undersampling."""
    perm = np.random.default_rng(seed).permutation(len(dataset))
    n_test = max(1, int(round(test_fraction * len(dataset))))
    test_idx, train_idx = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    return (balance_undersample(dataset.subset(train_idx), seed),
            balance_undersample(dataset.subset(test_idx), seed))


def fit_tree_model(kind: str, X, y, n_estimators: int = 100, seed: int = 0):
    if kind == "gbs":
        return fit_gbs(X, y, n_estimators=n_estimators)
    if kind == "gbt":
        return fit_boosted_trees(X, y, n_estimators=n_estimators)
    if kind == "rf":
        return fit_forest(X, y, n_trees=n_estimators, seed=seed)
    raise ConfigError(f"unknown tree model {kind!r}")


def _run_seed(spec: ExperimentSpec, seed: int, ds: Dataset, cm: CostModel, config: dict,
              out: Path | None) -> list[ReportRow]:
    stages = set(spec.stages)
    cfg = replace(spec.train, seed=seed)
    train, test = split(ds, spec.test_fraction, seed)
    scorers: dict[str, object] = {}
    emb: dict[str, EmbeddingSet] = {}
    extra = {"seed": seed, "cost_config_hash": config_hash(config)}

    if "clean" in stages:
        Q, theta = train_clean(train, cfg, cm)
        scorers["clean-net"] = NetScorer(Q, theta)
        if out:
            save_json({"embeddings": embeddings_to_dict(Q, config), "net": net_to_dict(theta), **extra},
                      out / "clean_net.json")
    if "adv" in stages:
        Q, theta = train_adversarial(train, cm, cfg)
        scorers["adv-net"] = NetScorer(Q, theta)
        emb["adv"] = Q
        if out:
            save_json({"embeddings": embeddings_to_dict(Q, config), "net": net_to_dict(theta), **extra},
                      out / "adv_net.json")
    if "bilevel" in stages:
        Q, _ = train_bilevel_full(train, cm, cfg)
        emb["bilevel"] = Q
        if out:
            save_json(embeddings_to_dict(Q, config, extra), out / "bilevel_embeddings.json")
    if "merge" in stages:
        res = merge_embeddings(emb["bilevel"], spec.percentile)
        emb["merged"] = res.merged
        if out:
            save_json(embeddings_to_dict(res.merged, config,
                                         {**extra, "percentile": spec.percentile,
                                          "threshold": res.threshold}),
                      out / "merged_embeddings.json")
    if "trees" in stages:
        source = "merged" if "merged" in emb else "bilevel" if "bilevel" in emb else "onehot"
        E = emb.get(source)
        X = E.embed_rows(train.rows) if E is not None else one_hot_batch(train.rows, cm)
        model = fit_tree_model(spec.tree_model, X, train.labels, spec.n_estimators, seed)
        name = f"{spec.tree_model}-{source}"
        scorers[name] = TreeScorer(model, embeddings=E, cards=None if E is not None else cm.cardinalities)
        if out:
            save_json({"model": model.to_dict(), "input": source, **extra}, out / "trees.json")

    rows: list[ReportRow] = []
    if "attack-eval" in stages:
        mode = "exact" if spec.exact else "beam"
        for name, scorer in scorers.items():
            for eps in spec.eps_grid:
                t0 = time.perf_counter()
                clean, robust = evaluate(test, scorer, cm, float(eps), mode, strict=spec.strict,
                                         beam_width=spec.beam_width)
                secs = 0.0 if spec.strict else time.perf_counter() - t0
                rows.append(ReportRow(name, float(eps), clean, robust, secs))
    return rows


def _aggregate(per_seed: list[list[ReportRow]]) -> list[ReportRow]:
    keys = [(r.model, r.eps) for r in per_seed[0]]
    out = []
    for i, (model, eps) in enumerate(keys):
        group = [rows[i] for rows in per_seed]
        out.append(ReportRow(model, eps,
                             float(np.mean([r.clean_acc for r in group])),
                             float(np.mean([r.robust_acc for r in group])),
                             float(np.sum([r.seconds for r in group]))))
    return out


def run_pipeline(spec: ExperimentSpec) -> Report:
    """Run the requested stages for every seed; rows average over seeds.

    In ``strict`` mode attacks run serially and timings are reported as zero,
    so equal specs give byte-identical reports.
    """
    spec.validate()
    root = Path(spec.out_dir) if spec.out_dir else None
    per_seed = []
    for seed in spec.seeds:
        ds, cm, binners, config = load_experiment_data(spec, seed)
        out = root / f"seed{seed}" if root else None
        if out:
            out.mkdir(parents=True, exist_ok=True)
            save_json({"binners": binners_to_dict(binners), "seed": seed}, out / "binners.json")
        per_seed.append(_run_seed(spec, seed, ds, cm, config, out))
    report = Report(_aggregate(per_seed) if per_seed[0] else [], spec.echo(),
                    [{"seed": s, "rows": [asdict(r) for r in rows]} for s, rows in zip(spec.seeds, per_seed)])
    if root:
        for fmt, ext in (("json", "json"), ("csv", "csv"), ("table", "txt")):
            emit_report(report, fmt, root / f"report.{ext}")
    return report

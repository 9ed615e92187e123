"""Command-line interface: ``catrobust <subcommand> ...``."""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import _backend
from .attack_graph import NetScorer, TreeScorer, evaluate
from .attack_pgd import PGD_STEPS, PgdConfig
from .cost_model import one_hot_batch
from .io import (
    ConfigError,
    binners_from_dict,
    binners_to_dict,
    config_hash,
    embeddings_from_dict,
    embeddings_to_dict,
    load_dataset,
    load_json,
    net_from_dict,
    net_to_dict,
    save_json,
    write_csv,
)
from .merging import merge_embeddings
from .projections import DYKSTRA_STEPS
from .pipeline import (
    DEFAULT_EPS,
    EPS_GRIDS,
    FORMATS,
    STAGES,
    SYNTHETIC_TRAIN,
    TREE_MODELS,
    ExperimentSpec,
    Report,
    ReportRow,
    emit_report,
    fit_tree_model,
    load_report,
    run_pipeline,
    split,
)
from .synthetic import SyntheticSpec, synthetic_table
from .training import TrainConfig, train_adversarial, train_bilevel_full, train_clean
from .trees import model_from_dict


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="cost-config JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--pgd-steps", type=int, default=PGD_STEPS)
    p.add_argument("--dykstra-steps", type=int, default=DYKSTRA_STEPS)
    p.add_argument("--alpha", type=float, default=None, help="Cat-PGD step size (default: scaled to eps)")
    p.add_argument("--epochs", type=int, default=SYNTHETIC_TRAIN.epochs)
    p.add_argument("--batch-size", type=int, default=SYNTHETIC_TRAIN.batch_size)
    p.add_argument("--theta-steps", type=int, default=SYNTHETIC_TRAIN.theta_steps)
    p.add_argument("--q-steps", type=int, default=SYNTHETIC_TRAIN.q_steps)


def _data_args(p: argparse.ArgumentParser, default_split: str) -> None:
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--split", choices=("all", "train", "test"), default=default_split)
    p.add_argument("--test-fraction", type=float, default=0.2)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="catrobust",
                                 description="Cost-aware robustness for categorical tabular models.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write the synthetic benchmark CSV and cost config")
    _common(p)
    p.add_argument("--n-samples", type=int, default=SyntheticSpec.n_samples)

    p = sub.add_parser("train", help="train an embedding network")
    _common(p)
    _data_args(p, "train")
    p.add_argument("--mode", choices=("clean", "adv", "bilevel"), required=True)
    p.add_argument("--eps", type=float, default=DEFAULT_EPS)
    p.add_argument("--lr-theta", type=float, default=SYNTHETIC_TRAIN.lr_theta)
    p.add_argument("--lr-q", type=float, default=SYNTHETIC_TRAIN.lr_q)
    p.add_argument("--theta-adv", action="store_true", help="bilevel theta-steps on adversarial inputs")

    p = sub.add_parser("merge", help="merge close embedding columns")
    _common(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--percentile", type=float, required=True)
    p.add_argument("--per-feature", action="store_true", help="one threshold per feature")

    p = sub.add_parser("train-trees", help="fit a tree model on embedded or one-hot rows")
    _common(p)
    _data_args(p, "train")
    p.add_argument("--model", choices=TREE_MODELS, required=True)
    p.add_argument("--embeddings", help="embedding JSON (omit for one-hot input)")
    p.add_argument("--n-estimators", type=int, default=100)

    p = sub.add_parser("attack-eval", help="clean and robust accuracy under the graph attack")
    _common(p)
    _data_args(p, "test")
    p.add_argument("--model", required=True, help="net or tree JSON")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--exact", action="store_true", help="exact search (default: beam)")
    p.add_argument("--beam-width", type=int, default=1000)
    p.add_argument("--strict", action="store_true", help="serial, deterministic output")

    p = sub.add_parser("report", help="render a report JSON")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=FORMATS, default="table")

    p = sub.add_parser("run", help="run the full pipeline")
    _common(p)
    p.add_argument("--data", help="dataset CSV (default: synthetic benchmark)")
    p.add_argument("--stages", default=",".join(STAGES))
    p.add_argument("--eps-grid", default=None, help=f"comma list or one of {sorted(EPS_GRIDS)}")
    p.add_argument("--seeds", default=None, help="comma list (default: --seed)")
    p.add_argument("--eps", type=float, default=DEFAULT_EPS, help="training budget")
    p.add_argument("--lr-q", type=float, default=SYNTHETIC_TRAIN.lr_q)
    p.add_argument("--percentile", type=float, default=0.1)
    p.add_argument("--model", choices=TREE_MODELS, default="gbs")
    p.add_argument("--beam", action="store_true", help="beam search instead of exact")
    p.add_argument("--strict", action="store_true", help="serial attacks, zero timings")
    p.add_argument("--format", choices=FORMATS, default="table")
    return ap


def _train_cfg(args, eps: float) -> TrainConfig:
    pgd = PgdConfig(eps=eps, pgd_steps=args.pgd_steps, d_steps=args.dykstra_steps, alpha=args.alpha)
    return replace(SYNTHETIC_TRAIN, epochs=args.epochs, batch_size=args.batch_size,
                   theta_steps=args.theta_steps, q_steps=args.q_steps, seed=args.seed, pgd=pgd,
                   lr_theta=getattr(args, "lr_theta", SYNTHETIC_TRAIN.lr_theta),
                   lr_q=getattr(args, "lr_q", SYNTHETIC_TRAIN.lr_q),
                   theta_adv=getattr(args, "theta_adv", False))


def _need(args, *names):
    for n in names:
        if getattr(args, n, None) in (None, ""):
            raise ConfigError(f"--{n.replace('_', '-')} is required")


def _load(args, binners=None):
    _need(args, "config")
    config = load_json(args.config)
    ds, cm, binners = load_dataset(args.data, config, binners)
    if args.split != "all":
        if not 0 < args.test_fraction < 1:
            raise ConfigError("--test-fraction must lie in (0, 1)")
        train, test = split(ds, args.test_fraction, args.seed)
        ds = train if args.split == "train" else test
    return ds, cm, binners, config


def cmd_gen_synthetic(args) -> None:
    _need(args, "out")
    out = Path(args.out)
    header, records, config = synthetic_table(SyntheticSpec(n_samples=args.n_samples), args.seed)
    write_csv(out / "data.csv", header, records)
    save_json(config, out / "costs.json")
    print(f"wrote {out / 'data.csv'} ({len(records)} rows) and {out / 'costs.json'}")


def cmd_train(args) -> None:
    _need(args, "out")
    ds, cm, binners, config = _load(args)
    cfg = _train_cfg(args, args.eps)
    if args.mode == "clean":
        Q, theta = train_clean(ds, cfg, cm)
    elif args.mode == "adv":
        Q, theta = train_adversarial(ds, cm, cfg)
    else:
        Q, theta = train_bilevel_full(ds, cm, cfg)
    meta = {"seed": args.seed, "mode": args.mode, "eps": args.eps, "binners": binners_to_dict(binners)}
    save_json({"kind": "net", "embeddings": embeddings_to_dict(Q, config), "net": net_to_dict(theta),
               **meta}, args.out)
    print(f"trained {args.mode} model on {len(ds)} rows -> {args.out}")


def cmd_merge(args) -> None:
    _need(args, "out")
    blob = load_json(args.embeddings)
    emb = blob.get("embeddings", blob)
    try:
        res = merge_embeddings(embeddings_from_dict(emb), args.percentile, per_feature=args.per_feature)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    extra = {"percentile": args.percentile, "threshold": res.threshold, "seed": args.seed,
             "binners": blob.get("binners")}
    d = embeddings_to_dict(res.merged, None, extra)
    d["cost_config_hash"] = emb.get("cost_config_hash")
    save_json(d, args.out)
    print(f"merged to {res.n_clusters} clusters (threshold {res.threshold}) -> {args.out}")


def cmd_train_trees(args) -> None:
    _need(args, "out")
    E, binners, emb = None, None, None
    if args.embeddings:
        blob = load_json(args.embeddings)
        emb = blob.get("embeddings", blob)
        E = embeddings_from_dict(emb)
        binners = binners_from_dict(blob["binners"]) if blob.get("binners") else None
    ds, cm, binners, config = _load(args, binners)
    if E is not None:
        if emb.get("cost_config_hash") not in (None, config_hash(config)):
            raise ConfigError("embeddings were trained under a different cost config")
        if list(E.cardinalities) != list(cm.cardinalities):
            raise ConfigError("embedding shapes do not match the dataset")
    X = E.embed_rows(ds.rows) if E is not None else one_hot_batch(ds.rows, cm)
    model = fit_tree_model(args.model, X, ds.labels, args.n_estimators, args.seed)
    save_json({"kind": "trees", "model": model.to_dict(),
               "embeddings": None if E is None else embeddings_to_dict(E),
               "binners": binners_to_dict(binners), "seed": args.seed}, args.out)
    print(f"fitted {args.model} on {len(ds)} rows -> {args.out}")


def _scorer(blob: dict, cm):
    kind = blob.get("kind")
    if kind == "net":
        return NetScorer(embeddings_from_dict(blob["embeddings"]), net_from_dict(blob["net"]))
    if kind == "trees":
        E = None if blob.get("embeddings") is None else embeddings_from_dict(blob["embeddings"])
        return TreeScorer(model_from_dict(blob["model"]), embeddings=E,
                          cards=None if E is not None else cm.cardinalities)
    raise ConfigError("model file must come from `train` or `train-trees`")


def cmd_attack_eval(args) -> None:
    if args.eps < 0:
        raise ConfigError("--eps must be non-negative")
    blob = load_json(args.model)
    binners = binners_from_dict(blob["binners"]) if blob.get("binners") else None
    ds, cm, _, _ = _load(args, binners)
    scorer = _scorer(blob, cm)
    t0 = time.perf_counter()
    clean, robust = evaluate(ds, scorer, cm, args.eps, "exact" if args.exact else "beam",
                             strict=args.strict, beam_width=args.beam_width)
    secs = 0.0 if args.strict else time.perf_counter() - t0
    report = Report([ReportRow(Path(args.model).stem, float(args.eps), clean, robust, secs)],
                    {"model": str(args.model), "data": str(args.data), "split": args.split,
                     "exact": args.exact, "seed": args.seed, "backend": _backend.NAME})
    print(emit_report(report, "table"), end="")
    if args.out:
        emit_report(report, "json", args.out)


def cmd_report(args) -> None:
    text = emit_report(load_report(args.input), args.format, args.out)
    if not args.out:
        print(text, end="")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


def cmd_run(args) -> None:
    if args.eps_grid is None:
        grid = EPS_GRIDS["synthetic"]
    elif args.eps_grid in EPS_GRIDS:
        grid = EPS_GRIDS[args.eps_grid]
    else:
        grid = _floats(args.eps_grid)
    seeds = tuple(int(s) for s in _floats(args.seeds)) if args.seeds else (args.seed,)
    if args.data and not args.config:
        raise ConfigError("--data needs --config")
    spec = ExperimentSpec(
        stages=tuple(s.strip() for s in args.stages.split(",") if s.strip()),
        eps_grid=grid, seeds=seeds, train=_train_cfg(args, args.eps),
        dataset=args.data, cost_config=args.config if args.data else None,
        out_dir=args.out, percentile=args.percentile, tree_model=args.model,
        exact=not args.beam, strict=args.strict)
    report = run_pipeline(spec)
    print(emit_report(report, args.format), end="")


COMMANDS = {
    "gen-synthetic": cmd_gen_synthetic,
    "train": cmd_train,
    "merge": cmd_merge,
    "train-trees": cmd_train_trees,
    "attack-eval": cmd_attack_eval,
    "report": cmd_report,
    "run": cmd_run,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"catrobust: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

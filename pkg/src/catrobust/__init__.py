"""Cost-aware adversarial robustness for models on categorical tabular data."""
from ._backend import NAME as BACKEND
from .attack_graph import AttackResult, NetScorer, TableScorer, TreeScorer, evaluate, graph_attack, robust_accuracy
from .attack_pgd import PgdConfig, RelaxedAdvExample, attack_batch, cat_pgd, perturb
from .cost_model import (
    IMPOSSIBLE,
    MAX_COST,
    MIN_COST,
    BlockLayout,
    CostMatrix,
    CostModel,
    Dataset,
    FeatureSpec,
    InvalidInputError,
    cost,
    cost_weights,
    one_hot,
    relaxed_cost,
)
from .io import ConfigError
from .merging import MergeResult, apply_merged, merge_embeddings
from .net import EmbeddingSet, NetParams, backward, embed, forward
from .pipeline import ExperimentSpec, Report, emit_report, run_pipeline
from .projections import dykstra_project, project_simplex, project_simplices, project_weighted_l1
from .synthetic import SyntheticSpec, gen_synthetic
from .training import TrainConfig, train_adversarial, train_bilevel, train_clean
from .trees import fit_boosted_trees, fit_forest, fit_gbs, predict

__version__ = "0.1.0"

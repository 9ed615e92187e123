import numpy as np
import pytest

from catrobust.attack_graph import NetScorer, evaluate
from catrobust.attack_pgd import PgdConfig
from catrobust.cost_model import CostMatrix, CostModel, Dataset
from catrobust.net import init_embeddings
from catrobust.training import (
    TrainConfig,
    accuracy,
    train_adversarial,
    train_bilevel,
    train_bilevel_full,
    train_clean,
)

from conftest import make_feature, random_cost_model


def separable(rng, n=400):
    """Label equals (feature 0 is in its upper half); feature 1 is noise."""
    rows = np.stack([rng.integers(0, 4, n), rng.integers(0, 3, n)], 1)
    labels = (rows[:, 0] >= 2).astype(int)
    return Dataset(rows, labels, (make_feature("a", 4), make_feature("b", 3)))


SMALL = dict(epochs=30, batch_size=32, hidden=(8,), width=3, lr_theta=0.3)


def params_equal(a, b):
    Qa, ta = a
    Qb, tb = b
    return (all(np.array_equal(x, y) for x, y in zip(Qa.matrices, Qb.matrices))
            and all(np.array_equal(x, y) for x, y in zip(ta.weights + ta.biases, tb.weights + tb.biases)))


@pytest.mark.parametrize("kw", [{"epochs": -1}, {"batch_size": 0}, {"lr_q": 0.0},
                                {"theta_steps": 0, "q_steps": 0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_clean_fits_separable(rng):
    ds = separable(rng)
    Q, theta = train_clean(ds, TrainConfig(**SMALL))
    assert accuracy(ds, Q, theta) == 1.0


def test_clean_needs_cardinalities(rng):
    ds = separable(rng)
    with pytest.raises(ValueError):
        train_clean(Dataset(ds.rows, ds.labels), TrainConfig(**SMALL))


def test_deterministic(rng):
    ds = separable(rng)
    cm = random_cost_model(rng, [4, 3])
    cfg = TrainConfig(**SMALL, pgd=PgdConfig(eps=1.0))
    assert params_equal(train_clean(ds, cfg), train_clean(ds, cfg))
    assert params_equal(train_adversarial(ds, cm, cfg), train_adversarial(ds, cm, cfg))
    assert params_equal(train_bilevel_full(ds, cm, cfg), train_bilevel_full(ds, cm, cfg))


def test_zero_budget_adversarial_is_clean(rng):
    ds = separable(rng)
    cm = random_cost_model(rng, [4, 3])
    cfg = TrainConfig(**SMALL, pgd=PgdConfig(eps=0.0))
    assert params_equal(train_adversarial(ds, cm, cfg), train_clean(ds, cfg, cm))


def test_epoch_log(rng):
    ds = separable(rng)
    log: list = []
    train_clean(ds, TrainConfig(**SMALL), log=log)
    assert len(log) == 30 and log[-1]["loss"] < log[0]["loss"]


def test_no_q_steps_keeps_initial_embeddings(rng):
    ds = separable(rng)
    cm = random_cost_model(rng, [4, 3])
    cfg = TrainConfig(**SMALL, q_steps=0, pgd=PgdConfig(eps=1.0))
    Q = train_bilevel(ds, cm, cfg)
    Q0 = init_embeddings([4, 3], cfg.width, np.random.default_rng(cfg.seed))
    assert all(np.array_equal(a, b) for a, b in zip(Q.matrices, Q0.matrices))


def test_phases_touch_one_side(rng):
    ds = separable(rng)
    cm = random_cost_model(rng, [4, 3])
    trace: list = []
    cfg = TrainConfig(epochs=3, batch_size=32, hidden=(8,), width=3, theta_steps=2, q_steps=3,
                      pgd=PgdConfig(eps=1.0))
    train_bilevel_full(ds, cm, cfg, trace=trace)
    phases = [ph for ph, _, _ in trace]
    assert phases[:5] == ["theta", "theta", "q", "q", "q"]
    for ph, t_changed, q_changed in trace:
        assert (ph == "theta" and t_changed and not q_changed) or (ph == "q" and q_changed and not t_changed)


def test_bilevel_zero_budget_close_to_clean(rng):
    ds = separable(rng, 600)
    cm = random_cost_model(rng, [4, 3])
    cfg = TrainConfig(**SMALL, pgd=PgdConfig(eps=0.0))
    clean = accuracy(ds, *train_clean(ds, cfg, cm))
    bil = accuracy(ds, *train_bilevel_full(ds, cm, cfg))
    assert bil >= clean - 0.02


def test_adversarial_training_hardens_cheap_feature(rng):
    # label lives on a cheap feature and is echoed by a dear one; AT should lean on the dear one
    n = 600
    a = rng.integers(0, 2, n)
    b = np.where(rng.random(n) < 0.8, a, 1 - a)
    ds = Dataset(np.stack([a, b], 1), a)
    cm = CostModel((make_feature("a", 2), make_feature("b", 2)),
                   (CostMatrix.from_raw([[0, 0.5], [0.5, 0]]), CostMatrix.from_raw([[0, 50], [50, 0]])))
    # a long run at the default step lets the net saturate the raw gradient; a larger step keeps it honest
    cfg = TrainConfig(**SMALL, pgd=PgdConfig(eps=1.0, alpha=10.0))
    clean = evaluate(ds, NetScorer(*train_clean(ds, cfg, cm)), cm, 1.0)
    adv = evaluate(ds, NetScorer(*train_adversarial(ds, cm, cfg)), cm, 1.0)
    assert clean[0] == 1.0 and clean[1] <= 0.55
    assert adv[1] >= 0.75

import numpy as np
import pytest

from catrobust.attack_pgd import PgdConfig, attack_batch, cat_pgd, default_alpha, perturb
from catrobust.cost_model import CostMatrix, CostModel, Dataset, cost_weights_batch, one_hot, one_hot_batch
from catrobust.net import EmbeddingSet, NetParams, logits
from catrobust.projections import violation_batch

from conftest import make_feature, random_cost_model, random_net


def swap_model(price=5.0):
    """One binary feature; value 0 scores +2, value 1 scores -2."""
    cm = CostModel((make_feature("a", 2),), (CostMatrix.from_raw([[0, price], [price, 0]]),))
    Q = EmbeddingSet([np.array([[1.0, -1.0]])])
    theta = NetParams([np.array([[2.0]])], [np.zeros(1)])
    return cm, Q, theta


class TestConfig:
    def test_defaults(self):
        cfg = PgdConfig(eps=1.0)
        assert cfg.pgd_steps == 20 and cfg.d_steps == 20

    @pytest.mark.parametrize("kw", [{"eps": -1}, {"eps": 1, "pgd_steps": 0}, {"eps": 1, "d_steps": 0},
                                    {"eps": 1, "alpha": 0.0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            PgdConfig(**kw)

    def test_default_alpha_scales_with_eps(self):
        W = np.array([[0.0, 2.0, 10000.0, 4.0]])
        assert default_alpha(W, 1.0, 20)[0] == pytest.approx(2.5 / (20 * 2.0))
        assert default_alpha(W, 3.0, 20)[0] == pytest.approx(3 * default_alpha(W, 1.0, 20)[0])


class TestCatPgd:
    def test_zero_budget_is_identity(self, rng):
        cm = random_cost_model(rng, [3, 4])
        Q, theta = random_net(rng, [3, 4])
        ex = cat_pgd([2, 1], 1, Q, theta, cm, PgdConfig(eps=0.0))
        assert np.array_equal(ex.xtilde_prime, one_hot([2, 1], [3, 4]))

    def test_full_swap_when_affordable(self):
        cm, Q, theta = swap_model()
        ex = cat_pgd([0], 1, Q, theta, cm, PgdConfig(eps=5.0))
        assert ex.xtilde_prime == pytest.approx([0.0, 1.0], abs=1e-6)
        assert logits(ex.xtilde_prime, Q, theta)[0] < 0

    def test_half_budget_moves_at_most_half(self):
        cm, Q, theta = swap_model()
        ex = cat_pgd([0], 1, Q, theta, cm, PgdConfig(eps=2.5))
        assert ex.xtilde_prime[1] <= 0.5 + 1e-9
        assert ex.xtilde_prime[1] == pytest.approx(0.5, abs=1e-6)
        assert ex.spent_cost <= 2.5 * (1 + 1e-6)

    def test_non_target_untouched(self, rng):
        cm = random_cost_model(rng, [3, 3], target_class=1)
        Q, theta = random_net(rng, [3, 3])
        ex = cat_pgd([1, 2], 0, Q, theta, cm, PgdConfig(eps=5.0))
        assert not ex.attacked and np.array_equal(ex.xtilde_prime, one_hot([1, 2], [3, 3]))

    def test_loss_does_not_drop(self, rng):
        cm = random_cost_model(rng, [3, 4, 2])
        Q, theta = random_net(rng, [3, 4, 2])
        for row in ([0, 1, 1], [2, 3, 0], [1, 0, 1]):
            ex = cat_pgd(row, 1, Q, theta, cm, PgdConfig(eps=2.0))
            assert ex.loss_after >= ex.loss_before - 1e-9


class TestBatch:
    def test_empty(self, rng):
        cm = random_cost_model(rng, [2, 2])
        Q, theta = random_net(rng, [2, 2])
        ds = Dataset(np.zeros((0, 2), dtype=int), np.zeros(0, dtype=int))
        assert attack_batch(ds, Q, theta, cm, PgdConfig(eps=1.0)) == []

    def test_all_non_target(self, rng):
        cm = random_cost_model(rng, [3, 2])
        Q, theta = random_net(rng, [3, 2])
        rows = np.stack([rng.integers(0, 3, 20), rng.integers(0, 2, 20)], 1)
        out = attack_batch(Dataset(rows, np.zeros(20, dtype=int)), Q, theta, cm, PgdConfig(eps=3.0))
        assert all(not ex.attacked for ex in out)
        assert np.array_equal(np.stack([ex.xtilde_prime for ex in out]), one_hot_batch(rows, [3, 2]))

    def test_feasible_on_random_rows(self, rng):
        cards = [3, 5, 2, 4]
        cm = random_cost_model(rng, cards, 0.1, 8.0, impossible=0.2)
        Q, theta = random_net(rng, cards, 3, (8,))
        rows = np.stack([rng.integers(0, t, 1000) for t in cards], 1)
        ds = Dataset(rows, np.ones(1000, dtype=int))
        out = attack_batch(ds, Q, theta, cm, PgdConfig(eps=1.5), chunk=128)
        X = np.stack([ex.xtilde_prime for ex in out])
        X0 = one_hot_batch(rows, cm)
        W = cost_weights_batch(rows, cm)
        assert violation_batch(X0, X - X0, W, 1.5, cm.layout.offsets).max() < 1e-6
        assert all(ex.spent_cost <= 1.5 * (1 + 1e-6) for ex in out)
        assert X.min() >= -1e-9

    def test_chunking_and_threads_do_not_change_results(self, rng, monkeypatch):
        cm = random_cost_model(rng, [3, 3])
        Q, theta = random_net(rng, [3, 3])
        rows = np.stack([rng.integers(0, 3, 50), rng.integers(0, 3, 50)], 1)
        ds = Dataset(rows, rng.integers(0, 2, 50))
        a = attack_batch(ds, Q, theta, cm, PgdConfig(eps=1.0), chunk=7, strict=True)
        monkeypatch.setenv("CATROBUST_NUM_THREADS", "3")
        b = attack_batch(ds, Q, theta, cm, PgdConfig(eps=1.0), chunk=7)
        c = attack_batch(ds, Q, theta, cm, PgdConfig(eps=1.0), chunk=50)
        # threads: bitwise; chunk size only shifts BLAS rounding
        assert all(np.array_equal(x.xtilde_prime, y.xtilde_prime) for x, y in zip(a, b))
        assert all(np.allclose(x.xtilde_prime, y.xtilde_prime, atol=1e-12) for x, y in zip(a, c))

    def test_perturb_matches_single(self, rng):
        cm = random_cost_model(rng, [4, 3])
        Q, theta = random_net(rng, [4, 3])
        rows = np.array([[0, 1], [3, 2], [2, 0]])
        X = perturb(rows, np.array([1, 1, 0]), Q, theta, cm, PgdConfig(eps=1.2))
        for i in range(3):
            single = cat_pgd(rows[i], [1, 1, 0][i], Q, theta, cm, PgdConfig(eps=1.2))
            assert np.allclose(X[i], single.xtilde_prime)


def test_relaxed_accuracy_monotone_in_budget(rng):
    cards = [3, 4, 3]
    cm = random_cost_model(rng, cards, 0.2, 4.0)
    Q, theta = random_net(rng, cards, 3, (8,))
    rows = np.stack([rng.integers(0, t, 300) for t in cards], 1)
    y = np.ones(300, dtype=int)
    accs = []
    for eps in (0.0, 0.01, 0.02, 0.03, 0.05, 0.1, 0.3, 0.5, 1.0, 3.0):
        X = perturb(rows, y, Q, theta, cm, PgdConfig(eps=eps))
        accs.append(float(np.mean(logits(X, Q, theta) > 0)))
    assert all(b <= a + 1e-12 for a, b in zip(accs, accs[1:])), accs

import itertools

import numpy as np
import pytest

from catrobust.cost_model import CostMatrix, CostModel, FeatureSpec
from catrobust.net import init_embeddings, init_net


def make_feature(name: str, t: int) -> FeatureSpec:
    return FeatureSpec(name, t, tuple(f"{name}{k}" for k in range(t)))


def random_cost_model(rng, cards, lo=0.5, hi=5.0, impossible=0.0, target_class=1) -> CostModel:
    feats, mats = [], []
    for i, t in enumerate(cards):
        raw = np.round(rng.uniform(lo, hi, size=(t, t)), 2).tolist()
        for j in range(t):
            raw[j][j] = 0.0
            for k in range(t):
                if j != k and rng.random() < impossible:
                    raw[j][k] = None
        feats.append(make_feature(f"f{i}", t))
        mats.append(CostMatrix.from_raw(raw))
    return CostModel(tuple(feats), tuple(mats), target_class)


def random_net(rng, cards, d=3, hidden=(5,)):
    Q = init_embeddings(cards, d, rng)
    theta = init_net(len(cards) * d, hidden, rng)
    # nonzero biases so ReLU kinks are not hit systematically
    for b in theta.biases:
        b += rng.normal(0, 0.1, size=b.shape)
    return Q, theta


def all_rows(cards):
    return np.array(list(itertools.product(*[range(t) for t in cards])), dtype=np.int64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def grad_check(rng, cards=(3, 2, 4), d=3, hidden=(5,), n=4, h=1e-5) -> float:
    """Largest relative error (per tensor) between backward() and central differences."""
    from catrobust.cost_model import one_hot_batch
    from catrobust.net import backward, forward

    Q, theta = random_net(rng, list(cards), d, hidden)
    rows = np.stack([rng.integers(0, t, n) for t in cards], axis=1)
    X = one_hot_batch(rows, list(cards)) + rng.normal(0, 0.1, (n, sum(cards)))
    y = rng.integers(0, 2, n)
    g = backward(X, Q, theta, y)

    def loss():
        return forward(X, Q, theta, y)[1]

    def numeric(arr):
        out = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = loss()
            arr[idx] = old - h
            down = loss()
            arr[idx] = old
            out[idx] = (up - down) / (2 * h)
        return out

    def rel(a, b):
        return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)

    errs = []
    for W, dW in zip(theta.weights + theta.biases, g.d_theta.weights + g.d_theta.biases):
        errs.append(rel(dW, numeric(W)))
    for Qi, dQi in zip(Q.matrices, g.d_Q):
        errs.append(rel(dQi, numeric(Qi)))
    errs.append(rel(g.d_input, numeric(X)))
    return max(errs)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE.append(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

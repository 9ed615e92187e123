"""Euclidean projections used by the relaxed categorical attack.

All operators act in perturbation space: for a block-feasible point ``xtilde``
we look for ``delta`` such that ``xtilde + delta`` lies on every per-feature
simplex and ``sum(w * |delta|) <= eps``.
"""
from __future__ import annotations

import numpy as np

from ._backend import kernels
from ._kernels_py import wl1_project_rows_bisect
from .cost_model import MAX_COST, BlockLayout

DYKSTRA_STEPS = 20


def _offsets(layout) -> np.ndarray:
    if isinstance(layout, BlockLayout):
        return np.asarray(layout.offsets, dtype=np.int64)
    return np.asarray(layout, dtype=np.int64)


def project_simplex(v) -> np.ndarray:
    """Nearest point of the probability simplex (sort-and-threshold)."""
    v = np.asarray(v, dtype=np.float64)
    return kernels.simplex_project_blocks(v[None, :], np.array([0, v.size]))[0]


def project_simplices(v, layout) -> np.ndarray:
    """Project every block of ``v`` (1-D or a batch of rows) onto its simplex."""
    v = np.asarray(v, dtype=np.float64)
    out = kernels.simplex_project_blocks(np.atleast_2d(v), _offsets(layout))
    return out[0] if v.ndim == 1 else out


def project_weighted_l1(v, w, eps: float, method: str = "sort", cap: float = MAX_COST) -> np.ndarray:
    """Nearest point of ``{z : sum(w * |z|) <= eps}``.

    The solution soft-thresholds ``v`` by ``lam * w``; ``lam`` is found either
    exactly from the sorted breakpoints ``|v_j| / w_j`` (``method="sort"``) or
    by bisection to 1e-10 (``method="bisect"``).  Zero-weight coordinates are
    returned untouched; a feasible ``v`` is returned as is.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if v.shape != w.shape:
        raise ValueError("v and w must have the same shape")
    V, W = np.atleast_2d(v), np.atleast_2d(w)
    if method == "sort":
        out = kernels.wl1_project_rows(V, W, eps, cap)
    elif method == "bisect":
        out = wl1_project_rows_bisect(V, W, eps, cap)
    else:
        raise ValueError(f"unknown method {method!r}")
    return out[0] if v.ndim == 1 else out


def dykstra_project(xtilde, delta, w, eps, layout, d_steps: int = DYKSTRA_STEPS,
                    cap: float = MAX_COST) -> np.ndarray:
    """Dykstra alternation between the simplices and the cost ball.

    Runs exactly ``d_steps`` rounds of::

        z     = P_simplices(xtilde + delta + p) - xtilde
        p     = delta + p - z
        delta = P_cost(z + q)
        q     = z + q - delta

    starting from ``p = q = 0`` and returns the last ``delta``.  Works on a
    single row or on a batch (``eps`` may then be per-row).  The result lies in
    the cost ball exactly; simplex feasibility is only approached, see
    :func:`project_onehot_intersection` for an exact finish.
    """
    if d_steps < 1:
        raise ValueError("d_steps must be >= 1")
    xtilde = np.asarray(xtilde, dtype=np.float64)
    single = xtilde.ndim == 1
    out = kernels.dykstra_rows(
        np.atleast_2d(xtilde), np.atleast_2d(delta), np.atleast_2d(w),
        eps, _offsets(layout), int(d_steps), cap,
    )
    return out[0] if single else out


def dykstra_trace(xtilde, delta, w, eps, layout, d_steps: int = DYKSTRA_STEPS,
                  cap: float = MAX_COST) -> list[float]:
    """Constraint violation after each Dykstra round (diagnostics, single row)."""
    off = _offsets(layout)
    xtilde = np.asarray(xtilde, dtype=np.float64)[None]
    d = np.asarray(delta, dtype=np.float64)[None].copy()
    W = np.asarray(w, dtype=np.float64)[None]
    p = np.zeros_like(d)
    q = np.zeros_like(d)
    trace = []
    for _ in range(d_steps):
        z = kernels.simplex_project_blocks(xtilde + d + p, off) - xtilde
        p = d + p - z
        d = kernels.wl1_project_rows(z + q, W, eps, cap)
        q = z + q - d
        trace.append(violation(xtilde[0], d[0], W[0], eps, off))
    return trace


def violation(xtilde, delta, w, eps, layout) -> float:
    """Max of simplex-sum deviation, negativity, and cost excess for one row."""
    off = _offsets(layout)
    x = np.asarray(xtilde) + np.asarray(delta)
    worst = max(0.0, float(np.sum(np.asarray(w) * np.abs(delta)) - eps))
    for i in range(len(off) - 1):
        blk = x[off[i]:off[i + 1]]
        worst = max(worst, abs(float(blk.sum()) - 1.0), max(0.0, -float(blk.min())))
    return worst


def violation_batch(Xt, D, W, eps, layout) -> np.ndarray:
    off = _offsets(layout)
    X = Xt + D
    eps = np.broadcast_to(np.asarray(eps, dtype=np.float64), (len(X),))
    worst = np.maximum(np.sum(W * np.abs(D), axis=1) - eps, 0.0)
    for i in range(len(off) - 1):
        blk = X[:, off[i]:off[i + 1]]
        worst = np.maximum(worst, np.abs(blk.sum(axis=1) - 1.0))
        worst = np.maximum(worst, -blk.min(axis=1))
    return worst


def restore_feasibility(xtilde, delta, w, eps, layout) -> np.ndarray:
    """Make ``xtilde + delta`` exactly feasible for both constraint families.

    Projects onto the simplices, then shrinks the perturbation toward ``xtilde``
    until the cost fits.  Shrinking keeps simplex feasibility because both
    ``xtilde`` and the projected point lie on the simplices.
    """
    Xt = np.atleast_2d(np.asarray(xtilde, dtype=np.float64))
    off = _offsets(layout)
    Z = kernels.simplex_project_blocks(Xt + np.atleast_2d(delta), off) - Xt
    spent = np.sum(np.atleast_2d(w) * np.abs(Z), axis=1)
    eps = np.broadcast_to(np.asarray(eps, dtype=np.float64), spent.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(spent > eps, eps / spent, 1.0)
    Z *= scale[:, None]
    return Z[0] if np.ndim(xtilde) == 1 else Z


def project_onehot_intersection(xtilde, delta, w, eps, layout, tol: float = 1e-12,
                                max_iter: int = 200) -> np.ndarray:
    """Exact projection of ``xtilde + delta`` onto simplices ∩ cost ball, for one-hot ``xtilde``.

    On the simplices the cost ``sum w|x - xtilde|`` is linear in ``x`` when
    ``xtilde`` is a vertex, so the projection is ``Π_simplices(xtilde + delta -
    lam * w_eff)`` with a scalar ``lam >= 0`` chosen by bisection.  Returns the
    perturbation; its cost never exceeds ``eps``.
    """
    Xt = np.atleast_2d(np.asarray(xtilde, dtype=np.float64))
    V = Xt + np.atleast_2d(np.asarray(delta, dtype=np.float64))
    W = np.atleast_2d(np.asarray(w, dtype=np.float64))
    off = _offsets(layout)
    if not np.all((Xt == 0) | (Xt == 1)) or not np.allclose(np.add.reduceat(Xt, off[:-1], axis=1), 1):
        raise ValueError("xtilde must be one-hot per block")
    # moving mass off the hot coordinate also pays its weight
    hot_w = np.add.reduceat(W * Xt, off[:-1], axis=1)
    W_eff = np.where(Xt == 1, 0.0, W + np.repeat(hot_w, np.diff(off), axis=1))
    n = len(Xt)
    eps = np.broadcast_to(np.asarray(eps, dtype=np.float64), (n,))

    def solve(lam):
        X = kernels.simplex_project_blocks(V - lam[:, None] * W_eff, off)
        return X, np.sum(W_eff * X, axis=1)

    lo = np.zeros(n)
    X, spent = solve(lo)
    done = spent <= eps
    pos = np.where(W_eff > 0, W_eff, np.inf).min(axis=1)
    # past this lam every block keeps all mass on its hot coordinate
    hi = np.where(np.isfinite(pos), (np.ptp(V, axis=1) + 2.0) / np.where(np.isfinite(pos), pos, 1.0), 0.0)
    for _ in range(max_iter):
        if np.all(done | (hi - lo <= tol * np.maximum(1.0, hi))):
            break
        mid = 0.5 * (lo + hi)
        _, s = solve(mid)
        over = s > eps
        lo = np.where(over & ~done, mid, lo)
        hi = np.where(~over & ~done, mid, hi)
    X_hi, _ = solve(np.where(done, 0.0, hi))
    Z = X_hi - Xt
    return Z[0] if np.ndim(xtilde) == 1 else Z

"""Vectorized numpy implementations of the projection kernels.

Every function works on a batch of rows laid out as a 2-D float64 array of
shape (n, t); per-feature blocks are described by ``offsets`` (length m + 1).
These are the reference path and the fallback when the compiled extension is
not importable.
"""
import numpy as np


def _padded_blocks(offsets):
    offsets = np.asarray(offsets, dtype=np.int64)
    lengths = np.diff(offsets)
    width = int(lengths.max())
    idx = offsets[:-1, None] + np.arange(width)[None, :]
    valid = np.arange(width)[None, :] < lengths[:, None]
    idx = np.where(valid, idx, 0)
    return idx, valid, lengths


def simplex_project_blocks(V, offsets):
    V = np.ascontiguousarray(V, dtype=np.float64)
    n = V.shape[0]
    idx, valid, lengths = _padded_blocks(offsets)
    P = V[:, idx]
    P = np.where(valid[None], P, -np.inf)
    U = -np.sort(-P, axis=2)
    U_fin = np.where(np.isfinite(U), U, 0.0)
    css = np.cumsum(U_fin, axis=2) - 1.0
    k = np.arange(1, U.shape[2] + 1, dtype=np.float64)
    cond = (U - css / k) > 0
    # rho: last index where cond holds (cond is a prefix)
    rho = cond.sum(axis=2) - 1
    rho = np.maximum(rho, 0)
    theta = np.take_along_axis(css, rho[..., None], axis=2)[..., 0] / (rho + 1)
    Z = np.maximum(P - theta[..., None], 0.0)
    out = np.empty_like(V)
    out[:, idx[valid]] = Z[:, valid]
    return out


def wl1_project_rows(V, W, eps, cap=np.inf):
    V = np.ascontiguousarray(V, dtype=np.float64)
    W = np.ascontiguousarray(W, dtype=np.float64)
    eps = np.broadcast_to(np.asarray(eps, dtype=np.float64), (V.shape[0],))
    A = np.abs(V)
    active_w = W > 0
    norm = np.sum(W * A, axis=1)
    out = V.copy()
    todo = norm > eps
    if not np.any(todo):
        return out
    A_t, W_t, e_t = A[todo], W[todo], eps[todo]
    with np.errstate(divide="ignore", invalid="ignore"):
        B = np.where(active_w[todo], A_t / W_t, -np.inf)
    order = np.argsort(-B, axis=1, kind="stable")
    Bs = np.take_along_axis(B, order, axis=1)
    As = np.take_along_axis(A_t, order, axis=1)
    Ws = np.take_along_axis(W_t, order, axis=1)
    live = np.isfinite(Bs)
    S1 = np.cumsum(np.where(live, Ws * As, 0.0), axis=1)
    S2 = np.cumsum(np.where(live, Ws * Ws, 0.0), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = (S1 - e_t[:, None]) / S2
    nxt = np.concatenate([Bs[:, 1:], np.full((Bs.shape[0], 1), -np.inf)], axis=1)
    nxt = np.where(np.isfinite(nxt), nxt, 0.0)
    ok = live & (lam >= nxt) & (lam < Bs + 1e-300)
    first = np.argmax(ok, axis=1)
    lam_star = np.maximum(lam[np.arange(lam.shape[0]), first], 0.0)
    shrunk = np.sign(V[todo]) * np.maximum(A_t - lam_star[:, None] * W_t, 0.0)
    shrunk = np.where(active_w[todo], shrunk, V[todo])
    out[todo] = shrunk
    if np.isfinite(cap):
        capped = (W >= cap) & (np.abs(out) < 1e-12)
        out[capped] = 0.0
    return out


def wl1_project_rows_bisect(V, W, eps, cap=np.inf, tol=1e-10, max_iter=200):
    V = np.ascontiguousarray(V, dtype=np.float64)
    W = np.ascontiguousarray(W, dtype=np.float64)
    eps = np.broadcast_to(np.asarray(eps, dtype=np.float64), (V.shape[0],))
    A = np.abs(V)
    out = V.copy()
    todo = np.sum(W * A, axis=1) > eps
    if not np.any(todo):
        return out
    A_t, W_t, e_t = A[todo], W[todo], eps[todo]
    with np.errstate(divide="ignore", invalid="ignore"):
        hi = np.max(np.where(W_t > 0, A_t / W_t, 0.0), axis=1)
    lo = np.zeros_like(hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        s = np.sum(W_t * np.maximum(A_t - mid[:, None] * W_t, 0.0), axis=1)
        over = s > e_t
        lo = np.where(over, mid, lo)
        hi = np.where(over, hi, mid)
        if np.all(hi - lo <= tol * np.maximum(1.0, hi)):
            break
    lam = hi
    shrunk = np.sign(V[todo]) * np.maximum(A_t - lam[:, None] * W_t, 0.0)
    out[todo] = np.where(W_t > 0, shrunk, V[todo])
    if np.isfinite(cap):
        capped = (W >= cap) & (np.abs(out) < 1e-12)
        out[capped] = 0.0
    return out


def dykstra_rows(Xt, D, W, eps, offsets, d_steps, cap=np.inf):
    Xt = np.ascontiguousarray(Xt, dtype=np.float64)
    delta = np.array(D, dtype=np.float64, copy=True)
    p = np.zeros_like(delta)
    q = np.zeros_like(delta)
    for _ in range(d_steps):
        z = simplex_project_blocks(Xt + delta + p, offsets) - Xt
        p = delta + p - z
        delta = wl1_project_rows(z + q, W, eps, cap)
        q = z + q - delta
    return delta

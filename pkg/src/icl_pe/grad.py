"""Hand-written reverse mode for the query loss (y_hat - y_q)^2.

Gradients flow only through the query row of H', so the backward pass works
on the query attention row ``a`` and never forms full (t+1)x(t+1) Jacobians.
"""

from dataclasses import dataclass
from typing import Dict

import numpy as np

from .model import activate_grad, forward, forward_batch, rotate_phase


@dataclass
class GradBundle:
    loss: float
    grads: Dict[str, np.ndarray]
    d_X: np.ndarray

    def __getitem__(self, name):
        return self.d_X if name == "X" else self.grads[name]


def _flat(A):
    return A.reshape(-1, A.shape[-1])


def backward_core(params, cache, gpred, need_params=True):
    """Pull ``gpred`` = dL/dy_hat (one entry per prompt) back to params and X.

    Parameter gradients are summed over the batch; d_X keeps one slice per prompt.

    Per prompt, dL/dH is a few rank-one terms ``coef (T,) x vec (d_m,)``, an
    extra query-row vector and, for rope, one block ``dK W_K^T``. These are
    contracted against X and W_in directly; dL/dH is never materialised.
    """
    X, a = cache.X, cache.a
    T = X.shape[1]
    P = params.P[:T] if params.P is not None else None
    W_in = params.W_in
    scale = np.sqrt(params.d_m)
    grads = {}

    def H_dot(vecs):
        # H_n vecs_n for every prompt: (n, T)
        out = np.einsum("nti,ni->nt", X, vecs @ W_in.T)
        if P is not None:
            out += vecs @ P.T
        return out

    def HT_dot(coef):
        # H_n^T coef_n for every prompt: (n, d_m)
        out = np.einsum("nt,nti->ni", coef, X) @ W_in
        if P is not None:
            out += coef @ P
        return out

    dz = gpred[:, None] * params.W_c[None, :] * activate_grad(cache.z, params.activation)
    if need_params:
        grads["W_c"] = gpred @ cache.h_out
        grads["W_V"] = cache.hbar.T @ dz

    # z = a^T H W_V
    g = dz @ params.W_V.T
    da = H_dot(g)
    rank1 = [(a, g)]

    # softmax backward, row form: a * (g - <a, g>)
    ds = a * (da - (a * da).sum(axis=1, keepdims=True)) / scale

    hq = cache.hq
    dK = None
    if params.pe_mode == "rope":
        dq_rot = np.einsum("nt,ntk->nk", ds, cache.K_rot)
        # inverse rotation = conjugate phase
        dq = rotate_phase(dq_rot, np.conj(cache.phase[-1]))
        dK = rotate_phase(ds[:, :, None] * cache.q_rot[:, None, :], np.conj(cache.phase))
        last = dq @ params.W_Q.T
        XdK = _flat(X).T @ _flat(dK)
        if need_params:
            grads["W_Q"] = hq.T @ dq
            grads["W_K"] = W_in.T @ XdK
    else:
        # s_j = <u, h_j> with u = h_q W_QK
        du = HT_dot(ds)
        rank1.append((ds, cache.u))
        last = du @ params.W_QK.T
        if need_params:
            grads["W_QK"] = hq.T @ du

    if need_params:
        gW = X[:, -1, :].T @ last
        for coef, vec in rank1:
            gW += np.einsum("nti,nt->ni", X, coef).T @ vec
        if dK is not None:
            gW += XdK @ params.W_K.T
        grads["W_in"] = gW
        if params.pe_mode == "trainable":
            dP = np.zeros_like(params.P)
            for coef, vec in rank1:
                dP[:T] += coef.T @ vec
            dP[T - 1] += last.sum(axis=0)
            grads["P"] = dP

    d_X = np.zeros_like(X)
    for coef, vec in rank1:
        d_X += coef[:, :, None] * (vec @ W_in.T)[:, None, :]
    d_X[:, -1, :] += last @ W_in.T
    if dK is not None:
        d_X += dK @ (W_in @ params.W_K).T
    return grads, d_X


def backward(params, X, y_q):
    """Loss and all gradients for a single prompt."""
    X = np.asarray(X, dtype=np.float64)
    pred, cache = forward_batch(params, X[None])
    r = pred[0] - float(y_q)
    grads, d_X = backward_core(params, cache, np.array([2.0 * r]))
    return GradBundle(r * r, {k: grads[k] for k in params.names}, d_X[0])


def loss_and_grads(params, X, y):
    """Mean query loss over a stack of prompts and its parameter gradients."""
    pred, cache = forward_batch(params, X)
    r = pred - y
    n = r.shape[0]
    loss = float(np.mean(r * r))
    grads, _ = backward_core(params, cache, 2.0 * r / n)
    return loss, {k: grads[k] for k in params.names}


def input_grad(params, X, y, wrt="loss"):
    """Per-prompt value and its gradient with respect to the prompt matrix.

    ``wrt="loss"`` differentiates (y_hat - y)^2, ``wrt="pred"`` differentiates y_hat.
    Returns ``(values (n,), d_X (n, t+1, d+1))``.
    """
    pred, cache = forward_batch(params, X)
    if wrt == "loss":
        r = pred - y
        _, d_X = backward_core(params, cache, 2.0 * r, need_params=False)
        return r * r, d_X
    if wrt == "pred":
        _, d_X = backward_core(params, cache, np.ones_like(pred), need_params=False)
        return pred, d_X
    raise ValueError("wrt must be 'loss' or 'pred'")


def _fd_loss(params, X, y):
    pred, trace = forward(params, X)
    return (pred - y) ** 2, trace.pre[-1] > 0


def fd_check(params, X, y_q, h=1e-5, abs_floor=1e-8, with_abs=False):
    """Worst relative disagreement between ``backward`` and central differences.

    Every parameter coordinate and every entry of X is perturbed. Coordinate
    pairs whose absolute difference is below ``abs_floor`` count as exact; with
    ReLU, coordinates whose +-h probes flip the query activation pattern are
    skipped because the loss has a kink there. ``with_abs`` also returns the
    largest absolute difference seen.
    """
    X = np.asarray(X, dtype=np.float64)
    y_q = float(y_q)
    bundle = backward(params, X, y_q)
    _, base_pattern = _fd_loss(params, X, y_q)
    relu = params.activation == "relu"
    worst = 0.0
    worst_abs = 0.0

    def compare(analytic, target, idx, evaluate):
        nonlocal worst, worst_abs
        old = target[idx]
        target[idx] = old + h
        lp, pat_p = evaluate()
        target[idx] = old - h
        lm, pat_m = evaluate()
        target[idx] = old
        if relu and not (np.array_equal(pat_p, base_pattern) and np.array_equal(pat_m, base_pattern)):
            return
        numeric = (lp - lm) / (2.0 * h)
        diff = abs(numeric - analytic)
        worst_abs = max(worst_abs, diff)
        if diff <= abs_floor:
            return
        worst = max(worst, diff / max(abs(numeric), abs(analytic)))

    work = params.copy()
    for name in work.names:
        arr = getattr(work, name)
        g = bundle.grads[name]
        for idx in np.ndindex(arr.shape):
            compare(g[idx], arr, idx, lambda: _fd_loss(work, X, y_q))
    Xw = X.copy()
    for idx in np.ndindex(Xw.shape):
        compare(bundle.d_X[idx], Xw, idx, lambda: _fd_loss(params, Xw, y_q))
    return (worst, worst_abs) if with_abs else worst

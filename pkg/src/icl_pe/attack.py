"""L2 (Frobenius) PGD on the x-part of prompts.

Works with anything exposing the batched predictor interface::

    predict(X)                     -> (n,) predictions
    input_grad(X, y, wrt="loss")   -> ((n,) losses, (n, t+1, d+1) gradients)

:class:`icl_pe.model.ModelParams` implements both.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class AttackSpec:
    eps: float
    k: int = 40
    alpha: Optional[float] = None
    freeze_query: bool = False

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.alpha is None:
            object.__setattr__(self, "alpha", self.eps / 10.0)
        if self.eps > 0 and not self.alpha > 0:
            raise ValueError("alpha must be positive when eps > 0")

    def mask(self, T, d):
        """1.0 on perturbable coordinates of a (T, d+1) prompt, 0.0 elsewhere."""
        m = np.zeros((T, d + 1))
        m[:, :d] = 1.0
        if self.freeze_query:
            m[-1, :] = 0.0
        return m


def query_losses(model, X, y):
    r = model.predict(X) - y
    return r * r


@dataclass
class PGDResult:
    X_adv: np.ndarray
    loss: np.ndarray
    clean_loss: np.ndarray
    # largest ||masked dL/dX||_F / (2 |y_hat - y|) seen along the path, per prompt
    max_pred_grad: np.ndarray


def pgd_batch(model, X, y, spec):
    """Attack every prompt of the stack X (n, t+1, d+1); returns a :class:`PGDResult`.

    Zero start, normalised-gradient ascent steps of length alpha, projection
    onto the Frobenius ball of radius eps, best iterate kept per prompt.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, T, D = X.shape
    mask = spec.mask(T, D - 1)
    if spec.eps == 0 or spec.k == 0:
        loss, g = model.input_grad(X, y)
        gp = _pred_grad_norm(loss, g * mask)
        return PGDResult(X.copy(), loss, loss.copy(), gp)

    delta = np.zeros_like(X)
    best = X.copy()
    best_loss = None
    clean = None
    max_gp = np.zeros(n)
    for it in range(spec.k + 1):
        cur = X + delta
        loss, g = model.input_grad(cur, y)
        gm = g * mask
        max_gp = np.maximum(max_gp, _pred_grad_norm(loss, gm))
        if best_loss is None:
            clean = loss.copy()
            best_loss = loss.copy()
        else:
            better = loss > best_loss
            best[better] = cur[better]
            best_loss[better] = loss[better]
        if it == spec.k:
            break
        nrm = np.sqrt((gm * gm).sum(axis=(1, 2)))
        live = nrm > 0
        if not live.any():
            break
        delta[live] += spec.alpha * gm[live] / nrm[live, None, None]
        dn = np.sqrt((delta * delta).sum(axis=(1, 2)))
        over = dn > spec.eps
        delta[over] *= (spec.eps / dn[over])[:, None, None]
    return PGDResult(best, best_loss, clean, max_gp)


def _pred_grad_norm(loss, gm):
    # d loss = 2 r d pred, so ||d pred|| = ||d loss|| / (2 |r|)
    r = np.sqrt(loss)
    nrm = np.sqrt((gm * gm).sum(axis=(1, 2)))
    out = np.zeros_like(nrm)
    ok = r > 1e-12
    out[ok] = nrm[ok] / (2.0 * r[ok])
    return out


def pgd(model, X, y_q, spec):
    """Attacked copy of one prompt (or of a stack of prompts)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        return pgd_batch(model, X[None], np.atleast_1d(np.float64(y_q)), spec).X_adv[0]
    return pgd_batch(model, X, y_q, spec).X_adv


def adversarial_risk(model, X, y, spec):
    """Mean post-attack query loss over a stack of prompts."""
    X_adv = pgd(model, X, y, spec)
    return float(np.mean(query_losses(model, X_adv, y)))


def gram_mean(X):
    """(1/t) sum_i x_i x_i^T over the example rows of each prompt."""
    X = np.asarray(X)
    x = X[..., :-1, :-1]
    t = x.shape[-2]
    return np.swapaxes(x, -1, -2) @ x / t

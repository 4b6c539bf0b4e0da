"""Risks, generalization gaps and the empirical quantities the bounds consume.

Every function takes a *predictor*: any object with ``predict(X)`` on a stack
of prompts (and ``input_grad`` where gradients are needed). Trained
:class:`~icl_pe.model.ModelParams` and the small test stubs both qualify.
"""

import csv
import os
from dataclasses import dataclass, fields

import numpy as np

from .attack import AttackSpec, pgd_batch, query_losses
from .datagen import make_rng
from .linalg import least_squares

# stream ids past the datagen ones
STREAM_EFF_QUERIES = 5
STREAM_RADEMACHER = 6


def risk(model, X, y):
    """Mean squared query error over the stack (X, y)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    return float(np.mean(query_losses(model, X, np.atleast_1d(np.asarray(y, dtype=np.float64)))))


@dataclass(frozen=True)
class GapRecord:
    t: int
    eps: float
    pe_mode: str
    seed: int
    attacked: bool
    train_risk: float
    val_risk: float
    gap: float

    @classmethod
    def make(cls, t, eps, pe_mode, seed, attacked, train_risk, val_risk):
        train_risk, val_risk = float(train_risk), float(val_risk)
        return cls(int(t), float(eps), str(pe_mode), int(seed), bool(attacked), train_risk, val_risk, val_risk - train_risk)

    def to_row(self):
        return [str(self.t), repr(self.eps), self.pe_mode, str(self.seed), str(int(self.attacked)),
                repr(self.train_risk), repr(self.val_risk), repr(self.gap)]

    @classmethod
    def from_row(cls, row):
        if isinstance(row, dict):
            row = [row[k] for k in GAP_FIELDS]
        t, eps, mode, seed, att, tr, va, gap = row
        rec = cls(int(t), float(eps), mode, int(seed), bool(int(att)), float(tr), float(va), float(gap))
        if rec.gap != rec.val_risk - rec.train_risk:
            raise ValueError(f"inconsistent gap in row {row!r}")
        return rec


GAP_FIELDS = tuple(f.name for f in fields(GapRecord))


def write_gap_records(path, records, append=True):
    """Append records to a CSV, writing the header only when the file is new/empty."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0 or not append
    with open(path, "a" if append else "w", newline="") as f:
        w = csv.writer(f)
        if new:
            w.writerow(GAP_FIELDS)
        for r in records:
            w.writerow(r.to_row())


def read_gap_records(path):
    with open(path, newline="") as f:
        rd = csv.reader(f)
        header = next(rd)
        if tuple(header) != GAP_FIELDS:
            raise ValueError(f"{path}: unexpected header {header}")
        return [GapRecord.from_row(r) for r in rd]


def _attacked(model, X, y, attack):
    if attack is None or attack.eps == 0 or attack.k == 0:
        return X
    return pgd_batch(model, X, y, attack).X_adv


def generalization_gap(model, dataset, eval_seed=0, attack=None, seed=None):
    """Validation risk on fresh prompts minus risk on the fixed training prompts.

    With an ``attack``, both splits are perturbed with the same spec first.
    An eps=0 attack yields exactly the clean record.
    """
    t_model = getattr(model, "t_max", dataset.t)
    if t_model != dataset.t:
        raise ValueError(f"dataset t={dataset.t} does not match model t_max={t_model}")
    Xv, yv = dataset.val_prompts(eval_seed)
    Xt, yt = dataset.train_X, dataset.train_y
    Xt_a = _attacked(model, Xt, yt, attack)
    Xv_a = _attacked(model, Xv, yv, attack)
    eps = 0.0 if attack is None else attack.eps
    return GapRecord.make(
        dataset.t, eps, getattr(model, "pe_mode", "none"), dataset.seed if seed is None else seed,
        eps > 0, risk(model, Xt_a, yt), risk(model, Xv_a, yv),
    )


@dataclass(frozen=True)
class EffWeight:
    w_eff: np.ndarray
    residual_rms: float


def _context_matrix(context):
    X = getattr(context, "X", context)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("context must be a single (t+1, d+1) prompt")
    return X


def effective_weight(model, context, n_queries, seed, queries=None):
    """Best linear-in-x_q fit of the prediction with the context rows held fixed.

    Queries x_q ~ N(0, I_d) replace the last row of ``context``; the
    predictions are regressed on them by OLS (no intercept).
    """
    X = _context_matrix(context)
    d = X.shape[1] - 1
    if queries is None:
        if n_queries < 10 * d:
            raise ValueError(f"n_queries must be >= 10*d = {10 * d}")
        queries = make_rng(seed, STREAM_EFF_QUERIES).standard_normal((n_queries, d))
    stack = np.broadcast_to(X, (len(queries),) + X.shape).copy()
    stack[:, -1, :d] = queries
    stack[:, -1, d] = 0.0
    pred = np.asarray(model.predict(stack), dtype=np.float64)
    w = least_squares(queries, pred)
    res = pred - queries @ w
    return EffWeight(w, float(np.sqrt(np.mean(res * res))))


def c_pe_values(pe_model, nope_model, contexts, n_queries, seed):
    """Per-context ||w_eff(PE) - w_eff(NoPE)||, both fitted on the same query draws."""
    out = []
    for i, ctx in enumerate(contexts):
        X = _context_matrix(ctx)
        q = make_rng(seed, STREAM_EFF_QUERIES, i).standard_normal((n_queries, X.shape[1] - 1))
        if n_queries < 10 * q.shape[1]:
            raise ValueError(f"n_queries must be >= 10*d = {10 * q.shape[1]}")
        a = effective_weight(pe_model, X, n_queries, seed, queries=q).w_eff
        b = effective_weight(nope_model, X, n_queries, seed, queries=q).w_eff
        out.append(float(np.linalg.norm(a - b)))
    return np.array(out)


def c_pe_estimate(pe_model, nope_model, contexts, n_queries, seed):
    """Empirical C_PE: mean over contexts of the effective-weight distance."""
    return float(np.mean(c_pe_values(pe_model, nope_model, contexts, n_queries, seed)))


def bias_rc_mc(c_pe, queries, n_sigma, seed, return_stderr=False):
    """(c_pe/m) E_sigma ||sum_j sigma_j x_j||, averaged over n_sigma sign draws."""
    Q = np.asarray(queries, dtype=np.float64)
    if Q.ndim == 1:
        Q = Q[None]
    m = Q.shape[0]
    if m < 1:
        raise ValueError("need at least one query")
    rng = make_rng(seed, STREAM_RADEMACHER)
    sig = rng.integers(0, 2, size=(n_sigma, m)).astype(np.float64) * 2.0 - 1.0
    vals = (c_pe / m) * np.linalg.norm(sig @ Q, axis=1)
    est = float(vals.mean())
    if not return_stderr:
        return est
    se = float(vals.std(ddof=1) / np.sqrt(n_sigma)) if n_sigma > 1 else 0.0
    return est, se


def bias_rc_bound(c_pe, queries):
    """Jensen bound (c_pe/m) sqrt(sum_j ||x_j||^2)."""
    Q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    return float(c_pe / Q.shape[0] * np.sqrt((Q * Q).sum()))


def lipschitz_est(model, X, y=None, safety=2.0, spec=None):
    """Safety-scaled max of ||masked d f / d X||_F over the prompts.

    With an attack ``spec`` (and labels) the PGD iterates are searched too.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    mask = AttackSpec(eps=0.0).mask(X.shape[1], X.shape[2] - 1)
    if y is None:
        y = np.zeros(X.shape[0])
    _, g = model.input_grad(X, y, wrt="pred")
    gm = g * mask
    best = float(np.sqrt((gm * gm).sum(axis=(1, 2))).max())
    if spec is not None and spec.eps > 0:
        best = max(best, float(pgd_batch(model, X, y, spec).max_pred_grad.max()))
    return safety * best


def surrogate_violations(model, X, y, spec, l_x):
    """Fraction of prompts whose PGD loss exceeds (|f(X) - y| + L_x eps)^2."""
    res = pgd_batch(model, X, y, spec)
    clean_abs = np.sqrt(res.clean_loss)
    bound = (clean_abs + l_x * spec.eps) ** 2
    return float(np.mean(res.loss > bound * (1 + 1e-12) + 1e-12)), res


def aggregate(records):
    """Mean/min/max/std of the gap over seeds for each (pe_mode, t, eps, attacked)."""
    cells = {}
    for r in records:
        cells.setdefault((r.pe_mode, r.t, r.eps, r.attacked), []).append(r.gap)
    out = []
    for key in sorted(cells):
        g = np.array(cells[key])
        out.append(key + (len(g), float(g.mean()), float(g.min()), float(g.max()), float(g.std())))
    return out


AGG_FIELDS = ("pe_mode", "t", "eps", "attacked", "n_seeds", "mean_gap", "min_gap", "max_gap", "std_gap")


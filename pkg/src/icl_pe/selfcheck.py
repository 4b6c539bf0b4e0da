"""Invariant suite behind ``icl-pe selfcheck``. Report text depends only on the seed."""

import math

import numpy as np

from . import grad, theory
from .attack import AttackSpec, gram_mean, pgd_batch
from .datagen import build_dataset, make_rng
from .linalg import row_softmax, spectral_norm
from .model import init_params, rope_angles, rotate, rotation_matrix

STREAM_SELFCHECK = 7


def _fd(rng, seed):
    worst = 0.0
    for i in range(6):
        act = ("relu", "identity")[i % 2]
        mode = ("none", "trainable", "rope")[i % 3]
        p = init_params(make_rng(seed, STREAM_SELFCHECK, i), 3, 8, 6, mode, pe_init_scale=1.0, activation=act)
        X = rng.standard_normal((7, 4))
        X[-1, -1] = 0.0
        worst = max(worst, grad.fd_check(p, X, rng.standard_normal()))
    return worst < 1e-5, f"max rel err {worst:.2e}"


def _softmax(rng, seed):
    A = row_softmax(rng.standard_normal((50, 9)) * 30)
    err = float(np.abs(A.sum(axis=1) - 1).max())
    return err < 1e-12 and (A >= 0).all(), f"row-sum err {err:.1e}"


def _weyl(rng, seed):
    v = max(theory.weyl_check(rng.standard_normal((6, 4)), rng.standard_normal((6, 4))) for _ in range(200))
    return v <= 1e-9, f"max violation {v:.1e}"


def _tails(rng, seed):
    ok = True
    parts = []
    for k in (1, 2):
        r = theory.sigma_min_tail_mc(50, 5, k, 2000, seed)
        lim = theory.sigma_min_tail_allowance(k, 2000)
        ok &= r <= lim
        parts.append(f"k={k} rate {r:.4f} <= {lim:.4f}")
    return ok, "; ".join(parts)


def _dudley(rng, seed):
    err = abs(theory.dudley_quadrature(1.7, 1) - 1.7 * math.sqrt(math.pi) / 2)
    return err < 1e-6, f"K=1 err {err:.1e}"


def _rope(rng, seed):
    d_m = 8
    q, k = rng.standard_normal(d_m), rng.standard_normal(d_m)

    def rot(v, p):
        return rotate(v, rope_angles(p, d_m))

    rel = abs(rot(q, 7) @ rot(k, 3) - rot(q, 4) @ rot(k, 0))
    norm = abs(np.linalg.norm(rot(q, 5)) - np.linalg.norm(q))
    mat = float(np.abs(rotation_matrix(5, d_m) @ q - rot(q, 5)).max())
    return max(rel, norm, mat) < 1e-10, f"relative {rel:.1e}, norm {norm:.1e}, matrix {mat:.1e}"


def _pgd(rng, seed):
    ds = build_dataset(seed, 40, 1, 10, 3)
    p = init_params(make_rng(seed, STREAM_SELFCHECK, 99), 3, 8, 10, "none", pe_init_scale=1.0)
    ok = True
    worst_b = -np.inf
    worst_g = -np.inf
    for eps in (0.05, 0.3):
        res = pgd_batch(p, ds.train_X, ds.train_y, AttackSpec(eps=eps, k=10))
        dn = np.sqrt(((res.X_adv - ds.train_X) ** 2).sum(axis=(1, 2)))
        worst_b = max(worst_b, float((dn - eps).max()))
        ok &= bool((dn <= eps + 1e-9).all())
        ok &= bool(np.array_equal(res.X_adv[:, :, -1], ds.train_X[:, :, -1]))
        ok &= bool((res.loss >= res.clean_loss).all())
        dG = gram_mean(res.X_adv) - gram_mean(ds.train_X)
        lim = theory.delta_cov_bound(eps, 10, 3)
        g = max(spectral_norm(m) for m in dG) - lim
        worst_g = max(worst_g, g)
        ok &= g <= 1e-9
    return ok, f"budget slack {worst_b:.1e}, gram slack {worst_g:.2e}"


CHECKS = (
    ("gradient finite differences", _fd),
    ("row softmax", _softmax),
    ("weyl inequality", _weyl),
    ("sigma_min tails", _tails),
    ("dudley integral", _dudley),
    ("rope identities", _rope),
    ("pgd budget, mask and gram bound", _pgd),
)


def run_selfcheck(seed=0, write=print):
    """Run every check; returns (all_passed, report_lines)."""
    lines = []
    ok_all = True
    for i, (name, fn) in enumerate(CHECKS):
        rng = make_rng(seed, STREAM_SELFCHECK, 1000 + i)
        try:
            ok, detail = fn(rng, seed)
        except Exception as e:  # a crashing check is a failing check
            ok, detail = False, f"{type(e).__name__}: {e}"
        ok_all &= bool(ok)
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        write(line)
    summary = f"{sum(l.startswith('PASS') for l in lines)}/{len(lines)} checks passed"
    lines.append(summary)
    write(summary)
    return ok_all, lines

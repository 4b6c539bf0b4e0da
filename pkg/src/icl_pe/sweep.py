"""Experiment sweep: train every (pe_mode, t, seed) cell, record clean and attacked gaps.

Output layout under ``<out>/<run_id>/``::

    config.txt      fully resolved configuration
    gaps.csv        one GapRecord row per (cell, eps)
    cells.csv       per-cell status and final training loss
    aggregate.csv   mean/min/max/std over seeds
    table_gaps.csv  t x pe_mode grid of mean clean gaps
    c_pe.csv        effective-weight distance between seed-paired PE / no-PE models
    bounds.csv      bound shapes per t using the measured C_PE
    fig_clean_gap.svg, fig_attacked_<mode>.svg
    ckpt/           trained checkpoints

Run ids are ``<config digest>-<n>``; an existing directory is never reused.
"""

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import theory
from .analysis import (
    AGG_FIELDS,
    GapRecord,
    aggregate,
    c_pe_values,
    generalization_gap,
    read_gap_records,
    write_gap_records,
)
from .attack import AttackSpec
from .datagen import STREAM_MODEL_INIT, build_dataset, make_rng
from .model import init_params, load_checkpoint, param_count, save_checkpoint
from .svg import line_chart
from .train import NonFiniteLoss, TrainConfig, train

log = logging.getLogger(__name__)


@dataclass
class CellResult:
    pe_mode: str
    t: int
    seed: int
    status: str
    final_loss: float
    records: List[GapRecord]
    ckpt: Optional[str]


def cell_key(pe_mode, t, seed):
    return f"{pe_mode}_t{t}_s{seed}"


def run_cell(cfg, pe_mode, t, seed, ckpt_dir=None):
    """Build data, train, evaluate. Deterministic given (cfg, pe_mode, t, seed)."""
    ds = build_dataset(seed, cfg.n_train, cfg.n_val, t, cfg.d, cfg.dist)
    p0 = init_params(make_rng(seed, STREAM_MODEL_INIT), cfg.d, cfg.d_m, t, pe_mode, cfg.pe_init_scale, cfg.activation)
    try:
        params, curve = train(ds.train_X, ds.train_y, p0, TrainConfig(lr=cfg.lr, epochs=cfg.epochs, seed=seed))
    except NonFiniteLoss as e:
        log.warning("cell %s failed: %s", cell_key(pe_mode, t, seed), e)
        return CellResult(pe_mode, t, seed, "nonfinite", float("nan"), [], None)
    recs = [generalization_gap(params, ds, cfg.eval_seed)]
    if pe_mode in cfg.attack_modes:
        for eps in cfg.eps_list:
            spec = AttackSpec(eps=eps, k=cfg.attack_k, alpha=cfg.alpha_frac * eps if eps > 0 else None)
            recs.append(generalization_gap(params, ds, cfg.eval_seed, attack=spec))
    path = None
    if ckpt_dir is not None:
        path = os.path.join(ckpt_dir, cell_key(pe_mode, t, seed) + ".bin")
        save_checkpoint(path, params)
    final = float(curve[-1]) if len(curve) else float("nan")
    return CellResult(pe_mode, t, seed, "ok", final, recs, path)


def _run_cell_args(args):
    return run_cell(*args)


def new_run_dir(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    base = cfg.digest()
    n = 0
    while True:
        run_id = f"{base}-{n}"
        path = os.path.join(cfg.out, run_id)
        try:
            os.makedirs(path)
            return run_id, path
        except FileExistsError:
            n += 1


def cells(cfg):
    return [(m, t, s) for m in cfg.pe_modes for t in cfg.ts for s in cfg.seeds]


def run_sweep(cfg, workers=1):
    """Run the whole grid; returns the run directory."""
    run_id, rd = new_run_dir(cfg)
    with open(os.path.join(rd, "config.txt"), "w") as f:
        f.write(cfg.to_text())
    ckpt = os.path.join(rd, "ckpt")
    os.makedirs(ckpt)
    jobs = [(cfg, m, t, s, ckpt) for m, t, s in cells(cfg)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            # map preserves submission order, so files are written in a fixed order
            results = list(ex.map(_run_cell_args, jobs))
    else:
        results = [_run_cell_args(j) for j in jobs]

    gaps = os.path.join(rd, "gaps.csv")
    write_gap_records(gaps, [r for res in results for r in res.records])
    with open(os.path.join(rd, "cells.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["pe_mode", "t", "seed", "status", "final_train_loss"])
        for res in results:
            w.writerow([res.pe_mode, res.t, res.seed, res.status, repr(res.final_loss)])
    write_outputs(rd, cfg, read_gap_records(gaps))
    cpe = write_c_pe(rd, cfg, results)
    write_bounds(rd, cfg, cpe)
    with open(os.path.join(cfg.out, "runs.csv"), "a", newline="") as f:
        csv.writer(f).writerow([run_id, cfg.digest(), len(results), sum(r.status == "ok" for r in results)])
    return rd


def write_outputs(rd, cfg, records):
    agg = aggregate(records)
    with open(os.path.join(rd, "aggregate.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(AGG_FIELDS)
        for row in agg:
            w.writerow([row[0], row[1], repr(row[2]), int(row[3])] + [row[4]] + [repr(v) for v in row[5:]])

    clean = {(r[0], r[1]): r for r in agg if not r[3]}
    with open(os.path.join(rd, "table_gaps.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t"] + list(cfg.pe_modes))
        for t in cfg.ts:
            w.writerow([t] + [repr(clean[(m, t)][5]) if (m, t) in clean else "" for m in cfg.pe_modes])

    series = {}
    for m in cfg.pe_modes:
        pts = [(t, clean[(m, t)][5], clean[(m, t)][6], clean[(m, t)][7]) for t in cfg.ts if (m, t) in clean]
        if pts:
            series[m] = pts
    if series:
        with open(os.path.join(rd, "fig_clean_gap.svg"), "w") as f:
            f.write(line_chart(series, "Mean generalization gap vs context length", "t", "gap"))

    for m in cfg.attack_modes:
        if m not in cfg.pe_modes:
            continue
        series = {}
        for eps in (0.0,) + tuple(cfg.eps_list):
            pts = []
            for t in cfg.ts:
                row = clean.get((m, t)) if eps == 0 else next(
                    (r for r in agg if r[0] == m and r[1] == t and r[2] == eps and r[3]), None)
                if row is not None:
                    pts.append((t, row[5], row[6], row[7]))
            if pts:
                series[f"eps={eps:g}"] = pts
        if series:
            with open(os.path.join(rd, f"fig_attacked_{m}.svg"), "w") as f:
                f.write(line_chart(series, f"Attacked generalization gap ({m})", "t", "gap"))


def write_c_pe(rd, cfg, results):
    """Per (pe_mode, t): mean over seeds of the effective-weight distance to the no-PE twin."""
    paths = {(r.pe_mode, r.t, r.seed): r.ckpt for r in results if r.status == "ok"}
    out = {}
    rows = []
    for m in cfg.pe_modes:
        if m == "none":
            continue
        for t in cfg.ts:
            vals = []
            for s in cfg.seeds:
                a, b = paths.get((m, t, s)), paths.get(("none", t, s))
                if a is None or b is None:
                    continue
                ds = build_dataset(s, cfg.n_train, cfg.n_val, t, cfg.d, cfg.dist)
                Xv, _ = ds.val_prompts(cfg.eval_seed)
                ctx = Xv[: cfg.cpe_contexts]
                v = c_pe_values(load_checkpoint(a), load_checkpoint(b), ctx, cfg.cpe_queries, s)
                vals.append(float(v.mean()))
                rows.append([m, t, s, repr(float(v.mean())), repr(float(v.max()))])
            if vals:
                out[(m, t)] = float(np.mean(vals))
    with open(os.path.join(rd, "c_pe.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["pe_mode", "t", "seed", "c_pe_mean", "c_pe_max"])
        w.writerows(rows)
    return out


def write_bounds(rd, cfg, cpe):
    D = param_count(cfg.d, cfg.d_m)[0]
    with open(os.path.join(rd, "bounds.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["pe_mode", "t", "eps", "c_pe", "rc_bound", "arc_bound"])
        for m in cfg.pe_modes:
            for t in cfg.ts:
                c = 0.0 if m == "none" else cpe.get((m, t), float("nan"))
                if math.isnan(c):
                    continue
                for eps in (0.0,) + tuple(cfg.eps_list):
                    p = theory.TheoryParams(d=cfg.d, t=t, m=cfg.n_train, d_m=cfg.d_m, D=D, c_pe=c, eps=eps, l_h=1.0)
                    try:
                        rc = theory.rc_bound_pe(p)
                        arc = theory.arc_bound_pe(p)
                    except theory.DomainError:
                        continue
                    w.writerow([m, t, repr(eps), repr(c), repr(rc), repr(arc)])

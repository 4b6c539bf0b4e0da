"""Command line entry point: ``icl-pe <command>`` or ``python -m icl_pe <command>``.

Commands: gen, train, eval, attack, sweep, theory, selfcheck.
"""

import argparse
import csv
import logging
import os
import sys


from . import theory
from .analysis import generalization_gap, write_gap_records
from .attack import AttackSpec, gram_mean, pgd_batch
from .config import load_config, parse_kv
from .datagen import STREAM_MODEL_INIT, build_dataset, dump_csv, load_dataset, make_rng, save_dataset
from .linalg import spectral_norm
from .model import init_params, load_checkpoint, save_checkpoint
from .selfcheck import run_selfcheck
from .sweep import run_sweep
from .train import TrainConfig, train, write_loss_curve

log = logging.getLogger("icl_pe")


# ---------------------------------------------------------------------------
# theory report: one CSV row per bound with its inputs echoed

THEORY_EXTRA = dict(c_mu=2.0, delta=0.05, diam=1.0, K=1.0, cover_eps=0.1)
_TP_KEYS = ("d", "t", "m", "d_m", "D", "r", "gamma_eff", "c_pe", "l_f", "l_x", "m_out", "m_y", "eps", "l_h")
_INT_KEYS = {"d", "t", "m", "d_m", "D"}


def _num(k, v):
    return int(v) if k in _INT_KEYS else float(v)


def _tp(values):
    return theory.TheoryParams(**{k: values[k] for k in _TP_KEYS if k in values})


def _theory_ops(v):
    return {
        "phi": (("eps", "t", "d"), lambda: theory.phi(v["eps"], v["t"], v["d"])),
        "rc_bound_nope": (_TP_KEYS, lambda: theory.rc_bound_nope(_tp(v))),
        "rc_bound_pe": (_TP_KEYS, lambda: theory.rc_bound_pe(_tp(v))),
        "l_h": (("m_out", "m_y", "l_x", "eps"), lambda: theory.l_h(v["m_out"], v["m_y"], v["l_x"], v["eps"])),
        "arc_bound_nope": (_TP_KEYS, lambda: theory.arc_bound_nope(_tp(v))),
        "arc_bound_pe": (_TP_KEYS, lambda: theory.arc_bound_pe(_tp(v))),
        "m_y_bound": (("c_mu", "delta"), lambda: theory.m_y_bound(v["c_mu"], v["delta"])),
        "delta_cov_bound": (("eps", "t", "d"), lambda: theory.delta_cov_bound(v["eps"], v["t"], v["d"])),
        "covering_log_bound": (("D", "diam", "cover_eps"),
                               lambda: theory.covering_log_bound(v["D"], v["diam"], v["cover_eps"])),
        "dudley_quadrature": (("diam", "K"), lambda: theory.dudley_quadrature(v["diam"], v["K"])),
    }


def theory_values(params_text=""):
    """Resolved inputs: TheoryParams defaults, extra defaults, then the file."""
    tp = theory.TheoryParams()
    v = {k: getattr(tp, k) for k in _TP_KEYS}
    v.update(THEORY_EXTRA)
    for k, raw in parse_kv(params_text).items():
        if k not in v:
            raise KeyError(f"unknown theory parameter {k!r}")
        v[k] = None if raw.lower() == "none" else _num(k, raw)
    given = parse_kv(params_text)
    if "D" not in given:
        v["D"] = v["d"] * v["d_m"] + v["d_m"] ** 2
    if "m_y" not in given:
        v["m_y"] = theory.m_y_bound(v["c_mu"], v["delta"])
    return v


def theory_rows(v):
    rows = []
    for name, (keys, fn) in _theory_ops(v).items():
        inputs = ";".join(f"{k}={v[k]!r}" for k in keys)
        try:
            rows.append((name, repr(float(fn())), "", inputs))
        except theory.DomainError as e:
            rows.append((name, "", f"domain: {e}", inputs))
    return rows


THEORY_FIELDS = ("name", "value", "error", "inputs")


def write_theory_csv(path_or_file, rows):
    own = isinstance(path_or_file, str)
    f = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(f)
        w.writerow(THEORY_FIELDS)
        w.writerows(rows)
    finally:
        if own:
            f.close()


def read_theory_csv(path):
    with open(path, newline="") as f:
        rd = csv.reader(f)
        if tuple(next(rd)) != THEORY_FIELDS:
            raise ValueError("not a theory CSV")
        out = []
        for name, value, err, inputs in rd:
            kv = {}
            for part in inputs.split(";"):
                k, raw = part.split("=", 1)
                kv[k] = None if raw == "None" else _num(k, raw)
            out.append((name, float(value) if value else None, err, kv))
        return out


def reevaluate(name, inputs):
    v = dict(THEORY_EXTRA)
    tp = theory.TheoryParams()
    v.update({k: getattr(tp, k) for k in _TP_KEYS})
    v.update(inputs)
    return _theory_ops(v)[name][1]()


# ---------------------------------------------------------------------------
# commands


def _out_path(args, name):
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, name)
    if os.path.exists(path) and not args.force:
        raise SystemExit(f"refusing to overwrite {path} (use --force)")
    return path


def _dataset(args, cfg):
    if getattr(args, "data", None):
        return load_dataset(args.data)
    return build_dataset(args.seed, cfg.n_train, cfg.n_val, args.t or cfg.ts[0], cfg.d, cfg.dist)


def cmd_gen(args, cfg):
    ds = _dataset(args, cfg)
    stem = f"dataset_s{ds.seed}_t{ds.t}"
    save_dataset(_out_path(args, stem + ".bin"), ds)
    if args.csv:
        dump_csv(_out_path(args, stem + ".csv"), ds)
    print(f"wrote {os.path.join(args.out, stem)}.bin ({ds.n_train} train prompts, {ds.n_val} val tasks, t={ds.t})")
    return 0


def cmd_train(args, cfg):
    ds = _dataset(args, cfg)
    p0 = init_params(make_rng(ds.seed, STREAM_MODEL_INIT), ds.d, cfg.d_m, ds.t, args.pe_mode,
                     cfg.pe_init_scale, cfg.activation)
    params, curve = train(ds.train_X, ds.train_y, p0, TrainConfig(lr=cfg.lr, epochs=cfg.epochs, seed=ds.seed))
    stem = f"{args.pe_mode}_s{ds.seed}_t{ds.t}"
    save_checkpoint(_out_path(args, stem + ".ckpt"), params)
    write_loss_curve(_out_path(args, stem + "_loss.csv"), curve)
    print(f"{stem}: final train loss {curve[-1]:.6g}" if len(curve) else f"{stem}: untrained")
    return 0


def _eval_common(args, cfg, specs):
    if not args.checkpoint:
        raise SystemExit("--checkpoint is required")
    params = load_checkpoint(args.checkpoint)
    ds = _dataset(args, cfg)
    recs = [generalization_gap(params, ds, cfg.eval_seed, attack=s) for s in specs]
    write_gap_records(os.path.join(_mkdir(args.out), "gaps.csv"), recs, append=True)
    for r in recs:
        print(f"t={r.t} eps={r.eps:g} {r.pe_mode}: train {r.train_risk:.6g} val {r.val_risk:.6g} gap {r.gap:.6g}")
    return params, ds


def _mkdir(p):
    os.makedirs(p, exist_ok=True)
    return p


def cmd_eval(args, cfg):
    _eval_common(args, cfg, [None])
    return 0


def cmd_attack(args, cfg):
    eps_list = args.eps or list(cfg.eps_list)
    specs = [AttackSpec(eps=e, k=cfg.attack_k, alpha=cfg.alpha_frac * e if e > 0 else None) for e in eps_list]
    params, ds = _eval_common(args, cfg, specs)
    for s in specs:
        res = pgd_batch(params, ds.train_X, ds.train_y, s)
        dG = gram_mean(res.X_adv) - gram_mean(ds.train_X)
        worst = max(spectral_norm(m) for m in dG)
        print(f"eps={s.eps:g}: max ||dG||_2 = {worst:.4g} (bound {theory.delta_cov_bound(s.eps, ds.t, ds.d):.4g})")
    return 0


def cmd_sweep(args, cfg):
    for w in cfg.eps_warnings():
        log.warning(w)
    rd = run_sweep(cfg, workers=args.threads)
    print(f"results in {rd}")
    return 0


def cmd_theory(args, cfg):
    text = ""
    if args.params:
        with open(args.params) as f:
            text = f.read()
    rows = theory_rows(theory_values(text))
    if args.out_file:
        write_theory_csv(args.out_file, rows)
    else:
        write_theory_csv(sys.stdout, rows)
    return 0


def cmd_selfcheck(args, cfg):
    ok, _ = run_selfcheck(args.seed)
    return 0 if ok else 1


COMMANDS = dict(gen=cmd_gen, train=cmd_train, eval=cmd_eval, attack=cmd_attack, sweep=cmd_sweep,
                theory=cmd_theory, selfcheck=cmd_selfcheck)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value run configuration file")
    common.add_argument("--out", help="output directory (overrides config 'out')")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--paper-mode", action="store_true", help="d_m=1024, n_val=9991, epochs=3000, 6 seeds")
    common.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--force", action="store_true", help="allow overwriting single-run outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="icl-pe", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    g = sub.add_parser("gen", parents=[common], help="sample and save a dataset")
    g.add_argument("--t", type=int)
    g.add_argument("--csv", action="store_true", help="also write a CSV dump")
    for name in ("train", "eval", "attack"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--data", help="dataset file from 'gen' (built from the config otherwise)")
        p.add_argument("--t", type=int)
        if name == "train":
            p.add_argument("--pe-mode", default="none", choices=("none", "trainable", "rope"))
        else:
            p.add_argument("--checkpoint")
        if name == "attack":
            p.add_argument("--eps", type=float, action="append")
    sub.add_parser("sweep", parents=[common], help="full (pe_mode, t, seed) grid")
    th = sub.add_parser("theory", parents=[common], help="evaluate every bound as name,value CSV")
    th.add_argument("--params", help="key = value theory parameter file")
    th.add_argument("--out-file", help="CSV path (stdout otherwise)")
    sub.add_parser("selfcheck", parents=[common], help="run the invariant suite")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    cfg = load_config(args.config, paper_mode=args.paper_mode, out=args.out)
    if args.out is None:
        args.out = cfg.out
    return COMMANDS[args.command](args, cfg)


if __name__ == "__main__":
    sys.exit(main())

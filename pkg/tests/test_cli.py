import csv
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

import icl_pe.grad as grad
from icl_pe.analysis import read_gap_records
from icl_pe.cli import main, read_theory_csv, reevaluate, theory_rows, theory_values
from icl_pe.config import PAPER_MODE, RunConfig, config_from_text, load_config
from icl_pe.selfcheck import run_selfcheck
from icl_pe.sweep import run_sweep

TINY = dict(ts=(6, 8), seeds=(0,), pe_modes=("none", "trainable"), eps_list=(0.05, 0.2), d=3, d_m=8,
            n_train=20, n_val=30, epochs=15, lr=1e-3, attack_k=5, cpe_contexts=3, cpe_queries=40)


def test_config_file_env_and_paper_mode(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# desk\nts = 6, 10,20\nlr = 0.001\npe_modes = none,rope  # two modes\n")
    cfg = load_config(f, env={})
    assert cfg.ts == (6, 10, 20) and cfg.lr == 1e-3 and cfg.pe_modes == ("none", "rope")
    cfg = load_config(f, env={"ICLPE_LR": "0.5", "ICLPE_SEEDS": "4"})
    assert cfg.lr == 0.5 and cfg.seeds == (4,)
    pm = load_config(None, paper_mode=True, env={})
    assert (pm.d_m, pm.n_val, pm.epochs, len(pm.seeds)) == (1024, 9991, 3000, 6)
    assert pm.d_m == PAPER_MODE["d_m"]
    assert config_from_text(cfg.to_text()) == cfg
    with pytest.raises(ValueError):
        RunConfig(ts=())
    with pytest.raises(ValueError):
        RunConfig(pe_modes=("sinusoid",))
    warns = RunConfig(ts=(6, 30), eps_list=(0.3,)).eps_warnings()
    assert len(warns) == 1 and "t=6" in warns[0]


def test_bad_config_line():
    with pytest.raises(ValueError):
        config_from_text("just words")
    with pytest.raises(KeyError):
        config_from_text("bogus = 1")


def test_theory_rows_roundtrip(tmp_path):
    p = tmp_path / "th.txt"
    p.write_text("eps = 0.4\nc_pe = 0.3\nl_x = 1.5\n")
    out = tmp_path / "th.csv"
    assert main(["theory", "--params", str(p), "--out-file", str(out)]) == 0
    rows = read_theory_csv(out)
    names = {r[0] for r in rows}
    assert {"phi", "rc_bound_nope", "rc_bound_pe", "arc_bound_nope", "arc_bound_pe", "l_h"} <= names
    for name, value, err, inputs in rows:
        assert not err
        assert reevaluate(name, inputs) == pytest.approx(value, rel=1e-12, abs=1e-12)


def test_theory_domain_marker():
    rows = {r[0]: r for r in theory_rows(theory_values("eps = 5\n"))}
    assert rows["phi"][1] == "" and rows["phi"][2].startswith("domain")
    assert rows["arc_bound_nope"][2].startswith("domain")
    assert rows["rc_bound_nope"][1] != "" and rows["l_h"][1] != ""


def test_selfcheck_passes_and_is_deterministic(capsys):
    ok, lines = run_selfcheck(5, write=lambda s: None)
    assert ok
    assert run_selfcheck(5, write=lambda s: None)[1] == lines
    assert main(["selfcheck", "--seed", "5"]) == 0
    assert "7/7 checks passed" in capsys.readouterr().out


def test_selfcheck_catches_gradient_bug(monkeypatch):
    real = grad.backward_core

    def buggy(params, cache, gpred, need_params=True):
        g, dX = real(params, cache, gpred, need_params)
        return g, dX * 1.05

    monkeypatch.setattr(grad, "backward_core", buggy)
    ok, lines = run_selfcheck(0, write=lambda s: None)
    assert not ok and lines[0].startswith("FAIL  gradient")


def _read(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def test_sweep_outputs_and_determinism(tmp_path):
    cfg = RunConfig(out=str(tmp_path), **TINY)
    a = run_sweep(cfg)
    b = run_sweep(cfg, workers=2)
    assert a != b and os.path.basename(a).endswith("-0") and os.path.basename(b).endswith("-1")
    for name in ("gaps.csv", "aggregate.csv", "table_gaps.csv", "c_pe.csv", "bounds.csv", "cells.csv"):
        assert (open(os.path.join(a, name)).read() == open(os.path.join(b, name)).read()), name
    recs = read_gap_records(os.path.join(a, "gaps.csv"))
    assert len(recs) == 2 * 2 * (1 + 2)
    # one seed: aggregate equals that run
    agg = {(r[0], r[1], r[2], r[3]): r for r in _read(os.path.join(a, "aggregate.csv"))[1:]}
    for r in recs:
        row = agg[(r.pe_mode, str(r.t), repr(r.eps), str(int(r.attacked)))]
        assert float(row[5]) == r.gap and row[4] == "1"
    table = _read(os.path.join(a, "table_gaps.csv"))
    assert table[0] == ["t", "none", "trainable"] and len(table) == 3
    for fig in ("fig_clean_gap.svg", "fig_attacked_none.svg", "fig_attacked_trainable.svg"):
        ET.parse(os.path.join(a, fig))
    assert open(os.path.join(a, "config.txt")).read() == cfg.to_text()
    assert len(_read(os.path.join(tmp_path, "runs.csv"))) == 2


def test_sweep_paper_shape_table(tmp_path):
    cfg = RunConfig(out=str(tmp_path), **dict(TINY, ts=(6, 7, 8, 9, 10, 12, 15, 20, 25, 30),
                                               pe_modes=("none", "trainable", "rope"), attack_modes=(), epochs=2))
    rd = run_sweep(cfg)
    table = _read(os.path.join(rd, "table_gaps.csv"))
    assert len(table) == 11 and all(len(r) == 4 for r in table)


def test_nonfinite_cell_is_marked(tmp_path):
    cfg = RunConfig(out=str(tmp_path), **dict(TINY, lr=1e12, epochs=50, eps_list=(0.05,), ts=(6,)))
    rd = run_sweep(cfg)
    status = {(r[0], r[1]): r[3] for r in _read(os.path.join(rd, "cells.csv"))[1:]}
    # a huge step may or may not overflow; either way the sweep finishes and reports every cell
    assert set(status.values()) <= {"ok", "nonfinite"} and len(status) == 2


def test_single_run_commands(tmp_path, capsys, monkeypatch):
    for k, v in dict(ICLPE_EPOCHS="5", ICLPE_N_TRAIN="12", ICLPE_N_VAL="9", ICLPE_D_M="8").items():
        monkeypatch.setenv(k, v)
    out = str(tmp_path)
    assert main(["gen", "--out", out, "--t", "7", "--csv", "--seed", "2"]) == 0
    data = os.path.join(out, "dataset_s2_t7.bin")
    assert main(["train", "--out", out, "--data", data, "--pe-mode", "rope"]) == 0
    ck = os.path.join(out, "rope_s2_t7.ckpt")
    assert main(["eval", "--out", out, "--data", data, "--checkpoint", ck]) == 0
    assert main(["attack", "--out", out, "--data", data, "--checkpoint", ck, "--eps", "0.1"]) == 0
    recs = read_gap_records(os.path.join(out, "gaps.csv"))
    assert [r.attacked for r in recs] == [False, True]
    assert _read(os.path.join(out, "rope_s2_t7_loss.csv"))[0] == ["epoch", "loss"]
    with pytest.raises(SystemExit):
        main(["gen", "--out", out, "--t", "7", "--seed", "2"])
    assert np.isfinite(recs[0].gap)

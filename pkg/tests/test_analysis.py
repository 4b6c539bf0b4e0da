import numpy as np
import pytest

from conftest import ConstStub, LinearStub, ShiftStub
from icl_pe.analysis import (
    GapRecord,
    aggregate,
    bias_rc_bound,
    bias_rc_mc,
    c_pe_estimate,
    effective_weight,
    generalization_gap,
    lipschitz_est,
    read_gap_records,
    risk,
    write_gap_records,
)
from icl_pe.attack import AttackSpec
from icl_pe.datagen import build_dataset, make_rng, sample_prompts, sample_tasks
from icl_pe.model import init_params
from icl_pe.train import TrainConfig, train


@pytest.fixture(scope="module")
def desk():
    """Seed-paired no-PE / trainable-PE models at t=20 (shortened training)."""
    ds = build_dataset(0, 309, 2000, 20, 5)
    out = {}
    for mode in ("none", "trainable"):
        p = init_params(make_rng(0, 4), 5, 64, 20, mode, pe_init_scale=1.0)
        out[mode], _ = train(ds.train_X, ds.train_y, p, TrainConfig(lr=1e-4, epochs=600))
    return ds, out


def test_risk():
    rng = make_rng(0)
    mus = sample_tasks(rng, 100_000, 5)
    X, y = sample_prompts(rng, mus, 3)
    assert risk(ConstStub(5), X, y) == pytest.approx(1.0, rel=0.03)
    exact = LinearStub(np.zeros(5))
    exact.predict = lambda X: (X[:, -1, :5] * mus[: len(X)]).sum(-1)
    assert risk(exact, X, y) == 0.0
    assert risk(ConstStub(5, 1.0), X[0], y[0]) == (1.0 - y[0]) ** 2


def test_gap_record_arithmetic_and_csv(tmp_path):
    r = GapRecord.make(10, 0.2, "rope", 1, True, 0.1, 0.3)
    assert r.gap == 0.3 - 0.1
    path = tmp_path / "g.csv"
    write_gap_records(path, [r])
    write_gap_records(path, [GapRecord.make(12, 0.0, "none", 2, False, 1 / 3, 2 / 7)])
    back = read_gap_records(path)
    assert back[0] == r and back[1].gap == 2 / 7 - 1 / 3
    assert path.read_text().count("t,eps") == 1
    agg = aggregate(back + [GapRecord.make(10, 0.2, "rope", 2, True, 0.0, 1.0)])
    row = [a for a in agg if a[0] == "rope"][0]
    assert row[4] == 2 and row[5] == pytest.approx((0.2 + 1.0) / 2)


def test_gap_clean_vs_eps_zero(desk):
    ds, m = desk
    a = generalization_gap(m["none"], ds, 0)
    b = generalization_gap(m["none"], ds, 0, attack=AttackSpec(eps=0.0))
    assert a == b
    assert a.gap > 0
    c = generalization_gap(m["none"], ds, 0, attack=AttackSpec(eps=0.2, k=5))
    assert c.attacked and c.train_risk > a.train_risk


def test_gap_small_at_init():
    # at n=309 the init gap is pure sampling noise of size ~0.1, so use large n
    ds = build_dataset(0, 20_000, 20_000, 20, 5)
    p = init_params(make_rng(0, 4), 5, 64, 20, pe_init_scale=1.0)
    r = generalization_gap(p, ds, 0)
    assert abs(r.gap) < 0.1 * r.train_risk


def test_gap_rejects_wrong_t(desk):
    ds, m = desk
    with pytest.raises(ValueError):
        generalization_gap(m["none"], build_dataset(0, 5, 5, 10, 5))


def test_effective_weight_stubs():
    w = np.array([0.5, -1.0, 2.0])
    ctx = np.zeros((5, 4))
    e = effective_weight(LinearStub(w), ctx, 100, 0)
    assert np.allclose(e.w_eff, w, atol=1e-6) and e.residual_rms < 1e-8
    e = effective_weight(LinearStub(w, c=0.3), ctx, 20_000, 1)
    assert np.allclose(e.w_eff, w, atol=0.02)
    assert e.residual_rms == pytest.approx(0.3, rel=0.03)
    assert effective_weight(LinearStub(w), ctx, 100, 7).residual_rms == effective_weight(LinearStub(w), ctx, 100, 7).residual_rms
    with pytest.raises(ValueError):
        effective_weight(LinearStub(w), ctx, 29, 0)


def test_effective_weight_trained(desk):
    ds, m = desk
    Xv, _ = ds.val_prompts(0)
    e = effective_weight(m["none"], Xv[0], 500, 0)
    pred = m["none"].predict(Xv[:500])
    assert 0 <= e.residual_rms < np.sqrt(np.mean(pred**2))


def test_c_pe_stubs():
    base = LinearStub(np.array([1.0, 0.0, -1.0]), c=0.2)
    ctx = [np.zeros((5, 4)), np.ones((5, 4))]
    assert c_pe_estimate(base, base, ctx, 60, 0) == 0.0
    dw = np.array([0.3, -0.4, 0.0])
    assert c_pe_estimate(ShiftStub(base, dw), base, ctx, 60, 0) == pytest.approx(0.5, abs=1e-9)


def test_c_pe_trained(desk):
    ds, m = desk
    Xv, _ = ds.val_prompts(0)
    c = c_pe_estimate(m["trainable"], m["none"], Xv[:10], 200, 0)
    assert np.isfinite(c) and c > 0


def test_bias_rc():
    rng = make_rng(1)
    Q = rng.standard_normal((7, 4))
    assert bias_rc_mc(0.0, Q, 100, 0) == 0.0
    assert bias_rc_mc(2.0, Q[:1], 10, 0) == pytest.approx(2.0 * np.linalg.norm(Q[0]), rel=1e-15)
    for i in range(100):
        r = make_rng(2, i)
        m, d = int(r.integers(1, 40)), int(r.integers(1, 8))
        Q = r.standard_normal((m, d)) * r.uniform(0.1, 3.0)
        est, se = bias_rc_mc(1.3, Q, 400, i, return_stderr=True)
        assert est <= bias_rc_bound(1.3, Q) + 3 * se + 1e-12


def test_lipschitz_stubs():
    X = np.stack([np.zeros((5, 4)), np.ones((5, 4))])
    assert lipschitz_est(ConstStub(3, 1.0), X) == 0.0
    w = np.array([3.0, 4.0, 0.0])
    assert lipschitz_est(LinearStub(w), X) == pytest.approx(2 * 5.0)
    assert lipschitz_est(LinearStub(w), X, safety=1.0) == pytest.approx(5.0)


def test_lipschitz_trained(desk):
    ds, m = desk
    Xv, yv = ds.val_prompts(0)
    a = lipschitz_est(m["none"], Xv[:50])
    b = lipschitz_est(m["none"], Xv[:50], yv[:50], spec=AttackSpec(eps=0.2, k=10))
    assert 0 < a <= b < np.inf

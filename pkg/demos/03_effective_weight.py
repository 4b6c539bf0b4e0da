"""
What linear rule does the trained model apply?
===============================================

Fixing a context and varying the query, we fit the best linear rule
w_eff^T x_q to the model's predictions; the residual shows how far from linear
it is. Comparing w_eff for a PE model and its no-PE twin
gives C_PE, the size of the bias that the positional parameters add.
"""

import numpy as np

from icl_pe.analysis import bias_rc_bound, bias_rc_mc, c_pe_values, effective_weight
from icl_pe.datagen import STREAM_MODEL_INIT, build_dataset, make_rng
from icl_pe.linalg import least_squares
from icl_pe.model import init_params
from icl_pe.train import TrainConfig, train

ds = build_dataset(seed=1, n_train=309, n_val=50, t=20, d=5)
twins = {}
for mode in ("none", "trainable"):
    p0 = init_params(make_rng(1, STREAM_MODEL_INIT), 5, 32, 20, mode, pe_init_scale=1.0)
    twins[mode], _ = train(ds.train_X, ds.train_y, p0, TrainConfig(lr=1e-3, epochs=300))

Xv, yv = ds.val_prompts()
ctx = Xv[0]
ew = effective_weight(twins["none"], ctx, n_queries=200, seed=0)
ols = least_squares(ctx[:-1, :-1], ctx[:-1, -1])
print("w_eff :", ew.w_eff.round(3), " residual rms", round(ew.residual_rms, 4))
print("OLS w :", ols.round(3))

# C_PE: mean distance between the two effective weights over 20 contexts
c = c_pe_values(twins["trainable"], twins["none"], Xv[:20], 200, seed=0)
print(f"C_PE mean {c.mean():.3f}, max {c.max():.3f}")

# the bias class {x -> b^T x : ||b|| <= C_PE} has Rademacher complexity ~ C_PE sqrt(d/m)
Q = np.random.default_rng(0).standard_normal((309, 5))
print("bias RC MC", round(bias_rc_mc(c.mean(), Q, 500, seed=0), 4),
      " Jensen bound", round(bias_rc_bound(c.mean(), Q), 4))

"""
Complexity bounds and the random-matrix facts behind them
==========================================================

The bounds shrink like sqrt(log t / t) in context length and grow with the
attack budget through the factor Phi(eps, t, d). Both rest on sigma_min of a
Gaussian t x d design concentrating near sqrt(t) - sqrt(d).
"""

import math

import numpy as np

from icl_pe import theory

# Phi blows up as eps approaches sqrt(t) - sqrt(d)
for t in (10, 20, 30):
    lim = math.sqrt(t) - math.sqrt(5)
    print(f"t={t}: Phi at eps=0, 0.2, 0.3 ->",
          [round(theory.phi(e, t, 5), 3) for e in (0.0, 0.2, 0.3)], f"(domain eps < {lim:.3f})")

# clean and adversarial bounds, no-PE vs PE with a measured C_PE of 0.5
p = theory.TheoryParams(d=5, t=20, m=309, d_m=64, c_pe=0.5, eps=0.2,
                        m_out=2.0, m_y=theory.m_y_bound(2.0, 0.05), l_x=1.0)
print("rc  none / pe:", round(theory.rc_bound_nope(p), 4), round(theory.rc_bound_pe(p), 4))
print("arc none / pe:", round(theory.arc_bound_nope(p), 4), round(theory.arc_bound_pe(p), 4))

# how the clean bound moves with t
for t in (10, 20, 40, 80):
    q = theory.TheoryParams(t=t)
    print(f"  t={t:3d} rc_bound_nope {theory.rc_bound_nope(q):.4f}")

# sigma_min tail: fraction below sqrt(t) - sqrt(d) - k vs exp(-k^2/2)
for k in (0.5, 1.0, 2.0):
    r = theory.sigma_min_tail_mc(50, 5, k, 5000, seed=0)
    print(f"k={k}: MC {r:.4f}  bound {math.exp(-k * k / 2):.4f}")

# the OLS tolerance ellipsoid narrows like 1/sqrt(t)
rng = np.random.default_rng(0)
for t in (25, 100, 400):
    dia = np.mean([theory.solution_diameter_clean(rng.standard_normal((t, 5)), 1.0) for _ in range(100)])
    print(f"t={t:3d} diameter {dia:.4f}  x sqrt(t) = {dia * math.sqrt(t):.3f}")

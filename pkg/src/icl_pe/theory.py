"""Closed-form complexity bounds and Monte-Carlo checks of the supporting lemmas.

All big-O constants are set to 1, so the bound functions return *shapes*: they
are meant for comparing scaling in t, m, eps and C_PE, not absolute gaps.
"""

import math
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np
from scipy import integrate

from .linalg import min_singular_value, singular_values, spectral_norm


class DomainError(ValueError):
    """Inputs outside the region where a bound is defined."""


@dataclass
class TheoryParams:
    d: int = 5
    t: int = 20
    m: int = 309
    d_m: int = 64
    D: Optional[int] = None
    r: float = 1.0
    gamma_eff: float = 1.0
    c_pe: float = 0.0
    l_f: float = 1.0
    l_x: float = 0.0
    m_out: float = 0.0
    m_y: float = 0.0
    eps: float = 0.0
    # overrides 2((M + M_y) + L_x eps) when given
    l_h: Optional[float] = None

    def __post_init__(self):
        if self.D is None:
            self.D = self.d * self.d_m + self.d_m * self.d_m
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None and v < 0:
                raise DomainError(f"{f.name} must be >= 0, got {v}")

    def lipschitz_h(self):
        if self.l_h is not None:
            return self.l_h
        return l_h(self.m_out, self.m_y, self.l_x, self.eps)


def phi(eps, t, d):
    """Attack amplification 1 / (1 - sqrt(d/t) - eps/sqrt(t)); needs t > d, eps < sqrt(t) - sqrt(d)."""
    if t <= d:
        raise DomainError(f"phi needs t > d (t={t}, d={d})")
    if eps < 0:
        raise DomainError("eps must be >= 0")
    den = 1.0 - math.sqrt(d / t) - eps / math.sqrt(t)
    if eps >= math.sqrt(t) - math.sqrt(d) or den <= 0:
        raise DomainError(f"phi needs eps < sqrt(t) - sqrt(d) = {math.sqrt(t) - math.sqrt(d):.6g}, got {eps}")
    return 1.0 / den


def ellipsoid_diameter(A, r):
    """Euclidean diameter 2 sqrt(r / lambda_min(A)) of {w : (w-w0)^T A (w-w0) <= r}."""
    A = np.asarray(A, dtype=np.float64)
    if r <= 0:
        raise DomainError("r must be positive")
    if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.allclose(A, A.T, rtol=1e-12, atol=1e-12):
        raise DomainError("A must be a symmetric square matrix")
    lam = np.linalg.eigvalsh(A)[0]
    if lam <= 0:
        raise DomainError(f"A is not positive definite (lambda_min = {lam:.3g})")
    return 2.0 * math.sqrt(r / lam)


def covering_log_bound(D, diam, eps):
    """D log(3 diam / eps), the ball covering bound for a D-dimensional set."""
    if eps <= 0 or diam <= 0:
        raise DomainError("diam and eps must be positive")
    return D * math.log(3.0 * diam / eps)


def dudley_quadrature(diam, K):
    """int_0^diam sqrt(log(K diam / u)) du.

    The substitution u = diam * exp(-s^2) moves the log singularity at u=0 to
    an exponentially decaying tail: integrand 2 diam s sqrt(log K + s^2) e^{-s^2}.
    """
    if diam <= 0:
        raise DomainError("diam must be positive")
    if K < 1:
        raise DomainError("K must be >= 1")
    logK = math.log(K)

    def f(s):
        return 2.0 * s * math.sqrt(logK + s * s) * math.exp(-s * s)

    val, _ = integrate.quad(f, 0.0, np.inf, epsabs=1e-12, epsrel=1e-10, limit=200)
    return diam * val


def dudley_split_bound(diam, K):
    """diam sqrt(log K) + diam sqrt(pi)/2, the sqrt(a+b) <= sqrt(a)+sqrt(b) split."""
    return diam * math.sqrt(math.log(K)) + diam * math.sqrt(math.pi) / 2.0


def rc_bound_nope(p):
    """L_f sqrt(r D) sqrt(log(t/r)) / sqrt(m t)."""
    if p.t <= p.r:
        raise DomainError(f"need t > r (t={p.t}, r={p.r})")
    if p.m < 1 or p.t < 1:
        raise DomainError("m and t must be >= 1")
    return p.l_f * math.sqrt(p.r * p.D) * math.sqrt(math.log(p.t / p.r)) / math.sqrt(p.m * p.t)


def pe_shift(p):
    return p.c_pe * math.sqrt(p.d) / math.sqrt(p.m)


def rc_bound_pe(p):
    return rc_bound_nope(p) + pe_shift(p)


def l_h(m_out, m_y, l_x, eps):
    """Lipschitz constant 2((M + M_y) + L_x eps) of the surrogate loss in its first argument."""
    for name, v in (("m_out", m_out), ("m_y", m_y), ("l_x", l_x), ("eps", eps)):
        if v < 0:
            raise DomainError(f"{name} must be >= 0")
    return 2.0 * ((m_out + m_y) + l_x * eps)


def arc_bound_nope(p):
    return p.lipschitz_h() * rc_bound_nope(p) * phi(p.eps, p.t, p.d)


def adversarial_pe_term(p):
    return p.c_pe * p.eps / math.sqrt(p.m)


def arc_bound_pe(p):
    clean = rc_bound_nope(p) * phi(p.eps, p.t, p.d)
    return p.lipschitz_h() * ((pe_shift(p) + adversarial_pe_term(p)) + clean)


def m_y_bound(c_mu, delta):
    """sqrt(C_mu) sqrt(2 log(2/delta)): |y| <= M_y with probability >= 1 - delta given ||mu||^2 <= C_mu."""
    if c_mu <= 0:
        raise DomainError("c_mu must be positive")
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    return math.sqrt(c_mu) * math.sqrt(2.0 * math.log(2.0 / delta))


def sigma_min_tail_mc(t, d, k, trials, seed, chunk=1000):
    """Fraction of Gaussian t x d matrices with sigma_min <= sqrt(t) - sqrt(d) - k."""
    if t <= d:
        raise DomainError("need t > d")
    thr = math.sqrt(t) - math.sqrt(d) - k
    if thr <= 0:
        return 0.0
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(t, d)))
    hits = 0
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        A = rng.standard_normal((b, t, d))
        lam = np.linalg.eigvalsh(np.swapaxes(A, 1, 2) @ A)[:, 0]
        hits += int(np.count_nonzero(np.sqrt(np.maximum(lam, 0.0)) <= thr))
        done += b
    return hits / trials


def sigma_min_tail_allowance(k, trials):
    """Bound e^{-k^2/2} plus the Monte-Carlo slack used by the checks."""
    b = math.exp(-k * k / 2.0)
    return b + 3.0 * math.sqrt(b / trials) + 0.01


def weyl_check(A, B):
    """max_i |sigma_i(A+B) - sigma_i(A)| - ||B||_2; never positive up to rounding."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise ValueError("A and B must have the same shape")
    diff = np.abs(singular_values(A + B) - singular_values(A))
    return float(diff.max() - spectral_norm(B))


def delta_cov_bound(eps, t, d):
    """eps^2/t + 2 sqrt(d) eps / sqrt(t): Gram-mean change allowed by a budget-eps perturbation."""
    if t < 1:
        raise DomainError("t must be >= 1")
    return eps * eps / t + 2.0 * math.sqrt(d) * eps / math.sqrt(t)


def solution_diameter_clean(X_t, r):
    """2 sqrt(r) / sigma_min(X_t): diameter of the OLS tolerance ellipsoid."""
    X_t = np.asarray(X_t, dtype=np.float64)
    t, d = X_t.shape
    if t <= d:
        raise DomainError("need t > d")
    s = min_singular_value(X_t)
    if s <= 0:
        raise DomainError("X_t is singular")
    return 2.0 * math.sqrt(r) / s


def solution_diameter_attacked(X_t, r, eps):
    """Diameter after a Frobenius-eps perturbation, via sigma_min(X_t + Delta) >= sigma_min(X_t) - eps."""
    X_t = np.asarray(X_t, dtype=np.float64)
    s = min_singular_value(X_t) - eps
    if s <= 0:
        raise DomainError("perturbation budget reaches sigma_min(X_t)")
    return 2.0 * math.sqrt(r) / s

import numpy as np
import pytest

from icl_pe.datagen import make_rng
from icl_pe.model import init_params


class LinearStub:
    """f(X) = w^T x_q + c, with exact input gradients."""

    def __init__(self, w, c=0.0):
        self.w = np.asarray(w, dtype=np.float64)
        self.c = float(c)
        self.d = len(self.w)

    def predict(self, X):
        X = np.asarray(X)
        if X.ndim == 2:
            X = X[None]
        return X[:, -1, : self.d] @ self.w + self.c

    def input_grad(self, X, y, wrt="loss"):
        X = np.asarray(X)
        pred = self.predict(X)
        g = np.zeros(X.shape if X.ndim == 3 else (1,) + X.shape)
        g[:, -1, : self.d] = self.w
        if wrt == "pred":
            return pred, g
        r = pred - y
        return r * r, 2.0 * r[:, None, None] * g


class ConstStub(LinearStub):
    def __init__(self, d, c=0.0):
        super().__init__(np.zeros(d), c)


class ShiftStub:
    """A model plus a linear term dw^T x_q: a stand-in for 'PE model = NoPE model + bias'."""

    def __init__(self, base, dw):
        self.base, self.dw = base, np.asarray(dw)

    def predict(self, X):
        X = np.asarray(X)
        return self.base.predict(X) + X[:, -1, : len(self.dw)] @ self.dw


@pytest.fixture
def small_model():
    def make(mode="none", activation="relu", d=3, d_m=8, t=6, seed=0, scale=1.0):
        return init_params(make_rng(seed, 4), d, d_m, t, mode, pe_init_scale=scale, activation=activation)

    return make


def random_prompt(rng, t, d):
    X = rng.standard_normal((t + 1, d + 1))
    X[-1, -1] = 0.0
    return X


# acceptance criteria report lines, printed once at the end of the session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

"""Single-layer, single-head attention model for in-context regression.

    H  = X W_in + P                      (P only for pe_mode="trainable")
    A  = RowSoftmax(H W_QK H^T / sqrt(d_m))
    H' = act(A H W_V)
    y_hat = W_c^T H'[-1]

With pe_mode="rope" the score is <R_i W_Q^T h_i, R_j W_K^T h_j> / sqrt(d_m),
R_p being the usual rotary rotation for position p (rows counted from 0).

Only the query row of H' reaches the output, so the batched path used for
training and attacks computes that row alone; :func:`forward` evaluates the
full matrices for one prompt and exposes them as a :class:`ForwardTrace`.
"""

import struct
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linalg import frobenius_norm, norm_1_inf, row_softmax

PE_MODES = ("none", "trainable", "rope")
ACTIVATIONS = ("relu", "identity")
ROPE_BASE = 10000.0


def activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "identity":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def activate_grad(z, kind):
    if kind == "relu":
        # subgradient at 0 is 0
        return (z > 0.0).astype(np.float64)
    if kind == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {kind!r}")


def sinusoidal_table(n_pos, d_m):
    """Standard sin/cos position table, shape (n_pos, d_m)."""
    pos = np.arange(n_pos, dtype=np.float64)[:, None]
    i = np.arange(0, d_m, 2, dtype=np.float64)
    ang = pos / np.power(10000.0, i / d_m)
    P = np.zeros((n_pos, d_m))
    P[:, 0::2] = np.sin(ang)
    P[:, 1::2] = np.cos(ang[:, : d_m // 2])
    return P


def rope_angles(positions, d_m, base=ROPE_BASE):
    """Rotation angle p * theta_u for every position p and pair u; theta_u = base^(-2u/d_m)."""
    if d_m % 2:
        raise ValueError("rotary encoding needs an even embedding dimension")
    theta = np.power(base, -2.0 * np.arange(d_m // 2) / d_m)
    return np.asarray(positions, dtype=np.float64)[..., None] * theta


def rotate(v, angles):
    """Rotate consecutive coordinate pairs (2u, 2u+1) of ``v`` by ``angles[..., u]``."""
    return rotate_phase(v, np.exp(1j * np.asarray(angles)))


def rotate_phase(v, phase):
    """Like :func:`rotate` with precomputed unit phases exp(i * angle)."""
    # pairs (even, odd) viewed as complex numbers even + i*odd
    vc = np.ascontiguousarray(v, dtype=np.float64).view(np.complex128)
    return (vc * phase).view(np.float64)


@lru_cache(maxsize=64)
def rope_phases(n_pos, d_m, base=ROPE_BASE):
    ph = np.exp(1j * rope_angles(np.arange(n_pos), d_m, base))
    ph.setflags(write=False)
    return ph


def rotation_matrix(p, d_m, base=ROPE_BASE):
    """Explicit R_p, mainly for tests."""
    R = np.zeros((d_m, d_m))
    for u, a in enumerate(rope_angles(p, d_m, base)):
        c, s = np.cos(a), np.sin(a)
        R[2 * u, 2 * u], R[2 * u, 2 * u + 1] = c, -s
        R[2 * u + 1, 2 * u], R[2 * u + 1, 2 * u + 1] = s, c
    return R


@dataclass
class ModelParams:
    pe_mode: str
    d: int
    d_m: int
    t_max: int
    W_in: np.ndarray
    W_V: np.ndarray
    W_c: np.ndarray
    W_QK: Optional[np.ndarray] = None
    W_Q: Optional[np.ndarray] = None
    W_K: Optional[np.ndarray] = None
    P: Optional[np.ndarray] = None
    activation: str = "relu"

    def __post_init__(self):
        if self.pe_mode not in PE_MODES:
            raise ValueError(f"unknown pe_mode {self.pe_mode!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        d, dm = self.d, self.d_m
        expect = {"W_in": (d + 1, dm), "W_V": (dm, dm), "W_c": (dm,)}
        if self.pe_mode == "rope":
            if dm % 2:
                raise ValueError("rope mode needs an even d_m")
            expect.update(W_Q=(dm, dm), W_K=(dm, dm))
        else:
            expect["W_QK"] = (dm, dm)
        if self.pe_mode == "trainable":
            expect["P"] = (self.t_max + 1, dm)
        for name, shape in expect.items():
            a = getattr(self, name)
            if a is None or a.shape != shape:
                got = None if a is None else a.shape
                raise ValueError(f"{name}: expected shape {shape}, got {got}")

    @property
    def names(self):
        """Trainable tensor names in a fixed order."""
        qk = ("W_Q", "W_K") if self.pe_mode == "rope" else ("W_QK",)
        extra = ("P",) if self.pe_mode == "trainable" else ()
        return ("W_in",) + qk + ("W_V", "W_c") + extra

    def arrays(self):
        return {k: getattr(self, k) for k in self.names}

    def copy(self):
        kw = {k: v.copy() for k, v in self.arrays().items()}
        return ModelParams(self.pe_mode, self.d, self.d_m, self.t_max, activation=self.activation, **kw)

    def n_params(self):
        return sum(a.size for a in self.arrays().values())

    def norms(self):
        """Norm quantities that the complexity bounds are stated in."""
        out = {
            "W_c_1inf": norm_1_inf(self.W_c[None, :]),
            "W_V_1inf": norm_1_inf(self.W_V.T),
            "W_in_fro": frobenius_norm(self.W_in),
        }
        if self.P is not None:
            out["P_fro"] = frobenius_norm(self.P)
        return out

    # batched predictor interface shared with the test stubs
    def predict(self, X):
        return forward_batch(self, X)[0]

    def input_grad(self, X, y, wrt="loss"):
        from .grad import input_grad

        return input_grad(self, X, y, wrt=wrt)


def init_params(rng, d, d_m, t, pe_mode="none", pe_init_scale=25.0, activation="relu"):
    if d_m < 1 or t < 1:
        raise ValueError("d_m and t must be >= 1")
    if pe_mode not in PE_MODES:
        raise ValueError(f"unknown pe_mode {pe_mode!r}")
    W_in = rng.standard_normal((d + 1, d_m)) / np.sqrt(d + 1)
    kw = {}
    if pe_mode == "rope":
        kw["W_Q"] = rng.standard_normal((d_m, d_m)) / np.sqrt(d_m)
        kw["W_K"] = rng.standard_normal((d_m, d_m)) / np.sqrt(d_m)
    else:
        kw["W_QK"] = rng.standard_normal((d_m, d_m)) / np.sqrt(d_m)
    W_V = rng.standard_normal((d_m, d_m)) / np.sqrt(d_m)
    W_c = rng.standard_normal(d_m) / np.sqrt(d_m)
    if pe_mode == "trainable":
        kw["P"] = pe_init_scale * sinusoidal_table(t + 1, d_m)
    return ModelParams(pe_mode, d, d_m, t, W_in=W_in, W_V=W_V, W_c=W_c, activation=activation, **kw)


def param_count(d, d_m, pe_mode="none", t=None):
    """(theory D = d*d_m + d_m^2, true trainable entry count for the mode)."""
    theory = d * d_m + d_m * d_m
    actual = (d + 1) * d_m + 2 * d_m * d_m + d_m
    if pe_mode == "rope":
        actual += d_m * d_m
    elif pe_mode == "trainable":
        if t is None:
            raise ValueError("trainable mode needs t to size P")
        actual += (t + 1) * d_m
    return theory, actual


def _check_X(params, X):
    if X.shape[-1] != params.d + 1:
        raise ValueError(f"prompt has {X.shape[-1]} columns, model expects d+1={params.d + 1}")
    if X.shape[-2] - 1 > params.t_max:
        raise ValueError(f"prompt length t={X.shape[-2] - 1} exceeds t_max={params.t_max}")


def embed(params, X):
    H = X @ params.W_in
    if params.P is not None:
        H = H + params.P[: X.shape[-2]]
    return H


def rope_score(params, H):
    """Full (t+1, t+1) rotary score matrix for embeddings H."""
    if params.pe_mode != "rope":
        raise ValueError("rope_score needs pe_mode='rope'")
    ang = rope_angles(np.arange(H.shape[-2]), params.d_m)
    Q = rotate(H @ params.W_Q, ang)
    K = rotate(H @ params.W_K, ang)
    return Q @ np.swapaxes(K, -1, -2) / np.sqrt(params.d_m)


@dataclass
class ForwardTrace:
    H: np.ndarray
    scores: np.ndarray
    A: np.ndarray
    pre: np.ndarray
    H_out: np.ndarray
    h_q: np.ndarray
    prediction: float


def forward(params, X):
    """Prediction for one prompt plus every intermediate matrix."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("forward takes a single (t+1, d+1) prompt")
    _check_X(params, X)
    H = embed(params, X)
    if params.pe_mode == "rope":
        S = rope_score(params, H)
    else:
        S = H @ params.W_QK @ H.T / np.sqrt(params.d_m)
    A = row_softmax(S)
    pre = A @ (H @ params.W_V)
    H_out = activate(pre, params.activation)
    h_q = H_out[-1]
    pred = float(params.W_c @ h_q)
    return pred, ForwardTrace(H, S, A, pre, H_out, h_q, pred)


@dataclass
class BatchCache:
    X: np.ndarray
    hq: np.ndarray
    xbar: np.ndarray
    hbar: np.ndarray
    a: np.ndarray
    z: np.ndarray
    h_out: np.ndarray
    pred: np.ndarray
    u: Optional[np.ndarray] = None
    q_rot: Optional[np.ndarray] = None
    K_rot: Optional[np.ndarray] = None
    phase: Optional[np.ndarray] = field(default=None, repr=False)


def forward_batch(params, X):
    """Query predictions for a stack of prompts X (n, t+1, d+1).

    Returns ``(pred, cache)``; the cache feeds :func:`icl_pe.grad.backward_core`.
    H = X W_in + P is never formed: X has only d+1 columns, so products with H
    are taken through X and W_in separately.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    _check_X(params, X)
    T = X.shape[1]
    scale = np.sqrt(params.d_m)
    P = params.P[:T] if params.P is not None else None
    hq = X[:, -1, :] @ params.W_in
    if P is not None:
        hq = hq + P[-1]
    u = q_rot = K_rot = phase = None
    if params.pe_mode == "rope":
        phase = rope_phases(T, params.d_m)  # (T, d_m/2)
        q_rot = rotate_phase(hq @ params.W_Q, phase[-1])
        K = (X.reshape(-1, X.shape[-1]) @ (params.W_in @ params.W_K)).reshape(X.shape[:2] + (-1,))
        K_rot = rotate_phase(K, phase)
        s = np.einsum("ntk,nk->nt", K_rot, q_rot)
    else:
        u = hq @ params.W_QK
        s = np.einsum("nti,ni->nt", X, u @ params.W_in.T)
        if P is not None:
            s += u @ P.T
    a = row_softmax(s / scale)
    # z = a^T H W_V, with a^T H = (a^T X) W_in + a^T P
    xbar = np.einsum("nt,nti->ni", a, X)
    hbar = xbar @ params.W_in
    if P is not None:
        hbar += a @ P
    z = hbar @ params.W_V
    h_out = activate(z, params.activation)
    pred = h_out @ params.W_c
    return pred, BatchCache(X, hq, xbar, hbar, a, z, h_out, pred, u, q_rot, K_rot, phase)


# ---------------------------------------------------------------------------
# checkpoints
#
# little-endian layout:
#   8s magic "ICLPECK\0", I version, B pe_mode index, B activation index,
#   3Q d, d_m, t_max, then each tensor of ``params.names`` as row-major f8.

_MAGIC = b"ICLPECK\x00"
_VERSION = 1
_HEADER = struct.Struct("<8sIBB3Q")


def save_checkpoint(path, params):
    with open(path, "wb") as f:
        f.write(
            _HEADER.pack(
                _MAGIC,
                _VERSION,
                PE_MODES.index(params.pe_mode),
                ACTIVATIONS.index(params.activation),
                params.d,
                params.d_m,
                params.t_max,
            )
        )
        for name in params.names:
            f.write(np.ascontiguousarray(getattr(params, name), dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        raw = f.read()
    magic, version, mode, act, d, d_m, t_max = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pe_mode = PE_MODES[mode]
    shapes = {
        "W_in": (d + 1, d_m),
        "W_QK": (d_m, d_m),
        "W_Q": (d_m, d_m),
        "W_K": (d_m, d_m),
        "W_V": (d_m, d_m),
        "W_c": (d_m,),
        "P": (t_max + 1, d_m),
    }
    qk = ("W_Q", "W_K") if pe_mode == "rope" else ("W_QK",)
    names = ("W_in",) + qk + ("W_V", "W_c") + (("P",) if pe_mode == "trainable" else ())
    off = _HEADER.size
    kw = {}
    for name in names:
        shape = shapes[name]
        count = int(np.prod(shape))
        kw[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape).astype(np.float64)
        off += 8 * count
    if off != len(raw):
        raise ValueError("checkpoint has trailing or missing bytes")
    return ModelParams(pe_mode, d, d_m, t_max, activation=ACTIVATIONS[act], **kw)

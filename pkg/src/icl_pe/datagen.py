"""Tasks, prompts and fixed train / validation splits for in-context regression.

A prompt packs t labelled examples and one query into a (t+1, d+1) matrix::

    [[x_1, y_1],
     ...
     [x_t, y_t],
     [x_q, 0  ]]

Random streams are derived from a single integer seed with
``np.random.SeedSequence(seed, spawn_key=(stream, ...))`` so that drawing more
validation tasks never changes the training draws.
"""

import csv
import struct
from dataclasses import dataclass
from typing import List

import numpy as np

INPUT_DISTS = ("standard-gaussian", "rademacher", "uniform-unit-cov")

# fixed stream ids
STREAM_TRAIN_TASKS = 0
STREAM_TRAIN_PROMPTS = 1
STREAM_VAL_TASKS = 2
STREAM_EVAL_PROMPTS = 3
STREAM_MODEL_INIT = 4

_MAGIC = b"ICLPEDS\x00"
_VERSION = 1


def make_rng(seed, *stream):
    """Generator for ``seed`` restricted to the named sub-stream."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream)))


@dataclass(frozen=True)
class Task:
    mu: np.ndarray

    @property
    def d(self):
        return self.mu.shape[0]


@dataclass(frozen=True)
class Prompt:
    X: np.ndarray
    task: Task
    query_label: float

    @property
    def t(self):
        return self.X.shape[0] - 1

    @property
    def d(self):
        return self.X.shape[1] - 1


def sample_inputs(rng, shape, dist="standard-gaussian"):
    """Zero-mean, identity-covariance inputs of the requested kind."""
    if dist == "standard-gaussian":
        return rng.standard_normal(shape)
    if dist == "rademacher":
        return rng.integers(0, 2, size=shape).astype(np.float64) * 2.0 - 1.0
    if dist == "uniform-unit-cov":
        s = np.sqrt(3.0)
        return rng.uniform(-s, s, size=shape)
    raise ValueError(f"unknown input distribution {dist!r}; expected one of {INPUT_DISTS}")


def labels(x, mu):
    """y = mu^T x row by row; ``mu`` broadcasts against the leading axes of ``x``."""
    return (x * mu).sum(axis=-1)


def sample_task(rng, d):
    if d < 1:
        raise ValueError("d must be >= 1")
    return Task(rng.standard_normal(d) / np.sqrt(d))


def sample_tasks(rng, n, d):
    """``n`` task vectors stacked as an (n, d) array."""
    return rng.standard_normal((n, d)) / np.sqrt(d)


def _pack(x, y):
    # x: (..., t+1, d), y: (..., t+1) -> X with the query label zeroed
    X = np.zeros(x.shape[:-1] + (x.shape[-1] + 1,))
    X[..., :-1] = x
    X[..., :-1, -1] = y[..., :-1]
    return X


def sample_prompt(rng, task, t, d, dist="standard-gaussian"):
    if t < 1:
        raise ValueError("t must be >= 1")
    if task.d != d:
        raise ValueError(f"task has dimension {task.d}, expected {d}")
    x = sample_inputs(rng, (t + 1, d), dist)
    y = labels(x, task.mu)
    return Prompt(_pack(x, y), task, float(y[-1]))


def sample_prompts(rng, mus, t, dist="standard-gaussian"):
    """One prompt per row of ``mus``.

    Returns ``(X, y_q)`` with X of shape (n, t+1, d+1). Draws match calling
    :func:`sample_prompt` once per task with the same generator.
    """
    mus = np.asarray(mus, dtype=np.float64)
    n, d = mus.shape
    x = sample_inputs(rng, (n, t + 1, d), dist)
    y = labels(x, mus[:, None, :])
    return _pack(x, y), y[:, -1].copy()


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Fixed training prompts plus held-out validation tasks.

    Train prompts are stored stacked: ``train_X`` is (n_train, t+1, d+1).
    """

    seed: int
    t: int
    d: int
    dist: str
    train_X: np.ndarray
    train_y: np.ndarray
    train_mu: np.ndarray
    val_mu: np.ndarray

    @property
    def n_train(self):
        return self.train_X.shape[0]

    @property
    def n_val(self):
        return self.val_mu.shape[0]

    @property
    def train_prompts(self) -> List[Prompt]:
        return [
            Prompt(self.train_X[i], Task(self.train_mu[i]), float(self.train_y[i]))
            for i in range(self.n_train)
        ]

    @property
    def val_tasks(self) -> List[Task]:
        return [Task(mu) for mu in self.val_mu]

    def val_prompts(self, eval_seed=0):
        """Fresh prompts, one per validation task, for one evaluation."""
        rng = make_rng(self.seed, STREAM_EVAL_PROMPTS, eval_seed)
        return sample_prompts(rng, self.val_mu, self.t, self.dist)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            (self.seed, self.t, self.d, self.dist) == (other.seed, other.t, other.d, other.dist)
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("train_X", "train_y", "train_mu", "val_mu")
            )
        )


def build_dataset(seed, n_train, n_val, t, d, dist="standard-gaussian"):
    if n_train < 1 or n_val < 1:
        raise ValueError("n_train and n_val must be >= 1")
    if dist not in INPUT_DISTS:
        raise ValueError(f"unknown input distribution {dist!r}")
    train_mu = sample_tasks(make_rng(seed, STREAM_TRAIN_TASKS), n_train, d)
    X, y = sample_prompts(make_rng(seed, STREAM_TRAIN_PROMPTS), train_mu, t, dist)
    val_mu = sample_tasks(make_rng(seed, STREAM_VAL_TASKS), n_val, d)
    return Dataset(int(seed), int(t), int(d), dist, _frozen(X), _frozen(y), _frozen(train_mu), _frozen(val_mu))


# ---------------------------------------------------------------------------
# file formats
#
# binary layout (little endian):
#   8s  magic "ICLPEDS\0"
#   I   version
#   q   seed
#   5Q  n_train, n_val, t, d, dist index into INPUT_DISTS
#   f8  train_X  (n_train, t+1, d+1) row-major
#   f8  train_y  (n_train,)
#   f8  train_mu (n_train, d)
#   f8  val_mu   (n_val, d)

_HEADER = struct.Struct("<8sIq5Q")


def save_dataset(path, ds):
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, _VERSION, ds.seed, ds.n_train, ds.n_val, ds.t, ds.d, INPUT_DISTS.index(ds.dist)))
        for a in (ds.train_X, ds.train_y, ds.train_mu, ds.val_mu):
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_dataset(path):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise ValueError("truncated dataset file")
    magic, version, seed, n_train, n_val, t, d, dist = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError("not a dataset file (bad magic)")
    if version != _VERSION:
        raise ValueError(f"unsupported dataset version {version}")
    shapes = [(n_train, t + 1, d + 1), (n_train,), (n_train, d), (n_val, d)]
    off = _HEADER.size
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        a = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape)
        arrays.append(_frozen(a.astype(np.float64)))
        off += 8 * count
    if off != len(raw):
        raise ValueError("dataset file has trailing or missing bytes")
    return Dataset(seed, t, d, INPUT_DISTS[dist], *arrays)


def dump_csv(path, ds):
    """Human-readable dump: one row per prompt row, then one row per task vector."""
    d = ds.d
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["kind", "index", "row"] + [f"c{j}" for j in range(d + 1)])
        for i in range(ds.n_train):
            for r in range(ds.t + 1):
                w.writerow(["train_X", i, r] + [repr(float(v)) for v in ds.train_X[i, r]])
        for kind, mus in (("train_mu", ds.train_mu), ("val_mu", ds.val_mu)):
            for i, mu in enumerate(mus):
                w.writerow([kind, i, -1] + [repr(float(v)) for v in mu] + [""])

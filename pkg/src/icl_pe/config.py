"""Run configuration: flat ``key = value`` files, environment overrides, paper mode.

List values are comma separated. ``ICLPE_<KEY>`` environment variables override
file values (``ICLPE_EPOCHS=10``). The resolved configuration is what gets
echoed into every output directory.
"""

import hashlib
import math
import os
from dataclasses import dataclass, fields, replace
from typing import Tuple

from .datagen import INPUT_DISTS
from .model import ACTIVATIONS, PE_MODES

ENV_PREFIX = "ICLPE_"

GRID_T = (6, 7, 8, 9, 10, 12, 15, 20, 25, 30)


@dataclass(frozen=True)
class RunConfig:
    d: int = 5
    d_m: int = 64
    ts: Tuple[int, ...] = GRID_T
    eps_list: Tuple[float, ...] = (0.05, 0.2, 0.3)
    pe_modes: Tuple[str, ...] = PE_MODES
    # modes that get attacked gaps (all by default)
    attack_modes: Tuple[str, ...] = PE_MODES
    seeds: Tuple[int, ...] = (0, 1, 2)
    n_train: int = 309
    n_val: int = 2000
    epochs: int = 1500
    lr: float = 1e-4
    pe_init_scale: float = 1.0
    activation: str = "relu"
    attack_k: int = 40
    # PGD step = alpha_frac * eps
    alpha_frac: float = 0.1
    dist: str = "standard-gaussian"
    eval_seed: int = 0
    cpe_contexts: int = 20
    cpe_queries: int = 200
    out: str = "runs"

    def __post_init__(self):
        for name in ("ts", "eps_list", "pe_modes", "seeds"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must not be empty")
        bad = [m for m in self.pe_modes + self.attack_modes if m not in PE_MODES]
        if bad:
            raise ValueError(f"unknown pe modes {bad}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.dist not in INPUT_DISTS:
            raise ValueError(f"unknown input distribution {self.dist!r}")
        if min(self.ts) < 1 or self.d < 1 or self.d_m < 1:
            raise ValueError("t, d and d_m must be >= 1")
        if "rope" in self.pe_modes and self.d_m % 2:
            raise ValueError("rope needs an even d_m")
        if any(e < 0 for e in self.eps_list):
            raise ValueError("eps values must be >= 0")

    def eps_warnings(self):
        out = []
        for t in self.ts:
            lim = math.sqrt(t) - math.sqrt(self.d)
            for e in self.eps_list:
                if e > 0 and not e < lim:
                    out.append(f"eps={e} is outside the amplification-factor domain at t={t} (needs eps < {lim:.4g})")
        return out

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(_fmt(x) for x in v)
            else:
                v = _fmt(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def digest(self):
        """Hash of everything that affects results (output dir excluded)."""
        text = "\n".join(l for l in self.to_text().splitlines() if not l.startswith("out ="))
        return hashlib.sha256(text.encode()).hexdigest()[:10]


PAPER_MODE = dict(d_m=1024, n_val=9991, epochs=3000, seeds=(0, 1, 2, 3, 4, 5))


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


_TYPES = {f.name: f for f in fields(RunConfig)}
_ELEM = {"ts": int, "eps_list": float, "pe_modes": str, "attack_modes": str, "seeds": int}
_SCALAR = {"d": int, "d_m": int, "n_train": int, "n_val": int, "epochs": int, "lr": float,
           "pe_init_scale": float, "activation": str, "attack_k": int, "alpha_frac": float,
           "dist": str, "eval_seed": int, "cpe_contexts": int, "cpe_queries": int, "out": str}


def _convert(key, raw):
    if key in _ELEM:
        return tuple(_ELEM[key](x.strip()) for x in raw.split(",") if x.strip())
    if key in _SCALAR:
        return _SCALAR[key](raw.strip())
    raise KeyError(f"unknown config key {key!r}")


def parse_kv(text):
    """``key = value`` lines; '#' starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected 'key = value', got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_config(path=None, paper_mode=False, env=None, **overrides):
    """Defaults < paper mode < file < environment < explicit overrides."""
    values = {}
    if paper_mode:
        values.update(PAPER_MODE)
    if path is not None:
        with open(path) as f:
            for k, v in parse_kv(f.read()).items():
                values[k] = _convert(k, v)
    env = os.environ if env is None else env
    for k in _TYPES:
        ev = env.get(ENV_PREFIX + k.upper())
        if ev is not None:
            values[k] = _convert(k, ev)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def config_from_text(text):
    return RunConfig(**{k: _convert(k, v) for k, v in parse_kv(text).items()})


__all__ = ["RunConfig", "load_config", "parse_kv", "config_from_text", "PAPER_MODE", "GRID_T", "replace"]

"""Dense/embedding layers, Adam, and flat binary checkpoints."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor, affine, embedding_lookup

CHECKPOINT_MAGIC = b"QGL1"

# Unit scale keeps the multiplicative conditioning path (z * emb) comparable to
# the dense biases; a 0.02-style scaled init leaves the generator effectively
# unconditioned for hundreds of steps at desk scale.
EMBEDDING_INIT_STD = 1.0


class MissingGradientError(RuntimeError):
    pass


class Dense:
    """Affine layer; weights and bias drawn uniformly from +-1/sqrt(fan_in)."""

    def __init__(self, rng: np.random.Generator, fan_in: int, fan_out: int, name: str):
        bound = 1.0 / np.sqrt(fan_in)
        self.name = name
        self.weight = Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)), requires_grad=True)
        self.bias = Tensor(rng.uniform(-bound, bound, fan_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return affine(x, self.weight, self.bias)

    def parameters(self) -> dict[str, Tensor]:
        return {f"{self.name}.weight": self.weight, f"{self.name}.bias": self.bias}


class Embedding:
    """Lookup table initialized from a scaled standard normal."""

    def __init__(self, rng: np.random.Generator, n_rows: int, dim: int, name: str,
                 init_std: float = EMBEDDING_INIT_STD):
        self.name = name
        self.table = Tensor(
            rng.standard_normal((n_rows, dim)) * init_std, requires_grad=True
        )

    def __call__(self, indices: np.ndarray) -> Tensor:
        return embedding_lookup(self.table, indices)

    def parameters(self) -> dict[str, Tensor]:
        return {f"{self.name}.table": self.table}


@dataclass
class AdamState:
    """Adam with bias correction; moment buffers keyed by parameter name."""

    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    moments: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, Tensor]) -> None:
    """One update over all params; requires every grad to be populated."""
    for name, p in params.items():
        if p.grad is None:
            raise MissingGradientError(f"parameter {name!r} has no gradient")
    state.step += 1
    t = state.step
    for name, p in params.items():
        if name not in state.moments:
            state.moments[name] = (np.zeros_like(p.values), np.zeros_like(p.values))
        m, v = state.moments[name]
        g = p.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        step = m / (1.0 - state.beta1**t)
        step /= np.sqrt(v / (1.0 - state.beta2**t)) + state.epsilon
        step *= state.learning_rate
        p.values -= step


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.zero_grad()


def scale_grads(params: dict[str, Tensor], factor: float) -> None:
    for p in params.values():
        if p.grad is not None:
            p.grad *= factor


# -- checkpoints --------------------------------------------------------------
#
# Layout: the binary file is the magic "QGL1" followed by each parameter's
# float64 little-endian buffer, in sidecar order. The `<path>.json` sidecar
# carries the name table (name + shape per parameter) and free-form metadata.


def save_checkpoint(path: str | Path, params: dict[str, np.ndarray], extra: dict | None = None) -> None:
    path = Path(path)
    table = []
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        for name, values in params.items():
            arr = np.ascontiguousarray(values, dtype="<f8")
            f.write(arr.tobytes())
            table.append({"name": name, "shape": list(arr.shape)})
    sidecar = {"format": "qgl-checkpoint-v1", "params": table, "extra": extra or {}}
    with open(path.with_name(path.name + ".json"), "w") as f:
        json.dump(sidecar, f, indent=2)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    with open(path.with_name(path.name + ".json")) as f:
        sidecar = json.load(f)
    if sidecar.get("format") != "qgl-checkpoint-v1":
        raise ValueError(f"unknown checkpoint format {sidecar.get('format')!r}")
    raw = path.read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic {raw[:4]!r}")
    offset = 4
    params: dict[str, np.ndarray] = {}
    for entry in sidecar["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(raw):
            raise ValueError(f"checkpoint truncated at parameter {entry['name']!r}")
        params[entry["name"]] = np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape).copy()
        offset = end
    if offset != len(raw):
        raise ValueError(f"{len(raw) - offset} trailing bytes after last parameter")
    return params, sidecar.get("extra", {})

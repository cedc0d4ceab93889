from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

# Order matters: kernels, Adam state and serialization all iterate this way.
PARAM_NAMES = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h", "W_o", "b_o")


@dataclass(frozen=True, eq=False)
class GruParams:
    """Single-layer GRU cell plus a linear head mapping h_L to the output."""

    W_z: np.ndarray
    U_z: np.ndarray
    b_z: np.ndarray
    W_r: np.ndarray
    U_r: np.ndarray
    b_r: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray
    b_h: np.ndarray
    W_o: np.ndarray
    b_o: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            a = np.ascontiguousarray(getattr(self, f.name), dtype=np.float64)
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{f.name} contains non-finite entries")
            a.setflags(write=False)
            object.__setattr__(self, f.name, a)
        hid, inp = self.W_z.shape
        out = self.W_o.shape[0]
        expected = {
            "W_z": (hid, inp), "U_z": (hid, hid), "b_z": (hid,),
            "W_r": (hid, inp), "U_r": (hid, hid), "b_r": (hid,),
            "W_h": (hid, inp), "U_h": (hid, hid), "b_h": (hid,),
            "W_o": (out, hid), "b_o": (out,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def input_size(self) -> int:
        return self.W_z.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.W_z.shape[0]

    @property
    def output_size(self) -> int:
        return self.W_o.shape[0]

    def tensors(self) -> tuple[np.ndarray, ...]:
        return tuple(getattr(self, n) for n in PARAM_NAMES)

    def as_dict(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in PARAM_NAMES}

    @classmethod
    def from_tensors(cls, tensors) -> "GruParams":
        return cls(*tensors)

    def replace(self, **changes) -> "GruParams":
        d = self.as_dict()
        d.update(changes)
        return GruParams(**d)

    def equals(self, other: "GruParams") -> bool:
        """Bit-identical comparison of every tensor."""
        return all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.tensors(), other.tensors())
        )


def init_params(input_size: int, hidden_size: int, seed: int,
                output_size: int | None = None) -> GruParams:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights, zero biases."""
    if input_size < 1 or hidden_size < 1:
        raise ValueError("input_size and hidden_size must be >= 1")
    output_size = input_size if output_size is None else output_size
    rng = np.random.default_rng(seed)
    k = 1.0 / np.sqrt(hidden_size)

    def u(*shape):
        return rng.uniform(-k, k, size=shape)

    zeros = np.zeros(hidden_size)
    return GruParams(
        W_z=u(hidden_size, input_size), U_z=u(hidden_size, hidden_size), b_z=zeros,
        W_r=u(hidden_size, input_size), U_r=u(hidden_size, hidden_size), b_r=zeros,
        W_h=u(hidden_size, input_size), U_h=u(hidden_size, hidden_size), b_h=zeros,
        W_o=u(output_size, hidden_size), b_o=np.zeros(output_size),
    )

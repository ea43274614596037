"""Named parameter registry and the binary checkpoint container.

Checkpoints are a versioned container of (name, shape, raw little-endian
float64 values) triples plus a JSON manifest of hyperparameters; the round
trip save -> load -> save is bit-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .autodiff import Tensor

_MAGIC = b"MESESCP1"


class ParamRegistry:
    """Ordered map of unique parameter names to trainable tensors."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def register(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        tensor = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def zero_grad(self) -> None:
        for tensor in self._params.values():
            tensor.zero_grad()

    def n_values(self) -> int:
        return sum(t.size for t in self._params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ValueError(f"parameter name mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, tensor in self._params.items():
            values = np.asarray(state[name], dtype=np.float64)
            if values.shape != tensor.data.shape:
                raise ValueError(f"shape mismatch for {name}: {values.shape} vs {tensor.data.shape}")
            tensor.data = values.copy()


def save_checkpoint(path, registry: ParamRegistry, manifest: dict) -> None:
    """Write `registry` and `manifest` to `path` in the versioned format."""
    entries = []
    blobs = []
    offset = 0
    for name, tensor in registry.items():
        raw = np.ascontiguousarray(tensor.data, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(tensor.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"manifest": manifest, "params": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<q", len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint; returns (name -> array, manifest)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"not a checkpoint file: {path}")
        (header_len,) = struct.unpack("<q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        payload = fh.read()
    state = {}
    for entry in header["params"]:
        raw = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
        state[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(entry["shape"]).copy()
    return state, header["manifest"]

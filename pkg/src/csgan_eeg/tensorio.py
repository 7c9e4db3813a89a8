"""Named-tensor files: a JSON manifest plus one flat little-endian float32 payload."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .errors import FormatError


def save_state(state: dict, path, stem: str = "params") -> Path:
    """Write ``<stem>.json`` and ``<stem>.f32`` for a ``state_dict``-like mapping.

    Integer buffers (e.g. batch-norm counters) are stored as float32; they
    are small counts and round-trip exactly.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries, chunks, offset = [], [], 0
    for name, t in state.items():
        a = t.detach().cpu().numpy() if torch.is_tensor(t) else np.asarray(t)
        entries.append({"name": name, "shape": list(a.shape), "dtype": str(a.dtype),
                        "offset": offset})
        flat = np.ascontiguousarray(a, dtype="<f4").ravel()
        chunks.append(flat)
        offset += flat.size
    payload = np.concatenate(chunks) if chunks else np.empty(0, dtype="<f4")
    payload.tofile(path / f"{stem}.f32")
    (path / f"{stem}.json").write_text(json.dumps({"tensors": entries}, indent=1))
    return path


def load_state(path, stem: str = "params") -> dict:
    path = Path(path)
    try:
        manifest = json.loads((path / f"{stem}.json").read_text())
    except FileNotFoundError:
        raise FormatError(f"no {stem}.json in {path}") from None
    flat = np.fromfile(path / f"{stem}.f32", dtype="<f4")
    out = {}
    for e in manifest["tensors"]:
        n = int(np.prod(e["shape"], dtype=np.int64))
        if e["offset"] + n > flat.size:
            raise FormatError(f"payload too short for tensor {e['name']}")
        a = flat[e["offset"]:e["offset"] + n].reshape(e["shape"])
        out[e["name"]] = torch.from_numpy(a.astype(np.dtype(e["dtype"])))
    return out

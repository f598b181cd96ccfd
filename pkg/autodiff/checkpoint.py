"""
Model checkpoint container: a NumPy ``.npz`` archive holding one array per
named parameter plus a ``__meta__`` entry with the JSON-encoded metadata
(kind, config, config digest, dtype, shapes, tool version, seed).
"""
import json
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from shared.config import settings
from shared.errors import CheckpointMismatch

META_KEY = "__meta__"


def save_checkpoint(path, arrays: Mapping[str, np.ndarray], meta: Mapping[str, Any]) -> str:
    """
    Write arrays and metadata to ``path`` (``.npz`` appended when missing).

    Returns:
        Path of the written file
    """
    if META_KEY in arrays:
        raise ValueError(f"{META_KEY} is reserved")
    full_meta = dict(meta)
    full_meta.setdefault("tool_version", settings.TOOL_VERSION)
    full_meta["shapes"] = {k: list(np.shape(v)) for k, v in sorted(arrays.items())}
    full_meta["dtypes"] = {k: str(np.asarray(v).dtype) for k, v in sorted(arrays.items())}
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_suffix(".npz")
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {k: np.asarray(v) for k, v in arrays.items()}
    payload[META_KEY] = np.array(json.dumps(full_meta, sort_keys=True, default=str))
    with open(path, "wb") as handle:
        np.savez(handle, **payload)
    return str(path)


def load_checkpoint(path, expected_digest: Optional[str] = None) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """
    Read a checkpoint written by ``save_checkpoint``.

    Raises CheckpointMismatch when ``expected_digest`` is given and differs
    from the stored config digest, or when stored shapes disagree with the arrays.
    """
    with np.load(path, allow_pickle=False) as archive:
        if META_KEY not in archive.files:
            raise CheckpointMismatch(f"{path} has no {META_KEY} entry")
        meta = json.loads(str(archive[META_KEY]))
        arrays = {k: archive[k] for k in archive.files if k != META_KEY}
    if expected_digest is not None and meta.get("config_digest") != expected_digest:
        raise CheckpointMismatch(
            f"checkpoint config digest {meta.get('config_digest')} != requested {expected_digest}"
        )
    for name, shape in meta.get("shapes", {}).items():
        if name not in arrays or list(arrays[name].shape) != shape:
            raise CheckpointMismatch(f"{path}: array {name!r} missing or reshaped")
    return arrays, meta

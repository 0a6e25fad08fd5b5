"""模型 checkpoint：manifest.json 列出每个参数的名字和形状，每个参数一个 little-endian float64 的 .bin 文件"""

import json
import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from model.heads import TokenHead
from model.network import CIGNModel
from model.tokens import TOKEN_PARAM, ClassTokenBank
from numerics.tensor import Tensor
from utils.errors import CorruptFileError, VersionError
from utils.paths import atomic_write_bytes, atomic_write_text

CHECKPOINT_VERSION = 1
MANIFEST_NAME = "manifest.json"
_DTYPE = np.dtype("<f8")

logger = logging.getLogger(__name__)


@dataclass
class Checkpoint:
    parameters: dict[str, np.ndarray]
    class_ids: tuple[int, ...] = ()
    old_count: int = 0
    metadata: dict[str, Any] = field(default_factory=dict)


def save_checkpoint(
    model: CIGNModel, directory: str | Path, metadata: dict[str, Any] | None = None
) -> Path:
    directory = Path(directory)
    entries = []
    for name, t in sorted(model.parameters().items()):
        payload = t.data.astype(_DTYPE, copy=False).tobytes(order="C")
        file_name = f"{name}.bin"
        atomic_write_bytes(directory / file_name, payload)
        entries.append(
            {
                "name": name,
                "shape": list(t.shape),
                "file": file_name,
                "crc32": zlib.crc32(payload),
            }
        )
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "dtype": "<f8",
        "class_ids": list(model.class_ids),
        "old_count": model.bank.old_count,
        "metadata": metadata or {},
        "parameters": entries,
    }
    atomic_write_text(directory / MANIFEST_NAME, json.dumps(manifest, indent=2) + "\n")
    logger.info(f"Saved checkpoint with {len(entries)} parameters to {directory}")
    return directory / MANIFEST_NAME


def load_checkpoint(directory: str | Path) -> Checkpoint:
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.is_file():
        raise CorruptFileError("Checkpoint manifest not found", path=str(manifest_path))
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CorruptFileError("Checkpoint manifest is not valid JSON", path=str(manifest_path), cause=e) from e
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise VersionError(
            f"Unsupported checkpoint version {manifest.get('format_version')!r}",
            details={"supported": CHECKPOINT_VERSION},
        )

    params: dict[str, np.ndarray] = {}
    for entry in manifest["parameters"]:
        path = directory / entry["file"]
        if not path.is_file():
            raise CorruptFileError("Parameter file missing", path=str(path))
        payload = path.read_bytes()
        shape = tuple(entry["shape"])
        if len(payload) != int(np.prod(shape, dtype=np.int64)) * _DTYPE.itemsize:
            raise CorruptFileError("Parameter file has the wrong size", path=str(path), details={"shape": shape})
        if zlib.crc32(payload) != entry["crc32"]:
            raise CorruptFileError("Parameter checksum mismatch", path=str(path))
        params[entry["name"]] = np.frombuffer(payload, dtype=_DTYPE).reshape(shape).astype(np.float64)

    return Checkpoint(
        parameters=params,
        class_ids=tuple(int(c) for c in manifest["class_ids"]),
        old_count=int(manifest["old_count"]),
        metadata=manifest.get("metadata", {}),
    )


def restore(model: CIGNModel, checkpoint: Checkpoint) -> CIGNModel:
    """按 checkpoint 重建 token bank 和 token head 的形状，再载入全部参数"""
    tokens = checkpoint.parameters[TOKEN_PARAM]
    model.bank = ClassTokenBank(
        tokens=Tensor(tokens, requires_grad=True, name=TOKEN_PARAM),
        class_ids=checkpoint.class_ids,
        old_count=checkpoint.old_count,
    )
    w_tok = checkpoint.parameters.get("token_head.w_tok")
    model.token_head = TokenHead(model.dim, w_tok.shape[1]) if w_tok is not None else None
    model.load_state_dict(checkpoint.parameters)
    return model

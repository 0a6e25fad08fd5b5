"""预计算特征的文件格式：manifest.json（UTF-8）+ features.bin（little-endian float64，行优先）。

每个样本在 payload 中占一段连续字节：先是 audio 的 1×D，然后是 visual 的 P×D。
"""

import json
import logging
import zlib
from pathlib import Path
from typing import Any

import numpy as np

from data.dataset import FeatureDataset
from utils.errors import CorruptFileError, VersionError
from utils.paths import atomic_write_bytes, atomic_write_text

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
PAYLOAD_NAME = "features.bin"
_DTYPE = np.dtype("<f8")

logger = logging.getLogger(__name__)


def _payload_bytes(dataset: FeatureDataset) -> bytes:
    n = len(dataset)
    rows = np.concatenate(
        [dataset.audio.reshape(n, -1), dataset.visual.reshape(n, -1)], axis=1
    )
    return rows.astype(_DTYPE, copy=False).tobytes(order="C")


def build_manifest(dataset: FeatureDataset, payload: bytes) -> dict[str, Any]:
    record_len = (1 + dataset.patches) * dataset.dim * _DTYPE.itemsize
    records = [
        {
            "id": int(dataset.sample_ids[i]),
            "label": int(dataset.labels[i]),
            "split": str(dataset.splits[i]),
            "offset": i * record_len,
            "length": record_len,
        }
        for i in range(len(dataset))
    ]
    return {
        "format_version": FORMAT_VERSION,
        "name": dataset.name,
        "num_classes": dataset.num_classes,
        "dim": dataset.dim,
        "patches": dataset.patches,
        "dtype": "<f8",
        "payload": PAYLOAD_NAME,
        "payload_bytes": len(payload),
        "crc32": zlib.crc32(payload),
        "records": records,
    }


def save_features(dataset: FeatureDataset, directory: str | Path) -> Path:
    directory = Path(directory)
    payload = _payload_bytes(dataset)
    manifest = build_manifest(dataset, payload)
    # 先写 payload，再写 manifest：manifest 存在就说明 payload 已经完整
    atomic_write_bytes(directory / PAYLOAD_NAME, payload)
    atomic_write_text(directory / MANIFEST_NAME, json.dumps(manifest, indent=2) + "\n")
    logger.info(f"Saved {len(dataset)} samples to {directory} (crc32={manifest['crc32']})")
    return directory / MANIFEST_NAME


def _resolve_manifest(path: Path) -> Path:
    return path / MANIFEST_NAME if path.is_dir() else path


def read_manifest(path: str | Path) -> dict[str, Any]:
    manifest_path = _resolve_manifest(Path(path))
    if not manifest_path.is_file():
        raise CorruptFileError("Manifest not found", path=str(manifest_path))
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CorruptFileError("Manifest is not valid JSON", path=str(manifest_path), cause=e) from e
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(
            f"Unsupported feature format version {version!r}",
            details={"supported": FORMAT_VERSION, "path": str(manifest_path)},
        )
    return manifest


def _validate_records(records: list[dict[str, Any]], record_len: int, payload_len: int, path: str) -> None:
    expected_offset = 0
    for record in records:
        if record["length"] != record_len or record["offset"] != expected_offset:
            raise CorruptFileError(
                "Record offsets overlap or leave gaps",
                path=path,
                details={"id": record.get("id"), "offset": record.get("offset")},
            )
        expected_offset += record_len
    if expected_offset != payload_len:
        raise CorruptFileError(
            "Record count does not match payload size",
            path=path,
            details={"expected_bytes": expected_offset, "payload_bytes": payload_len},
        )


def load_features(path: str | Path) -> FeatureDataset:
    """读取并校验；任何不一致都抛出 CorruptFileError，不会返回部分数据"""
    manifest_path = _resolve_manifest(Path(path))
    manifest = read_manifest(manifest_path)
    payload_path = manifest_path.parent / manifest.get("payload", PAYLOAD_NAME)
    if not payload_path.is_file():
        raise CorruptFileError("Payload file missing", path=str(payload_path))
    payload = payload_path.read_bytes()

    if len(payload) != manifest.get("payload_bytes"):
        raise CorruptFileError(
            "Payload size differs from manifest",
            path=str(payload_path),
            details={"expected": manifest.get("payload_bytes"), "actual": len(payload)},
        )
    if zlib.crc32(payload) != manifest.get("crc32"):
        raise CorruptFileError("Payload checksum mismatch", path=str(payload_path))

    dim = int(manifest["dim"])
    patches = int(manifest["patches"])
    record_len = (1 + patches) * dim * _DTYPE.itemsize
    records = manifest["records"]
    _validate_records(records, record_len, len(payload), str(payload_path))

    n = len(records)
    rows = np.frombuffer(payload, dtype=_DTYPE).reshape(n, (1 + patches) * dim)
    return FeatureDataset(
        name=str(manifest.get("name", "features")),
        audio=rows[:, :dim].reshape(n, 1, dim).astype(np.float64),
        visual=rows[:, dim:].reshape(n, patches, dim).astype(np.float64),
        labels=np.array([r["label"] for r in records], dtype=np.int64),
        splits=np.array([r["split"] for r in records], dtype="<U5"),
        sample_ids=np.array([r["id"] for r in records], dtype=np.int64),
    )

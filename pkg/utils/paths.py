import os
import tempfile
from pathlib import Path


def ensure_parent_directory(path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def atomic_write_bytes(path: str | Path, payload: bytes) -> Path:
    """先写入同目录下的临时文件，再 rename 覆盖目标文件。
    读到的文件要么是旧内容，要么是完整的新内容"""
    path = ensure_parent_directory(path)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def atomic_write_text(path: str | Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def display_path_rel_to_cwd(path: str | Path, cwd: str | Path | None) -> str:
    p = Path(path)
    if cwd:
        try:
            return str(p.relative_to(cwd))
        except ValueError:
            pass
    return str(p)

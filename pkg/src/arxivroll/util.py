"""Deterministic hashing, stable ids, and atomic file helpers."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

_SEP = "\x1f"  # unit separator; cannot appear in ids or labels we hash


def _digest(*parts: object) -> "hashlib._Hash":
    payload = _SEP.join(str(p) for p in parts).encode("utf-8")
    return hashlib.sha256(payload)


def stable_id(*parts: object) -> str:
    """16-hex-char id, a stable function of its parts."""
    return _digest(*parts).hexdigest()[:16]


def derive_subseed(seed: int, key: str) -> int:
    """64-bit sub-seed for (seed, key); independent streams per key."""
    return int.from_bytes(_digest(seed, key).digest()[:8], "big")


def unit_draw(*parts: object) -> float:
    """Deterministic draw in [0, 1) keyed on the parts."""
    return int.from_bytes(_digest(*parts).digest()[:8], "big") / 2.0**64


def int_draw(*parts: object) -> int:
    """Deterministic 64-bit draw keyed on the parts."""
    return int.from_bytes(_digest(*parts).digest()[8:16], "big")


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def config_digest(obj: object) -> str:
    """Short digest of a JSON-serializable config, for provenance stamps."""
    canon = json.dumps(obj, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write-temp-then-rename so readers never observe a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path: str | Path, obj: object, *, indent: int | None = 2) -> None:
    atomic_write_text(path, json.dumps(obj, ensure_ascii=False, indent=indent) + "\n")


def read_json(path: str | Path) -> object:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)

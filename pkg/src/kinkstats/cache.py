"""One-file-per-row result cache for resumable sweeps.

Each entry lives in ``<dir>/<sha256 of the canonical key>.json`` and stores its
key, its payload and a checksum over both.  Entries whose checksum or key do
not match are treated as missing, so a corrupted cache only costs a recompute.
Writes go to a temporary file in the same directory and are renamed into
place, which is atomic on POSIX filesystems.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path

log = logging.getLogger(__name__)

CACHE_ENV = "KINKSTATS_CACHE_DIR"


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest(obj) -> str:
    return hashlib.sha256(canonical(obj).encode()).hexdigest()


def default_cache_dir() -> Path | None:
    value = os.environ.get(CACHE_ENV)
    return Path(value) if value else None


class RowCache:
    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def path(self, key: dict) -> Path:
        return self.directory / f"{digest(key)}.json"

    def get(self, key: dict):
        path = self.path(key)
        try:
            entry = json.loads(path.read_text())
        except FileNotFoundError:
            return None
        except (OSError, ValueError) as exc:
            log.warning("unreadable cache entry %s (%s); recomputing", path.name, exc)
            return None
        if (not isinstance(entry, dict) or entry.get("key") != key
                or entry.get("checksum") != digest([entry.get("key"), entry.get("payload")])):
            log.warning("cache entry %s failed its checksum; recomputing", path.name)
            return None
        return entry["payload"]

    def put(self, key: dict, payload) -> Path:
        path = self.path(key)
        entry = {"key": key, "payload": payload, "checksum": digest([key, payload])}
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w") as fh:
                fh.write(canonical(entry))
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        return path

    def __len__(self):
        return sum(1 for _ in self.directory.glob("*.json"))

"""On-disk response cache, keyed by request digest.

One JSON file per digest plus an append-only MANIFEST listing known digests.
Writes go through a temp file and an atomic rename, so concurrent readers
never see a partial record; in-process writers are serialized with a lock.
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
from pathlib import Path

MANIFEST_NAME = "MANIFEST"


class ResponseCache:
    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, digest: str) -> Path:
        return self.directory / f"{digest}.json"

    def get(self, digest: str) -> str | None:
        """Return the cached response content, or None on a miss."""
        path = self._path(digest)
        try:
            record = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        return record["response"]

    def put(self, digest: str, request_canonical: str, content: str) -> None:
        record = {
            "digest": digest,
            "request": request_canonical,
            "response": content,
            "stored_at": _now_iso(),
        }
        body = json.dumps(record, ensure_ascii=False, indent=2)
        with self._lock:
            is_new = not self._path(digest).exists()
            fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    fh.write(body)
                os.replace(tmp, self._path(digest))
            finally:
                if os.path.exists(tmp):
                    os.unlink(tmp)
            if is_new:
                with open(self.directory / MANIFEST_NAME, "a", encoding="utf-8") as fh:
                    fh.write(digest + "\n")

    def digests(self) -> list[str]:
        manifest = self.directory / MANIFEST_NAME
        if not manifest.exists():
            return []
        return [line for line in manifest.read_text(encoding="utf-8").splitlines() if line]


def _now_iso() -> str:
    import datetime

    return datetime.datetime.now(datetime.timezone.utc).isoformat()

"""SQLite-backed key/value cache for embeddings and remote responses."""

import hashlib
import json
import logging
import re
import sqlite3
import threading
from pathlib import Path
from typing import Any, Optional

from .metrics import cache_lookups_total

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

SCHEMA = """
CREATE TABLE IF NOT EXISTS entries (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS schema_version (
    version INTEGER PRIMARY KEY
);
"""


def digest(*parts: str) -> str:
    """Stable SHA-256 digest of a sequence of strings."""
    h = hashlib.sha256()
    for part in parts:
        h.update(part.encode("utf-8"))
        h.update(b"\x1f")
    return h.hexdigest()


def cache_path(cache_dir: Path, namespace: str) -> Path:
    """One cache file per namespace (provider id or remote model)."""
    safe = re.sub(r"[^A-Za-z0-9._-]+", "_", namespace).strip("_")[:64] or "cache"
    return Path(cache_dir) / f"{safe}-{digest(namespace)[:8]}.sqlite"


def get_schema_version(conn: sqlite3.Connection) -> int:
    """Get current schema version."""
    try:
        row = conn.execute("SELECT version FROM schema_version").fetchone()
        return row[0] if row else 0
    except sqlite3.OperationalError:
        return 0


class DiskCache:
    """
    Persistent JSON-valued cache in one SQLite file.

    WAL mode lets readers proceed while a write is in progress; writes are
    serialized by a lock.
    """

    def __init__(self, path: Path, name: str = "disk"):
        self.path = Path(path)
        self.name = name
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()

        self.conn = sqlite3.connect(str(self.path), check_same_thread=False)
        self.conn.execute("PRAGMA journal_mode=WAL")

        if get_schema_version(self.conn) == 0:
            self.conn.executescript(SCHEMA)
            self.conn.execute(
                "INSERT OR REPLACE INTO schema_version (version) VALUES (?)", (SCHEMA_VERSION,)
            )
            self.conn.commit()

        logger.debug(f"Cache '{name}' opened at {self.path}")

    @classmethod
    def for_namespace(cls, cache_dir: Path, namespace: str) -> "DiskCache":
        return cls(cache_path(cache_dir, namespace), name=namespace)

    def get(self, key: str) -> Optional[Any]:
        row = self.conn.execute("SELECT value FROM entries WHERE key = ?", (key,)).fetchone()
        if row is None:
            cache_lookups_total.labels(cache=self.name, result="miss").inc()
            return None
        cache_lookups_total.labels(cache=self.name, result="hit").inc()
        return json.loads(row[0])

    def set(self, key: str, value: Any) -> None:
        encoded = json.dumps(value, separators=(",", ":"))
        with self._write_lock:
            self.conn.execute(
                "INSERT OR REPLACE INTO entries (key, value) VALUES (?, ?)", (key, encoded)
            )
            self.conn.commit()

    def __len__(self) -> int:
        return self.conn.execute("SELECT COUNT(*) FROM entries").fetchone()[0]

    def close(self) -> None:
        """Close database connection."""
        if self.conn:
            self.conn.close()
            self.conn = None

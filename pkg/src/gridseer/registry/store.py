"""On-disk registry store: content-addressed blobs plus an append-only index.

Layout under the store root::

    blobs/<bundle_id>.mdl   bundle bytes, written to a temp file then renamed
    index.jsonl             one JSON entry per line, appended after the blob

A blob becomes visible only once its index line is complete, and entries
whose blob is missing or fails verification are skipped when loading, so an
interrupted publish never yields a listable entry that cannot be fetched.
"""

from __future__ import annotations

import errno
import json
import logging
import os
import re
import struct
import tempfile
import threading
from dataclasses import asdict, dataclass
from pathlib import Path

from ..bundle import HEADER_SIZE, bundle_digest, unpack
from ..errors import GridseerError, InvalidBundle, NotFound, StorageFull

log = logging.getLogger(__name__)

ID_RE = re.compile(r"^[0-9a-f]{64}$")


@dataclass(frozen=True)
class RegistryEntry:
    bundle_id: str
    question: str
    publisher: str
    created_at: str
    size_bytes: int
    version: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> RegistryEntry:
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})

    @property
    def sort_key(self) -> tuple:
        return (self.question, self.publisher, self.version)


class RegistryStore:
    def __init__(self, root: str | Path, max_bytes: int | None = None):
        self.root = Path(root)
        self.blobs = self.root / "blobs"
        self.index = self.root / "index.jsonl"
        self.max_bytes = max_bytes
        self.blobs.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._entries: dict[str, RegistryEntry] = {}
        self._load()

    def _blob_path(self, bundle_id: str) -> Path:
        if not ID_RE.match(bundle_id):
            raise NotFound(f"not a bundle id: {bundle_id!r}")
        return self.blobs / f"{bundle_id}.mdl"

    def _load(self) -> None:
        if not self.index.exists():
            return
        with open(self.index, "rb") as fh:
            lines = fh.read().split(b"\n")
        for line in lines:
            if not line.strip():
                continue
            try:
                entry = RegistryEntry.from_dict(json.loads(line))
            except (ValueError, KeyError, TypeError):
                log.warning("skipping unreadable index line")
                continue
            path = self.blobs / f"{entry.bundle_id}.mdl"
            try:
                ok = bundle_digest(path.read_bytes()) == entry.bundle_id
            except OSError:
                ok = False
            if ok:
                self._entries.setdefault(entry.bundle_id, entry)
            else:
                log.warning("index entry %s has no valid blob; skipped", entry.bundle_id)

    @property
    def used_bytes(self) -> int:
        return sum(e.size_bytes for e in self._entries.values())

    def publish(self, blob: bytes) -> tuple[RegistryEntry, bool]:
        """Store a bundle; returns ``(entry, created)``. Identical bytes are a no-op."""
        try:
            bundle = unpack(blob)
        except GridseerError as exc:
            raise InvalidBundle(f"{type(exc).__name__}: {exc}") from None
        m = bundle.manifest
        bundle_id = bundle_digest(blob)
        with self._lock:
            if bundle_id in self._entries:
                return self._entries[bundle_id], False
            if self.max_bytes is not None and self.used_bytes + len(blob) > self.max_bytes:
                raise StorageFull(f"store quota of {self.max_bytes} bytes exceeded")
        try:
            self._write_blob(bundle_id, blob)
        except OSError as exc:
            if exc.errno in (errno.ENOSPC, errno.EDQUOT):
                raise StorageFull(str(exc)) from None
            raise
        with self._lock:
            if bundle_id in self._entries:
                return self._entries[bundle_id], False
            version = 1 + sum(
                1 for e in self._entries.values() if e.publisher == m.publisher and e.question == m.question
            )
            entry = RegistryEntry(bundle_id, m.question, m.publisher, m.created_at, len(blob), version)
            line = json.dumps(entry.to_dict(), sort_keys=True).encode() + b"\n"
            try:
                with open(self.index, "ab") as fh:
                    fh.write(line)
                    fh.flush()
                    os.fsync(fh.fileno())
            except OSError as exc:
                if exc.errno in (errno.ENOSPC, errno.EDQUOT):
                    raise StorageFull(str(exc)) from None
                raise
            self._entries[bundle_id] = entry
            return entry, True

    def _write_blob(self, bundle_id: str, blob: bytes) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.blobs, prefix=".incoming-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(blob)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self._blob_path(bundle_id))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def list(self, question: str | None = None) -> list[RegistryEntry]:
        with self._lock:
            entries = list(self._entries.values())
        if question is not None:
            entries = [e for e in entries if e.question == question]
        return sorted(entries, key=lambda e: e.sort_key)

    def fetch(self, bundle_id: str) -> bytes:
        if bundle_id not in self._entries:
            raise NotFound(f"no bundle {bundle_id}")
        return self._blob_path(bundle_id).read_bytes()

    def fetch_manifest(self, bundle_id: str) -> bytes:
        """Raw manifest JSON, read without loading the parameter block."""
        if bundle_id not in self._entries:
            raise NotFound(f"no bundle {bundle_id}")
        with open(self._blob_path(bundle_id), "rb") as fh:
            header = fh.read(HEADER_SIZE)
            (length,) = struct.unpack("<I", header[12:16])
            return fh.read(length)

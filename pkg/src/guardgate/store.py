"""File-backed artifact store with checksummed manifest and atomic writes.

Layout under the root: one subdirectory per artifact kind (corpus, indexes,
policies, lexicons, rulepacks) plus ``manifest.json`` recording the format
version and a sha256 per artifact.  Writes go to a temp file in the target
directory and are renamed into place, manifest last, so a reader never sees
a torn artifact: until the manifest update lands, the old bytes stay
authoritative.  Writers serialize on an advisory file lock; readers don't
lock.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from pathlib import Path

from filelock import FileLock

from .errors import StoreError

FORMAT_VERSION = 1
ARTIFACT_KINDS = ("corpus", "indexes", "policies", "lexicons", "rulepacks")

_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


def _check_kind(kind: str) -> None:
    if kind not in ARTIFACT_KINDS:
        raise ValueError(f"unknown artifact kind {kind!r}; one of {ARTIFACT_KINDS}")


def _check_id(artifact_id: str) -> None:
    if not _ID_RE.match(artifact_id):
        raise ValueError(f"bad artifact id {artifact_id!r}")


class DataStore:
    """Open (creating if fresh) a store rooted at ``root``."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._manifest_path = self.root / "manifest.json"
        self._lock = FileLock(str(self.root / "store.lock"))
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            for kind in ARTIFACT_KINDS:
                (self.root / kind).mkdir(exist_ok=True)
            if not self._manifest_path.exists():
                with self._lock:
                    if not self._manifest_path.exists():
                        self._write_manifest(
                            {"format_version": FORMAT_VERSION, "artifacts": {}})
        except OSError as exc:
            raise StoreError("IO_FAILURE", f"cannot initialize store: {exc}") from exc
        self._read_manifest()  # validates version eagerly

    # -- manifest -------------------------------------------------------------

    def _read_manifest(self) -> dict:
        try:
            manifest = json.loads(self._manifest_path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise StoreError("IO_FAILURE", f"cannot read manifest: {exc}") from exc
        except ValueError as exc:
            raise StoreError(
                "IO_FAILURE", f"manifest is not valid JSON: {exc}") from exc
        version = manifest.get("format_version")
        if version != FORMAT_VERSION:
            raise StoreError(
                "VERSION_MISMATCH",
                f"store format {version!r} unsupported (expected {FORMAT_VERSION})")
        return manifest

    def _write_manifest(self, manifest: dict) -> None:
        self._atomic_write(
            self._manifest_path,
            json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8"))

    def _atomic_write(self, dest: Path, data: bytes) -> None:
        fd, tmp = tempfile.mkstemp(dir=dest.parent, prefix=dest.name + ".")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, dest)
        except OSError as exc:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise StoreError("IO_FAILURE", f"cannot write {dest.name}: {exc}") from exc

    # -- operations -------------------------------------------------------------

    def put(self, kind: str, artifact_id: str, data: bytes) -> None:
        """Store bytes under an id, atomically replacing any previous value."""
        _check_kind(kind)
        _check_id(artifact_id)
        key = f"{kind}/{artifact_id}"
        with self._lock:
            manifest = self._read_manifest()
            self._atomic_write(self.root / kind / artifact_id, data)
            manifest["artifacts"][key] = {
                "sha256": hashlib.sha256(data).hexdigest(),
                "size": len(data),
            }
            self._write_manifest(manifest)

    def get(self, kind: str, artifact_id: str) -> bytes:
        """Fetch bytes; NOT_FOUND for unknown ids, CHECKSUM_MISMATCH when the
        file on disk does not match the manifest."""
        _check_kind(kind)
        _check_id(artifact_id)
        key = f"{kind}/{artifact_id}"
        manifest = self._read_manifest()
        entry = manifest["artifacts"].get(key)
        if entry is None:
            raise StoreError("NOT_FOUND", f"no artifact {key}")
        try:
            data = (self.root / kind / artifact_id).read_bytes()
        except FileNotFoundError:
            raise StoreError("NOT_FOUND", f"artifact {key} missing on disk") from None
        except OSError as exc:
            raise StoreError("IO_FAILURE", f"cannot read {key}: {exc}") from exc
        digest = hashlib.sha256(data).hexdigest()
        if digest != entry["sha256"]:
            raise StoreError(
                "CHECKSUM_MISMATCH",
                f"artifact {key} is corrupt: sha256 {digest} != manifest "
                f"{entry['sha256']}")
        return data

    def list(self, kind: str) -> list[str]:
        _check_kind(kind)
        manifest = self._read_manifest()
        prefix = f"{kind}/"
        return sorted(key[len(prefix):] for key in manifest["artifacts"]
                      if key.startswith(prefix))

    def delete(self, kind: str, artifact_id: str) -> None:
        _check_kind(kind)
        _check_id(artifact_id)
        key = f"{kind}/{artifact_id}"
        with self._lock:
            manifest = self._read_manifest()
            if key not in manifest["artifacts"]:
                raise StoreError("NOT_FOUND", f"no artifact {key}")
            del manifest["artifacts"][key]
            self._write_manifest(manifest)
            try:
                (self.root / kind / artifact_id).unlink()
            except FileNotFoundError:
                pass
            except OSError as exc:
                raise StoreError("IO_FAILURE", f"cannot delete {key}: {exc}") from exc

    def __contains__(self, key: tuple[str, str]) -> bool:
        kind, artifact_id = key
        _check_kind(kind)
        manifest = self._read_manifest()
        return f"{kind}/{artifact_id}" in manifest["artifacts"]

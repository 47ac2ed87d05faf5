"""Single-file bottleneck store keyed by (image hash, extractor digest).

Binary layout, little-endian:

    magic "BNKF" | u32 version=1 | u32 dim | u32 count
    per record:  u16 key length | key bytes (utf-8) | dim * float32

Keys are ``<image sha256 hex>:<extractor weights_digest hex>``. A key, once
written, is immutable. An entry becomes visible only when the header count
includes it, so a torn write shows up as trailing garbage and is rejected on
open.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import VARIANT_ORIGINAL, DatasetManifest
from .errors import CacheError
from .image import Image, file_sha256

logger = logging.getLogger(__name__)

__all__ = [
    "BottleneckCache",
    "cache_key",
    "store_dim",
    "lookup_or_compute",
    "import_bottlenecks",
    "ImportResult",
]

MAGIC = b"BNKF"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII")
_KEYLEN = struct.Struct("<H")

_REBUILD_HINT = "delete the cache file and rerun the extract stage to rebuild it"


class BottleneckCache:
    """Read/write view over one store file; one fixed vector dim per file."""

    def __init__(self, path: Path, dim: int | None = None) -> None:
        self.path = Path(path)
        self._entries: dict[str, np.ndarray] = {}
        self.hits = 0
        self.misses = 0
        if self.path.exists():
            self._load()
            if dim is not None and dim != self.dim:
                raise CacheError(
                    f"cache {self.path} stores dim {self.dim}, requested {dim}; {_REBUILD_HINT}"
                )
        else:
            if dim is None:
                raise CacheError(f"creating cache {self.path} requires an explicit dim")
            if dim < 1:
                raise CacheError(f"cache dim must be >= 1, got {dim}")
            self.dim = dim
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "wb") as fh:
                fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, dim, 0))

    def _corrupt(self, detail: str) -> CacheError:
        return CacheError(f"corrupt cache file {self.path}: {detail}; {_REBUILD_HINT}")

    def _load(self) -> None:
        blob = self.path.read_bytes()
        try:
            dim, count, entries = _parse_store(blob)
        except _StoreFormatError as exc:
            raise self._corrupt(str(exc)) from exc
        self.dim = dim
        self._entries = entries
        if len(entries) != count:
            raise self._corrupt(f"duplicate keys (header count {count}, unique {len(entries)})")

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def keys(self):
        return self._entries.keys()

    def get(self, key: str) -> np.ndarray | None:
        vec = self._entries.get(key)
        return None if vec is None else vec.copy()

    def put(self, key: str, vector: np.ndarray) -> None:
        if key in self._entries:
            raise CacheError(f"cache key already written (keys are immutable): {key}")
        vec = np.asarray(vector, dtype="<f4")
        if vec.shape != (self.dim,):
            raise CacheError(f"vector shape {vec.shape} does not match cache dim {self.dim}")
        if not np.all(np.isfinite(vec)):
            raise CacheError(f"refusing to store non-finite vector under {key}")
        payload = key.encode("utf-8")
        record = _KEYLEN.pack(len(payload)) + payload + vec.tobytes()
        with open(self.path, "r+b") as fh:
            fh.seek(0, 2)
            fh.write(record)
            fh.flush()
            fh.seek(_HEADER.size - 4)
            fh.write(struct.pack("<I", len(self._entries) + 1))
            fh.flush()
        self._entries[key] = vec


class _StoreFormatError(Exception):
    pass


def _parse_store(blob: bytes) -> tuple[int, int, dict[str, np.ndarray]]:
    if len(blob) < _HEADER.size:
        raise _StoreFormatError("file shorter than header")
    magic, version, dim, count = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise _StoreFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise _StoreFormatError(f"unsupported format version {version}")
    if dim < 1:
        raise _StoreFormatError(f"invalid dim {dim}")
    entries: dict[str, np.ndarray] = {}
    offset = _HEADER.size
    vec_bytes = 4 * dim
    for i in range(count):
        if offset + _KEYLEN.size > len(blob):
            raise _StoreFormatError(f"truncated at record {i} (key length)")
        (key_len,) = _KEYLEN.unpack_from(blob, offset)
        offset += _KEYLEN.size
        if offset + key_len + vec_bytes > len(blob):
            raise _StoreFormatError(f"truncated at record {i} (payload)")
        key = blob[offset : offset + key_len].decode("utf-8")
        offset += key_len
        vec = np.frombuffer(blob[offset : offset + vec_bytes], dtype="<f4").copy()
        offset += vec_bytes
        entries[key] = vec
    if offset != len(blob):
        raise _StoreFormatError(f"{len(blob) - offset} trailing bytes after last record")
    return dim, count, entries


def cache_key(image_hash: str, weights_digest: str) -> str:
    return f"{image_hash}:{weights_digest}"


def store_dim(file: Path) -> int:
    """Vector dim declared in a store file's header (no record parsing)."""
    file = Path(file)
    blob = file.read_bytes()[: _HEADER.size]
    if len(blob) < _HEADER.size:
        raise CacheError(f"bottleneck file shorter than header: {file}")
    magic, version, dim, _ = _HEADER.unpack(blob)
    if magic != MAGIC or version != FORMAT_VERSION or dim < 1:
        raise CacheError(f"not a valid bottleneck store: {file}")
    return dim


def lookup_or_compute(cache: BottleneckCache, img: Image, extractor) -> np.ndarray:
    """Serve the cached vector when present, else compute, store and return.

    A hit never invokes the extractor (observable through its invocation
    counter); a miss stores the freshly computed vector before returning it.
    """
    key = cache_key(img.content_hash(), extractor.identity.weights_digest)
    cached = cache.get(key)
    if cached is not None:
        cache.hits += 1
        return cached
    cache.misses += 1
    vector = np.asarray(extractor.extract(img), dtype=np.float32)
    cache.put(key, vector)
    return vector


@dataclass
class ImportResult:
    inserted: int = 0
    skipped_unknown: list[str] = field(default_factory=list)
    digests: set[str] = field(default_factory=set)


def _manifest_image_hashes(manifest: DatasetManifest) -> set[str]:
    hashes: set[str] = set()
    for rec in manifest.records:
        if rec.variant == VARIANT_ORIGINAL:
            hashes.add(rec.core_id)  # core_id is the hash of the original file bytes
        path = Path(rec.path)
        if path.is_file():
            hashes.add(file_sha256(path))
    return hashes


def import_bottlenecks(
    file: Path, manifest: DatasetManifest, cache: BottleneckCache
) -> ImportResult:
    """Load externally computed bottleneck vectors into the cache.

    The whole file is parsed and validated before anything is inserted, so a
    malformed file never leaves partial entries behind. Records referencing
    images absent from the manifest are skipped with a warning.
    """
    file = Path(file)
    if not file.is_file():
        raise CacheError(f"bottleneck import file not found: {file}")
    try:
        dim, _, entries = _parse_store(file.read_bytes())
    except _StoreFormatError as exc:
        raise CacheError(f"malformed bottleneck file {file}: {exc}") from exc
    if dim != cache.dim:
        raise CacheError(
            f"bottleneck file dim {dim} does not match cache dim {cache.dim}"
        )

    known = _manifest_image_hashes(manifest)
    result = ImportResult()
    for key, vec in entries.items():
        image_hash, sep, digest = key.partition(":")
        if not sep or not digest:
            raise CacheError(f"malformed key in {file}: {key!r}")
        if image_hash not in known:
            logger.warning("import: unknown image reference %s, skipping", image_hash[:12])
            result.skipped_unknown.append(key)
            continue
        if key not in cache:
            cache.put(key, vec)
            result.inserted += 1
        result.digests.add(digest)
    return result

"""File chunking and content-addressed Merkle trees.

A file is cut into fixed-size chunks (4096 bytes by default, no padding of
the final chunk). Every chunk is identified by the SHA-256 digest of its
payload. Chunks are linked into a tree: an internal chunk's payload is the
concatenation of its children's 32-byte addresses, so an internal chunk can
reference at most chunk_size / 32 children. Knowing the root address plus
the file size is enough to fetch and rebuild the whole file.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Optional

from .errors import MalformedChunkError, MissingChunkError

ADDRESS_SIZE = 32

Address = bytes
FetchFn = Callable[[Address], Optional[bytes]]


def content_address(payload: bytes) -> Address:
    """Return the 32-byte content address (SHA-256 digest) of a payload."""
    return hashlib.sha256(payload).digest()


@dataclass(frozen=True)
class ChunkParams:
    """Chunking geometry: chunk size in bytes and tree branching factor."""

    chunk_size: int = 4096
    branching: int = 128

    def __post_init__(self) -> None:
        if self.chunk_size <= 0:
            raise ValueError("chunk_size must be positive")
        if self.branching < 2:
            raise ValueError("branching must be at least 2")
        if self.branching * ADDRESS_SIZE > self.chunk_size:
            raise ValueError(
                "branching * 32 exceeds chunk_size; an internal chunk could "
                "not hold that many child addresses"
            )


@dataclass
class FileManifest:
    """Merkle tree layout of one file.

    levels holds the per-level address lists, leaves first; the last level
    contains exactly the root. The file size is recorded here because chunk
    payloads carry no padding or length metadata.
    """

    root: Address
    levels: list[list[Address]]
    file_size: int
    params: ChunkParams


def split_file(data: bytes, params: ChunkParams = ChunkParams()) -> list[bytes]:
    """Split raw bytes into leaf payloads of at most chunk_size bytes."""
    if len(data) == 0:
        raise ValueError("empty file")
    cs = params.chunk_size
    return [bytes(data[i : i + cs]) for i in range(0, len(data), cs)]


def tree_shape(file_size: int, params: ChunkParams = ChunkParams()) -> list[int]:
    """Per-level chunk counts, leaves first, via repeated ceiling division."""
    if file_size < 1:
        raise ValueError("file size must be at least 1 byte")
    shape = [-(-file_size // params.chunk_size)]
    while shape[-1] > 1:
        shape.append(-(-shape[-1] // params.branching))
    return shape


def build_tree(
    leaves: list[bytes], params: ChunkParams = ChunkParams()
) -> tuple[FileManifest, dict[Address, bytes]]:
    """Build the Merkle tree over leaf payloads.

    Returns the manifest and a mapping of every chunk (leaves and internals)
    by content address. Chunks with identical payloads share one address and
    one map entry.
    """
    if not leaves:
        raise ValueError("at least one leaf is required")
    for payload in leaves:
        if len(payload) == 0:
            raise ValueError("leaf payloads must be non-empty")
        if len(payload) > params.chunk_size:
            raise ValueError("leaf payload exceeds chunk_size")

    chunks: dict[Address, bytes] = {}
    current: list[Address] = []
    for payload in leaves:
        addr = content_address(payload)
        chunks[addr] = payload
        current.append(addr)

    levels = [current]
    b = params.branching
    while len(current) > 1:
        parents: list[Address] = []
        for i in range(0, len(current), b):
            payload = b"".join(current[i : i + b])
            addr = content_address(payload)
            chunks[addr] = payload
            parents.append(addr)
        levels.append(parents)
        current = parents

    manifest = FileManifest(
        root=current[0],
        levels=levels,
        file_size=sum(len(p) for p in leaves),
        params=params,
    )
    return manifest, chunks


def reassemble(
    root: Address, fetch: FetchFn, params: ChunkParams, file_size: int
) -> bytes:
    """Rebuild a file by walking the tree depth-first, children left to right.

    fetch maps an address to a payload or None. The file size determines the
    tree depth (payloads carry no level marker). Raises MissingChunkError
    naming the first unresolvable address, MalformedChunkError on an internal
    payload whose length is not a positive multiple of 32.
    """
    depth = len(tree_shape(file_size, params))
    parts: list[bytes] = []

    def walk(addr: Address, level: int) -> None:
        payload = fetch(addr)
        if payload is None:
            raise MissingChunkError(addr)
        if level == 0:
            parts.append(payload)
            return
        if len(payload) == 0 or len(payload) % ADDRESS_SIZE != 0:
            raise MalformedChunkError(
                f"internal chunk {addr.hex()} has payload length "
                f"{len(payload)}, not a positive multiple of {ADDRESS_SIZE}"
            )
        for i in range(0, len(payload), ADDRESS_SIZE):
            walk(payload[i : i + ADDRESS_SIZE], level - 1)

    walk(root, depth - 1)
    data = b"".join(parts)
    if len(data) != file_size:
        raise MalformedChunkError(
            f"reassembled {len(data)} bytes, expected {file_size}"
        )
    return data


def level_payload_lengths(manifest: FileManifest) -> list[list[int]]:
    """Payload length of every chunk, per level, derived from the geometry.

    Leaves are chunk_size long except the last one; an internal chunk is 32
    bytes per child. Needed to decode coding groups, which store no lengths.
    """
    cs = manifest.params.chunk_size
    b = manifest.params.branching
    shape = [len(level) for level in manifest.levels]
    leaf_count = shape[0]
    last_leaf = manifest.file_size - (leaf_count - 1) * cs
    if not 0 < last_leaf <= cs:
        raise ValueError("file size inconsistent with leaf count")
    lengths = [[cs] * (leaf_count - 1) + [last_leaf]]
    for li in range(1, len(shape)):
        below, count = shape[li - 1], shape[li]
        row = []
        for j in range(count):
            children = b if j < count - 1 else below - (count - 1) * b
            row.append(children * ADDRESS_SIZE)
        lengths.append(row)
    return lengths


def manifest_to_text(manifest: FileManifest) -> str:
    """Serialize a manifest: filesize and branching lines, then one line of
    space-separated lowercase hex addresses per level, leaves first."""
    lines = [
        f"filesize={manifest.file_size}",
        f"branching={manifest.params.branching}",
    ]
    for level in manifest.levels:
        lines.append(" ".join(a.hex() for a in level))
    return "\n".join(lines) + "\n"


def manifest_from_text(text: str) -> FileManifest:
    """Parse the manifest text format. The chunk size is fixed at 4096 by
    the format; use in-memory manifests for other geometries."""
    keys, levels, groups = split_manifest_lines(text)
    if groups:
        raise ValueError("manifest contains coding groups; parse it as encoded")
    if "filesize" not in keys or "branching" not in keys:
        raise ValueError("manifest must declare filesize and branching")
    params = ChunkParams(branching=int(keys["branching"]))
    file_size = int(keys["filesize"])
    _check_levels(levels, file_size, params)
    return FileManifest(
        root=levels[-1][0], levels=levels, file_size=file_size, params=params
    )


def split_manifest_lines(
    text: str,
) -> tuple[dict[str, str], list[list[Address]], list[str]]:
    """Split manifest text into key=value pairs, address levels, and raw
    coding-group lines (present only in the encoded variant)."""
    keys: dict[str, str] = {}
    levels: list[list[Address]] = []
    groups: list[str] = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("group "):
            groups.append(line)
        elif "=" in line:
            key, _, value = line.partition("=")
            if " " in line:
                raise ValueError(f"malformed manifest line: {line!r}")
            keys[key] = value
        else:
            addrs = [parse_address(tok) for tok in line.split()]
            levels.append(addrs)
    if not levels:
        raise ValueError("manifest has no address levels")
    return keys, levels, groups


def parse_address(token: str) -> Address:
    if len(token) != 2 * ADDRESS_SIZE:
        raise ValueError(f"bad address {token!r}: expected 64 hex characters")
    return bytes.fromhex(token)


def _check_levels(
    levels: list[list[Address]], file_size: int, params: ChunkParams
) -> None:
    expected = tree_shape(file_size, params)
    got = [len(level) for level in levels]
    if got != expected:
        raise ValueError(f"level sizes {got} do not match geometry {expected}")

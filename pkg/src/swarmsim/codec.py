"""Systematic Reed-Solomon erasure coding over GF(2^8), applied per tree level.

The code is built from a Vandermonde matrix brought to systematic form, so
the first k symbols of a codeword are the data payloads themselves and any k
of the n symbols reconstruct the group. Coding is applied to every non-root
level of a chunk tree: coding only the leaves would leave internal chunks as
single points of failure, since losing one internal chunk severs the
addresses of all chunks below it. The root is left uncoded; the network
layer replicates it like any other chunk.

A short final group with k' < k data chunks is coded as a (k', k' + (n - k))
code, keeping the parity count uniform across groups.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .chunker import (
    Address,
    ChunkParams,
    FileManifest,
    content_address,
    level_payload_lengths,
    manifest_from_text,
    manifest_to_text,
    parse_address,
    reassemble,
    split_manifest_lines,
    tree_shape,
)
from .errors import DecodingError, UnrecoverableGroupError

# GF(2^8) with the primitive polynomial x^8 + x^4 + x^3 + x^2 + 1 (0x11d)
# and generator 2. Exp table doubled so products of two logs need no modulo.
_PRIMITIVE_POLY = 0x11D

_GF_EXP = np.zeros(512, dtype=np.uint8)
_GF_LOG = np.zeros(256, dtype=np.int64)
_x = 1
for _i in range(255):
    _GF_EXP[_i] = _x
    _GF_LOG[_x] = _i
    _x <<= 1
    if _x & 0x100:
        _x ^= _PRIMITIVE_POLY
for _i in range(255, 512):
    _GF_EXP[_i] = _GF_EXP[_i - 255]

# full 256x256 product table; row c maps a byte array to c * array
_MUL = np.zeros((256, 256), dtype=np.uint8)
for _a in range(1, 256):
    _MUL[_a, 1:] = _GF_EXP[_GF_LOG[_a] + _GF_LOG[1:256]]


def gf_mul(a: int, b: int) -> int:
    return int(_MUL[a, b])


def gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(256)")
    return int(_GF_EXP[255 - int(_GF_LOG[a])])


def gf_pow(a: int, e: int) -> int:
    if e == 0:
        return 1
    if a == 0:
        return 0
    return int(_GF_EXP[(int(_GF_LOG[a]) * e) % 255])


def _mat_mul(a: list[list[int]], b: list[list[int]]) -> list[list[int]]:
    rows, inner, cols = len(a), len(b), len(b[0])
    out = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):
            acc = 0
            for t in range(inner):
                acc ^= gf_mul(a[i][t], b[t][j])
            out[i][j] = acc
    return out


def _mat_inv(m: list[list[int]]) -> list[list[int]]:
    """Gauss-Jordan inversion over GF(256). Exact; raises on singular input."""
    size = len(m)
    aug = [row[:] + [1 if i == j else 0 for j in range(size)] for i, row in enumerate(m)]
    for col in range(size):
        pivot = next((r for r in range(col, size) if aug[r][col]), None)
        if pivot is None:
            raise ValueError("matrix is singular")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv_p = gf_inv(aug[col][col])
        aug[col] = [gf_mul(v, inv_p) for v in aug[col]]
        for r in range(size):
            if r != col and aug[r][col]:
                factor = aug[r][col]
                aug[r] = [v ^ gf_mul(factor, p) for v, p in zip(aug[r], aug[col])]
    return [row[size:] for row in aug]


@dataclass(frozen=True)
class CodingParams:
    """k data symbols out of n total per group; n - k parity symbols."""

    k: int
    n: int

    def __post_init__(self) -> None:
        if not 1 <= self.k <= self.n <= 256:
            raise ValueError("coding requires 1 <= k <= n <= 256")


_GENERATORS: dict[tuple[int, int], list[list[int]]] = {}


def _generator(k: int, n: int) -> list[list[int]]:
    """n x k systematic generator: Vandermonde rows times the inverse of the
    top k x k block. Any k rows are invertible, and the top k rows are the
    identity."""
    cached = _GENERATORS.get((k, n))
    if cached is not None:
        return cached
    vander = [[gf_pow(x, j) for j in range(k)] for x in range(n)]
    top_inv = _mat_inv([row[:] for row in vander[:k]])
    gen = _mat_mul(vander, top_inv)
    _GENERATORS[(k, n)] = gen
    return gen


def _as_padded_array(payload: bytes, length: int) -> np.ndarray:
    if len(payload) > length:
        raise ValueError("payload longer than coding length")
    if len(payload) < length:
        payload = payload + b"\0" * (length - len(payload))
    return np.frombuffer(payload, dtype=np.uint8)


def rs_encode(data: list[bytes], params: CodingParams) -> list[bytes]:
    """Compute the n - k parity payloads for up to k data payloads.

    Shorter payloads are zero-padded to the longest one internally; parity
    payloads come out at that padded length. A group with fewer than k data
    payloads is coded as (k', k' + (n - k)).
    """
    if not data:
        raise ValueError("no data payloads to encode")
    if len(data) > params.k:
        raise ValueError(f"group has {len(data)} payloads, limit is {params.k}")
    parity_count = params.n - params.k
    if parity_count == 0:
        return []
    kk = len(data)
    gen = _generator(kk, kk + parity_count)
    length = max(len(p) for p in data)
    arrays = [_as_padded_array(p, length) for p in data]
    parities = []
    for r in range(kk, kk + parity_count):
        acc = np.zeros(length, dtype=np.uint8)
        for j in range(kk):
            coeff = gen[r][j]
            if coeff:
                acc ^= _MUL[coeff][arrays[j]]
        parities.append(acc.tobytes())
    return parities


def rs_decode(
    present: list[tuple[int, bytes]], params: CodingParams, lengths: list[int]
) -> list[bytes]:
    """Reconstruct the k' data payloads of a group from any k' symbols.

    present holds (symbol index, payload) pairs; indices 0..k'-1 are data in
    group order, k' and up are parity. lengths gives the original data
    payload lengths (so k' = len(lengths)). If all data symbols are present
    they are returned as-is, without field arithmetic.
    """
    kk = len(lengths)
    if not 1 <= kk <= params.k:
        raise ValueError("lengths must cover 1..k data payloads")
    if any(n < 0 for n in lengths):
        raise ValueError("payload lengths must be non-negative")
    nn = kk + (params.n - params.k)
    symbols: dict[int, bytes] = {}
    for idx, payload in present:
        if not 0 <= idx < nn:
            raise ValueError(f"symbol index {idx} out of range for group of {nn}")
        if idx in symbols:
            raise ValueError(f"duplicate symbol index {idx}")
        symbols[idx] = payload
    if len(symbols) < kk:
        raise DecodingError(f"cannot decode group: need {kk}, have {len(symbols)}")

    if all(i in symbols for i in range(kk)):
        return [symbols[i][: lengths[i]] for i in range(kk)]

    length = max(lengths)
    gen = _generator(kk, nn)
    chosen = sorted(symbols)[:kk]
    matrix = [gen[i][:] for i in chosen]
    inverse = _mat_inv(matrix)
    arrays = [_as_padded_array(symbols[i], length) for i in chosen]
    out = []
    for j in range(kk):
        acc = np.zeros(length, dtype=np.uint8)
        for t in range(kk):
            coeff = inverse[j][t]
            if coeff:
                acc ^= _MUL[coeff][arrays[t]]
        out.append(acc.tobytes()[: lengths[j]])
    return out


@dataclass
class CodingGroup:
    """One erasure-coding group: consecutive data chunks of a tree level plus
    their parity chunk addresses."""

    level: int
    data_addresses: list[Address]
    parity_addresses: list[Address]


@dataclass
class EncodedManifest:
    """A file manifest plus the coding groups laid over its tree levels."""

    base: FileManifest
    params: CodingParams
    groups: list[CodingGroup]


def encode_tree(
    manifest: FileManifest, chunks: dict[Address, bytes], params: CodingParams
) -> tuple[EncodedManifest, dict[Address, bytes]]:
    """Partition every non-root level left-to-right into groups of at most k
    chunks and compute parity for each group.

    Returns the encoded manifest and the parity chunks by content address.
    A single-chunk file has no non-root level and gets no groups.
    """
    groups: list[CodingGroup] = []
    parity_chunks: dict[Address, bytes] = {}
    for level_index, level in enumerate(manifest.levels[:-1]):
        for start in range(0, len(level), params.k):
            data_addrs = list(level[start : start + params.k])
            payloads = [chunks[a] for a in data_addrs]
            parity_payloads = rs_encode(payloads, params)
            parity_addrs = []
            for payload in parity_payloads:
                addr = content_address(payload)
                parity_chunks[addr] = payload
                parity_addrs.append(addr)
            groups.append(CodingGroup(level_index, data_addrs, parity_addrs))
    return EncodedManifest(manifest, params, groups), parity_chunks


def group_data_lengths(encoded: EncodedManifest) -> list[list[int]]:
    """Original payload lengths of each group's data chunks, in group order,
    derived from the tree geometry."""
    per_level = level_payload_lengths(encoded.base)
    out = []
    cursor = {li: 0 for li in range(len(encoded.base.levels))}
    for group in encoded.groups:
        start = cursor[group.level]
        stop = start + len(group.data_addresses)
        out.append(per_level[group.level][start:stop])
        cursor[group.level] = stop
    return out


def repair_retrieve(
    root: Address,
    fetch: Callable[[Address], Optional[bytes]],
    encoded: EncodedManifest,
    on_group_repaired: Callable[[CodingGroup], None] | None = None,
) -> bytes:
    """Rebuild a file, decoding coding groups for any chunks fetch cannot
    resolve.

    Reconstructed payloads are checked against their recorded addresses.
    With nothing missing this behaves exactly like plain reassembly. Raises
    UnrecoverableGroupError when a group has fewer than k' reachable
    symbols, MissingChunkError for an unresolvable ungrouped chunk (the
    root).
    """
    lengths = group_data_lengths(encoded)
    member_of: dict[Address, int] = {}
    for gi, group in enumerate(encoded.groups):
        for addr in group.data_addresses + group.parity_addresses:
            member_of.setdefault(addr, gi)

    memo: dict[Address, bytes] = {}
    misses: set[Address] = set()

    def lookup(addr: Address) -> Optional[bytes]:
        if addr in memo:
            return memo[addr]
        if addr in misses:
            return None
        payload = fetch(addr)
        if payload is None:
            misses.add(addr)
        else:
            memo[addr] = payload
        return payload

    def repair(gi: int) -> None:
        group = encoded.groups[gi]
        kk = len(lengths[gi])
        members = group.data_addresses + group.parity_addresses
        present: list[tuple[int, bytes]] = []
        for pos, addr in enumerate(members):
            payload = lookup(addr)
            if payload is not None:
                present.append((pos, payload))
                if len(present) == kk:
                    break
        if len(present) < kk:
            raise UnrecoverableGroupError(group.level, gi, kk, len(present))
        repaired = rs_decode(present, encoded.params, lengths[gi])
        for addr, payload in zip(group.data_addresses, repaired):
            if content_address(payload) != addr:
                raise DecodingError(
                    f"repaired chunk does not hash to recorded address {addr.hex()}"
                )
            memo[addr] = payload
            misses.discard(addr)
        if on_group_repaired is not None:
            on_group_repaired(group)

    def resolve(addr: Address) -> Optional[bytes]:
        payload = lookup(addr)
        if payload is not None:
            return payload
        gi = member_of.get(addr)
        if gi is None:
            return None
        repair(gi)
        return memo.get(addr)

    return reassemble(root, resolve, encoded.base.params, encoded.base.file_size)


def encoded_manifest_to_text(encoded: EncodedManifest) -> str:
    """Serialize an encoded manifest: the plain format plus k and n lines
    and one group line per coding group."""
    base = encoded.base
    lines = [
        f"filesize={base.file_size}",
        f"branching={base.params.branching}",
        f"k={encoded.params.k}",
        f"n={encoded.params.n}",
    ]
    for level in base.levels:
        lines.append(" ".join(a.hex() for a in level))
    for group in encoded.groups:
        data = " ".join(a.hex() for a in group.data_addresses)
        parity = " ".join(a.hex() for a in group.parity_addresses)
        lines.append(f"group level={group.level} data={data} parity={parity}")
    return "\n".join(lines) + "\n"


def encoded_manifest_from_text(text: str) -> EncodedManifest:
    keys, levels, group_lines = split_manifest_lines(text)
    for required in ("filesize", "branching", "k", "n"):
        if required not in keys:
            raise ValueError(f"encoded manifest must declare {required}")
    params = CodingParams(k=int(keys["k"]), n=int(keys["n"]))
    base = FileManifest(
        root=levels[-1][0],
        levels=levels,
        file_size=int(keys["filesize"]),
        params=ChunkParams(branching=int(keys["branching"])),
    )
    if [len(lv) for lv in levels] != tree_shape(base.file_size, base.params):
        raise ValueError("level sizes do not match geometry")
    groups = [_parse_group_line(line) for line in group_lines]
    _check_groups(base, groups, params)
    return EncodedManifest(base, params, groups)


def _parse_group_line(line: str) -> CodingGroup:
    tokens = line.split()
    if len(tokens) < 3 or tokens[0] != "group" or not tokens[1].startswith("level="):
        raise ValueError(f"malformed group line: {line!r}")
    level = int(tokens[1][len("level=") :])
    data: list[Address] = []
    parity: list[Address] = []
    bucket: list[Address] | None = None
    for token in tokens[2:]:
        if token.startswith("data="):
            bucket = data
            token = token[len("data=") :]
        elif token.startswith("parity="):
            bucket = parity
            token = token[len("parity=") :]
        if bucket is None:
            raise ValueError(f"malformed group line: {line!r}")
        if token:
            bucket.append(parse_address(token))
    if not data:
        raise ValueError(f"group line has no data addresses: {line!r}")
    return CodingGroup(level, data, parity)


def _check_groups(
    base: FileManifest, groups: list[CodingGroup], params: CodingParams
) -> None:
    """Groups must partition every non-root level left to right in k-sized
    runs, with n - k parity addresses each."""
    expected: list[tuple[int, list[Address]]] = []
    for level_index, level in enumerate(base.levels[:-1]):
        for start in range(0, len(level), params.k):
            expected.append((level_index, list(level[start : start + params.k])))
    if len(groups) != len(expected):
        raise ValueError(
            f"expected {len(expected)} coding groups, found {len(groups)}"
        )
    parity_count = params.n - params.k
    for group, (level_index, data) in zip(groups, expected):
        if group.level != level_index or group.data_addresses != data:
            raise ValueError("coding groups do not partition the tree levels")
        if len(group.parity_addresses) != parity_count:
            raise ValueError("coding group has wrong parity count")


def parse_manifest_text(text: str) -> FileManifest | EncodedManifest:
    """Parse either manifest flavor, detecting the encoded one by its k= line."""
    keys, _, _ = split_manifest_lines(text)
    if "k" in keys or "n" in keys:
        return encoded_manifest_from_text(text)
    return manifest_from_text(text)


def manifest_root(manifest: FileManifest | EncodedManifest) -> Address:
    return manifest.root if isinstance(manifest, FileManifest) else manifest.base.root


def manifest_text(manifest: FileManifest | EncodedManifest) -> str:
    if isinstance(manifest, EncodedManifest):
        return encoded_manifest_to_text(manifest)
    return manifest_to_text(manifest)

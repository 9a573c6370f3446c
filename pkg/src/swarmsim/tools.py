"""Storage maintenance tools: enumerate, thin out, merge, apply.

bakedeletion plans which replicas to drop so replication becomes uniform
while honoring four rules relative to the pre-deletion placement:

  A. every peer still holds at least one chunk of every file it held
     chunks of before,
  B. the set of unique chunks is unchanged,
  C. peers only lose chunks, never gain any,
  D. every chunk ends up with exactly target_r replicas.

Plans are deterministic and built in two phases: a cover phase assigns each
(peer, file) obligation a kept chunk via augmenting-path search (exact for
single-file placements), then a fill phase pads every chunk to exactly
target_r keepers on the least-loaded holders. Small instances fall back to
exhaustive search before being declared infeasible.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from math import prod
from typing import Iterable, Sequence

from .chunker import Address, FileManifest, parse_address
from .codec import EncodedManifest
from .errors import (
    InfeasiblePlanError,
    MissingChunkError,
    SyncModeError,
    UnderReplicatedError,
)
from .overlay import PeerId

DeletionEntry = tuple[PeerId, Address]

_EXHAUSTIVE_LIMIT = 250_000


@dataclass
class PlacementMap:
    """Who holds which chunk, plus per-file chunk lists."""

    chunk_to_peers: dict[Address, set[PeerId]]
    files: dict[str, tuple[Address, ...]]

    def restrict(self, file_id: str) -> "PlacementMap":
        """The placement as seen by a single file."""
        addrs = self.files[file_id]
        return PlacementMap(
            chunk_to_peers={a: set(self.chunk_to_peers[a]) for a in addrs},
            files={file_id: addrs},
        )


@dataclass
class DeleteReport:
    applied: int = 0
    missing: int = 0


@dataclass
class RulesReport:
    """Outcome of checking rules A-D against a placement pair."""

    a_ok: bool
    b_ok: bool
    c_ok: bool
    d_ok: bool
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.a_ok and self.b_ok and self.c_ok and self.d_ok


def listchunks(
    manifest: FileManifest | EncodedManifest, fetch=None
) -> list[Address]:
    """Every chunk address of a file, depth-first from the root, each
    address once; parity addresses follow in group order.

    With fetch given, internal chunks are actually read and walked (an
    unreachable chunk raises); without it the walk is derived from the
    manifest levels.
    """
    if isinstance(manifest, EncodedManifest):
        base = manifest.base
        extra = [a for g in manifest.groups for a in g.parity_addresses]
    else:
        base, extra = manifest, []

    order: list[Address] = []
    seen: set[Address] = set()

    def visit(addr: Address) -> None:
        if addr not in seen:
            seen.add(addr)
            order.append(addr)

    if fetch is None:
        levels, b = base.levels, base.params.branching

        def walk(level: int, index: int) -> None:
            visit(levels[level][index])
            if level == 0:
                return
            lo = index * b
            hi = min(lo + b, len(levels[level - 1]))
            for child in range(lo, hi):
                walk(level - 1, child)

        walk(len(levels) - 1, 0)
    else:
        depth = len(base.levels)

        def walk_fetch(addr: Address, level: int) -> None:
            payload = fetch(addr)
            if payload is None:
                raise MissingChunkError(addr)
            visit(addr)
            if level == 0:
                return
            for i in range(0, len(payload), 32):
                walk_fetch(payload[i : i + 32], level - 1)

        walk_fetch(base.root, depth - 1)

    for addr in extra:
        visit(addr)
    return order


def placement_from_network(network, files: dict[str, Sequence[Address]]) -> PlacementMap:
    """Build the placement of the given files from the network's stores.

    Every file address must have at least one holder (failed peers count;
    failure is unreachability, not loss).
    """
    addresses = sorted({a for addrs in files.values() for a in addrs})
    chunk_to_peers: dict[Address, set[PeerId]] = {}
    for addr in addresses:
        holders = {pid for pid in network.peer_ids if addr in network.stores[pid]}
        if not holders:
            raise ValueError(f"chunk {addr.hex()} has no holders")
        chunk_to_peers[addr] = holders
    return PlacementMap(
        chunk_to_peers=chunk_to_peers,
        files={fid: tuple(files[fid]) for fid in sorted(files)},
    )


def holders_map(network, addresses: Iterable[Address]) -> dict[Address, set[PeerId]]:
    """Current holders per address, empty sets included."""
    return {
        addr: {pid for pid in network.peer_ids if addr in network.stores[pid]}
        for addr in addresses
    }


# -- bakedeletion ------------------------------------------------------------


def bakedeletion(placement: PlacementMap, target_r: int) -> list[DeletionEntry]:
    """Plan deletions bringing every chunk down to exactly target_r replicas.

    Returns (peer, address) pairs sorted lexicographically by hex. Raises
    UnderReplicatedError if some chunk starts below target_r and
    InfeasiblePlanError when no keep-assignment can satisfy rule A.
    """
    if target_r < 1:
        raise ValueError("target_r must be at least 1")
    chunk_to_peers = placement.chunk_to_peers
    for addr in sorted(chunk_to_peers):
        if len(chunk_to_peers[addr]) < target_r:
            raise UnderReplicatedError(
                f"chunk {addr.hex()} has {len(chunk_to_peers[addr])} replicas, "
                f"below target {target_r}"
            )

    files_of: dict[Address, list[str]] = defaultdict(list)
    for fid in sorted(placement.files):
        for addr in placement.files[fid]:
            if fid not in files_of[addr]:
                files_of[addr].append(fid)

    # a file whose chunks all end with target_r replicas retains at most
    # target_r * chunk_count distinct holders, so rule A caps the holder set
    for fid in sorted(placement.files):
        addrs = set(placement.files[fid])
        holders = {p for a in addrs for p in chunk_to_peers[a]}
        slots = target_r * len(addrs)
        if len(holders) > slots:
            raise InfeasiblePlanError(
                f"rule A requires all {len(holders)} holders of file {fid} "
                f"to keep a chunk, but target {target_r} leaves only "
                f"{slots} replica slots"
            )

    # rule-A obligations: which held chunks can cover each (peer, file) pair
    held_in_file: dict[tuple[PeerId, str], list[Address]] = defaultdict(list)
    for fid in sorted(placement.files):
        for addr in placement.files[fid]:
            for pid in chunk_to_peers[addr]:
                if addr not in held_in_file[(pid, fid)]:
                    held_in_file[(pid, fid)].append(addr)

    keep, starved = _cover_keep(chunk_to_peers, files_of, held_in_file, target_r)
    if starved:
        keep = _exhaustive_keep(
            placement, files_of, set(held_in_file), target_r, starved
        )
    _fill_keep(keep, chunk_to_peers, target_r)

    deletions = [
        (pid, addr)
        for addr in chunk_to_peers
        for pid in chunk_to_peers[addr] - keep[addr]
    ]
    deletions.sort()
    return deletions


def _cover_keep(
    chunk_to_peers: dict[Address, set[PeerId]],
    files_of: dict[Address, list[str]],
    held_in_file: dict[tuple[PeerId, str], list[Address]],
    target_r: int,
) -> tuple[dict[Address, set[PeerId]], list[tuple[PeerId, str]]]:
    """Assign each (peer, file) obligation a kept chunk, at most target_r
    keepers per chunk.

    Augmenting search: a peer takes a free keeper slot on one of its chunks
    if any remain, else it evicts a keeper that can itself be re-covered
    elsewhere. Exact for single-file placements (bipartite matching with
    chunk capacity target_r); when chunks are shared across files an
    eviction can orphan several obligations at once and the search may miss
    a plan, hence the exhaustive fallback in the caller.
    """
    keep: dict[Address, set[PeerId]] = {a: set() for a in chunk_to_peers}

    def covered(pid: PeerId, fid: str) -> bool:
        return any(pid in keep[a] for a in held_in_file[(pid, fid)])

    def augment(pid: PeerId, fid: str, visited: set) -> bool:
        options = sorted(held_in_file[(pid, fid)], key=lambda a: (len(keep[a]), a))
        for addr in options:
            if len(keep[addr]) < target_r:
                keep[addr].add(pid)
                return True
        for addr in options:
            for out in sorted(keep[addr]):
                if (addr, out) in visited:
                    continue
                visited.add((addr, out))
                saved = {a: set(s) for a, s in keep.items()}
                keep[addr].remove(out)
                keep[addr].add(pid)
                orphans = [
                    (out, f)
                    for f in files_of[addr]
                    if (out, f) in held_in_file and not covered(out, f)
                ]
                if all(augment(q, f, visited) for q, f in orphans):
                    return True
                keep.clear()
                keep.update(saved)
        return False

    starved: list[tuple[PeerId, str]] = []
    order = sorted(held_in_file, key=lambda pf: (len(held_in_file[pf]), pf[1], pf[0]))
    for pid, fid in order:
        if not covered(pid, fid) and not augment(pid, fid, set()):
            starved.append((pid, fid))
    return keep, starved


def _fill_keep(
    keep: dict[Address, set[PeerId]],
    chunk_to_peers: dict[Address, set[PeerId]],
    target_r: int,
) -> None:
    """Pad every chunk to exactly target_r keepers, least-loaded holders
    first. Adding keepers can never break rule A."""
    kept_count: dict[PeerId, int] = defaultdict(int)
    for holders in keep.values():
        for pid in holders:
            kept_count[pid] += 1
    for addr in sorted(chunk_to_peers):
        needed = target_r - len(keep[addr])
        if needed <= 0:
            continue
        rest = sorted(
            (pid for pid in chunk_to_peers[addr] if pid not in keep[addr]),
            key=lambda pid: (kept_count[pid], pid),
        )
        for pid in rest[:needed]:
            keep[addr].add(pid)
            kept_count[pid] += 1


def _starved_pairs(
    keep: dict[Address, set[PeerId]],
    placement: PlacementMap,
    need: set[tuple[PeerId, str]],
) -> list[tuple[PeerId, str]]:
    starved = []
    for pid, fid in sorted(need):
        if not any(pid in keep.get(a, set()) for a in placement.files[fid]):
            starved.append((pid, fid))
    return starved


def _exhaustive_keep(
    placement: PlacementMap,
    files_of: dict[Address, list[str]],
    need: set[tuple[PeerId, str]],
    target_r: int,
    starved: list[tuple[PeerId, str]],
) -> dict[Address, set[PeerId]]:
    chunk_to_peers = placement.chunk_to_peers
    addrs = sorted(chunk_to_peers)
    options = [
        list(itertools.combinations(sorted(chunk_to_peers[a]), target_r))
        for a in addrs
    ]
    size = prod(len(o) for o in options)
    witness_pid, witness_fid = starved[0]
    if size > _EXHAUSTIVE_LIMIT:
        raise InfeasiblePlanError(
            f"cover search failed (rule A unmet for peer "
            f"{witness_pid.hex()} in file {witness_fid}) and the instance is "
            f"too large for exhaustive search ({size} assignments)"
        )
    for combo in itertools.product(*options):
        keep = {a: set(c) for a, c in zip(addrs, combo)}
        if not _starved_pairs(keep, placement, need):
            return keep
    raise InfeasiblePlanError(
        f"no keep-assignment satisfies rule A at target {target_r}; "
        f"e.g. peer {witness_pid.hex()} cannot retain any chunk of file "
        f"{witness_fid}"
    )


# -- rules verification --------------------------------------------------------


def check_rules(
    before: PlacementMap,
    after: dict[Address, set[PeerId]],
    target_r: int,
) -> RulesReport:
    """Independently verify rules A-D for an after-placement recomputed from
    stores. `after` must cover the same addresses (empty sets allowed)."""
    violations: list[str] = []

    a_ok = True
    for fid in sorted(before.files):
        addrs = before.files[fid]
        holders_before = sorted({p for a in addrs for p in before.chunk_to_peers[a]})
        for pid in holders_before:
            if not any(pid in after.get(a, set()) for a in addrs):
                a_ok = False
                violations.append(f"A: peer {pid.hex()} lost all chunks of {fid}")

    before_set = set(before.chunk_to_peers)
    after_set = {a for a, holders in after.items() if holders}
    b_ok = after_set == before_set
    if not b_ok:
        lost = before_set - after_set
        gained = after_set - before_set
        for a in sorted(lost):
            violations.append(f"B: chunk {a.hex()} vanished entirely")
        for a in sorted(gained):
            violations.append(f"B: chunk {a.hex()} appeared from nowhere")

    c_ok = True
    for addr in sorted(after):
        extra = after[addr] - before.chunk_to_peers.get(addr, set())
        if extra:
            c_ok = False
            for pid in sorted(extra):
                violations.append(f"C: peer {pid.hex()} gained chunk {addr.hex()}")

    d_ok = True
    for addr in sorted(before.chunk_to_peers):
        count = len(after.get(addr, set()))
        if count != target_r:
            d_ok = False
            violations.append(
                f"D: chunk {addr.hex()} has {count} replicas, wanted {target_r}"
            )

    return RulesReport(a_ok=a_ok, b_ok=b_ok, c_ok=c_ok, d_ok=d_ok, violations=violations)


# -- combinestorage / deletechunks ---------------------------------------------


def combinestorage(
    lists: Sequence[Sequence[DeletionEntry]],
    placement: PlacementMap | None = None,
) -> list[DeletionEntry]:
    """Merge deletion lists into one sorted, duplicate-free list.

    With a placement given, rule A is re-verified across the union: per-file
    lists can be individually safe yet jointly starve a peer of a shared
    chunk's file.
    """
    merged = sorted({entry for lst in lists for entry in lst})
    if placement is not None:
        removed = set(merged)
        for fid in sorted(placement.files):
            addrs = placement.files[fid]
            holders = sorted({p for a in addrs for p in placement.chunk_to_peers[a]})
            for pid in holders:
                if not any(
                    pid in placement.chunk_to_peers[a] and (pid, a) not in removed
                    for a in addrs
                ):
                    raise InfeasiblePlanError(
                        f"combined deletions starve peer {pid.hex()} of file "
                        f"{fid} (rule A)"
                    )
    return merged


def deletechunks(network, entries: Sequence[DeletionEntry]) -> DeleteReport:
    """Remove the listed (peer, chunk) replicas from the network's stores.

    Refuses to run unless syncing is off, since peers would otherwise pull
    the deleted chunks straight back. Entries naming a chunk the peer does
    not hold are counted, not fatal.
    """
    if network.sync_mode != "no_sync":
        raise SyncModeError(
            "refusing to delete chunks while syncing is enabled; "
            "switch the network to no_sync first"
        )
    report = DeleteReport()
    for pid, addr in entries:
        store = network.stores.get(pid)
        if store is None:
            raise ValueError(f"unknown peer {pid.hex()}")
        if addr in store:
            del store[addr]
            report.applied += 1
        else:
            report.missing += 1
    return report


# -- text formats ----------------------------------------------------------------


def deletion_list_to_text(entries: Sequence[DeletionEntry]) -> str:
    """One `<peer-hex> <chunk-hex>` line per entry, sorted, LF-terminated."""
    lines = [f"{pid.hex()} {addr.hex()}" for pid, addr in sorted(set(entries))]
    return "".join(line + "\n" for line in lines)


def deletion_list_from_text(text: str) -> list[DeletionEntry]:
    entries: list[DeletionEntry] = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"malformed deletion entry: {line!r}")
        entries.append((parse_address(parts[0]), parse_address(parts[1])))
    return sorted(set(entries))


def placement_to_text(placement: PlacementMap) -> str:
    lines = []
    for addr in sorted(placement.chunk_to_peers):
        holders = " ".join(p.hex() for p in sorted(placement.chunk_to_peers[addr]))
        lines.append(f"{addr.hex()} {holders}")
    for fid in sorted(placement.files):
        addrs = " ".join(a.hex() for a in placement.files[fid])
        lines.append(f"file {fid} {addrs}")
    return "".join(line + "\n" for line in lines)


def placement_from_text(text: str) -> PlacementMap:
    chunk_to_peers: dict[Address, set[PeerId]] = {}
    files: dict[str, tuple[Address, ...]] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "file":
            if len(parts) < 3:
                raise ValueError(f"malformed file line: {line!r}")
            files[parts[1]] = tuple(parse_address(tok) for tok in parts[2:])
        else:
            if len(parts) < 2:
                raise ValueError(f"malformed placement line: {line!r}")
            addr = parse_address(parts[0])
            chunk_to_peers[addr] = {parse_address(tok) for tok in parts[1:]}
    return PlacementMap(chunk_to_peers=chunk_to_peers, files=files)

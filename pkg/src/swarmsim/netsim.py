"""Deterministic in-process simulation of a chunk-storing peer network.

Peers hold per-peer chunk stores and partial routing views. Chunks are
routed greedily by XOR distance; every peer on the forwarding path stores
the chunk (delivery caching, active in both sync modes), the terminal peer's
neighborhood replicates it, and in full sync mode an extra pull round lets
every peer adopt the chunks it believes itself responsible for. Failures
mark stores unreachable without deleting them. Retrieval never writes to
any store, so with syncing off the global census only changes through
explicit uploads or deletions.

All randomness is derived from the config seed; identical configs and
operation sequences produce bit-identical stores.
"""

from __future__ import annotations

import hashlib
import shutil
from dataclasses import dataclass, field, replace
from pathlib import Path

from .chunker import Address, ChunkParams, FileManifest, reassemble, split_file, build_tree
from .codec import CodingParams, EncodedManifest, encode_tree, repair_retrieve
from .errors import (
    ConnectivityError,
    DecodingError,
    MalformedChunkError,
    MissingChunkError,
    SnapshotMismatchError,
    SwarmSimError,
)
from .overlay import PeerId, RoutingView, build_views, make_peer_ids, responsible_peers
from .seeds import derive_rng

SYNC_FULL = "full"
SYNC_NONE = "no_sync"


@dataclass(frozen=True)
class SimConfig:
    """Network construction parameters. seed drives every random choice."""

    num_peers: int
    seed: int = 0
    view_size: int = 16
    ns: int = 4
    sync_mode: str = SYNC_FULL
    num_backends: int = 29

    def __post_init__(self) -> None:
        if self.num_peers < 2:
            raise ValueError("num_peers must be at least 2")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.view_size < 1:
            raise ValueError("view_size must be at least 1")
        if self.ns < 1:
            raise ValueError("ns must be at least 1")
        if self.sync_mode not in (SYNC_FULL, SYNC_NONE):
            raise ValueError(f"sync_mode must be {SYNC_FULL!r} or {SYNC_NONE!r}")
        if self.num_backends < 1:
            raise ValueError("num_backends must be at least 1")


@dataclass
class RetrievalStats:
    """Cost proxies for one file retrieval: peers contacted and bytes moved.

    hops counts every peer probed beyond the requesting one, including
    probes spent on chunks that turned out to be unreachable. No wall-clock
    quantities are recorded anywhere.
    """

    success: bool = False
    hops: int = 0
    bytes_fetched: int = 0
    repaired_groups: int = 0
    error: str | None = None


@dataclass
class ConnectivityReport:
    min_degree: int
    degrees: list[int] = field(default_factory=list)


@dataclass
class Snapshot:
    """Bit-exact capture of every peer's store plus the driving config."""

    config: SimConfig
    stores: dict[PeerId, dict[Address, bytes]]
    digest: str


def backend_assignment(num_peers: int, num_backends: int) -> list[int]:
    """Backend index per peer: peer i runs on backend i mod num_backends."""
    return [i % num_backends for i in range(num_peers)]


class Network:
    """Simulated peer network. Construct via spawn_network()."""

    def __init__(self, config: SimConfig):
        self.config = config
        self.peer_ids = make_peer_ids(config.num_peers, config.seed)
        self.peer_index = {pid: i for i, pid in enumerate(self.peer_ids)}
        self.backends = backend_assignment(config.num_peers, config.num_backends)
        self.stores: dict[PeerId, dict[Address, bytes]] = {
            pid: {} for pid in self.peer_ids
        }
        self.failed: set[PeerId] = set()
        self.sync_mode = config.sync_mode
        self._ints = {pid: int.from_bytes(pid, "big") for pid in self.peer_ids}
        self._rebuild_views()

    def _rebuild_views(self) -> None:
        self.views: dict[PeerId, RoutingView] = build_views(
            self.peer_ids, self.config.view_size, self.config.seed
        )
        self._view_ints = {
            pid: [self._ints[q] for q in view.known]
            for pid, view in self.views.items()
        }

    # -- routing ---------------------------------------------------------

    def route_path(self, entry: PeerId, target: Address) -> list[PeerId]:
        """Greedy route from entry toward target over live peers. Every hop
        strictly decreases XOR distance; the walk stops at a local minimum."""
        if entry not in self.peer_index:
            raise ValueError("unknown entry peer")
        t = int.from_bytes(target, "big")
        current = entry
        path = [entry]
        while True:
            best = None
            best_d = t ^ self._ints[current]
            for q in self.views[current].known:
                if q in self.failed:
                    continue
                d = t ^ self._ints[q]
                if d < best_d:
                    best, best_d = q, d
            if best is None:
                return path
            current = best
            path.append(current)

    def _locate(self, entry: PeerId, addr: Address) -> tuple[bytes | None, int]:
        """Find a live holder of addr, returning (payload, peers probed).

        Probes the requester, the greedy path, the terminal neighborhood,
        then any remaining live peers by ascending distance; the fetch only
        misses when no live peer holds the chunk at all.
        """
        probes = 0
        seen: set[PeerId] = set()

        def probe(pid: PeerId) -> bytes | None:
            nonlocal probes
            if pid in seen or pid in self.failed:
                return None
            seen.add(pid)
            if pid != entry:
                probes += 1
            return self.stores[pid].get(addr)

        payload = probe(entry)
        if payload is not None:
            return payload, probes
        path = self.route_path(entry, addr)
        for pid in path:
            payload = probe(pid)
            if payload is not None:
                return payload, probes
        hood = responsible_peers(addr, self.views[path[-1]], self.config.ns)
        for pid in hood.members:
            payload = probe(pid)
            if payload is not None:
                return payload, probes
        a = int.from_bytes(addr, "big")
        rest = [
            pid
            for pid in self.peer_ids
            if pid not in seen and pid not in self.failed
        ]
        rest.sort(key=lambda pid: (a ^ self._ints[pid], pid))
        for pid in rest:
            payload = probe(pid)
            if payload is not None:
                return payload, probes
        return None, probes

    # -- upload / retrieve -------------------------------------------------

    def upload(
        self,
        data: bytes,
        params: ChunkParams | None = None,
        coding: CodingParams | None = None,
    ) -> FileManifest | EncodedManifest:
        """Chunk, optionally erasure-code, and place a file on the network.

        Every chunk (parity included) is routed from a seeded entry peer;
        path peers and the terminal neighborhood store it. In full sync
        mode a pull round follows: each live peer adopts every chunk whose
        neighborhood, judged from its own view, includes itself.
        """
        params = params or ChunkParams()
        leaves = split_file(data, params)
        manifest, chunks = build_tree(leaves, params)
        result: FileManifest | EncodedManifest = manifest
        if coding is not None:
            encoded, parity = encode_tree(manifest, chunks, coding)
            chunks = dict(chunks)
            chunks.update(parity)
            result = encoded

        # stateless draw: reloading the network must not shift later uploads
        draw = derive_rng("upload-entry", self.config.seed, manifest.root)
        entry = self.peer_ids[draw.randrange(len(self.peer_ids))]
        for addr, payload in chunks.items():
            path = self.route_path(entry, addr)
            for pid in path:
                self.stores[pid][addr] = payload
            hood = responsible_peers(addr, self.views[path[-1]], self.config.ns)
            for pid in hood.members:
                if pid not in self.failed:
                    self.stores[pid][addr] = payload
        if self.sync_mode == SYNC_FULL:
            self._pull_round(chunks)
        return result

    def _pull_round(self, chunks: dict[Address, bytes]) -> None:
        ns = self.config.ns
        items = [
            (addr, payload, int.from_bytes(addr, "big"))
            for addr, payload in chunks.items()
        ]
        for pid in self.peer_ids:
            if pid in self.failed:
                continue
            own = self._ints[pid]
            vints = self._view_ints[pid]
            store = self.stores[pid]
            for addr, payload, a in items:
                mine = a ^ own
                closer = 0
                for v in vints:
                    if a ^ v < mine:
                        closer += 1
                        if closer >= ns:
                            break
                if closer < ns:
                    store[addr] = payload

    def retrieve(
        self,
        manifest: FileManifest | EncodedManifest,
        from_peer: PeerId,
    ) -> tuple[bytes | None, RetrievalStats]:
        """Fetch and rebuild a file from the network, repairing coded groups
        when chunks are unreachable. Unrecoverable loss yields a failed
        stats record, not an exception. Read-only: stores never change."""
        stats = RetrievalStats()
        if from_peer not in self.peer_index:
            raise ValueError("unknown entry peer")
        if from_peer in self.failed:
            stats.error = "entry peer is failed"
            return None, stats

        def fetch(addr: Address) -> bytes | None:
            payload, probes = self._locate(from_peer, addr)
            stats.hops += probes
            if payload is not None:
                stats.bytes_fetched += len(payload)
            return payload

        def repaired(_group) -> None:
            stats.repaired_groups += 1

        try:
            if isinstance(manifest, EncodedManifest):
                data = repair_retrieve(
                    manifest.base.root, fetch, manifest, on_group_repaired=repaired
                )
            else:
                data = reassemble(
                    manifest.root, fetch, manifest.params, manifest.file_size
                )
        except (MissingChunkError, DecodingError, MalformedChunkError) as exc:
            stats.error = str(exc)
            return None, stats
        stats.success = True
        return data, stats

    # -- failures ----------------------------------------------------------

    def fail_peers(
        self,
        fraction: float | None = None,
        peers: list[PeerId] | None = None,
        seed: int = 0,
    ) -> list[PeerId]:
        """Mark peers unreachable, either an explicit list or a seeded draw
        of round(fraction * num_peers) peers. Stores are kept, not wiped.
        Returns the newly drawn selection in peer-index order."""
        if (fraction is None) == (peers is None):
            raise ValueError("pass exactly one of fraction or peers")
        if peers is None:
            if not 0.0 <= fraction <= 1.0:
                raise ValueError("fraction must be within [0, 1]")
            count = int(round(fraction * len(self.peer_ids)))
            rng = derive_rng("fail", self.config.seed, seed)
            chosen = rng.sample(self.peer_ids, count)
        else:
            for pid in peers:
                if pid not in self.peer_index:
                    raise ValueError("cannot fail unknown peer")
            chosen = list(peers)
        self.failed.update(chosen)
        return sorted(chosen, key=self.peer_index.__getitem__)

    def live_peers(self) -> list[PeerId]:
        return [pid for pid in self.peer_ids if pid not in self.failed]

    # -- snapshot / restore --------------------------------------------------

    def snapshot(self) -> Snapshot:
        """Capture all stores bit-exactly plus the current config."""
        config = replace(self.config, sync_mode=self.sync_mode)
        stores = {pid: dict(store) for pid, store in self.stores.items()}
        return Snapshot(config=config, stores=stores, digest=self.census_digest())

    def restore(self, snap: Snapshot) -> str:
        """Reset stores to the snapshot, clear failure marks, force syncing
        off, and rebuild routing views. Returns the census digest."""
        if snap.config.num_peers != len(self.peer_ids):
            raise SnapshotMismatchError(
                f"snapshot has {snap.config.num_peers} peers, "
                f"network has {len(self.peer_ids)}"
            )
        if set(snap.stores) != set(self.peer_ids):
            raise SnapshotMismatchError("snapshot peer ids do not match network")
        self.stores = {pid: dict(snap.stores[pid]) for pid in self.peer_ids}
        self.failed.clear()
        self.sync_mode = SYNC_NONE
        self._rebuild_views()
        return self.census_digest()

    def wait_for_connectivity(self, min_degree: int) -> ConnectivityReport:
        """Assert every peer's view has at least min_degree members."""
        if min_degree >= len(self.peer_ids):
            raise ValueError(
                f"min_degree {min_degree} cannot be met by "
                f"{len(self.peer_ids)} peers"
            )
        degrees = [len(self.views[pid].known) for pid in self.peer_ids]
        if min(degrees) < min_degree:
            raise ConnectivityError(
                f"connectivity below min_degree {min_degree}: "
                f"weakest peer has {min(degrees)} view members",
                degrees=degrees,
            )
        return ConnectivityReport(min_degree=min_degree, degrees=degrees)

    def census_digest(self) -> str:
        return _stores_digest(self.peer_ids, self.stores)


def spawn_network(config: SimConfig) -> Network:
    """Create a network with seeded peer ids, views, and empty stores."""
    return Network(config)


def _stores_digest(
    peer_ids: list[PeerId], stores: dict[PeerId, dict[Address, bytes]]
) -> str:
    h = hashlib.sha256()
    for pid in peer_ids:
        for addr in sorted(stores[pid]):
            h.update(pid)
            h.update(addr)
    return h.hexdigest()


# -- snapshot disk format ----------------------------------------------------
#
# <dir>/manifest.txt            key=value config lines plus census_digest
# <dir>/backend-<i>/<peer-hex>/<chunk-hex>   raw chunk payloads


def save_snapshot(snap: Snapshot, directory: str | Path) -> Path:
    """Write a snapshot to disk, replacing any snapshot already there."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    manifest = root / "manifest.txt"
    if manifest.exists():
        manifest.unlink()
    for stale in root.glob("backend-*"):
        if stale.is_dir():
            shutil.rmtree(stale)

    cfg = snap.config
    peer_ids = make_peer_ids(cfg.num_peers, cfg.seed)
    assignment = backend_assignment(cfg.num_peers, cfg.num_backends)
    for index, pid in enumerate(peer_ids):
        peer_dir = root / f"backend-{assignment[index]}" / pid.hex()
        peer_dir.mkdir(parents=True, exist_ok=True)
        for addr in sorted(snap.stores[pid]):
            (peer_dir / addr.hex()).write_bytes(snap.stores[pid][addr])

    lines = [
        f"num_peers={cfg.num_peers}",
        f"seed={cfg.seed}",
        f"view_size={cfg.view_size}",
        f"ns={cfg.ns}",
        f"sync_mode={cfg.sync_mode}",
        f"num_backends={cfg.num_backends}",
        f"census_digest={snap.digest}",
    ]
    manifest.write_text("\n".join(lines) + "\n")
    return root


def load_snapshot(directory: str | Path) -> Snapshot:
    """Read a snapshot from disk, verifying payload hashes and the census
    digest recorded in its manifest."""
    root = Path(directory)
    manifest = root / "manifest.txt"
    if not manifest.is_file():
        raise FileNotFoundError(f"no snapshot manifest at {manifest}")
    keys: dict[str, str] = {}
    for line in manifest.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        keys[key] = value
    try:
        config = SimConfig(
            num_peers=int(keys["num_peers"]),
            seed=int(keys["seed"]),
            view_size=int(keys["view_size"]),
            ns=int(keys["ns"]),
            sync_mode=keys["sync_mode"],
            num_backends=int(keys["num_backends"]),
        )
        recorded_digest = keys["census_digest"]
    except KeyError as exc:
        raise ValueError(f"snapshot manifest missing {exc}") from exc

    peer_ids = make_peer_ids(config.num_peers, config.seed)
    assignment = backend_assignment(config.num_peers, config.num_backends)
    stores: dict[PeerId, dict[Address, bytes]] = {}
    for index, pid in enumerate(peer_ids):
        store: dict[Address, bytes] = {}
        peer_dir = root / f"backend-{assignment[index]}" / pid.hex()
        if peer_dir.is_dir():
            for entry in sorted(peer_dir.iterdir()):
                addr = bytes.fromhex(entry.name)
                payload = entry.read_bytes()
                if hashlib.sha256(payload).digest() != addr:
                    raise SwarmSimError(
                        f"corrupt snapshot: {entry} does not hash to its name"
                    )
                store[addr] = payload
        stores[pid] = store
    digest = _stores_digest(peer_ids, stores)
    if digest != recorded_digest:
        raise SwarmSimError(
            "corrupt snapshot: census digest does not match manifest"
        )
    return Snapshot(config=config, stores=stores, digest=digest)


def network_from_snapshot(snap: Snapshot) -> Network:
    """Spawn a network matching the snapshot's config and restore into it.

    Unlike a bare restore(), the snapshot's recorded sync mode is kept, so
    a saved full-sync state loads as full-sync.
    """
    net = spawn_network(snap.config)
    net.restore(snap)
    net.sync_mode = snap.config.sync_mode
    return net

"""Kademlia-style overlay: XOR distance, routing views, neighborhoods.

Peer ids live in the same 256-bit space as chunk addresses, so "the peers
nearest a chunk" is well defined. Each peer builds its routing view from a
seeded subsample of the peer set rather than from global knowledge: a small
set of well-known peers (think long-lived bootstrap nodes) shows up in every
peer's candidate pool, the rest is an independent uniform draw per peer.
Views are therefore deterministic for a fixed seed but deliberately
non-symmetric, and well-connected peers end up in far more views than
average, which is what spreads replica counts apart.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

from .seeds import derive_bytes, derive_rng

PeerId = bytes

# candidate pool sizing for view construction
_WELL_KNOWN_COUNT = 8
_SAMPLE_FACTOR = 3


def xor_distance(a: bytes, b: bytes) -> int:
    """XOR metric between two equal-length ids, interpreted big-endian."""
    if len(a) != len(b):
        raise ValueError("ids must have equal length")
    return int.from_bytes(a, "big") ^ int.from_bytes(b, "big")


def nearest_peers(target: bytes, candidates, m: int) -> list[PeerId]:
    """The m candidates nearest to target, ascending XOR distance.

    Distances to a fixed target are unique per candidate; the id tie-break
    only pins the order of duplicate entries.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    pool = list(candidates)
    if not pool:
        raise ValueError("no candidates")
    pool.sort(key=lambda p: (xor_distance(target, p), p))
    return pool[:m]


@dataclass(frozen=True)
class RoutingView:
    """One peer's partial knowledge of the network."""

    owner: PeerId
    known: frozenset[PeerId] = field(default_factory=frozenset)


@dataclass(frozen=True)
class Neighborhood:
    """The ns peers responsible for a chunk, as judged by one view."""

    target: bytes
    members: tuple[PeerId, ...]


def make_peer_ids(num_peers: int, seed: int) -> list[PeerId]:
    """Derive num_peers 32-byte ids deterministically from the seed."""
    if num_peers < 1:
        raise ValueError("need at least one peer")
    ids = [derive_bytes("peer", seed, i) for i in range(num_peers)]
    if len(set(ids)) != num_peers:
        raise ValueError("peer id collision; change the seed")
    return ids


def build_views(
    peer_ids: list[PeerId], view_size: int, seed: int
) -> dict[PeerId, RoutingView]:
    """Build every peer's routing view from a seeded subsample.

    A peer's view holds its view_size nearest peers among a candidate pool
    of well-known peers plus a per-peer uniform sample. The view never
    contains the owner. view_size is clamped to the peer count minus one,
    with a warning.
    """
    n = len(peer_ids)
    if n < 2:
        raise ValueError("need at least two peers to build views")
    if view_size < 1:
        raise ValueError("view_size must be at least 1")
    if view_size >= n:
        warnings.warn(
            f"view_size {view_size} >= peer count {n}; clamping to {n - 1}",
            stacklevel=2,
        )
        view_size = n - 1

    ordered = sorted(peer_ids)
    shuffled = list(ordered)
    derive_rng("well-known", seed).shuffle(shuffled)
    well_known = set(shuffled[: min(_WELL_KNOWN_COUNT, n)])

    sample_size = min(n - 1, _SAMPLE_FACTOR * view_size)
    views: dict[PeerId, RoutingView] = {}
    for pid in peer_ids:
        others = [q for q in ordered if q != pid]
        rng = derive_rng("view", seed, pid)
        pool = set(rng.sample(others, min(sample_size, len(others))))
        pool.update(q for q in well_known if q != pid)
        members = nearest_peers(pid, pool, min(view_size, len(pool)))
        views[pid] = RoutingView(owner=pid, known=frozenset(members))
    return views


def responsible_peers(chunk: bytes, view: RoutingView, ns: int) -> Neighborhood:
    """The chunk's neighborhood as computed from one peer's view: the ns
    nearest ids among the view members and the owner itself."""
    if ns < 1:
        raise ValueError("ns must be at least 1")
    candidates = set(view.known)
    candidates.add(view.owner)
    members = nearest_peers(chunk, candidates, min(ns, len(candidates)))
    return Neighborhood(target=chunk, members=tuple(members))

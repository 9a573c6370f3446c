"""
Divergent routing views and how superpeers emerge
=================================================

Peers sort each other by XOR distance over 256-bit ids, but no peer sees
the whole swarm. Every view mixes a handful of well-known bootstrap
peers with a seeded random sample, so views disagree, and the bootstrap
peers end up inside far more views than anyone else. Upload traffic
follows views, so those peers collect outsized replica counts.
"""

from collections import Counter

from swarmsim import build_views, make_peer_ids, nearest_peers, responsible_peers, xor_distance

peers = make_peer_ids(200, seed=0)
print("first peer id:", peers[0].hex()[:16], "...")

# XOR distance orders the swarm differently around every target
a, b = peers[0], peers[1]
print("distance peer0 to peer1:", xor_distance(a, b).bit_length(), "bits")
ring = nearest_peers(a, peers, 5)
print("five closest to peer0:", [p.hex()[:8] for p in ring])

views = build_views(peers, view_size=16, seed=0)

# membership counts: how many views contain each peer
in_degree = Counter()
for view in views.values():
    for member in view.known:
        in_degree[member] += 1

counts = sorted(in_degree.values())
median = counts[len(counts) // 2]
print("view in-degree median:", median, "max:", counts[-1])
print("a well-connected peer sits in", counts[-1], "views, a typical one in", median)

# distinct views: two peers rarely agree on who is close to a target
distinct = {view.known for view in views.values()}
print("distinct views among 200 peers:", len(distinct))

target = peers[50]
hoods = {responsible_peers(target, views[p], 4).members for p in peers[:20]}
print("neighborhoods for one address, judged by 20 peers:",
      len(hoods), "different answers")

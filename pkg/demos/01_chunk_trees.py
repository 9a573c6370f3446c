"""
Splitting a file into a content-addressed chunk tree
====================================================

A file becomes fixed-size leaf chunks, and each tree level above the
leaves stores the concatenated addresses of its children. The root
address alone names the whole file.
"""

from swarmsim import ChunkParams, build_tree, listchunks, manifest_text, reassemble, split_file, tree_shape
from swarmsim.seeds import seeded_bytes

# 36 KiB at branching 3 gives a small tree that is easy to read
params = ChunkParams(chunk_size=4096, branching=3)
data = seeded_bytes(36_864, "demo-tree")

print("predicted level widths:", tree_shape(len(data), params))

leaves = split_file(data, params)
manifest, chunks = build_tree(leaves, params)
print("leaf count:", len(leaves))
print("distinct chunks:", len(chunks))
print("root address:", manifest.root.hex())

# the walk lists the root first, then every level down to the leaves
addresses = listchunks(manifest)
print("walk length:", len(addresses))
print("first three addresses:")
for addr in addresses[:3]:
    print(" ", addr.hex())

# internal chunks are nothing but their children's addresses back to back
internal = chunks[manifest.levels[1][0]]
print("internal payload bytes:", len(internal), "=", len(internal) // 32, "addresses")

# knowing the root, the chunk map, and the original size restores the file
restored = reassemble(manifest.root, chunks.get, params, len(data))
print("reassembled intact:", restored == data)

print()
print("manifest text form:")
print(manifest_text(manifest)[:200], "...")

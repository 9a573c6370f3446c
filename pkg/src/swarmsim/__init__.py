"""Simulator for content-addressed swarm storage.

Files are split into hash-addressed chunk trees, optionally erasure coded,
and placed on a simulated peer overlay. Tools normalize replication to a
uniform factor and measure retrieval availability under peer failures.
"""

from .chunker import (
    ADDRESS_SIZE,
    ChunkParams,
    FileManifest,
    build_tree,
    content_address,
    reassemble,
    split_file,
    tree_shape,
)
from .codec import (
    CodingGroup,
    CodingParams,
    EncodedManifest,
    encode_tree,
    manifest_root,
    manifest_text,
    parse_manifest_text,
    repair_retrieve,
    rs_decode,
    rs_encode,
)
from .errors import (
    ConnectivityError,
    DecodingError,
    InfeasiblePlanError,
    MalformedChunkError,
    MissingChunkError,
    SnapshotMismatchError,
    SwarmSimError,
    SyncModeError,
    UnderReplicatedError,
    UnrecoverableGroupError,
)
from .harness import (
    AvailabilityResult,
    CensusReport,
    ExperimentConfig,
    census,
    emit_reports,
    parse_experiment_config,
    prepare,
    run_experiment,
    run_iterations,
)
from .netsim import (
    Network,
    RetrievalStats,
    SimConfig,
    Snapshot,
    SYNC_FULL,
    SYNC_NONE,
    load_snapshot,
    network_from_snapshot,
    save_snapshot,
    spawn_network,
)
from .overlay import (
    RoutingView,
    build_views,
    make_peer_ids,
    nearest_peers,
    responsible_peers,
    xor_distance,
)
from .tools import (
    DeleteReport,
    PlacementMap,
    RulesReport,
    bakedeletion,
    check_rules,
    combinestorage,
    deletechunks,
    deletion_list_from_text,
    deletion_list_to_text,
    listchunks,
    placement_from_network,
    placement_from_text,
    placement_to_text,
)

__version__ = "0.1.0"

__all__ = [
    "ADDRESS_SIZE",
    "AvailabilityResult",
    "CensusReport",
    "ChunkParams",
    "CodingGroup",
    "CodingParams",
    "ConnectivityError",
    "DecodingError",
    "DeleteReport",
    "EncodedManifest",
    "ExperimentConfig",
    "FileManifest",
    "InfeasiblePlanError",
    "MalformedChunkError",
    "MissingChunkError",
    "Network",
    "PlacementMap",
    "RetrievalStats",
    "RoutingView",
    "RulesReport",
    "SYNC_FULL",
    "SYNC_NONE",
    "SimConfig",
    "Snapshot",
    "SnapshotMismatchError",
    "SwarmSimError",
    "SyncModeError",
    "UnderReplicatedError",
    "UnrecoverableGroupError",
    "bakedeletion",
    "build_tree",
    "build_views",
    "census",
    "check_rules",
    "combinestorage",
    "content_address",
    "deletechunks",
    "deletion_list_from_text",
    "deletion_list_to_text",
    "emit_reports",
    "encode_tree",
    "listchunks",
    "load_snapshot",
    "make_peer_ids",
    "manifest_root",
    "manifest_text",
    "nearest_peers",
    "network_from_snapshot",
    "parse_experiment_config",
    "parse_manifest_text",
    "placement_from_network",
    "placement_from_text",
    "placement_to_text",
    "prepare",
    "reassemble",
    "repair_retrieve",
    "responsible_peers",
    "rs_decode",
    "rs_encode",
    "run_experiment",
    "run_iterations",
    "save_snapshot",
    "spawn_network",
    "split_file",
    "tree_shape",
    "xor_distance",
]

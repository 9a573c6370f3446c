"""Experiment pipeline: prepare a normalized network, measure availability.

prepare() uploads every configured file, plans and applies deletions until
replication is uniform, verifies the replication rules independently, and
snapshots the result. run_iterations() then replays that snapshot: restore,
check syncing is off, check connectivity, fail a seeded set of peers, and
attempt to retrieve every file. Each (fraction, iteration) pair draws its
failure set and entry peer from seeds derived from the indices alone, so
results are independent of which other iterations ran. All reported costs
are hop and byte counts, never wall-clock times.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .chunker import (
    Address,
    ChunkParams,
    FileManifest,
    build_tree,
    level_payload_lengths,
    split_file,
)
from .codec import CodingParams, EncodedManifest, encode_tree, group_data_lengths, manifest_root
from .errors import InfeasiblePlanError, SwarmSimError
from .netsim import Network, SimConfig, Snapshot, SYNC_NONE, spawn_network
from .overlay import PeerId
from .seeds import derive_int, derive_rng, seeded_bytes
from .tools import (
    DeletionEntry,
    PlacementMap,
    RulesReport,
    bakedeletion,
    check_rules,
    combinestorage,
    deletechunks,
    holders_map,
    listchunks,
    placement_from_network,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a full experiment needs, network to output directory."""

    sim: SimConfig
    file_sizes: tuple[int, ...]
    chunk: ChunkParams = ChunkParams()
    coding: CodingParams | None = None
    target_r: int = 1
    fractions: tuple[float, ...] = (0.0,)
    iterations: int = 1
    min_degree: int = 1
    outdir: str = "results"

    def __post_init__(self) -> None:
        if not self.file_sizes:
            raise ValueError("at least one file size is required")
        if any(size < 1 for size in self.file_sizes):
            raise ValueError("file sizes must be positive")
        if self.target_r < 1:
            raise ValueError("target_r must be at least 1")
        if not self.fractions:
            raise ValueError("at least one failure fraction is required")
        if any(not 0.0 <= f <= 1.0 for f in self.fractions):
            raise ValueError("fractions must lie within [0, 1]")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.min_degree < 1:
            raise ValueError("min_degree must be at least 1")


@dataclass
class CensusReport:
    """Replica counts per chunk and chunk counts per peer, over all stores."""

    replicas_per_chunk: dict[int, int]
    chunks_per_peer: dict[PeerId, int]
    total_replicas: int
    distinct_chunks: int


@dataclass
class AvailabilityResult:
    """Outcome of retrieving one file in one failure iteration."""

    file: str
    fraction: float
    iteration: int
    success: bool
    hops: int
    bytes_fetched: int
    repaired_groups: int
    overhead: float


@dataclass
class PrepareResult:
    snapshot: Snapshot
    manifests: list[FileManifest | EncodedManifest]
    file_ids: list[str]
    files: dict[str, tuple[Address, ...]]
    census_before: CensusReport
    census_after: CensusReport
    deletions: list[DeletionEntry]
    rules: RulesReport


def census(network: Network) -> CensusReport:
    """Count replicas per chunk and chunks per peer across all stores."""
    counts: Counter[Address] = Counter()
    chunks_per_peer: dict[PeerId, int] = {}
    for pid in network.peer_ids:
        store = network.stores[pid]
        chunks_per_peer[pid] = len(store)
        counts.update(store.keys())
    histogram: dict[int, int] = {}
    for replicas in counts.values():
        histogram[replicas] = histogram.get(replicas, 0) + 1
    return CensusReport(
        replicas_per_chunk=dict(sorted(histogram.items())),
        chunks_per_peer=chunks_per_peer,
        total_replicas=sum(counts.values()),
        distinct_chunks=len(counts),
    )


def file_bytes(config: ExperimentConfig, index: int) -> bytes:
    """Deterministic synthetic contents of file number `index`."""
    return seeded_bytes(config.file_sizes[index], "file", config.sim.seed, index)


def derive_manifests(
    config: ExperimentConfig,
) -> list[FileManifest | EncodedManifest]:
    """Rebuild every file's manifest without touching a network; byte-for-byte
    the manifests upload() produces for the same config."""
    manifests: list[FileManifest | EncodedManifest] = []
    for index in range(len(config.file_sizes)):
        data = file_bytes(config, index)
        manifest, chunks = build_tree(split_file(data, config.chunk), config.chunk)
        if config.coding is not None:
            encoded, _ = encode_tree(manifest, chunks, config.coding)
            manifests.append(encoded)
        else:
            manifests.append(manifest)
    return manifests


def iteration_seed(seed: int, fraction_index: int, iteration: int) -> int:
    """Failure-draw sub-seed for one (fraction, iteration) cell. Depends only
    on the indices, making iterations independent of each other."""
    return derive_int("fail-seed", seed, fraction_index, iteration)


def prepare(network: Network, config: ExperimentConfig) -> PrepareResult:
    """Upload, normalize replication, verify the rules, snapshot.

    Pipeline: upload every file, list its chunks, plan per-file deletions at
    target_r, merge the plans with a joint rule-A check, switch syncing off,
    apply the deletions, then verify rules A-D against an independently
    recomputed census before snapshotting.
    """
    manifests: list[FileManifest | EncodedManifest] = []
    for index in range(len(config.file_sizes)):
        data = file_bytes(config, index)
        manifests.append(network.upload(data, config.chunk, config.coding))
    file_ids = [manifest_root(m).hex() for m in manifests]
    files = {fid: tuple(listchunks(m)) for fid, m in zip(file_ids, manifests)}
    logger.info("uploaded %d files, %d distinct chunks",
                len(file_ids), len({a for f in files.values() for a in f}))

    census_before = census(network)
    placement = placement_from_network(network, files)

    plans = []
    for fid in file_ids:
        try:
            plans.append(bakedeletion(placement.restrict(fid), config.target_r))
        except InfeasiblePlanError as exc:
            raise InfeasiblePlanError(f"bakedeletion[{fid}]: {exc}") from exc
    try:
        combined = combinestorage(plans, placement)
    except InfeasiblePlanError as exc:
        raise InfeasiblePlanError(f"combinestorage: {exc}") from exc

    network.sync_mode = SYNC_NONE
    report = deletechunks(network, combined)
    logger.info("applied %d deletions (%d already absent)",
                report.applied, report.missing)

    after = holders_map(network, sorted(placement.chunk_to_peers))
    rules = check_rules(placement, after, config.target_r)
    if not rules.ok:
        detail = "; ".join(rules.violations[:5])
        raise SwarmSimError(f"normalization left rules violated: {detail}")

    census_after = census(network)
    return PrepareResult(
        snapshot=network.snapshot(),
        manifests=manifests,
        file_ids=file_ids,
        files=files,
        census_before=census_before,
        census_after=census_after,
        deletions=combined,
        rules=rules,
    )


def _address_lengths(
    manifest: FileManifest | EncodedManifest,
) -> dict[Address, int]:
    if isinstance(manifest, EncodedManifest):
        base = manifest.base
    else:
        base = manifest
    lengths: dict[Address, int] = {}
    for level, row in zip(base.levels, level_payload_lengths(base)):
        for addr, size in zip(level, row):
            lengths[addr] = size
    if isinstance(manifest, EncodedManifest):
        for group, data_lengths in zip(manifest.groups, group_data_lengths(manifest)):
            for addr in group.parity_addresses:
                lengths[addr] = max(data_lengths)
    return lengths


def _file_overheads(
    snapshot: Snapshot, manifests: list[FileManifest | EncodedManifest]
) -> dict[str, float]:
    """Stored bytes over original bytes per file, measured on the snapshot."""
    counts: Counter[Address] = Counter()
    for store in snapshot.stores.values():
        counts.update(store.keys())
    overheads: dict[str, float] = {}
    for manifest in manifests:
        lengths = _address_lengths(manifest)
        stored = sum(counts[a] * n for a, n in lengths.items())
        base = manifest.base if isinstance(manifest, EncodedManifest) else manifest
        overheads[manifest_root(manifest).hex()] = stored / base.file_size
    return overheads


def run_iterations(
    snapshot: Snapshot, config: ExperimentConfig
) -> list[AvailabilityResult]:
    """Replay the snapshot under every configured failure fraction.

    Each iteration restores the snapshot, checks syncing is off and the
    views are connected, fails a seeded peer set, and retrieves every file
    through a seeded live entry peer.
    """
    manifests = derive_manifests(config)
    overheads = _file_overheads(snapshot, manifests)
    network = spawn_network(snapshot.config)
    results: list[AvailabilityResult] = []
    for fi, fraction in enumerate(config.fractions):
        for iteration in range(config.iterations):
            network.restore(snapshot)
            if network.sync_mode != SYNC_NONE:
                raise SwarmSimError("restore left syncing enabled")
            network.wait_for_connectivity(config.min_degree)
            network.fail_peers(
                fraction=fraction,
                seed=iteration_seed(config.sim.seed, fi, iteration),
            )
            live = network.live_peers()
            entry = None
            if live:
                rng = derive_rng("entry", config.sim.seed, fi, iteration)
                entry = live[rng.randrange(len(live))]
            for manifest in manifests:
                fid = manifest_root(manifest).hex()
                if entry is None:
                    results.append(
                        AvailabilityResult(
                            file=fid,
                            fraction=fraction,
                            iteration=iteration,
                            success=False,
                            hops=0,
                            bytes_fetched=0,
                            repaired_groups=0,
                            overhead=overheads[fid],
                        )
                    )
                    continue
                _, stats = network.retrieve(manifest, entry)
                results.append(
                    AvailabilityResult(
                        file=fid,
                        fraction=fraction,
                        iteration=iteration,
                        success=stats.success,
                        hops=stats.hops,
                        bytes_fetched=stats.bytes_fetched,
                        repaired_groups=stats.repaired_groups,
                        overhead=overheads[fid],
                    )
                )
            logger.debug("fraction %.3f iteration %d done", fraction, iteration)
    return results


def emit_reports(
    results: list[AvailabilityResult],
    census_report: CensusReport,
    outdir: str | Path,
) -> list[Path]:
    """Write the three CSV reports. Output bytes depend only on the inputs:
    fixed orderings, fixed float formats, LF newlines."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)

    availability = out / "availability.csv"
    lines = ["file,fraction,iteration,success,hops,bytes,overhead"]
    for r in results:
        lines.append(
            f"{r.file},{r.fraction:g},{r.iteration},{int(r.success)},"
            f"{r.hops},{r.bytes_fetched},{r.overhead:.6f}"
        )
    availability.write_text("".join(line + "\n" for line in lines))

    replicas = out / "replicas_per_chunk.csv"
    lines = ["replicas,chunk_count"]
    for count in sorted(census_report.replicas_per_chunk):
        lines.append(f"{count},{census_report.replicas_per_chunk[count]}")
    replicas.write_text("".join(line + "\n" for line in lines))

    per_peer = out / "chunks_per_peer.csv"
    lines = ["peer_id,chunk_count"]
    for pid in sorted(census_report.chunks_per_peer):
        lines.append(f"{pid.hex()},{census_report.chunks_per_peer[pid]}")
    per_peer.write_text("".join(line + "\n" for line in lines))

    return [availability, replicas, per_peer]


def run_experiment(
    config: ExperimentConfig, outdir: str | Path | None = None
) -> tuple[PrepareResult, list[AvailabilityResult], list[Path]]:
    """spawn -> prepare -> iterate -> emit, returning everything produced."""
    network = spawn_network(config.sim)
    prepared = prepare(network, config)
    results = run_iterations(prepared.snapshot, config)
    paths = emit_reports(results, prepared.census_after, outdir or config.outdir)
    return prepared, results, paths


def parse_experiment_config(text: str) -> ExperimentConfig:
    """Parse the key=value experiment file format.

    Required keys: peers, file_sizes, min_degree. Optional: seed, view_size,
    ns, backends, sync_mode, chunk_size, branching, k, n, target_r,
    fractions, iterations, out. k and n must be given together.
    """
    keys: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {line!r}")
        key, _, value = line.partition("=")
        keys[key.strip()] = value.strip()

    for required in ("peers", "file_sizes", "min_degree"):
        if required not in keys:
            raise ValueError(f"experiment config must set {required}")
    if ("k" in keys) != ("n" in keys):
        raise ValueError("k and n must be given together")

    sim = SimConfig(
        num_peers=int(keys["peers"]),
        seed=int(keys.get("seed", "0")),
        view_size=int(keys.get("view_size", "16")),
        ns=int(keys.get("ns", "4")),
        sync_mode=keys.get("sync_mode", "full"),
        num_backends=int(keys.get("backends", "29")),
    )
    chunk = ChunkParams(
        chunk_size=int(keys.get("chunk_size", "4096")),
        branching=int(keys.get("branching", "128")),
    )
    coding = None
    if "k" in keys:
        coding = CodingParams(k=int(keys["k"]), n=int(keys["n"]))
    return ExperimentConfig(
        sim=sim,
        file_sizes=tuple(int(tok) for tok in keys["file_sizes"].split(",") if tok),
        chunk=chunk,
        coding=coding,
        target_r=int(keys.get("target_r", "1")),
        fractions=tuple(
            float(tok) for tok in keys.get("fractions", "0").split(",") if tok
        ),
        iterations=int(keys.get("iterations", "1")),
        min_degree=int(keys["min_degree"]),
        outdir=keys.get("out", "results"),
    )

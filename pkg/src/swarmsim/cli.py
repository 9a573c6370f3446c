"""Command-line interface exposing every pipeline stage for scripting.

Network state persists between invocations as a snapshot directory (the
--state flag). Exit codes: 0 success, 1 usage or bad input, 2 infeasible
deletion plan, 3 availability failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .chunker import ChunkParams
from .codec import CodingParams, manifest_root, manifest_text, parse_manifest_text
from .errors import (
    InfeasiblePlanError,
    SwarmSimError,
    SyncModeError,
)
from .harness import (
    census,
    emit_reports,
    parse_experiment_config,
    prepare,
    run_experiment,
)
from .netsim import (
    Network,
    SimConfig,
    SYNC_FULL,
    SYNC_NONE,
    load_snapshot,
    network_from_snapshot,
    save_snapshot,
    spawn_network,
)
from .seeds import derive_rng
from .tools import (
    combinestorage,
    bakedeletion,
    deletechunks,
    deletion_list_from_text,
    deletion_list_to_text,
    listchunks,
    placement_from_network,
    placement_from_text,
    placement_to_text,
)

EX_OK = 0
EX_USAGE = 1
EX_INFEASIBLE = 2
EX_UNAVAILABLE = 3
EX_IO = 4


class UsageError(Exception):
    pass


class AvailabilityFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep argparse from sys.exit(2)
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="swarmsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        return p

    p = add("upload", "chunk a file and place it on the network")
    p.add_argument("--file", required=True, help="input file path")
    p.add_argument("--state", required=True, help="network state directory")
    p.add_argument("--out", help="write the manifest to this path")
    p.add_argument("--peers", type=int, help="peer count for a fresh network")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--view-size", type=int, default=16)
    p.add_argument("--ns", type=int, default=4)
    p.add_argument("--backends", type=int, default=29)
    p.add_argument("--no-sync", action="store_true",
                   help="upload without the pull round")
    p.add_argument("--chunk-size", type=int, default=4096)
    p.add_argument("--branching", type=int, default=128)
    p.add_argument("--k", type=int, help="data chunks per coding group")
    p.add_argument("--n", type=int, help="total chunks per coding group")

    p = add("retrieve", "fetch a file back out of the network")
    p.add_argument("--state", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="write the file here")
    p.add_argument("--entry", type=int, help="entry peer index")
    p.add_argument("--seed", type=int, default=0,
                   help="entry peer draw when --entry is not given")

    p = add("listchunks", "print every chunk address of a file, root first")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="write addresses here instead of stdout")

    p = add("bakedeletion", "plan deletions for uniform replication")
    p.add_argument("--placement", required=True, help="placement map file")
    p.add_argument("--target-r", type=int, required=True)
    p.add_argument("--out", required=True, help="write the deletion list here")

    p = add("combinestorage", "merge deletion lists")
    p.add_argument("lists", nargs="*", help="deletion list files")
    p.add_argument("--out", required=True)
    p.add_argument("--placement", help="re-verify rule A against this placement")

    p = add("deletechunks", "apply a deletion list to the network state")
    p.add_argument("--state", required=True)
    p.add_argument("--list", required=True, dest="list_path")
    p.add_argument("--no-sync", action="store_true",
                   help="switch the state to no_sync before deleting")

    p = add("snapshot", "copy the network state to a snapshot directory")
    p.add_argument("--state", required=True)
    p.add_argument("--out", required=True)

    p = add("restore", "replace the network state with a snapshot")
    p.add_argument("--state", required=True)
    p.add_argument("--snapshot", required=True)

    p = add("experiment", "run the full prepare/iterate/report pipeline")
    p.add_argument("--config", required=True, help="key=value experiment file")
    p.add_argument("--out", help="override the config's output directory")

    p = add("stats", "census reports and placement maps from the state")
    p.add_argument("--state", required=True)
    p.add_argument("--out", help="write census CSVs to this directory")
    p.add_argument("--manifest", action="append", default=[],
                   help="file manifest (repeatable, for --placement-out)")
    p.add_argument("--placement-out", help="write a placement map here")

    return parser


def _load_network(state: str) -> Network:
    return network_from_snapshot(load_snapshot(state))


def _save_network(network: Network, state: str) -> None:
    save_snapshot(network.snapshot(), state)


def _cmd_upload(args, stdout) -> int:
    if (args.k is None) != (args.n is None):
        raise UsageError("--k and --n must be given together")
    data = Path(args.file).read_bytes()
    state = Path(args.state)
    if (state / "manifest.txt").is_file():
        network = _load_network(args.state)
        network.sync_mode = SYNC_NONE if args.no_sync else SYNC_FULL
    else:
        if args.peers is None:
            raise UsageError("--peers is required for a fresh network")
        network = spawn_network(
            SimConfig(
                num_peers=args.peers,
                seed=args.seed,
                view_size=args.view_size,
                ns=args.ns,
                sync_mode=SYNC_NONE if args.no_sync else SYNC_FULL,
                num_backends=args.backends,
            )
        )
    coding = CodingParams(k=args.k, n=args.n) if args.k is not None else None
    params = ChunkParams(chunk_size=args.chunk_size, branching=args.branching)
    manifest = network.upload(data, params, coding)
    _save_network(network, args.state)
    if args.out:
        Path(args.out).write_text(manifest_text(manifest))
    print(manifest_root(manifest).hex(), file=stdout)
    return EX_OK


def _cmd_retrieve(args, stdout) -> int:
    network = _load_network(args.state)
    manifest = parse_manifest_text(Path(args.manifest).read_text())
    if args.entry is not None:
        if not 0 <= args.entry < len(network.peer_ids):
            raise UsageError(f"entry peer index {args.entry} out of range")
        entry = network.peer_ids[args.entry]
    else:
        live = network.live_peers()
        if not live:
            raise AvailabilityFailure("no live peers")
        entry = live[derive_rng("cli-entry", args.seed).randrange(len(live))]
    data, stats = network.retrieve(manifest, entry)
    if not stats.success:
        raise AvailabilityFailure(stats.error or "retrieval failed")
    Path(args.out).write_bytes(data)
    print(
        f"retrieved {len(data)} bytes in {stats.hops} hops "
        f"({stats.repaired_groups} groups repaired)",
        file=stdout,
    )
    return EX_OK


def _cmd_listchunks(args, stdout) -> int:
    manifest = parse_manifest_text(Path(args.manifest).read_text())
    addresses = listchunks(manifest)
    text = "".join(a.hex() + "\n" for a in addresses)
    if args.out:
        Path(args.out).write_text(text)
    else:
        stdout.write(text)
    return EX_OK


def _cmd_bakedeletion(args, stdout) -> int:
    placement = placement_from_text(Path(args.placement).read_text())
    entries = bakedeletion(placement, args.target_r)
    Path(args.out).write_text(deletion_list_to_text(entries))
    print(f"planned {len(entries)} deletions", file=stdout)
    return EX_OK


def _cmd_combinestorage(args, stdout) -> int:
    lists = [
        deletion_list_from_text(Path(path).read_text()) for path in args.lists
    ]
    placement = None
    if args.placement:
        placement = placement_from_text(Path(args.placement).read_text())
    merged = combinestorage(lists, placement)
    Path(args.out).write_text(deletion_list_to_text(merged))
    print(f"combined {len(merged)} deletions", file=stdout)
    return EX_OK


def _cmd_deletechunks(args, stdout) -> int:
    network = _load_network(args.state)
    if args.no_sync:
        network.sync_mode = SYNC_NONE
    entries = deletion_list_from_text(Path(args.list_path).read_text())
    report = deletechunks(network, entries)
    _save_network(network, args.state)
    print(f"applied={report.applied} missing={report.missing}", file=stdout)
    return EX_OK


def _cmd_snapshot(args, stdout) -> int:
    snap = load_snapshot(args.state)
    save_snapshot(snap, args.out)
    print(snap.digest, file=stdout)
    return EX_OK


def _cmd_restore(args, stdout) -> int:
    snap = load_snapshot(args.snapshot)
    network = network_from_snapshot(snap)
    _save_network(network, args.state)
    print(network.census_digest(), file=stdout)
    return EX_OK


def _cmd_experiment(args, stdout) -> int:
    config = parse_experiment_config(Path(args.config).read_text())
    _, results, paths = run_experiment(config, args.out)
    successes = sum(1 for r in results if r.success)
    print(f"{successes}/{len(results)} retrievals succeeded", file=stdout)
    for path in paths:
        print(str(path), file=stdout)
    return EX_OK


def _cmd_stats(args, stdout) -> int:
    network = _load_network(args.state)
    report = census(network)
    if args.manifest and args.placement_out:
        files = {}
        for path in args.manifest:
            manifest = parse_manifest_text(Path(path).read_text())
            files[manifest_root(manifest).hex()] = listchunks(manifest)
        placement = placement_from_network(network, files)
        Path(args.placement_out).write_text(placement_to_text(placement))
    elif args.placement_out:
        raise UsageError("--placement-out needs at least one --manifest")
    if args.out:
        emit_reports([], report, args.out)
        (Path(args.out) / "availability.csv").unlink()
        print(str(Path(args.out) / "replicas_per_chunk.csv"), file=stdout)
        print(str(Path(args.out) / "chunks_per_peer.csv"), file=stdout)
    else:
        print(
            f"peers={len(network.peer_ids)} chunks={report.distinct_chunks} "
            f"replicas={report.total_replicas}",
            file=stdout,
        )
        for count in sorted(report.replicas_per_chunk):
            print(f"replicas={count} chunks={report.replicas_per_chunk[count]}",
                  file=stdout)
    return EX_OK


_COMMANDS = {
    "upload": _cmd_upload,
    "retrieve": _cmd_retrieve,
    "listchunks": _cmd_listchunks,
    "bakedeletion": _cmd_bakedeletion,
    "combinestorage": _cmd_combinestorage,
    "deletechunks": _cmd_deletechunks,
    "snapshot": _cmd_snapshot,
    "restore": _cmd_restore,
    "experiment": _cmd_experiment,
    "stats": _cmd_stats,
}


def run(argv: list[str], stdout=None, stderr=None) -> int:
    """Parse and execute one command, mapping errors to exit codes."""
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(parser.format_usage(), end="", file=stderr)
        print(f"error: {exc}", file=stderr)
        return EX_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command is None:
        print(parser.format_usage(), end="", file=stderr)
        return EX_USAGE
    try:
        return _COMMANDS[args.command](args, stdout)
    except UsageError as exc:
        print(f"error: {exc}", file=stderr)
        return EX_USAGE
    except InfeasiblePlanError as exc:
        print(f"infeasible: {exc}", file=stderr)
        return EX_INFEASIBLE
    except AvailabilityFailure as exc:
        print(f"unavailable: {exc}", file=stderr)
        return EX_UNAVAILABLE
    except SyncModeError as exc:
        print(f"error: {exc}", file=stderr)
        return EX_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=stderr)
        return EX_IO
    except (SwarmSimError, ValueError) as exc:
        print(f"error: {exc}", file=stderr)
        return EX_USAGE


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()

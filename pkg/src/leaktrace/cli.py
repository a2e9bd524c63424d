"""Command-line entry point.

Exit status: 0 on success, 1 when a transfer aborts or a scenario verdict is
wrong, 2 on usage errors (bad flags, unknown parties, unreadable files).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .audit import HonestResponder, TolerancePolicy, audit_composed, generate_lineage
from .bench import bench_vary_parts, bench_vary_size, format_table, parts_trends, size_ratios
from .crypto import GROUP_MODE_ENV, SYSTEM_RANDOM, SeededRandomness, group_from_env
from .document import DocumentError, read_pgm, write_pgm
from .harness import BUILTIN_SCENARIOS, ScenarioError, load_scenario, run_scenario
from .protocol import ProtocolAbort, Role, trusted_transfer, untrusted_transfer
from .store import PartyStore, StoreError
from .watermark import DEFAULT_SETTINGS, WatermarkDescriptor, embed


class UsageError(Exception):
    pass


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="leaktrace", description="Accountable document transfer and leak auditing.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="create a party with a fresh signing key")
    p.add_argument("--id", required=True)
    p.add_argument("--role", choices=[r.value for r in Role], default="consumer")
    p.add_argument("--seed", help="derive the key deterministically (testing only)")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("transfer", help="run both roles of a transfer locally")
    p.add_argument("--mode", choices=["trusted", "untrusted"], required=True)
    p.add_argument("--from", dest="sender", required=True)
    p.add_argument("--to", dest="recipient", required=True)
    p.add_argument("--parts", type=int, default=16)
    p.add_argument("--in", dest="infile", type=Path, help="document held by the sender (default: its current copy)")
    p.add_argument("--seed")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("leak", help="emit a version a party holds")
    p.add_argument("--party", required=True)
    p.add_argument("--version", choices=["held", "marked"], default="held",
                   help="held: the party's copy; marked: D' of its latest fingerprinted send")
    p.add_argument("--dest", type=Path, help="output PGM (default: OUT/leaked.pgm)")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("audit", help="reconstruct the lineage of a leaked document")
    p.add_argument("--leaked", required=True, type=Path)
    p.add_argument("--owner", required=True)
    p.add_argument("--region", type=_ints, help="x,y,width,height of the owner's component in a composed leak")
    p.add_argument("--max-missing", type=int, default=0)
    p.add_argument("--allow-wrong-bit", action="store_true")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("scenario", help="scripted multi-party scenarios")
    ssub = p.add_subparsers(dest="action", required=True)
    r = ssub.add_parser("run")
    r.add_argument("file", help="scenario JSON file or built-in name: " + ", ".join(BUILTIN_SCENARIOS))
    r.add_argument("--seed", default="0")
    r.add_argument("--out", type=Path)

    p = sub.add_parser("bench", help=f"phase microbenchmarks (group from ${GROUP_MODE_ENV})")
    p.add_argument("--vary", choices=["parts", "size"], required=True)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--size", type=int, default=512, help="image side for --vary parts")
    p.add_argument("--parts", type=_ints, default=[16, 64, 256, 1024])
    p.add_argument("--n", type=int, default=256, help="part count for --vary size")
    p.add_argument("--sizes", type=_ints, default=[256, 512, 1024, 2048])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    return ap


def _rng(seed):
    return SeededRandomness(seed) if seed is not None else SYSTEM_RANDOM


def cmd_keygen(args) -> int:
    store = PartyStore(args.out)
    party = store.create(args.id, args.role, _rng(args.seed))
    print(f"created {party.ident.role.value} {party.name} vk={party.ident.vk.hex()}")
    return 0


def cmd_transfer(args) -> int:
    store = PartyStore(args.out)
    sender, recipient = store.load(args.sender), store.load(args.recipient)
    doc = read_pgm(args.infile) if args.infile else sender.holding
    if doc is None:
        raise UsageError(f"{sender.name} holds no document; pass --in")
    sender.holding = doc
    rng = _rng(args.seed)
    if args.mode == "trusted":
        res = trusted_transfer(sender, recipient, doc, rng=rng)
    else:
        res = untrusted_transfer(sender, recipient, args.parts, document=doc, params=group_from_env(), rng=rng)
    store.save(sender)
    store.save(recipient)
    tdir = args.out / "transcripts"
    tdir.mkdir(parents=True, exist_ok=True)
    res.transcript.save(tdir / f"{sender.name}-{recipient.name}-{res.sender_record.tau}.json")
    print(f"{args.mode} transfer {sender.name} -> {recipient.name} tau={res.sender_record.tau} "
          f"messages={len(res.transcript.messages)}")
    return 0


def cmd_leak(args) -> int:
    store = PartyStore(args.out)
    party = store.load(args.party)
    if args.version == "held":
        doc = party.holding
        if doc is None:
            raise UsageError(f"{party.name} holds no document")
    else:
        untrusted = [r for r in party.sent if r.k2 is not None]
        if not untrusted:
            raise UsageError(f"{party.name} never ran a fingerprinted untrusted transfer")
        rec = untrusted[-1]
        doc = embed(rec.original, WatermarkDescriptor(rec.sigma.payload(), rec.k1), DEFAULT_SETTINGS.document)
    dest = args.dest or args.out / "leaked.pgm"
    write_pgm(doc, dest)
    print(f"{party.name} leaked its {args.version} version to {dest}")
    return 0


def cmd_audit(args) -> int:
    store = PartyStore(args.out)
    parties = store.load_all()
    if args.owner not in parties:
        raise UsageError(f"unknown owner {args.owner!r}")
    leaked = read_pgm(args.leaked)
    responder = HonestResponder(parties)
    policy = TolerancePolicy(args.max_missing, args.allow_wrong_bit)
    if args.region:
        if len(args.region) != 4:
            raise UsageError("--region needs x,y,width,height")
        lineage = audit_composed(leaked, tuple(args.region), args.owner, responder, policy)
    else:
        lineage = generate_lineage(leaked, args.owner, responder, policy)
    report = lineage.to_json()
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "lineage.json").write_text(report)
    print(report)
    print(f"lineage: {' -> '.join(lineage.parties)}; blamed: {lineage.verdict.id}")
    return 0


def cmd_scenario(args) -> int:
    if args.file in BUILTIN_SCENARIOS:
        scenario, base = BUILTIN_SCENARIOS[args.file](), None
    else:
        path = Path(args.file)
        scenario, base = load_scenario(path), path.parent
    result = run_scenario(scenario, seed=args.seed, group=group_from_env(), base=base)
    out = json.dumps(result.to_dict(), indent=2)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / f"scenario-{result.name}.json").write_text(out)
    for lin in result.lineages:
        print(f"lineage: {' -> '.join(lin.parties)}; blamed: {lin.verdict.id}")
    if result.abort:
        print(f"transfer aborted: {result.abort}")
    print(f"{result.name}: expected {result.expected}, {'OK' if result.ok else 'MISMATCH'}")
    return 0 if result.ok else 1


def cmd_bench(args) -> int:
    if args.reps < 1:
        raise UsageError("--reps must be positive")
    if args.vary == "parts":
        if any(n < 1 for n in args.parts):
            raise UsageError("part counts must be positive")
        reports = bench_vary_parts(args.size, args.parts, args.reps, seed=args.seed)
        summary = {p: {"slope_s_per_part": f.slope, "r2": f.r2} for p, f in parts_trends(reports).items()}
    else:
        reports = bench_vary_size(args.n, args.sizes, args.reps, seed=args.seed)
        summary = {p: {"max_min_ratio": r} for p, r in size_ratios(reports).items()}
    print(format_table(reports))
    print(json.dumps(summary, indent=2))
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / f"bench-{args.vary}.json").write_text(
            json.dumps({"reports": [r.to_dict() for r in reports], "summary": summary}, indent=2))
    return 0


COMMANDS = {"keygen": cmd_keygen, "transfer": cmd_transfer, "leak": cmd_leak, "audit": cmd_audit,
            "scenario": cmd_scenario, "bench": cmd_bench}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    try:
        return COMMANDS[args.command](args)
    except ProtocolAbort as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 1
    except (UsageError, StoreError, ScenarioError, DocumentError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command line: ``evstream serve | bench | report``."""

from __future__ import annotations

import argparse
import asyncio
import logging
import os
import signal
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import pipeline
from .energy import SyntheticPowerModel
from .errors import BindFailure, EvStreamError, MissingInputs
from .protection import profile as make_profile
from .pubsub import DEFAULT_MAX_QUEUE
from .server import Node, Server, parse_address

log = logging.getLogger("evstream")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _add_profile_flags(p: argparse.ArgumentParser, default: str) -> None:
    p.add_argument("--profile", default=default,
                   help="protection profile(s): native, enclave_like, encrypted_vm_like, label:mode, or 'panels'")
    p.add_argument("--per-call-ns", type=int, help="override fixed cost per request")
    p.add_argument("--per-byte-ns", type=float, help="override cost per payload byte")
    p.add_argument("--epc-bytes", type=int, help="override protected-memory capacity")
    p.add_argument("--page-penalty-ns", type=int, help="override cost per page touched beyond capacity")


def _overrides(args) -> dict:
    return {
        "per_call_ns": args.per_call_ns,
        "per_byte_ns": args.per_byte_ns,
        "epc_capacity_bytes": args.epc_bytes,
        "page_fault_penalty_ns": args.page_penalty_ns,
    }


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get("EVSTREAM_OUT") or "evstream-out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evstream", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("serve", help="run the store/pubsub server")
    s.add_argument("--listen", default="127.0.0.1:7469", help="host:port to bind (port 0 picks a free one)")
    s.add_argument("--max-queue", type=int, default=DEFAULT_MAX_QUEUE, help="per-subscriber queue bound (events)")
    s.add_argument("--workers", type=int, default=1, help="threads evaluating callback rules")
    _add_profile_flags(s, "native")

    b = sub.add_parser("bench", help="run a benchmark sweep")
    b.add_argument("--connect", help="use an already running server at host:port instead of spawning one")
    b.add_argument("--rates", type=_floats, default=list(pipeline.DEFAULT_RATES), help="comma-separated msgs/s")
    b.add_argument("--sizes", type=_ints, default=list(pipeline.DEFAULT_SIZES), help="comma-separated message sizes (B)")
    b.add_argument("--duration", type=float, default=10.0, help="seconds per cell")
    b.add_argument("--publishers", type=int, default=1)
    b.add_argument("--subscribers", type=int, default=1)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--any-size", action="store_true", help="allow sizes outside 64..512 B")
    power = b.add_mutually_exclusive_group()
    power.add_argument("--power-trace", type=Path, help="CSV t_s,power_w covering the whole sweep")
    power.add_argument("--synthetic-power", default=pipeline.DEFAULT_SYNTHETIC, metavar="P_IDLE,P_MAX,CAPACITY")
    b.add_argument("--out", help="output directory (default $EVSTREAM_OUT or ./evstream-out)")
    _add_profile_flags(b, "native")

    r = sub.add_parser("report", help="aggregate a bench output directory")
    r.add_argument("--out", help="bench output directory (default $EVSTREAM_OUT or ./evstream-out)")
    return parser


async def _serve(args) -> int:
    host, port = parse_address(args.listen)
    profile = make_profile(args.profile, **_overrides(args))
    node = Node(profile, max_queue=args.max_queue, workers=args.workers)
    server = Server(node, host, port)
    try:
        await server.start()
    except BindFailure as exc:
        print(f"evstream: {exc}", file=sys.stderr)
        return 2
    print(f"listening on {server.host}:{server.port}", flush=True)
    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGTERM, signal.SIGINT):
        loop.add_signal_handler(sig, stop.set)
    await stop.wait()
    await server.close()
    node.close()
    return 0


def _bench(args) -> int:
    try:
        profiles = pipeline.parse_profiles(args.profile, **_overrides(args))
        if args.power_trace is None:
            SyntheticPowerModel.parse(args.synthetic_power)
        cfg = pipeline.RunConfig(
            profiles=profiles,
            rates=args.rates,
            sizes=args.sizes,
            duration_s=args.duration,
            publishers=args.publishers,
            subscribers=args.subscribers,
            seed=args.seed,
            out=_out_dir(args),
            connect=parse_address(args.connect) if args.connect else None,
            power_trace=args.power_trace,
            synthetic_power=args.synthetic_power,
            allow_any_size=args.any_size,
        )
    except (EvStreamError, ValueError) as exc:
        print(f"evstream: {exc}", file=sys.stderr)
        return 2
    manifest = pipeline.run_sweep(cfg)
    failed = [c["id"] for c in manifest["cells"] if c["status"] != "ok"]
    ok = len(manifest["cells"]) - len(failed)
    print(f"{ok} cells ok, {len(failed)} failed; output in {cfg.out}")
    return 1 if failed else 0


def _report(args) -> int:
    try:
        paths = pipeline.build_report(_out_dir(args))
    except MissingInputs as exc:
        print(f"evstream: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    if args.command == "serve":
        try:
            return asyncio.run(_serve(args))
        except EvStreamError as exc:
            print(f"evstream: {exc}", file=sys.stderr)
            return 2
    if args.command == "bench":
        return _bench(args)
    return _report(args)


if __name__ == "__main__":
    sys.exit(main())

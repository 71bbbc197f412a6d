"""Command-line entry point.

Subcommands:
    run <scenario.yaml>          run an episode, print metrics, save the trace
    discrepancy <real> <synth>   Algorithm-on-frames: PPM+PGM pairs -> xyz cloud
    report <trace.jsonl>         bandwidth / deviation tables from a trace log
    serve                        live gateway for the browser console

Exit codes: 0 success, 2 configuration errors, 3 episode timeout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import frameio
from .discrepancy import DiscrepancyParams, detect_discrepancies
from .scenario import ConfigError, Scenario, load
from .tasks import bandwidth_report, run_episode

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TIMEOUT = 3


def _cmd_run(args) -> int:
    sc = load(args.scenario)
    result = run_episode(sc)
    if args.trace:
        Path(args.trace).write_text(result.trace_text())
    out = {"metrics": result.metrics.to_dict(), "bandwidth": bandwidth_report(result.metrics)}
    json.dump(out, sys.stdout, indent=2)
    print()
    return EXIT_TIMEOUT if result.metrics.incomplete else EXIT_OK


def _cmd_discrepancy(args) -> int:
    if args.camera:
        cam = load(args.camera).camera
    else:
        cam = Scenario().camera
    real = frameio.read_frame(args.real, (cam.depth_min, cam.depth_max))
    synth = frameio.read_frame(args.synth, (cam.depth_min, cam.depth_max))
    params = DiscrepancyParams(
        window=args.window, tau=args.tau, erode_kernel=args.erode, dilate_kernel=args.dilate
    )
    cloud = detect_discrepancies(real, synth, cam, params)
    if args.out:
        frameio.write_xyz(args.out, cloud.points)
        print(f"{len(cloud)} points -> {args.out}")
    else:
        frameio.write_xyz(sys.stdout, cloud.points)
    return EXIT_OK


def _cmd_report(args) -> int:
    bytes_tx: dict[str, int] = {}
    packets_tx: dict[str, int] = {}
    completion = None
    devs = []
    for line in Path(args.trace).read_text().splitlines():
        if not line.strip():
            continue
        ev = json.loads(line)
        kind = ev.get("ev")
        if kind in ("tx", "drop"):
            bytes_tx[ev["ch"]] = bytes_tx.get(ev["ch"], 0) + ev["n"]
            packets_tx[ev["ch"]] = packets_tx.get(ev["ch"], 0) + 1
        elif kind == "video":
            bytes_tx["video"] = bytes_tx.get("video", 0) + ev["n"]
            packets_tx["video"] = packets_tx.get("video", 0) + ev["pkts"]
        elif kind == "done":
            completion = ev["t"]
        elif kind == "rob":
            devs.append(ev["tip"])
    print("channel      packets        bytes")
    for ch in sorted(bytes_tx):
        print(f"{ch:<12} {packets_tx[ch]:>7} {bytes_tx[ch]:>12}")
    if completion is not None:
        print(f"completion time: {completion:.3f} s")
    conv = bytes_tx.get("video", 0)
    coord = bytes_tx.get("object", 0)
    if conv and coord:
        print(f"byte ratio (video/object): {conv / coord:.1f}")
        print(f"packet ratio: {packets_tx['video'] / packets_tx['object']:.1f}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import asyncio

    from .gateway import serve

    sc = load(args.scenario)
    print(f"gateway on ws://{args.host}:{args.port} (scenario {args.scenario})")
    try:
        asyncio.run(serve(sc, args.host, args.port, speed=args.speed))
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twinop", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario episode")
    run_p.add_argument("scenario", help="scenario YAML file")
    run_p.add_argument("--trace", help="write the event trace to this JSONL file")
    run_p.set_defaults(fn=_cmd_run)

    d_p = sub.add_parser("discrepancy", help="run the discrepancy pipeline on frame files")
    d_p.add_argument("real", help="real frame prefix (<prefix>.ppm + <prefix>.pgm)")
    d_p.add_argument("synth", help="synthetic frame prefix")
    d_p.add_argument("--camera", help="scenario YAML supplying the camera block")
    d_p.add_argument("--out", help="write cloud to this .xyz file (default: stdout)")
    d_p.add_argument("--tau", type=float, default=0.6)
    d_p.add_argument("--window", type=int, default=7)
    d_p.add_argument("--erode", type=int, default=3)
    d_p.add_argument("--dilate", type=int, default=5)
    d_p.set_defaults(fn=_cmd_discrepancy)

    r_p = sub.add_parser("report", help="summarize a trace log")
    r_p.add_argument("trace", help="trace JSONL file")
    r_p.set_defaults(fn=_cmd_report)

    s_p = sub.add_parser("serve", help="start the live gateway")
    s_p.add_argument("--scenario", required=True, help="scenario YAML file")
    s_p.add_argument("--host", default="127.0.0.1")
    s_p.add_argument("--port", type=int, default=8765)
    s_p.add_argument("--speed", type=float, default=1.0, help="virtual/wall time ratio")
    s_p.set_defaults(fn=_cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (frameio.FrameFileError, FileNotFoundError) as err:
        print(f"input error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

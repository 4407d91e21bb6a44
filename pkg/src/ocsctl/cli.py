"""``ocsctl``: operator CLI for the controller and the emulated fleet."""

from __future__ import annotations

import argparse
import asyncio
import csv
import io
import json
import logging
import os
import signal
import sys
from pathlib import Path


EXIT_CODES = {
    "AlreadyExist": 10,
    "ConnectionFailed": 11,
    "NotFound": 12,
    "InvalidRange": 13,
    "BlockingOccured": 14,
    "PathOperFailed": 15,
}
EXIT_UNREACHABLE = 3
EXIT_USAGE = 2
DEFAULT_ADDR = "127.0.0.1:8181"

# CLI command -> NBI method; one command per method
COMMANDS = {
    ("switch", "add"): "AddSwitch",
    ("terminal", "add"): "AddTerminal",
    ("link", "add"): "AddLink",
    ("network", "create"): "CreateNetwork",
    ("resource", "status"): "UpdateResourceStatus",
    ("path", "create"): "CreateFiberPath",
    ("path", "delete"): "DeleteFiberPath",
    ("path", "restore"): "RestoreFiberPath",
    ("path", "availability"): "UpdatePathAvailability",
    ("event", "add"): "AddEvent",
    ("action", "create"): "CreateAction",
    ("action", "delete"): "DeleteAction",
    ("handler", "event"): "CreateEventHandler",
    ("handler", "alarm"): "CreateAlarmHandler",
}


def _split(value: str | None) -> list[str] | None:
    if value is None:
        return None
    return [v for v in value.split(",") if v]


def _addr(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    return host, int(port)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ocsctl", description="Control an optical circuit switched network.")
    p.add_argument("--controller", type=_addr, default=None,
                   help=f"controller address (default $OCSCTL_ADDR or {DEFAULT_ADDR})")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--timeout", type=float, default=60.0, help="seconds to wait for a reply")
    p.add_argument("-v", "--verbose", action="store_true")
    top = p.add_subparsers(dest="group", required=True)

    def group(name, help_):
        g = top.add_parser(name, help=help_)
        return g.add_subparsers(dest="action", required=True)

    sw = group("switch", "OCS registration").add_parser("add", help="AddSwitch")
    sw.add_argument("--id", required=True, dest="ocs_id")
    sw.add_argument("--host", required=True)
    sw.add_argument("--port", type=int, required=True)
    sw.add_argument("--tx", required=True, help="comma-separated Tx port labels")
    sw.add_argument("--rx", required=True, help="comma-separated Rx port labels")

    term = group("terminal", "terminal registration").add_parser("add", help="AddTerminal")
    term.add_argument("--id", required=True, dest="terminal_id")
    term.add_argument("--host", required=True)
    term.add_argument("--port", type=int, required=True)

    link = group("link", "fiber strand registration").add_parser("add", help="AddLink")
    link.add_argument("--id", required=True, dest="link_id")
    link.add_argument("--src", required=True)
    link.add_argument("--dst", required=True)
    link.add_argument("--src-port", required=True)
    link.add_argument("--dst-port", required=True)

    net = group("network", "bulk registration").add_parser("create", help="CreateNetwork")
    net.add_argument("file", type=Path, help="topology file, JSON or YAML")

    res = group("resource", "resource availability").add_parser("status", help="UpdateResourceStatus")
    res.add_argument("--id", required=True, dest="object_id", help="resource id; ports as <ocs>:<port>")
    res.add_argument("--type", required=True, dest="object_type", choices=["switch", "terminal", "link", "port"])
    res.add_argument("--status", required=True, choices=["AVAILABLE", "UNAVAILABLE"])

    path = group("path", "fiber paths")
    for name, help_ in (("create", "CreateFiberPath"), ("restore", "RestoreFiberPath")):
        sp = path.add_parser(name, help=help_)
        sp.add_argument("--svc", required=True)
        sp.add_argument("--a", required=True)
        sp.add_argument("--z", required=True)
        sp.add_argument("--alg", default=None, help="path computation algorithm")
        sp.add_argument("--ocs-list", default=None, help="comma-separated OCS ids to route through")
    sp = path.add_parser("delete", help="DeleteFiberPath")
    sp.add_argument("--svc", required=True)
    sp = path.add_parser("availability", help="UpdatePathAvailability")
    sp.add_argument("--svc", required=True)
    sp.add_argument("--status", required=True, choices=["AVAILABLE", "UNAVAILABLE"])

    ev = group("event", "user-defined events").add_parser("add", help="AddEvent")
    ev.add_argument("--id", required=True, dest="event_id")
    ev.add_argument("--type", required=True, dest="event_type", choices=["signal_detection", "signal_degradation"])
    ev.add_argument("--ocs", required=True)
    ev.add_argument("--port", required=True)
    ev.add_argument("--threshold", type=float, required=True, help="dBm")

    act = group("action", "path control actions")
    sp = act.add_parser("create", help="CreateAction")
    sp.add_argument("--id", required=True, dest="act_id")
    sp.add_argument("--svc", required=True)
    sp.add_argument("--a", required=True)
    sp.add_argument("--z", required=True)
    sp.add_argument("--alg", default=None)
    sp.add_argument("--ocs-list", default=None)
    sp = act.add_parser("delete", help="DeleteAction")
    sp.add_argument("--id", required=True, dest="act_id")
    sp.add_argument("--svc", required=True)

    hd = group("handler", "bind actions to events or path alarms")
    sp = hd.add_parser("event", help="CreateEventHandler")
    sp.add_argument("--event", required=True)
    sp.add_argument("--action", required=True, dest="act")
    sp = hd.add_parser("alarm", help="CreateAlarmHandler")
    sp.add_argument("--svc", required=True)
    sp.add_argument("--action", required=True, dest="act")

    bench = top.add_parser("bench", help="reproduce an experiment against an emulated fleet")
    bench.add_argument("scenario", choices=["fig9", "fig10", "fig11", "fig13", "overhead", "events"])
    bench.add_argument("--runs", type=int, default=10)
    bench.add_argument("--n", type=int, action="append", help="fig13 size N (repeatable)")
    bench.add_argument("--latency", default=None, help="normal:<mean>:<std> or fixed:<s>")
    bench.add_argument("--seed", type=int, default=0)

    emu = group("emulate", "run emulated devices").add_parser("fleet", help="serve a fleet for a topology")
    emu.add_argument("topology", type=Path)
    emu.add_argument("--latency", default="0")
    emu.add_argument("--fault", action="append", default=[], help="<ocs>=<mode>, repeatable")
    emu.add_argument("--out", type=Path, default=None, help="write the controller-facing topology here")
    emu.add_argument("--seed", type=int, default=0)
    emu.add_argument("--bind", action="store_true",
                     help="listen on the ports named in the file instead of ephemeral ones")

    srv = top.add_parser("serve", help="run the controller")
    srv.add_argument("--bind", type=_addr, default=None, help=f"listen address (default {DEFAULT_ADDR})")
    srv.add_argument("--state-dir", type=Path, default=Path("ocsctl-state"))
    srv.add_argument("--policy", choices=["RECONFIGURE", "MARK_UNAVAILABLE"], default="MARK_UNAVAILABLE")
    srv.add_argument("--health-interval", type=float, default=5.0, help="seconds; 0 disables")
    srv.add_argument("--auto-restore-on-hello", action="store_true")

    rep = top.add_parser("reconcile-report", help="show the last reconciliation report")
    rep.add_argument("--state-dir", type=Path, default=Path("ocsctl-state"))
    return p


def request_for(args) -> tuple[str, dict]:
    """Map parsed arguments to (NBI method, params)."""
    method = COMMANDS[(args.group, args.action)]
    g, a = args.group, args.action
    if g == "switch":
        params = {"ocs_id": args.ocs_id, "conn_info": {"host": args.host, "port": args.port},
                  "tx_ports": _split(args.tx), "rx_ports": _split(args.rx)}
    elif g == "terminal":
        params = {"terminal_id": args.terminal_id, "conn_info": {"host": args.host, "port": args.port}}
    elif g == "link":
        params = {"link_id": args.link_id, "src": args.src, "dst": args.dst,
                  "src_port": args.src_port, "dst_port": args.dst_port}
    elif g == "network":
        params = {"topology_file": args.file.read_text()}
    elif g == "resource":
        params = {"object_id": args.object_id, "object_type": args.object_type, "status": args.status}
    elif g == "path" and a in ("create", "restore"):
        params = {"svc_id": args.svc, "a": args.a, "z": args.z}
        if args.alg is not None:
            params["pce_alg"] = args.alg
        if args.ocs_list is not None:
            params["ocs_list"] = _split(args.ocs_list)
    elif g == "path" and a == "delete":
        params = {"svc_id": args.svc}
    elif g == "path":
        params = {"svc_id": args.svc, "status": args.status}
    elif g == "event":
        params = {"event_id": args.event_id, "event_type": args.event_type, "ocs": args.ocs,
                  "port": args.port, "threshold": args.threshold}
    elif g == "action" and a == "create":
        params = {"act_id": args.act_id, "svc_id": args.svc, "a": args.a, "z": args.z}
        if args.alg is not None:
            params["pce_alg"] = args.alg
        if args.ocs_list is not None:
            params["ocs_list"] = _split(args.ocs_list)
    elif g == "action":
        params = {"act_id": args.act_id, "svc_id": args.svc}
    elif a == "event":
        params = {"event_id": args.event, "act_id": args.act}
    else:
        params = {"svc_id": args.svc, "act_id": args.act}
    return method, params


def _human(result) -> str:
    if not isinstance(result, dict):
        return str(result)
    width = max((len(k) for k in result), default=0)
    lines = []
    for key, value in result.items():
        if isinstance(value, list):
            value = " -> ".join(map(str, value)) if key == "hops" else ", ".join(map(str, value))
        lines.append(f"{key:<{width}}  {value}")
    return "\n".join(lines)


def _rows_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in row.items()})
    return buf.getvalue()


def _summary(scenario: str, rows: list[dict]) -> list[str]:
    import statistics

    out = []
    if scenario in ("fig9", "fig13"):
        key = "route" if scenario == "fig9" else "n"
        for value in dict.fromkeys(r[key] for r in rows):
            for op in ("establish", "release"):
                xs = [r["seconds"] for r in rows if r[key] == value and r["op"] == op]
                out.append(f"# {key}={value} {op}: mean={statistics.mean(xs):.3f}s max={max(xs):.3f}s "
                           f"all<1.0s={all(x < 1.0 for x in xs)}")
    elif scenario == "fig10":
        for m in dict.fromkeys(r["m"] for r in rows):
            xs = [r["rollback_s"] for r in rows if r["m"] == m and r["rollback_s"] is not None]
            if xs:
                out.append(f"# M={m}: rollback mean={statistics.mean(xs):.3f}s max={max(xs):.3f}s")
    elif scenario == "fig11":
        for r_key in ("route", "case"):
            for value in dict.fromkeys(r[r_key] for r in rows if r_key in r):
                xs = [r["elapsed_s"] for r in rows if r.get(r_key) == value and r["elapsed_s"] is not None]
                if xs:
                    out.append(f"# {value}: mean={statistics.mean(xs):.3f}s max={max(xs):.3f}s")
    return out


async def _bench(args) -> list[dict] | dict:
    from . import scenarios
    from .emulator import LatencyModel

    kw = {"seed": args.seed}
    if args.latency:
        kw["latency"] = LatencyModel.parse(args.latency)
    if args.scenario == "fig9":
        return await scenarios.bench_fig9(runs=args.runs, **kw)
    if args.scenario == "fig10":
        return await scenarios.bench_fig10(runs=args.runs, **kw)
    if args.scenario == "fig11":
        rows = await scenarios.bench_fig11a(runs=args.runs, **kw)
        return rows + await scenarios.bench_fig11b(runs=args.runs, **kw)
    if args.scenario == "fig13":
        return await scenarios.bench_fig13(ns=tuple(args.n or (16, 32, 64)), runs=args.runs, **kw)
    if args.scenario == "overhead":
        kw.pop("seed")
        return await scenarios.bench_overhead(reps=args.runs, **kw)
    return await scenarios.bench_events(**kw)


async def _emulate(args) -> int:
    import yaml

    from .emulator import Fleet, LatencyModel
    from .store import parse_topology

    doc = yaml.safe_load(args.topology.read_text()) or {}
    parse_topology(doc)
    faults = {}
    for spec in args.fault:
        ocs, _, mode = spec.partition("=")
        faults[ocs] = mode.upper()
    if args.bind:
        for entry in doc.get("switches", []) + doc.get("terminals", []):
            entry["bind"] = True
    fleet = Fleet(doc, LatencyModel.parse(args.latency), faults=faults, seed=args.seed)
    await fleet.start()
    text = json.dumps(fleet.topology, indent=2)
    if args.out:
        args.out.write_text(text + "\n")
    print(text, flush=True)
    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        loop.add_signal_handler(sig, stop.set)
    await stop.wait()
    await fleet.stop()
    return 0


async def _serve(args, addr) -> int:
    from .controller import Controller
    from .nbi import NbiServer

    controller = Controller(args.state_dir, policy=args.policy,
                            health_interval=args.health_interval or None,
                            auto_restore_on_hello=args.auto_restore_on_hello)
    await controller.start()
    server = NbiServer(controller, *addr)
    await server.start()
    print(f"ocsctl controller listening on {server.host}:{server.port}", flush=True)
    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        loop.add_signal_handler(sig, stop.set)
    await stop.wait()
    await server.stop()
    await controller.stop()
    return 0


def _controller_addr(args) -> tuple[str, int]:
    if args.controller:
        return args.controller
    return _addr(os.environ.get("OCSCTL_ADDR", DEFAULT_ADDR))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    out = sys.stdout

    if args.group == "bench":
        rows = asyncio.run(_bench(args))
        if args.json:
            out.write(json.dumps(rows, indent=2) + "\n")
        elif isinstance(rows, dict):
            out.write(_human(rows) + "\n")
        else:
            out.write(_rows_csv(rows))
            for line in _summary(args.scenario, rows):
                out.write(line + "\n")
        return 0
    if args.group == "emulate":
        return asyncio.run(_emulate(args))
    if args.group == "serve":
        return asyncio.run(_serve(args, args.bind or _controller_addr(args)))
    if args.group == "reconcile-report":
        report = args.state_dir / "reconcile-report.json"
        if not report.exists():
            print(f"no reconciliation report in {args.state_dir}", file=sys.stderr)
            return EXIT_CODES["NotFound"]
        body = json.loads(report.read_text())
        if args.json:
            out.write(json.dumps(body, indent=2, sort_keys=True) + "\n")
        else:
            out.write(f"policy  {body['policy']}\n")
            for svc, verdict in body["paths"].items():
                out.write(f"path    {svc}  {verdict}\n")
            for orphan in body["orphans"]:
                out.write(f"orphan  {orphan['ocs']}  {orphan['name']}  {orphan['rx']} -> {orphan['tx']}\n")
            for ocs in body["unreachable"]:
                out.write(f"down    {ocs}\n")
        return 0

    from .nbi import NbiClient

    try:
        method, params = request_for(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    host, port = _controller_addr(args)
    try:
        client = NbiClient(host, port, timeout=args.timeout)
    except OSError as exc:
        print(f"error: controller {host}:{port} unreachable: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    try:
        frame = client.raw(method, params)
    except (OSError, ConnectionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    finally:
        client.close()
    if "error" in frame:
        err = frame["error"]
        if args.json:
            out.write(json.dumps({"error": err}, sort_keys=True) + "\n")
        else:
            print(f"{err['code']}: {err['message']}", file=sys.stderr)
        return EXIT_CODES.get(err.get("code"), 1)
    if args.json:
        out.write(json.dumps({"result": frame["result"]}, sort_keys=True) + "\n")
    else:
        out.write(_human(frame["result"]) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())

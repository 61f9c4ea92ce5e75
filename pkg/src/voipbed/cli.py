"""Command-line entry point: validate, run, queryperf, serve.

Exit codes: 0 success, 1 runtime/topology failure, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import asyncio
import csv
import os
import signal
import sys

from voipbed.config import ConfigError, TestbedConfig, load_config
from voipbed.enumdns.resolver import EnumResolver
from voipbed.enumdns.server import EnumServer
from voipbed.gateway import DialplanEntry, Gateway
from voipbed.harness import (
    HarnessError,
    LoadSpec,
    QueryperfSpec,
    SCENARIOS,
    TopologyUnreachable,
    queryperf_async,
    run_scenario,
)
from voipbed.metrics import emit_report
from voipbed.registrar import RegistrarProxy
from voipbed.udpnet import BindFailure

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voipbed",
        description="VoIP interconnect testbed: SIP proxy, B2BUA gateway and "
                    "ENUM resolver with a call-setup latency harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="statically check a config file")
    p.add_argument("-c", "--config", required=True)

    p = sub.add_parser("run", help="execute a scenario/rate matrix")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--scenario", help="comma-separated scenario ids (s1,s2,s3)")
    p.add_argument("--rates", help="comma-separated call rates (call/s)")
    p.add_argument("--out", help="report directory (overrides config)")
    p.add_argument("--duration", type=float, help="seconds per cell")
    p.add_argument("--measured-calls", type=int, help="probe calls per cell")

    p = sub.add_parser("queryperf", help="ramp DNS query rate against the zone")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--max-rate", type=float, default=20000.0,
                   help="cap the ramp at this rate (q/s)")
    p.add_argument("--step", type=float, default=500.0,
                   help="starting rate of the ramp (q/s)")
    p.add_argument("--out", help="report directory (overrides config)")

    p = sub.add_parser("serve", help="run one component until interrupted")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--component", required=True, choices=["ims", "gateway", "enum"])
    return parser


def _load(path: str) -> TestbedConfig:
    try:
        return load_config(path)
    except ConfigError as exc:
        for line in exc.diagnostics:
            print(f"config error: {line}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG) from None


def cmd_validate(args: argparse.Namespace) -> int:
    _load(args.config)
    print(f"{args.config}: ok")
    return EXIT_OK


def _matrix_from_args(cfg: TestbedConfig, args: argparse.Namespace) -> list[tuple[str, float]]:
    if args.scenario or args.rates:
        scenarios = (args.scenario or "s1").split(",")
        rates = [float(r) for r in (args.rates or "0").split(",")]
        bad = [s for s in scenarios if s not in SCENARIOS]
        if bad:
            print(f"unknown scenario(s): {','.join(bad)}", file=sys.stderr)
            raise SystemExit(EXIT_CONFIG)
        return [(s, r) for s in scenarios for r in rates]
    if not cfg.matrix:
        print("no scenario matrix in config and none given on the command line",
              file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)
    return cfg.matrix


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load(args.config)
    matrix = _matrix_from_args(cfg, args)
    out_dir = args.out or cfg.out_dir
    duration = args.duration or cfg.duration
    measured = args.measured_calls or cfg.measured_calls

    results = []
    for scenario_id, rate in matrix:
        load = LoadSpec(rate=rate, duration=duration, arrival=cfg.arrival,
                        measured_calls=measured)
        print(f"running {scenario_id} at {rate:g} call/s ...", flush=True)
        try:
            result = run_scenario(scenario_id, load, cfg.settings)
        except (TopologyUnreachable, BindFailure, HarnessError) as exc:
            print(f"topology failure in {scenario_id}@{rate:g}: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        results.append(result)
        if result.aborted:
            print(f"{scenario_id}@{rate:g}: aborted (no call ever succeeded)",
                  file=sys.stderr)
            return EXIT_RUNTIME

    emit_report(results, out_dir, profiles=cfg.profiles())
    with open(os.path.join(out_dir, "summary.txt"), encoding="utf-8") as handle:
        print(handle.read(), end="")
    print(f"reports written to {out_dir}")
    return EXIT_OK


def cmd_queryperf(args: argparse.Namespace) -> int:
    cfg = _load(args.config)
    zone = cfg.settings.static_zone
    if zone is None or len(zone) == 0:
        print("queryperf needs a populated zone ([enum] zone = <file>)",
              file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.out or cfg.out_dir
    start = min(args.step, args.max_rate)
    spec = QueryperfSpec(start_rate=start, max_rate=args.max_rate)

    async def _run():
        server = EnumServer(zone, host=cfg.settings.host,
                            port=cfg.settings.enum_port,
                            profile=cfg.settings.enum_profile)
        await server.start()
        try:
            return await queryperf_async(server.address, zone, spec)
        finally:
            await server.stop()

    try:
        result = asyncio.run(_run())
    except BindFailure as exc:
        print(f"cannot start ENUM server: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    answered = sum(stage.answered for stage in result.stages)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "queryperf.csv")
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("rate", "sent", "answered", "wrong", "timeouts",
                         "failure_fraction"))
        for stage in result.stages:
            writer.writerow((stage.rate, stage.sent, stage.answered, stage.wrong,
                             stage.timeouts, f"{stage.failure_fraction:.4f}"))

    print(f"measured ceiling: {result.ceiling_qps:g} query/s "
          f"(reference: {result.reference_qps} query/s)")
    print(f"latency p50/p95/p99: {result.percentile_ms(50):.3f} / "
          f"{result.percentile_ms(95):.3f} / {result.percentile_ms(99):.3f} ms")
    print(f"wrong answers: {result.wrong_total}")
    print(f"stages written to {path}")
    if answered == 0:
        print("server never answered", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    cfg = _load(args.config)
    component = args.component

    async def _serve() -> None:
        settings = cfg.settings
        if component == "enum":
            zone = settings.static_zone
            if zone is None:
                raise ConfigError(["[enum] zone file required to serve enum"])
            server = EnumServer(zone, host=settings.host, port=settings.enum_port,
                                profile=settings.enum_profile)
        elif component == "gateway":
            if not cfg.gateway_endpoints:
                raise ConfigError(["[gateway] endpoints required to serve gateway"])
            dialplan = cfg.dialplan or [
                # no dialplan file: route each endpoint's own number
                DialplanEntry(pattern=ep.number, action="fxs", endpoint=ep.id)
                for ep in cfg.gateway_endpoints
            ]
            server = Gateway(cfg.gateway_endpoints, dialplan, host=settings.host,
                             port=settings.gateway_port,
                             profile=settings.gateway_profile)
        else:
            resolver = None
            if cfg.enum_enabled and settings.enum_port:
                resolver = EnumResolver((settings.host, settings.enum_port),
                                        apex=settings.apex)
            server = RegistrarProxy(host=settings.host, port=settings.ims_port,
                                    profile=settings.ims_profile,
                                    resolver=resolver,
                                    enum_enabled=cfg.enum_enabled and resolver is not None)

        await server.start()
        host, port = server.address
        print(f"{component} listening on {host}:{port}", flush=True)
        stop_event = asyncio.Event()
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            loop.add_signal_handler(sig, stop_event.set)
        try:
            await stop_event.wait()
        finally:
            await server.stop()
            print(f"{component} stopped")

    try:
        asyncio.run(_serve())
    except BindFailure as exc:
        print(f"bind failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ConfigError as exc:
        for line in exc.diagnostics:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "validate": cmd_validate,
        "run": cmd_run,
        "queryperf": cmd_queryperf,
        "serve": cmd_serve,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())

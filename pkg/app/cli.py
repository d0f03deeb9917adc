"""
gaitrig command line: simulate, analyze, serve and client.

Exit codes: 0 success, 2 configuration error, 3 any other rig error. Errors
are reported on stderr as one JSON object.
"""

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from app.core.client import TrackingClient
from app.core.clock import SessionClock
from app.core.config import config_digest, configure_logging, load_rig_config, settings
from app.core.exceptions import ConfigError, RigError
from app.core.network import LinkDelay, link_rng
from app.core.server import TrackingServer
from app.schemas.config import RigConfig
from app.schemas.session import RunManifest, RunMode, SessionArtifacts
from app.services import analysis_service, artifact_service
from app.services.session_service import build_client, client_clock, ground_truth_rows, run_session

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Rig config JSON file (defaults built in)")
    parser.add_argument("--seed", type=int, help="Seed for every random stream")
    parser.add_argument("--duration-s", type=float, help="Session length in seconds")
    parser.add_argument(
        "--nominal-interframe",
        type=float,
        choices=[45.0, 60.0],
        help="Expected interval between frames of one client (ms)",
    )
    parser.add_argument("--no-sync", action="store_true", help="Disable clock synchronisation")
    parser.add_argument("--virtual-time", action="store_true", help="Run on the event-driven virtual clock")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaitrig", description="Three-sensor trilateration gait rig")
    parser.add_argument("--log-level", default=None, help="Logging level (default from settings)")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="Run a full in-process session and analyse it")
    _add_config_flags(simulate)
    simulate.add_argument("--out", default=None, help="Output directory")

    analyze = commands.add_parser("analyze", help="Recompute report.json for a run directory")
    analyze.add_argument("artifacts_dir", nargs="?", default=None)
    analyze.add_argument("--out", default=None, help="Run directory (alias of the positional argument)")

    serve = commands.add_parser("serve", help="Run the tracking server for remote clients")
    _add_config_flags(serve)
    serve.add_argument("--out", default=None, help="Output directory")
    serve.add_argument("--host", default=settings.server_host)
    serve.add_argument("--port", type=int, default=settings.server_port)
    serve.add_argument("--http-port", type=int, default=settings.http_port, help="Serve live status over HTTP")

    client = commands.add_parser("client", help="Run one simulated sensor client")
    _add_config_flags(client)
    client.add_argument("--client-id", type=int, required=True)
    client.add_argument("--host", default=settings.server_host)
    client.add_argument("--port", type=int, default=settings.server_port)
    return parser


def resolve_config(args: argparse.Namespace) -> RigConfig:
    config = load_rig_config(args.config)
    try:
        return config.with_overrides(
            seed=args.seed,
            duration_s=args.duration_s,
            nominal_interframe_ms=args.nominal_interframe,
            sync_enabled=False if args.no_sync else None,
            virtual_time=True if args.virtual_time else None,
        )
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"Invalid override for '{key}': {first['msg']}", key=key)


def build_manifest(mode: RunMode, args: argparse.Namespace, config: RigConfig, out_dir: Path) -> RunManifest:
    flags = {
        name: value
        for name, value in sorted(vars(args).items())
        if name not in ("command", "config", "out", "log_level")
    }
    return RunManifest(
        mode=mode,
        config_path=args.config,
        config_sha256=config_digest(config),
        seed=config.seed,
        output_dir=str(out_dir),
        duration_s=config.session.duration_s,
        iterations=config.iterations,
        flags=flags,
        config=config.model_dump(mode="json"),
    )


def _finish_run(artifacts: SessionArtifacts, manifest: RunManifest, out_dir: Path) -> None:
    artifact_service.write_artifacts(artifacts, out_dir, manifest)
    report = analysis_service.analyze_artifacts(out_dir)
    print(
        json.dumps(
            {
                "output_dir": str(out_dir),
                "trilaterated_rows": report.trilaterated_rows,
                "iterations_skipped": artifacts.summary.iterations_skipped,
                "fraction_within_1ms": report.timing.fraction_within_1ms,
            },
            sort_keys=True,
        )
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    out_dir = Path(args.out or settings.output_dir)
    manifest = build_manifest(RunMode.SIMULATE, args, config, out_dir)
    artifacts = run_session(config)
    _finish_run(artifacts, manifest, out_dir)
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    run_dir = Path(args.artifacts_dir or args.out or settings.output_dir)
    report = analysis_service.analyze_artifacts(run_dir)
    print(json.dumps(report.model_dump(mode="json"), sort_keys=True))
    return EXIT_OK


async def _serve(config: RigConfig, host: str, port: int, http_port: Optional[int]) -> TrackingServer:
    server = TrackingServer(config, host, port)
    await server.start()
    status_task = None
    if http_port is not None:
        import uvicorn

        from app.main import app

        app.state.tracking_server = server
        http = uvicorn.Server(uvicorn.Config(app, host=settings.http_host, port=http_port, log_level="warning"))
        status_task = asyncio.create_task(http.serve())
    try:
        await server.run()
    finally:
        if status_task is not None:
            http.should_exit = True
            await status_task
    return server


def cmd_serve(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    out_dir = Path(args.out or settings.output_dir)
    manifest = build_manifest(RunMode.SERVE, args, config, out_dir)
    server = asyncio.run(_serve(config, args.host, args.port, args.http_port))
    session = server.session
    artifacts = SessionArtifacts(
        summary=session.summary,
        ground_truth=ground_truth_rows(config),
        raw_frames=session.raw_frames,
        trilaterated=session.trilaterated,
        events=session.events,
    )
    _finish_run(artifacts, manifest, out_dir)
    return EXIT_OK


async def _client(config: RigConfig, client_id: int, host: str, port: int):
    session = build_client(config, client_id)
    network = config.noise.network
    uplink = None
    if not (network.jitter_free and network.base_ms == 0 and network.stall_probability == 0):
        uplink = LinkDelay(network, link_rng(config.seed, client_id, 0)).sample_us
    clock = SessionClock(client_clock(config, client_id))
    return await TrackingClient(session, host, port, clock=clock, uplink_delay=uplink).run()


def cmd_client(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    if args.client_id not in config.schedule.clients:
        raise ConfigError(f"Client id {args.client_id} is not in the schedule", key="schedule.clients")
    summary = asyncio.run(_client(config, args.client_id, args.host, args.port))
    print(json.dumps(summary.model_dump(mode="json"), sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "serve": cmd_serve,
    "client": cmd_client,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(json.dumps(e.to_dict(), sort_keys=True), file=sys.stderr)
        return EXIT_CONFIG
    except RigError as e:
        logger.error(f"{args.command} failed: {e.detail}")
        print(json.dumps(e.to_dict(), sort_keys=True), file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        logger.error(f"{args.command} failed: {e}")
        print(json.dumps({"error": "os_error", "detail": str(e)}, sort_keys=True), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""
Session driver: one server and its sensor clients, in virtual or real time.

Virtual time is a single-threaded discrete-event loop over the same
ServerSession/ClientSession objects and wire bytes the real transport uses.
Every link is FIFO with delays drawn from the network model, and every client
clock runs with its configured offset and drift.
"""

import asyncio
import heapq
import itertools
import logging
import time
from typing import Dict, List, Optional, Tuple

from app.core.client import ClientSession, TrackingClient
from app.core.clock import SESSION_EPOCH_US, DriftingClock, SessionClock
from app.core.network import FifoLink, LinkDelay, link_rng
from app.core.server import Outgoing, ServerSession, TrackingServer
from app.core.wire import decode_message
from app.schemas.config import RigConfig
from app.schemas.frame import JOINT_ORDER
from app.schemas.session import GroundTruthRow, SessionArtifacts
from app.services.gait_service import GaitMeasurementSource, body_positions
from app.services.trilateration_service import layout_vertices

logger = logging.getLogger(__name__)

_SERVER = 0


def ground_truth_rows(config: RigConfig) -> List[GroundTruthRow]:
    """True joint positions at the capture instant of every iteration"""
    iteration_us = config.schedule.iteration_us
    rows: List[GroundTruthRow] = []
    for iteration in range(config.iterations):
        capture_us = iteration * iteration_us
        positions = body_positions(config.gait, capture_us / 1_000_000)
        for joint in JOINT_ORDER:
            p = positions[joint]
            rows.append(
                GroundTruthRow(
                    iteration=iteration,
                    joint=joint.value,
                    x_mm=p.x,
                    y_mm=p.y,
                    z_mm=p.z,
                    capture_time_us=capture_us,
                )
            )
    return rows


def measurement_source(config: RigConfig, client_id: int) -> GaitMeasurementSource:
    rig = layout_vertices(config.rig.l12, config.rig.l13, config.rig.l23)
    return GaitMeasurementSource(
        rig=rig,
        profile=config.gait,
        noise=config.noise,
        sensor_index=client_id,
        iterations=config.iterations,
        iteration_us=config.schedule.iteration_us,
    )


def client_clock(config: RigConfig, client_id: int) -> DriftingClock:
    return DriftingClock(
        offset_us=config.noise.offset_for(client_id),
        drift_ppm=config.noise.drift_for(client_id),
    )


def build_client(config: RigConfig, client_id: int, max_frames: Optional[int] = None) -> ClientSession:
    return ClientSession(client_id, config, measurement_source(config, client_id).read, max_frames=max_frames)


def _collect(server: ServerSession, config: RigConfig, clients: Dict[int, ClientSession]) -> SessionArtifacts:
    summary = server.summary
    summary.clients = {client_id: client.summary for client_id, client in clients.items()}
    return SessionArtifacts(
        summary=summary,
        ground_truth=ground_truth_rows(config),
        raw_frames=server.raw_frames,
        trilaterated=server.trilaterated,
        events=server.events,
    )


class VirtualNetwork:
    """
    Discrete-event loop driving a session in virtual time.

    Heap entries are (true_time_us, order, kind, actor, data); `order` makes
    same-instant events run in scheduling order. Timers are re-armed after
    every event and stale ones are skipped when popped.
    """

    def __init__(self, config: RigConfig, disconnect_after: Optional[Dict[int, int]] = None):
        self.config = config
        self.server = ServerSession(config, virtual_time=True)
        disconnect_after = disconnect_after or {}
        self.clients: Dict[int, ClientSession] = {
            c: build_client(config, c, max_frames=disconnect_after.get(c)) for c in config.schedule.clients
        }
        self.clocks = {c: client_clock(config, c) for c in config.schedule.clients}

        network = config.noise.network
        seed = config.seed
        self.uplinks = {c: FifoLink(LinkDelay(network, link_rng(seed, c, 0))) for c in self.clients}
        self.downlinks = {c: FifoLink(LinkDelay(network, link_rng(seed, c, 1))) for c in self.clients}

        self._heap: List[Tuple[int, int, str, int, Optional[bytes]]] = []
        self._order = itertools.count()
        self._armed: Dict[int, Optional[int]] = {}
        self._closed: set = set()
        self.now = SESSION_EPOCH_US
        self.events_processed = 0

    def _push(self, at: int, kind: str, actor: int, data: Optional[bytes] = None):
        heapq.heappush(self._heap, (at, next(self._order), kind, actor, data))

    def _client_send(self, client_id: int, messages: List[bytes]):
        for data in messages:
            self._push(self.uplinks[client_id].deliver_at(self.now), "to_server", client_id, data)

    def _server_send(self, outgoing: List[Outgoing]):
        for out in outgoing:
            if out.data:
                self._push(self.downlinks[out.conn].deliver_at(self.now), "to_client", out.conn, out.data)

    def _close_client(self, client_id: int):
        if client_id in self._closed:
            return
        self._closed.add(client_id)
        self._push(self.uplinks[client_id].deliver_at(self.now), "to_server", client_id, None)

    def _arm(self, actor: int):
        if actor == _SERVER:
            target = self.server.next_timer()
        else:
            local = self.clients[actor].next_timer()
            target = None if local is None else self.clocks[actor].true_at(local)
        if target is not None:
            target = max(target, self.now)
        if target != self._armed.get(actor):
            self._armed[actor] = target
            if target is not None:
                self._push(target, "timer", actor)

    def run(self) -> SessionArtifacts:
        for client_id, client in self.clients.items():
            self._client_send(client_id, [client.hello()])

        while self._heap:
            at, _, kind, actor, data = heapq.heappop(self._heap)
            self.now = at
            self.events_processed += 1
            if kind == "timer":
                if self._armed.get(actor) != at:
                    continue
                self._armed[actor] = None
                if actor == _SERVER:
                    self._server_send(self.server.on_timer(at))
                elif actor not in self._closed:
                    client = self.clients[actor]
                    self._client_send(actor, client.on_timer(self.clocks[actor].local(at)))
            elif kind == "to_server":
                if data is None:
                    self._server_send(self.server.on_disconnect(actor, at))
                else:
                    self._server_send(self.server.handle(actor, decode_message(data), at))
            elif actor not in self._closed:
                client = self.clients[actor]
                self._client_send(actor, client.handle(decode_message(data), self.clocks[actor].local(at)))

            for client_id, client in self.clients.items():
                if client.done and client_id not in self._closed:
                    self._close_client(client_id)
            self._arm(_SERVER)
            for client_id in self.clients:
                if client_id not in self._closed:
                    self._arm(client_id)

        self.server.abort()
        self.server.summary.network_stalls = sum(
            link.delay.stalls for link in (*self.uplinks.values(), *self.downlinks.values())
        )
        logger.info(
            f"Virtual session done: {self.events_processed} events, "
            f"{(self.now - SESSION_EPOCH_US) / 1_000_000:.3f} s simulated"
        )
        return _collect(self.server, self.config, self.clients)


def run_virtual(config: RigConfig, disconnect_after: Optional[Dict[int, int]] = None) -> SessionArtifacts:
    return VirtualNetwork(config, disconnect_after=disconnect_after).run()


async def run_realtime(
    config: RigConfig,
    host: str = "127.0.0.1",
    disconnect_after: Optional[Dict[int, int]] = None,
) -> SessionArtifacts:
    """
    Run server and clients in this process over loopback TCP.

    All clocks share one monotonic epoch; each client applies its configured
    offset/drift and, unless the network model is ideal, sleeps a sampled
    uplink delay before each write.
    """
    disconnect_after = disconnect_after or {}
    epoch = time.monotonic()
    server = TrackingServer(config, host, 0, clock=SessionClock(epoch=epoch))
    port = await server.start()

    network = config.noise.network
    clients: Dict[int, ClientSession] = {}
    transports: List[TrackingClient] = []
    for client_id in config.schedule.clients:
        session = build_client(config, client_id, max_frames=disconnect_after.get(client_id))
        clients[client_id] = session
        uplink = None
        if not (network.jitter_free and network.base_ms == 0 and network.stall_probability == 0):
            uplink = LinkDelay(network, link_rng(config.seed, client_id, 0)).sample_us
        clock = SessionClock(client_clock(config, client_id), epoch=epoch)
        transports.append(TrackingClient(session, host, port, clock=clock, uplink_delay=uplink))

    results = await asyncio.gather(server.run(), *(t.run() for t in transports), return_exceptions=True)
    for result in results:
        if isinstance(result, BaseException):
            raise result
    return _collect(server.session, config, clients)


def run_session(config: RigConfig) -> SessionArtifacts:
    """Run one full session in the mode the config asks for"""
    logger.info(
        f"Running {'virtual' if config.session.virtual_time else 'real'}-time session: "
        f"{config.iterations} iterations of {config.schedule.iteration_ms:g} ms"
    )
    if config.session.virtual_time:
        return run_virtual(config)
    return asyncio.run(run_realtime(config))

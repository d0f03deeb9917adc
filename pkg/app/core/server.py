"""
Tracking server: session protocol state and its asyncio transport.

`ServerSession` is transport-free. It consumes decoded messages stamped with
the server clock and returns the bytes to write, which lets the same logic run
over real sockets (`TrackingServer`) and over the virtual-time network.
"""

import asyncio
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Set

from app.core.clock import SessionClock
from app.core.collector import Admission, CollectorItem, FrameCollector, IterationAssembler
from app.core.config import settings
from app.core.exceptions import ClientLost, NoIntersection, ReadyTimeout, WireError
from app.core.wire import encode_session, encode_sync_response, parse_payload, read_message
from app.schemas.config import RigConfig
from app.schemas.frame import (
    JOINT_ORDER,
    JointFrame,
    MessageType,
    SessionControl,
    SessionOp,
    SyncRequest,
    SyncResponse,
    WireMessage,
)
from app.schemas.session import ArrivalEvent, ReceivedFrame, SessionSummary, TrilateratedRow
from app.services.trilateration_service import layout_vertices, trilaterate_measurements

logger = logging.getLogger(__name__)


class ServerPhase(str, Enum):
    WAITING = "waiting"
    RUNNING = "running"
    FINISHED = "finished"


@dataclass(frozen=True)
class Outgoing:
    conn: int
    data: bytes
    close: bool = False


class ServerSession:
    def __init__(self, config: RigConfig, virtual_time: bool = False):
        self.config = config
        self.schedule = config.schedule
        self.rig = layout_vertices(config.rig.l12, config.rig.l13, config.rig.l23)
        self.iterations = config.iterations
        self.phase = ServerPhase.WAITING

        self.clients: Dict[int, int] = {}  # conn -> client id
        self.ready: Set[int] = set()
        self.finished_clients: Set[int] = set()
        self.start_at: Optional[int] = None
        self.assembler: Optional[IterationAssembler] = None
        self._next_iteration = 0

        self.trilaterated: List[TrilateratedRow] = []
        self.events: List[ArrivalEvent] = []
        self.raw_frames: Dict[int, List[ReceivedFrame]] = {c: [] for c in self.schedule.clients}
        self.summary = SessionSummary(virtual_time=virtual_time, iterations_planned=self.iterations)

    # --- connection lifecycle ---

    @property
    def open_connections(self) -> List[int]:
        return sorted(self.clients)

    @property
    def done(self) -> bool:
        return self.phase is ServerPhase.FINISHED and not self.clients

    def sync_response(self, req: SyncRequest, t2: int, t3: int) -> bytes:
        self.summary.sync_requests += 1
        return encode_sync_response(SyncResponse(t1=req.t1, t2=t2, t3=t3))

    def handle(self, conn: int, msg: WireMessage, now: int) -> List[Outgoing]:
        payload = parse_payload(msg)
        if isinstance(payload, SyncRequest):
            return [Outgoing(conn, self.sync_response(payload, now, now))]
        if isinstance(payload, JointFrame):
            self._on_frame(conn, payload, now)
            return []
        if isinstance(payload, SessionControl):
            return self._on_control(conn, payload, now)
        logger.warning(f"Ignoring {msg.type.name} from connection {conn}")
        return []

    def on_disconnect(self, conn: int, now: int) -> List[Outgoing]:
        client = self.clients.pop(conn, None)
        if client is None:
            return []
        if client not in self.finished_clients and self.phase is not ServerPhase.FINISHED:
            lost = ClientLost(client)
            self.summary.clients_lost.append(client)
            self.summary.errors.append(lost.to_dict())
            logger.warning(f"{lost.detail}; its iterations will be skipped")
        self.ready.discard(client)
        return []

    def _on_control(self, conn: int, ctrl: SessionControl, now: int) -> List[Outgoing]:
        if ctrl.op is SessionOp.HELLO:
            return self._on_hello(conn, ctrl.client_id)
        if ctrl.op is SessionOp.READY:
            client = self.clients.get(conn)
            if client is None:
                return []
            self.ready.add(client)
            logger.info(f"Client {client} ready ({len(self.ready)}/{len(self.schedule.clients)})")
            if self.phase is ServerPhase.WAITING and self.ready == set(self.schedule.clients):
                return self._start(now)
            return []
        if ctrl.op is SessionOp.BYE:
            client = self.clients.pop(conn, None)
            if client is not None:
                self.finished_clients.add(client)
                logger.info(f"Client {client} said goodbye")
            return [Outgoing(conn, b"", close=True)]
        logger.warning(f"Unexpected {ctrl.op.name} from connection {conn}")
        return []

    def _on_hello(self, conn: int, client_id: int) -> List[Outgoing]:
        reject = None
        if client_id not in self.schedule.clients:
            reject = f"unknown client id {client_id}"
        elif client_id in self.clients.values():
            reject = f"client id {client_id} is already connected"
        elif self.phase is not ServerPhase.WAITING:
            reject = "session already started"
        if reject:
            self.summary.rejected_connections += 1
            logger.warning(f"Refusing connection {conn}: {reject}")
            refusal = encode_session(SessionControl(op=SessionOp.REJECT, client_id=client_id))
            return [Outgoing(conn, refusal, close=True)]
        self.clients[conn] = client_id
        logger.info(f"Accepted client {client_id} on connection {conn}")
        accept = encode_session(SessionControl(op=SessionOp.ACCEPT, client_id=client_id, count=self.iterations))
        return [Outgoing(conn, accept)]

    def _start(self, now: int) -> List[Outgoing]:
        iteration_us = self.schedule.iteration_us
        earliest = now + int(round(self.config.session.start_margin_ms * 1000))
        self.start_at = -(-earliest // iteration_us) * iteration_us
        self.assembler = IterationAssembler(self.schedule, self.start_at, self.iterations)
        self.summary.start_at_us = self.start_at
        self.phase = ServerPhase.RUNNING
        logger.info(f"Starting session at {self.start_at} us for {self.iterations} iterations")
        start = SessionControl(op=SessionOp.START, value=self.start_at, count=self.iterations)
        data = encode_session(start)
        return [Outgoing(conn, data) for conn in self.open_connections]

    # --- frames and iterations ---

    def _on_frame(self, conn: int, frame: JointFrame, now: int) -> None:
        client = self.clients.get(conn)
        if self.phase is not ServerPhase.RUNNING or client is None:
            logger.warning(f"Dropping frame seq={frame.seq} outside a running session")
            return
        if frame.client_id != client:
            logger.warning(f"Connection {conn} is client {client} but sent a frame as {frame.client_id}")
            return
        logger.debug(f"Frame seq={frame.seq} from client {client} at {now}")
        admission = self.assembler.add(frame, now)
        if admission is Admission.DUPLICATE:
            return
        self.events.append(ArrivalEvent(client=client, seq=frame.seq, server_time_us=now - self.start_at))
        self.raw_frames[client].append(ReceivedFrame(iteration=frame.seq - 1, frame=frame))

    def next_timer(self) -> Optional[int]:
        if self.phase is not ServerPhase.RUNNING:
            return None
        return self.assembler.finalize_time(self._next_iteration)

    def on_timer(self, now: int) -> List[Outgoing]:
        out: List[Outgoing] = []
        while self.phase is ServerPhase.RUNNING and self.assembler.finalize_time(self._next_iteration) <= now:
            self._finalize(self._next_iteration)
            self._next_iteration += 1
            if self._next_iteration >= self.iterations:
                out.extend(self._finish())
        return out

    def _finalize(self, iteration: int) -> None:
        frames = self.assembler.pop(iteration)
        if frames is None:
            self.summary.iterations_skipped += 1
            return
        ordered = [frames[client] for client in sorted(frames)]
        server_time = iteration * self.schedule.iteration_us + self.schedule.finalize_offset_us
        for position, joint in enumerate(JOINT_ORDER):
            measurements = [frame.joints[position] for frame in ordered]
            try:
                point = trilaterate_measurements(
                    self.rig,
                    measurements,
                    self.config.rig.z_side,
                    z_slack_mm2=self.config.rig.z_slack_mm ** 2,
                )
            except NoIntersection as e:
                self.summary.unsolved_joints += 1
                logger.warning(f"Iteration {iteration} {joint.value}: {e.detail}")
                continue
            self.trilaterated.append(
                TrilateratedRow(
                    iteration=iteration,
                    joint=joint.value,
                    x_mm=point.x,
                    y_mm=point.y,
                    z_mm=point.z,
                    server_time_us=server_time,
                )
            )
        self.summary.iterations_completed += 1

    def _finish(self) -> List[Outgoing]:
        self.phase = ServerPhase.FINISHED
        stats = self.assembler.stats
        self.summary.frames_received = stats["frames_received"]
        self.summary.frames_late = stats["frames_late"]
        self.summary.frames_duplicate = stats["frames_duplicate"]
        self.summary.frames_out_of_range = stats["frames_out_of_range"]
        self.summary.slot_violations = stats["slot_violations"]
        self.summary.sequence_gaps = stats["sequence_gaps"]
        self.summary.trilaterated_rows = len(self.trilaterated)
        logger.info(
            f"Session finished: {self.summary.iterations_completed} iterations completed, "
            f"{self.summary.iterations_skipped} skipped"
        )
        stop = encode_session(SessionControl(op=SessionOp.STOP))
        return [Outgoing(conn, stop) for conn in self.open_connections]

    def abort(self) -> None:
        """Close the books on a session that ended before its last iteration"""
        if self.phase is ServerPhase.RUNNING:
            while self._next_iteration < self.iterations:
                self._finalize(self._next_iteration)
                self._next_iteration += 1
            self._finish()
        self.phase = ServerPhase.FINISHED

    def get_stats(self) -> Dict[str, object]:
        stats: Dict[str, object] = {
            "phase": self.phase.value,
            "connected_clients": sorted(self.clients.values()),
            "ready_clients": sorted(self.ready),
            "next_iteration": self._next_iteration,
            "iterations_planned": self.iterations,
            "trilaterated_rows": len(self.trilaterated),
            "iterations_skipped": self.summary.iterations_skipped,
            "clients_lost": list(self.summary.clients_lost),
        }
        if self.assembler is not None:
            stats.update(self.assembler.stats)
        return stats


class TrackingServer:
    """
    asyncio stream server around a ServerSession.

    One reader task per connection stamps arrivals and answers sync requests
    inline; every other message goes through the FrameCollector so only its
    worker touches the session.
    """

    def __init__(self, config: RigConfig, host: str, port: int, clock: Optional[SessionClock] = None):
        self.config = config
        self.host = host
        self.port = port
        self.clock = clock or SessionClock()
        self.session = ServerSession(config, virtual_time=False)
        self.collector = FrameCollector(self._handle_item)

        self._server: Optional[asyncio.AbstractServer] = None
        self._writers: Dict[int, asyncio.StreamWriter] = {}
        self._send_locks: Dict[int, asyncio.Lock] = {}
        self._next_conn = 0
        self._ticker_task: Optional[asyncio.Task] = None
        self._changed = asyncio.Event()
        self._done = asyncio.Event()

    async def start(self) -> int:
        """Start listening; returns the bound port"""
        await self.collector.start()
        self._server = await asyncio.start_server(self._handle_connection, self.host, self.port)
        self.port = self._server.sockets[0].getsockname()[1]
        self._ticker_task = asyncio.create_task(self._ticker())
        logger.info(f"Tracking server listening on {self.host}:{self.port}")
        return self.port

    async def run(self, ready_timeout_s: Optional[float] = None) -> SessionSummary:
        """Serve one session to completion"""
        if self._server is None:
            await self.start()
        timeout = settings.ready_timeout_s if ready_timeout_s is None else ready_timeout_s
        try:
            await asyncio.wait_for(self._wait_for_start(), timeout=timeout)
        except asyncio.TimeoutError:
            await self.close()
            raise ReadyTimeout(
                f"Only {len(self.session.ready)} of {len(self.config.schedule.clients)} clients ready after {timeout} s"
            )
        await self._done.wait()
        await self.close()
        return self.session.summary

    async def _wait_for_start(self):
        while self.session.phase is ServerPhase.WAITING:
            self._changed.clear()
            await self._changed.wait()

    async def close(self):
        if self._ticker_task and not self._ticker_task.done():
            self._ticker_task.cancel()
            try:
                await self._ticker_task
            except asyncio.CancelledError:
                pass
        await self.collector.stop()
        self.session.abort()
        for writer in list(self._writers.values()):
            writer.close()
        self._writers.clear()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None

    async def _handle_connection(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        conn = self._next_conn
        self._next_conn += 1
        self._writers[conn] = writer
        self._send_locks[conn] = asyncio.Lock()
        peer = writer.get_extra_info("peername")
        logger.debug(f"Connection {conn} from {peer}")
        try:
            while True:
                msg = await read_message(reader)
                received_at = self.clock.now()
                if msg.type is MessageType.SYNC_REQ:
                    req = parse_payload(msg)
                    await self._send(conn, self.session.sync_response(req, received_at, self.clock.now()))
                    continue
                self.collector.put(CollectorItem(kind="message", conn=conn, received_at=received_at, payload=msg))
        except (asyncio.IncompleteReadError, ConnectionError):
            pass
        except WireError as e:
            logger.warning(f"Closing connection {conn} after protocol error: {e.detail}")
        finally:
            self.collector.put(CollectorItem(kind="disconnect", conn=conn, received_at=self.clock.now()))

    async def _handle_item(self, item: CollectorItem):
        if item.kind == "message":
            out = self.session.handle(item.conn, item.payload, item.received_at)
        elif item.kind == "disconnect":
            out = self.session.on_disconnect(item.conn, item.received_at)
            writer = self._writers.pop(item.conn, None)
            if writer is not None:
                writer.close()
        else:
            out = self.session.on_timer(item.received_at)
        for outgoing in out:
            await self._deliver(outgoing)
        self._changed.set()
        if self.session.done:
            self._done.set()

    async def _deliver(self, outgoing: Outgoing):
        if outgoing.data:
            await self._send(outgoing.conn, outgoing.data)
        if outgoing.close:
            writer = self._writers.pop(outgoing.conn, None)
            if writer is not None:
                writer.close()

    async def _send(self, conn: int, data: bytes):
        writer = self._writers.get(conn)
        if writer is None:
            return
        async with self._send_locks[conn]:
            try:
                writer.write(data)
                await writer.drain()
            except ConnectionError as e:
                logger.warning(f"Write to connection {conn} failed: {str(e)}")

    async def _ticker(self):
        while True:
            deadline = self.session.next_timer()
            if deadline is None:
                if self.session.phase is ServerPhase.FINISHED:
                    return
                self._changed.clear()
                await self._changed.wait()
                continue
            await self.clock.sleep_until(deadline)
            self.collector.put(CollectorItem(kind="timer", conn=-1, received_at=self.clock.now()))
            # wait for the collector to act on it before computing the next deadline
            while self.session.next_timer() == deadline:
                self._changed.clear()
                await self._changed.wait()

    def get_stats(self) -> Dict[str, object]:
        return {**self.session.get_stats(), "collector": self.collector.get_stats(), "port": self.port}
